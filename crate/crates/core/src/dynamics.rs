//! Constrained dynamics of the node coordinates.
//!
//! Rod constraints act through forces `Γ = L_w·Q` with `L_w = D·Λ·Dᵀ`, so the
//! node dynamics read `Q̈ = −M⁻¹Γ + M⁻¹F − G`. The multipliers come from the
//! SPD system `J·λ = b` with
//!
//! ```text
//! J = L_e ⊙ (Q_e·Q_eᵀ),   b = diag(Dᵀ·M⁻¹·F·Q_eᵀ + Q̇_e·Q̇_eᵀ)
//! ```
//!
//! which follows from differentiating each velocity constraint once more.

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::linalg::{Cholesky, NotPositiveDefinite};
use crate::model::{Coords, EdgeState, ModelError, SarModel, SystemState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("multiplier system is not positive definite at t = {time}: {source}")]
    NotPositiveDefinite {
        time: f64,
        source: NotPositiveDefinite,
    },
    #[error("state became non-finite at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("force law failed at t = {time}: {message}")]
    ForceLaw { time: f64, message: String },
    #[error("invalid integration settings: {0}")]
    InvalidSettings(String),
}

impl DynamicsError {
    /// Simulation time at which the failure occurred, when known.
    pub fn time(&self) -> Option<f64> {
        match self {
            DynamicsError::NotPositiveDefinite { time, .. }
            | DynamicsError::NonFiniteState { time }
            | DynamicsError::ForceLaw { time, .. } => Some(*time),
            _ => None,
        }
    }
}

/// `A_j(Q) = Qᵀ·d_j·d_jᵀ` (2 × n), the gradient of the rod constraint `h_j`.
pub fn constraint_jacobian(model: &SarModel, state: &SystemState, j: usize) -> DMatrix<f64> {
    let e = model.graph().edges()[j];
    let r = state.q.row(e.head) - state.q.row(e.tail);
    let mut a = DMatrix::zeros(2, model.node_count());
    for k in 0..2 {
        a[(k, e.head)] = r[k];
        a[(k, e.tail)] = -r[k];
    }
    a
}

/// Assembles `J = L_e ⊙ Q_e·Q_eᵀ` and `b = diag(Dᵀ·M⁻¹·F·Q_eᵀ + Q̇_e·Q̇_eᵀ)`.
pub fn multiplier_system(
    model: &SarModel,
    edges: &EdgeState,
    force: &Coords,
) -> (DMatrix<f64>, DVector<f64>) {
    let m = model.edge_count();
    let le = model.edge_laplacian();
    let gram = &edges.qe * edges.qe.transpose();
    let j_mat = le.component_mul(&gram);
    let accel_input = model.to_edges(&model.scale_by_inverse_mass(force));
    let b = DVector::from_fn(m, |j, _| {
        accel_input.row(j).dot(&edges.qe.row(j)) + edges.qedot.row(j).norm_squared()
    });
    (j_mat, b)
}

/// Multipliers `λ` for the given state and applied forces.
pub fn solve_lambda(
    model: &SarModel,
    state: &SystemState,
    force: &Coords,
) -> Result<DVector<f64>, DynamicsError> {
    model.check_node_matrix("F", force)?;
    let edges = model.edge_state(state)?;
    solve_lambda_edges(model, &edges, force, state.time)
}

fn solve_lambda_edges(
    model: &SarModel,
    edges: &EdgeState,
    force: &Coords,
    time: f64,
) -> Result<DVector<f64>, DynamicsError> {
    let (j_mat, b) = multiplier_system(model, edges, force);
    let chol = Cholesky::factor(&j_mat)
        .map_err(|source| DynamicsError::NotPositiveDefinite { time, source })?;
    Ok(chol.solve(&b))
}

/// `Γ = D·diag(λ)·Dᵀ·Q`; its columns always sum to zero.
pub fn constraint_forces(model: &SarModel, state: &SystemState, lambda: &DVector<f64>) -> Coords {
    assert_eq!(lambda.len(), model.edge_count(), "one multiplier per edge");
    let mut gamma = Coords::zeros(model.node_count());
    for (j, e) in model.graph().edges().iter().enumerate() {
        let pull = (state.q.row(e.head) - state.q.row(e.tail)) * lambda[j];
        let head = gamma.row(e.head) + pull;
        let tail = gamma.row(e.tail) - pull;
        gamma.set_row(e.head, &head);
        gamma.set_row(e.tail, &tail);
    }
    gamma
}

/// Everything the dynamics produce at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub lambda: DVector<f64>,
    pub gamma: Coords,
    pub qddot: Coords,
}

/// Solves for `λ` and returns `Q̈ = −M⁻¹Γ + M⁻¹F − G` along with the
/// intermediate quantities.
pub fn evaluate(
    model: &SarModel,
    state: &SystemState,
    force: &Coords,
) -> Result<Evaluation, DynamicsError> {
    let lambda = solve_lambda(model, state, force)?;
    let gamma = constraint_forces(model, state, &lambda);
    let qddot = model.scale_by_inverse_mass(&(force - &gamma)) - model.gravity_matrix();
    Ok(Evaluation {
        lambda,
        gamma,
        qddot,
    })
}

pub fn node_accelerations(
    model: &SarModel,
    state: &SystemState,
    force: &Coords,
) -> Result<Coords, DynamicsError> {
    Ok(evaluate(model, state, force)?.qddot)
}

/// `Q̈_e = −L_e·Λ·Q_e + Dᵀ·M⁻¹·F`.
pub fn edge_accelerations(
    model: &SarModel,
    state: &SystemState,
    force: &Coords,
) -> Result<Coords, DynamicsError> {
    let lambda = solve_lambda(model, state, force)?;
    let edges = model.edge_state(state)?;
    Ok(edge_accelerations_with(model, &edges, &lambda, force))
}

/// Edge accelerations for already-known multipliers.
pub fn edge_accelerations_with(
    model: &SarModel,
    edges: &EdgeState,
    lambda: &DVector<f64>,
    force: &Coords,
) -> Coords {
    let mut weighted = edges.qe.clone();
    for (j, l) in lambda.iter().enumerate() {
        weighted.row_mut(j).scale_mut(*l);
    }
    model.to_edges(&model.scale_by_inverse_mass(force)) - model.edge_laplacian() * weighted
}

/// Second time derivative of each holonomic constraint,
/// `d_jᵀ·Q̈·Qᵀ·d_j + ‖Q̇ᵀ·d_j‖²`; zero for consistent accelerations.
pub fn constraint_acceleration_residuals(
    model: &SarModel,
    state: &SystemState,
    qddot: &Coords,
) -> DVector<f64> {
    let qe = model.to_edges(&state.q);
    let qedot = model.to_edges(&state.qdot);
    let qeddot = model.to_edges(qddot);
    DVector::from_fn(model.edge_count(), |j, _| {
        qeddot.row(j).dot(&qe.row(j)) + qedot.row(j).norm_squared()
    })
}

/// Applied forces as a function of time and state. The time is `state.time`.
pub trait ForceLaw {
    fn force(&self, model: &SarModel, state: &SystemState) -> Result<Coords, DynamicsError>;
}

impl<F> ForceLaw for F
where
    F: Fn(&SarModel, &SystemState) -> Result<Coords, DynamicsError>,
{
    fn force(&self, model: &SarModel, state: &SystemState) -> Result<Coords, DynamicsError> {
        self(model, state)
    }
}

/// No applied forces.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForce;

impl ForceLaw for ZeroForce {
    fn force(&self, model: &SarModel, _state: &SystemState) -> Result<Coords, DynamicsError> {
        Ok(Coords::zeros(model.node_count()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub duration: f64,
    /// Re-project onto the constraint manifold after every step.
    pub project: bool,
    /// Record every k-th step (the final state is always recorded).
    pub record_every: usize,
}

impl IntegratorSettings {
    pub fn new(dt: f64, duration: f64) -> Self {
        Self {
            dt,
            duration,
            project: false,
            record_every: 1,
        }
    }

    /// Number of fixed steps; the last step lands on `duration` to within
    /// rounding.
    pub fn step_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::InvalidSettings(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(DynamicsError::InvalidSettings(format!(
                "duration must be non-negative, got {}",
                self.duration
            )));
        }
        if self.record_every == 0 {
            return Err(DynamicsError::InvalidSettings(
                "record_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One recorded instant: the state, the force applied there and the
/// multipliers it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub state: SystemState,
    pub force: Coords,
    pub lambda: DVector<f64>,
    pub qddot: Coords,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub samples: Vec<TraceSample>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.state.time)
    }
}

fn sample_at(
    model: &SarModel,
    law: &dyn ForceLaw,
    state: &SystemState,
) -> Result<(Coords, Evaluation), DynamicsError> {
    let force = law.force(model, state)?;
    let eval = evaluate(model, state, &force)?;
    Ok((force, eval))
}

/// Classical fixed-step RK4 on `(Q, Q̇)`. The force law is evaluated at every
/// stage time and stage state.
pub fn integrate(
    model: &SarModel,
    initial: &SystemState,
    law: &dyn ForceLaw,
    settings: &IntegratorSettings,
) -> Result<SimTrace, DynamicsError> {
    settings.validate()?;
    model.validate_state(initial)?;
    let steps = settings.step_count();
    let dt = settings.dt;
    let t0 = initial.time;
    let mut trace = SimTrace::default();
    let mut state = initial.clone();

    for k in 0..steps {
        let (force, k1) = sample_at(model, law, &state)?;
        if k % settings.record_every == 0 {
            trace.samples.push(TraceSample {
                state: state.clone(),
                force,
                lambda: k1.lambda.clone(),
                qddot: k1.qddot.clone(),
            });
        }

        let t = state.time;
        let stage = |h: f64, dq: &Coords, dv: &Coords| SystemState {
            time: t + h,
            q: &state.q + dq * h,
            qdot: &state.qdot + dv * h,
        };
        let v1 = state.qdot.clone();
        let a1 = k1.qddot;
        let s2 = stage(0.5 * dt, &v1, &a1);
        let a2 = sample_at(model, law, &s2)?.1.qddot;
        let v2 = s2.qdot.clone();
        let s3 = stage(0.5 * dt, &v2, &a2);
        let a3 = sample_at(model, law, &s3)?.1.qddot;
        let v3 = s3.qdot.clone();
        let s4 = stage(dt, &v3, &a3);
        let a4 = sample_at(model, law, &s4)?.1.qddot;
        let v4 = s4.qdot.clone();

        let sixth = dt / 6.0;
        let mut next = SystemState {
            time: t0 + (k + 1) as f64 * dt,
            q: &state.q + (v1 + (v2 + v3) * 2.0 + v4) * sixth,
            qdot: &state.qdot + (a1 + (a2 + a3) * 2.0 + a4) * sixth,
        };
        if !next.is_finite() {
            return Err(DynamicsError::NonFiniteState { time: next.time });
        }
        if settings.project {
            next = project_to_manifold(model, &next);
        }
        state = next;
    }

    let (force, eval) = sample_at(model, law, &state)?;
    trace.samples.push(TraceSample {
        state,
        force,
        lambda: eval.lambda,
        qddot: eval.qddot,
    });
    Ok(trace)
}

/// Rescales every edge to its rod length and removes the radial part of each
/// edge velocity, then rebuilds the nodes from the root.
pub fn project_to_manifold(model: &SarModel, state: &SystemState) -> SystemState {
    let mut qe = model.to_edges(&state.q);
    let mut qedot = model.to_edges(&state.qdot);
    for j in 0..model.edge_count() {
        let r: Vector2<f64> = qe.row(j).transpose();
        let norm = r.norm();
        if norm == 0.0 {
            continue;
        }
        let unit = r / norm;
        let v: Vector2<f64> = qedot.row(j).transpose();
        let tangential = v - unit * unit.dot(&v);
        qe.set_row(j, &(unit * model.lengths()[j]).transpose());
        qedot.set_row(j, &tangential.transpose());
    }
    let root = model.graph().traversal_order()[0];
    model.assemble_unchecked(
        state.time,
        state.q.row(root).transpose(),
        state.qdot.row(root).transpose(),
        &qe,
        &qedot,
    )
}
