//! Per-sample diagnostics and run summaries.

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::control::{projection, ControllerConfig, EdgeSetpoint, SetpointSample};
use crate::dynamics::{SimTrace, TraceSample};
use crate::model::{EdgeState, SarModel, SystemState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("the trace is empty")]
    EmptyTrace,
}

/// Settling band on every `‖e_c,j‖` (m).
pub const DEFAULT_SETTLING_THRESHOLD: f64 = 1e-2;

/// `J = L_e ⊙ Q_e·Q_eᵀ`.
pub fn multiplier_matrix(model: &SarModel, edges: &EdgeState) -> DMatrix<f64> {
    model
        .edge_laplacian()
        .component_mul(&(&edges.qe * edges.qe.transpose()))
}

/// Smallest eigenvalue of a symmetric matrix; `+∞` for an empty one.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    a.symmetric_eigenvalues().min()
}

/// `X_j = −Q_eᵀ·Λ·L_e·e_j`, the coupling of edge `j` to the rest of the tree
/// through the rod forces.
pub fn residual_vector(
    model: &SarModel,
    edges: &EdgeState,
    lambda: &DVector<f64>,
    j: usize,
) -> Vector2<f64> {
    let le = model.edge_laplacian();
    let mut x = Vector2::zeros();
    for k in 0..model.edge_count() {
        x -= edges.edge(k) * (lambda[k] * le[(k, j)]);
    }
    x
}

/// Measurable quantities of the residual bound
/// `‖X_j‖ ≤ β/σ(J) · Σ‖e_v,j‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub sigma_min_j: f64,
    /// `Tr(Q̇_e·Q̇_eᵀ)`, equal to `Σ‖e_v,j‖²` for a constant setpoint.
    pub sum_ev_sq: f64,
    pub max_x_norm: f64,
}

pub fn bound_terms(model: &SarModel, state: &SystemState, lambda: &DVector<f64>) -> BoundTerms {
    let edges = EdgeState {
        qe: model.to_edges(&state.q),
        qedot: model.to_edges(&state.qdot),
    };
    BoundTerms {
        sigma_min_j: min_eigenvalue(&multiplier_matrix(model, &edges)),
        sum_ev_sq: edges.qedot.norm_squared(),
        max_x_norm: (0..model.edge_count())
            .map(|j| residual_vector(model, &edges, lambda, j).norm())
            .fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    /// `max_j |‖r_ej‖ − ℓ_j|` (m).
    pub constraint_drift: f64,
    /// `max_j |ṙ_ejᵀ·r_ej|` (m²/s).
    pub velocity_residual_max: f64,
    /// `‖e_c,j‖` per edge; empty without a setpoint.
    pub ec_norms: Vec<f64>,
    /// `‖e_v,j‖` per edge; empty without a setpoint.
    pub ev_norms: Vec<f64>,
    pub kinetic: f64,
    pub potential: f64,
    pub sigma_min_j: f64,
    pub x_norms: Vec<f64>,
    pub lambda: DVector<f64>,
}

impl DiagnosticsRow {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.potential
    }
}

pub fn diagnostics(
    model: &SarModel,
    sample: &TraceSample,
    setpoint: Option<&SetpointSample>,
) -> DiagnosticsRow {
    let state = &sample.state;
    let edges = EdgeState {
        qe: model.to_edges(&state.q),
        qedot: model.to_edges(&state.qdot),
    };
    let m = model.edge_count();
    let mut drift: f64 = 0.0;
    let mut vres: f64 = 0.0;
    for j in 0..m {
        drift = drift.max((edges.qe.row(j).norm() - model.lengths()[j]).abs());
        vres = vres.max(edges.qe.row(j).dot(&edges.qedot.row(j)).abs());
    }
    let (ec_norms, ev_norms) = match setpoint {
        Some(sp) => (
            (0..m)
                .map(|j| (edges.qe.row(j) - sp.position.row(j)).norm())
                .collect(),
            (0..m)
                .map(|j| (edges.qedot.row(j) - sp.velocity.row(j)).norm())
                .collect(),
        ),
        None => (Vec::new(), Vec::new()),
    };
    let (kinetic, potential) = model.energy(state);
    DiagnosticsRow {
        t: state.time,
        constraint_drift: drift,
        velocity_residual_max: vres,
        ec_norms,
        ev_norms,
        kinetic,
        potential,
        sigma_min_j: min_eigenvalue(&multiplier_matrix(model, &edges)),
        x_norms: (0..m)
            .map(|j| residual_vector(model, &edges, &sample.lambda, j).norm())
            .collect(),
        lambda: sample.lambda.clone(),
    }
}

pub fn diagnose_trace(
    model: &SarModel,
    trace: &SimTrace,
    setpoint: Option<&dyn EdgeSetpoint>,
) -> Vec<DiagnosticsRow> {
    trace
        .samples
        .iter()
        .map(|s| {
            let sp = setpoint.map(|sp| sp.sample(s.state.time));
            diagnostics(model, s, sp.as_ref())
        })
        .collect()
}

/// Difference between the observed edge-velocity error rate `ë_v,j` (from the
/// node accelerations stored in the sample) and the closed-loop prediction
/// `u_j + X_j − r̈_ej,d`, maximized over edges.
pub fn error_dynamics_residual(
    model: &SarModel,
    config: &ControllerConfig,
    sample: &TraceSample,
    setpoint: &SetpointSample,
) -> f64 {
    let edges = EdgeState {
        qe: model.to_edges(&sample.state.q),
        qedot: model.to_edges(&sample.state.qdot),
    };
    let qeddot = model.to_edges(&sample.qddot);
    let mut worst: f64 = 0.0;
    for j in 0..model.edge_count() {
        let observed = (qeddot.row(j) - setpoint.acceleration.row(j)).transpose();
        let predicted = predicted_error_rate(model, config, &edges, &sample.lambda, setpoint, j);
        worst = worst.max((observed - predicted).amax());
    }
    worst
}

/// `ė_v,j = −k_c·P_j·e_c,j − k_v·P_j·e_v,j + X_j + (P_j − I)·r̈_ej,d`, with the
/// last term only when feedforward is on (otherwise `−r̈_ej,d`).
fn predicted_error_rate(
    model: &SarModel,
    config: &ControllerConfig,
    edges: &EdgeState,
    lambda: &DVector<f64>,
    setpoint: &SetpointSample,
    j: usize,
) -> Vector2<f64> {
    let g = config.gains(j);
    let r = edges.edge(j);
    let p = projection(&r, r.norm());
    let ec = r - setpoint.position.row(j).transpose();
    let ev = edges.edge_rate(j) - setpoint.velocity.row(j).transpose();
    let acc_d: Vector2<f64> = setpoint.acceleration.row(j).transpose();
    let mut rate = -(p * ec) * g.kc - (p * ev) * g.kv + residual_vector(model, edges, lambda, j);
    if config.feedforward {
        rate += p * acc_d;
    }
    rate - acc_d
}

/// Same identity checked against a central difference of the recorded
/// `e_v` samples; returns the largest deviation over interior samples.
pub fn error_dynamics_fd_residual(
    model: &SarModel,
    config: &ControllerConfig,
    setpoint: &dyn EdgeSetpoint,
    trace: &SimTrace,
) -> f64 {
    let ev = |s: &TraceSample| {
        let sp = setpoint.sample(s.state.time);
        model.to_edges(&s.state.qdot) - sp.velocity
    };
    let mut worst: f64 = 0.0;
    for w in trace.samples.windows(3) {
        let h = w[2].state.time - w[0].state.time;
        let rate = (ev(&w[2]) - ev(&w[0])) / h;
        let mid = &w[1];
        let sp = setpoint.sample(mid.state.time);
        let edges = EdgeState {
            qe: model.to_edges(&mid.state.q),
            qedot: model.to_edges(&mid.state.qdot),
        };
        for j in 0..model.edge_count() {
            let predicted = predicted_error_rate(model, config, &edges, &mid.lambda, &sp, j);
            worst = worst.max((rate.row(j).transpose() - predicted).amax());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub samples: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub max_constraint_drift: f64,
    pub mean_constraint_drift: f64,
    pub max_velocity_residual: f64,
    pub final_ec_norms: Vec<f64>,
    pub final_ev_norms: Vec<f64>,
    /// First time after which every `‖e_c,j‖` stays below the threshold.
    pub settling_time: Option<f64>,
    pub settling_threshold: f64,
    /// `max |E(t) − E(0)| / |E(0)|`, reported for unforced runs only.
    pub energy_drift: Option<f64>,
    pub sigma_min_initial: f64,
    pub sigma_min_overall: f64,
}

pub fn summarize(
    rows: &[DiagnosticsRow],
    unforced: bool,
    settling_threshold: f64,
) -> Result<Summary, AnalysisError> {
    let first = rows.first().ok_or(AnalysisError::EmptyTrace)?;
    let last = rows.last().expect("non-empty");
    let n = rows.len() as f64;

    let settling_time = if rows.len() < 2 || first.ec_norms.is_empty() {
        None
    } else {
        let above = |r: &DiagnosticsRow| r.ec_norms.iter().any(|e| !(*e <= settling_threshold));
        match rows.iter().rposition(above) {
            None => Some(first.t),
            Some(i) if i + 1 < rows.len() => Some(rows[i + 1].t),
            Some(_) => None,
        }
    };

    let energy_drift = unforced.then(|| {
        let e0 = first.energy();
        rows.iter()
            .map(|r| (r.energy() - e0).abs() / e0.abs())
            .fold(0.0, f64::max)
    });

    Ok(Summary {
        samples: rows.len(),
        t_start: first.t,
        t_end: last.t,
        max_constraint_drift: rows.iter().map(|r| r.constraint_drift).fold(0.0, f64::max),
        mean_constraint_drift: rows.iter().map(|r| r.constraint_drift).sum::<f64>() / n,
        max_velocity_residual: rows
            .iter()
            .map(|r| r.velocity_residual_max)
            .fold(0.0, f64::max),
        final_ec_norms: last.ec_norms.clone(),
        final_ev_norms: last.ev_norms.clone(),
        settling_time,
        settling_threshold,
        energy_drift,
        sigma_min_initial: first.sigma_min_j,
        sigma_min_overall: rows
            .iter()
            .map(|r| r.sigma_min_j)
            .fold(f64::INFINITY, f64::min),
    })
}

/// True when every recorded force is exactly zero.
pub fn is_unforced(trace: &SimTrace) -> bool {
    trace
        .samples
        .iter()
        .all(|s| s.force.iter().all(|v| *v == 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{assemble_forces_structured, ConstantSetpoint};
    use crate::dynamics::{evaluate, solve_lambda};
    use crate::graph::Arborescence;
    use crate::model::{coords_from_rows, Coords};

    fn chain3() -> SarModel {
        let g = Arborescence::from_one_based(3, &[(1, 2), (2, 3)]).unwrap();
        SarModel::new(g, vec![0.9, 0.4, 0.3], vec![0.5, 0.5], 9.81).unwrap()
    }

    fn sample(model: &SarModel, state: SystemState, force: Coords) -> TraceSample {
        let eval = evaluate(model, &state, &force).unwrap();
        TraceSample {
            state,
            force,
            lambda: eval.lambda,
            qddot: eval.qddot,
        }
    }

    #[test]
    fn residual_vector_is_zero_without_multipliers() {
        let m = chain3();
        let edges = EdgeState {
            qe: coords_from_rows(&[[0.5, 0.0], [0.0, 0.5]]),
            qedot: Coords::zeros(2),
        };
        for j in 0..2 {
            assert_eq!(
                residual_vector(&m, &edges, &DVector::zeros(2), j),
                Vector2::zeros()
            );
        }
    }

    #[test]
    fn residual_vector_vanishes_at_rest_under_structured_forces() {
        let m = chain3();
        let qe = coords_from_rows(&[[0.3, -0.4], [-0.4, -0.3]]);
        let s = m
            .assemble_state_from_edges(
                0.0,
                Vector2::zeros(),
                Vector2::zeros(),
                &qe,
                &Coords::zeros(2),
            )
            .unwrap();
        let u = coords_from_rows(&[[0.8, 0.6], [0.3, -0.4]]);
        let f = assemble_forces_structured(&m, Vector2::new(0.1, 0.2), &u, &qe).unwrap();
        let lambda = solve_lambda(&m, &s, &f).unwrap();
        assert!(lambda.amax() < 1e-12);
        let bt = bound_terms(&m, &s, &lambda);
        assert_eq!(bt.sum_ev_sq, 0.0);
        assert!(bt.max_x_norm < 1e-12);
        assert!(bt.sigma_min_j > 0.0);
    }

    #[test]
    fn residual_vector_single_edge() {
        let g = Arborescence::from_one_based(2, &[(1, 2)]).unwrap();
        let (m1, m2) = (0.7, 0.2);
        let m = SarModel::new(g, vec![m1, m2], vec![0.5], 9.81).unwrap();
        let r = Vector2::new(0.3, -0.4);
        let edges = EdgeState {
            qe: coords_from_rows(&[[r.x, r.y]]),
            qedot: Coords::zeros(1),
        };
        let l1 = 2.5;
        let x = residual_vector(&m, &edges, &DVector::from_vec(vec![l1]), 0);
        let expected = -r * (l1 * (1.0 / m1 + 1.0 / m2));
        assert!((x - expected).amax() < 1e-14);
    }

    #[test]
    fn error_dynamics_identity_holds_at_a_sample() {
        let m = chain3();
        let qe = coords_from_rows(&[[0.3, -0.4], [-0.4, -0.3]]);
        let qedot = coords_from_rows(&[[0.8, 0.6], [0.3, -0.4]]);
        let s = m
            .assemble_state_from_edges(0.4, Vector2::zeros(), Vector2::new(0.2, 0.1), &qe, &qedot)
            .unwrap();
        let cfg = ControllerConfig::new(10.0, 7.0, Default::default(), false);
        let target = ConstantSetpoint(coords_from_rows(&[[0.5, 0.0], [0.0, -0.5]]));
        let law = crate::control::ClosedLoop::new(cfg.clone(), Box::new(target.clone()));
        let f = crate::dynamics::ForceLaw::force(&law, &m, &s).unwrap();
        let smp = sample(&m, s, f);
        let res = error_dynamics_residual(&m, &cfg, &smp, &target.sample(0.4));
        assert!(res <= 1e-8, "{res:e}");
    }

    fn row(t: f64, ec: f64, energy: f64) -> DiagnosticsRow {
        DiagnosticsRow {
            t,
            constraint_drift: 0.0,
            velocity_residual_max: 0.0,
            ec_norms: vec![ec],
            ev_norms: vec![0.0],
            kinetic: energy,
            potential: 0.0,
            sigma_min_j: 1.0,
            x_norms: vec![0.0],
            lambda: DVector::zeros(1),
        }
    }

    #[test]
    fn summary_settling_and_edge_cases() {
        let rows: Vec<_> = [0.5, 0.02, 0.005, 0.02, 0.004, 0.001]
            .iter()
            .enumerate()
            .map(|(i, e)| row(i as f64, *e, 1.0))
            .collect();
        let s = summarize(&rows, false, 1e-2).unwrap();
        assert_eq!(s.settling_time, Some(4.0));
        assert_eq!(s.energy_drift, None);

        let single = summarize(&rows[..1], true, 1e-2).unwrap();
        assert_eq!(single.settling_time, None);
        assert_eq!(single.max_constraint_drift, 0.0);
        assert_eq!(single.energy_drift, Some(0.0));

        let never: Vec<_> = (0..3).map(|i| row(i as f64, 1.0, 1.0)).collect();
        assert_eq!(summarize(&never, false, 1e-2).unwrap().settling_time, None);

        assert_eq!(
            summarize(&[], false, 1e-2).unwrap_err(),
            AnalysisError::EmptyTrace
        );
    }

    #[test]
    fn min_eigenvalue_of_empty_matrix_is_infinite() {
        assert_eq!(min_eigenvalue(&DMatrix::zeros(0, 0)), f64::INFINITY);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((min_eigenvalue(&a) - 1.0).abs() < 1e-14);
    }
}
