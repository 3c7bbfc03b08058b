//! Decentralized leader-follower control in edge coordinates.
//!
//! The root node is the leader and receives an open-loop force `f_l(t)`.
//! Every follower computes its force from its parent's reduced force and the
//! tracking error of its incoming edge:
//!
//! ```text
//! f_i = f̄_i + m_i·g·e₂,   f̄_i = m_i·(f̄_k / m_k + u_j),   f̄_root = f_l
//! u_j = P_j·(−k_c·e_c,j − k_v·e_v,j [+ r̈_ej,d])
//! ```
//!
//! where `e_j = (k, i)` and `P_j` projects onto the normal of edge `j`. Because
//! each `u_j` is orthogonal to its edge, the rod multipliers do not depend on
//! the control input, and the edge dynamics become `Q̈_e = −L_e·Λ·Q_e + U`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsError, ForceLaw};
use crate::model::{Coords, EdgeState, SarModel, SystemState};

/// Admissible `|u_jᵀ·r_ej|` for externally supplied edge inputs.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("input for edge {} is not orthogonal to the edge: |uᵀr| = {residual:e}", .edge + 1)]
    OrthogonalityViolation { edge: usize, residual: f64 },
    #[error("node {} is the root; it has no incoming edge", .0 + 1)]
    RootNode(usize),
    #[error("gains must be positive and finite (k_c = {kc}, k_v = {kv})")]
    InvalidGain { kc: f64, kv: f64 },
    #[error("expected {expected} {what}, found {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// `P = I − r·rᵀ / ℓ²`.
pub fn projection(r: &Vector2<f64>, length: f64) -> Matrix2<f64> {
    Matrix2::identity() - r * r.transpose() / (length * length)
}

/// `a·cos(ω·t + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Sinusoid {
    pub fn new(amplitude: f64, omega: f64, phase: f64) -> Self {
        Self {
            amplitude,
            omega,
            phase,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).cos()
    }
}

/// Open-loop leader force, one sinusoid per axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderForce {
    #[serde(default)]
    pub x: Sinusoid,
    #[serde(default)]
    pub y: Sinusoid,
}

impl LeaderForce {
    pub fn eval(&self, t: f64) -> Vector2<f64> {
        Vector2::new(self.x.eval(t), self.y.eval(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeGains {
    pub kc: f64,
    pub kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// Proportional gain (1/s²) shared by all edges.
    pub kc: f64,
    /// Derivative gain (1/s) shared by all edges.
    pub kv: f64,
    /// Add the desired edge acceleration inside the projection.
    #[serde(default)]
    pub feedforward: bool,
    #[serde(default)]
    pub leader_force: LeaderForce,
    /// Per-edge overrides of `kc`/`kv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_gains: Option<Vec<EdgeGains>>,
}

impl ControllerConfig {
    pub fn new(kc: f64, kv: f64, leader_force: LeaderForce, feedforward: bool) -> Self {
        Self {
            kc,
            kv,
            feedforward,
            leader_force,
            edge_gains: None,
        }
    }

    pub fn gains(&self, j: usize) -> EdgeGains {
        match &self.edge_gains {
            Some(g) => g[j],
            None => EdgeGains {
                kc: self.kc,
                kv: self.kv,
            },
        }
    }

    pub fn validate(&self, edge_count: usize) -> Result<(), ControlError> {
        let ok = |kc: f64, kv: f64| kc.is_finite() && kv.is_finite() && kc > 0.0 && kv > 0.0;
        if !ok(self.kc, self.kv) {
            return Err(ControlError::InvalidGain {
                kc: self.kc,
                kv: self.kv,
            });
        }
        if let Some(g) = &self.edge_gains {
            if g.len() != edge_count {
                return Err(ControlError::CountMismatch {
                    what: "edge gains",
                    expected: edge_count,
                    found: g.len(),
                });
            }
            if let Some(bad) = g.iter().find(|g| !ok(g.kc, g.kv)) {
                return Err(ControlError::InvalidGain {
                    kc: bad.kc,
                    kv: bad.kv,
                });
            }
        }
        Ok(())
    }
}

/// Desired edge coordinates and their first two time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SetpointSample {
    pub position: Coords,
    pub velocity: Coords,
    pub acceleration: Coords,
}

/// A desired edge trajectory with analytic derivatives.
pub trait EdgeSetpoint: Send + Sync {
    fn sample(&self, t: f64) -> SetpointSample;
}

/// Time-invariant desired edge coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSetpoint(pub Coords);

impl EdgeSetpoint for ConstantSetpoint {
    fn sample(&self, _t: f64) -> SetpointSample {
        let m = self.0.nrows();
        SetpointSample {
            position: self.0.clone(),
            velocity: Coords::zeros(m),
            acceleration: Coords::zeros(m),
        }
    }
}

/// `θ(t) = a·cos(ω·t) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwingAngle {
    pub amplitude: f64,
    pub omega: f64,
    pub offset: f64,
}

impl SwingAngle {
    /// `(θ, θ̇, θ̈)` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (s, c) = (self.omega * t).sin_cos();
        (
            self.amplitude * c + self.offset,
            -self.amplitude * self.omega * s,
            -self.amplitude * self.omega * self.omega * c,
        )
    }
}

/// Per-edge pattern of a [`SwingSetpoint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeTarget {
    /// A constant edge vector.
    Fixed(Vector2<f64>),
    /// `ℓ·(sx·cos θ, sy·sin θ)` with signs `sx`, `sy`.
    Swing { sx: f64, sy: f64 },
}

/// Edges that either hold still or swing with a shared angle `θ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingSetpoint {
    pub angle: SwingAngle,
    pub lengths: Vec<f64>,
    pub targets: Vec<EdgeTarget>,
}

impl EdgeSetpoint for SwingSetpoint {
    fn sample(&self, t: f64) -> SetpointSample {
        let m = self.targets.len();
        let (theta, dtheta, ddtheta) = self.angle.eval(t);
        let (s, c) = theta.sin_cos();
        let mut out = SetpointSample {
            position: Coords::zeros(m),
            velocity: Coords::zeros(m),
            acceleration: Coords::zeros(m),
        };
        for (j, target) in self.targets.iter().enumerate() {
            match *target {
                EdgeTarget::Fixed(r) => out.position.set_row(j, &r.transpose()),
                EdgeTarget::Swing { sx, sy } => {
                    let l = self.lengths[j];
                    let pos = Vector2::new(sx * c, sy * s) * l;
                    let tangent = Vector2::new(-sx * s, sy * c) * l;
                    out.position.set_row(j, &pos.transpose());
                    out.velocity.set_row(j, &(tangent * dtheta).transpose());
                    let acc = tangent * ddtheta - pos * (dtheta * dtheta);
                    out.acceleration.set_row(j, &acc.transpose());
                }
            }
        }
        out
    }
}

/// `u_j = P_j·(−k_c·e_c − k_v·e_v [+ r̈_d])` for edge `j`.
///
/// `P_j` is normalized by the current edge length, so the result is
/// orthogonal to `r_ej` even when integration has let the length drift.
pub fn edge_control(
    config: &ControllerConfig,
    setpoint: &SetpointSample,
    edges: &EdgeState,
    j: usize,
) -> Vector2<f64> {
    let EdgeGains { kc, kv } = config.gains(j);
    let r = edges.edge(j);
    let ec = r - setpoint.position.row(j).transpose();
    let ev = edges.edge_rate(j) - setpoint.velocity.row(j).transpose();
    let mut w = -ec * kc - ev * kv;
    if config.feedforward {
        w += setpoint.acceleration.row(j).transpose();
    }
    let u = projection(&r, r.norm()) * w;
    // Remove the last bit of rounding along the edge.
    u - r * (r.dot(&u) / r.norm_squared())
}

/// All edge inputs stacked as rows of `U`.
pub fn edge_inputs(
    config: &ControllerConfig,
    setpoint: &SetpointSample,
    edges: &EdgeState,
) -> Coords {
    let m = edges.qe.nrows();
    let mut u = Coords::zeros(m);
    for j in 0..m {
        u.set_row(j, &edge_control(config, setpoint, edges, j).transpose());
    }
    u
}

/// `F = M·(1·f_lᵀ/m₁ + G + H(G)ᵀ·U)`.
///
/// Rejects inputs whose rows are not orthogonal to the matching edges.
pub fn assemble_forces_structured(
    model: &SarModel,
    leader: Vector2<f64>,
    u: &Coords,
    qe: &Coords,
) -> Result<Coords, ControlError> {
    let m = model.edge_count();
    for (what, x) in [("edge inputs", u), ("edge coordinates", qe)] {
        if x.nrows() != m {
            return Err(ControlError::CountMismatch {
                what,
                expected: m,
                found: x.nrows(),
            });
        }
    }
    for j in 0..m {
        let residual = u.row(j).dot(&qe.row(j));
        if !(residual.abs() <= ORTHOGONALITY_TOL) {
            return Err(ControlError::OrthogonalityViolation { edge: j, residual });
        }
    }
    let n = model.node_count();
    let alpha = 1.0 / model.masses()[0];
    let mut shared = Coords::zeros(n);
    for mut row in shared.row_iter_mut() {
        row.copy_from(&(leader * alpha).transpose());
    }
    let ht_u = model.left_inverse().to_f64().transpose() * u;
    Ok(model.scale_by_mass(&(shared + model.gravity_matrix() + ht_u)))
}

/// Force on one follower and its reduced force `f̄_i` for the children.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerForce {
    pub force: Vector2<f64>,
    pub reduced: Vector2<f64>,
}

/// `f̄_i = m_i·(f̄_k/m_k + u_j)`, `f_i = f̄_i + m_i·g·e₂` where `k` is the
/// parent of `node` and `u_j` the input of its incoming edge.
pub fn follower_force(
    model: &SarModel,
    node: usize,
    parent_reduced: Vector2<f64>,
    u: Vector2<f64>,
) -> Result<FollowerForce, ControlError> {
    let parent = model
        .graph()
        .parent(node)
        .ok_or(ControlError::RootNode(node))?;
    let masses = model.masses();
    let reduced = (parent_reduced / masses[parent] + u) * masses[node];
    let force = reduced + Vector2::new(0.0, masses[node] * model.gravity());
    Ok(FollowerForce { force, reduced })
}

/// Forces for the whole tree by a root-to-leaves sweep of
/// [`follower_force`], starting from `f̄_root = f_l`.
pub fn sweep_forces(model: &SarModel, leader: Vector2<f64>, u: &Coords) -> Coords {
    let graph = model.graph();
    let n = graph.node_count();
    let mut reduced = vec![Vector2::zeros(); n];
    let mut f = Coords::zeros(n);
    let root = graph.traversal_order()[0];
    reduced[root] = leader;
    let root_force = leader + Vector2::new(0.0, model.masses()[root] * model.gravity());
    f.set_row(root, &root_force.transpose());
    for &v in &graph.traversal_order()[1..] {
        let j = graph.parent_edge(v).expect("non-root node");
        let k = graph.edges()[j].tail;
        let out =
            follower_force(model, v, reduced[k], u.row(j).transpose()).expect("non-root node");
        reduced[v] = out.reduced;
        f.set_row(v, &out.force.transpose());
    }
    f
}

/// The closed-loop force law: edge errors, projected PD inputs and the
/// recursive follower sweep.
pub struct ClosedLoop {
    pub config: ControllerConfig,
    pub setpoint: Box<dyn EdgeSetpoint>,
}

impl ClosedLoop {
    pub fn new(config: ControllerConfig, setpoint: Box<dyn EdgeSetpoint>) -> Self {
        Self { config, setpoint }
    }

    /// The edge inputs `U` the controller applies at `state`.
    pub fn inputs(&self, model: &SarModel, state: &SystemState) -> Result<Coords, DynamicsError> {
        let edges = model.edge_state(state)?;
        let sample = self.setpoint.sample(state.time);
        Ok(edge_inputs(&self.config, &sample, &edges))
    }
}

impl ForceLaw for ClosedLoop {
    fn force(&self, model: &SarModel, state: &SystemState) -> Result<Coords, DynamicsError> {
        let u = self.inputs(model, state)?;
        let leader = self.config.leader_force.eval(state.time);
        Ok(sweep_forces(model, leader, &u))
    }
}
