//! Physical description of a planar articulated system and its state.
//!
//! Positions are stored as an `n × 2` matrix `Q` whose row `i` is the
//! inertial position of mass `i`. Edge coordinates are `Q_e = Dᵀ·Q`: row `j`
//! is the displacement from the tail to the head of rod `j`.

use nalgebra::{DMatrix, MatrixXx2, RowVector2, Vector2};
use thiserror::Error;

use crate::graph::{
    node_weighted_edge_laplacian, Arborescence, GraphError, IncidenceMatrix, LeftInverse, ROOT,
};

/// `n × 2` matrix of planar vectors, one row per node (or per edge).
pub type Coords = MatrixXx2<f64>;

/// Admissible holonomic residual `|½‖r_e‖² − ½ℓ²|` for initial states (m²).
pub const POSITION_TOL: f64 = 1e-9;
/// Admissible velocity residual `|ṙ_eᵀ·r_e|` for initial states (m²/s).
pub const VELOCITY_TOL: f64 = 1e-9;
/// Standard gravity, used when a configuration does not override it.
pub const DEFAULT_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("expected {expected} {what}, found {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} {} must be positive and finite, got {value}", .index + 1)]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("gravity must be finite, got {0}")]
    InvalidGravity(f64),
    #[error("{what} has shape {found:?}, expected {expected:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{kind} constraint of edge {} violated: residual {residual:e} exceeds {tolerance:e}", .edge + 1)]
    ConstraintViolation {
        kind: ConstraintKind,
        edge: usize,
        residual: f64,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Length,
    Velocity,
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConstraintKind::Length => "length",
            ConstraintKind::Velocity => "velocity",
        })
    }
}

/// Masses joined by massless rigid rods along an arborescence.
#[derive(Debug, Clone)]
pub struct SarModel {
    graph: Arborescence,
    masses: Vec<f64>,
    lengths: Vec<f64>,
    gravity: f64,
    incidence: IncidenceMatrix,
    left_inverse: LeftInverse,
    d: DMatrix<f64>,
    inv_masses: Vec<f64>,
    edge_laplacian: DMatrix<f64>,
}

impl SarModel {
    /// `lengths[j]` is the length of edge `j` in the graph's edge order.
    pub fn new(
        graph: Arborescence,
        masses: Vec<f64>,
        lengths: Vec<f64>,
        gravity: f64,
    ) -> Result<Self, ModelError> {
        if masses.len() != graph.node_count() {
            return Err(ModelError::CountMismatch {
                what: "masses",
                expected: graph.node_count(),
                found: masses.len(),
            });
        }
        if lengths.len() != graph.edge_count() {
            return Err(ModelError::CountMismatch {
                what: "lengths",
                expected: graph.edge_count(),
                found: lengths.len(),
            });
        }
        check_positive("mass", &masses)?;
        check_positive("length", &lengths)?;
        if !gravity.is_finite() {
            return Err(ModelError::InvalidGravity(gravity));
        }

        let incidence = graph.incidence_matrix();
        let left_inverse = graph.left_inverse();
        let inv_masses: Vec<f64> = masses.iter().map(|m| 1.0 / m).collect();
        let edge_laplacian = node_weighted_edge_laplacian(&incidence, &inv_masses)?;
        let d = incidence.to_f64();
        Ok(Self {
            graph,
            masses,
            lengths,
            gravity,
            incidence,
            left_inverse,
            d,
            inv_masses,
            edge_laplacian,
        })
    }

    pub fn graph(&self) -> &Arborescence {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn inverse_masses(&self) -> &[f64] {
        &self.inv_masses
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn left_inverse(&self) -> &LeftInverse {
        &self.left_inverse
    }

    /// `D(G)` as floating point.
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// `L_e = Dᵀ·M⁻¹·D`.
    pub fn edge_laplacian(&self) -> &DMatrix<f64> {
        &self.edge_laplacian
    }

    /// `G = [0, g·1]`: the gravity acceleration enters the dynamics as `−G`.
    pub fn gravity_matrix(&self) -> Coords {
        let mut g = Coords::zeros(self.node_count());
        g.column_mut(1).fill(self.gravity);
        g
    }

    /// `M·G`, the force that exactly cancels gravity on every node.
    pub fn gravity_compensation(&self) -> Coords {
        let mut f = Coords::zeros(self.node_count());
        for (i, m) in self.masses.iter().enumerate() {
            f[(i, 1)] = m * self.gravity;
        }
        f
    }

    /// Row-scales `x` by the inverse masses: `M⁻¹·X`.
    pub fn scale_by_inverse_mass(&self, x: &Coords) -> Coords {
        let mut out = x.clone();
        for (i, w) in self.inv_masses.iter().enumerate() {
            out.row_mut(i).scale_mut(*w);
        }
        out
    }

    /// Row-scales `x` by the masses: `M·X`.
    pub fn scale_by_mass(&self, x: &Coords) -> Coords {
        let mut out = x.clone();
        for (i, m) in self.masses.iter().enumerate() {
            out.row_mut(i).scale_mut(*m);
        }
        out
    }

    /// `Dᵀ·X` for a node matrix `X`.
    pub fn to_edges(&self, x: &Coords) -> Coords {
        let mut out = Coords::zeros(self.edge_count());
        for (j, e) in self.graph.edges().iter().enumerate() {
            let row = x.row(e.head) - x.row(e.tail);
            out.set_row(j, &row);
        }
        out
    }

    pub fn check_node_matrix(&self, what: &'static str, x: &Coords) -> Result<(), ModelError> {
        if x.nrows() != self.node_count() {
            return Err(ModelError::DimensionMismatch {
                what,
                expected: (self.node_count(), 2),
                found: (x.nrows(), 2),
            });
        }
        Ok(())
    }

    pub fn check_edge_matrix(&self, what: &'static str, x: &Coords) -> Result<(), ModelError> {
        if x.nrows() != self.edge_count() {
            return Err(ModelError::DimensionMismatch {
                what,
                expected: (self.edge_count(), 2),
                found: (x.nrows(), 2),
            });
        }
        Ok(())
    }

    /// `Q_e = Dᵀ·Q` and `Q̇_e = Dᵀ·Q̇`.
    pub fn edge_state(&self, state: &SystemState) -> Result<EdgeState, ModelError> {
        self.check_state(state)?;
        Ok(EdgeState {
            qe: self.to_edges(&state.q),
            qedot: self.to_edges(&state.qdot),
        })
    }

    /// `h_j(Q) = ½‖Qᵀd_j‖² − ½ℓ_j²`.
    ///
    /// Panics if `j` is not an edge index.
    pub fn holonomic_residual(&self, state: &SystemState, j: usize) -> f64 {
        let r = edge_row(&self.graph, &state.q, j);
        0.5 * r.norm_squared() - 0.5 * self.lengths[j] * self.lengths[j]
    }

    /// `d_jᵀ·Q̇·Qᵀ·d_j = ṙ_ejᵀ·r_ej`.
    ///
    /// Panics if `j` is not an edge index.
    pub fn velocity_residual(&self, state: &SystemState, j: usize) -> f64 {
        let r = edge_row(&self.graph, &state.q, j);
        let v = edge_row(&self.graph, &state.qdot, j);
        r.dot(&v)
    }

    /// Checks shapes and both constraint residuals against the initial-state
    /// tolerances.
    pub fn validate_state(&self, state: &SystemState) -> Result<(), ModelError> {
        self.check_state(state)?;
        for j in 0..self.edge_count() {
            let h = self.holonomic_residual(state, j);
            if !(h.abs() <= POSITION_TOL) {
                return Err(ModelError::ConstraintViolation {
                    kind: ConstraintKind::Length,
                    edge: j,
                    residual: h,
                    tolerance: POSITION_TOL,
                });
            }
            let v = self.velocity_residual(state, j);
            if !(v.abs() <= VELOCITY_TOL) {
                return Err(ModelError::ConstraintViolation {
                    kind: ConstraintKind::Velocity,
                    edge: j,
                    residual: v,
                    tolerance: VELOCITY_TOL,
                });
            }
        }
        Ok(())
    }

    fn check_state(&self, state: &SystemState) -> Result<(), ModelError> {
        self.check_node_matrix("Q", &state.q)?;
        self.check_node_matrix("Q̇", &state.qdot)
    }

    /// Rebuilds node coordinates from the root and the edge coordinates by
    /// summing edge vectors along each root-to-node path.
    pub fn assemble_state_from_edges(
        &self,
        time: f64,
        root_position: Vector2<f64>,
        root_velocity: Vector2<f64>,
        qe: &Coords,
        qedot: &Coords,
    ) -> Result<SystemState, ModelError> {
        self.check_edge_matrix("Q_e", qe)?;
        self.check_edge_matrix("Q̇_e", qedot)?;
        for j in 0..self.edge_count() {
            let r = qe.row(j);
            let l = self.lengths[j];
            let h = 0.5 * r.norm_squared() - 0.5 * l * l;
            if !(h.abs() <= POSITION_TOL) {
                return Err(ModelError::ConstraintViolation {
                    kind: ConstraintKind::Length,
                    edge: j,
                    residual: h,
                    tolerance: POSITION_TOL,
                });
            }
            let v = r.dot(&qedot.row(j));
            if !(v.abs() <= VELOCITY_TOL) {
                return Err(ModelError::ConstraintViolation {
                    kind: ConstraintKind::Velocity,
                    edge: j,
                    residual: v,
                    tolerance: VELOCITY_TOL,
                });
            }
        }
        Ok(self.assemble_unchecked(time, root_position, root_velocity, qe, qedot))
    }

    /// Same as [`Self::assemble_state_from_edges`] without the constraint
    /// checks; shapes must already match.
    pub(crate) fn assemble_unchecked(
        &self,
        time: f64,
        root_position: Vector2<f64>,
        root_velocity: Vector2<f64>,
        qe: &Coords,
        qedot: &Coords,
    ) -> SystemState {
        let n = self.node_count();
        let mut q = Coords::zeros(n);
        let mut qdot = Coords::zeros(n);
        q.set_row(ROOT, &root_position.transpose());
        qdot.set_row(ROOT, &root_velocity.transpose());
        for &v in &self.graph.traversal_order()[1..] {
            let j = self
                .graph
                .parent_edge(v)
                .expect("non-root node has a parent");
            let tail = self.graph.edges()[j].tail;
            let pos = q.row(tail) + qe.row(j);
            let vel = qdot.row(tail) + qedot.row(j);
            q.set_row(v, &pos);
            qdot.set_row(v, &vel);
        }
        SystemState { time, q, qdot }
    }

    /// Kinetic `½Σm‖ṙ‖²` and potential `Σm·g·y` energy.
    pub fn energy(&self, state: &SystemState) -> (f64, f64) {
        let mut ke = 0.0;
        let mut pe = 0.0;
        for (i, m) in self.masses.iter().enumerate() {
            ke += 0.5 * m * state.qdot.row(i).norm_squared();
            pe += m * self.gravity * state.q[(i, 1)];
        }
        (ke, pe)
    }

    /// Total linear momentum `Σ m_i·ṙ_i`.
    pub fn linear_momentum(&self, state: &SystemState) -> Vector2<f64> {
        let mut p = Vector2::zeros();
        for (i, m) in self.masses.iter().enumerate() {
            p += state.qdot.row(i).transpose() * *m;
        }
        p
    }

    /// Mass-weighted mean position.
    pub fn center_of_mass(&self, state: &SystemState) -> Vector2<f64> {
        let mut c = Vector2::zeros();
        for (i, m) in self.masses.iter().enumerate() {
            c += state.q.row(i).transpose() * *m;
        }
        c / self.total_mass()
    }
}

fn check_positive(what: &'static str, values: &[f64]) -> Result<(), ModelError> {
    match values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        Some((index, &value)) => Err(ModelError::NonPositive { what, index, value }),
        None => Ok(()),
    }
}

fn edge_row(graph: &Arborescence, x: &Coords, j: usize) -> RowVector2<f64> {
    let e = graph.edges()[j];
    x.row(e.head) - x.row(e.tail)
}

/// Node positions and velocities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub time: f64,
    pub q: Coords,
    pub qdot: Coords,
}

impl SystemState {
    pub fn new(time: f64, q: Coords, qdot: Coords) -> Self {
        Self { time, q, qdot }
    }

    /// A state at rest with the given positions.
    pub fn at_rest(time: f64, q: Coords) -> Self {
        let qdot = Coords::zeros(q.nrows());
        Self { time, q, qdot }
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite()
            && self.q.iter().all(|v| v.is_finite())
            && self.qdot.iter().all(|v| v.is_finite())
    }
}

/// Edge coordinates `Q_e` and their rates `Q̇_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeState {
    pub qe: Coords,
    pub qedot: Coords,
}

impl EdgeState {
    pub fn edge(&self, j: usize) -> Vector2<f64> {
        self.qe.row(j).transpose()
    }

    pub fn edge_rate(&self, j: usize) -> Vector2<f64> {
        self.qedot.row(j).transpose()
    }
}

/// Builds a `Coords` matrix from a list of rows.
pub fn coords_from_rows(rows: &[[f64; 2]]) -> Coords {
    Coords::from_fn(rows.len(), |i, k| rows[i][k])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(l: f64) -> SarModel {
        let g = Arborescence::from_one_based(2, &[(1, 2)]).unwrap();
        SarModel::new(g, vec![1.0, 2.0], vec![l], DEFAULT_GRAVITY).unwrap()
    }

    fn two_link() -> SarModel {
        let g = Arborescence::from_one_based(3, &[(1, 2), (1, 3)]).unwrap();
        SarModel::new(g, vec![0.7, 0.2, 0.2], vec![0.1, 0.1], DEFAULT_GRAVITY).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = Arborescence::from_one_based(2, &[(1, 2)]).unwrap();
        assert!(matches!(
            SarModel::new(g.clone(), vec![1.0], vec![1.0], 9.81),
            Err(ModelError::CountMismatch { what: "masses", .. })
        ));
        assert!(matches!(
            SarModel::new(g.clone(), vec![1.0, -1.0], vec![1.0], 9.81),
            Err(ModelError::NonPositive {
                what: "mass",
                index: 1,
                ..
            })
        ));
        assert!(matches!(
            SarModel::new(g.clone(), vec![1.0, 1.0], vec![0.0], 9.81),
            Err(ModelError::NonPositive { what: "length", .. })
        ));
        assert!(matches!(
            SarModel::new(g, vec![1.0, 1.0], vec![1.0], f64::NAN),
            Err(ModelError::InvalidGravity(_))
        ));
    }

    #[test]
    fn edge_state_is_head_minus_tail() {
        let l = 0.4;
        let m = single(l);
        let s = SystemState::at_rest(0.0, coords_from_rows(&[[0.0, 0.0], [0.0, -l]]));
        let es = m.edge_state(&s).unwrap();
        assert_eq!(es.edge(0), Vector2::new(0.0, -l));
        assert_eq!(es.edge_rate(0), Vector2::zeros());
    }

    #[test]
    fn edge_state_rejects_wrong_shape() {
        let m = single(1.0);
        let s = SystemState::at_rest(0.0, Coords::zeros(3));
        assert!(matches!(
            m.edge_state(&s),
            Err(ModelError::DimensionMismatch { what: "Q", .. })
        ));
    }

    #[test]
    fn edge_state_is_translation_invariant() {
        let m = two_link();
        let q = coords_from_rows(&[[0.3, 1.0], [0.2, 1.0], [0.3, 0.9]]);
        let mut shifted = q.clone();
        for mut row in shifted.row_iter_mut() {
            row[0] += 5.25;
            row[1] -= 1.5;
        }
        let a = m.edge_state(&SystemState::at_rest(0.0, q)).unwrap();
        let b = m.edge_state(&SystemState::at_rest(0.0, shifted)).unwrap();
        assert!((a.qe - b.qe).amax() < 1e-14);
    }

    #[test]
    fn holonomic_residual_examples() {
        let l = 0.3;
        let m = single(l);
        let on = SystemState::at_rest(0.0, coords_from_rows(&[[1.0, 1.0], [1.0 + l, 1.0]]));
        assert!(m.holonomic_residual(&on, 0).abs() < 1e-15);
        let stretched = SystemState::at_rest(0.0, coords_from_rows(&[[0.0, 0.0], [0.0, 2.0 * l]]));
        assert!((m.holonomic_residual(&stretched, 0) - 1.5 * l * l).abs() < 1e-15);
    }

    #[test]
    fn velocity_residual_examples() {
        let l = 0.5;
        let m = single(l);
        let q = coords_from_rows(&[[0.0, 0.0], [l, 0.0]]);
        assert_eq!(
            m.velocity_residual(&SystemState::at_rest(0.0, q.clone()), 0),
            0.0
        );

        let spinning =
            SystemState::new(0.0, q.clone(), coords_from_rows(&[[0.0, -0.7], [0.0, 1.3]]));
        assert_eq!(m.velocity_residual(&spinning, 0), 0.0);

        let alpha = 2.5;
        let separating =
            SystemState::new(0.0, q, coords_from_rows(&[[0.0, 0.0], [alpha * l, 0.0]]));
        assert!((m.velocity_residual(&separating, 0) - alpha * l * l).abs() < 1e-15);
    }

    #[test]
    fn assemble_single_edge() {
        let l = 0.25;
        let m = single(l);
        let s = m
            .assemble_state_from_edges(
                0.0,
                Vector2::zeros(),
                Vector2::zeros(),
                &coords_from_rows(&[[0.0, -l]]),
                &Coords::zeros(1),
            )
            .unwrap();
        assert_eq!(s.q.row(1), RowVector2::new(0.0, -l));
    }

    #[test]
    fn assemble_two_link_desired_configuration() {
        let m = two_link();
        let root = Vector2::new(0.4, -1.2);
        let qe = coords_from_rows(&[[-0.1, 0.0], [0.1, 0.0]]);
        let s = m
            .assemble_state_from_edges(0.0, root, Vector2::zeros(), &qe, &Coords::zeros(2))
            .unwrap();
        assert_eq!(s.q.row(1), RowVector2::new(0.4 - 0.1, -1.2));
        assert_eq!(s.q.row(2), RowVector2::new(0.4 + 0.1, -1.2));
        let es = m.edge_state(&s).unwrap();
        assert!((es.qe - qe).amax() <= 1e-12);
        m.validate_state(&s).unwrap();
    }

    #[test]
    fn assemble_rejects_constraint_violations() {
        let m = single(1.0);
        let err = m
            .assemble_state_from_edges(
                0.0,
                Vector2::zeros(),
                Vector2::zeros(),
                &coords_from_rows(&[[0.0, 1.1]]),
                &Coords::zeros(1),
            )
            .unwrap_err();
        assert!(matches!(
            err,
            ModelError::ConstraintViolation {
                kind: ConstraintKind::Length,
                ..
            }
        ));
        let err = m
            .assemble_state_from_edges(
                0.0,
                Vector2::zeros(),
                Vector2::zeros(),
                &coords_from_rows(&[[0.0, 1.0]]),
                &coords_from_rows(&[[0.0, 0.1]]),
            )
            .unwrap_err();
        assert!(matches!(
            err,
            ModelError::ConstraintViolation {
                kind: ConstraintKind::Velocity,
                ..
            }
        ));
    }

    #[test]
    fn energy_examples() {
        let g = Arborescence::new(1, vec![]).unwrap();
        let point = SarModel::new(g, vec![3.0], vec![], 9.81).unwrap();
        let rest = SystemState::at_rest(0.0, Coords::zeros(1));
        assert_eq!(point.energy(&rest), (0.0, 0.0));
        let moving = SystemState::new(
            0.0,
            coords_from_rows(&[[7.0, 2.0]]),
            coords_from_rows(&[[3.0, 4.0]]),
        );
        let (ke, pe) = point.energy(&moving);
        assert!((ke - 0.5 * 3.0 * 25.0).abs() < 1e-12);
        assert!((pe - 3.0 * 9.81 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_node_has_no_edge_quantities() {
        let g = Arborescence::new(1, vec![]).unwrap();
        let point = SarModel::new(g, vec![1.0], vec![], 9.81).unwrap();
        let s = SystemState::at_rest(0.0, Coords::zeros(1));
        let es = point.edge_state(&s).unwrap();
        assert_eq!(es.qe.nrows(), 0);
        point.validate_state(&s).unwrap();
        assert_eq!(point.edge_laplacian().shape(), (0, 0));
    }
}
