//! Reference implementations that avoid the graph-operator formulation.
//!
//! * [`kkt_lambda`] solves the classical saddle-point system on the
//!   vectorized coordinates `q = (x₁, y₁, …, x_n, y_n)`.
//! * [`integrate_chain`] integrates a serial chain in minimal coordinates
//!   (root position plus one absolute angle per link), assembling the
//!   Euler–Lagrange equations from forward kinematics differentiated with
//!   hyper-dual numbers.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::model::{Coords, ModelError, SarModel, SystemState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("the minimal-coordinate oracle only handles serial chains")]
    NotAChain,
    #[error("singular system at t = {time}")]
    Singular { time: f64 },
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
}

/// Multipliers from the saddle-point system
///
/// ```text
/// [ M̂  Âᵀ ] [ q̈ ]   [ F̂ − M̂·Ĝ ]
/// [ Â   0 ] [ λ ] = [   −c    ]
/// ```
///
/// where row `j` of `Â` is the gradient of rod constraint `j` and
/// `c_j = ‖ṙ_head − ṙ_tail‖²`.
pub fn kkt_lambda(
    model: &SarModel,
    state: &SystemState,
    force: &Coords,
) -> Result<DVector<f64>, OracleError> {
    model.check_node_matrix("Q", &state.q)?;
    model.check_node_matrix("Q̇", &state.qdot)?;
    model.check_node_matrix("F", force)?;
    let n = model.node_count();
    let m = model.edge_count();
    let dim = 2 * n + m;
    let mut k = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        let mass = model.masses()[i];
        k[(2 * i, 2 * i)] = mass;
        k[(2 * i + 1, 2 * i + 1)] = mass;
        rhs[2 * i] = force[(i, 0)];
        rhs[2 * i + 1] = force[(i, 1)] - mass * model.gravity();
    }
    for (j, e) in model.graph().edges().iter().enumerate() {
        let row = 2 * n + j;
        let mut sep_sq = 0.0;
        for c in 0..2 {
            let d = state.q[(e.head, c)] - state.q[(e.tail, c)];
            let v = state.qdot[(e.head, c)] - state.qdot[(e.tail, c)];
            sep_sq += v * v;
            k[(row, 2 * e.head + c)] = d;
            k[(row, 2 * e.tail + c)] = -d;
            k[(2 * e.head + c, row)] = d;
            k[(2 * e.tail + c, row)] = -d;
        }
        rhs[row] = -sep_sq;
    }
    let sol = k
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or(OracleError::Singular { time: state.time })?;
    Ok(sol.rows(2 * n, m).into_owned())
}

/// `a + b·ε₁ + c·ε₂ + d·ε₁ε₂` with `ε₁² = ε₂² = 0`. Seeding both
/// infinitesimal parts with a direction `v` yields the first directional
/// derivative in `b` and the second in `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperDual {
    pub re: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub fn constant(re: f64) -> Self {
        Self {
            re,
            e1: 0.0,
            e2: 0.0,
            e12: 0.0,
        }
    }

    pub fn new(re: f64, e1: f64, e2: f64) -> Self {
        Self {
            re,
            e1,
            e2,
            e12: 0.0,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        Self {
            re: s,
            e1: self.e1 * c,
            e2: self.e2 * c,
            e12: self.e12 * c - self.e1 * self.e2 * s,
        }
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        Self {
            re: c,
            e1: -self.e1 * s,
            e2: -self.e2 * s,
            e12: -self.e12 * s - self.e1 * self.e2 * c,
        }
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            re: self.re * k,
            e1: self.e1 * k,
            e2: self.e2 * k,
            e12: self.e12 * k,
        }
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            re: self.re + o.re,
            e1: self.e1 + o.e1,
            e2: self.e2 + o.e2,
            e12: self.e12 + o.e12,
        }
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for HyperDual {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re,
            e1: self.re * o.e1 + self.e1 * o.re,
            e2: self.re * o.e2 + self.e2 * o.re,
            e12: self.re * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.re,
        }
    }
}

/// Minimal coordinates of a chain: `q = (x_root, y_root, θ_1, …, θ_{n−1})`
/// with `θ_j` the absolute angle of edge `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub time: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

/// Serial-chain model in minimal coordinates.
#[derive(Debug, Clone)]
pub struct ChainOracle {
    masses: Vec<f64>,
    lengths: Vec<f64>,
    gravity: f64,
    /// `(edge, tail, head)` in root-to-tip order.
    links: Vec<(usize, usize, usize)>,
    root: usize,
}

impl ChainOracle {
    pub fn new(model: &SarModel) -> Result<Self, OracleError> {
        let graph = model.graph();
        if !graph.is_chain() {
            return Err(OracleError::NotAChain);
        }
        let order = graph.traversal_order();
        let links = order[1..]
            .iter()
            .map(|&v| {
                let j = graph.parent_edge(v).expect("non-root");
                (j, graph.edges()[j].tail, v)
            })
            .collect();
        Ok(Self {
            masses: model.masses().to_vec(),
            lengths: model.lengths().to_vec(),
            gravity: model.gravity(),
            links,
            root: order[0],
        })
    }

    pub fn dof(&self) -> usize {
        2 + self.links.len()
    }

    /// Minimal coordinates of a node-coordinate state (which must satisfy the
    /// rod constraints).
    pub fn from_node_state(&self, state: &SystemState) -> ChainState {
        let mut q = DVector::zeros(self.dof());
        let mut qdot = DVector::zeros(self.dof());
        for c in 0..2 {
            q[c] = state.q[(self.root, c)];
            qdot[c] = state.qdot[(self.root, c)];
        }
        for &(j, tail, head) in &self.links {
            let r = state.q.row(head) - state.q.row(tail);
            let v = state.qdot.row(head) - state.qdot.row(tail);
            q[2 + j] = r[1].atan2(r[0]);
            qdot[2 + j] = (r[0] * v[1] - r[1] * v[0]) / r.norm_squared();
        }
        ChainState {
            time: state.time,
            q,
            qdot,
        }
    }

    /// Forward kinematics on hyper-dual coordinates.
    fn positions(&self, q: &[HyperDual]) -> Vec<[HyperDual; 2]> {
        let n = self.masses.len();
        let mut pos = vec![[HyperDual::constant(0.0); 2]; n];
        pos[self.root] = [q[0], q[1]];
        for &(j, tail, head) in &self.links {
            let th = q[2 + j];
            let l = self.lengths[j];
            pos[head] = [
                pos[tail][0] + th.cos().scale(l),
                pos[tail][1] + th.sin().scale(l),
            ];
        }
        pos
    }

    fn seeded(
        &self,
        q: &DVector<f64>,
        d1: &DVector<f64>,
        d2: &DVector<f64>,
    ) -> Vec<[HyperDual; 2]> {
        let args: Vec<HyperDual> = (0..self.dof())
            .map(|k| HyperDual::new(q[k], d1[k], d2[k]))
            .collect();
        self.positions(&args)
    }

    /// Node positions and velocities.
    pub fn node_state(&self, s: &ChainState) -> (Coords, Coords) {
        let p = self.seeded(&s.q, &s.qdot, &DVector::zeros(self.dof()));
        let n = p.len();
        (
            Coords::from_fn(n, |i, c| p[i][c].re),
            Coords::from_fn(n, |i, c| p[i][c].e1),
        )
    }

    /// `q̈` from `M(q)·q̈ = Σ_i J_iᵀ·(f_i − m_i·g·e₂ − m_i·J̇_i·q̇)`.
    pub fn accelerations(
        &self,
        s: &ChainState,
        force: &Coords,
    ) -> Result<DVector<f64>, OracleError> {
        let dof = self.dof();
        let n = self.masses.len();
        let zero = DVector::zeros(dof);
        // columns of every J_i
        let mut jac = vec![DMatrix::zeros(2, dof); n];
        for k in 0..dof {
            let mut dir = DVector::zeros(dof);
            dir[k] = 1.0;
            let p = self.seeded(&s.q, &dir, &zero);
            for i in 0..n {
                jac[i][(0, k)] = p[i][0].e1;
                jac[i][(1, k)] = p[i][1].e1;
            }
        }
        let curv = self.seeded(&s.q, &s.qdot, &s.qdot);

        let mut mass = DMatrix::zeros(dof, dof);
        let mut rhs = DVector::zeros(dof);
        for i in 0..n {
            let m = self.masses[i];
            let ji = &jac[i];
            mass += ji.transpose() * ji * m;
            let bias = Vector2::new(curv[i][0].e12, curv[i][1].e12) * m;
            let f = Vector2::new(force[(i, 0)], force[(i, 1)] - m * self.gravity) - bias;
            rhs += ji.transpose() * DVector::from_column_slice(f.as_slice());
        }
        mass.cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or(OracleError::Singular { time: s.time })
    }
}

/// One sample of a minimal-coordinate run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample {
    pub time: f64,
    pub positions: Coords,
    pub velocities: Coords,
}

/// Node forces as a function of time, node positions and node velocities.
pub type NodeForceFn<'a> = dyn Fn(f64, &Coords, &Coords) -> Coords + 'a;

/// Fixed-step RK4 in minimal coordinates, starting from a constraint-
/// satisfying node state. Returns node positions at every step.
pub fn integrate_chain(
    model: &SarModel,
    initial: &SystemState,
    force: &NodeForceFn<'_>,
    t_end: f64,
    dt: f64,
) -> Result<Vec<ChainSample>, OracleError> {
    if !(dt > 0.0 && dt.is_finite() && t_end >= 0.0 && t_end.is_finite()) {
        return Err(OracleError::InvalidSettings(format!(
            "need dt > 0 and t_end ≥ 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    model.validate_state(initial)?;
    let oracle = ChainOracle::new(model)?;
    let steps = (t_end / dt).round() as usize;
    let t0 = initial.time;

    let deriv = |s: &ChainState| -> Result<DVector<f64>, OracleError> {
        let (p, v) = oracle.node_state(s);
        let f = force(s.time, &p, &v);
        oracle.accelerations(s, &f)
    };
    let record = |s: &ChainState| {
        let (positions, velocities) = oracle.node_state(s);
        ChainSample {
            time: s.time,
            positions,
            velocities,
        }
    };

    let mut s = oracle.from_node_state(initial);
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        out.push(record(&s));
        let at = |h: f64, dq: &DVector<f64>, dv: &DVector<f64>| ChainState {
            time: s.time + h,
            q: &s.q + dq * h,
            qdot: &s.qdot + dv * h,
        };
        let a1 = deriv(&s)?;
        let v1 = s.qdot.clone();
        let s2 = at(0.5 * dt, &v1, &a1);
        let a2 = deriv(&s2)?;
        let s3 = at(0.5 * dt, &s2.qdot, &a2);
        let a3 = deriv(&s3)?;
        let s4 = at(dt, &s3.qdot, &a3);
        let a4 = deriv(&s4)?;
        let sixth = dt / 6.0;
        let q = &s.q + (&v1 + (&s2.qdot + &s3.qdot) * 2.0 + &s4.qdot) * sixth;
        let qdot = &s.qdot + (a1 + (a2 + a3) * 2.0 + a4) * sixth;
        s = ChainState {
            time: t0 + (k + 1) as f64 * dt,
            q,
            qdot,
        };
    }
    out.push(record(&s));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::solve_lambda;
    use crate::graph::Arborescence;
    use crate::model::coords_from_rows;

    #[test]
    fn hyper_dual_second_derivative() {
        // f(x) = sin(x)·cos(x), f'' = −4·sin(x)·cos(x)
        let x = 0.7;
        let h = HyperDual::new(x, 1.0, 1.0);
        let f = h.sin() * h.cos();
        assert!((f.e1 - (2.0 * x).cos()).abs() < 1e-15);
        assert!((f.e12 + 4.0 * x.sin() * x.cos()).abs() < 1e-14);
    }

    #[test]
    fn kkt_matches_closed_form_at_rest_and_spinning() {
        let g = Arborescence::from_one_based(2, &[(1, 2)]).unwrap();
        let (ma, mb, l, w) = (1.0, 2.0, 1.5, 3.0);
        let m = SarModel::new(g, vec![ma, mb], vec![l], 9.81).unwrap();
        let xa = -mb / (ma + mb) * l;
        let xb = ma / (ma + mb) * l;
        let rest = SystemState::at_rest(0.0, coords_from_rows(&[[xa, 0.0], [xb, 0.0]]));
        let lambda = kkt_lambda(&m, &rest, &Coords::zeros(2)).unwrap();
        assert!(lambda.amax() < 1e-14);

        let spin = SystemState::new(
            0.0,
            rest.q.clone(),
            coords_from_rows(&[[0.0, w * xa], [0.0, w * xb]]),
        );
        let mu = 1.0 / (1.0 / ma + 1.0 / mb);
        let lambda = kkt_lambda(&m, &spin, &Coords::zeros(2)).unwrap();
        assert!((lambda[0] - mu * w * w).abs() < 1e-12 * mu * w * w);
        let closed = solve_lambda(&m, &spin, &Coords::zeros(2)).unwrap();
        assert!((lambda - closed).amax() < 1e-12);
    }

    #[test]
    fn kkt_reports_singular_systems() {
        let g = Arborescence::from_one_based(2, &[(1, 2)]).unwrap();
        let m = SarModel::new(g, vec![1.0, 1.0], vec![1.0], 9.81).unwrap();
        let collapsed = SystemState::at_rest(1.5, Coords::zeros(2));
        assert_eq!(
            kkt_lambda(&m, &collapsed, &Coords::zeros(2)).unwrap_err(),
            OracleError::Singular { time: 1.5 }
        );
    }

    #[test]
    fn root_only_chain_is_ballistic() {
        let g = Arborescence::new(1, vec![]).unwrap();
        let m = SarModel::new(g, vec![2.0], vec![], 9.81).unwrap();
        let s = SystemState::new(
            0.0,
            coords_from_rows(&[[0.0, 1.0]]),
            coords_from_rows(&[[2.0, 3.0]]),
        );
        let zero = |_t: f64, p: &Coords, _v: &Coords| Coords::zeros(p.nrows());
        let out = integrate_chain(&m, &s, &zero, 1.0, 1e-2).unwrap();
        let last = out.last().unwrap();
        assert!((last.time - 1.0).abs() < 1e-12);
        assert!((last.positions[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((last.positions[(0, 1)] - (1.0 + 3.0 - 9.81 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn trees_are_rejected() {
        let g = Arborescence::from_one_based(3, &[(1, 2), (1, 3)]).unwrap();
        let m = SarModel::new(g, vec![1.0; 3], vec![1.0; 2], 9.81).unwrap();
        assert_eq!(ChainOracle::new(&m).unwrap_err(), OracleError::NotAChain);
    }

    #[test]
    fn minimal_coordinates_round_trip() {
        let g = Arborescence::from_one_based(3, &[(1, 2), (2, 3)]).unwrap();
        let m = SarModel::new(g, vec![1.0, 0.5, 0.8], vec![0.5, 0.4], 9.81).unwrap();
        let qe = coords_from_rows(&[[0.3, 0.4], [0.0, -0.4]]);
        let qedot = coords_from_rows(&[[-0.8, 0.6], [1.0, 0.0]]);
        let s = m
            .assemble_state_from_edges(
                0.0,
                Vector2::new(1.0, 2.0),
                Vector2::new(-0.5, 0.25),
                &qe,
                &qedot,
            )
            .unwrap();
        let oracle = ChainOracle::new(&m).unwrap();
        let (p, v) = oracle.node_state(&oracle.from_node_state(&s));
        assert!((p - &s.q).amax() < 1e-15);
        assert!((v - &s.qdot).amax() < 1e-15);
    }
}
