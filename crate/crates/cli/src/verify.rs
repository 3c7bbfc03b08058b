//! Self-check suites runnable from the command line.

use nalgebra::{DMatrix, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sar_core::analysis::diagnose_trace;
use sar_core::control::{assemble_forces_structured, sweep_forces, ClosedLoop};
use sar_core::dynamics::{
    constraint_acceleration_residuals, edge_accelerations_with, evaluate, integrate, solve_lambda,
    IntegratorSettings, ZeroForce,
};
use sar_core::graph::{Arborescence, Edge};
use sar_core::linalg::Cholesky;
use sar_core::model::{Coords, SarModel, SystemState};
use sar_core::oracle::{integrate_chain, kkt_lambda};
use sar_core::scenarios::{dumbbell_scenario, two_link_scenario, DUMBBELL_DEFAULTS};

pub const SUITES: &[&str] = &["graph", "dynamics", "control", "oracle", "all"];

const SEED: u64 = 0x5a12_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured <= self.threshold
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}/{}: {:.3e} (threshold {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.threshold
        )
    }
}

/// Runs a named suite; `None` for an unknown name.
pub fn run_suite(name: &str) -> Option<Vec<Check>> {
    Some(match name {
        "graph" => graph_checks(),
        "dynamics" => dynamics_checks(),
        "control" => control_checks(),
        "oracle" => oracle_checks(),
        "all" => [
            graph_checks(),
            dynamics_checks(),
            control_checks(),
            oracle_checks(),
        ]
        .concat(),
        _ => return None,
    })
}

fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Arborescence {
    let mut labels: Vec<usize> = (1..n).collect();
    labels.shuffle(rng);
    labels.insert(0, 0);
    let mut edges: Vec<Edge> = (1..n)
        .map(|v| Edge {
            tail: labels[rng.random_range(0..v)],
            head: labels[v],
        })
        .collect();
    edges.shuffle(rng);
    Arborescence::new(n, edges).expect("random recursive tree")
}

fn random_model(rng: &mut ChaCha8Rng, n: usize) -> SarModel {
    let graph = random_tree(rng, n);
    let masses = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
    let lengths = (1..n).map(|_| rng.random_range(0.2..2.0)).collect();
    SarModel::new(graph, masses, lengths, 9.81).expect("valid parameters")
}

fn random_state(rng: &mut ChaCha8Rng, model: &SarModel) -> SystemState {
    let m = model.edge_count();
    let mut qe = Coords::zeros(m);
    let mut qedot = Coords::zeros(m);
    for j in 0..m {
        let l = model.lengths()[j];
        let th: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let w: f64 = rng.random_range(-3.0..3.0);
        qe[(j, 0)] = l * th.cos();
        qe[(j, 1)] = l * th.sin();
        qedot[(j, 0)] = -w * qe[(j, 1)];
        qedot[(j, 1)] = w * qe[(j, 0)];
    }
    let root = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let vel = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    model
        .assemble_state_from_edges(0.0, root, vel, &qe, &qedot)
        .expect("consistent by construction")
}

fn random_force(rng: &mut ChaCha8Rng, n: usize) -> Coords {
    Coords::from_fn(n, |_, _| rng.random_range(-10.0..10.0))
}

fn orthogonal_inputs(rng: &mut ChaCha8Rng, qe: &Coords) -> Coords {
    let mut u = Coords::zeros(qe.nrows());
    for j in 0..qe.nrows() {
        let a: f64 = rng.random_range(-5.0..5.0);
        let norm = qe.row(j).norm();
        u[(j, 0)] = -a * qe[(j, 1)] / norm;
        u[(j, 1)] = a * qe[(j, 0)] / norm;
    }
    u
}

fn mismatches(a: &DMatrix<i64>, b: &DMatrix<i64>) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).filter(|(x, y)| x != y).count() as f64
}

fn graph_checks() -> Vec<Check> {
    let g = Arborescence::from_one_based(6, &[(1, 2), (1, 3), (1, 4), (4, 5), (4, 6)]).unwrap();
    #[rustfmt::skip]
    let d_expected = DMatrix::from_row_slice(6, 5, &[
        -1, -1, -1, 0, 0,
         1,  0,  0, 0, 0,
         0,  1,  0, 0, 0,
         0,  0,  1, -1, -1,
         0,  0,  0, 1, 0,
         0,  0,  0, 0, 1,
    ]);
    #[rustfmt::skip]
    let h_expected = DMatrix::from_row_slice(5, 6, &[
        0, 1, 0, 0, 0, 0,
        0, 0, 1, 0, 0, 0,
        0, 0, 0, 1, 1, 1,
        0, 0, 0, 0, 1, 0,
        0, 0, 0, 0, 0, 1,
    ]);
    let d = g.incidence_matrix();
    let h = g.left_inverse();

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut bad_identity = 0.0;
    let mut bad_column_sums = 0.0;
    let mut not_spd = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=30);
        let model = random_model(&mut rng, n);
        let d = model.incidence();
        let hd = model.left_inverse().entries() * d.entries();
        bad_identity += mismatches(&hd, &DMatrix::identity(n - 1, n - 1));
        bad_column_sums += d.entries().row_sum().iter().filter(|s| **s != 0).count() as f64;
        if Cholesky::factor(model.edge_laplacian()).is_err() {
            not_spd += 1.0;
        }
    }

    let check = |name, measured| Check {
        suite: "graph",
        name,
        measured,
        threshold: 0.0,
    };
    vec![
        check(
            "five_link_incidence_mismatches",
            mismatches(d.entries(), &d_expected),
        ),
        check(
            "five_link_left_inverse_mismatches",
            mismatches(h.entries(), &h_expected),
        ),
        check(
            "five_link_hd_identity_mismatches",
            mismatches(&(h.entries() * d.entries()), &DMatrix::identity(5, 5)),
        ),
        check("random_trees_hd_identity_mismatches", bad_identity),
        check(
            "random_trees_nonzero_incidence_column_sums",
            bad_column_sums,
        ),
        check("random_trees_edge_laplacian_not_spd", not_spd),
    ]
}

fn dynamics_checks() -> Vec<Check> {
    let (ma, mb, l, w) = DUMBBELL_DEFAULTS;
    let dumbbell = dumbbell_scenario(ma, mb, l, w).expect("valid built-in");
    let lambda = solve_lambda(
        dumbbell.model(),
        dumbbell.initial_state(),
        &Coords::zeros(2),
    )
    .unwrap();
    let expected = ma * mb / (ma + mb) * w * w;
    let dumbbell_err = (lambda[0] - expected).abs() / expected;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let (mut gamma, mut accel, mut edge_form) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let model = random_model(&mut rng, n);
        let state = random_state(&mut rng, &model);
        let force = random_force(&mut rng, n);
        let eval = evaluate(&model, &state, &force).unwrap();
        gamma = gamma.max(eval.gamma.row_sum().amax());
        accel = accel.max(constraint_acceleration_residuals(&model, &state, &eval.qddot).amax());
        let edges = model.edge_state(&state).unwrap();
        let predicted = edge_accelerations_with(&model, &edges, &eval.lambda, &force);
        edge_form = edge_form.max((model.to_edges(&eval.qddot) - predicted).amax());
    }

    let trace = dumbbell.run().unwrap();
    let model = dumbbell.model();
    let (k0, p0) = model.energy(&trace.samples[0].state);
    let energy = trace
        .samples
        .iter()
        .map(|s| {
            let (k, p) = model.energy(&s.state);
            ((k + p) - (k0 + p0)).abs() / (k0 + p0).abs()
        })
        .fold(0.0, f64::max);
    let mom0 = model.linear_momentum(&trace.samples[0].state);
    let momentum = trace
        .samples
        .iter()
        .map(|s| {
            let p = model.linear_momentum(&s.state);
            let fall = -model.gravity() * s.state.time * model.total_mass();
            (p[0] - mom0[0]).abs().max((p[1] - mom0[1] - fall).abs())
        })
        .fold(0.0, f64::max);

    let check = |name, measured, threshold| Check {
        suite: "dynamics",
        name,
        measured,
        threshold,
    };
    vec![
        check("dumbbell_multiplier_relative_error", dumbbell_err, 1e-10),
        check("constraint_force_sum", gamma, 1e-10),
        check("constraint_acceleration_residual", accel, 1e-8),
        check("node_vs_edge_acceleration", edge_form, 1e-9),
        check("dumbbell_energy_drift", energy, 1e-5),
        check("dumbbell_momentum_error", momentum, 1e-8),
    ]
}

fn control_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let (mut assembly, mut leader, mut independence) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let model = random_model(&mut rng, n);
        let state = random_state(&mut rng, &model);
        let qe = model.to_edges(&state.q);
        let u = orthogonal_inputs(&mut rng, &qe);
        let fl = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let swept = sweep_forces(&model, fl, &u);
        let structured = assemble_forces_structured(&model, fl, &u, &qe).unwrap();
        assembly = assembly.max((&swept - &structured).amax());
        let root = model.graph().traversal_order()[0];
        let expected = fl + Vector2::new(0.0, model.masses()[root] * model.gravity());
        leader = leader.max((swept.row(root).transpose() - expected).amax());
        let forced = solve_lambda(&model, &state, &swept).unwrap();
        let free = solve_lambda(&model, &state, &Coords::zeros(n)).unwrap();
        independence = independence.max((&forced - &free).amax() / free.amax().max(1.0));
    }

    let scenario = two_link_scenario();
    let trace = scenario.run().unwrap();
    let model = scenario.model();
    let controller = ClosedLoop::new(
        scenario.controller().unwrap().clone(),
        scenario.setpoint().unwrap(),
    );
    let mut orthogonality = 0.0f64;
    for s in &trace.samples {
        let u = controller.inputs(model, &s.state).unwrap();
        let qe = model.to_edges(&s.state.q);
        for j in 0..model.edge_count() {
            orthogonality = orthogonality.max(u.row(j).dot(&qe.row(j)).abs());
        }
    }
    let sp = scenario.setpoint().unwrap();
    let tracking = diagnose_trace(model, &trace, Some(sp.as_ref()))
        .iter()
        .filter(|r| r.t >= 5.0)
        .flat_map(|r| r.ec_norms.clone())
        .fold(0.0, f64::max);

    let check = |name, measured, threshold| Check {
        suite: "control",
        name,
        measured,
        threshold,
    };
    vec![
        check("sweep_vs_structured_assembly", assembly, 1e-10),
        check("leader_row", leader, 0.0),
        check("multiplier_independence", independence, 1e-10),
        check("two_link_input_orthogonality", orthogonality, 1e-10),
        check("two_link_tracking_error_after_5s", tracking, 1e-2),
    ]
}

fn oracle_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut kkt = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=8);
        let model = random_model(&mut rng, n);
        let state = random_state(&mut rng, &model);
        let force = random_force(&mut rng, n);
        let closed = solve_lambda(&model, &state, &force).unwrap();
        let reference = kkt_lambda(&model, &state, &force).unwrap();
        kkt = kkt.max((&closed - &reference).amax() / reference.amax().max(f64::MIN_POSITIVE));
    }

    let g = Arborescence::from_one_based(3, &[(1, 2), (2, 3)]).unwrap();
    let model = SarModel::new(g, vec![1.0, 0.5, 0.8], vec![0.5, 0.4], 9.81).unwrap();
    let initial = random_state(&mut rng, &model);
    let (t_end, dt) = (2.0, 1e-3);
    let graph_run = integrate(
        &model,
        &initial,
        &ZeroForce,
        &IntegratorSettings::new(dt, t_end),
    )
    .unwrap();
    let zero = |_t: f64, p: &Coords, _v: &Coords| Coords::zeros(p.nrows());
    let chain_run = integrate_chain(&model, &initial, &zero, t_end, dt).unwrap();
    let trajectory = if graph_run.len() == chain_run.len() {
        graph_run
            .samples
            .iter()
            .zip(&chain_run)
            .map(|(a, b)| (&a.state.q - &b.positions).amax())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    vec![
        Check {
            suite: "oracle",
            name: "closed_form_vs_kkt_multipliers",
            measured: kkt,
            threshold: 1e-8,
        },
        Check {
            suite: "oracle",
            name: "chain_vs_minimal_coordinates",
            measured: trajectory,
            threshold: 1e-5,
        },
    ]
}
