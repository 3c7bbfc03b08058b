mod common;

use nalgebra::{DMatrix, Vector2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sar_core::control::{assemble_forces_structured, sweep_forces};
use sar_core::dynamics::{constraint_forces, edge_accelerations, evaluate, solve_lambda};
use sar_core::linalg::Cholesky;
use sar_core::model::Coords;
use sar_core::oracle::kkt_lambda;

use common::{
    random_coords, random_model, random_orthogonal_inputs, random_state, random_tree,
    relative_error,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_operator_identities(seed in any::<u64>(), n in 1usize..=50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_tree(&mut rng, n);
        let d = g.incidence_matrix();
        let h = g.left_inverse();
        prop_assert_eq!(h.entries() * d.entries(), DMatrix::<i64>::identity(n - 1, n - 1));
        for j in 0..n - 1 {
            prop_assert_eq!(d.entries().column(j).sum(), 0);
            let head = g.head_component(j).unwrap();
            let tail = g.tail_component(j).unwrap();
            prop_assert_eq!(head.len() + tail.len(), n);
            let mut all: Vec<usize> = head.iter().chain(&tail).cloned().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(head.contains(&g.edges()[j].head));
            prop_assert!(tail.contains(&g.edges()[j].tail));
        }
        if n > 1 {
            let sv = d.to_f64().svd(false, false).singular_values;
            prop_assert!(sv.min() > 1e-10);
        }
    }

    #[test]
    fn edge_laplacian_is_positive_definite(seed in any::<u64>(), n in 2usize..=50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n);
        prop_assert!(Cholesky::factor(model.edge_laplacian()).is_ok());
    }

    #[test]
    fn edge_state_round_trip(seed in any::<u64>(), n in 1usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n);
        let state = random_state(&mut rng, &model);
        let edges = model.edge_state(&state).unwrap();
        let root = model.graph().traversal_order()[0];
        let rebuilt = model
            .assemble_state_from_edges(
                state.time,
                state.q.row(root).transpose(),
                state.qdot.row(root).transpose(),
                &edges.qe,
                &edges.qedot,
            )
            .unwrap();
        prop_assert!((&rebuilt.q - &state.q).amax() <= 1e-12);
        prop_assert!((&rebuilt.qdot - &state.qdot).amax() <= 1e-12);
    }

    #[test]
    fn closed_form_multipliers_match_saddle_point_system(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n);
        let state = random_state(&mut rng, &model);
        let force = random_coords(&mut rng, n, 10.0);
        let closed = solve_lambda(&model, &state, &force).unwrap();
        let kkt = kkt_lambda(&model, &state, &force).unwrap();
        prop_assert!(relative_error(&closed, &kkt) <= 1e-8);
    }

    #[test]
    fn constraint_forces_agree_in_matrix_form(seed in any::<u64>(), n in 2usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n);
        let state = random_state(&mut rng, &model);
        let force = random_coords(&mut rng, n, 10.0);
        let eval = evaluate(&model, &state, &force).unwrap();
        let d = model.d();
        let matrix_form = d * DMatrix::from_diagonal(&eval.lambda) * d.transpose() * &state.q;
        let gamma = constraint_forces(&model, &state, &eval.lambda);
        prop_assert!((&gamma - matrix_form).amax() <= 1e-10);
        prop_assert!(gamma.row_sum().amax() <= 1e-10);
        let via_edges = edge_accelerations(&model, &state, &force).unwrap();
        prop_assert!((model.to_edges(&eval.qddot) - via_edges).amax() <= 1e-9);
    }

    #[test]
    fn follower_sweep_matches_structured_assembly(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n);
        let state = random_state(&mut rng, &model);
        let qe = model.to_edges(&state.q);
        let u = random_orthogonal_inputs(&mut rng, &qe);
        let leader = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let swept = sweep_forces(&model, leader, &u);
        let structured = assemble_forces_structured(&model, leader, &u, &qe).unwrap();
        prop_assert!((&swept - &structured).amax() <= 1e-10);
    }

    #[test]
    fn controller_forces_leave_multipliers_unchanged(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n);
        let state = random_state(&mut rng, &model);
        let qe = model.to_edges(&state.q);
        let u = random_orthogonal_inputs(&mut rng, &qe);
        let leader = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let forced = solve_lambda(&model, &state, &sweep_forces(&model, leader, &u)).unwrap();
        let free = solve_lambda(&model, &state, &Coords::zeros(n)).unwrap();
        prop_assert!(relative_error(&forced, &free) <= 1e-10);
    }
}
