#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::Rng;
use sar_core::graph::{Arborescence, Edge};
use sar_core::model::{Coords, SarModel, SystemState};

/// Random recursive tree rooted at node 0 with shuffled labels and edge order.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Arborescence {
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
    Arborescence::new(n, edges).expect("random recursive tree is an arborescence")
}

pub fn random_model<R: Rng>(rng: &mut R, n: usize) -> SarModel {
    let graph = random_tree(rng, n);
    let masses = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
    let lengths = (1..n).map(|_| rng.random_range(0.2..2.0)).collect();
    SarModel::new(graph, masses, lengths, 9.81).expect("valid parameters")
}

pub fn random_coords<R: Rng>(rng: &mut R, rows: usize, scale: f64) -> Coords {
    Coords::from_fn(rows, |_, _| rng.random_range(-scale..scale))
}

/// Constraint-consistent state with random link angles and angular rates.
pub fn random_state<R: Rng>(rng: &mut R, model: &SarModel) -> SystemState {
    let m = model.edge_count();
    let mut qe = Coords::zeros(m);
    let mut qedot = Coords::zeros(m);
    for j in 0..m {
        let l = model.lengths()[j];
        let th: f64 = rng.random_range(-PI..PI);
        let w: f64 = rng.random_range(-3.0..3.0);
        qe[(j, 0)] = l * th.cos();
        qe[(j, 1)] = l * th.sin();
        qedot[(j, 0)] = -w * qe[(j, 1)];
        qedot[(j, 1)] = w * qe[(j, 0)];
    }
    let root = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let root_vel = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let t = rng.random_range(0.0..10.0);
    model
        .assemble_state_from_edges(t, root, root_vel, &qe, &qedot)
        .expect("consistent by construction")
}

/// Random edge inputs orthogonal to the current edges.
pub fn random_orthogonal_inputs<R: Rng>(rng: &mut R, qe: &Coords) -> Coords {
    let mut u = Coords::zeros(qe.nrows());
    for j in 0..qe.nrows() {
        let a: f64 = rng.random_range(-5.0..5.0);
        let r = qe.row(j);
        let n = r.norm();
        u[(j, 0)] = -a * r[1] / n;
        u[(j, 1)] = a * r[0] / n;
    }
    u
}

pub fn relative_error(a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>) -> f64 {
    let scale = b.amax();
    let diff = (a - b).amax();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
