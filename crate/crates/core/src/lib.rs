//! Dynamics and decentralized control of planar single articulated robots
//! whose joint structure is an arborescence.
//!
//! Nodes are point masses, edges are massless rigid rods directed away from
//! the root. Constraint forces are obtained in closed form from a linear
//! system on the edges, and the leader-follower controller assigns node
//! forces from purely local information.

// Negated comparisons are deliberate: NaN must fail every tolerance check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod dynamics;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod scenarios;

pub use control::{ClosedLoop, ControllerConfig, EdgeSetpoint};
pub use dynamics::{integrate, DynamicsError, ForceLaw, IntegratorSettings, SimTrace};
pub use graph::{Arborescence, Edge, GraphError};
pub use model::{Coords, ModelError, SarModel, SystemState};
pub use scenarios::{Scenario, ScenarioSpec};
