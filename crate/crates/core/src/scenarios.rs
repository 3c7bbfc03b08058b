//! Ready-to-run scenarios.
//!
//! A [`ScenarioSpec`] is the serializable description (the configuration file
//! format uses the same structure); [`Scenario`] is its validated, runnable
//! form. Built-in scenarios are constructed as specs and go through the same
//! build path as user configurations, so an exported built-in reproduces the
//! built-in run exactly.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    ClosedLoop, ConstantSetpoint, ControlError, ControllerConfig, EdgeSetpoint, EdgeTarget,
    LeaderForce, Sinusoid, SwingAngle, SwingSetpoint,
};
use crate::dynamics::{
    integrate, DynamicsError, ForceLaw, IntegratorSettings, SimTrace, ZeroForce,
};
use crate::graph::{Arborescence, GraphError};
use crate::model::{coords_from_rows, Coords, ModelError, SarModel, SystemState, DEFAULT_GRAVITY};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &["two_link", "five_link", "dumbbell"];

/// Admissible mismatch between a desired edge length and its rod (m).
pub const SETPOINT_LENGTH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("controller: {0}")]
    Control(#[from] ControlError),
    #[error("setpoint: {0}")]
    Setpoint(String),
    #[error("initial condition: {0}")]
    Initial(String),
    #[error("a controller needs a [setpoint] section")]
    MissingSetpoint,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

fn default_record_every() -> usize {
    1
}

fn is_false(v: &bool) -> bool {
    !*v
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// One-based `[tail, head]` pairs; the order defines the edge indices.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub masses: Vec<f64>,
    /// Rod lengths aligned with the edge list.
    pub lengths: Vec<f64>,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetpointSpec {
    /// Constant desired edge vectors.
    Constant { rows: Vec<[f64; 2]> },
    /// Five-edge flapping pattern driven by `θ(t) = a·cos(ω·t) + c`: the two
    /// lower edges swing downwards, the middle edge points up and the two
    /// upper edges swing upwards.
    FiveLinkFlap {
        amplitude: f64,
        omega: f64,
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub duration: f64,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub projection: bool,
    #[serde(default = "default_record_every", skip_serializing_if = "is_one")]
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub root_position: [f64; 2],
    #[serde(default)]
    pub root_velocity: [f64; 2],
    /// Direction of every edge; normalized and scaled by the rod length.
    pub directions: Vec<[f64; 2]>,
    /// Counter-clockwise angular rate of every edge (rad/s); zero if omitted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edge_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub graph: GraphSpec,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint: Option<SetpointSpec>,
    pub sim: SimSpec,
    pub initial: InitialSpec,
}

/// A validated scenario ready to integrate.
pub struct Scenario {
    spec: ScenarioSpec,
    model: SarModel,
    initial_state: SystemState,
    settings: IntegratorSettings,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("spec", &self.spec)
            .finish()
    }
}

impl Scenario {
    pub fn from_spec(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        let edges: Vec<(usize, usize)> = spec.graph.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = Arborescence::from_one_based(spec.model.masses.len(), &edges)?;
        let model = SarModel::new(
            graph,
            spec.model.masses.clone(),
            spec.model.lengths.clone(),
            spec.model.gravity,
        )?;
        let initial_state = initial_state(&model, &spec.initial)?;

        if let Some(cfg) = &spec.controller {
            cfg.validate(model.edge_count())?;
            if spec.setpoint.is_none() {
                return Err(ScenarioError::MissingSetpoint);
            }
        }
        if let Some(sp) = &spec.setpoint {
            let setpoint = build_setpoint(sp, &model)?;
            check_setpoint(setpoint.as_ref(), &model)?;
        }

        let settings = IntegratorSettings {
            dt: spec.sim.dt,
            duration: spec.sim.duration,
            project: spec.sim.projection,
            record_every: spec.sim.record_every,
        };
        if !(settings.dt > 0.0 && settings.dt.is_finite()) {
            return Err(ScenarioError::Initial(format!(
                "dt must be positive, got {}",
                settings.dt
            )));
        }
        if !(settings.duration >= 0.0 && settings.duration.is_finite()) {
            return Err(ScenarioError::Initial(format!(
                "duration must be non-negative, got {}",
                settings.duration
            )));
        }
        if settings.record_every == 0 {
            return Err(ScenarioError::Initial(
                "record_every must be at least 1".into(),
            ));
        }
        Ok(Self {
            spec,
            model,
            initial_state,
            settings,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn model(&self) -> &SarModel {
        &self.model
    }

    pub fn initial_state(&self) -> &SystemState {
        &self.initial_state
    }

    pub fn settings(&self) -> &IntegratorSettings {
        &self.settings
    }

    pub fn settings_mut(&mut self) -> &mut IntegratorSettings {
        &mut self.settings
    }

    pub fn controller(&self) -> Option<&ControllerConfig> {
        self.spec.controller.as_ref()
    }

    /// The desired edge trajectory, if the scenario has one.
    pub fn setpoint(&self) -> Option<Box<dyn EdgeSetpoint>> {
        self.spec
            .setpoint
            .as_ref()
            .map(|sp| build_setpoint(sp, &self.model).expect("validated at construction"))
    }

    /// The closed-loop controller, or zero forces without one.
    pub fn force_law(&self) -> Box<dyn ForceLaw> {
        match (&self.spec.controller, self.setpoint()) {
            (Some(cfg), Some(sp)) => Box::new(ClosedLoop::new(cfg.clone(), sp)),
            _ => Box::new(ZeroForce),
        }
    }

    pub fn run(&self) -> Result<SimTrace, DynamicsError> {
        integrate(
            &self.model,
            &self.initial_state,
            self.force_law().as_ref(),
            &self.settings,
        )
    }
}

fn initial_state(model: &SarModel, init: &InitialSpec) -> Result<SystemState, ScenarioError> {
    let m = model.edge_count();
    if init.directions.len() != m {
        return Err(ScenarioError::Initial(format!(
            "expected {m} edge directions, found {}",
            init.directions.len()
        )));
    }
    if !init.edge_rates.is_empty() && init.edge_rates.len() != m {
        return Err(ScenarioError::Initial(format!(
            "expected {m} edge rates, found {}",
            init.edge_rates.len()
        )));
    }
    let mut qe = Coords::zeros(m);
    let mut qedot = Coords::zeros(m);
    for j in 0..m {
        let dir = Vector2::from(init.directions[j]);
        let norm = dir.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(ScenarioError::Initial(format!(
                "direction of edge {} must be a nonzero finite vector",
                j + 1
            )));
        }
        let r = dir * (model.lengths()[j] / norm);
        let rate = init.edge_rates.get(j).copied().unwrap_or(0.0);
        qe.set_row(j, &r.transpose());
        qedot.set_row(j, &(Vector2::new(-r.y, r.x) * rate).transpose());
    }
    Ok(model.assemble_state_from_edges(
        0.0,
        Vector2::from(init.root_position),
        Vector2::from(init.root_velocity),
        &qe,
        &qedot,
    )?)
}

fn build_setpoint(
    spec: &SetpointSpec,
    model: &SarModel,
) -> Result<Box<dyn EdgeSetpoint>, ScenarioError> {
    let m = model.edge_count();
    match spec {
        SetpointSpec::Constant { rows } => {
            if rows.len() != m {
                return Err(ScenarioError::Setpoint(format!(
                    "expected {m} rows, found {}",
                    rows.len()
                )));
            }
            Ok(Box::new(ConstantSetpoint(coords_from_rows(rows))))
        }
        SetpointSpec::FiveLinkFlap {
            amplitude,
            omega,
            offset,
        } => {
            if m != 5 {
                return Err(ScenarioError::Setpoint(format!(
                    "five_link_flap needs exactly 5 edges, the graph has {m}"
                )));
            }
            let l = model.lengths();
            Ok(Box::new(SwingSetpoint {
                angle: SwingAngle {
                    amplitude: *amplitude,
                    omega: *omega,
                    offset: *offset,
                },
                lengths: l.to_vec(),
                targets: vec![
                    EdgeTarget::Swing { sx: -1.0, sy: -1.0 },
                    EdgeTarget::Swing { sx: 1.0, sy: -1.0 },
                    EdgeTarget::Fixed(Vector2::new(0.0, l[2])),
                    EdgeTarget::Swing { sx: -1.0, sy: 1.0 },
                    EdgeTarget::Swing { sx: 1.0, sy: 1.0 },
                ],
            }))
        }
    }
}

fn check_setpoint(setpoint: &dyn EdgeSetpoint, model: &SarModel) -> Result<(), ScenarioError> {
    let sample = setpoint.sample(0.0);
    for (j, l) in model.lengths().iter().enumerate() {
        let norm = sample.position.row(j).norm();
        if !((norm - l).abs() <= SETPOINT_LENGTH_TOL) {
            return Err(ScenarioError::Setpoint(format!(
                "desired edge {} has length {norm}, rod length is {l}",
                j + 1
            )));
        }
    }
    Ok(())
}

/// Two followers hanging off the leader, regulated to a horizontal pose.
pub fn two_link_spec() -> ScenarioSpec {
    let (l1, l2) = (0.1, 0.1);
    ScenarioSpec {
        name: "two_link".into(),
        graph: GraphSpec {
            edges: vec![[1, 2], [1, 3]],
        },
        model: ModelSpec {
            masses: vec![0.7, 0.2, 0.2],
            lengths: vec![l1, l2],
            gravity: DEFAULT_GRAVITY,
        },
        controller: Some(ControllerConfig::new(
            10.0,
            10.0,
            LeaderForce {
                x: Sinusoid::default(),
                y: Sinusoid::new(0.5, PI, 0.0),
            },
            false,
        )),
        setpoint: Some(SetpointSpec::Constant {
            rows: vec![[-l1, 0.0], [l2, 0.0]],
        }),
        sim: SimSpec {
            duration: 10.0,
            dt: 1e-3,
            projection: false,
            record_every: 1,
        },
        initial: InitialSpec {
            root_position: [0.0, 0.0],
            root_velocity: [0.0, 0.0],
            directions: vec![[0.0, -1.0], [0.0, -1.0]],
            edge_rates: vec![],
        },
    }
}

/// Five links flapping with feedforward of the desired acceleration.
pub fn five_link_spec() -> ScenarioSpec {
    ScenarioSpec {
        name: "five_link".into(),
        graph: GraphSpec {
            edges: vec![[1, 2], [1, 3], [1, 4], [4, 5], [4, 6]],
        },
        model: ModelSpec {
            masses: vec![0.7, 0.2, 0.2, 0.5, 0.1, 0.1],
            lengths: vec![0.3; 5],
            gravity: DEFAULT_GRAVITY,
        },
        controller: Some(ControllerConfig::new(
            10.0,
            10.0,
            LeaderForce {
                x: Sinusoid::default(),
                // sin(2πt)
                y: Sinusoid::new(1.0, 2.0 * PI, -PI / 2.0),
            },
            true,
        )),
        setpoint: Some(SetpointSpec::FiveLinkFlap {
            amplitude: 3.0 * PI / 16.0,
            omega: PI,
            offset: PI / 16.0,
        }),
        sim: SimSpec {
            duration: 10.0,
            dt: 1e-3,
            projection: false,
            record_every: 1,
        },
        initial: InitialSpec {
            root_position: [0.0, 0.0],
            root_velocity: [0.0, 0.0],
            // vertical, pointing the way each desired edge points at t = 0
            directions: vec![[0.0, -1.0], [0.0, -1.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]],
            edge_rates: vec![],
        },
    }
}

/// Unforced dumbbell spinning at `omega` about its center of mass, which
/// starts at rest at the origin with the rod along +x.
pub fn dumbbell_spec(ma: f64, mb: f64, length: f64, omega: f64) -> ScenarioSpec {
    let total = ma + mb;
    let offset = mb / total;
    ScenarioSpec {
        name: "dumbbell".into(),
        graph: GraphSpec {
            edges: vec![[1, 2]],
        },
        model: ModelSpec {
            masses: vec![ma, mb],
            lengths: vec![length],
            gravity: DEFAULT_GRAVITY,
        },
        controller: None,
        setpoint: None,
        sim: SimSpec {
            duration: 10.0,
            dt: 1e-3,
            projection: false,
            record_every: 1,
        },
        initial: InitialSpec {
            root_position: [-offset * length, 0.0],
            root_velocity: [0.0, -offset * length * omega],
            directions: vec![[1.0, 0.0]],
            edge_rates: vec![omega],
        },
    }
}

pub fn two_link_scenario() -> Scenario {
    Scenario::from_spec(two_link_spec()).expect("built-in scenario is valid")
}

pub fn five_link_scenario() -> Scenario {
    Scenario::from_spec(five_link_spec()).expect("built-in scenario is valid")
}

pub fn dumbbell_scenario(
    ma: f64,
    mb: f64,
    length: f64,
    omega: f64,
) -> Result<Scenario, ScenarioError> {
    Scenario::from_spec(dumbbell_spec(ma, mb, length, omega))
}

/// Default parameters of the built-in dumbbell.
pub const DUMBBELL_DEFAULTS: (f64, f64, f64, f64) = (1.0, 2.0, 1.0, 2.0);

/// Built-in scenario spec by name.
pub fn builtin(name: &str) -> Option<ScenarioSpec> {
    match name {
        "two_link" => Some(two_link_spec()),
        "five_link" => Some(five_link_spec()),
        "dumbbell" => {
            let (ma, mb, l, w) = DUMBBELL_DEFAULTS;
            Some(dumbbell_spec(ma, mb, l, w))
        }
        _ => None,
    }
}
