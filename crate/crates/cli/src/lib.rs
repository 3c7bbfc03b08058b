//! Library side of the `sarsim` command: config handling, trace and figure
//! output, and the verification suites.

pub mod config;
pub mod plot;
pub mod trace;
pub mod verify;

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

use sar_core::analysis::{
    diagnose_trace, is_unforced, summarize, Summary, DEFAULT_SETTLING_THRESHOLD,
};
use sar_core::dynamics::DynamicsError;
use sar_core::scenarios::{Scenario, ScenarioSpec};
use thiserror::Error;

use crate::config::ConfigError;

/// Exit status for check or dynamics failures.
pub const EXIT_FAILURE: u8 = 1;
/// Exit status for usage and config errors.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("cannot write output {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Dynamics(_) | CliError::Output { .. } => EXIT_FAILURE,
            CliError::Config(_) => EXIT_USAGE,
        }
    }
}

/// Command-line overrides of the `[sim]` section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOverrides {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub projection: Option<bool>,
    pub record_every: Option<usize>,
}

impl SimOverrides {
    pub fn apply(&self, spec: &mut ScenarioSpec) {
        if let Some(dt) = self.dt {
            spec.sim.dt = dt;
        }
        if let Some(d) = self.duration {
            spec.sim.duration = d;
        }
        if let Some(p) = self.projection {
            spec.sim.projection = p;
        }
        if let Some(k) = self.record_every {
            spec.sim.record_every = k;
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Config path or built-in scenario name.
    pub target: String,
    pub overrides: SimOverrides,
    /// Output directory; `out/<scenario name>` when absent.
    pub out: Option<PathBuf>,
    pub plots: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub origin: String,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

fn output_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn render_summary(s: &Summary) -> String {
    let list = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.6e}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut out = String::new();
    out.push_str(&format!("samples = {}\n", s.samples));
    out.push_str(&format!("t_start = {}\nt_end = {}\n", s.t_start, s.t_end));
    out.push_str(&format!(
        "max_constraint_drift = {:.6e}\n",
        s.max_constraint_drift
    ));
    out.push_str(&format!(
        "mean_constraint_drift = {:.6e}\n",
        s.mean_constraint_drift
    ));
    out.push_str(&format!(
        "max_velocity_residual = {:.6e}\n",
        s.max_velocity_residual
    ));
    if !s.final_ec_norms.is_empty() {
        out.push_str(&format!("final_ec_norms = [{}]\n", list(&s.final_ec_norms)));
        out.push_str(&format!("final_ev_norms = [{}]\n", list(&s.final_ev_norms)));
        match s.settling_time {
            Some(t) => out.push_str(&format!(
                "settling_time = {t} (threshold {:e})\n",
                s.settling_threshold
            )),
            None => out.push_str(&format!(
                "settling_time = none (threshold {:e})\n",
                s.settling_threshold
            )),
        }
    }
    if let Some(e) = s.energy_drift {
        out.push_str(&format!("relative_energy_drift = {e:.6e}\n"));
    }
    out.push_str(&format!(
        "sigma_min_j_initial = {:.6e}\n",
        s.sigma_min_initial
    ));
    out.push_str(&format!(
        "sigma_min_j_overall = {:.6e}\n",
        s.sigma_min_overall
    ));
    out
}

/// Loads, simulates and writes `trace.csv`, `summary.txt` and (optionally)
/// the SVG figures.
pub fn run(opts: &RunOptions) -> Result<RunReport, CliError> {
    let (mut spec, origin) = config::resolve(&opts.target)?;
    opts.overrides.apply(&mut spec);
    let scenario = Scenario::from_spec(spec).map_err(|source| ConfigError::Invalid {
        origin: origin.clone(),
        source,
    })?;
    let trace = scenario.run()?;
    let model = scenario.model();
    let setpoint = scenario.setpoint();
    let rows = diagnose_trace(model, &trace, setpoint.as_deref());
    let summary = summarize(&rows, is_unforced(&trace), DEFAULT_SETTLING_THRESHOLD)
        .expect("trace has samples");

    let out_dir = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(scenario.name()));
    fs::create_dir_all(&out_dir).map_err(|e| output_error(&out_dir, e))?;

    let mut files = Vec::new();
    let trace_path = out_dir.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(|e| output_error(&trace_path, e))?;
    let mut w = BufWriter::new(file);
    trace::write_csv(&mut w, model, &trace, &rows).map_err(|e| output_error(&trace_path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| output_error(&trace_path, e))?;
    files.push(trace_path);

    let summary_path = out_dir.join("summary.txt");
    fs::write(&summary_path, render_summary(&summary))
        .map_err(|e| output_error(&summary_path, e))?;
    files.push(summary_path);

    if opts.plots {
        let written = plot::write_all(&out_dir, model, &trace, &rows, setpoint.as_deref())
            .map_err(|e| output_error(&out_dir, e))?;
        files.extend(written);
    }

    Ok(RunReport {
        origin,
        out_dir,
        files,
        summary,
    })
}
