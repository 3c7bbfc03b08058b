//! Static SVG figures of a run.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use sar_core::analysis::DiagnosticsRow;
use sar_core::control::EdgeSetpoint;
use sar_core::dynamics::SimTrace;
use sar_core::model::SarModel;

type PlotResult<T> = Result<T, Box<dyn std::error::Error>>;

const PANEL: (u32, u32) = (420, 200);

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-12 * hi.abs().max(1.0));
    (lo - pad, hi + pad)
}

fn series_panel(
    area: &DrawingArea<SVGBackend<'_>, plotters::coord::Shift>,
    title: &str,
    times: &[f64],
    actual: &[f64],
    desired: Option<&[f64]>,
) -> PlotResult<()> {
    let t_max = times.last().copied().unwrap_or(1.0).max(times[0] + 1e-9);
    let (lo, hi) = range(actual.iter().chain(desired.unwrap_or(&[])).copied());
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 14))
        .margin(6)
        .x_label_area_size(24)
        .y_label_area_size(56)
        .build_cartesian_2d(times[0]..t_max, lo..hi)?;
    chart
        .configure_mesh()
        .x_desc("t (s)")
        .x_labels(6)
        .y_labels(5)
        .y_label_formatter(&|v| format!("{v:.3e}"))
        .draw()?;
    chart.draw_series(LineSeries::new(
        times.iter().copied().zip(actual.iter().copied()),
        BLUE.stroke_width(1),
    ))?;
    if let Some(d) = desired {
        chart.draw_series(DashedLineSeries::new(
            times.iter().copied().zip(d.iter().copied()),
            6,
            4,
            RED.stroke_width(1),
        ))?;
    }
    Ok(())
}

/// Edge coordinates against time, one panel per component, laid out like
/// the rows and columns of `Q_e`. Desired values are dashed.
pub fn edge_figure(
    path: &Path,
    model: &SarModel,
    trace: &SimTrace,
    setpoint: Option<&dyn EdgeSetpoint>,
) -> PlotResult<()> {
    let m = model.edge_count().max(1);
    let size = (2 * PANEL.0, m as u32 * PANEL.1);
    let root = SVGBackend::new(path, size).into_drawing_area();
    root.fill(&WHITE)?;
    let times: Vec<f64> = trace.times().collect();
    let edges: Vec<_> = trace
        .samples
        .iter()
        .map(|s| model.to_edges(&s.state.q))
        .collect();
    let desired: Option<Vec<_>> =
        setpoint.map(|sp| times.iter().map(|t| sp.sample(*t).position).collect());
    let panels = root.split_evenly((m, 2));
    for j in 0..model.edge_count() {
        for (c, axis) in ["x", "y"].iter().enumerate() {
            let actual: Vec<f64> = edges.iter().map(|e| e[(j, c)]).collect();
            let want: Option<Vec<f64>> = desired
                .as_ref()
                .map(|d| d.iter().map(|p| p[(j, c)]).collect());
            series_panel(
                &panels[2 * j + c],
                &format!("edge {} {axis} (m)", j + 1),
                &times,
                &actual,
                want.as_deref(),
            )?;
        }
    }
    root.present()?;
    Ok(())
}

fn scalar_figure(path: &Path, title: &str, times: &[f64], values: &[f64]) -> PlotResult<()> {
    let root = SVGBackend::new(path, (2 * PANEL.0, 2 * PANEL.1)).into_drawing_area();
    root.fill(&WHITE)?;
    series_panel(&root, title, times, values, None)?;
    root.present()?;
    Ok(())
}

/// Writes every figure into `dir` and returns the files written.
pub fn write_all(
    dir: &Path,
    model: &SarModel,
    trace: &SimTrace,
    rows: &[DiagnosticsRow],
    setpoint: Option<&dyn EdgeSetpoint>,
) -> PlotResult<Vec<PathBuf>> {
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let mut written = Vec::new();
    if model.edge_count() > 0 {
        let p = dir.join("edges.svg");
        edge_figure(&p, model, trace, setpoint)?;
        written.push(p);
    }
    let scalars: [(&str, &str, Vec<f64>); 3] = [
        (
            "drift.svg",
            "constraint drift max |‖r‖ − ℓ| (m)",
            rows.iter().map(|r| r.constraint_drift).collect(),
        ),
        (
            "sigma.svg",
            "smallest eigenvalue of J",
            rows.iter().map(|r| r.sigma_min_j).collect(),
        ),
        (
            "energy.svg",
            "total energy (J)",
            rows.iter().map(|r| r.energy()).collect(),
        ),
    ];
    for (file, title, values) in scalars {
        let p = dir.join(file);
        scalar_figure(&p, title, &times, &values)?;
        written.push(p);
    }
    Ok(written)
}
