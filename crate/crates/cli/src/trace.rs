//! CSV trace output.

use std::io::{self, Write};

use sar_core::analysis::DiagnosticsRow;
use sar_core::dynamics::SimTrace;
use sar_core::model::SarModel;

pub fn header(model: &SarModel, with_setpoint: bool) -> Vec<String> {
    let n = model.node_count();
    let m = model.edge_count();
    let mut cols = vec!["t".to_string()];
    let pairs = |cols: &mut Vec<String>, a: &str, b: &str, count: usize| {
        for i in 1..=count {
            cols.push(format!("{a}{i}"));
            cols.push(format!("{b}{i}"));
        }
    };
    let singles = |cols: &mut Vec<String>, a: &str, count: usize| {
        cols.extend((1..=count).map(|i| format!("{a}{i}")));
    };
    pairs(&mut cols, "x", "y", n);
    pairs(&mut cols, "vx", "vy", n);
    pairs(&mut cols, "rx", "ry", m);
    singles(&mut cols, "lambda", m);
    if with_setpoint {
        singles(&mut cols, "ec", m);
        singles(&mut cols, "ev", m);
    }
    cols.extend(
        [
            "drift",
            "velocity_residual",
            "kinetic",
            "potential",
            "energy",
            "sigma_min_j",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    singles(&mut cols, "x_norm", m);
    cols
}

fn push(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, ",{v:.16e}");
}

/// Writes one row per recorded sample. `rows` must be the diagnostics of
/// `trace`, sample for sample.
pub fn write_csv<W: Write>(
    out: &mut W,
    model: &SarModel,
    trace: &SimTrace,
    rows: &[DiagnosticsRow],
) -> io::Result<()> {
    assert_eq!(trace.len(), rows.len(), "one diagnostics row per sample");
    let with_setpoint = rows.first().is_some_and(|r| !r.ec_norms.is_empty());
    writeln!(out, "{}", header(model, with_setpoint).join(","))?;
    let mut line = String::new();
    for (s, row) in trace.samples.iter().zip(rows) {
        line.clear();
        line.push_str(&format!("{:.16e}", s.state.time));
        for x in [&s.state.q, &s.state.qdot] {
            for i in 0..x.nrows() {
                push(&mut line, x[(i, 0)]);
                push(&mut line, x[(i, 1)]);
            }
        }
        let qe = model.to_edges(&s.state.q);
        for j in 0..qe.nrows() {
            push(&mut line, qe[(j, 0)]);
            push(&mut line, qe[(j, 1)]);
        }
        row.lambda.iter().for_each(|v| push(&mut line, *v));
        row.ec_norms.iter().for_each(|v| push(&mut line, *v));
        row.ev_norms.iter().for_each(|v| push(&mut line, *v));
        for v in [
            row.constraint_drift,
            row.velocity_residual_max,
            row.kinetic,
            row.potential,
            row.energy(),
            row.sigma_min_j,
        ] {
            push(&mut line, v);
        }
        row.x_norms.iter().for_each(|v| push(&mut line, *v));
        writeln!(out, "{line}")?;
    }
    Ok(())
}
