//! Per-episode plot columns extracted from telemetry.

use std::fmt::Write as _;
use std::path::Path;

use super::train::TELEMETRY_HEADER;
use crate::error::HarnessError;

pub const PLOT_HEADER: &str = "episode,return,J_C_running,lambda,alpha_lambda,scaled_lr";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub episode: usize,
    pub ret: f64,
    pub j_c_running: f64,
    pub lambda: f64,
    pub alpha_lambda: f64,
    pub scaled_lr: f64,
}

/// Parses telemetry text written by the training loop.
pub fn parse_telemetry(text: &str) -> Result<Vec<PlotRow>, HarnessError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| HarnessError::Telemetry("empty telemetry".into()))?;
    if header.trim() != TELEMETRY_HEADER {
        return Err(HarnessError::Telemetry(format!("unexpected header `{header}`")));
    }
    let width = TELEMETRY_HEADER.split(',').count();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(HarnessError::Telemetry(format!("line {}: expected {width} fields", n + 2)));
        }
        let num = |i: usize| -> Result<f64, HarnessError> {
            fields[i]
                .trim()
                .parse()
                .map_err(|_| HarnessError::Telemetry(format!("line {}: bad number `{}`", n + 2, fields[i])))
        };
        let episode = fields[0]
            .trim()
            .parse()
            .map_err(|_| HarnessError::Telemetry(format!("line {}: bad episode `{}`", n + 2, fields[0])))?;
        rows.push(PlotRow {
            episode,
            ret: num(1)?,
            j_c_running: num(3)?,
            lambda: num(4)?,
            alpha_lambda: num(5)?,
            scaled_lr: num(6)?,
        });
    }
    if rows.is_empty() {
        return Err(HarnessError::Telemetry("telemetry has no episodes".into()));
    }
    Ok(rows)
}

pub fn render(rows: &[PlotRow]) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for r in rows {
        let _ =
            writeln!(s, "{},{},{},{},{},{}", r.episode, r.ret, r.j_c_running, r.lambda, r.alpha_lambda, r.scaled_lr);
    }
    s
}

/// Reads one telemetry file and returns its plot columns as CSV text.
pub fn emit_plotdata(path: &Path) -> Result<String, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(render(&parse_telemetry(&text)?))
}
