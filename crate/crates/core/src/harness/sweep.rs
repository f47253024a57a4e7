//! Grid sweeps over agents, safety coefficients, thresholds and seeds.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::train::{run_seed, write_file, write_outcome, RunOutcome};
use crate::error::HarnessError;
use crate::metrics::{aggregate, RunSummary, SUMMARY_HEADER};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    /// Agent labels, e.g. `d4pg`, `rs-0.1`, `rc`, `metal`.
    pub agents: Vec<String>,
    pub safety_coefficients: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// The desk grid: every baseline and MetaL at both regimes.
    pub fn desk(seeds: Vec<u64>) -> Self {
        Self {
            agents: ["d4pg", "rs-0.1", "rs-1", "rs-10", "rs-100", "rc", "metal"].map(String::from).to_vec(),
            safety_coefficients: vec![0.05, 0.3],
            thresholds: vec![0.1],
            seeds,
        }
    }

    pub fn len(&self) -> usize {
        self.agents.len() * self.safety_coefficients.len() * self.thresholds.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in row order: agent, then coefficient, then threshold, then seed.
    pub fn points(&self, base: &ExperimentConfig) -> Result<Vec<(ExperimentConfig, u64)>, HarnessError> {
        let mut out = Vec::with_capacity(self.len());
        for label in &self.agents {
            for &s in &self.safety_coefficients {
                for &b in &self.thresholds {
                    for &seed in &self.seeds {
                        let mut cfg = base.clone();
                        cfg.apply_label(label)?;
                        cfg.safety_coefficient = s;
                        cfg.agent.threshold_beta = b;
                        cfg.seeds = vec![seed];
                        out.push((cfg, seed));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<RunSummary>,
    pub table: String,
}

/// Renders summary rows followed by one mean±stderr row per agent label.
pub fn render_table(rows: &[RunSummary], kappa: f64) -> String {
    let mut table = String::from(SUMMARY_HEADER);
    table.push('\n');
    for r in rows {
        table.push_str(&r.csv_row());
        table.push('\n');
    }
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.id.agent.as_str()) {
            labels.push(&r.id.agent);
        }
    }
    for label in labels {
        let runs: Vec<&RunSummary> = rows.iter().filter(|r| r.id.agent == label).collect();
        let env = &runs[0].id.env;
        if let Some(agg) = aggregate(label, &runs) {
            table.push_str(&agg.csv_row(env, kappa));
            table.push('\n');
        }
    }
    table
}

/// Runs every grid point (in parallel across points) and merges rows in
/// grid order. On failure, the rows that completed are still written.
pub fn run_sweep(grid: &SweepGrid, base: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Config("sweep grid is empty".into()));
    }
    let points = grid.points(base)?;
    for (cfg, _) in &points {
        cfg.validate()?;
    }
    let results: Vec<Result<RunOutcome, HarnessError>> = points
        .par_iter()
        .map(|(cfg, seed)| {
            let outcome = run_seed(cfg, *seed)?;
            if let Some(dir) = &cfg.output {
                write_outcome(dir, cfg, &outcome)?;
            }
            Ok(outcome)
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(o) => rows.push(o.summary),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    let table = render_table(&rows, base.kappa);
    if let Some(dir) = &base.output {
        write_file(&dir.join("sweep.csv"), &table)?;
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(SweepResult { rows, table }),
    }
}
