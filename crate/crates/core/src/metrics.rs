//! Converged-run evaluation: overshoot, penalized return, trailing means.

use std::fmt::Write as _;

use crate::error::MetricsError;

pub const DEFAULT_WINDOW: usize = 100;
/// Weight used with 1000-step episodes.
pub const REFERENCE_KAPPA: f64 = 1000.0;

pub const SUMMARY_HEADER: &str = "agent,env,seed,safety_coeff,beta,kappa,R,J_C,overshoot,R_penalized";

/// `ψ = max(0, J_C − β)`.
pub fn overshoot(j_c: f64, beta: f64) -> f64 {
    (j_c - beta).max(0.0)
}

/// `R − κ·ψ`.
pub fn penalized_return(r: f64, psi: f64, kappa: f64) -> f64 {
    r - kappa * psi
}

/// Identifies one run in a summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunId {
    pub agent: String,
    pub env: String,
    pub seed: u64,
    pub safety_coeff: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub id: RunId,
    pub kappa: f64,
    pub r: f64,
    pub j_c: f64,
    pub overshoot: f64,
    pub r_penalized: f64,
}

impl RunSummary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.id.agent,
            self.id.env,
            self.id.seed,
            self.id.safety_coeff,
            self.id.beta,
            self.kappa,
            self.r,
            self.j_c,
            self.overshoot,
            self.r_penalized
        )
    }
}

/// Trailing-`window` means of episode returns and penalties.
pub fn summarize(
    id: RunId,
    returns: &[f64],
    penalties: &[f64],
    window: usize,
    kappa: f64,
) -> Result<RunSummary, MetricsError> {
    if window == 0 {
        return Err(MetricsError::EmptyWindow);
    }
    let have = returns.len().min(penalties.len());
    if have < window {
        return Err(MetricsError::ShortTelemetry { have, need: window });
    }
    let tail_mean = |xs: &[f64]| xs[xs.len() - window..].iter().sum::<f64>() / window as f64;
    let r = tail_mean(returns);
    let j_c = tail_mean(penalties);
    let psi = overshoot(j_c, id.beta);
    Ok(RunSummary { id, kappa, r, j_c, overshoot: psi, r_penalized: penalized_return(r, psi, kappa) })
}

/// Per-run-first aggregate of several summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub agent: String,
    pub runs: usize,
    pub r: MeanErr,
    pub j_c: MeanErr,
    pub overshoot: MeanErr,
    pub r_penalized: MeanErr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanErr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanErr {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        };
        Self { mean, stderr }
    }
}

impl std::fmt::Display for MeanErr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}±{}", self.mean, self.stderr)
    }
}

/// Averages already-summarized runs; returns `None` for an empty slice.
pub fn aggregate(agent: &str, runs: &[&RunSummary]) -> Option<Aggregate> {
    if runs.is_empty() {
        return None;
    }
    let col = |f: fn(&RunSummary) -> f64| MeanErr::of(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
    Some(Aggregate {
        agent: agent.to_string(),
        runs: runs.len(),
        r: col(|r| r.r),
        j_c: col(|r| r.j_c),
        overshoot: col(|r| r.overshoot),
        r_penalized: col(|r| r.r_penalized),
    })
}

impl Aggregate {
    /// Same columns as [`SUMMARY_HEADER`]; the seed column reads `mean` and
    /// run-identity columns that vary across runs are left empty.
    pub fn csv_row(&self, env: &str, kappa: f64) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},mean,,,{},{},{},{},{}",
            self.agent, env, kappa, self.r, self.j_c, self.overshoot, self.r_penalized
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(beta: f64) -> RunId {
        RunId { agent: "rc".into(), env: "pointmass1d".into(), seed: 0, safety_coeff: 0.3, beta }
    }

    #[test]
    fn overshoot_examples() {
        assert!((overshoot(0.3, 0.115) - 0.185).abs() < 1e-15);
        assert_eq!(overshoot(0.1, 0.115), 0.0);
        assert_eq!(overshoot(0.115, 0.115), 0.0);
    }

    #[test]
    fn penalized_return_examples() {
        assert!((penalized_return(900.0, 0.24, REFERENCE_KAPPA) - 660.0).abs() < 1e-9);
        assert_eq!(penalized_return(412.5, 0.0, REFERENCE_KAPPA), 412.5);
    }

    #[test]
    fn aggregates_then_identity_differs_from_reported_row() {
        // Applying the identity to the reported aggregate row does not give its
        // reported penalized return, so the table averages per run.
        let from_aggregates = penalized_return(921.16, 0.24, REFERENCE_KAPPA);
        assert!((from_aggregates - 681.16).abs() < 1e-9);
        assert!((from_aggregates - 677.93).abs() > 1.0);
        // Per-run first: mean of R − κψ differs from R̄ − κψ̄ once the clamp binds.
        let a = summarize(id(0.1), &[100.0], &[0.5], 1, REFERENCE_KAPPA).unwrap();
        let b = summarize(id(0.1), &[300.0], &[0.0], 1, REFERENCE_KAPPA).unwrap();
        let agg = aggregate("rc", &[&a, &b]).unwrap();
        assert!((agg.r_penalized.mean - (a.r_penalized + b.r_penalized) / 2.0).abs() < 1e-12);
        let naive = penalized_return(agg.r.mean, overshoot(agg.j_c.mean, 0.1), REFERENCE_KAPPA);
        assert!((naive - agg.r_penalized.mean).abs() > 1.0);
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(id(0.1), &[1.0; 120], &[0.0; 120], 100, 200.0).unwrap();
        assert_eq!((s.r, s.overshoot, s.r_penalized), (1.0, 0.0, 1.0));
        let mut pens = vec![0.9; 50];
        pens.extend(vec![0.3; 100]);
        let s = summarize(id(0.115), &[150.0; 150], &pens, 100, REFERENCE_KAPPA).unwrap();
        assert!((s.r_penalized + 35.0).abs() < 1e-9);
        assert!(matches!(
            summarize(id(0.1), &[1.0; 5], &[0.0; 5], 10, 1.0),
            Err(MetricsError::ShortTelemetry { have: 5, need: 10 })
        ));
        assert!(matches!(summarize(id(0.1), &[1.0], &[0.0], 0, 1.0), Err(MetricsError::EmptyWindow)));
    }

    #[test]
    fn csv_row_matches_header() {
        let s = summarize(id(0.1), &[2.0; 3], &[0.2; 3], 3, 200.0).unwrap();
        assert_eq!(s.csv_row().split(',').count(), SUMMARY_HEADER.split(',').count());
        let agg = aggregate("rc", &[&s]).unwrap();
        assert_eq!(agg.csv_row("pointmass1d", 200.0).split(',').count(), SUMMARY_HEADER.split(',').count());
        assert!(aggregate("rc", &[]).is_none());
    }

    #[test]
    fn stderr_by_hand() {
        let m = MeanErr::of(&[1.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.stderr - 1.0).abs() < 1e-15);
        assert_eq!(MeanErr::of(&[4.0]).stderr, 0.0);
    }

    proptest::proptest! {
        #[test]
        fn penalized_never_exceeds_return(r in -100.0f64..1000.0, j in 0.0f64..1.0, beta in 0.0f64..1.0, kappa in 0.0f64..2000.0) {
            let psi = overshoot(j, beta);
            proptest::prop_assert!(psi >= 0.0);
            let rp = penalized_return(r, psi, kappa);
            proptest::prop_assert!(rp <= r);
            if j <= beta { proptest::prop_assert_eq!(rp, r); }
        }

        #[test]
        fn penalized_monotone_in_penalty(r in 0.0f64..200.0, j1 in 0.0f64..1.0, dj in 0.0f64..0.5, beta in 0.0f64..1.0) {
            let lo = penalized_return(r, overshoot(j1, beta), 200.0);
            let hi = penalized_return(r, overshoot(j1 + dj, beta), 200.0);
            proptest::prop_assert!(hi <= lo);
        }
    }
}
