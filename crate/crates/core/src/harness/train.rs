//! Single-run training loop and telemetry.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AgentKind, ExperimentConfig};
use crate::agents::{act, ActorCritic, IterationStats, LagrangeRule, Learner, Networks, ShapedLearner};
use crate::env::SafetyConfig;
use crate::error::{AgentError, HarnessError};
use crate::mesh::MeshLearner;
use crate::metal::MetalLearner;
use crate::metrics::{summarize, RunId, RunSummary};
use crate::replay::{EpisodePenalty, NStepBuilder, PenaltyBuffer, ReplayBuffer};

pub const TELEMETRY_HEADER: &str = "episode,return,penalty,J_C_running,lambda,alpha_lambda,scaled_lr,learner_steps";
pub const META_HEADER: &str = "episode,outer_loss,meta_gradient,kappa_s,kappa_o";

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Init = 0,
    Noise = 1,
    Batch = 2,
    Penalty = 3,
    Reset = 4,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub ret: f64,
    pub penalty: f64,
    pub j_c_running: f64,
    pub lambda: f64,
    pub alpha_lambda: f64,
    pub scaled_lr: f64,
    pub learner_steps: usize,
}

/// Episode means of the meta-learner's per-iteration quantities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetaRecord {
    pub episode: usize,
    pub outer_loss: Option<f64>,
    pub meta_gradient: Option<f64>,
    pub kappa_s: Option<f64>,
    pub kappa_o: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub episodes: Vec<EpisodeRecord>,
    pub meta: Vec<MetaRecord>,
    /// Smallest multiplier seen after any learner step.
    pub min_lambda: f64,
}

impl RunOutcome {
    pub fn telemetry_csv(&self) -> String {
        let mut s = String::from(TELEMETRY_HEADER);
        s.push('\n');
        for e in &self.episodes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                e.episode, e.ret, e.penalty, e.j_c_running, e.lambda, e.alpha_lambda, e.scaled_lr, e.learner_steps
            );
        }
        s
    }

    pub fn meta_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::from(META_HEADER);
        s.push('\n');
        for m in &self.meta {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                m.episode,
                opt(m.outer_loss),
                opt(m.meta_gradient),
                opt(m.kappa_s),
                opt(m.kappa_o)
            );
        }
        s
    }
}

#[derive(Default)]
struct MetaAccumulator {
    n: usize,
    sums: [f64; 4],
    seen: [bool; 4],
}

impl MetaAccumulator {
    fn add(&mut self, stats: &IterationStats) {
        self.n += 1;
        for (k, v) in [stats.outer_loss, stats.meta_gradient, stats.kappa_s, stats.kappa_o].into_iter().enumerate() {
            if let Some(v) = v {
                self.sums[k] += v;
                self.seen[k] = true;
            }
        }
    }

    fn take(&mut self, episode: usize) -> MetaRecord {
        let n = self.n as f64;
        let get = |k: usize| if self.seen[k] { Some(self.sums[k] / n) } else { None };
        let rec = MetaRecord { episode, outer_loss: get(0), meta_gradient: get(1), kappa_s: get(2), kappa_o: get(3) };
        *self = Self::default();
        rec
    }
}

/// Builds the learner named by the config, drawing initial parameters from `rng`.
pub fn build_learner(
    cfg: &ExperimentConfig,
    nets: Networks,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn Learner>, HarnessError> {
    let agent = cfg.agent.clone();
    let init = |lambda: f64, rng: &mut ChaCha8Rng| {
        let mut ac = ActorCritic::init(&nets, &agent, rng);
        ac.lambda = lambda;
        ac
    };
    Ok(match cfg.agent_kind {
        AgentKind::D4pg => {
            let ac = init(0.0, rng);
            Box::new(ShapedLearner::new(nets, agent, ac, LagrangeRule::Frozen))
        }
        AgentKind::Rs => {
            let ac = init(cfg.rs_lambda, rng);
            Box::new(ShapedLearner::new(nets, agent, ac, LagrangeRule::Frozen))
        }
        AgentKind::Rc => {
            let ac = init(cfg.initial_lambda, rng);
            let rule = if cfg.freeze_lambda { LagrangeRule::Frozen } else { LagrangeRule::Projected };
            let mut l = ShapedLearner::new(nets, agent, ac, rule);
            l.draw_penalties = true;
            Box::new(l)
        }
        AgentKind::Metal => {
            let ac = init(cfg.initial_lambda, rng);
            Box::new(MetalLearner::new(nets, agent, ac, cfg.metal_lr_meta, cfg.outer_loss_kind))
        }
        AgentKind::Mesh => {
            let mut agent = agent;
            agent.fixed_lambda = cfg.initial_lambda;
            Box::new(MeshLearner::init(nets, agent, cfg.mesh.clone(), rng)?)
        }
    })
}

/// Trains one seed and summarizes its trailing window.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    cfg.agent.check_rate_ordering();
    let a = &cfg.agent;
    let safety = SafetyConfig::new(cfg.safety_coefficient, a.threshold_beta)?;
    let mut env = cfg.env.build(safety, cfg.episode_len);
    let spec = env.spec().clone();
    let nets = Networks::new(&spec, a)?;
    let mut init_rng = stream(seed, Stream::Init);
    let mut noise_rng = stream(seed, Stream::Noise);
    let mut batch_rng = stream(seed, Stream::Batch);
    let mut penalty_rng = stream(seed, Stream::Penalty);
    let mut reset_rng = stream(seed, Stream::Reset);
    let mut learner = build_learner(cfg, nets.clone(), &mut init_rng)?;

    let mut replay = ReplayBuffer::new(a.replay_capacity)?;
    let mut penalties = PenaltyBuffer::new(a.penalty_capacity)?;
    let mut nstep = NStepBuilder::new(a.n_step, a.gamma);
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut meta = Vec::new();
    let mut acc = MetaAccumulator::default();
    let mut env_steps = 0usize;
    let mut learner_steps = 0usize;
    let mut min_lambda = learner.lambda();

    for episode in 0..cfg.episodes {
        // Rollouts act with a snapshot taken at the episode boundary.
        let policy = learner.policy_params().clone();
        let mut obs = env.reset(reset_rng.random());
        nstep.clear();
        let (mut ret, mut violations, mut steps) = (0.0, 0usize, 0usize);
        loop {
            let action =
                act(&nets, &policy, &obs, true, a.exploration_sigma, &mut noise_rng).map_err(AgentError::from)?;
            let step = env.step(&action)?;
            ret += step.reward;
            steps += 1;
            if step.penalty > 0.0 {
                violations += 1;
            }
            for t in nstep.push(&obs, &action, step.reward, step.penalty, &step.obs, step.done) {
                replay.push_transition(t);
            }
            env_steps += 1;
            if replay.len() >= a.warmup && !penalties.is_empty() && env_steps.is_multiple_of(a.learner_period) {
                let batch = replay.sample_batch(a.batch_size, a.split_fraction, &mut batch_rng)?;
                let j_c =
                    if learner.needs_penalty() { Some(penalties.sample_penalty(&mut penalty_rng)?) } else { None };
                let stats = learner.learn(&batch, j_c)?;
                learner_steps += 1;
                min_lambda = min_lambda.min(learner.lambda());
                acc.add(&stats);
            }
            obs = step.obs;
            if step.done {
                break;
            }
        }
        let penalty = EpisodePenalty::from_counts(violations, steps)?;
        penalties.push_episode_penalty(penalty);
        records.push(EpisodeRecord {
            episode,
            ret,
            penalty: penalty.value(),
            j_c_running: penalties.mean().unwrap_or(0.0),
            lambda: learner.lambda(),
            alpha_lambda: learner.alpha_lambda(),
            scaled_lr: learner.scaled_lr(),
            learner_steps,
        });
        if matches!(cfg.agent_kind, AgentKind::Metal | AgentKind::Mesh) {
            meta.push(acc.take(episode));
        }
    }

    let returns: Vec<f64> = records.iter().map(|r| r.ret).collect();
    let pens: Vec<f64> = records.iter().map(|r| r.penalty).collect();
    let window = if cfg.window > cfg.episodes {
        log::warn!("window {} exceeds {} episodes; using all episodes", cfg.window, cfg.episodes);
        cfg.episodes
    } else {
        cfg.window
    };
    let id = RunId {
        agent: cfg.agent_label(),
        env: cfg.env.name().to_string(),
        seed,
        safety_coeff: cfg.safety_coefficient,
        beta: a.threshold_beta,
    };
    let summary = summarize(id, &returns, &pens, window, cfg.kappa)?;
    Ok(RunOutcome { summary, episodes: records, meta, min_lambda })
}

/// File stem for one run's telemetry.
pub fn run_stem(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}_s{}_b{}_seed{}", cfg.agent_label(), cfg.safety_coefficient, cfg.agent.threshold_beta, seed)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Writes `<stem>.telemetry.csv` and, for meta-learners, `<stem>.meta.csv`.
pub fn write_outcome(dir: &Path, cfg: &ExperimentConfig, outcome: &RunOutcome) -> Result<PathBuf, HarnessError> {
    let stem = run_stem(cfg, outcome.summary.id.seed);
    let telemetry = dir.join(format!("{stem}.telemetry.csv"));
    write_file(&telemetry, &outcome.telemetry_csv())?;
    if !outcome.meta.is_empty() {
        write_file(&dir.join(format!("{stem}.meta.csv")), &outcome.meta_csv())?;
    }
    Ok(telemetry)
}

/// Runs every seed of `cfg` in order. With an output directory, telemetry
/// files and `summary.csv` are written there.
pub fn run_training(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>, HarnessError> {
    let mut outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let outcome = run_seed(cfg, seed)?;
        if let Some(dir) = &cfg.output {
            write_outcome(dir, cfg, &outcome)?;
        }
        log::info!("{} seed {seed}: {}", cfg.agent_label(), outcome.summary.csv_row());
        outcomes.push(outcome);
    }
    if let Some(dir) = &cfg.output {
        let mut table = String::from(crate::metrics::SUMMARY_HEADER);
        table.push('\n');
        for o in &outcomes {
            table.push_str(&o.summary.csv_row());
            table.push('\n');
        }
        write_file(&dir.join("summary.csv"), &table)?;
    }
    Ok(outcomes)
}
