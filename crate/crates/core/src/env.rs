//! Deterministic toy constrained MDPs.
//!
//! Both environments are a clipped double integrator driven by an
//! acceleration command, with a binary velocity-limit penalty: a step is a
//! violation when `|v'| > safety_coefficient · v_max`. Lowering the safety
//! coefficient shrinks the admissible velocity band, which is what turns a
//! solvable constraint into an unsolvable one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::EnvError;

/// Dimensionalities and bounds of a constrained MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdpSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episode_len: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl CmdpSpec {
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyConfig {
    safety_coefficient: f64,
    threshold_beta: f64,
}

impl SafetyConfig {
    pub fn new(safety_coefficient: f64, threshold_beta: f64) -> Result<Self, EnvError> {
        if !(safety_coefficient > 0.0 && safety_coefficient <= 1.0) {
            return Err(EnvError::Safety(format!("safety coefficient {safety_coefficient} outside (0, 1]")));
        }
        if !(threshold_beta >= 0.0 && threshold_beta.is_finite()) {
            return Err(EnvError::Safety(format!("threshold {threshold_beta} must be finite and >= 0")));
        }
        Ok(Self { safety_coefficient, threshold_beta })
    }

    pub fn safety_coefficient(&self) -> f64 {
        self.safety_coefficient
    }

    pub fn threshold_beta(&self) -> f64 {
        self.threshold_beta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub penalty: f64,
    pub done: bool,
}

/// The interface every environment exposes to the harness.
pub trait ConstrainedEnv: Send {
    fn spec(&self) -> &CmdpSpec;
    fn safety(&self) -> &SafetyConfig;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;
}

pub const DEFAULT_EPISODE_LEN: usize = 200;
const DT: f64 = 0.1;
const V_MAX: f64 = 1.0;
const X_LIMIT: f64 = 2.0;
const START_JITTER: f64 = 0.05;

/// Shared integrator state for both environments.
#[derive(Debug, Clone)]
struct Integrator {
    spec: CmdpSpec,
    safety: SafetyConfig,
    x: f64,
    v: f64,
    t: usize,
    started: bool,
}

impl Integrator {
    fn new(safety: SafetyConfig, episode_len: usize) -> Self {
        Self {
            spec: CmdpSpec {
                obs_dim: 2,
                act_dim: 1,
                episode_len: episode_len.max(1),
                action_low: vec![-1.0],
                action_high: vec![1.0],
            },
            safety,
            x: 0.0,
            v: 0.0,
            t: 0,
            started: false,
        }
    }

    fn reset(&mut self, start_x: f64, seed: u64) -> Vec<f64> {
        // Seed 0 is the unperturbed start.
        let offset =
            if seed == 0 { 0.0 } else { ChaCha8Rng::seed_from_u64(seed).random_range(-START_JITTER..=START_JITTER) };
        self.x = start_x + offset;
        self.v = 0.0;
        self.t = 0;
        self.started = true;
        vec![self.x, self.v]
    }

    /// Advances the dynamics; returns the clipped action and the penalty.
    fn advance(&mut self, action: &[f64]) -> Result<(f64, f64), EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.t >= self.spec.episode_len {
            return Err(EnvError::EpisodeDone);
        }
        if action.len() != self.spec.act_dim {
            return Err(EnvError::ActionDimension { expected: self.spec.act_dim, got: action.len() });
        }
        let u = action[0].clamp(self.spec.action_low[0], self.spec.action_high[0]);
        self.v = (self.v + DT * u).clamp(-V_MAX, V_MAX);
        self.x = (self.x + DT * self.v).clamp(-X_LIMIT, X_LIMIT);
        self.t += 1;
        let penalty = if self.v.abs() > self.safety.safety_coefficient * V_MAX { 1.0 } else { 0.0 };
        Ok((u, penalty))
    }

    fn done(&self) -> bool {
        self.t >= self.spec.episode_len
    }
}

/// Reach `x = 1` from `x = −1` under a velocity limit.
#[derive(Debug, Clone)]
pub struct PointMass1D {
    inner: Integrator,
}

impl PointMass1D {
    pub const START_X: f64 = -1.0;
    pub const GOAL_X: f64 = 1.0;

    pub fn new(safety: SafetyConfig) -> Self {
        Self::with_episode_len(safety, DEFAULT_EPISODE_LEN)
    }

    pub fn with_episode_len(safety: SafetyConfig, episode_len: usize) -> Self {
        Self { inner: Integrator::new(safety, episode_len) }
    }

    /// Places the mass at an arbitrary state mid-episode.
    pub fn set_state(&mut self, x: f64, v: f64) {
        self.inner.x = x;
        self.inner.v = v;
        self.inner.started = true;
    }

    pub fn state(&self) -> (f64, f64) {
        (self.inner.x, self.inner.v)
    }
}

impl ConstrainedEnv for PointMass1D {
    fn spec(&self) -> &CmdpSpec {
        &self.inner.spec
    }

    fn safety(&self) -> &SafetyConfig {
        &self.inner.safety
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(Self::START_X, seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let (_, penalty) = self.inner.advance(action)?;
        let reward = (1.0 - (self.inner.x - Self::GOAL_X).abs()).max(0.0);
        Ok(StepResult { obs: vec![self.inner.x, self.inner.v], reward, penalty, done: self.inner.done() })
    }
}

/// Regulate the integrator to the origin with reward `1 − min(1, x² + 0.1u²)`.
#[derive(Debug, Clone)]
pub struct LqrConstrained {
    inner: Integrator,
}

impl LqrConstrained {
    pub const START_X: f64 = 1.0;
    pub const CONTROL_COST: f64 = 0.1;

    pub fn new(safety: SafetyConfig) -> Self {
        Self::with_episode_len(safety, DEFAULT_EPISODE_LEN)
    }

    pub fn with_episode_len(safety: SafetyConfig, episode_len: usize) -> Self {
        Self { inner: Integrator::new(safety, episode_len) }
    }

    pub fn set_state(&mut self, x: f64, v: f64) {
        self.inner.x = x;
        self.inner.v = v;
        self.inner.started = true;
    }
}

impl ConstrainedEnv for LqrConstrained {
    fn spec(&self) -> &CmdpSpec {
        &self.inner.spec
    }

    fn safety(&self) -> &SafetyConfig {
        &self.inner.safety
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(Self::START_X, seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let (u, penalty) = self.inner.advance(action)?;
        let x = self.inner.x;
        let reward = 1.0 - (x * x + Self::CONTROL_COST * u * u).min(1.0);
        Ok(StepResult { obs: vec![x, self.inner.v], reward, penalty, done: self.inner.done() })
    }
}

/// Environment names accepted by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    PointMass1D,
    Lqr,
}

impl EnvKind {
    pub fn from_name(name: &str) -> Result<Self, EnvError> {
        match name {
            "pointmass1d" => Ok(Self::PointMass1D),
            "lqr" => Ok(Self::Lqr),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PointMass1D => "pointmass1d",
            Self::Lqr => "lqr",
        }
    }

    pub fn build(self, safety: SafetyConfig, episode_len: usize) -> Box<dyn ConstrainedEnv> {
        match self {
            Self::PointMass1D => Box::new(PointMass1D::with_episode_len(safety, episode_len)),
            Self::Lqr => Box::new(LqrConstrained::with_episode_len(safety, episode_len)),
        }
    }
}
