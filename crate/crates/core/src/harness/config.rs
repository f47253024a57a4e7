//! Strict `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, nested settings use dotted
//! keys (`agent.lr_critic = 0.01`, `metal.lr_meta = 0.001`). Unknown keys and
//! malformed values are errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::agents::AgentConfig;
use crate::approx::Activation;
use crate::env::{EnvKind, DEFAULT_EPISODE_LEN};
use crate::error::HarnessError;
use crate::mesh::{Formulation, MeshConfig};
use crate::metal::{OuterLossKind, DEFAULT_LR_META};
use crate::metrics::DEFAULT_WINDOW;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    D4pg,
    Rs,
    Rc,
    Metal,
    Mesh,
}

impl AgentKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "d4pg" => Some(Self::D4pg),
            "rs" => Some(Self::Rs),
            "rc" => Some(Self::Rc),
            "metal" => Some(Self::Metal),
            "mesh" => Some(Self::Mesh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::D4pg => "d4pg",
            Self::Rs => "rs",
            Self::Rc => "rc",
            Self::Metal => "metal",
            Self::Mesh => "mesh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub agent_kind: AgentKind,
    pub env: EnvKind,
    pub safety_coefficient: f64,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub episode_len: usize,
    /// Multiplier of the RS baseline.
    pub rs_lambda: f64,
    /// Starting multiplier for rc, metal and mesh.
    pub initial_lambda: f64,
    /// Disables the Lagrange step of rc.
    pub freeze_lambda: bool,
    pub kappa: f64,
    pub window: usize,
    pub agent: AgentConfig,
    pub metal_lr_meta: f64,
    pub outer_loss_kind: OuterLossKind,
    pub mesh: MeshConfig,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            agent_kind: AgentKind::Metal,
            env: EnvKind::PointMass1D,
            safety_coefficient: 0.3,
            seeds: vec![0],
            episodes: 600,
            episode_len: DEFAULT_EPISODE_LEN,
            rs_lambda: 1.0,
            initial_lambda: 0.0,
            freeze_lambda: false,
            kappa: DEFAULT_EPISODE_LEN as f64,
            window: DEFAULT_WINDOW,
            agent: AgentConfig::default(),
            metal_lr_meta: DEFAULT_LR_META,
            outer_loss_kind: OuterLossKind::CriticOnly,
            mesh: MeshConfig::default(),
            output: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| HarnessError::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(HarnessError::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "agent",
    "env",
    "safety_coefficient",
    "threshold_beta",
    "seeds",
    "episodes",
    "episode_len",
    "rs_lambda",
    "initial_lambda",
    "freeze_lambda",
    "kappa",
    "window",
    "output",
    "agent.gamma",
    "agent.n_step",
    "agent.lr_actor",
    "agent.lr_critic",
    "agent.lr_lagrange",
    "agent.target_update_period",
    "agent.exploration_sigma",
    "agent.batch_size",
    "agent.split_fraction",
    "agent.warmup",
    "agent.replay_capacity",
    "agent.penalty_capacity",
    "agent.actor_hidden",
    "agent.critic_hidden",
    "agent.hidden_activation",
    "agent.layer_norm",
    "agent.actor_final_init",
    "agent.learner_period",
    "metal.lr_meta",
    "metal.outer_loss_kind",
    "mesh.lambda_hat",
    "mesh.upsilon_s",
    "mesh.upsilon_o",
    "mesh.lr_meta",
    "mesh.shaper_hidden",
    "mesh.formulation",
];

impl ExperimentConfig {
    /// Applies one override. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let v = value.trim();
        let a = &mut self.agent;
        match key {
            "agent" => {
                self.agent_kind =
                    AgentKind::from_name(v).ok_or_else(|| HarnessError::Config(format!("unknown agent `{v}`")))?
            }
            "env" => self.env = EnvKind::from_name(v)?,
            "safety_coefficient" => self.safety_coefficient = parse_num(key, v)?,
            "threshold_beta" => a.threshold_beta = parse_num(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "episodes" => self.episodes = parse_num(key, v)?,
            "episode_len" => self.episode_len = parse_num(key, v)?,
            "rs_lambda" => self.rs_lambda = parse_num(key, v)?,
            "initial_lambda" => self.initial_lambda = parse_num(key, v)?,
            "freeze_lambda" => self.freeze_lambda = parse_bool(key, v)?,
            "kappa" => self.kappa = parse_num(key, v)?,
            "window" => self.window = parse_num(key, v)?,
            "output" => self.output = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "agent.gamma" => a.gamma = parse_num(key, v)?,
            "agent.n_step" => a.n_step = parse_num(key, v)?,
            "agent.lr_actor" => a.lr_actor = parse_num(key, v)?,
            "agent.lr_critic" => a.lr_critic = parse_num(key, v)?,
            "agent.lr_lagrange" => a.lr_lagrange = parse_num(key, v)?,
            "agent.target_update_period" => a.target_update_period = parse_num(key, v)?,
            "agent.exploration_sigma" => a.exploration_sigma = parse_num(key, v)?,
            "agent.batch_size" => a.batch_size = parse_num(key, v)?,
            "agent.split_fraction" => a.split_fraction = parse_num(key, v)?,
            "agent.warmup" => a.warmup = parse_num(key, v)?,
            "agent.replay_capacity" => a.replay_capacity = parse_num(key, v)?,
            "agent.penalty_capacity" => a.penalty_capacity = parse_num(key, v)?,
            "agent.actor_hidden" => a.actor_hidden = parse_list(key, v)?,
            "agent.critic_hidden" => a.critic_hidden = parse_list(key, v)?,
            "agent.hidden_activation" => {
                a.hidden_activation = match v {
                    "elu" => Activation::Elu,
                    "tanh" => Activation::Tanh,
                    _ => return Err(HarnessError::Config(format!("`{key}`: expected elu or tanh, got `{v}`"))),
                }
            }
            "agent.layer_norm" => a.layer_norm = parse_bool(key, v)?,
            "agent.actor_final_init" => a.actor_final_init = parse_num(key, v)?,
            "agent.learner_period" => a.learner_period = parse_num(key, v)?,
            "metal.lr_meta" => self.metal_lr_meta = parse_num(key, v)?,
            "metal.outer_loss_kind" => {
                self.outer_loss_kind = OuterLossKind::from_name(v)
                    .ok_or_else(|| HarnessError::Config(format!("unknown outer loss `{v}`")))?
            }
            "mesh.lambda_hat" => self.mesh.lambda_hat = parse_num(key, v)?,
            "mesh.upsilon_s" => self.mesh.upsilon_s = parse_num(key, v)?,
            "mesh.upsilon_o" => self.mesh.upsilon_o = parse_num(key, v)?,
            "mesh.lr_meta" => self.mesh.lr_meta = parse_num(key, v)?,
            "mesh.shaper_hidden" => self.mesh.shaper_hidden = parse_list(key, v)?,
            "mesh.formulation" => {
                self.mesh.formulation = Formulation::from_name(v)
                    .ok_or_else(|| HarnessError::Config(format!("unknown formulation `{v}`")))?
            }
            _ => return Err(HarnessError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let a = &self.agent;
        Some(match key {
            "agent" => self.agent_kind.name().to_string(),
            "env" => self.env.name().to_string(),
            "safety_coefficient" => self.safety_coefficient.to_string(),
            "threshold_beta" => a.threshold_beta.to_string(),
            "seeds" => join(&self.seeds),
            "episodes" => self.episodes.to_string(),
            "episode_len" => self.episode_len.to_string(),
            "rs_lambda" => self.rs_lambda.to_string(),
            "initial_lambda" => self.initial_lambda.to_string(),
            "freeze_lambda" => self.freeze_lambda.to_string(),
            "kappa" => self.kappa.to_string(),
            "window" => self.window.to_string(),
            "output" => self.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "agent.gamma" => a.gamma.to_string(),
            "agent.n_step" => a.n_step.to_string(),
            "agent.lr_actor" => a.lr_actor.to_string(),
            "agent.lr_critic" => a.lr_critic.to_string(),
            "agent.lr_lagrange" => a.lr_lagrange.to_string(),
            "agent.target_update_period" => a.target_update_period.to_string(),
            "agent.exploration_sigma" => a.exploration_sigma.to_string(),
            "agent.batch_size" => a.batch_size.to_string(),
            "agent.split_fraction" => a.split_fraction.to_string(),
            "agent.warmup" => a.warmup.to_string(),
            "agent.replay_capacity" => a.replay_capacity.to_string(),
            "agent.penalty_capacity" => a.penalty_capacity.to_string(),
            "agent.actor_hidden" => join(&a.actor_hidden),
            "agent.critic_hidden" => join(&a.critic_hidden),
            "agent.hidden_activation" => a.hidden_activation.name().to_string(),
            "agent.layer_norm" => a.layer_norm.to_string(),
            "agent.actor_final_init" => a.actor_final_init.to_string(),
            "agent.learner_period" => a.learner_period.to_string(),
            "metal.lr_meta" => self.metal_lr_meta.to_string(),
            "metal.outer_loss_kind" => self.outer_loss_kind.name().to_string(),
            "mesh.lambda_hat" => self.mesh.lambda_hat.to_string(),
            "mesh.upsilon_s" => self.mesh.upsilon_s.to_string(),
            "mesh.upsilon_o" => self.mesh.upsilon_o.to_string(),
            "mesh.lr_meta" => self.mesh.lr_meta.to_string(),
            "mesh.shaper_hidden" => join(&self.mesh.shaper_hidden),
            "mesh.formulation" => self.mesh.formulation.name().to_string(),
            _ => return None,
        })
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| HarnessError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form listing every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("listed key"));
        }
        s
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.agent.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.episodes == 0 || self.episode_len == 0 {
            return bad("episodes and episode_len must be >= 1");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.rs_lambda < 0.0 || self.initial_lambda < 0.0 || self.kappa < 0.0 {
            return bad("rs_lambda, initial_lambda and kappa must be >= 0");
        }
        if !(self.metal_lr_meta >= 0.0 && self.mesh.lr_meta >= 0.0) {
            return bad("meta learning rates must be >= 0");
        }
        if self.mesh.shaper_hidden.contains(&0) {
            return bad("mesh.shaper_hidden widths must be >= 1");
        }
        crate::env::SafetyConfig::new(self.safety_coefficient, self.agent.threshold_beta)?;
        Ok(())
    }

    /// Identifier used in summaries: `rs-<λ̄>` for RS, the agent name otherwise.
    pub fn agent_label(&self) -> String {
        match self.agent_kind {
            AgentKind::Rs => format!("rs-{}", self.rs_lambda),
            AgentKind::Rc if self.freeze_lambda => format!("rc-frozen-{}", self.initial_lambda),
            k => k.name().to_string(),
        }
    }

    /// Parses labels produced by [`ExperimentConfig::agent_label`], so sweeps
    /// can list `rs-0.1`, `rs-10`, `rc`, `metal`, ….
    pub fn apply_label(&mut self, label: &str) -> Result<(), HarnessError> {
        if let Some(l) = label.strip_prefix("rs-") {
            self.agent_kind = AgentKind::Rs;
            self.rs_lambda = parse_num("agent", l)?;
        } else if let Some(l) = label.strip_prefix("rc-frozen-") {
            self.agent_kind = AgentKind::Rc;
            self.freeze_lambda = true;
            self.initial_lambda = parse_num("agent", l)?;
        } else {
            self.set("agent", label)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let cfg = ExperimentConfig::default();
        for key in KEYS {
            let mut other = ExperimentConfig::default();
            other.set(key, &cfg.get(key).unwrap()).unwrap();
            assert_eq!(other, cfg, "{key}");
        }
    }

    #[test]
    fn text_round_trip_is_idempotent() {
        let text = "agent = rc\n# comment\nseeds = 1, 2,3\nagent.lr_critic = 0.01  # trailing\nmetal.lr_meta=0.5\n\
                    agent.critic_hidden = 16,8\nmesh.formulation = scale_whole\noutput = /tmp/x\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.agent.critic_hidden, vec![16, 8]);
        let once = cfg.to_text();
        let again = ExperimentConfig::parse(&once).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), once);
    }

    #[test]
    fn strict_parsing() {
        assert!(ExperimentConfig::parse("agent.lr_critc = 0.1").is_err());
        assert!(ExperimentConfig::parse("agent = sac").is_err());
        assert!(ExperimentConfig::parse("episodes = many").is_err());
        assert!(ExperimentConfig::parse("freeze_lambda = yes").is_err());
        assert!(ExperimentConfig::parse("just text").is_err());
        assert!(ExperimentConfig::parse("env = cartpole").is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let mut c = ExperimentConfig::default();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let c = ExperimentConfig { safety_coefficient: 0.0, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn labels() {
        let mut c = ExperimentConfig::default();
        c.apply_label("rs-10").unwrap();
        assert_eq!((c.agent_kind, c.rs_lambda), (AgentKind::Rs, 10.0));
        assert_eq!(c.agent_label(), "rs-10");
        c.apply_label("rc-frozen-0.5").unwrap();
        assert_eq!(c.agent_label(), "rc-frozen-0.5");
        c.apply_label("metal").unwrap();
        assert_eq!(c.agent_label(), "metal");
        assert!(c.apply_label("rs-x").is_err());
    }
}
