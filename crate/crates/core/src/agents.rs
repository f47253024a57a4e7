//! Deterministic actor-critic core and the non-meta baselines.
//!
//! D4PG-lite uses a non-distributional critic trained on n-step TD targets
//! with hard-copied target networks. Reward shaping (RS) trains the same
//! critic on `r − λ̄·c` with a fixed multiplier; RC-D4PG additionally moves
//! `λ` by projected gradient steps on the sampled episode penalty. The three
//! share every code path, so fixing `λ` in RC reproduces RS exactly.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::approx::{Activation, MlpShape, OutputActivation, ParamVector};
use crate::env::CmdpSpec;
use crate::error::{AgentError, ApproxError};
use crate::replay::{Batch, Transition};

/// Learning hyperparameters shared by every agent variant.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub n_step: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_lagrange: f64,
    pub target_update_period: usize,
    pub exploration_sigma: f64,
    pub batch_size: usize,
    /// Multiplier used by the RS baseline, and the starting point of RC.
    pub fixed_lambda: f64,
    pub threshold_beta: f64,
    pub split_fraction: f64,
    pub warmup: usize,
    pub replay_capacity: usize,
    pub penalty_capacity: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub layer_norm: bool,
    /// Output-layer init range relative to `1/√fan_in`, for the actor.
    pub actor_final_init: f64,
    /// Environment steps per learner step.
    pub learner_period: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_step: 5,
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            lr_lagrange: 1e-3,
            target_update_period: 100,
            exploration_sigma: 0.1,
            batch_size: 64,
            fixed_lambda: 0.0,
            threshold_beta: 0.1,
            split_fraction: crate::replay::DEFAULT_SPLIT_FRACTION,
            warmup: 1000,
            replay_capacity: crate::replay::DEFAULT_CAPACITY,
            penalty_capacity: crate::replay::DEFAULT_PENALTY_CAPACITY,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            hidden_activation: Activation::Elu,
            layer_norm: false,
            actor_final_init: 1.0,
            learner_period: 1,
        }
    }
}

impl AgentConfig {
    /// Full-scale settings: batch 256, replay 10⁶ and the
    /// 256-256-256 / 512-512-256 networks with first-layer normalization.
    pub fn full_scale() -> Self {
        Self {
            batch_size: 256,
            replay_capacity: crate::replay::LARGE_CAPACITY,
            actor_hidden: vec![256, 256, 256],
            critic_hidden: vec![512, 512, 256],
            layer_norm: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        for (name, v) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic), ("lr_lagrange", self.lr_lagrange)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.n_step == 0 || self.target_update_period == 0 || self.batch_size < 2 || self.learner_period == 0 {
            return bad("n_step, target_update_period and learner_period must be >= 1, batch_size >= 2".into());
        }
        if self.exploration_sigma < 0.0 || self.fixed_lambda < 0.0 || self.threshold_beta < 0.0 {
            return bad("exploration_sigma, fixed_lambda and threshold_beta must be >= 0".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction {} outside (0, 1)", self.split_fraction));
        }
        if self.replay_capacity < self.batch_size || self.penalty_capacity == 0 {
            return bad("replay_capacity must hold a batch and penalty_capacity must be >= 1".into());
        }
        if self.warmup < self.batch_size {
            return bad(format!("warmup {} smaller than batch_size {}", self.warmup, self.batch_size));
        }
        if self.actor_final_init.is_nan() || self.actor_final_init < 0.0 {
            return bad("actor_final_init must be >= 0".into());
        }
        Ok(())
    }

    /// True when the rates follow `α₁ < α_actor ≤ α_critic`; logs a warning otherwise.
    pub fn check_rate_ordering(&self) -> bool {
        let ok = self.lr_lagrange < self.lr_actor && self.lr_actor <= self.lr_critic;
        if !ok {
            log::warn!(
                "learning rates lr_lagrange={} lr_actor={} lr_critic={} break the ordering lr_lagrange < lr_actor <= lr_critic",
                self.lr_lagrange,
                self.lr_actor,
                self.lr_critic
            );
        }
        ok
    }
}

/// Actor and critic architectures for one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub actor: MlpShape,
    pub critic: MlpShape,
    pub obs_dim: usize,
    pub act_dim: usize,
    action_center: Vec<f64>,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

impl Networks {
    /// Tanh actor scaled to the action box, identity-output critic on `[s; a]`.
    pub fn new(spec: &CmdpSpec, cfg: &AgentConfig) -> Result<Self, AgentError> {
        let half: Vec<f64> = spec.action_low.iter().zip(&spec.action_high).map(|(lo, hi)| 0.5 * (hi - lo)).collect();
        if half.iter().any(|h| (h - half[0]).abs() > 1e-12 || *h <= 0.0) {
            return Err(AgentError::Config("action bounds must share one positive width".into()));
        }
        let actor = MlpShape::new(
            spec.obs_dim,
            cfg.actor_hidden.clone(),
            spec.act_dim,
            cfg.hidden_activation,
            OutputActivation::ScaledTanh(half[0]),
        )?
        .with_layer_norm(cfg.layer_norm);
        let critic = MlpShape::new(
            spec.obs_dim + spec.act_dim,
            cfg.critic_hidden.clone(),
            1,
            cfg.hidden_activation,
            OutputActivation::Identity,
        )?
        .with_layer_norm(cfg.layer_norm);
        Self::from_shapes(spec, actor, critic)
    }

    /// Custom shapes, e.g. linear critics for hand-checkable instances.
    pub fn from_shapes(spec: &CmdpSpec, actor: MlpShape, critic: MlpShape) -> Result<Self, AgentError> {
        if actor.input_dim != spec.obs_dim || actor.output_dim != spec.act_dim {
            return Err(AgentError::Config("actor shape does not match the environment".into()));
        }
        if critic.input_dim != spec.obs_dim + spec.act_dim || critic.output_dim != 1 {
            return Err(AgentError::Config("critic must map [s; a] to a scalar".into()));
        }
        let action_center = spec.action_low.iter().zip(&spec.action_high).map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        Ok(Self {
            actor,
            critic,
            obs_dim: spec.obs_dim,
            act_dim: spec.act_dim,
            action_center,
            action_low: spec.action_low.clone(),
            action_high: spec.action_high.clone(),
        })
    }

    pub fn critic_input(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        x
    }

    /// Deterministic policy output `π(s)`.
    pub fn policy(&self, theta_a: &ParamVector, s: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let mut a = self.actor.forward(theta_a, s)?;
        for (ai, c) in a.iter_mut().zip(&self.action_center) {
            *ai += c;
        }
        Ok(a)
    }

    pub fn q_value(&self, theta_c: &ParamVector, s: &[f64], a: &[f64]) -> Result<f64, ApproxError> {
        Ok(self.critic.forward(theta_c, &self.critic_input(s, a))?[0])
    }

    /// `∇_θc Q(s, a)`.
    pub fn q_param_grad(&self, theta_c: &ParamVector, s: &[f64], a: &[f64]) -> Result<Vec<f64>, ApproxError> {
        self.critic.grad_params(theta_c, &self.critic_input(s, a), &[1.0])
    }

    /// `∇_a Q(s, a)`.
    pub fn q_action_grad(&self, theta_c: &ParamVector, s: &[f64], a: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let g = self.critic.grad_input(theta_c, &self.critic_input(s, a), &[1.0])?;
        Ok(g[self.obs_dim..].to_vec())
    }

    /// `(∂π(s)/∂θa)ᵀ · cotangent` added into `acc` with weight `scale`.
    pub fn accumulate_policy_vjp(
        &self,
        theta_a: &ParamVector,
        s: &[f64],
        cotangent: &[f64],
        scale: f64,
        acc: &mut [f64],
    ) -> Result<(), ApproxError> {
        self.actor.trace(theta_a, s)?.backward(theta_a, cotangent, scale, Some(acc))?;
        Ok(())
    }

    pub fn clip_action(&self, a: &mut [f64]) {
        for (ai, (lo, hi)) in a.iter_mut().zip(self.action_low.iter().zip(&self.action_high)) {
            *ai = ai.clamp(*lo, *hi);
        }
    }
}

/// Borrowed target networks `(π_T, Q_T)`.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub actor: &'a ParamVector,
    pub critic: &'a ParamVector,
}

/// Online and target parameters with the current multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub theta_a: ParamVector,
    pub theta_c: ParamVector,
    pub theta_a_target: ParamVector,
    pub theta_c_target: ParamVector,
    pub lambda: f64,
    pub step_counter: usize,
}

impl ActorCritic {
    pub fn new(theta_a: ParamVector, theta_c: ParamVector, lambda: f64) -> Self {
        Self {
            theta_a_target: theta_a.clone(),
            theta_c_target: theta_c.clone(),
            theta_a,
            theta_c,
            lambda: lambda.max(0.0),
            step_counter: 0,
        }
    }

    pub fn init<R: Rng + ?Sized>(nets: &Networks, cfg: &AgentConfig, rng: &mut R) -> Self {
        let theta_a = nets.actor.init_scaled(rng, cfg.actor_final_init);
        let theta_c = nets.critic.init(rng);
        Self::new(theta_a, theta_c, cfg.fixed_lambda)
    }

    pub fn targets(&self) -> Targets<'_> {
        Targets { actor: &self.theta_a_target, critic: &self.theta_c_target }
    }
}

/// `π(obs)` plus optional Gaussian exploration noise, clipped to the action box.
pub fn act<R: Rng + ?Sized>(
    nets: &Networks,
    theta_a: &ParamVector,
    obs: &[f64],
    explore: bool,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>, ApproxError> {
    let mut a = nets.policy(theta_a, obs)?;
    if explore && sigma > 0.0 {
        let noise = Normal::new(0.0, sigma).expect("finite positive sigma");
        for ai in &mut a {
            *ai += noise.sample(rng);
        }
    }
    nets.clip_action(&mut a);
    Ok(a)
}

/// `γⁿ·Q_T(s', π_T(s'))`, zero for terminal windows.
pub fn bootstrap(nets: &Networks, targets: Targets<'_>, t: &Transition) -> Result<f64, ApproxError> {
    if t.discount_prod == 0.0 {
        return Ok(0.0);
    }
    let a_next = nets.policy(targets.actor, &t.s_next)?;
    Ok(t.discount_prod * nets.q_value(targets.critic, &t.s_next, &a_next)?)
}

/// Shaped TD loss `δ²` and the error `δ = r_sum − λ·c_sum + γⁿQ_T − Q`.
pub fn critic_loss(
    nets: &Networks,
    theta_c: &ParamVector,
    targets: Targets<'_>,
    item: &Transition,
    lambda: f64,
) -> Result<(f64, f64), ApproxError> {
    let delta =
        item.shaped_reward(lambda) + bootstrap(nets, targets, item)? - nets.q_value(theta_c, &item.s, &item.a)?;
    Ok((delta * delta, delta))
}

/// One gradient-descent step on the mean squared TD error, where the
/// immediate part of each target is supplied by `immediate`.
pub fn critic_step_with<F>(
    nets: &Networks,
    theta_c: &ParamVector,
    targets: Targets<'_>,
    train: &[Transition],
    immediate: F,
    lr: f64,
) -> Result<ParamVector, ApproxError>
where
    F: Fn(usize, &Transition) -> f64,
{
    let mut grad = vec![0.0; theta_c.len()];
    for (i, t) in train.iter().enumerate() {
        let boot = bootstrap(nets, targets, t)?;
        let trace = nets.critic.trace(theta_c, &nets.critic_input(&t.s, &t.a))?;
        let delta = immediate(i, t) + boot - trace.scalar();
        trace.backward(theta_c, &[delta], 1.0, Some(&mut grad))?;
    }
    let mut next = theta_c.clone();
    next.axpy(2.0 * lr / train.len() as f64, &grad);
    Ok(next)
}

/// `θc' = θc + (2·lr/|B|)·Σ δᵢ ∇Q(sᵢ, aᵢ)` with shaped reward `r − λ·c`.
pub fn critic_step(
    nets: &Networks,
    theta_c: &ParamVector,
    targets: Targets<'_>,
    train: &[Transition],
    lambda: f64,
    lr: f64,
) -> Result<ParamVector, ApproxError> {
    critic_step_with(nets, theta_c, targets, train, |_, t| t.shaped_reward(lambda), lr)
}

/// Deterministic policy gradient ascent:
/// `θa' = θa + (lr/|B|)·Σ (∂π/∂θa)ᵀ ∇_a Q(sᵢ, π(sᵢ))`. The critic is read only.
pub fn actor_step(
    nets: &Networks,
    theta_a: &ParamVector,
    theta_c: &ParamVector,
    train: &[Transition],
    lr: f64,
) -> Result<ParamVector, ApproxError> {
    let mut grad = vec![0.0; theta_a.len()];
    for t in train {
        let trace = nets.actor.trace(theta_a, &t.s)?;
        let a = nets.policy(theta_a, &t.s)?;
        let dq_da = nets.q_action_grad(theta_c, &t.s, &a)?;
        trace.backward(theta_a, &dq_da, 1.0, Some(&mut grad))?;
    }
    let mut next = theta_a.clone();
    next.axpy(lr / train.len() as f64, &grad);
    Ok(next)
}

/// Hard-copies online parameters into the targets when the counter hits
/// a multiple of `period`. Returns whether a copy happened.
pub fn target_sync(state: &mut ActorCritic, period: usize) -> bool {
    if period == 0 || state.step_counter == 0 || !state.step_counter.is_multiple_of(period) {
        return false;
    }
    state.theta_a_target.copy_from(&state.theta_a);
    state.theta_c_target.copy_from(&state.theta_c);
    true
}

/// `λ' = max(0, λ − α₁·(β − J_C))`: violations push `λ` up.
pub fn lagrange_step_rc(lambda: f64, episode_penalty: f64, beta: f64, lr: f64) -> f64 {
    (lambda - lr * (beta - episode_penalty)).max(0.0)
}

/// Per-iteration quantities surfaced to telemetry.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IterationStats {
    pub outer_loss: Option<f64>,
    pub meta_gradient: Option<f64>,
    pub kappa_s: Option<f64>,
    pub kappa_o: Option<f64>,
}

/// A learner owned by the training loop. One call to [`Learner::learn`] is
/// one learner iteration on a freshly sampled batch.
pub trait Learner: Send {
    fn policy_params(&self) -> &ParamVector;
    fn networks(&self) -> &Networks;
    /// Whether [`Learner::learn`] consumes a sampled episode penalty.
    fn needs_penalty(&self) -> bool;
    fn learn(&mut self, batch: &Batch, episode_penalty: Option<f64>) -> Result<IterationStats, AgentError>;
    fn lambda(&self) -> f64;
    fn alpha_lambda(&self) -> f64 {
        0.0
    }
    /// Effective Lagrange learning rate applied by the last update (0 when none).
    fn scaled_lr(&self) -> f64;
}

/// How a shaped learner treats its multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagrangeRule {
    /// λ stays at its initial value (D4PG-lite at 0, RS at λ̄).
    Frozen,
    /// Projected gradient step each iteration (RC-D4PG).
    Projected,
}

/// D4PG-lite, RS-D4PG and RC-D4PG.
#[derive(Debug, Clone)]
pub struct ShapedLearner {
    pub nets: Networks,
    pub cfg: AgentConfig,
    pub state: ActorCritic,
    pub rule: LagrangeRule,
    /// RC with the Lagrange step switched off still draws penalties, so its
    /// random streams line up with the running variant.
    pub draw_penalties: bool,
}

impl ShapedLearner {
    pub fn new(nets: Networks, cfg: AgentConfig, state: ActorCritic, rule: LagrangeRule) -> Self {
        let draw_penalties = rule == LagrangeRule::Projected;
        Self { nets, cfg, state, rule, draw_penalties }
    }
}

impl Learner for ShapedLearner {
    fn policy_params(&self) -> &ParamVector {
        &self.state.theta_a
    }

    fn networks(&self) -> &Networks {
        &self.nets
    }

    fn needs_penalty(&self) -> bool {
        self.draw_penalties
    }

    fn learn(&mut self, batch: &Batch, episode_penalty: Option<f64>) -> Result<IterationStats, AgentError> {
        if let (LagrangeRule::Projected, Some(j_c)) = (self.rule, episode_penalty) {
            self.state.lambda = lagrange_step_rc(self.state.lambda, j_c, self.cfg.threshold_beta, self.cfg.lr_lagrange);
        }
        let theta_c = critic_step(
            &self.nets,
            &self.state.theta_c,
            self.state.targets(),
            &batch.train,
            self.state.lambda,
            self.cfg.lr_critic,
        )?;
        let theta_a =
            actor_step(&self.nets, &self.state.theta_a, &self.state.theta_c, &batch.train, self.cfg.lr_actor)?;
        self.state.theta_c = theta_c;
        self.state.theta_a = theta_a;
        self.state.step_counter += 1;
        target_sync(&mut self.state, self.cfg.target_update_period);
        Ok(IterationStats::default())
    }

    fn lambda(&self) -> f64 {
        self.state.lambda
    }

    fn scaled_lr(&self) -> f64 {
        match self.rule {
            LagrangeRule::Projected => self.cfg.lr_lagrange,
            LagrangeRule::Frozen => 0.0,
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn unit_spec() -> CmdpSpec {
        CmdpSpec { obs_dim: 1, act_dim: 1, episode_len: 10, action_low: vec![-1.0], action_high: vec![1.0] }
    }

    /// Linear actor `a = θ·s` and linear critic `Q = w_s·s + w_a·a`, no biases.
    pub fn linear_nets() -> Networks {
        let actor = MlpShape::new(1, vec![], 1, Activation::Elu, OutputActivation::Identity).unwrap().without_bias();
        let critic = MlpShape::new(2, vec![], 1, Activation::Elu, OutputActivation::Identity).unwrap().without_bias();
        Networks::from_shapes(&unit_spec(), actor, critic).unwrap()
    }

    pub fn pv(shape: &MlpShape, v: Vec<f64>) -> ParamVector {
        shape.zeros().with_values(v).unwrap()
    }

    pub fn small_nets(seed: u64) -> (Networks, ActorCritic) {
        use rand::SeedableRng;
        let spec = CmdpSpec { obs_dim: 2, act_dim: 1, episode_len: 10, action_low: vec![-1.0], action_high: vec![1.0] };
        let cfg = AgentConfig { actor_hidden: vec![5, 4], critic_hidden: vec![6, 5], ..AgentConfig::default() };
        let nets = Networks::new(&spec, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut ac = ActorCritic::init(&nets, &cfg, &mut rng);
        ac.theta_a_target = nets.actor.init(&mut rng);
        ac.theta_c_target = nets.critic.init(&mut rng);
        (nets, ac)
    }

    pub fn random_transitions(seed: u64, n: usize, obs_dim: usize) -> Vec<Transition> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Transition {
                s: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                a: vec![rng.random_range(-1.0..1.0)],
                r_sum: rng.random_range(0.0..3.0),
                c_sum: if rng.random_bool(0.5) { rng.random_range(0.0..3.0) } else { 0.0 },
                s_next: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                discount_prod: if rng.random_bool(0.8) { 0.95 } else { 0.0 },
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A transition whose bootstrap evaluates to `0.9 · 0.4/0.9 = 0.4·…`; we
    /// build targets so that `γⁿ Q_T(s', π_T(s')) = 0.36`.
    fn worked_setup() -> (Networks, ParamVector, ParamVector, ParamVector, Transition) {
        let nets = linear_nets();
        // Online critic Q = 0.5·s (w_a = 0), evaluated at s = 1: Q = 0.5.
        let theta_c = pv(&nets.critic, vec![0.5, 0.0]);
        // Target actor outputs 0; target critic Q_T(s') = 0.4·s' with s' = 1.
        let target_actor = pv(&nets.actor, vec![0.0]);
        let target_critic = pv(&nets.critic, vec![0.4, 0.0]);
        let t =
            Transition { s: vec![1.0], a: vec![0.0], r_sum: 1.0, c_sum: 1.0, s_next: vec![1.0], discount_prod: 0.9 };
        (nets, theta_c, target_actor, target_critic, t)
    }

    #[test]
    fn critic_loss_by_hand() {
        let (nets, theta_c, ta, tc, t) = worked_setup();
        let targets = Targets { actor: &ta, critic: &tc };
        let (loss, delta) = critic_loss(&nets, &theta_c, targets, &t, 0.2).unwrap();
        assert!((delta - 0.66).abs() < 1e-12);
        assert!((loss - 0.4356).abs() < 1e-12);
        // λ = 0 is the unconstrained TD error.
        let (_, d0) = critic_loss(&nets, &theta_c, targets, &t, 0.0).unwrap();
        assert!((d0 - (1.0 + 0.36 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_td_error_means_zero_loss() {
        let (nets, theta_c, ta, tc, mut t) = worked_setup();
        t.r_sum = 0.5 - 0.36;
        t.c_sum = 0.0;
        let (loss, _) = critic_loss(&nets, &theta_c, Targets { actor: &ta, critic: &tc }, &t, 0.2).unwrap();
        assert!(loss < 1e-24);
    }

    #[test]
    fn critic_step_by_hand() {
        let (nets, theta_c, ta, tc, t) = worked_setup();
        let next = critic_step(&nets, &theta_c, Targets { actor: &ta, critic: &tc }, &[t], 0.2, 0.1).unwrap();
        assert!((next.values()[0] - 0.632).abs() < 1e-12);
        // The action input is 0, so the action weight does not move.
        assert_eq!(next.values()[1], 0.0);
    }

    #[test]
    fn critic_step_is_stationary_at_zero_error() {
        let (nets, theta_c, ta, tc, mut t) = worked_setup();
        t.r_sum = 0.5 - 0.36;
        t.c_sum = 0.0;
        let next = critic_step(&nets, &theta_c, Targets { actor: &ta, critic: &tc }, &[t], 0.2, 0.1).unwrap();
        assert!((next.values()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn critic_step_descends() {
        let (nets, ac) = small_nets(3);
        let batch = random_transitions(4, 16, 2);
        let mean_loss = |theta: &ParamVector| {
            batch.iter().map(|t| critic_loss(&nets, theta, ac.targets(), t, 0.7).unwrap().0).sum::<f64>()
                / batch.len() as f64
        };
        let before = mean_loss(&ac.theta_c);
        let next = critic_step(&nets, &ac.theta_c, ac.targets(), &batch, 0.7, 1e-3).unwrap();
        assert!(mean_loss(&next) < before);
    }

    #[test]
    fn actor_step_by_hand() {
        let nets = linear_nets();
        let theta_a = pv(&nets.actor, vec![0.0]);
        // Q(s, a) = 1·a.
        let theta_c = pv(&nets.critic, vec![0.0, 1.0]);
        let t =
            Transition { s: vec![1.0], a: vec![0.0], r_sum: 0.0, c_sum: 0.0, s_next: vec![1.0], discount_prod: 0.0 };
        let next = actor_step(&nets, &theta_a, &theta_c, std::slice::from_ref(&t), 0.1).unwrap();
        assert!((next.values()[0] - 0.1).abs() < 1e-15);
        // Flat critic in a: nothing moves.
        let flat = pv(&nets.critic, vec![0.3, 0.0]);
        assert_eq!(actor_step(&nets, &theta_a, &flat, &[t], 0.1).unwrap(), theta_a);
    }

    #[test]
    fn actor_step_follows_finite_differences() {
        let (nets, ac) = small_nets(8);
        let batch = random_transitions(9, 8, 2);
        let objective = |theta_a: &ParamVector| {
            batch
                .iter()
                .map(|t| {
                    let a = nets.policy(theta_a, &t.s).unwrap();
                    nets.q_value(&ac.theta_c, &t.s, &a).unwrap()
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        let lr = 1.0;
        let next = actor_step(&nets, &ac.theta_a, &ac.theta_c, &batch, lr).unwrap();
        let h = 1e-6;
        for k in 0..ac.theta_a.len() {
            let mut plus = ac.theta_a.clone();
            plus.values_mut()[k] += h;
            let mut minus = ac.theta_a.clone();
            minus.values_mut()[k] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let step = next.values()[k] - ac.theta_a.values()[k];
            assert!((step - fd).abs() <= 1e-5 * fd.abs().max(1e-6), "coord {k}: {step} vs {fd}");
        }
    }

    #[test]
    fn act_without_noise_is_the_policy() {
        let (nets, ac) = small_nets(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = [0.3, -0.2];
        let a = act(&nets, &ac.theta_a, &obs, false, 0.1, &mut rng).unwrap();
        assert_eq!(a, nets.policy(&ac.theta_a, &obs).unwrap());
        let zero = nets.actor.zeros();
        assert_eq!(act(&nets, &zero, &obs, false, 0.1, &mut rng).unwrap(), vec![0.0]);
        let n1 = act(&nets, &ac.theta_a, &obs, true, 0.1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let n2 = act(&nets, &ac.theta_a, &obs, true, 0.1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(n1, n2);
        assert_ne!(n1, a);
    }

    #[test]
    fn target_sync_period() {
        let (_, mut ac) = small_nets(2);
        ac.step_counter = 99;
        assert!(!target_sync(&mut ac, 100));
        assert_ne!(ac.theta_a_target, ac.theta_a);
        ac.step_counter = 100;
        assert!(target_sync(&mut ac, 100));
        assert_eq!(ac.theta_a_target, ac.theta_a);
        assert_eq!(ac.theta_c_target, ac.theta_c);
        let snapshot = ac.clone();
        target_sync(&mut ac, 100);
        assert_eq!(ac, snapshot);
    }

    #[test]
    fn lagrange_step_by_hand() {
        assert!((lagrange_step_rc(0.5, 0.3, 0.1, 0.01) - 0.502).abs() < 1e-15);
        assert_eq!(lagrange_step_rc(0.5, 0.1, 0.1, 0.01), 0.5);
        assert_eq!(lagrange_step_rc(0.001, 0.1, 0.3, 0.01), 0.0);
    }

    #[test]
    fn config_checks() {
        assert!(AgentConfig::default().validate().is_ok());
        assert!(AgentConfig::full_scale().validate().is_ok());
        assert!(AgentConfig { gamma: 1.0, ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig { lr_critic: 0.0, ..AgentConfig::default() }.validate().is_err());
        assert!(!AgentConfig { lr_lagrange: 1e-3, lr_actor: 1e-4, ..AgentConfig::default() }.check_rate_ordering());
        assert!(AgentConfig { lr_lagrange: 1e-5, ..AgentConfig::default() }.check_rate_ordering());
    }

    proptest::proptest! {
        #[test]
        fn lambda_never_negative(lambda in 0.0f64..5.0, j in 0.0f64..1.0, beta in 0.0f64..1.0, lr in 1e-4f64..1.0) {
            proptest::prop_assert!(lagrange_step_rc(lambda, j, beta, lr) >= 0.0);
        }

        #[test]
        fn persistent_violation_raises_lambda(lambda in 0.0f64..5.0, excess in 1e-3f64..0.5, lr in 1e-4f64..0.1) {
            let next = lagrange_step_rc(lambda, 0.2 + excess, 0.2, lr);
            proptest::prop_assert!(next > lambda);
        }
    }
}
