//! Meta-learned Lagrange learning rate.
//!
//! The multiplier moves with effective rate `α₁·exp(α_λ)`. After each inner
//! update, `α_λ` takes one gradient step on an outer loss evaluated on the
//! validation split at the updated critic and multiplier.
//!
//! Chain used by [`metal_meta_gradient`], with `D = ∂λ'/∂α_λ`:
//!
//! ```text
//! D       = α₁·exp(α_λ)·(J_C − β)          (0 when the projection is active)
//! G       = (2α_c/|T|)·Σ_j c_j ∇Q(θ_c; s_j, a_j)
//! dθ'_c   = −D·G
//! ∂J'/∂α  = mean_i 2δ'_i·D·(⟨∇Q(θ'_c; s_i, a_i), G⟩ − c_i)
//! ```
//!
//! For a single item used for both the step and the evaluation this is
//! `−2δ·c·D·(1 − 2α_c⟨∇Q', ∇Q⟩)`, see [`single_item_meta_gradient`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    actor_step, bootstrap, critic_step, target_sync, ActorCritic, AgentConfig, IterationStats, Learner, Networks,
    Targets,
};
use crate::approx::{dot, Activation, MlpShape, OutputActivation, ParamVector};
use crate::env::CmdpSpec;
use crate::error::{AgentError, ApproxError};
use crate::replay::{Batch, Transition};

pub const DEFAULT_LR_META: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaState {
    pub alpha_lambda: f64,
    pub lambda: f64,
    pub lr_meta: f64,
    pub lr_lagrange_base: f64,
}

impl MetaState {
    pub fn new(lambda: f64, lr_lagrange_base: f64, lr_meta: f64) -> Self {
        Self { alpha_lambda: 0.0, lambda: lambda.max(0.0), lr_meta, lr_lagrange_base }
    }

    /// `α₁·exp(α_λ)`.
    pub fn effective_lr(&self) -> f64 {
        self.lr_lagrange_base * self.alpha_lambda.exp()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum OuterLossKind {
    #[default]
    CriticOnly,
    ActorOnly,
    ActorPlusCritic,
}

impl OuterLossKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "critic_only" => Some(Self::CriticOnly),
            "actor_only" => Some(Self::ActorOnly),
            "actor_plus_critic" => Some(Self::ActorPlusCritic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CriticOnly => "critic_only",
            Self::ActorOnly => "actor_only",
            Self::ActorPlusCritic => "actor_plus_critic",
        }
    }

    fn uses_critic(self) -> bool {
        self != Self::ActorOnly
    }

    fn uses_actor(self) -> bool {
        self != Self::CriticOnly
    }
}

/// `λ' = max(0, λ − α₁·exp(α_λ)·(β − J_C))`.
pub fn lagrange_step_metal(meta: &MetaState, episode_penalty: f64, beta: f64) -> f64 {
    (meta.lambda - meta.effective_lr() * (beta - episode_penalty)).max(0.0)
}

/// Parameters after one inner update.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerUpdate {
    pub lambda: f64,
    pub theta_c: ParamVector,
    pub theta_a: ParamVector,
    /// The projection at zero fired, so `λ'` does not depend on `α_λ`.
    pub clamped: bool,
}

/// One MetaL iteration's inputs, frozen so the inner/outer pipeline can be
/// replayed for finite differences.
#[derive(Debug, Clone, Copy)]
pub struct MetaProblem<'a> {
    pub nets: &'a Networks,
    /// Pre-update online and target parameters.
    pub state: &'a ActorCritic,
    pub meta: &'a MetaState,
    pub batch: &'a Batch,
    pub episode_penalty: f64,
    pub beta: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub kind: OuterLossKind,
}

impl MetaProblem<'_> {
    fn with_alpha(&self, alpha_lambda: f64) -> MetaState {
        MetaState { alpha_lambda, ..*self.meta }
    }

    pub fn inner(&self) -> Result<InnerUpdate, ApproxError> {
        inner_update(
            self.nets,
            self.state,
            self.meta,
            &self.batch.train,
            self.episode_penalty,
            self.beta,
            self.lr_critic,
            self.lr_actor,
        )
    }

    pub fn outer(&self, inner: &InnerUpdate) -> Result<f64, AgentError> {
        outer_loss(self.nets, inner, self.state.targets(), &self.batch.validate, self.kind)
    }

    /// Closed-form `∂J'/∂α_λ` at the problem's `α_λ`.
    pub fn meta_gradient(&self, inner: &InnerUpdate) -> Result<f64, AgentError> {
        if self.batch.validate.is_empty() {
            return Err(AgentError::EmptyValidation);
        }
        let d = if inner.clamped { 0.0 } else { self.meta.effective_lr() * (self.episode_penalty - self.beta) };
        if d == 0.0 {
            return Ok(0.0);
        }
        let g = penalty_sensitivity(self.nets, &self.state.theta_c, &self.batch.train, self.lr_critic)?;
        let nv = self.batch.validate.len() as f64;
        let targets = self.state.targets();
        let mut total = 0.0;
        for t in &self.batch.validate {
            if self.kind.uses_critic() {
                let delta = t.shaped_reward(inner.lambda) + bootstrap(self.nets, targets, t)?
                    - self.nets.q_value(&inner.theta_c, &t.s, &t.a)?;
                let grad_q = self.nets.q_param_grad(&inner.theta_c, &t.s, &t.a)?;
                total += 2.0 * delta * d * (dot(&grad_q, &g) - t.c_sum);
            }
            if self.kind.uses_actor() {
                let a = self.nets.policy(&inner.theta_a, &t.s)?;
                let grad_q = self.nets.q_param_grad(&inner.theta_c, &t.s, &a)?;
                total += d * dot(&grad_q, &g);
            }
        }
        Ok(total / nv)
    }

    /// Central difference of the outer loss in `α_λ`, replaying the inner
    /// update from the same pre-update state on the same batch.
    pub fn fd_meta_gradient(&self, h: f64) -> Result<f64, AgentError> {
        let eval = |alpha: f64| -> Result<f64, AgentError> {
            let meta = self.with_alpha(alpha);
            let p = MetaProblem { meta: &meta, ..*self };
            let inner = p.inner()?;
            p.outer(&inner)
        };
        let a = self.meta.alpha_lambda;
        Ok((eval(a + h)? - eval(a - h)?) / (2.0 * h))
    }
}

/// `G = (2α_c/|T|)·Σ_j c_j ∇Q(θ_c; s_j, a_j)`, the critic step's response to
/// a unit increase of `λ` (with a minus sign).
fn penalty_sensitivity(
    nets: &Networks,
    theta_c: &ParamVector,
    train: &[Transition],
    lr_critic: f64,
) -> Result<Vec<f64>, ApproxError> {
    let mut g = vec![0.0; theta_c.len()];
    let scale = 2.0 * lr_critic / train.len() as f64;
    for t in train.iter().filter(|t| t.c_sum != 0.0) {
        nets.critic.trace(theta_c, &nets.critic_input(&t.s, &t.a))?.backward(
            theta_c,
            &[1.0],
            scale * t.c_sum,
            Some(&mut g),
        )?;
    }
    Ok(g)
}

/// λ first, then the critic on the shaped reward at `λ'`, then the actor
/// against the pre-update critic.
#[allow(clippy::too_many_arguments)]
pub fn inner_update(
    nets: &Networks,
    state: &ActorCritic,
    meta: &MetaState,
    train: &[Transition],
    episode_penalty: f64,
    beta: f64,
    lr_critic: f64,
    lr_actor: f64,
) -> Result<InnerUpdate, ApproxError> {
    let raw = meta.lambda - meta.effective_lr() * (beta - episode_penalty);
    let lambda = raw.max(0.0);
    let theta_c = critic_step(nets, &state.theta_c, state.targets(), train, lambda, lr_critic)?;
    let theta_a = actor_step(nets, &state.theta_a, &state.theta_c, train, lr_actor)?;
    Ok(InnerUpdate { lambda, theta_c, theta_a, clamped: raw < 0.0 })
}

/// Outer loss on the validation split.
///
/// `critic_only` is the mean shaped squared TD error at `(θ'_c, λ')`;
/// `actor_only` is `−mean Q(θ'_c; s, π_{θ'_a}(s))`; the third sums both.
pub fn outer_loss(
    nets: &Networks,
    inner: &InnerUpdate,
    targets: Targets<'_>,
    validate: &[Transition],
    kind: OuterLossKind,
) -> Result<f64, AgentError> {
    if validate.is_empty() {
        return Err(AgentError::EmptyValidation);
    }
    let mut total = 0.0;
    for t in validate {
        if kind.uses_critic() {
            let delta = t.shaped_reward(inner.lambda) + bootstrap(nets, targets, t)?
                - nets.q_value(&inner.theta_c, &t.s, &t.a)?;
            total += delta * delta;
        }
        if kind.uses_actor() {
            let a = nets.policy(&inner.theta_a, &t.s)?;
            total -= nets.q_value(&inner.theta_c, &t.s, &a)?;
        }
    }
    Ok(total / validate.len() as f64)
}

/// Closed-form meta-gradient `∂J'/∂α_λ`, averaged over the validation split.
pub fn metal_meta_gradient(problem: &MetaProblem<'_>, inner: &InnerUpdate) -> Result<f64, AgentError> {
    problem.meta_gradient(inner)
}

pub fn fd_meta_gradient_oracle(problem: &MetaProblem<'_>, h: f64) -> Result<f64, AgentError> {
    problem.fd_meta_gradient(h)
}

/// Single-transition form: `−2δ·c·α₁e^{α_λ}(J_C − β)·(1 − 2α_c⟨∇Q', ∇Q⟩)`.
#[allow(clippy::too_many_arguments)]
pub fn single_item_meta_gradient(
    delta: f64,
    c: f64,
    lr_lagrange_base: f64,
    alpha_lambda: f64,
    episode_penalty: f64,
    beta: f64,
    lr_critic: f64,
    grad_inner_product: f64,
) -> f64 {
    -2.0 * delta
        * c
        * lr_lagrange_base
        * alpha_lambda.exp()
        * (episode_penalty - beta)
        * (1.0 - 2.0 * lr_critic * grad_inner_product)
}

/// A self-contained randomized problem for oracle checks.
#[derive(Debug, Clone)]
pub struct MetalInstance {
    pub nets: Networks,
    pub state: ActorCritic,
    pub meta: MetaState,
    pub batch: Batch,
    pub episode_penalty: f64,
    pub beta: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub kind: OuterLossKind,
}

impl MetalInstance {
    pub fn problem(&self) -> MetaProblem<'_> {
        MetaProblem {
            nets: &self.nets,
            state: &self.state,
            meta: &self.meta,
            batch: &self.batch,
            episode_penalty: self.episode_penalty,
            beta: self.beta,
            lr_critic: self.lr_critic,
            lr_actor: self.lr_actor,
            kind: self.kind,
        }
    }

    /// Random small instance with `λ'` kept away from the projection.
    /// Even seeds get a linear critic, odd seeds a 2-hidden-layer one.
    pub fn random(seed: u64, kind: OuterLossKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs_dim = rng.random_range(1..=3);
        let spec = CmdpSpec { obs_dim, act_dim: 1, episode_len: 10, action_low: vec![-1.0], action_high: vec![1.0] };
        let hidden =
            if seed.is_multiple_of(2) { vec![] } else { vec![rng.random_range(2..=5), rng.random_range(2..=4)] };
        let act = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Elu };
        let critic = MlpShape::new(obs_dim + 1, hidden, 1, act, OutputActivation::Identity).expect("valid shape");
        let actor = MlpShape::new(obs_dim, vec![3], 1, Activation::Tanh, OutputActivation::Tanh).expect("valid shape");
        let nets = Networks::from_shapes(&spec, actor, critic).expect("matching shapes");
        let mut state = ActorCritic::new(nets.actor.init(&mut rng), nets.critic.init(&mut rng), 0.0);
        state.theta_a_target = nets.actor.init(&mut rng);
        state.theta_c_target = nets.critic.init(&mut rng);
        let n_train = rng.random_range(1..=6);
        let n_val = rng.random_range(1..=4);
        let item = |rng: &mut ChaCha8Rng| Transition {
            s: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            a: vec![rng.random_range(-1.0..1.0)],
            r_sum: rng.random_range(-1.0..2.0),
            c_sum: rng.random_range(0.0..2.0),
            s_next: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            discount_prod: if rng.random_bool(0.8) { rng.random_range(0.5..0.99) } else { 0.0 },
        };
        let train = (0..n_train).map(|_| item(&mut rng)).collect();
        let validate = (0..n_val).map(|_| item(&mut rng)).collect();
        let lambda = rng.random_range(0.5..2.0);
        let beta: f64 = rng.random_range(0.0..1.0);
        let mut episode_penalty: f64 = rng.random_range(0.0..1.0);
        if (episode_penalty - beta).abs() < 0.2 {
            episode_penalty = if beta < 0.5 {
                beta + 0.2 + 0.3 * rng.random::<f64>()
            } else {
                beta - 0.2 - 0.3 * rng.random::<f64>()
            };
        }
        let meta = MetaState {
            alpha_lambda: rng.random_range(-3.0..3.0),
            lambda,
            lr_meta: DEFAULT_LR_META,
            lr_lagrange_base: rng.random_range(0.01..0.02),
        };
        let lr_critic = rng.random_range(0.05..0.5);
        let lr_actor = rng.random_range(0.05..0.5);
        Self { nets, state, meta, batch: Batch { train, validate }, episode_penalty, beta, lr_critic, lr_actor, kind }
    }
}

/// MetaL on top of the shared actor-critic.
#[derive(Debug, Clone)]
pub struct MetalLearner {
    pub nets: Networks,
    pub cfg: AgentConfig,
    pub state: ActorCritic,
    pub meta: MetaState,
    pub kind: OuterLossKind,
    last_scaled_lr: f64,
}

impl MetalLearner {
    pub fn new(nets: Networks, cfg: AgentConfig, state: ActorCritic, lr_meta: f64, kind: OuterLossKind) -> Self {
        let meta = MetaState::new(state.lambda, cfg.lr_lagrange, lr_meta);
        let last_scaled_lr = meta.effective_lr();
        Self { nets, cfg, state, meta, kind, last_scaled_lr }
    }
}

impl Learner for MetalLearner {
    fn policy_params(&self) -> &ParamVector {
        &self.state.theta_a
    }

    fn networks(&self) -> &Networks {
        &self.nets
    }

    fn needs_penalty(&self) -> bool {
        true
    }

    fn learn(&mut self, batch: &Batch, episode_penalty: Option<f64>) -> Result<IterationStats, AgentError> {
        let j_c = episode_penalty.ok_or_else(|| AgentError::Config("MetaL needs an episode penalty".into()))?;
        let problem = MetaProblem {
            nets: &self.nets,
            state: &self.state,
            meta: &self.meta,
            batch,
            episode_penalty: j_c,
            beta: self.cfg.threshold_beta,
            lr_critic: self.cfg.lr_critic,
            lr_actor: self.cfg.lr_actor,
            kind: self.kind,
        };
        let inner = problem.inner()?;
        let outer = problem.outer(&inner)?;
        let grad = problem.meta_gradient(&inner)?;
        self.last_scaled_lr = self.meta.effective_lr();
        self.meta.alpha_lambda -= self.meta.lr_meta * grad;
        self.meta.lambda = inner.lambda;
        self.state.lambda = inner.lambda;
        self.state.theta_c = inner.theta_c;
        self.state.theta_a = inner.theta_a;
        self.state.step_counter += 1;
        target_sync(&mut self.state, self.cfg.target_update_period);
        Ok(IterationStats { outer_loss: Some(outer), meta_gradient: Some(grad), ..IterationStats::default() })
    }

    fn lambda(&self) -> f64 {
        self.meta.lambda
    }

    fn alpha_lambda(&self) -> f64 {
        self.meta.alpha_lambda
    }

    fn scaled_lr(&self) -> f64 {
        self.last_scaled_lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::fixtures::{linear_nets, pv};
    use crate::agents::lagrange_step_rc;

    struct Worked {
        nets: Networks,
        state: ActorCritic,
        meta: MetaState,
        batch: Batch,
    }

    /// Linear critic `Q = θ·x` on `x = 1`, `γⁿQ_T = 0.36`, one transition
    /// used for both the inner step and the outer evaluation.
    fn worked() -> Worked {
        let nets = linear_nets();
        let mut state = ActorCritic::new(pv(&nets.actor, vec![0.0]), pv(&nets.critic, vec![0.5, 0.0]), 0.2);
        state.theta_c_target = pv(&nets.critic, vec![0.4, 0.0]);
        let t =
            Transition { s: vec![1.0], a: vec![0.0], r_sum: 1.0, c_sum: 1.0, s_next: vec![1.0], discount_prod: 0.9 };
        let meta = MetaState { alpha_lambda: 0.0, lambda: 0.2, lr_meta: 1e-3, lr_lagrange_base: 0.01 };
        Worked { nets, state, meta, batch: Batch { train: vec![t.clone()], validate: vec![t] } }
    }

    fn problem(w: &Worked) -> MetaProblem<'_> {
        MetaProblem {
            nets: &w.nets,
            state: &w.state,
            meta: &w.meta,
            batch: &w.batch,
            episode_penalty: 0.3,
            beta: 0.1,
            lr_critic: 0.1,
            lr_actor: 0.1,
            kind: OuterLossKind::CriticOnly,
        }
    }

    #[test]
    fn lagrange_step_by_hand() {
        let meta = MetaState { alpha_lambda: 0.0, lambda: 0.5, lr_meta: 1e-3, lr_lagrange_base: 0.01 };
        assert!((lagrange_step_metal(&meta, 0.3, 0.1) - 0.502).abs() < 1e-15);
        let doubled = MetaState { alpha_lambda: 2f64.ln(), ..meta };
        assert!((lagrange_step_metal(&doubled, 0.3, 0.1) - 0.504).abs() < 1e-15);
        for a in [-2.0, 0.0, 1.5] {
            assert_eq!(lagrange_step_metal(&MetaState { alpha_lambda: a, ..meta }, 0.1, 0.1), 0.5);
        }
    }

    #[test]
    fn zero_alpha_matches_rc_bitwise() {
        for (lambda, j, beta, lr) in [(0.5, 0.3, 0.1, 0.01), (0.013, 0.0, 0.4, 0.07), (2.0, 1.0, 0.0, 1e-3)] {
            let meta = MetaState { alpha_lambda: 0.0, lambda, lr_meta: 0.0, lr_lagrange_base: lr };
            assert_eq!(lagrange_step_metal(&meta, j, beta).to_bits(), lagrange_step_rc(lambda, j, beta, lr).to_bits());
        }
    }

    #[test]
    fn worked_instance() {
        let w = worked();
        let p = problem(&w);
        let inner = p.inner().unwrap();
        assert!((inner.lambda - 0.202).abs() < 1e-15);
        assert!((inner.theta_c.values()[0] - 0.6316).abs() < 1e-12);
        let loss = p.outer(&inner).unwrap();
        assert!((loss - 0.27709696).abs() < 1e-12);
        let g = p.meta_gradient(&inner).unwrap();
        assert!((g + 0.00168448).abs() < 1e-12, "{g}");
        let fd = p.fd_meta_gradient(1e-6).unwrap();
        assert!((fd + 0.00168448).abs() < 1e-9, "{fd}");
        // Single-item form, and the analytic chain 2δ·(−0.8)·0.002.
        let t1 = single_item_meta_gradient(0.5264, 1.0, 0.01, 0.0, 0.3, 0.1, 0.1, 1.0);
        assert!((t1 - g).abs() < 1e-15);
        assert!((2.0 * 0.5264 * -0.8 * 0.002 - g).abs() < 1e-15);
    }

    #[test]
    fn no_penalty_signal_no_gradient() {
        let mut w = worked();
        for t in w.batch.train.iter_mut().chain(w.batch.validate.iter_mut()) {
            t.c_sum = 0.0;
        }
        let p = problem(&w);
        assert_eq!(p.meta_gradient(&p.inner().unwrap()).unwrap(), 0.0);
        let w = worked();
        let p = MetaProblem { episode_penalty: 0.1, ..problem(&w) };
        assert_eq!(p.meta_gradient(&p.inner().unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn zero_base_rate_fd_is_zero() {
        let mut w = worked();
        w.meta.lr_lagrange_base = 0.0;
        assert_eq!(problem(&w).fd_meta_gradient(1e-6).unwrap(), 0.0);
    }

    #[test]
    fn zero_lambda_satisfied_is_unconstrained() {
        let mut w = worked();
        w.meta.lambda = 0.0;
        w.state.lambda = 0.0;
        let p = MetaProblem { episode_penalty: 0.05, ..problem(&w) };
        let inner = p.inner().unwrap();
        assert_eq!(inner.lambda, 0.0);
        assert!(inner.clamped);
        let plain = critic_step(&w.nets, &w.state.theta_c, w.state.targets(), &w.batch.train, 0.0, 0.1).unwrap();
        assert_eq!(inner.theta_c, plain);
        assert_eq!(p.meta_gradient(&inner).unwrap(), 0.0);
    }

    #[test]
    fn outer_loss_kinds_add_up() {
        let inst = MetalInstance::random(11, OuterLossKind::CriticOnly);
        let p = inst.problem();
        let inner = p.inner().unwrap();
        let by_kind = |kind| MetaProblem { kind, ..p }.outer(&inner).unwrap();
        let sum = by_kind(OuterLossKind::CriticOnly) + by_kind(OuterLossKind::ActorOnly);
        assert!((by_kind(OuterLossKind::ActorPlusCritic) - sum).abs() < 1e-12);
        let empty = Batch { train: inst.batch.train.clone(), validate: vec![] };
        assert!(matches!(MetaProblem { batch: &empty, ..p }.outer(&inner), Err(AgentError::EmptyValidation)));
    }

    #[test]
    fn perfect_critic_has_zero_outer_loss() {
        let mut w = worked();
        // Validation item whose shaped target equals Q' exactly.
        let p = problem(&w);
        let inner = p.inner().unwrap();
        let q = inner.theta_c.values()[0];
        w.batch.validate[0].r_sum = q - 0.36 + 0.202;
        let p = problem(&w);
        assert!(p.outer(&inner).unwrap().abs() < 1e-24);
    }

    #[test]
    fn itemwise_sign_relation() {
        let w = worked();
        let p = problem(&w);
        let inner = p.inner().unwrap();
        let t = &w.batch.validate[0];
        let delta = t.shaped_reward(inner.lambda) + bootstrap(&w.nets, w.state.targets(), t).unwrap()
            - w.nets.q_value(&inner.theta_c, &t.s, &t.a).unwrap();
        let ip = w
            .nets
            .critic
            .param_grad_inner_product(&inner.theta_c, &w.state.theta_c, &w.nets.critic_input(&t.s, &t.a))
            .unwrap();
        let bracket = 1.0 - 2.0 * 0.1 * ip;
        let g = p.meta_gradient(&inner).unwrap();
        assert_eq!(g.signum(), -(delta * t.c_sum * (0.3 - 0.1) * bracket).signum());
    }

    #[test]
    fn random_instances_match_fd() {
        for kind in [OuterLossKind::CriticOnly, OuterLossKind::ActorOnly, OuterLossKind::ActorPlusCritic] {
            for seed in 0..30 {
                let inst = MetalInstance::random(seed, kind);
                let p = inst.problem();
                let inner = p.inner().unwrap();
                assert!(!inner.clamped);
                let cf = p.meta_gradient(&inner).unwrap();
                let fd = p.fd_meta_gradient(1e-6).unwrap();
                let rel = (cf - fd).abs() / (fd.abs() + 1e-12);
                assert!(rel <= 1e-5, "{kind:?} seed {seed}: {cf} vs {fd}");
            }
        }
    }

    #[test]
    fn effective_rate_positive() {
        for a in [-50.0, -3.0, 0.0, 3.0, 20.0] {
            assert!(
                MetaState { alpha_lambda: a, lambda: 0.0, lr_meta: 1e-3, lr_lagrange_base: 1e-3 }.effective_lr() > 0.0
            );
        }
    }

    #[test]
    fn outer_loss_names_round_trip() {
        for k in [OuterLossKind::CriticOnly, OuterLossKind::ActorOnly, OuterLossKind::ActorPlusCritic] {
            assert_eq!(OuterLossKind::from_name(k.name()), Some(k));
        }
        assert_eq!(OuterLossKind::from_name("critic"), None);
    }
}
