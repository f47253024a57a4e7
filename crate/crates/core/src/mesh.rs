//! Meta-gradient reward shaping with dual critics.
//!
//! A small network `f_φ(s, a, r, c)` predicts a scale `κ_S ∈ (0, υ_S)` and an
//! offset `κ_O ∈ (−υ_O, υ_O)`. The inner critic learns from the meta-shaped
//! reward, the actor follows the updated inner critic, and the outer critic
//! learns from `r − λ'c`. `φ` descends the outer actor loss
//! `‖SG(∇_a Q_out(s, a') + a') − a'‖²` evaluated at the updated actor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    actor_step, critic_step, critic_step_with, lagrange_step_rc, AgentConfig, IterationStats, Learner, Networks,
    Targets,
};
use crate::approx::{dot, sigmoid, Activation, MlpShape, OutputActivation, ParamVector};
use crate::env::CmdpSpec;
use crate::error::{AgentError, ApproxError};
use crate::replay::{Batch, Transition};

pub const DEFAULT_LAMBDA_HAT: f64 = 0.1;
pub const DEFAULT_UPSILON_S: f64 = 10.0;
pub const DEFAULT_UPSILON_O: f64 = 3.0;
/// Step along the normalized action direction for the mixed second derivative.
pub const TERM_C_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Formulation {
    /// `r − κ_S·λ̂·c + κ_O`
    #[default]
    OffsetOnPenalty,
    /// `κ_S·(r − λ̂·c) + κ_O`
    ScaleWhole,
}

impl Formulation {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "offset_on_penalty" => Some(Self::OffsetOnPenalty),
            "scale_whole" => Some(Self::ScaleWhole),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::OffsetOnPenalty => "offset_on_penalty",
            Self::ScaleWhole => "scale_whole",
        }
    }

    fn apply(self, r: f64, c: f64, lambda_hat: f64, kappa_s: f64, kappa_o: f64) -> f64 {
        match self {
            Self::OffsetOnPenalty => r - kappa_s * lambda_hat * c + kappa_o,
            Self::ScaleWhole => kappa_s * (r - lambda_hat * c) + kappa_o,
        }
    }

    /// `∂r_meta/∂κ_S`.
    fn scale_coefficient(self, r: f64, c: f64, lambda_hat: f64) -> f64 {
        match self {
            Self::OffsetOnPenalty => -lambda_hat * c,
            Self::ScaleWhole => r - lambda_hat * c,
        }
    }
}

/// `f_φ` with bounded heads.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaShaper {
    pub shape: MlpShape,
    pub upsilon_s: f64,
    pub upsilon_o: f64,
}

impl MetaShaper {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: Vec<usize>,
        upsilon_s: f64,
        upsilon_o: f64,
    ) -> Result<Self, ApproxError> {
        if !(upsilon_s > 0.0 && upsilon_o > 0.0) {
            return Err(ApproxError::Shape("upsilon bounds must be positive".into()));
        }
        let shape = MlpShape::new(obs_dim + act_dim + 2, hidden, 2, Activation::Elu, OutputActivation::Identity)?;
        Ok(Self { shape, upsilon_s, upsilon_o })
    }

    pub fn input(s: &[f64], a: &[f64], r: f64, c: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len() + 2);
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        x.push(r);
        x.push(c);
        x
    }

    /// `(υ_S·σ(κ̄_S), υ_O·tanh(κ̄_O))`, held strictly inside the open
    /// ranges even where the squashing saturates in floating point.
    pub fn bound(&self, raw_s: f64, raw_o: f64) -> (f64, f64) {
        let shrink = 1.0 - f64::EPSILON;
        let ks = (self.upsilon_s * sigmoid(raw_s)).clamp(f64::MIN_POSITIVE, self.upsilon_s * shrink);
        let ko = (self.upsilon_o * raw_o.tanh()).clamp(-self.upsilon_o * shrink, self.upsilon_o * shrink);
        (ks, ko)
    }

    pub fn kappas(&self, phi: &ParamVector, s: &[f64], a: &[f64], r: f64, c: f64) -> Result<(f64, f64), ApproxError> {
        let raw = self.shape.forward(phi, &Self::input(s, a, r, c))?;
        Ok(self.bound(raw[0], raw[1]))
    }

    /// Adds `scale·∂(w_s·κ_S + w_o·κ_O)/∂φ` into `acc`.
    fn accumulate_kappa_grad(
        &self,
        phi: &ParamVector,
        t: &Transition,
        w_s: f64,
        w_o: f64,
        scale: f64,
        acc: &mut [f64],
    ) -> Result<(), ApproxError> {
        let trace = self.shape.trace(phi, &Self::input(&t.s, &t.a, t.r_sum, t.c_sum))?;
        let (zs, zo) = (trace.output()[0], trace.output()[1]);
        let sig = sigmoid(zs);
        let th = zo.tanh();
        let cot = [w_s * self.upsilon_s * sig * (1.0 - sig), w_o * self.upsilon_o * (1.0 - th * th)];
        trace.backward(phi, &cot, scale, Some(acc))?;
        Ok(())
    }
}

/// Shaping network, both critics with their targets, and the multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshState {
    pub shaper: MetaShaper,
    pub phi: ParamVector,
    pub theta_c_in: ParamVector,
    pub theta_c_in_target: ParamVector,
    pub theta_c_out: ParamVector,
    pub theta_c_out_target: ParamVector,
    pub lambda_hat: f64,
    pub lambda: f64,
    pub formulation: Formulation,
}

impl MeshState {
    pub fn meta_shaped_reward(&self, phi: &ParamVector, t: &Transition) -> Result<f64, ApproxError> {
        meta_shaped_reward(&self.shaper, phi, &t.s, &t.a, t.r_sum, t.c_sum, self.lambda_hat, self.formulation)
    }
}

/// Meta-shaped reward for one (aggregated) transition.
#[allow(clippy::too_many_arguments)]
pub fn meta_shaped_reward(
    shaper: &MetaShaper,
    phi: &ParamVector,
    s: &[f64],
    a: &[f64],
    r: f64,
    c: f64,
    lambda_hat: f64,
    formulation: Formulation,
) -> Result<f64, ApproxError> {
    let (ks, ko) = shaper.kappas(phi, s, a, r, c)?;
    Ok(formulation.apply(r, c, lambda_hat, ks, ko))
}

/// Learning rates for one MeSh iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshRates {
    pub lagrange: f64,
    pub critic_in: f64,
    pub critic_out: f64,
    pub actor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshInner {
    pub lambda: f64,
    pub theta_c_in: ParamVector,
    pub theta_c_out: ParamVector,
    pub theta_a: ParamVector,
}

/// One MeSh iteration's frozen inputs.
#[derive(Debug, Clone, Copy)]
pub struct MeshProblem<'a> {
    pub nets: &'a Networks,
    pub mesh: &'a MeshState,
    pub theta_a: &'a ParamVector,
    pub theta_a_target: &'a ParamVector,
    pub batch: &'a Batch,
    pub episode_penalty: f64,
    pub beta: f64,
    pub rates: MeshRates,
}

impl MeshProblem<'_> {
    fn inner_targets(&self) -> Targets<'_> {
        Targets { actor: self.theta_a_target, critic: &self.mesh.theta_c_in_target }
    }

    fn outer_targets(&self) -> Targets<'_> {
        Targets { actor: self.theta_a_target, critic: &self.mesh.theta_c_out_target }
    }

    pub fn inner(&self) -> Result<MeshInner, ApproxError> {
        self.inner_with_phi(&self.mesh.phi)
    }

    /// λ, inner critic on the meta-shaped reward, outer critic on `r − λ'c`,
    /// then the actor against the updated inner critic.
    pub fn inner_with_phi(&self, phi: &ParamVector) -> Result<MeshInner, ApproxError> {
        let train = &self.batch.train;
        let lambda = lagrange_step_rc(self.mesh.lambda, self.episode_penalty, self.beta, self.rates.lagrange);
        let shaped: Vec<f64> = train.iter().map(|t| self.mesh.meta_shaped_reward(phi, t)).collect::<Result<_, _>>()?;
        let theta_c_in = critic_step_with(
            self.nets,
            &self.mesh.theta_c_in,
            self.inner_targets(),
            train,
            |i, _| shaped[i],
            self.rates.critic_in,
        )?;
        let theta_c_out =
            critic_step(self.nets, &self.mesh.theta_c_out, self.outer_targets(), train, lambda, self.rates.critic_out)?;
        let theta_a = actor_step(self.nets, self.theta_a, &theta_c_in, train, self.rates.actor)?;
        Ok(MeshInner { lambda, theta_c_in, theta_c_out, theta_a })
    }

    /// `mean ‖∇_a Q_out'(s, π'(s))‖²` on the validation split.
    pub fn outer(&self, inner: &MeshInner) -> Result<f64, AgentError> {
        mesh_outer_loss(self.nets, &inner.theta_a, &inner.theta_c_out, &self.batch.validate)
    }

    /// Closed-form `∇_φ J'`.
    pub fn meta_gradient(&self, inner: &MeshInner) -> Result<Vec<f64>, AgentError> {
        let nets = self.nets;
        let validate = &self.batch.validate;
        let train = &self.batch.train;
        if validate.is_empty() {
            return Err(AgentError::EmptyValidation);
        }
        // Outer DPG term: v = −(2/|V|)·Σ (∂π'/∂θa)ᵀ ∇_a Q_out'.
        let mut v = vec![0.0; self.theta_a.len()];
        for t in validate {
            let a = nets.policy(&inner.theta_a, &t.s)?;
            let g = nets.q_action_grad(&inner.theta_c_out, &t.s, &a)?;
            nets.accumulate_policy_vjp(&inner.theta_a, &t.s, &g, -2.0 / validate.len() as f64, &mut v)?;
        }
        // Sensitivity of the actor step to the inner critic, contracted with v.
        let nt = train.len() as f64;
        let mut w = vec![0.0; self.mesh.theta_c_in.len()];
        for t in train {
            let trace = nets.actor.trace(self.theta_a, &t.s)?;
            let a = nets.policy(self.theta_a, &t.s)?;
            let mut u = vec![0.0; nets.act_dim];
            for (k, uk) in u.iter_mut().enumerate() {
                let mut e = vec![0.0; nets.act_dim];
                e[k] = 1.0;
                let mut jk = vec![0.0; self.theta_a.len()];
                trace.backward(self.theta_a, &e, 1.0, Some(&mut jk))?;
                *uk = dot(&jk, &v);
            }
            let norm = dot(&u, &u).sqrt();
            if norm == 0.0 {
                continue;
            }
            let shifted = |sign: f64| -> Vec<f64> {
                a.iter().zip(&u).map(|(ai, ui)| ai + sign * TERM_C_STEP * ui / norm).collect()
            };
            let plus = nets.q_param_grad(&inner.theta_c_in, &t.s, &shifted(1.0))?;
            let minus = nets.q_param_grad(&inner.theta_c_in, &t.s, &shifted(-1.0))?;
            let scale = self.rates.actor / nt * norm / (2.0 * TERM_C_STEP);
            for ((wi, p), m) in w.iter_mut().zip(&plus).zip(&minus) {
                *wi += scale * (p - m);
            }
        }
        // Through the inner critic step into φ.
        let mut grad = vec![0.0; self.mesh.phi.len()];
        for t in train {
            let grad_q = nets.q_param_grad(&self.mesh.theta_c_in, &t.s, &t.a)?;
            let ip = dot(&w, &grad_q);
            if ip == 0.0 {
                continue;
            }
            let w_s = self.mesh.formulation.scale_coefficient(t.r_sum, t.c_sum, self.mesh.lambda_hat);
            self.mesh.shaper.accumulate_kappa_grad(
                &self.mesh.phi,
                t,
                w_s,
                1.0,
                2.0 * self.rates.critic_in / nt * ip,
                &mut grad,
            )?;
        }
        Ok(grad)
    }

    /// Coordinate-wise central differences of the outer loss through the
    /// full inner update. The stop-gradient targets `∇_a Q_out' + a'` are
    /// frozen at the unperturbed `φ`.
    pub fn fd_meta_gradient(&self, h: f64) -> Result<Vec<f64>, AgentError> {
        let nets = self.nets;
        let base = self.inner()?;
        let frozen: Vec<Vec<f64>> = self
            .batch
            .validate
            .iter()
            .map(|t| {
                let a = nets.policy(&base.theta_a, &t.s)?;
                let g = nets.q_action_grad(&base.theta_c_out, &t.s, &a)?;
                Ok(a.iter().zip(&g).map(|(ai, gi)| ai + gi).collect())
            })
            .collect::<Result<_, ApproxError>>()?;
        let loss = |phi: &ParamVector| -> Result<f64, ApproxError> {
            let inner = self.inner_with_phi(phi)?;
            let mut total = 0.0;
            for (t, target) in self.batch.validate.iter().zip(&frozen) {
                let a = nets.policy(&inner.theta_a, &t.s)?;
                total += a.iter().zip(target).map(|(ai, ti)| (ti - ai) * (ti - ai)).sum::<f64>();
            }
            Ok(total / self.batch.validate.len() as f64)
        };
        let mut out = Vec::with_capacity(self.mesh.phi.len());
        for k in 0..self.mesh.phi.len() {
            let mut plus = self.mesh.phi.clone();
            plus.values_mut()[k] += h;
            let mut minus = self.mesh.phi.clone();
            minus.values_mut()[k] -= h;
            out.push((loss(&plus)? - loss(&minus)?) / (2.0 * h));
        }
        Ok(out)
    }
}

/// `mean_i ‖SG(∇_a Q_out(sᵢ, aᵢ') + aᵢ') − aᵢ'‖²` with `aᵢ' = π_{θa'}(sᵢ)`.
pub fn mesh_outer_loss(
    nets: &Networks,
    theta_a: &ParamVector,
    theta_c_out: &ParamVector,
    validate: &[Transition],
) -> Result<f64, AgentError> {
    if validate.is_empty() {
        return Err(AgentError::EmptyValidation);
    }
    let mut total = 0.0;
    for t in validate {
        let a = nets.policy(theta_a, &t.s)?;
        let g = nets.q_action_grad(theta_c_out, &t.s, &a)?;
        total += a.iter().zip(&g).map(|(ai, gi)| ((gi + ai) - ai).powi(2)).sum::<f64>();
    }
    Ok(total / validate.len() as f64)
}

pub fn mesh_inner_update(problem: &MeshProblem<'_>) -> Result<MeshInner, ApproxError> {
    problem.inner()
}

pub fn mesh_meta_gradient(problem: &MeshProblem<'_>, inner: &MeshInner) -> Result<Vec<f64>, AgentError> {
    problem.meta_gradient(inner)
}

pub fn fd_mesh_oracle(problem: &MeshProblem<'_>, h: f64) -> Result<Vec<f64>, AgentError> {
    problem.fd_meta_gradient(h)
}

/// MeSh-specific settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshConfig {
    pub lambda_hat: f64,
    pub upsilon_s: f64,
    pub upsilon_o: f64,
    pub lr_meta: f64,
    pub shaper_hidden: Vec<usize>,
    pub formulation: Formulation,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            lambda_hat: DEFAULT_LAMBDA_HAT,
            upsilon_s: DEFAULT_UPSILON_S,
            upsilon_o: DEFAULT_UPSILON_O,
            lr_meta: crate::metal::DEFAULT_LR_META,
            shaper_hidden: vec![32],
            formulation: Formulation::OffsetOnPenalty,
        }
    }
}

/// Random small instance for oracle checks.
#[derive(Debug, Clone)]
pub struct MeshInstance {
    pub nets: Networks,
    pub mesh: MeshState,
    pub theta_a: ParamVector,
    pub theta_a_target: ParamVector,
    pub batch: Batch,
    pub episode_penalty: f64,
    pub beta: f64,
    pub rates: MeshRates,
}

impl MeshInstance {
    pub fn problem(&self) -> MeshProblem<'_> {
        MeshProblem {
            nets: &self.nets,
            mesh: &self.mesh,
            theta_a: &self.theta_a,
            theta_a_target: &self.theta_a_target,
            batch: &self.batch,
            episode_penalty: self.episode_penalty,
            beta: self.beta,
            rates: self.rates,
        }
    }

    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs_dim = rng.random_range(1..=2);
        let act_dim = if seed % 4 == 3 { 2 } else { 1 };
        let spec = CmdpSpec {
            obs_dim,
            act_dim,
            episode_len: 10,
            action_low: vec![-1.0; act_dim],
            action_high: vec![1.0; act_dim],
        };
        let act = if seed.is_multiple_of(2) { Activation::Tanh } else { Activation::Elu };
        let actor = MlpShape::new(obs_dim, vec![3], act_dim, Activation::Tanh, OutputActivation::Tanh).expect("shape");
        let critic =
            MlpShape::new(obs_dim + act_dim, vec![rng.random_range(3..=5)], 1, act, OutputActivation::Identity)
                .expect("shape");
        let nets = Networks::from_shapes(&spec, actor, critic).expect("shapes");
        let formulation = if seed % 3 == 2 { Formulation::ScaleWhole } else { Formulation::OffsetOnPenalty };
        let shaper = MetaShaper::new(obs_dim, act_dim, vec![4], DEFAULT_UPSILON_S, DEFAULT_UPSILON_O).expect("shape");
        let phi = shaper.shape.init(&mut rng);
        let mesh = MeshState {
            phi,
            theta_c_in: nets.critic.init(&mut rng),
            theta_c_in_target: nets.critic.init(&mut rng),
            theta_c_out: nets.critic.init(&mut rng),
            theta_c_out_target: nets.critic.init(&mut rng),
            shaper,
            lambda_hat: DEFAULT_LAMBDA_HAT,
            lambda: rng.random_range(0.0..2.0),
            formulation,
        };
        let theta_a = nets.actor.init(&mut rng);
        let theta_a_target = nets.actor.init(&mut rng);
        let item = |rng: &mut ChaCha8Rng| Transition {
            s: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            a: (0..act_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            r_sum: rng.random_range(-1.0..2.0),
            c_sum: if rng.random_bool(0.7) { rng.random_range(0.0..2.0) } else { 0.0 },
            s_next: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            discount_prod: if rng.random_bool(0.8) { 0.9 } else { 0.0 },
        };
        let n_train = rng.random_range(1..=5);
        let n_val = rng.random_range(1..=4);
        let train = (0..n_train).map(|_| item(&mut rng)).collect();
        let validate = (0..n_val).map(|_| item(&mut rng)).collect();
        let rates = MeshRates {
            lagrange: 0.01,
            critic_in: rng.random_range(0.1..0.5),
            critic_out: rng.random_range(0.1..0.5),
            actor: rng.random_range(0.1..0.5),
        };
        Self {
            nets,
            mesh,
            theta_a,
            theta_a_target,
            batch: Batch { train, validate },
            episode_penalty: rng.random_range(0.0..1.0),
            beta: rng.random_range(0.0..1.0),
            rates,
        }
    }
}

/// MeSh agent: one actor, dual critics, and the shaping network.
#[derive(Debug, Clone)]
pub struct MeshLearner {
    pub nets: Networks,
    pub cfg: AgentConfig,
    pub mesh_cfg: MeshConfig,
    pub theta_a: ParamVector,
    pub theta_a_target: ParamVector,
    pub mesh: MeshState,
    pub step_counter: usize,
}

impl MeshLearner {
    pub fn init<R: Rng + ?Sized>(
        nets: Networks,
        cfg: AgentConfig,
        mesh_cfg: MeshConfig,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        let theta_a = nets.actor.init_scaled(rng, cfg.actor_final_init);
        let theta_c_in = nets.critic.init(rng);
        let theta_c_out = nets.critic.init(rng);
        let shaper = MetaShaper::new(
            nets.obs_dim,
            nets.act_dim,
            mesh_cfg.shaper_hidden.clone(),
            mesh_cfg.upsilon_s,
            mesh_cfg.upsilon_o,
        )?;
        let phi = shaper.shape.init(rng);
        let mesh = MeshState {
            shaper,
            phi,
            theta_c_in_target: theta_c_in.clone(),
            theta_c_in,
            theta_c_out_target: theta_c_out.clone(),
            theta_c_out,
            lambda_hat: mesh_cfg.lambda_hat,
            lambda: cfg.fixed_lambda,
            formulation: mesh_cfg.formulation,
        };
        Ok(Self { theta_a_target: theta_a.clone(), theta_a, nets, cfg, mesh_cfg, mesh, step_counter: 0 })
    }

    fn rates(&self) -> MeshRates {
        MeshRates {
            lagrange: self.cfg.lr_lagrange,
            critic_in: self.cfg.lr_critic,
            critic_out: self.cfg.lr_critic,
            actor: self.cfg.lr_actor,
        }
    }
}

impl Learner for MeshLearner {
    fn policy_params(&self) -> &ParamVector {
        &self.theta_a
    }

    fn networks(&self) -> &Networks {
        &self.nets
    }

    fn needs_penalty(&self) -> bool {
        true
    }

    fn learn(&mut self, batch: &Batch, episode_penalty: Option<f64>) -> Result<IterationStats, AgentError> {
        let j_c = episode_penalty.ok_or_else(|| AgentError::Config("MeSh needs an episode penalty".into()))?;
        let problem = MeshProblem {
            nets: &self.nets,
            mesh: &self.mesh,
            theta_a: &self.theta_a,
            theta_a_target: &self.theta_a_target,
            batch,
            episode_penalty: j_c,
            beta: self.cfg.threshold_beta,
            rates: self.rates(),
        };
        let inner = problem.inner()?;
        let outer = problem.outer(&inner)?;
        let grad = problem.meta_gradient(&inner)?;
        let (mut ks, mut ko) = (0.0, 0.0);
        for t in &batch.train {
            let (s, o) = self.mesh.shaper.kappas(&self.mesh.phi, &t.s, &t.a, t.r_sum, t.c_sum)?;
            ks += s;
            ko += o;
        }
        let n = batch.train.len() as f64;
        self.mesh.phi.axpy(-self.mesh_cfg.lr_meta, &grad);
        self.mesh.lambda = inner.lambda;
        self.mesh.theta_c_in = inner.theta_c_in;
        self.mesh.theta_c_out = inner.theta_c_out;
        self.theta_a = inner.theta_a;
        self.step_counter += 1;
        if self.step_counter.is_multiple_of(self.cfg.target_update_period) {
            self.theta_a_target.copy_from(&self.theta_a);
            self.mesh.theta_c_in_target.copy_from(&self.mesh.theta_c_in);
            self.mesh.theta_c_out_target.copy_from(&self.mesh.theta_c_out);
        }
        Ok(IterationStats {
            outer_loss: Some(outer),
            meta_gradient: Some(dot(&grad, &grad).sqrt()),
            kappa_s: Some(ks / n),
            kappa_o: Some(ko / n),
        })
    }

    fn lambda(&self) -> f64 {
        self.mesh.lambda
    }

    fn scaled_lr(&self) -> f64 {
        self.cfg.lr_lagrange
    }
}
