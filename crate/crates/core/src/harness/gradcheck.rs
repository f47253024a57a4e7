//! Randomized closed-form vs finite-difference suites.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::{Activation, MlpShape, OutputActivation, ParamVector};
use crate::error::HarnessError;
use crate::mesh::MeshInstance;
use crate::metal::{MetalInstance, OuterLossKind};

pub const METAL_FD_STEP: f64 = 1e-6;
pub const MESH_FD_STEP: f64 = 1e-5;
pub const APPROX_FD_STEP: f64 = 1e-5;
/// Coordinates whose FD magnitude is below this fraction of the largest
/// coordinate of the same instance are compared against that floor instead;
/// smaller entries sit under the FD round-off at the pinned steps.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Metal,
    Mesh,
    Approx,
}

impl Suite {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "metal" => Some(Self::Metal),
            "mesh" => Some(Self::Mesh),
            "approx" => Some(Self::Approx),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Metal => "metal",
            Self::Mesh => "mesh",
            Self::Approx => "approx",
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Self::Metal => 1e-5,
            Self::Mesh => 1e-4,
            Self::Approx => 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub suite: Suite,
    pub instances: usize,
    pub max_rel_error: f64,
    pub worst_instance: u64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: instances={} max_rel_error={:.3e} (instance {}) tolerance={:.1e} time={:.2}s",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.instances,
            self.max_rel_error,
            self.worst_instance,
            self.tolerance,
            self.seconds
        )
    }
}

/// `|cf − fd| / (|fd| + 1e-12)`.
pub fn scalar_rel_error(cf: f64, fd: f64) -> f64 {
    (cf - fd).abs() / (fd.abs() + 1e-12)
}

/// Largest coordinate-wise relative error, with denominators floored at
/// `RELATIVE_FLOOR · max_k |fd_k|`.
pub fn vector_rel_error(cf: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = RELATIVE_FLOOR * scale + 1e-12;
    cf.iter().zip(fd).map(|(c, f)| (c - f).abs() / f.abs().max(floor)).fold(0.0, f64::max)
}

/// Smallest `|g| / max(1, |L|)` for a MetaL instance to count; flatter
/// instances are below FD round-off at `METAL_FD_STEP` and are redrawn.
pub const METAL_MIN_GRADIENT_RATIO: f64 = 1e-4;
const METAL_REDRAWS: u64 = 32;

/// Closed-form Lagrange meta-gradient vs FD on one random instance.
pub fn metal_instance_error(seed: u64) -> Result<f64, HarnessError> {
    let mut last = 0.0;
    for draw in 0..METAL_REDRAWS {
        let inst = MetalInstance::random(seed.wrapping_add(draw << 32), OuterLossKind::CriticOnly);
        let p = inst.problem();
        let inner = p.inner().map_err(crate::error::AgentError::from)?;
        debug_assert!(!inner.clamped);
        let cf = p.meta_gradient(&inner)?;
        let fd = p.fd_meta_gradient(METAL_FD_STEP)?;
        last = scalar_rel_error(cf, fd);
        let loss = p.outer(&inner)?;
        if fd.abs() >= METAL_MIN_GRADIENT_RATIO * loss.abs().max(1.0) {
            return Ok(last);
        }
    }
    Ok(last)
}

/// Closed-form shaping meta-gradient vs coordinate-wise FD on one random instance.
pub fn mesh_instance_error(seed: u64) -> Result<f64, HarnessError> {
    let inst = MeshInstance::random(seed);
    let p = inst.problem();
    let inner = p.inner().map_err(crate::error::AgentError::from)?;
    let cf = p.meta_gradient(&inner)?;
    let fd = p.fd_meta_gradient(MESH_FD_STEP)?;
    Ok(vector_rel_error(&cf, &fd))
}

const ELU_KINK_MARGIN: f64 = 0.05;
const ELU_RESAMPLES: usize = 50;

/// Smallest `|z|` over ELU hidden pre-activations (infinite when there are none).
fn kink_margin(shape: &MlpShape, params: &ParamVector, x: &[f64]) -> f64 {
    if shape.hidden_activation != Activation::Elu {
        return f64::INFINITY;
    }
    let trace = shape.trace(params, x).expect("valid network");
    let pre = trace.pre_activations();
    let skip = usize::from(shape.layer_norm_first);
    pre[skip..pre.len() - 1].iter().flatten().fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// A random network, parameters, input and cotangent.
pub fn random_network(seed: u64) -> (MlpShape, ParamVector, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dim = rng.random_range(1..=4);
    let depth = rng.random_range(0..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=5)).collect();
    let output_dim = rng.random_range(1..=3);
    let act = if rng.random_bool(0.5) { Activation::Elu } else { Activation::Tanh };
    let out = match rng.random_range(0..4) {
        0 => OutputActivation::Identity,
        1 => OutputActivation::Tanh,
        2 => OutputActivation::ScaledSigmoid(rng.random_range(0.5..10.0)),
        _ => OutputActivation::ScaledTanh(rng.random_range(0.5..3.0)),
    };
    let mut shape = MlpShape::new(input_dim, hidden, output_dim, act, out).expect("valid shape");
    let layer_norm = depth > 0 && rng.random_bool(0.4);
    let bias = !rng.random_bool(0.2);
    if !bias {
        shape = shape.without_bias();
    }
    // Normalizing fewer than three units, or `w·x` of a scalar input without
    // bias, leaves a layer that is constant up to the stabilizing epsilon.
    if layer_norm && shape.hidden_dims[0] >= 3 && (bias || input_dim >= 2) {
        shape = shape.with_layer_norm(true);
    }
    let params = shape.init(&mut rng);
    // ELU has a second-derivative jump at zero; keep test points clear of it so
    // the FD truncation error stays at its smooth order.
    let mut x: Vec<f64> = Vec::new();
    for _ in 0..ELU_RESAMPLES {
        x = (0..input_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        if kink_margin(&shape, &params, &x) >= ELU_KINK_MARGIN {
            break;
        }
    }
    let cot = (0..output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    (shape, params, x, cot)
}

/// `grad_params` and `grad_input` vs central FD of `⟨cot, f(x)⟩`.
pub fn approx_instance_error(seed: u64) -> Result<f64, HarnessError> {
    approx_instance_error_with_step(seed, APPROX_FD_STEP)
}

pub fn approx_instance_error_with_step(seed: u64, h: f64) -> Result<f64, HarnessError> {
    let (shape, params, x, cot) = random_network(seed);
    let err = |e: crate::error::ApproxError| HarnessError::Agent(e.into());
    let objective = |p: &ParamVector, x: &[f64]| -> Result<f64, HarnessError> {
        Ok(shape.forward(p, x).map_err(err)?.iter().zip(&cot).map(|(y, c)| y * c).sum())
    };
    let gp = shape.grad_params(&params, &x, &cot).map_err(err)?;
    let gx = shape.grad_input(&params, &x, &cot).map_err(err)?;
    let mut fd_p = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let mut p = params.clone();
        p.values_mut()[k] += h;
        let up = objective(&p, &x)?;
        p.values_mut()[k] -= 2.0 * h;
        fd_p.push((up - objective(&p, &x)?) / (2.0 * h));
    }
    let mut fd_x = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut xs = x.clone();
        xs[k] += h;
        let up = objective(&params, &xs)?;
        xs[k] -= 2.0 * h;
        fd_x.push((up - objective(&params, &xs)?) / (2.0 * h));
    }
    // Both gradients come from one objective, so they share one scale.
    let cf: Vec<f64> = gp.iter().chain(&gx).copied().collect();
    fd_p.extend(fd_x);
    Ok(vector_rel_error(&cf, &fd_p))
}

/// Runs `n` instances seeded `seed, seed + 1, …` and reports the worst error.
pub fn run_gradcheck(suite: Suite, n: usize, seed: u64, tolerance: f64) -> Result<GradcheckReport, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("gradcheck needs at least one instance".into()));
    }
    let start = Instant::now();
    let mut worst = (0.0f64, seed);
    for i in 0..n as u64 {
        let s = seed.wrapping_add(i);
        let e = match suite {
            Suite::Metal => metal_instance_error(s)?,
            Suite::Mesh => mesh_instance_error(s)?,
            Suite::Approx => approx_instance_error(s)?,
        };
        if e.is_nan() || e > worst.0 {
            worst = (e, s);
        }
    }
    Ok(GradcheckReport {
        suite,
        instances: n,
        max_rel_error: worst.0,
        worst_instance: worst.1,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_small() {
        for suite in [Suite::Metal, Suite::Mesh, Suite::Approx] {
            let r = run_gradcheck(suite, 10, 1000, suite.default_tolerance()).unwrap();
            assert!(r.passed(), "{}", r.line());
        }
    }

    #[test]
    fn metrics_by_hand() {
        assert_eq!(scalar_rel_error(1.0, 1.0), 0.0);
        assert!((vector_rel_error(&[1.0, 0.0], &[2.0, 0.0]) - 0.5).abs() < 1e-12);
        assert!(run_gradcheck(Suite::Approx, 0, 0, 1e-6).is_err());
        assert_eq!(Suite::from_name("mesh"), Some(Suite::Mesh));
    }

    #[test]
    fn failing_report_line() {
        let r = GradcheckReport {
            suite: Suite::Metal,
            instances: 1,
            max_rel_error: 1.0,
            worst_instance: 0,
            tolerance: 1e-5,
            seconds: 0.0,
        };
        assert!(!r.passed());
        assert!(r.line().starts_with("FAIL"));
    }
}
