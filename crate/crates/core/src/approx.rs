//! Multilayer perceptrons over a flat parameter vector, with hand-written
//! reverse-mode gradients.
//!
//! Every derivative the agents need is one of three products: the
//! vector-Jacobian product with respect to the parameters, the same product
//! with respect to the input, or an inner product of two parameter gradients.
//! All of them are served from a single forward [`Trace`].

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::Rng;

use crate::error::ApproxError;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Elu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    h + 1.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Output-layer nonlinearity. The scaled variants carry their bound `υ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Identity,
    Tanh,
    /// `υ·σ(z)`, bounded in `(0, υ)`.
    ScaledSigmoid(f64),
    /// `υ·tanh(z)`, bounded in `(−υ, υ)`.
    ScaledTanh(f64),
}

impl OutputActivation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Tanh => z.tanh(),
            OutputActivation::ScaledSigmoid(u) => u * sigmoid(z),
            OutputActivation::ScaledTanh(u) => u * z.tanh(),
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            OutputActivation::ScaledSigmoid(u) => {
                let s = sigmoid(z);
                u * s * (1.0 - s)
            }
            OutputActivation::ScaledTanh(u) => {
                let t = z.tanh();
                u * (1.0 - t * t)
            }
        }
    }

    fn scale(self) -> Option<f64> {
        match self {
            OutputActivation::ScaledSigmoid(u) | OutputActivation::ScaledTanh(u) => Some(u),
            _ => None,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// Architecture of a fully connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
    /// Normalize the first hidden layer's pre-activations (no affine gain)
    /// and squash them with tanh in place of the hidden activation.
    pub layer_norm_first: bool,
    /// Bias columns on every layer (on by default).
    pub use_bias: bool,
}

/// One named slice of a [`ParamVector`]: a weight matrix or a bias column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceDesc {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl SliceDesc {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameters plus the layout that maps slices onto layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<[SliceDesc]>,
}

impl ParamVector {
    pub fn from_parts(values: Vec<f64>, layout: Vec<SliceDesc>) -> Result<Self, ApproxError> {
        let mut expected_offset = 0;
        for s in &layout {
            if s.offset != expected_offset {
                return Err(ApproxError::Layout(format!("slice {} starts at {}", s.name, s.offset)));
            }
            expected_offset += s.len();
        }
        if expected_offset != values.len() {
            return Err(ApproxError::Layout(format!("layout covers {expected_offset} values, got {}", values.len())));
        }
        Ok(Self { values, layout: layout.into() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the values; the layout cannot change.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[SliceDesc] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    /// A vector with this layout and the given values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, ApproxError> {
        if values.len() != self.values.len() {
            return Err(ApproxError::Dimension { expected: self.values.len(), got: values.len() });
        }
        Ok(Self { values, layout: Arc::clone(&self.layout) })
    }

    /// `self += scale · direction`.
    pub fn axpy(&mut self, scale: f64, direction: &[f64]) {
        debug_assert_eq!(direction.len(), self.values.len());
        for (v, d) in self.values.iter_mut().zip(direction) {
            *v += scale * d;
        }
    }

    /// Copies values from `other`, which must share the layout.
    pub fn copy_from(&mut self, other: &ParamVector) {
        self.values.copy_from_slice(&other.values);
    }

    /// Writes the checkpoint format: one `name rows cols` line per slice, a
    /// blank line, then the values as little-endian `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> io::Result<()> {
        for s in self.layout.iter() {
            writeln!(w, "{} {} {}", s.name, s.rows, s.cols)?;
        }
        writeln!(w)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<Self, ApproxError> {
        let mut layout = Vec::new();
        let mut offset = 0;
        loop {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(ApproxError::Checkpoint("missing header terminator".into()));
            }
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                break;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, rows, cols] = fields[..] else {
                return Err(ApproxError::Checkpoint(format!("bad header line `{line}`")));
            };
            let parse =
                |s: &str| s.parse::<usize>().map_err(|_| ApproxError::Checkpoint(format!("bad dimension `{s}`")));
            let (rows, cols) = (parse(rows)?, parse(cols)?);
            layout.push(SliceDesc { name: name.to_string(), rows, cols, offset });
            offset += rows * cols;
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != offset * 8 {
            return Err(ApproxError::Checkpoint(format!("expected {} value bytes, found {}", offset * 8, bytes.len())));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        Self::from_parts(values, layout)
    }
}

/// Offsets of one dense layer inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct LayerIndex {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: Option<usize>,
}

impl MlpShape {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        hidden_activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self, ApproxError> {
        let shape = Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation,
            output_activation,
            layer_norm_first: false,
            use_bias: true,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn with_layer_norm(mut self, on: bool) -> Self {
        self.layer_norm_first = on;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.use_bias = false;
        self
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(ApproxError::Shape("all layer widths must be at least 1".into()));
        }
        if let Some(u) = self.output_activation.scale() {
            if !(u.is_finite() && u > 0.0) {
                return Err(ApproxError::Shape(format!("output scale must be finite and positive, got {u}")));
            }
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }

    fn layers(&self) -> Vec<LayerIndex> {
        let mut offset = 0;
        self.layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let weight = offset;
                offset += fan_in * fan_out;
                let bias = self.use_bias.then(|| {
                    let b = offset;
                    offset += fan_out;
                    b
                });
                LayerIndex { fan_in, fan_out, weight, bias }
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        let extra = usize::from(self.use_bias);
        self.layer_dims().iter().map(|(i, o)| (i + extra) * o).sum()
    }

    pub fn layout(&self) -> Vec<SliceDesc> {
        self.layers()
            .iter()
            .enumerate()
            .flat_map(|(l, li)| {
                let w = SliceDesc { name: format!("w{l}"), rows: li.fan_out, cols: li.fan_in, offset: li.weight };
                let b = li.bias.map(|offset| SliceDesc { name: format!("b{l}"), rows: li.fan_out, cols: 1, offset });
                std::iter::once(w).chain(b)
            })
            .collect()
    }

    pub fn zeros(&self) -> ParamVector {
        ParamVector::from_parts(vec![0.0; self.num_params()], self.layout()).expect("consistent layout")
    }

    /// Uniform initialization in `±1/√fan_in` for every weight and bias.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        self.init_scaled(rng, 1.0)
    }

    /// As [`MlpShape::init`], with the output layer's range multiplied by
    /// `final_scale`.
    pub fn init_scaled<R: Rng + ?Sized>(&self, rng: &mut R, final_scale: f64) -> ParamVector {
        let layers = self.layers();
        let mut values = vec![0.0; self.num_params()];
        for (l, li) in layers.iter().enumerate() {
            let mut bound = 1.0 / (li.fan_in as f64).sqrt();
            if l + 1 == layers.len() {
                bound *= final_scale;
            }
            let end = li.weight + li.fan_out * (li.fan_in + usize::from(li.bias.is_some()));
            for v in &mut values[li.weight..end] {
                *v = if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
            }
        }
        ParamVector::from_parts(values, self.layout()).expect("consistent layout")
    }

    fn check_params(&self, params: &ParamVector) -> Result<(), ApproxError> {
        if params.len() != self.num_params() {
            return Err(ApproxError::Dimension { expected: self.num_params(), got: params.len() });
        }
        Ok(())
    }

    /// Runs the network and keeps every intermediate needed for backward passes.
    pub fn trace(&self, params: &ParamVector, input: &[f64]) -> Result<Trace, ApproxError> {
        self.check_params(params)?;
        if input.len() != self.input_dim {
            return Err(ApproxError::Dimension { expected: self.input_dim, got: input.len() });
        }
        let layers = self.layers();
        let w = params.values();
        let mut pre = Vec::with_capacity(layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        let mut norm = None;
        for (l, li) in layers.iter().enumerate() {
            let x: &[f64] = if l == 0 { input } else { &post[l - 1] };
            let mut z = match li.bias {
                Some(b) => w[b..b + li.fan_out].to_vec(),
                None => vec![0.0; li.fan_out],
            };
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[li.weight + o * li.fan_in..li.weight + (o + 1) * li.fan_in];
                *zo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            let last = l + 1 == layers.len();
            let h: Vec<f64> = if last {
                z.iter().map(|&v| self.output_activation.apply(v)).collect()
            } else if l == 0 && self.layer_norm_first {
                let n = z.len() as f64;
                let mean = z.iter().sum::<f64>() / n;
                let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                let y: Vec<f64> = z.iter().map(|v| (v - mean) * inv_std).collect();
                let h = y.iter().map(|v| v.tanh()).collect();
                norm = Some(LayerNormCache { normalized: y, inv_std });
                h
            } else {
                z.iter().map(|&v| self.hidden_activation.apply(v)).collect()
            };
            pre.push(z);
            post.push(h);
        }
        Ok(Trace { shape: self.clone(), layers, input: input.to_vec(), pre, post, norm })
    }

    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>, ApproxError> {
        Ok(self.trace(params, input)?.output().to_vec())
    }

    /// `(∂output/∂params)ᵀ · cotangent`, aligned with the parameter layout.
    pub fn grad_params(&self, params: &ParamVector, input: &[f64], cotangent: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let trace = self.trace(params, input)?;
        let mut g = vec![0.0; params.len()];
        trace.backward(params, cotangent, 1.0, Some(&mut g))?;
        Ok(g)
    }

    /// `(∂output/∂input)ᵀ · cotangent`.
    pub fn grad_input(&self, params: &ParamVector, input: &[f64], cotangent: &[f64]) -> Result<Vec<f64>, ApproxError> {
        self.trace(params, input)?.backward(params, cotangent, 1.0, None)
    }

    /// `⟨∇_θ f(params_a; input), ∇_θ f(params_b; input)⟩` for a scalar network.
    pub fn param_grad_inner_product(
        &self,
        params_a: &ParamVector,
        params_b: &ParamVector,
        input: &[f64],
    ) -> Result<f64, ApproxError> {
        if self.output_dim != 1 {
            return Err(ApproxError::NonScalar(self.output_dim));
        }
        if !params_a.same_layout(params_b) {
            return Err(ApproxError::Layout("parameter vectors do not share a layout".into()));
        }
        let ga = self.grad_params(params_a, input, &[1.0])?;
        let gb = self.grad_params(params_b, input, &[1.0])?;
        Ok(dot(&ga, &gb))
    }
}

#[derive(Debug, Clone)]
struct LayerNormCache {
    normalized: Vec<f64>,
    inv_std: f64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    shape: MlpShape,
    layers: Vec<LayerIndex>,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    norm: Option<LayerNormCache>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("at least one layer")
    }

    /// Pre-activations of every layer, output layer last.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }

    /// Scalar output, for single-output networks.
    pub fn scalar(&self) -> f64 {
        self.output()[0]
    }

    /// Backpropagates `cotangent`; accumulates `scale · (∂out/∂θ)ᵀ·cotangent`
    /// into `param_grad` when given, and returns `(∂out/∂input)ᵀ·cotangent`.
    pub fn backward(
        &self,
        params: &ParamVector,
        cotangent: &[f64],
        scale: f64,
        mut param_grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>, ApproxError> {
        if cotangent.len() != self.shape.output_dim {
            return Err(ApproxError::Dimension { expected: self.shape.output_dim, got: cotangent.len() });
        }
        if let Some(g) = param_grad.as_deref() {
            if g.len() != params.len() {
                return Err(ApproxError::Dimension { expected: params.len(), got: g.len() });
            }
        }
        let w = params.values();
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = cotangent
            .iter()
            .zip(&self.pre[last])
            .map(|(c, &z)| c * self.shape.output_activation.derivative(z))
            .collect();
        for l in (0..self.layers.len()).rev() {
            let li = self.layers[l];
            let x: &[f64] = if l == 0 { &self.input } else { &self.post[l - 1] };
            if let Some(g) = param_grad.as_deref_mut() {
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let sd = scale * d;
                    let row = &mut g[li.weight + o * li.fan_in..li.weight + (o + 1) * li.fan_in];
                    for (gi, xi) in row.iter_mut().zip(x) {
                        *gi += sd * xi;
                    }
                    if let Some(b) = li.bias {
                        g[b + o] += sd;
                    }
                }
            }
            let mut upstream = vec![0.0; li.fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[li.weight + o * li.fan_in..li.weight + (o + 1) * li.fan_in];
                for (u, wi) in upstream.iter_mut().zip(row) {
                    *u += d * wi;
                }
            }
            if l == 0 {
                return Ok(upstream);
            }
            let (z, h) = (&self.pre[l - 1], &self.post[l - 1]);
            delta = if l == 1 && self.shape.layer_norm_first {
                let cache = self.norm.as_ref().expect("layer norm cache");
                // Through tanh, then through the normalization.
                let dy: Vec<f64> = upstream.iter().zip(h).map(|(u, hi)| u * (1.0 - hi * hi)).collect();
                let n = dy.len() as f64;
                let mean_dy = dy.iter().sum::<f64>() / n;
                let mean_dy_y = dy.iter().zip(&cache.normalized).map(|(a, b)| a * b).sum::<f64>() / n;
                dy.iter().zip(&cache.normalized).map(|(d, y)| cache.inv_std * (d - mean_dy - y * mean_dy_y)).collect()
            } else {
                upstream
                    .iter()
                    .zip(z.iter().zip(h))
                    .map(|(u, (&zi, &hi))| u * self.shape.hidden_activation.derivative(zi, hi))
                    .collect()
            };
        }
        unreachable!("loop returns at the input layer")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
