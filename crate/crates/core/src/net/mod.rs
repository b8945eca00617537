//! A small feedforward network with a classification head and a projection
//! head, trained with exact reverse-mode gradients.
//!
//! Layout for input `X` (n x d_in):
//!
//! ```text
//! h_0 = X
//! h_l = gelu(h_{l-1} W_l + b_l)                  trunk, l = 1..L
//! logits = h_L W_c + b_c
//! proj   = gelu(LN(h_L P_1 + c_1)) P_2 + c_2
//! ```
//!
//! Weights are stored `fan_in x fan_out` so a batch multiplies on the left.

pub mod activation;
pub mod loss;
pub mod optim;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::math;
use crate::rng::SplitMix64;
use crate::{Error, Result};

pub use activation::{gelu, gelu_grad, layer_norm, layer_norm_grad, LAYER_NORM_EPS};
pub use loss::{ce_label_smoothing, log_softmax, mse_consistency, softmax, softmax_backward};
pub use optim::{adamw_step, AdamHyper, OptimState};

/// Layer widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    /// Widths of the GELU trunk layers; may be empty.
    pub hidden: Vec<usize>,
    pub classes: usize,
    /// Width of the first projection layer (the one that is normalised).
    pub proj_hidden: usize,
    pub proj_dim: usize,
}

impl Architecture {
    /// Projection hidden width defaults to the last trunk width.
    pub fn new(input_dim: usize, hidden: &[usize], classes: usize, proj_dim: usize) -> Self {
        let proj_hidden = hidden.last().copied().unwrap_or(input_dim).max(2);
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            classes,
            proj_hidden,
            proj_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes == 0 || self.proj_dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "input, class and projection widths must be >= 1, got {}, {}, {}",
                self.input_dim, self.classes, self.proj_dim
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("trunk widths must be >= 1".into()));
        }
        if self.proj_hidden < 2 {
            return Err(Error::InvalidParameter(format!(
                "layer norm needs width >= 2, got {}",
                self.proj_hidden
            )));
        }
        Ok(())
    }

    /// Width of the last trunk layer (the input width without a trunk).
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }
}

/// Affine map `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `fan_in x fan_out`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    fn xavier(fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Self {
        let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        Self {
            weight: Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_range(-a, a)),
            bias: vec![0.0; fan_out],
        }
    }

    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Accumulates this layer's gradients and returns `d input`.
    fn backward(&self, input: &Matrix, d_out: &Matrix, grad: &mut Linear) -> Result<Matrix> {
        grad.weight = input.matmul_tn(d_out)?;
        grad.bias = col_sums(d_out);
        d_out.matmul_nt(&self.weight)
    }
}

fn col_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    out
}

/// A named view of one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorRef<'a> {
    pub name: &'a str,
    pub rows: usize,
    pub cols: usize,
    pub values: &'a [f64],
}

/// An owned named tensor, as read from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// All weights of the network. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    trunk: Vec<Linear>,
    cls: Linear,
    proj_in: Linear,
    ln_gain: Vec<f64>,
    ln_offset: Vec<f64>,
    proj_out: Linear,
    names: Vec<String>,
}

fn tensor_names(arch: &Architecture) -> Vec<String> {
    let mut names = Vec::new();
    for l in 0..arch.hidden.len() {
        names.push(format!("trunk.{l}.weight"));
        names.push(format!("trunk.{l}.bias"));
    }
    for name in [
        "cls.weight",
        "cls.bias",
        "proj.0.weight",
        "proj.0.bias",
        "proj.ln.gain",
        "proj.ln.offset",
        "proj.1.weight",
        "proj.1.bias",
    ] {
        names.push(name.into());
    }
    names
}

impl NetworkParams {
    /// All weights zero, layer-norm gain zero.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let mut fan_in = arch.input_dim;
        let mut trunk = Vec::with_capacity(arch.hidden.len());
        for &w in &arch.hidden {
            trunk.push(Linear::zeros(fan_in, w));
            fan_in = w;
        }
        Ok(Self {
            trunk,
            cls: Linear::zeros(fan_in, arch.classes),
            proj_in: Linear::zeros(fan_in, arch.proj_hidden),
            ln_gain: vec![0.0; arch.proj_hidden],
            ln_offset: vec![0.0; arch.proj_hidden],
            proj_out: Linear::zeros(arch.proj_hidden, arch.proj_dim),
            names: tensor_names(arch),
            arch: arch.clone(),
        })
    }

    /// Xavier-uniform weights, zero biases, unit layer-norm gain.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut fan_in = arch.input_dim;
        let mut trunk = Vec::with_capacity(arch.hidden.len());
        for &w in &arch.hidden {
            trunk.push(Linear::xavier(fan_in, w, &mut rng));
            fan_in = w;
        }
        Ok(Self {
            trunk,
            cls: Linear::xavier(fan_in, arch.classes, &mut rng),
            proj_in: Linear::xavier(fan_in, arch.proj_hidden, &mut rng),
            ln_gain: vec![1.0; arch.proj_hidden],
            ln_offset: vec![0.0; arch.proj_hidden],
            proj_out: Linear::xavier(arch.proj_hidden, arch.proj_dim, &mut rng),
            names: tensor_names(arch),
            arch: arch.clone(),
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn trunk(&self) -> &[Linear] {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut [Linear] {
        &mut self.trunk
    }

    pub fn cls(&self) -> &Linear {
        &self.cls
    }

    pub fn cls_mut(&mut self) -> &mut Linear {
        &mut self.cls
    }

    /// Slices in checkpoint order.
    fn slices(&self) -> Vec<(usize, usize, &[f64])> {
        let mut out: Vec<(usize, usize, &[f64])> = Vec::new();
        for lin in self.trunk.iter().chain([&self.cls, &self.proj_in]) {
            out.push((lin.weight.rows(), lin.weight.cols(), lin.weight.as_slice()));
            out.push((1, lin.bias.len(), &lin.bias));
        }
        out.push((1, self.ln_gain.len(), &self.ln_gain));
        out.push((1, self.ln_offset.len(), &self.ln_offset));
        let lin = &self.proj_out;
        out.push((lin.weight.rows(), lin.weight.cols(), lin.weight.as_slice()));
        out.push((1, lin.bias.len(), &lin.bias));
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for lin in self.trunk.iter_mut().chain([&mut self.cls, &mut self.proj_in]) {
            out.push(lin.weight.as_mut_slice());
            out.push(&mut lin.bias);
        }
        out.push(&mut self.ln_gain);
        out.push(&mut self.ln_offset);
        out.push(self.proj_out.weight.as_mut_slice());
        out.push(&mut self.proj_out.bias);
        out
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        self.slices()
            .into_iter()
            .zip(&self.names)
            .map(|((rows, cols, values), name)| TensorRef {
                name,
                rows,
                cols,
                values,
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.2.len()).sum()
    }

    /// Every parameter concatenated in tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, _, s) in self.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    /// Inverse of [`Self::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[at..at + s.len()]);
            at += s.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.2.iter().all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.arch == other.arch
    }

    /// Rebuilds parameters from named tensors, inferring the architecture
    /// from their shapes.
    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: &str| -> Result<&NamedTensor> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::InvalidParameter(format!("missing tensor {name}")))
        };
        let mut hidden = Vec::new();
        while let Some(t) = tensors
            .iter()
            .find(|t| t.name == format!("trunk.{}.weight", hidden.len()))
        {
            hidden.push(t.cols);
        }
        let cls = find("cls.weight")?;
        let proj_in = find("proj.0.weight")?;
        let proj_out = find("proj.1.weight")?;
        let input_dim = match hidden.first() {
            Some(_) => find("trunk.0.weight")?.rows,
            None => cls.rows,
        };
        let arch = Architecture {
            input_dim,
            hidden,
            classes: cls.cols,
            proj_hidden: proj_in.cols,
            proj_dim: proj_out.cols,
        };
        let mut params = Self::zeros(&arch)?;
        if tensors.len() != params.names.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} tensors, found {}",
                params.names.len(),
                tensors.len()
            )));
        }
        let expected: Vec<(String, usize, usize)> = params
            .tensors()
            .iter()
            .map(|t| (String::from(t.name), t.rows, t.cols))
            .collect();
        let mut flat = Vec::with_capacity(params.num_params());
        for (name, rows, cols) in expected {
            let t = find(&name)?;
            if (t.rows, t.cols) != (rows, cols) || t.values.len() != rows * cols {
                return Err(Error::Shape(format!(
                    "tensor {name} is {}x{} with {} values, expected {rows}x{cols}",
                    t.rows,
                    t.cols,
                    t.values.len()
                )));
            }
            flat.extend_from_slice(&t.values);
        }
        params.set_flat(&flat)?;
        if !params.is_finite() {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(params)
    }

    /// `self <- eta * self + (1 - eta) * other`, tensor by tensor.
    pub fn blend_from(&mut self, other: &Self, eta: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("parameter sets differ in architecture".into()));
        }
        let src = other.to_flat();
        let mut at = 0;
        for s in self.slices_mut() {
            for (t, v) in s.iter_mut().zip(&src[at..]) {
                *t = eta * *t + (1.0 - eta) * v;
            }
            at += s.len();
        }
        Ok(())
    }
}

/// Network outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub logits: Matrix,
    pub projection: Matrix,
}

/// Intermediate values cached by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `h_0 .. h_L`.
    activations: Vec<Matrix>,
    /// Trunk pre-activations `z_1 .. z_L`.
    pre: Vec<Matrix>,
    /// Normalised projection rows and their inverse standard deviations.
    xhat: Matrix,
    inv_std: Vec<f64>,
    /// Layer-norm output before GELU.
    ln_out: Matrix,
    /// GELU of `ln_out`.
    proj_act: Matrix,
    arch: Architecture,
}

pub fn forward(params: &NetworkParams, x: &Matrix) -> Result<(HeadOutputs, Trace)> {
    let arch = &params.arch;
    if x.cols() != arch.input_dim {
        return Err(Error::Shape(format!(
            "input has {} features, network expects {}",
            x.cols(),
            arch.input_dim
        )));
    }
    let mut activations = vec![x.clone()];
    let mut pre = Vec::with_capacity(params.trunk.len());
    for lin in &params.trunk {
        let z = lin.apply(activations.last().expect("input present"))?;
        activations.push(z.map(gelu));
        pre.push(z);
    }
    let h = activations.last().expect("input present");
    let logits = params.cls.apply(h)?;

    let u = params.proj_in.apply(h)?;
    let (n, q) = u.shape();
    let mut xhat = Matrix::zeros(n, q);
    let mut inv_std = Vec::with_capacity(n);
    let mut ln_out = Matrix::zeros(n, q);
    for i in 0..n {
        let (mean, inv) = activation::moments(u.row(i));
        inv_std.push(inv);
        for j in 0..q {
            let xh = (u[(i, j)] - mean) * inv;
            xhat[(i, j)] = xh;
            ln_out[(i, j)] = xh * params.ln_gain[j] + params.ln_offset[j];
        }
    }
    let proj_act = ln_out.map(gelu);
    let projection = params.proj_out.apply(&proj_act)?;
    Ok((
        HeadOutputs { logits, projection },
        Trace {
            activations,
            pre,
            xhat,
            inv_std,
            ln_out,
            proj_act,
            arch: arch.clone(),
        },
    ))
}

/// Exact gradients of a scalar whose sensitivities to the logits and the
/// projection are `d_logits` and `d_proj`. Returns parameter gradients and
/// `d X`.
pub fn backward(
    params: &NetworkParams,
    trace: &Trace,
    d_logits: &Matrix,
    d_proj: &Matrix,
) -> Result<(NetworkParams, Matrix)> {
    let arch = &params.arch;
    let n = trace.activations[0].rows();
    if trace.arch != *arch {
        return Err(Error::Shape("trace was recorded for a different architecture".into()));
    }
    if d_logits.shape() != (n, arch.classes) || d_proj.shape() != (n, arch.proj_dim) {
        return Err(Error::Shape(format!(
            "upstream {}x{} and {}x{} for a batch of {n}",
            d_logits.rows(),
            d_logits.cols(),
            d_proj.rows(),
            d_proj.cols()
        )));
    }
    let mut grads = NetworkParams::zeros(arch)?;
    let h = trace.activations.last().expect("input present");

    // projection head
    let d_act = params.proj_out.backward(&trace.proj_act, d_proj, &mut grads.proj_out)?;
    let q = arch.proj_hidden;
    let mut d_u = Matrix::zeros(n, q);
    let mut d_gain = vec![0.0; q];
    let mut d_offset = vec![0.0; q];
    for i in 0..n {
        let mut d_xhat = vec![0.0; q];
        for j in 0..q {
            let d_ln = d_act[(i, j)] * gelu_grad(trace.ln_out[(i, j)]);
            d_gain[j] += d_ln * trace.xhat[(i, j)];
            d_offset[j] += d_ln;
            d_xhat[j] = d_ln * params.ln_gain[j];
        }
        let row = activation::normalize_backward(trace.xhat.row(i), trace.inv_std[i], &d_xhat);
        d_u.row_mut(i).copy_from_slice(&row);
    }
    grads.ln_gain = d_gain;
    grads.ln_offset = d_offset;
    let d_h_proj = params.proj_in.backward(h, &d_u, &mut grads.proj_in)?;

    // classification head
    let d_h_cls = params.cls.backward(h, d_logits, &mut grads.cls)?;
    let mut d_h = d_h_proj.add(&d_h_cls)?;

    // trunk
    for l in (0..params.trunk.len()).rev() {
        let z = &trace.pre[l];
        let mut d_z = d_h;
        for (d, zv) in d_z.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *d *= gelu_grad(*zv);
        }
        d_h = params.trunk[l].backward(&trace.activations[l], &d_z, &mut grads.trunk[l])?;
    }
    Ok((grads, d_h))
}

/// Forward pass without keeping the trace.
pub fn predict(params: &NetworkParams, x: &Matrix) -> Result<HeadOutputs> {
    Ok(forward(params, x)?.0)
}

/// Row-wise argmax of the logits; ties go to the lowest class.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows()).map(|i| loss::argmax(logits.row(i))).collect()
}
