//! Dual-role network training: a student optimised by AdamW and a teacher
//! that tracks it by exponential moving average, trained on pairs of
//! augmented views with
//!
//! ```text
//! J = CE(y_s, labels) + lambda(e) * MSE(softmax y_s, softmax y_t) + beta(e) * d(p_s, p_t)
//! ```
//!
//! where `d` is `-LSMI`, a KL or JS divergence between softmaxed
//! projections, or absent.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledSet;
use crate::kernels::{median_heuristic, Bandwidth, SampleBatch};
use crate::linalg::Matrix;
use crate::lsmi::{self, Hyperparams, LsmiConfig};
use crate::math;
use crate::net::{
    self, adamw_step, ce_label_smoothing, log_softmax, mse_consistency, softmax, softmax_backward,
    AdamHyper, Architecture, NetworkParams, OptimState,
};
use crate::rng::SplitMix64;
use crate::{Error, Result};

/// Dependence term between student and teacher projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepMeasure {
    /// `-LSMI(p_s, p_t)`: dependence is maximised.
    Lsmi,
    Kl,
    Jsd,
    None,
}

impl DepMeasure {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lsmi => "lsmi",
            Self::Kl => "kl",
            Self::Jsd => "jsd",
            Self::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lsmi" => Some(Self::Lsmi),
            "kl" => Some(Self::Kl),
            "jsd" => Some(Self::Jsd),
            "none" => Some(Self::None),
            _ => None,
        }
    }
}

/// Stochastic view transform, applied in field order.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Std of additive Gaussian noise.
    pub noise_std: f64,
    /// Half-width of the moving average over feature coordinates.
    pub smooth_radius: usize,
    /// Multiplicative factor drawn from `1 +- scale_range`.
    pub scale_range: f64,
    /// Additive offset drawn from `+- shift_range`.
    pub shift_range: f64,
    /// Coordinate rescale factor drawn from `1 +- zoom_range`, then linear
    /// resampling about the centre coordinate.
    pub zoom_range: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_std: 0.05,
            smooth_radius: 0,
            scale_range: 0.1,
            shift_range: 0.05,
            zoom_range: 0.0,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            noise_std: 0.0,
            smooth_radius: 0,
            scale_range: 0.0,
            shift_range: 0.0,
            zoom_range: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("scale_range", self.scale_range),
            ("shift_range", self.shift_range),
            ("zoom_range", self.zoom_range),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("aug.{name} must be >= 0, got {v}")));
            }
        }
        if self.zoom_range >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "aug.zoom_range must be < 1, got {}",
                self.zoom_range
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_max: f64,
    pub beta_max: f64,
    pub ramp_epochs: usize,
    /// EMA decay of the teacher.
    pub eta: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lr_peak: f64,
    pub wd_start: f64,
    pub wd_end: f64,
    pub label_eps: f64,
    pub early_stop_patience: usize,
    pub dep_measure: DepMeasure,
    pub lsmi: LsmiConfig,
    pub aug: AugmentConfig,
    pub seed: u64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub proj_dim: usize,
}

impl Default for TrainConfig {
    /// Desk-scale defaults: short runs on small synthetic sets.
    fn default() -> Self {
        Self {
            lambda_max: 0.5,
            beta_max: 0.1,
            ramp_epochs: 30,
            eta: 0.99,
            epochs: 100,
            warmup_epochs: 5,
            lr_peak: 5e-3,
            wd_start: 2e-5,
            wd_end: 2e-2,
            label_eps: 0.4,
            early_stop_patience: 30,
            dep_measure: DepMeasure::Lsmi,
            lsmi: LsmiConfig::cross_validated(),
            aug: AugmentConfig::default(),
            seed: 0,
            batch_size: 32,
            hidden: vec![32, 32],
            proj_dim: 16,
        }
    }
}

impl TrainConfig {
    /// Schedule values from the original large-scale setting.
    pub fn large_scale() -> Self {
        Self {
            eta: 0.9998,
            epochs: 300,
            warmup_epochs: 20,
            lr_peak: 4e-5,
            early_stop_patience: 100,
            proj_dim: 256,
            ..Self::default()
        }
    }

    /// The supervised baseline: no consistency and no dependence term.
    pub fn ce_only(&self) -> Self {
        Self {
            lambda_max: 0.0,
            beta_max: 0.0,
            dep_measure: DepMeasure::None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("train.eta must be in [0, 1], got {}", self.eta));
        }
        if !(self.lambda_max >= 0.0 && self.lambda_max.is_finite())
            || !(self.beta_max >= 0.0 && self.beta_max.is_finite())
        {
            return bad(format!(
                "train.lambda and train.beta must be >= 0, got {} and {}",
                self.lambda_max, self.beta_max
            ));
        }
        if self.epochs == 0 || self.warmup_epochs >= self.epochs {
            return bad(format!(
                "need 0 <= warmup_epochs < epochs, got {} and {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.lr_peak >= 0.0 && self.lr_peak.is_finite()) {
            return bad(format!("train.lr_peak must be >= 0, got {}", self.lr_peak));
        }
        if !(self.wd_start >= 0.0 && self.wd_end >= 0.0 && self.wd_end.is_finite()) {
            return bad(format!(
                "weight decay must be >= 0, got {} and {}",
                self.wd_start, self.wd_end
            ));
        }
        if !(0.0..1.0).contains(&self.label_eps) {
            return bad(format!("train.label_eps must be in [0, 1), got {}", self.label_eps));
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be >= 1".into());
        }
        self.aug.validate()?;
        self.lsmi.validate()
    }

    pub fn architecture(&self, input_dim: usize, classes: usize) -> Architecture {
        Architecture::new(input_dim, &self.hidden, classes, self.proj_dim)
    }
}

/// Student, teacher and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub theta_s: NetworkParams,
    pub theta_t: NetworkParams,
    pub optim: OptimState,
    /// Optimizer steps taken.
    pub tau: u64,
    /// Completed epochs.
    pub epoch: usize,
}

impl DualState {
    /// Student initialised from `seed`; the teacher starts as a copy.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        let theta_s = NetworkParams::init(arch, seed)?;
        Ok(Self {
            optim: OptimState::new(theta_s.num_params()),
            theta_t: theta_s.clone(),
            theta_s,
            tau: 0,
            epoch: 0,
        })
    }
}

/// Loss terms and schedule values of one step or epoch average.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub ce: f64,
    pub cons: f64,
    pub dep: f64,
    pub total: f64,
    pub lr: f64,
    pub wd: f64,
    pub lambda_eff: f64,
    pub beta_eff: f64,
}

/// `theta_t <- eta * theta_t + (1 - eta) * theta_s`.
pub fn ema_update(theta_t: &mut NetworkParams, theta_s: &NetworkParams, eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta must be in [0, 1], got {eta}")));
    }
    theta_t.blend_from(theta_s, eta)
}

/// `max_val * min(1, epoch / ramp_epochs)`.
pub fn ramp(epoch: usize, ramp_epochs: usize, max_val: f64) -> f64 {
    if epoch >= ramp_epochs {
        return max_val;
    }
    max_val * (epoch as f64 / ramp_epochs as f64)
}

/// Linear warmup to `lr_peak`, then cosine decay towards 0.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_epochs;
    if epoch < w {
        return cfg.lr_peak * ((epoch + 1) as f64 / w as f64);
    }
    let progress = (epoch - w) as f64 / (cfg.epochs - w) as f64;
    cfg.lr_peak * 0.5 * (1.0 + math::cos(math::PI * progress))
}

/// Increasing cosine from `wd_start` at epoch 0 to `wd_end` at the last
/// epoch.
pub fn wd_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.wd_start;
    }
    let w = 0.5 * (1.0 - math::cos(math::PI * epoch as f64 / (cfg.epochs - 1) as f64));
    cfg.wd_start * (1.0 - w) + cfg.wd_end * w
}

/// One draw of the view transform.
pub fn augment(x: &[f64], cfg: &AugmentConfig, rng: &mut SplitMix64) -> Vec<f64> {
    let mut v = x.to_vec();
    if cfg.noise_std > 0.0 {
        for e in &mut v {
            *e += cfg.noise_std * rng.normal();
        }
    }
    if cfg.smooth_radius > 0 {
        let r = cfg.smooth_radius;
        let src = v.clone();
        for (i, e) in v.iter_mut().enumerate() {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(src.len());
            *e = src[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        }
    }
    if cfg.scale_range > 0.0 {
        let s = rng.uniform_range(1.0 - cfg.scale_range, 1.0 + cfg.scale_range);
        for e in &mut v {
            *e *= s;
        }
    }
    if cfg.shift_range > 0.0 {
        let b = rng.uniform_range(-cfg.shift_range, cfg.shift_range);
        for e in &mut v {
            *e += b;
        }
    }
    if cfg.zoom_range > 0.0 {
        let z = rng.uniform_range(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range);
        if v.len() > 1 {
            v = zoom_resample(&v, z);
        }
    }
    v
}

/// Samples `v` at `c + (i - c) / z` by linear interpolation, clamping at
/// the ends.
fn zoom_resample(v: &[f64], z: f64) -> Vec<f64> {
    let last = (v.len() - 1) as f64;
    let c = 0.5 * last;
    (0..v.len())
        .map(|i| {
            let pos = (c + (i as f64 - c) / z).clamp(0.0, last);
            let lo = pos as usize; // pos >= 0, so truncation is floor
            let hi = (lo + 1).min(v.len() - 1);
            let frac = pos - lo as f64;
            v[lo] * (1.0 - frac) + v[hi] * frac
        })
        .collect()
}

/// Two independent draws: the student view, then the teacher view.
pub fn augment_pair(x: &[f64], cfg: &AugmentConfig, rng: &mut SplitMix64) -> (Vec<f64>, Vec<f64>) {
    let xs = augment(x, cfg, rng);
    let xt = augment(x, cfg, rng);
    (xs, xt)
}

/// Mean row-wise KL or Jensen-Shannon divergence between the softmaxes of
/// `ps` and `pt`, with its gradient with respect to `ps`.
pub fn alt_divergence(ps: &Matrix, pt: &Matrix, kind: DepMeasure) -> Result<(f64, Matrix)> {
    if ps.shape() != pt.shape() {
        return Err(Error::Shape(format!(
            "divergence between {}x{} and {}x{}",
            ps.rows(),
            ps.cols(),
            pt.rows(),
            pt.cols()
        )));
    }
    let n = ps.rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let (lp, lq) = (log_softmax(ps), log_softmax(pt));
    let p = softmax(ps);
    let q = softmax(pt);
    let nf = n as f64;
    let mut value = 0.0;
    // d value / d p before the softmax
    let mut dp = Matrix::zeros(ps.rows(), ps.cols());
    match kind {
        DepMeasure::Kl => {
            for idx in 0..p.as_slice().len() {
                let diff = lp.as_slice()[idx] - lq.as_slice()[idx];
                value += p.as_slice()[idx] * diff;
                dp.as_mut_slice()[idx] = (diff + 1.0) / nf;
            }
        }
        DepMeasure::Jsd => {
            for idx in 0..p.as_slice().len() {
                let (pi, qi) = (p.as_slice()[idx], q.as_slice()[idx]);
                let (lpi, lqi) = (lp.as_slice()[idx], lq.as_slice()[idx]);
                let lm = math::ln(0.5 * (pi + qi));
                value += 0.5 * (pi * (lpi - lm) + qi * (lqi - lm));
                dp.as_mut_slice()[idx] = 0.5 * (lpi - lm) / nf;
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "{} is not a divergence",
                other.name()
            )))
        }
    }
    Ok((value / nf, softmax_backward(&p, &dp)))
}

/// Batch tensors entering the composite loss. Teacher tensors are treated
/// as constants.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub ys_logits: &'a Matrix,
    pub yt_logits: &'a Matrix,
    pub ps: &'a Matrix,
    pub pt: &'a Matrix,
    pub labels: &'a [usize],
}

/// Composite loss and its gradients with respect to the student logits and
/// projection. `lsmi_hp` fixes the estimator hyperparameters; without it
/// they are resolved from `cfg.lsmi` on this batch.
pub fn total_loss(
    inputs: LossInputs<'_>,
    cfg: &TrainConfig,
    epoch: usize,
    lsmi_hp: Option<Hyperparams>,
) -> Result<(LossBreakdown, Matrix, Matrix)> {
    let LossInputs {
        ys_logits,
        yt_logits,
        ps,
        pt,
        labels,
    } = inputs;
    let n = ys_logits.rows();
    if yt_logits.rows() != n || ps.rows() != n || pt.rows() != n || labels.len() != n {
        return Err(Error::Shape(format!(
            "batch sizes differ: {n}, {}, {}, {}, {}",
            yt_logits.rows(),
            ps.rows(),
            pt.rows(),
            labels.len()
        )));
    }
    let lambda_eff = ramp(epoch, cfg.ramp_epochs, cfg.lambda_max);
    let beta_eff = ramp(epoch, cfg.ramp_epochs, cfg.beta_max);

    let (ce, mut d_logits) = ce_label_smoothing(ys_logits, labels, cfg.label_eps)?;

    let probs_s = softmax(ys_logits);
    let (cons, d_probs) = mse_consistency(&probs_s, &softmax(yt_logits))?;
    let d_cons = softmax_backward(&probs_s, &d_probs);
    for (d, c) in d_logits.as_mut_slice().iter_mut().zip(d_cons.as_slice()) {
        *d += lambda_eff * c;
    }

    let (dep, mut d_ps) = match cfg.dep_measure {
        DepMeasure::None => (0.0, Matrix::zeros(ps.rows(), ps.cols())),
        DepMeasure::Lsmi => {
            let bs = SampleBatch::new(ps.clone())?;
            let bt = SampleBatch::new(pt.clone())?;
            let hp = match lsmi_hp {
                Some(hp) => hp,
                None => cfg.lsmi.resolve(&bs, &bt)?,
            };
            let g = lsmi::lsmi_gradient_at(&bs, &bt, hp, cfg.lsmi.grad_mode)?;
            (-g.score, g.d_ps.scale(-1.0))
        }
        kind => alt_divergence(ps, pt, kind)?,
    };
    for d in d_ps.as_mut_slice() {
        *d *= beta_eff;
    }

    let breakdown = LossBreakdown {
        ce,
        cons,
        dep,
        total: ce + lambda_eff * cons + beta_eff * dep,
        lr: lr_schedule(epoch.min(cfg.epochs - 1), cfg),
        wd: wd_schedule(epoch.min(cfg.epochs - 1), cfg),
        lambda_eff,
        beta_eff,
    };
    Ok((breakdown, d_logits, d_ps))
}

/// Macro F1 over `classes` (a class with no support and no predictions
/// scores 0) and accuracy.
pub fn macro_f1(predicted: &[usize], labels: &[usize], classes: usize) -> (f64, f64) {
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    let mut correct = 0;
    for (&p, &l) in predicted.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let f1_sum: f64 = (0..classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    (f1_sum / classes as f64, correct as f64 / labels.len() as f64)
}

/// `(macro F1, accuracy)` of the classification head's argmax.
pub fn evaluate(theta: &NetworkParams, data: &LabeledSet) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let out = net::predict(theta, &data.features)?;
    Ok(macro_f1(&net::argmax_rows(&out.logits), &data.labels, data.classes))
}

/// One row of the per-epoch history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Step-averaged losses with this epoch's schedule values.
    pub loss: LossBreakdown,
    pub train_acc: f64,
    pub val_acc: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State at the epoch with the best validation macro F1.
    pub best: DualState,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub history: Vec<EpochMetrics>,
    /// Estimator hyperparameters fixed for the run, if the LSMI term is on.
    pub lsmi_hp: Option<Hyperparams>,
    /// Total optimizer steps taken.
    pub steps: u64,
}

/// Stream ids passed to [`SplitMix64::derive`] with the run seed.
pub const STREAM_INIT: u64 = 1;
pub const STREAM_SHUFFLE: u64 = 2;
pub const STREAM_AUGMENT: u64 = 3;
pub const STREAM_SNAPSHOT: u64 = 4;

/// Student and teacher views of the rows `idx`.
fn augmented_views(
    data: &LabeledSet,
    idx: &[usize],
    aug: &AugmentConfig,
    rng: &mut SplitMix64,
) -> (Matrix, Matrix) {
    let d = data.dim();
    let mut xs = Matrix::zeros(idx.len(), d);
    let mut xt = Matrix::zeros(idx.len(), d);
    for (r, &i) in idx.iter().enumerate() {
        let (a, b) = augment_pair(data.features.row(i), aug, rng);
        xs.row_mut(r).copy_from_slice(&a);
        xt.row_mut(r).copy_from_slice(&b);
    }
    (xs, xt)
}

/// Cross-validates the estimator hyperparameters once, on student and
/// teacher projections of one augmented pass over the training set.
fn snapshot_hyperparams(
    cfg: &TrainConfig,
    state: &DualState,
    train: &LabeledSet,
) -> Result<Hyperparams> {
    let mut rng = SplitMix64::derive(cfg.seed, STREAM_SNAPSHOT);
    let idx: Vec<usize> = (0..train.len()).collect();
    let (xs, xt) = augmented_views(train, &idx, &cfg.aug, &mut rng);
    let ps = SampleBatch::new(net::predict(&state.theta_s, &xs)?.projection)?;
    let pt = SampleBatch::new(net::predict(&state.theta_t, &xt)?.projection)?;
    let hp = cfg.lsmi.resolve(&ps, &pt)?;
    // keep the bandwidths as multiples of the median distance
    Ok(Hyperparams {
        sigma_s: Bandwidth::new(hp.sigma_s.get() / median_heuristic(&ps)?.get())?,
        sigma_t: Bandwidth::new(hp.sigma_t.get() / median_heuristic(&pt)?.get())?,
        delta: hp.delta,
    })
}

fn scaled_to_batch(mult: Hyperparams, ps: &Matrix, pt: &Matrix) -> Result<Hyperparams> {
    let ms = median_heuristic(&SampleBatch::new(ps.clone())?)?.get();
    let mt = median_heuristic(&SampleBatch::new(pt.clone())?)?.get();
    Ok(Hyperparams {
        sigma_s: Bandwidth::new(mult.sigma_s.get() * ms)?,
        sigma_t: Bandwidth::new(mult.sigma_t.get() * mt)?,
        delta: mult.delta,
    })
}

/// Trains with early stopping on validation macro F1.
pub fn train(cfg: &TrainConfig, train_set: &LabeledSet, val_set: &LabeledSet) -> Result<TrainOutcome> {
    train_observed(cfg, train_set, val_set, |_, _| {})
}

/// [`train`], calling `on_step` after every optimizer step and EMA update.
pub fn train_observed(
    cfg: &TrainConfig,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    mut on_step: impl FnMut(&DualState, &LossBreakdown),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size > train_set.len() {
        return Err(Error::InvalidParameter(format!(
            "batch size {} exceeds {} training samples",
            cfg.batch_size,
            train_set.len()
        )));
    }
    if val_set.dim() != train_set.dim() || val_set.classes != train_set.classes {
        return Err(Error::Shape("training and validation sets differ in shape".into()));
    }
    let arch = cfg.architecture(train_set.dim(), train_set.classes);
    let mut state = DualState::new(&arch, SplitMix64::derive(cfg.seed, STREAM_INIT).next_u64())?;
    let lsmi_hp = match cfg.dep_measure {
        DepMeasure::Lsmi if cfg.beta_max > 0.0 => Some(snapshot_hyperparams(cfg, &state, train_set)?),
        _ => None,
    };
    let mut shuffle_rng = SplitMix64::derive(cfg.seed, STREAM_SHUFFLE);
    let mut aug_rng = SplitMix64::derive(cfg.seed, STREAM_AUGMENT);
    let hyper = AdamHyper::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let batches = train_set.len() / cfg.batch_size;

    let mut history = Vec::new();
    let mut best: Option<(DualState, usize, f64)> = None;
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        let wd = wd_schedule(epoch, cfg);
        shuffle_rng.shuffle(&mut order);
        let mut sums = LossBreakdown::default();
        for b in 0..batches {
            let idx = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let (xs, xt) = augmented_views(train_set, idx, &cfg.aug, &mut aug_rng);
            let (out_s, trace) = net::forward(&state.theta_s, &xs)?;
            let out_t = net::predict(&state.theta_t, &xt)?;
            let inputs = LossInputs {
                ys_logits: &out_s.logits,
                yt_logits: &out_t.logits,
                ps: &out_s.projection,
                pt: &out_t.projection,
                labels: &labels,
            };
            let step = state.tau + 1;
            let diverged = |e: Error| Error::NonFiniteLoss {
                step,
                epoch,
                detail: format!("{e}"),
            };
            let batch_hp = match lsmi_hp {
                Some(hp) => Some(scaled_to_batch(hp, &out_s.projection, &out_t.projection).map_err(diverged)?),
                None => None,
            };
            let (parts, d_logits, d_ps) = total_loss(inputs, cfg, epoch, batch_hp).map_err(diverged)?;
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    epoch,
                    detail: format!(
                        "ce {} cons {} dep {}",
                        parts.ce, parts.cons, parts.dep
                    ),
                });
            }
            let (grads, _) = net::backward(&state.theta_s, &trace, &d_logits, &d_ps)?;
            let mut flat = state.theta_s.to_flat();
            adamw_step(&mut flat, &grads.to_flat(), &mut state.optim, lr, wd, hyper).map_err(diverged)?;
            state.theta_s.set_flat(&flat)?;
            ema_update(&mut state.theta_t, &state.theta_s, cfg.eta)?;
            state.tau = step;
            let parts = LossBreakdown { lr, wd, ..parts };
            on_step(&state, &parts);
            sums.ce += parts.ce;
            sums.cons += parts.cons;
            sums.dep += parts.dep;
            sums.total += parts.total;
            sums.lambda_eff = parts.lambda_eff;
            sums.beta_eff = parts.beta_eff;
        }
        state.epoch = epoch + 1;
        let steps = batches as f64;
        let loss = LossBreakdown {
            ce: sums.ce / steps,
            cons: sums.cons / steps,
            dep: sums.dep / steps,
            total: sums.total / steps,
            lr,
            wd,
            lambda_eff: sums.lambda_eff,
            beta_eff: sums.beta_eff,
        };
        let (_, train_acc) = evaluate(&state.theta_s, train_set)?;
        let (val_macro_f1, val_acc) = evaluate(&state.theta_s, val_set)?;
        history.push(EpochMetrics {
            epoch,
            loss,
            train_acc,
            val_acc,
            val_macro_f1,
        });
        let improved = best.as_ref().is_none_or(|(_, _, f1)| val_macro_f1 > *f1);
        if improved {
            best = Some((state.clone(), epoch, val_macro_f1));
        } else if let Some((_, best_epoch, _)) = &best {
            if epoch - best_epoch >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (best, best_epoch, best_val_macro_f1) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_macro_f1,
        history,
        lsmi_hp,
        steps: state.tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_points() {
        assert_eq!(ramp(0, 30, 0.5), 0.0);
        assert_eq!(ramp(30, 30, 0.5), 0.5);
        assert_eq!(ramp(15, 30, 0.5), 0.25);
        assert_eq!(ramp(45, 30, 0.5), 0.5);
    }

    #[test]
    fn large_scale_schedule_endpoints() {
        let cfg = TrainConfig::large_scale();
        assert_eq!(lr_schedule(19, &cfg), 4e-5);
        assert_eq!(wd_schedule(0, &cfg), 2e-5);
        assert_eq!(wd_schedule(299, &cfg), 2e-2);
        let mid = lr_schedule(20 + 140, &cfg);
        assert!((mid - 2e-5).abs() < 1e-18);
    }

    #[test]
    fn macro_f1_conventions() {
        assert_eq!(macro_f1(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).0, 1.0);
        let (f1, acc) = macro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1], 2);
        assert!((f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(acc, 0.5);
        assert_eq!(macro_f1(&[1, 1, 1], &[1, 1, 1], 2).0, 0.5);
    }

    #[test]
    fn identity_augmentation() {
        let mut rng = SplitMix64::new(5);
        let x = [0.25, -1.5, 3.0];
        let (a, b) = augment_pair(&x, &AugmentConfig::identity(), &mut rng);
        assert_eq!(a, x);
        assert_eq!(b, x);
    }

    #[test]
    fn zoom_of_one_is_identity() {
        let v = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(zoom_resample(&v, 1.0), v);
    }

    #[test]
    fn dep_measure_names_round_trip() {
        for m in [DepMeasure::Lsmi, DepMeasure::Kl, DepMeasure::Jsd, DepMeasure::None] {
            assert_eq!(DepMeasure::parse(m.name()), Some(m));
        }
    }
}
