//! Least-squares mutual information (LSMI).
//!
//! The density ratio `p(s, t) / (p(s) p(t))` is modelled as a kernel
//! expansion centred on the paired samples, `r(s, t) = sum_l alpha_l
//! k(s, s_l) l(t, t_l)`, and fitted by regularised least squares:
//!
//! ```text
//! H     = (K K^T) o (L L^T) / n^2
//! h     = (K o L) 1 / n
//! alpha = (H + delta I)^-1 h
//! LSMI  = tr(diag(alpha) K L) / (2n) - 1/2
//! ```
//!
//! `o` is the Hadamard product. Only the first batch (`ps`) is ever
//! differentiated; the second batch is a constant.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::kernels::{
    gaussian_from_sq_dists, gram_vjp_with, median_heuristic, pairwise_sq_dists, Bandwidth,
    GramMatrix, SampleBatch,
};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::{Error, Result};

/// Largest acceptable `||(H + delta I) alpha - h||_inf`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

pub const DEFAULT_DELTA: f64 = 1e-2;

/// Multipliers of the median distance searched by [`LsmiConfig::cross_validated`].
pub const DEFAULT_SIGMA_MULTIPLIERS: [f64; 2] = [0.5, 1.0];

/// Regularisers searched by [`LsmiConfig::cross_validated`].
pub const DEFAULT_DELTA_GRID: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    Fixed(Bandwidth),
    /// Median pairwise distance of the batch.
    Median,
    /// Candidates `m * median` for each multiplier `m`, chosen by
    /// cross-validation.
    MedianGrid(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Differentiates through `alpha` by implicit differentiation of the
    /// regularised solve.
    Full,
    /// Holds `alpha` fixed and differentiates only the trace term.
    FrozenAlpha,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsmiConfig {
    pub sigma_s: BandwidthRule,
    pub sigma_t: BandwidthRule,
    /// A single value is used as-is; several values are cross-validated.
    pub deltas: Vec<f64>,
    pub folds: usize,
    pub grad_mode: GradMode,
}

impl Default for LsmiConfig {
    fn default() -> Self {
        Self {
            sigma_s: BandwidthRule::Median,
            sigma_t: BandwidthRule::Median,
            deltas: vec![DEFAULT_DELTA],
            folds: 2,
            grad_mode: GradMode::Full,
        }
    }
}

impl LsmiConfig {
    /// Hold-out search over [`DEFAULT_SIGMA_MULTIPLIERS`] for both
    /// bandwidths and [`DEFAULT_DELTA_GRID`].
    pub fn cross_validated() -> Self {
        Self {
            sigma_s: BandwidthRule::MedianGrid(DEFAULT_SIGMA_MULTIPLIERS.to_vec()),
            sigma_t: BandwidthRule::MedianGrid(DEFAULT_SIGMA_MULTIPLIERS.to_vec()),
            deltas: DEFAULT_DELTA_GRID.to_vec(),
            ..Self::default()
        }
    }

    pub fn fixed(sigma_s: Bandwidth, sigma_t: Bandwidth, delta: f64) -> Self {
        Self {
            sigma_s: BandwidthRule::Fixed(sigma_s),
            sigma_t: BandwidthRule::Fixed(sigma_t),
            deltas: vec![delta],
            ..Self::default()
        }
    }

    /// Same configuration with the two bandwidth rules exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            sigma_s: self.sigma_t.clone(),
            sigma_t: self.sigma_s.clone(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() {
            return Err(Error::InvalidParameter("delta grid is empty".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {d}")));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.folds
            )));
        }
        for rule in [&self.sigma_s, &self.sigma_t] {
            if let BandwidthRule::MedianGrid(m) = rule {
                if m.is_empty() {
                    return Err(Error::InvalidParameter("bandwidth grid is empty".into()));
                }
                if let Some(v) = m.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidParameter(format!(
                        "bandwidth multiplier must be positive, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolves the bandwidths and regulariser for this pair of batches,
    /// running [`cross_validate`] when any rule has more than one candidate.
    pub fn resolve(&self, ps: &SampleBatch, pt: &SampleBatch) -> Result<Hyperparams> {
        self.validate()?;
        check_pairing(ps, pt)?;
        let grid_s = candidates(&self.sigma_s, ps)?;
        let grid_t = candidates(&self.sigma_t, pt)?;
        if grid_s.len() == 1 && grid_t.len() == 1 && self.deltas.len() == 1 {
            return Ok(Hyperparams {
                sigma_s: grid_s[0],
                sigma_t: grid_t[0],
                delta: self.deltas[0],
            });
        }
        let choice = cross_validate(ps, pt, &grid_s, &grid_t, &self.deltas, self.folds)?;
        Ok(choice.hyperparams())
    }
}

fn candidates(rule: &BandwidthRule, x: &SampleBatch) -> Result<Vec<Bandwidth>> {
    match rule {
        BandwidthRule::Fixed(b) => Ok(vec![*b]),
        BandwidthRule::Median => Ok(vec![median_heuristic(x)?]),
        BandwidthRule::MedianGrid(mults) => {
            let med = median_heuristic(x)?.get();
            mults.iter().map(|m| Bandwidth::new(med * m)).collect()
        }
    }
}

/// Fully resolved estimator hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub sigma_s: Bandwidth,
    pub sigma_t: Bandwidth,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsmiEstimate {
    pub value: f64,
    pub alpha: Vec<f64>,
    pub sigma_s: Bandwidth,
    pub sigma_t: Bandwidth,
    pub delta: f64,
    pub solve_residual: f64,
}

fn check_square_pair(k: &Matrix, l: &Matrix) -> Result<usize> {
    let n = k.rows();
    if k.cols() != n || l.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "kernel matrices must be square and equal in size, got {}x{} and {}x{}",
            k.rows(),
            k.cols(),
            l.rows(),
            l.cols()
        )));
    }
    Ok(n)
}

fn check_pairing(ps: &SampleBatch, pt: &SampleBatch) -> Result<()> {
    if ps.n() != pt.n() {
        return Err(Error::Pairing {
            left: ps.n(),
            right: pt.n(),
        });
    }
    if ps.n() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: ps.n(),
        });
    }
    Ok(())
}

/// `H = (K K^T) o (L L^T) / n^2`.
pub fn build_h_matrix(k: &Matrix, l: &Matrix) -> Result<Matrix> {
    let n = check_square_pair(k, l)?;
    Ok(h_from_products(&k.outer_gram(), &l.outer_gram(), n))
}

fn h_from_products(kk: &Matrix, ll: &Matrix, n: usize) -> Matrix {
    let scale = 1.0 / (n as f64 * n as f64);
    let mut h = kk.clone();
    for (a, b) in h.as_mut_slice().iter_mut().zip(ll.as_slice()) {
        *a *= b * scale;
    }
    h
}

/// `h_i = (1/n) sum_j K_ij L_ij`.
pub fn build_h_vector(k: &Matrix, l: &Matrix) -> Result<Vec<f64>> {
    let n = check_square_pair(k, l)?;
    Ok(row_means_of_product(k, l, n))
}

fn row_means_of_product(k: &Matrix, l: &Matrix, denom: usize) -> Vec<f64> {
    (0..k.rows())
        .map(|i| dot(k.row(i), l.row(i)) / denom as f64)
        .collect()
}

/// Solution of `(H + delta I) alpha = h` with its Cholesky factor.
struct AlphaFit {
    alpha: Vec<f64>,
    residual: f64,
    factor: Cholesky,
}

fn fit_alpha(h_mat: &Matrix, h_vec: &[f64], delta: f64) -> Result<AlphaFit> {
    let n = h_mat.rows();
    if h_mat.cols() != n || h_vec.len() != n {
        return Err(Error::Shape(format!(
            "solve of {}x{} system with rhs of length {}",
            h_mat.rows(),
            h_mat.cols(),
            h_vec.len()
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let factor = Cholesky::factor_shifted(h_mat, delta)?;
    let mut alpha = factor.solve(h_vec)?;
    // one step of iterative refinement
    let r = residual_vector(h_mat, delta, &alpha, h_vec);
    let correction = factor.solve(&r)?;
    for (x, c) in alpha.iter_mut().zip(&correction) {
        *x += c;
    }
    let residual = residual_vector(h_mat, delta, &alpha, h_vec)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !alpha.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("alpha"));
    }
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::Residual { residual });
    }
    Ok(AlphaFit {
        alpha,
        residual,
        factor,
    })
}

/// `b - (a + delta I) x`.
fn residual_vector(a: &Matrix, delta: f64, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| b[i] - dot(a.row(i), x) - delta * x[i])
        .collect()
}

/// `alpha = (H + delta I)^-1 h` via Cholesky, with the residual checked
/// against [`RESIDUAL_TOLERANCE`].
pub fn solve_alpha(h_mat: &Matrix, h_vec: &[f64], delta: f64) -> Result<Vec<f64>> {
    Ok(fit_alpha(h_mat, h_vec, delta)?.alpha)
}

/// `tr(diag(alpha) K L) / (2n) - 1/2`.
pub fn lsmi_score(k: &Matrix, l: &Matrix, alpha: &[f64]) -> Result<f64> {
    let n = check_square_pair(k, l)?;
    if alpha.len() != n {
        return Err(Error::Shape(format!(
            "alpha has length {} for {n} samples",
            alpha.len()
        )));
    }
    Ok(0.5 * dot(alpha, &trace_diagonal(k, l)) / n as f64 - 0.5)
}

/// Diagonal of `K L`.
fn trace_diagonal(k: &Matrix, l: &Matrix) -> Vec<f64> {
    let lt = l.transpose();
    (0..k.rows()).map(|i| dot(k.row(i), lt.row(i))).collect()
}

/// Gram matrices, system and solution at fixed hyperparameters.
struct Fitted {
    k: GramMatrix,
    l: GramMatrix,
    ll: Matrix,
    fit: AlphaFit,
    value: f64,
}

fn fit_at(ps: &SampleBatch, pt: &SampleBatch, hp: Hyperparams) -> Result<Fitted> {
    check_pairing(ps, pt)?;
    let n = ps.n();
    let k = crate::kernels::gaussian_gram(ps, hp.sigma_s)?;
    let l = crate::kernels::gaussian_gram(pt, hp.sigma_t)?;
    let kk = k.outer_gram();
    let ll = l.outer_gram();
    let h_mat = h_from_products(&kk, &ll, n);
    let h_vec = row_means_of_product(&k, &l, n);
    let fit = fit_alpha(&h_mat, &h_vec, hp.delta)?;
    let value = lsmi_score(&k, &l, &fit.alpha)?;
    Ok(Fitted {
        k,
        l,
        ll,
        fit,
        value,
    })
}

/// LSMI at fixed hyperparameters.
pub fn lsmi_at(ps: &SampleBatch, pt: &SampleBatch, hp: Hyperparams) -> Result<LsmiEstimate> {
    let fitted = fit_at(ps, pt, hp)?;
    Ok(LsmiEstimate {
        value: fitted.value,
        solve_residual: fitted.fit.residual,
        alpha: fitted.fit.alpha,
        sigma_s: hp.sigma_s,
        sigma_t: hp.sigma_t,
        delta: hp.delta,
    })
}

/// Resolves hyperparameters per `cfg` and fits the estimator.
pub fn lsmi_estimate(ps: &SampleBatch, pt: &SampleBatch, cfg: &LsmiConfig) -> Result<LsmiEstimate> {
    let hp = cfg.resolve(ps, pt)?;
    lsmi_at(ps, pt, hp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvChoice {
    pub sigma_s: Bandwidth,
    pub sigma_t: Bandwidth,
    pub delta: f64,
    /// Fold-averaged hold-out criterion of the winner.
    pub criterion: f64,
}

impl CvChoice {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            sigma_s: self.sigma_s,
            sigma_t: self.sigma_t,
            delta: self.delta,
        }
    }

    /// Strict preference: lower criterion, then larger delta, then larger
    /// `sigma_s`, then larger `sigma_t`.
    fn beats(&self, other: &Self) -> bool {
        if self.criterion != other.criterion {
            return self.criterion < other.criterion;
        }
        if self.delta != other.delta {
            return self.delta > other.delta;
        }
        if self.sigma_s != other.sigma_s {
            return self.sigma_s > other.sigma_s;
        }
        self.sigma_t > other.sigma_t
    }
}

/// Per-bandwidth kernel products for one fold.
struct FoldKernels {
    /// Training-fold Gram matrix.
    train: Matrix,
    /// `train * train^T`.
    train_sq: Matrix,
    /// Hold-out rows against training columns.
    held: Matrix,
    /// `held^T * held`.
    held_sq: Matrix,
}

fn fold_kernels(
    x: &SampleBatch,
    train_idx: &[usize],
    held_idx: &[usize],
    grid: &[Bandwidth],
) -> Result<Vec<FoldKernels>> {
    let train = x.select(train_idx);
    let held = x.select(held_idx);
    let d_train = pairwise_sq_dists(&train)?;
    let d_held = crate::kernels::cross_sq_dists(&held, &train)?;
    Ok(grid
        .iter()
        .map(|&sigma| {
            let train = gaussian_from_sq_dists(&d_train, sigma);
            let held = gaussian_from_sq_dists(&d_held, sigma);
            FoldKernels {
                train_sq: train.outer_gram(),
                held_sq: held.inner_gram(),
                train,
                held,
            }
        })
        .collect())
}

/// Chooses `(sigma_s, sigma_t, delta)` minimising the hold-out least-squares
/// density-ratio criterion
/// `J = 1/2 alpha^T H_held alpha - h_held^T alpha`,
/// averaged over `folds` interleaved folds (sample `i` is held out in fold
/// `i mod folds`), with `alpha` fitted on the remaining samples.
///
/// Candidates whose solve fails on any fold are skipped.
pub fn cross_validate(
    ps: &SampleBatch,
    pt: &SampleBatch,
    sigma_grid_s: &[Bandwidth],
    sigma_grid_t: &[Bandwidth],
    delta_grid: &[f64],
    folds: usize,
) -> Result<CvChoice> {
    check_pairing(ps, pt)?;
    if sigma_grid_s.is_empty() || sigma_grid_t.is_empty() || delta_grid.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    if let Some(d) = delta_grid.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {d}")));
    }
    let n = ps.n();
    if folds < 2 || n < folds {
        return Err(Error::Folds { n, folds });
    }
    // a training fold needs at least one sample; n >= folds >= 2 ensures it
    let (ns, nt, nd) = (sigma_grid_s.len(), sigma_grid_t.len(), delta_grid.len());
    let mut totals = vec![0.0f64; ns * nt * nd];
    let mut last_err = None;
    for fold in 0..folds {
        let held_idx: Vec<usize> = (0..n).filter(|i| i % folds == fold).collect();
        let train_idx: Vec<usize> = (0..n).filter(|i| i % folds != fold).collect();
        let (n_train, n_held) = (train_idx.len(), held_idx.len());
        let ks = fold_kernels(ps, &train_idx, &held_idx, sigma_grid_s)?;
        let ls = fold_kernels(pt, &train_idx, &held_idx, sigma_grid_t)?;
        for (a, kf) in ks.iter().enumerate() {
            for (b, lf) in ls.iter().enumerate() {
                let h_mat = h_from_products(&kf.train_sq, &lf.train_sq, n_train);
                let h_vec = row_means_of_product(&kf.train, &lf.train, n_train);
                let h_held = h_from_products(&kf.held_sq, &lf.held_sq, n_held);
                let mut h_held_vec = vec![0.0f64; n_train];
                for i in 0..n_held {
                    for ((acc, k), l) in h_held_vec.iter_mut().zip(kf.held.row(i)).zip(lf.held.row(i)) {
                        *acc += k * l;
                    }
                }
                for v in &mut h_held_vec {
                    *v /= n_held as f64;
                }
                for (c, &delta) in delta_grid.iter().enumerate() {
                    let slot = &mut totals[(a * nt + b) * nd + c];
                    if !slot.is_finite() {
                        continue;
                    }
                    match fit_alpha(&h_mat, &h_vec, delta) {
                        Ok(fit) => {
                            let quad = dot(&fit.alpha, &h_held.matvec(&fit.alpha)?);
                            *slot += (0.5 * quad - dot(&h_held_vec, &fit.alpha)) / folds as f64;
                        }
                        Err(e) => {
                            *slot = f64::INFINITY;
                            last_err = Some(e);
                        }
                    }
                }
            }
        }
    }
    let mut best: Option<CvChoice> = None;
    for (a, &sigma_s) in sigma_grid_s.iter().enumerate() {
        for (b, &sigma_t) in sigma_grid_t.iter().enumerate() {
            for (c, &delta) in delta_grid.iter().enumerate() {
                let criterion = totals[(a * nt + b) * nd + c];
                if !criterion.is_finite() {
                    continue;
                }
                let cand = CvChoice {
                    sigma_s,
                    sigma_t,
                    delta,
                    criterion,
                };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::NonFinite("cross-validation criterion")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsmiGradient {
    pub score: f64,
    /// Derivative of the score with respect to each entry of `ps`.
    pub d_ps: Matrix,
    pub estimate: LsmiEstimate,
}

/// Resolves hyperparameters per `cfg`, then differentiates the score with
/// respect to `ps` holding them fixed.
pub fn lsmi_gradient(ps: &SampleBatch, pt: &SampleBatch, cfg: &LsmiConfig) -> Result<LsmiGradient> {
    let hp = cfg.resolve(ps, pt)?;
    lsmi_gradient_at(ps, pt, hp, cfg.grad_mode)
}

/// Score and `d score / d ps` at fixed hyperparameters.
///
/// With `c = d score / d alpha = diag(K L) / (2n)`, the adjoint
/// `lambda = (H + delta I)^-1 c` turns the implicit derivative
/// `d alpha = (H + delta I)^-1 (dh - dH alpha)` into
/// `d score = (explicit trace term) + lambda^T dh - lambda^T dH alpha`.
pub fn lsmi_gradient_at(
    ps: &SampleBatch,
    pt: &SampleBatch,
    hp: Hyperparams,
    mode: GradMode,
) -> Result<LsmiGradient> {
    let fitted = fit_at(ps, pt, hp)?;
    let n = ps.n();
    let nf = n as f64;
    let (k, l, alpha) = (&fitted.k, &fitted.l, &fitted.fit.alpha);

    // explicit trace term: d/dK_ij of sum_i alpha_i (K L)_ii / (2n)
    let mut g = Matrix::from_fn(n, n, |i, j| alpha[i] * l[(j, i)] / (2.0 * nf));

    if mode == GradMode::Full {
        let c: Vec<f64> = trace_diagonal(k, l).iter().map(|v| v / (2.0 * nf)).collect();
        let lambda = fitted.fit.factor.solve(&c)?;
        // lambda^T dh, with h_i = (1/n) sum_j K_ij L_ij
        for i in 0..n {
            let w = lambda[i] / nf;
            for (gij, lij) in g.row_mut(i).iter_mut().zip(l.row(i)) {
                *gij += w * lij;
            }
        }
        // -lambda^T dH alpha: d/dK of a^T ((K K^T) o M) b / n^2 is (W + W^T) K
        // with W = (a b^T) o M / n^2
        let scale = 1.0 / (nf * nf);
        let w_sym = Matrix::from_fn(n, n, |i, j| {
            (lambda[i] * alpha[j] * fitted.ll[(i, j)] + lambda[j] * alpha[i] * fitted.ll[(j, i)])
                * scale
        });
        let dh_term = w_sym.matmul(k)?;
        g = g.sub(&dh_term)?;
    }

    let d_ps = gram_vjp_with(ps, k, hp.sigma_s, &g)?;
    Ok(LsmiGradient {
        score: fitted.value,
        d_ps,
        estimate: LsmiEstimate {
            value: fitted.value,
            solve_residual: fitted.fit.residual,
            alpha: fitted.fit.alpha,
            sigma_s: hp.sigma_s,
            sigma_t: hp.sigma_t,
            delta: hp.delta,
        },
    })
}
