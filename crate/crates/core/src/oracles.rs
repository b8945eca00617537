//! Ground-truth and baseline dependence measures.
//!
//! These serve as references for the LSMI estimator: exact squared-loss
//! mutual information for discrete tables and bivariate Gaussians, exact
//! Gaussian MI, and the two classical MI estimators (k-nearest-neighbour and
//! kernel density plug-in).

use alloc::format;
use alloc::vec::Vec;

use crate::kernels::{Bandwidth, SampleBatch};
use crate::linalg::Matrix;
use crate::math::{self, digamma};
use crate::rng::SplitMix64;
use crate::{Error, Result};

/// Seed of the tie-breaking jitter stream in [`ksg_mi`].
const KSG_JITTER_SEED: u64 = 0x6b73_675f_6a69_7474;

/// Joint probability table `p(x = row, y = column)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint(Matrix);

impl DiscreteJoint {
    pub fn new(pmf: Matrix) -> Result<Self> {
        if pmf.rows() == 0 || pmf.cols() == 0 {
            return Err(Error::InvalidPmf("empty table".into()));
        }
        if let Some(p) = pmf.as_slice().iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidPmf(format!("entry {p} is not a probability")));
        }
        let total: f64 = pmf.as_slice().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPmf(format!("entries sum to {total}")));
        }
        Ok(Self(pmf))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Outer product of two marginals.
    pub fn product(px: &[f64], py: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_fn(px.len(), py.len(), |i, j| px[i] * py[j]))
    }

    pub fn pmf(&self) -> &Matrix {
        &self.0
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        (0..self.0.rows()).map(|i| self.0.row(i).iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        (0..self.0.cols())
            .map(|j| (0..self.0.rows()).map(|i| self.0[(i, j)]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiMethod {
    Ksg,
    Kde,
    Discrete,
    GaussianAnalytic,
}

/// Mutual information in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub method: MiMethod,
}

/// `1/2 sum_xy p(x) p(y) (p(x,y) / (p(x) p(y)) - 1)^2`.
pub fn discrete_smi(joint: &DiscreteJoint) -> Result<f64> {
    let px = joint.row_marginal();
    let py = joint.col_marginal();
    if let Some(i) = px.iter().position(|&p| p <= 0.0) {
        return Err(Error::DegenerateMarginal { axis: "row", index: i });
    }
    if let Some(j) = py.iter().position(|&p| p <= 0.0) {
        return Err(Error::DegenerateMarginal { axis: "column", index: j });
    }
    let mut total = 0.0;
    for (i, &a) in px.iter().enumerate() {
        for (j, &b) in py.iter().enumerate() {
            let indep = a * b;
            let r = joint.0[(i, j)] / indep - 1.0;
            total += indep * r * r;
        }
    }
    Ok(0.5 * total)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("correlation must satisfy |rho| < 1, got {rho}")))
    }
}

/// SMI of a standard bivariate Gaussian, `rho^2 / (2 (1 - rho^2))`.
pub fn gaussian_smi(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(rho * rho / (2.0 * (1.0 - rho * rho)))
}

/// MI of a standard bivariate Gaussian in nats, `-ln(1 - rho^2) / 2`.
pub fn gaussian_mi(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(-0.5 * math::ln(1.0 - rho * rho))
}

/// Kraskov-Stoegbauer-Grassberger estimator (variant 1) with max-norm
/// neighbourhoods:
/// `psi(k) + psi(n) - mean_i [psi(n_x(i) + 1) + psi(n_y(i) + 1)]`,
/// where `n_x(i)` counts the points strictly closer than the `k`-th joint
/// neighbour distance in the `x` subspace.
///
/// If some `k`-th neighbour distance is zero (duplicated points), every
/// coordinate receives uniform jitter of magnitude `1e-10 * range` from a
/// fixed stream before the search.
pub fn ksg_mi(x: &SampleBatch, y: &SampleBatch, k: usize) -> Result<MiEstimate> {
    let n = x.n();
    if y.n() != n {
        return Err(Error::Pairing { left: n, right: y.n() });
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    let mut xs = x.matrix().clone();
    let mut ys = y.matrix().clone();
    let mut eps = kth_joint_distances(&xs, &ys, k);
    if eps.contains(&0.0) {
        let mut rng = SplitMix64::new(KSG_JITTER_SEED);
        jitter(&mut xs, &mut rng);
        jitter(&mut ys, &mut rng);
        eps = kth_joint_distances(&xs, &ys, k);
    }
    let mut acc = 0.0;
    for i in 0..n {
        let nx = count_within(&xs, i, eps[i]);
        let ny = count_within(&ys, i, eps[i]);
        acc += digamma((nx + 1) as f64) + digamma((ny + 1) as f64);
    }
    let value = digamma(k as f64) + digamma(n as f64) - acc / n as f64;
    Ok(MiEstimate {
        value,
        method: MiMethod::Ksg,
    })
}

#[inline]
fn max_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn kth_joint_distances(xs: &Matrix, ys: &Matrix, k: usize) -> Vec<f64> {
    let n = xs.rows();
    let mut buf = Vec::with_capacity(n - 1);
    (0..n)
        .map(|i| {
            buf.clear();
            buf.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| max_norm(xs.row(i), xs.row(j)).max(max_norm(ys.row(i), ys.row(j)))),
            );
            *buf.select_nth_unstable_by(k - 1, f64::total_cmp).1
        })
        .collect()
}

fn count_within(m: &Matrix, i: usize, eps: f64) -> usize {
    let ri = m.row(i);
    (0..m.rows())
        .filter(|&j| j != i && max_norm(ri, m.row(j)) < eps)
        .count()
}

fn jitter(m: &mut Matrix, rng: &mut SplitMix64) {
    for c in 0..m.cols() {
        let col = m.column(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = if hi > lo { hi - lo } else { 1.0 };
        for r in 0..m.rows() {
            m[(r, c)] += 1e-10 * range * rng.uniform_range(-1.0, 1.0);
        }
    }
}

/// Silverman's rule `1.06 * std * n^(-1/5)`; a constant sample falls back
/// to a unit bandwidth.
pub fn silverman_bandwidth(values: &[f64]) -> Result<Bandwidth> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = math::sqrt(var);
    if sd > 0.0 {
        Bandwidth::new(1.06 * sd * math::powf(n as f64, -0.2))
    } else {
        Bandwidth::new(1.0)
    }
}

/// Resubstitution plug-in MI from Gaussian kernel density estimates:
/// `mean_i [ln p(x_i, y_i) - ln p(x_i) - ln p(y_i)]`, with the joint density
/// a product-kernel KDE. Both batches must be one-dimensional.
pub fn kde_mi(
    x: &SampleBatch,
    y: &SampleBatch,
    bw_x: Bandwidth,
    bw_y: Bandwidth,
) -> Result<MiEstimate> {
    let n = x.n();
    if y.n() != n {
        return Err(Error::Pairing { left: n, right: y.n() });
    }
    if x.dim() != 1 || y.dim() != 1 {
        return Err(Error::Shape(format!(
            "kde_mi needs 1-D marginals, got dims {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    let xs = x.as_slice();
    let ys = y.as_slice();
    let (hx, hy) = (bw_x.get(), bw_y.get());
    let (cx, cy) = (-0.5 / (hx * hx), -0.5 / (hy * hy));
    let norm_x = 1.0 / (math::sqrt(2.0 * math::PI) * hx);
    let norm_y = 1.0 / (math::sqrt(2.0 * math::PI) * hy);
    let mut acc = 0.0;
    for i in 0..n {
        let (mut px, mut py, mut pxy) = (0.0, 0.0, 0.0);
        for j in 0..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            let kx = math::exp(cx * dx * dx);
            let ky = math::exp(cy * dy * dy);
            px += kx;
            py += ky;
            pxy += kx * ky;
        }
        let nf = n as f64;
        acc += math::ln(pxy * norm_x * norm_y / nf)
            - math::ln(px * norm_x / nf)
            - math::ln(py * norm_y / nf);
    }
    Ok(MiEstimate {
        value: acc / n as f64,
        method: MiMethod::Kde,
    })
}

/// Central differences `(f(X + h e) - f(X - h e)) / 2h` for every entry.
pub fn finite_diff_grad(
    mut f: impl FnMut(&Matrix) -> f64,
    x0: &Matrix,
    h: f64,
) -> Result<Matrix> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let mut x = x0.clone();
    let mut out = Matrix::zeros(x0.rows(), x0.cols());
    for idx in 0..x0.as_slice().len() {
        let orig = x.as_slice()[idx];
        x.as_mut_slice()[idx] = orig + h;
        let plus = f(&x);
        x.as_mut_slice()[idx] = orig - h;
        let minus = f(&x);
        x.as_mut_slice()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("finite-difference evaluation"));
        }
        out.as_mut_slice()[idx] = (plus - minus) / (2.0 * h);
    }
    Ok(out)
}
