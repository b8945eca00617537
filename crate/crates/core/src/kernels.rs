//! Pairwise distances, Gaussian Gram matrices and bandwidth selection.
//!
//! Bandwidths are treated as constants under differentiation, including when
//! they come from [`median_heuristic`]: the median is piecewise constant in
//! the samples, so its derivative vanishes almost everywhere.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

/// `n x d` matrix of finite samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch(Matrix);

impl SampleBatch {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Shape(format!(
                "sample batch must be at least 1x1, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("sample batch"));
        }
        Ok(Self(values))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// One-dimensional batch.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_vec(values.len(), 1, values.to_vec())?)
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self(self.0.select_rows(indices))
    }
}

impl Deref for SampleBatch {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Positive, finite Gaussian kernel width.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self(sigma))
        } else {
            Err(Error::InvalidBandwidth(sigma))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Symmetric Gaussian Gram matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Matrix);

impl GramMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl Deref for GramMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Squared Euclidean distances between all rows; exactly symmetric with a
/// zero diagonal.
pub fn pairwise_sq_dists(x: &Matrix) -> Result<Matrix> {
    if !x.is_finite() {
        return Err(Error::NonFinite("pairwise distance input"));
    }
    let n = x.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..i {
            let d = sq_dist(xi, x.row(j));
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    Ok(out)
}

/// Squared distances from each row of `a` to each row of `b`.
pub fn cross_sq_dists(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "cross distances between dims {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("cross distance input"));
    }
    Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| {
        sq_dist(a.row(i), b.row(j))
    }))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// `exp(-d / (2 sigma^2))` applied to a matrix of squared distances.
pub fn gaussian_from_sq_dists(d2: &Matrix, sigma: Bandwidth) -> Matrix {
    let scale = -1.0 / (2.0 * sigma.get() * sigma.get());
    d2.map(|d| math::exp(d * scale))
}

pub fn gaussian_gram(x: &SampleBatch, sigma: Bandwidth) -> Result<GramMatrix> {
    let d2 = pairwise_sq_dists(x)?;
    Ok(GramMatrix(gaussian_from_sq_dists(&d2, sigma)))
}

/// Rectangular kernel matrix between `a` (rows) and `b` (columns).
pub fn gaussian_cross(a: &Matrix, b: &Matrix, sigma: Bandwidth) -> Result<Matrix> {
    Ok(gaussian_from_sq_dists(&cross_sq_dists(a, b)?, sigma))
}

/// Median of the off-diagonal pairwise Euclidean distances.
///
/// If the median is zero (more than half the pairs coincide) the median of
/// the strictly positive distances is used instead; if every distance is
/// zero the bandwidth falls back to 1.
pub fn median_heuristic(x: &SampleBatch) -> Result<Bandwidth> {
    let n = x.n();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            dists.push(math::sqrt(sq_dist(x.row(i), x.row(j))));
        }
    }
    let med = median(&mut dists);
    if med > 0.0 {
        return Bandwidth::new(med);
    }
    let mut positive: Vec<f64> = dists.into_iter().filter(|&d| d > 0.0).collect();
    if positive.is_empty() {
        return Bandwidth::new(1.0);
    }
    Bandwidth::new(median(&mut positive))
}

/// Median by selection; averages the two middle values for even lengths.
fn median(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if len % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Vector-Jacobian product of the Gram map: `sum_ij G_ij dK_ij/dX`.
///
/// Row `r` of the result is `sum_j (G_rj + G_jr) K_rj (x_j - x_r) / sigma^2`.
pub fn gram_vjp(x: &SampleBatch, sigma: Bandwidth, g: &Matrix) -> Result<Matrix> {
    let k = gaussian_gram(x, sigma)?;
    gram_vjp_with(x, &k, sigma, g)
}

/// [`gram_vjp`] reusing an already computed Gram matrix of `x`.
pub fn gram_vjp_with(x: &Matrix, k: &Matrix, sigma: Bandwidth, g: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    if g.shape() != (n, n) || k.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "gram_vjp needs {n}x{n} sensitivities, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("gram_vjp upstream"));
    }
    let d = x.cols();
    let inv_s2 = 1.0 / (sigma.get() * sigma.get());
    let mut out = Matrix::zeros(n, d);
    for r in 0..n {
        let xr = x.row(r);
        let mut acc = alloc::vec![0.0; d];
        for j in 0..n {
            let w = (g[(r, j)] + g[(j, r)]) * k[(r, j)];
            if w == 0.0 {
                continue;
            }
            for (a, (xj, xr)) in acc.iter_mut().zip(x.row(j).iter().zip(xr)) {
                *a += w * (xj - xr);
            }
        }
        for (o, a) in out.row_mut(r).iter_mut().zip(acc) {
            *o = a * inv_s2;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[f64]]) -> SampleBatch {
        SampleBatch::from_rows(rows).unwrap()
    }

    #[test]
    fn sq_dists_small_cases() {
        let d = pairwise_sq_dists(&batch(&[&[0.0], &[2.0]])).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 4.0, 4.0, 0.0]);
        let d = pairwise_sq_dists(&batch(&[&[1.5, -2.0]])).unwrap();
        assert_eq!(d.as_slice(), &[0.0]);
    }

    #[test]
    fn non_finite_batch_rejected() {
        assert!(matches!(
            SampleBatch::from_rows(&[[f64::NAN]]),
            Err(Error::NonFinite(_))
        ));
        let m = Matrix::from_rows(&[[f64::INFINITY], [0.0]]).unwrap();
        assert!(pairwise_sq_dists(&m).is_err());
    }

    #[test]
    fn gram_two_points() {
        let k = gaussian_gram(&batch(&[&[0.0], &[2.0]]), Bandwidth::new(1.0).unwrap()).unwrap();
        let e2 = (-2.0f64).exp();
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(1, 1)], 1.0);
        assert!((k[(0, 1)] - e2).abs() < 1e-15);
        assert!((k[(0, 1)] - 0.135_335).abs() < 1e-6);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
    }

    #[test]
    fn gram_identical_rows_all_ones() {
        for &s in &[0.01, 1.0, 30.0] {
            let k = gaussian_gram(&batch(&[&[0.3, 4.0], &[0.3, 4.0]]), Bandwidth::new(s).unwrap())
                .unwrap();
            assert_eq!(k.as_slice(), &[1.0; 4]);
        }
    }

    #[test]
    fn invalid_bandwidths() {
        for &s in &[0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(Bandwidth::new(s), Err(Error::InvalidBandwidth(_))));
        }
    }

    #[test]
    fn median_heuristic_cases() {
        let s = median_heuristic(&batch(&[&[0.0], &[1.0], &[2.0]])).unwrap();
        assert_eq!(s.get(), 1.0);
        let s = median_heuristic(&batch(&[&[0.0, 0.0], &[3.0, 0.0]])).unwrap();
        assert_eq!(s.get(), 3.0);
        let s = median_heuristic(&batch(&[&[2.0], &[2.0], &[2.0]])).unwrap();
        assert_eq!(s.get(), 1.0);
        assert!(matches!(
            median_heuristic(&batch(&[&[1.0]])),
            Err(Error::InsufficientSamples { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn median_zero_falls_back_to_positive_distances() {
        // 4 coincident points and one outlier: 6 of 10 distances are zero
        let s = median_heuristic(&batch(&[&[0.0], &[0.0], &[0.0], &[0.0], &[5.0]])).unwrap();
        assert_eq!(s.get(), 5.0);
    }

    #[test]
    fn even_median_averages_middle_pair() {
        let mut v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&mut v), 2.5);
    }

    #[test]
    fn vjp_zero_upstream() {
        let x = batch(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5]]);
        let g = Matrix::zeros(3, 3);
        let out = gram_vjp(&x, Bandwidth::new(0.8).unwrap(), &g).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn vjp_shape_mismatch() {
        let x = batch(&[&[0.0], &[1.0]]);
        let g = Matrix::zeros(3, 3);
        assert!(matches!(
            gram_vjp(&x, Bandwidth::new(1.0).unwrap(), &g),
            Err(Error::Shape(_))
        ));
    }
}
