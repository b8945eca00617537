//! Synthetic datasets with known ground truth.
//!
//! Every generator is a pure function of its parameters and seed.

use alloc::format;
use alloc::vec::Vec;

use crate::kernels::SampleBatch;
use crate::linalg::Matrix;
use crate::math;
use crate::oracles::DiscreteJoint;
use crate::rng::SplitMix64;
use crate::{Error, Result};

/// Features with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("features"));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// `n` draws of a standard bivariate Gaussian with correlation `rho`:
/// `x = z1`, `y = rho z1 + sqrt(1 - rho^2) z2`.
pub fn gen_gaussian_pair(n: usize, rho: f64, seed: u64) -> Result<(SampleBatch, SampleBatch)> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "correlation must satisfy |rho| < 1, got {rho}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let c = math::sqrt(1.0 - rho * rho);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z1 = rng.normal();
        let z2 = rng.normal();
        xs.push(z1);
        ys.push(rho * z1 + c * z2);
    }
    Ok((SampleBatch::from_column(&xs)?, SampleBatch::from_column(&ys)?))
}

/// `n` categorical draws from `pmf`, returned as one-hot rows of the row
/// index (`x`) and column index (`y`).
pub fn gen_discrete_joint(
    pmf: &DiscreteJoint,
    n: usize,
    seed: u64,
) -> Result<(SampleBatch, SampleBatch)> {
    let table = pmf.pmf();
    let (r, c) = table.shape();
    let cdf: Vec<f64> = table
        .as_slice()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut rng = SplitMix64::new(seed);
    let mut x = Matrix::zeros(n, r);
    let mut y = Matrix::zeros(n, c);
    for s in 0..n {
        let u = rng.uniform() * cdf[cdf.len() - 1];
        let cell = cdf
            .iter()
            .position(|&v| u < v)
            .unwrap_or_else(|| last_positive(table.as_slice()));
        x[(s, cell / c)] = 1.0;
        y[(s, cell % c)] = 1.0;
    }
    Ok((SampleBatch::new(x)?, SampleBatch::new(y)?))
}

fn last_positive(p: &[f64]) -> usize {
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

/// Two interleaved half circles: class 0 on the upper unit semicircle,
/// class 1 on the lower one shifted to `(1, 0.5)`. Angles are evenly spaced,
/// Gaussian noise of std `noise` is added to both coordinates, and the rows
/// are shuffled.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<LabeledSet> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise must be >= 0, got {noise}")));
    }
    let n0 = n.div_ceil(2);
    let n1 = n - n0;
    let mut rows: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    for (count, label) in [(n0, 0usize), (n1, 1)] {
        for i in 0..count {
            let t = if count > 1 {
                math::PI * i as f64 / (count - 1) as f64
            } else {
                0.0
            };
            // sin(t) >= 0 on [0, pi]; the abs removes rounding below zero at t = pi
            let s = math::sin(t).abs();
            let p = if label == 0 {
                [math::cos(t), s]
            } else {
                [1.0 - math::cos(t), 0.5 - s]
            };
            rows.push((p, label));
        }
    }
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut rows);
    if noise > 0.0 {
        for (p, _) in &mut rows {
            p[0] += noise * rng.normal();
            p[1] += noise * rng.normal();
        }
    }
    let features = Matrix::from_rows(&rows.iter().map(|(p, _)| *p).collect::<Vec<_>>())?;
    let features = if n == 0 { Matrix::zeros(0, 2) } else { features };
    LabeledSet::new(features, rows.iter().map(|(_, l)| *l).collect(), 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_pair_rejects_bad_rho() {
        assert!(gen_gaussian_pair(10, 1.0, 0).is_err());
        assert!(gen_gaussian_pair(10, f64::NAN, 0).is_err());
    }

    #[test]
    fn gaussian_pair_deterministic() {
        assert_eq!(
            gen_gaussian_pair(100, 0.3, 11).unwrap(),
            gen_gaussian_pair(100, 0.3, 11).unwrap()
        );
        assert_ne!(
            gen_gaussian_pair(100, 0.3, 11).unwrap(),
            gen_gaussian_pair(100, 0.3, 12).unwrap()
        );
    }

    #[test]
    fn coupled_table_keeps_indices_equal() {
        let pmf = DiscreteJoint::from_rows(&[[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let (x, y) = gen_discrete_joint(&pmf, 500, 4).unwrap();
        for s in 0..500 {
            let xi = x.row(s).iter().position(|&v| v == 1.0).unwrap();
            let yi = y.row(s).iter().position(|&v| v == 1.0).unwrap();
            assert_eq!(xi, yi);
            assert_eq!(x.row(s).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn noiseless_moons_on_semicircle() {
        let set = gen_two_moons(101, 0.0, 3).unwrap();
        let zeros = set.labels.iter().filter(|&&l| l == 0).count();
        assert!((zeros as i64 - (101 - zeros) as i64).abs() <= 1);
        for (i, &label) in set.labels.iter().enumerate() {
            let (x, y) = (set.features[(i, 0)], set.features[(i, 1)]);
            if label == 0 {
                assert!((x * x + y * y - 1.0).abs() < 1e-12);
                assert!(y >= 0.0);
            }
        }
    }
}
