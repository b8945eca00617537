//! GELU and layer normalisation.

use alloc::vec::Vec;

use crate::math;

/// Variance floor inside layer normalisation.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `x * Phi(x)` with the exact normal CDF.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * math::normal_cdf(x)
}

/// `Phi(x) + x * phi(x)`.
#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    math::normal_cdf(x) + x * math::normal_pdf(x)
}

/// Mean and `1 / sqrt(var + eps)` of `v`, with the biased variance.
pub(crate) fn moments(v: &[f64]) -> (f64, f64) {
    let d = v.len() as f64;
    let mean = v.iter().sum::<f64>() / d;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
    (mean, 1.0 / math::sqrt(var + LAYER_NORM_EPS))
}

/// `(v - mean) / sqrt(var + eps) * gain + offset`.
pub fn layer_norm(v: &[f64], gain: &[f64], offset: &[f64]) -> Vec<f64> {
    debug_assert!(v.len() == gain.len() && v.len() == offset.len());
    let (mean, inv) = moments(v);
    v.iter()
        .zip(gain)
        .zip(offset)
        .map(|((x, g), o)| (x - mean) * inv * g + o)
        .collect()
}

/// Gradients of `layer_norm` given the upstream sensitivity `dy`:
/// `(dv, dgain, doffset)`.
pub fn layer_norm_grad(v: &[f64], gain: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mean, inv) = moments(v);
    let xhat: Vec<f64> = v.iter().map(|x| (x - mean) * inv).collect();
    let dxhat: Vec<f64> = dy.iter().zip(gain).map(|(d, g)| d * g).collect();
    let dgain = dy.iter().zip(&xhat).map(|(d, x)| d * x).collect();
    let doffset = dy.to_vec();
    (normalize_backward(&xhat, inv, &dxhat), dgain, doffset)
}

/// Back through `xhat = (v - mean) * inv` for one row.
pub(crate) fn normalize_backward(xhat: &[f64], inv: f64, dxhat: &[f64]) -> Vec<f64> {
    let d = xhat.len() as f64;
    let mean_d = dxhat.iter().sum::<f64>() / d;
    let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d;
    dxhat
        .iter()
        .zip(xhat)
        .map(|(g, x)| inv * (g - mean_d - x * mean_dx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        for x in [-3.0, -0.7, 0.2, 1.5] {
            assert!((gelu(x) - gelu(-x) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn gelu_grad_matches_differences() {
        let h = 1e-5;
        for x in [-2.0, -0.5, 0.3, 4.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() <= 1e-8, "x = {x}");
        }
    }

    #[test]
    fn layer_norm_cases() {
        let out = layer_norm(&[3.0; 4], &[1.0; 4], &[0.0; 4]);
        assert!(out.iter().all(|v| *v == 0.0));
        let out = layer_norm(&[1.0, -1.0], &[1.0; 2], &[0.0; 2]);
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out[0] - expect).abs() < 1e-15);
        assert!((out[1] + expect).abs() < 1e-15);
    }
}
