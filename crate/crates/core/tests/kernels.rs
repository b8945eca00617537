use depmax_core::kernels::{gaussian_gram, gram_vjp, median_heuristic, pairwise_sq_dists};
use depmax_core::oracles::finite_diff_grad;
use depmax_core::{Bandwidth, Matrix, SampleBatch, SplitMix64};
use proptest::prelude::*;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = SplitMix64::new(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn naive_sq_dists(x: &Matrix) -> Vec<Vec<f64>> {
    let n = x.rows();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..x.cols() {
                let d = x[(i, c)] - x[(j, c)];
                s += d * d;
            }
            out[i][j] = s;
        }
    }
    out
}

#[test]
fn sq_dists_small_cases() {
    let x = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
    assert_eq!(pairwise_sq_dists(&x).unwrap(), Matrix::from_rows(&[[0.0, 4.0], [4.0, 0.0]]).unwrap());
    let single = Matrix::from_rows(&[[1.5, -2.0]]).unwrap();
    assert_eq!(pairwise_sq_dists(&single).unwrap(), Matrix::zeros(1, 1));
}

#[test]
fn sq_dists_match_double_loop() {
    for seed in 0..5 {
        let x = random(5, 3, seed);
        let d = pairwise_sq_dists(&x).unwrap();
        let oracle = naive_sq_dists(&x);
        for i in 0..5 {
            for j in 0..5 {
                assert!((d[(i, j)] - oracle[i][j]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn sq_dists_reject_non_finite() {
    let x = Matrix::from_rows(&[[0.0], [f64::NAN]]).unwrap();
    assert!(pairwise_sq_dists(&x).is_err());
}

#[test]
fn gram_small_cases() {
    let x = SampleBatch::from_rows(&[[0.0], [2.0]]).unwrap();
    let k = gaussian_gram(&x, Bandwidth::new(1.0).unwrap()).unwrap();
    let e2 = (-2.0f64).exp();
    assert_eq!(k[(0, 0)], 1.0);
    assert!((k[(0, 1)] - e2).abs() < 1e-16);
    assert!((k[(0, 1)] - 0.135335).abs() < 1e-6);

    let same = SampleBatch::from_rows(&[[0.3, 0.4], [0.3, 0.4]]).unwrap();
    let k = gaussian_gram(&same, Bandwidth::new(0.01).unwrap()).unwrap();
    assert_eq!(k.as_slice(), &[1.0; 4]);
}

#[test]
fn gram_matches_composition_oracle() {
    let x = random(6, 2, 11);
    let sigma = 0.7;
    let k = gaussian_gram(&SampleBatch::new(x.clone()).unwrap(), Bandwidth::new(sigma).unwrap()).unwrap();
    let d = naive_sq_dists(&x);
    for i in 0..6 {
        for j in 0..6 {
            let expect = (-d[i][j] / (2.0 * sigma * sigma)).exp();
            assert!((k[(i, j)] - expect).abs() <= 1e-12);
        }
    }
}

#[test]
fn invalid_bandwidths_rejected() {
    for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(Bandwidth::new(s).is_err(), "sigma {s}");
    }
}

#[test]
fn median_examples() {
    let x = SampleBatch::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
    assert_eq!(median_heuristic(&x).unwrap().get(), 1.0);
    let x = SampleBatch::from_rows(&[[0.0, 0.0], [3.0, 0.0]]).unwrap();
    assert_eq!(median_heuristic(&x).unwrap().get(), 3.0);
    let x = SampleBatch::from_rows(&[[4.0, 1.0]; 5]).unwrap();
    assert_eq!(median_heuristic(&x).unwrap().get(), 1.0);
    let one = SampleBatch::from_rows(&[[1.0]]).unwrap();
    assert!(median_heuristic(&one).is_err());
}

#[test]
fn vjp_zero_upstream() {
    let x = SampleBatch::new(random(5, 2, 3)).unwrap();
    let out = gram_vjp(&x, Bandwidth::new(1.0).unwrap(), &Matrix::zeros(5, 5)).unwrap();
    assert_eq!(out.max_abs(), 0.0);
}

#[test]
fn vjp_shape_checked() {
    let x = SampleBatch::new(random(4, 2, 3)).unwrap();
    assert!(gram_vjp(&x, Bandwidth::new(1.0).unwrap(), &Matrix::zeros(3, 4)).is_err());
}

#[test]
fn vjp_matches_finite_differences() {
    let x = random(4, 2, 21);
    let g = random(4, 4, 22);
    let sigma = Bandwidth::new(0.9).unwrap();
    let analytic = gram_vjp(&SampleBatch::new(x.clone()).unwrap(), sigma, &g).unwrap();
    let numeric = finite_diff_grad(
        |m| {
            let k = gaussian_gram(&SampleBatch::new(m.clone()).unwrap(), sigma).unwrap();
            k.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum()
        },
        &x,
        1e-6,
    )
    .unwrap();
    for (a, f) in analytic.as_slice().iter().zip(numeric.as_slice()) {
        assert!((a - f).abs() <= 1e-5 * f.abs().max(1e-3), "{a} vs {f}");
    }
}

proptest! {
    #[test]
    fn gram_symmetric_unit_diagonal(seed in 0u64..1000, n in 1usize..12, d in 1usize..4, sigma in 0.05f64..5.0) {
        let x = SampleBatch::new(random(n, d, seed)).unwrap();
        let k = gaussian_gram(&x, Bandwidth::new(sigma).unwrap()).unwrap();
        for i in 0..n {
            prop_assert_eq!(k[(i, i)], 1.0);
            for j in 0..n {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
                prop_assert!(k[(i, j)] >= 0.0 && k[(i, j)] <= 1.0);
            }
        }
    }

    #[test]
    fn gram_scale_invariant(seed in 0u64..1000, c in 0.1f64..10.0) {
        let x = random(7, 3, seed);
        let k = gaussian_gram(&SampleBatch::new(x.clone()).unwrap(), Bandwidth::new(0.8).unwrap()).unwrap();
        let ks = gaussian_gram(&SampleBatch::new(x.scale(c)).unwrap(), Bandwidth::new(0.8 * c).unwrap()).unwrap();
        prop_assert!(k.max_abs_diff(&ks) <= 1e-12);
    }

    #[test]
    fn vjp_columns_sum_to_zero(seed in 0u64..1000, n in 2usize..10) {
        let x = SampleBatch::new(random(n, 3, seed)).unwrap();
        let g = random(n, n, seed + 1);
        let out = gram_vjp(&x, Bandwidth::new(1.3).unwrap(), &g).unwrap();
        for j in 0..3 {
            let s: f64 = out.column(j).iter().sum();
            prop_assert!(s.abs() <= 1e-12);
        }
    }

    #[test]
    fn sq_dists_agree_with_loop(seed in 0u64..1000, n in 1usize..9, d in 1usize..5) {
        let x = random(n, d, seed);
        let fast = pairwise_sq_dists(&x).unwrap();
        let slow = naive_sq_dists(&x);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((fast[(i, j)] - slow[i][j]).abs() <= 1e-12);
            }
        }
    }
}
