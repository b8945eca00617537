use depmax_core::data::gen_gaussian_pair;
use depmax_core::oracles::{
    discrete_smi, finite_diff_grad, gaussian_mi, gaussian_smi, kde_mi, ksg_mi, silverman_bandwidth,
    DiscreteJoint,
};
use depmax_core::{Matrix, SampleBatch, SplitMix64};
use proptest::prelude::*;

fn bivariate_density(x: f64, y: f64, rho: f64) -> f64 {
    let det = 1.0 - rho * rho;
    (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * det)).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

fn std_normal(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Riemann sums of the SMI and MI integrands on an `m x m` grid over
/// `[-w, w]^2`.
fn quadrature(rho: f64, w: f64, m: usize) -> (f64, f64) {
    let h = 2.0 * w / (m - 1) as f64;
    let (mut smi, mut mi) = (0.0, 0.0);
    for a in 0..m {
        let x = -w + a as f64 * h;
        let px = std_normal(x);
        for b in 0..m {
            let y = -w + b as f64 * h;
            let indep = px * std_normal(y);
            let joint = bivariate_density(x, y, rho);
            let r = joint / indep - 1.0;
            smi += indep * r * r;
            mi += joint * (joint / indep).ln();
        }
    }
    (0.5 * smi * h * h, mi * h * h)
}

#[test]
fn gaussian_closed_forms_match_quadrature() {
    for rho in [0.3, 0.5, 0.8, 0.9] {
        let (_, mi) = quadrature(rho, 6.0, 1201);
        assert!((gaussian_mi(rho).unwrap() - mi).abs() <= 1e-3, "rho {rho}: mi {mi}");
        // the squared-ratio integrand has much heavier tails along the diagonal
        let (smi, _) = quadrature(rho, 24.0, 2401);
        assert!((gaussian_smi(rho).unwrap() - smi).abs() <= 1e-3, "rho {rho}: smi {smi}");
    }
    assert!((gaussian_mi(0.8).unwrap() - 0.51083).abs() < 1e-5);
    assert!((gaussian_smi(0.8).unwrap() - 0.888_888_888_888_889).abs() < 1e-12);
    assert!((gaussian_smi(0.5).unwrap() - 1.0 / 6.0).abs() < 1e-15);
}

#[test]
fn gaussian_edge_cases() {
    assert_eq!(gaussian_mi(0.0).unwrap(), 0.0);
    assert_eq!(gaussian_smi(0.0).unwrap(), 0.0);
    assert_eq!(gaussian_mi(-0.6).unwrap(), gaussian_mi(0.6).unwrap());
    for bad in [1.0, -1.0, 1.5, f64::NAN] {
        assert!(gaussian_mi(bad).is_err());
        assert!(gaussian_smi(bad).is_err());
    }
    let mut last = -1.0;
    for rho in [0.0, 0.2, 0.4, 0.6, 0.8, 0.95] {
        let v = gaussian_smi(rho).unwrap();
        assert!(v > last);
        last = v;
    }
}

fn random_pmf(r: usize, c: usize, seed: u64) -> Matrix {
    let mut rng = SplitMix64::new(seed);
    let raw = Matrix::from_fn(r, c, |_, _| rng.uniform() + 0.05);
    let total: f64 = raw.as_slice().iter().sum();
    raw.scale(1.0 / total)
}

#[test]
fn discrete_matches_four_loop() {
    for seed in 0..5 {
        let pmf = random_pmf(3, 3, seed);
        let joint = DiscreteJoint::new(pmf.clone()).unwrap();
        let mut total = 0.0;
        for x in 0..3 {
            for y in 0..3 {
                let mut px = 0.0;
                for yy in 0..3 {
                    px += pmf[(x, yy)];
                }
                let mut py = 0.0;
                for xx in 0..3 {
                    py += pmf[(xx, y)];
                }
                let r = pmf[(x, y)] / (px * py) - 1.0;
                total += px * py * r * r;
            }
        }
        assert!((discrete_smi(&joint).unwrap() - 0.5 * total).abs() <= 1e-14);
    }
}

#[test]
fn discrete_validation() {
    assert!(DiscreteJoint::from_rows(&[[0.5, 0.6]]).is_err());
    assert!(DiscreteJoint::from_rows(&[[-0.1, 1.1]]).is_err());
    let zero_row = DiscreteJoint::from_rows(&[[0.5, 0.5], [0.0, 0.0]]).unwrap();
    assert!(discrete_smi(&zero_row).is_err());
    let diag = DiscreteJoint::from_rows(&[[0.5, 0.0], [0.0, 0.5]]).unwrap();
    assert!((discrete_smi(&diag).unwrap() - 0.5).abs() < 1e-15);
}

fn mean_over_seeds(f: impl Fn(u64) -> f64) -> f64 {
    (0..10).map(f).sum::<f64>() / 10.0
}

#[test]
fn ksg_independent_and_correlated() {
    let indep = mean_over_seeds(|s| {
        let (x, y) = gen_gaussian_pair(2000, 0.0, 1000 + s).unwrap();
        ksg_mi(&x, &y, 5).unwrap().value
    });
    assert!(indep.abs() <= 0.05, "independent mean {indep}");
    let dep = mean_over_seeds(|s| {
        let (x, y) = gen_gaussian_pair(2000, 0.8, 2000 + s).unwrap();
        ksg_mi(&x, &y, 5).unwrap().value
    });
    assert!((dep - 0.51083).abs() <= 0.05, "correlated mean {dep}");
}

#[test]
fn ksg_translation_and_common_scaling() {
    let (x, y) = gen_gaussian_pair(300, 0.6, 5).unwrap();
    let base = ksg_mi(&x, &y, 4).unwrap().value;
    let shifted = SampleBatch::new(x.matrix().map(|v| v + 3.0)).unwrap();
    assert_eq!(ksg_mi(&shifted, &y, 4).unwrap().value, base);
    // a power of two keeps every distance exact; scaling one side alone
    // would change which coordinate sets the joint max-norm
    let sx = SampleBatch::new(x.matrix().scale(4.0)).unwrap();
    let sy = SampleBatch::new(y.matrix().scale(4.0)).unwrap();
    assert_eq!(ksg_mi(&sx, &sy, 4).unwrap().value, base);
}

#[test]
fn ksg_arguments_checked() {
    let (x, y) = gen_gaussian_pair(10, 0.0, 1).unwrap();
    assert!(ksg_mi(&x, &y, 0).is_err());
    assert!(ksg_mi(&x, &y, 10).is_err());
    let (z, _) = gen_gaussian_pair(9, 0.0, 1).unwrap();
    assert!(ksg_mi(&x, &z, 3).is_err());
}

#[test]
fn ksg_handles_duplicates() {
    let x = SampleBatch::from_column(&[1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 4.0, 4.0]).unwrap();
    let y = SampleBatch::from_column(&[0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0, 3.0]).unwrap();
    assert!(ksg_mi(&x, &y, 2).unwrap().value.is_finite());
}

fn kde_at(n: usize, rho: f64, seed: u64) -> f64 {
    let (x, y) = gen_gaussian_pair(n, rho, seed).unwrap();
    let bx = silverman_bandwidth(x.as_slice()).unwrap();
    let by = silverman_bandwidth(y.as_slice()).unwrap();
    kde_mi(&x, &y, bx, by).unwrap().value
}

#[test]
fn kde_independent_and_correlated() {
    let indep = mean_over_seeds(|s| kde_at(2000, 0.0, 3000 + s));
    assert!(indep.abs() <= 0.08, "independent mean {indep}");
    let dep = mean_over_seeds(|s| kde_at(2000, 0.8, 4000 + s));
    assert!(dep > 0.0 && (dep - 0.51083).abs() <= 0.12, "correlated mean {dep}");
}

#[test]
fn kde_constant_target() {
    let (x, _) = gen_gaussian_pair(2000, 0.0, 17).unwrap();
    let y = SampleBatch::from_column(&[0.5; 2000]).unwrap();
    let bx = silverman_bandwidth(x.as_slice()).unwrap();
    let by = silverman_bandwidth(y.as_slice()).unwrap();
    assert!(kde_mi(&x, &y, bx, by).unwrap().value <= 0.05);
}

#[test]
fn estimators_increase_with_correlation() {
    let mut last = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for rho in [0.0, 0.3, 0.6, 0.9] {
        let ksg = mean_over_seeds(|s| {
            let (x, y) = gen_gaussian_pair(2000, rho, 5000 + s).unwrap();
            ksg_mi(&x, &y, 5).unwrap().value
        });
        let kde = mean_over_seeds(|s| kde_at(2000, rho, 5000 + s));
        assert!(ksg > last.0 && kde > last.1, "rho {rho}: ksg {ksg}, kde {kde}");
        last = (ksg, kde);
    }
}

#[test]
fn finite_differences_of_simple_functions() {
    let x0 = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
    let g = finite_diff_grad(|m| m.as_slice().iter().map(|v| v * v).sum(), &x0, 1e-5).unwrap();
    for (a, b) in g.as_slice().iter().zip(x0.as_slice()) {
        assert!((a - 2.0 * b).abs() <= 1e-8 * (2.0 * b).abs());
    }
    let g = finite_diff_grad(|_| 7.0, &x0, 1e-5).unwrap();
    assert_eq!(g.max_abs(), 0.0);
    assert!(finite_diff_grad(|_| 1.0, &x0, 0.0).is_err());
    assert!(finite_diff_grad(|m| if m[(0, 0)] > 1.0 { f64::NAN } else { 0.0 }, &x0, 1e-5).is_err());
}

proptest! {
    #[test]
    fn discrete_smi_non_negative(seed in 0u64..10_000, r in 2usize..5, c in 2usize..5) {
        let joint = DiscreteJoint::new(random_pmf(r, c, seed)).unwrap();
        prop_assert!(discrete_smi(&joint).unwrap() >= 0.0);
    }

    #[test]
    fn product_tables_have_zero_smi(seed in 0u64..10_000) {
        let mut rng = SplitMix64::new(seed);
        let mut px: Vec<f64> = (0..3).map(|_| rng.uniform() + 0.1).collect();
        let mut py: Vec<f64> = (0..4).map(|_| rng.uniform() + 0.1).collect();
        let sx: f64 = px.iter().sum();
        let sy: f64 = py.iter().sum();
        px.iter_mut().for_each(|v| *v /= sx);
        py.iter_mut().for_each(|v| *v /= sy);
        let joint = DiscreteJoint::product(&px, &py).unwrap();
        prop_assert!(discrete_smi(&joint).unwrap() <= 1e-14);
    }
}
