use depmax_core::lsmi::{lsmi_estimate, LsmiConfig};
use depmax_core::{Matrix, SampleBatch, SplitMix64};
use proptest::prelude::*;

fn random(rows: usize, cols: usize, rng: &mut SplitMix64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn paired(seed: u64, n: usize, ds: usize, dt: usize) -> (SampleBatch, SampleBatch) {
    let mut rng = SplitMix64::new(seed);
    let ps = random(n, ds, &mut rng);
    let noise = random(n, dt, &mut rng);
    let pt = Matrix::from_fn(n, dt, |i, j| 0.6 * ps[(i, j % ds)] + noise[(i, j)]);
    (SampleBatch::new(ps).unwrap(), SampleBatch::new(pt).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn swapping_the_pair_keeps_the_score(seed in 0u64..100_000, n in 4usize..40, ds in 1usize..4, dt in 1usize..4) {
        let (ps, pt) = paired(seed, n, ds, dt);
        let cfg = LsmiConfig::default();
        let a = lsmi_estimate(&ps, &pt, &cfg).unwrap().value;
        let b = lsmi_estimate(&pt, &ps, &cfg.swapped()).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn joint_row_permutation_keeps_the_score(seed in 0u64..100_000, n in 4usize..40) {
        let (ps, pt) = paired(seed, n, 2, 2);
        let mut perm: Vec<usize> = (0..n).collect();
        SplitMix64::new(seed ^ 0xabc).shuffle(&mut perm);
        let cfg = LsmiConfig::default();
        let a = lsmi_estimate(&ps, &pt, &cfg).unwrap().value;
        let b = lsmi_estimate(&ps.select(&perm), &pt.select(&perm), &cfg).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn residual_is_small(seed in 0u64..100_000, n in 2usize..30) {
        let (ps, pt) = paired(seed, n, 2, 1);
        let est = lsmi_estimate(&ps, &pt, &LsmiConfig::default()).unwrap();
        prop_assert!(est.solve_residual <= 1e-8);
    }
}
