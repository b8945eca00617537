//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use depmax::commands::{self, Dataset, METRICS_FILE};
use depmax::config::RunConfig;
use depmax_core::data::{gen_discrete_joint, gen_gaussian_pair};
use depmax_core::drn::{ema_update, lr_schedule, ramp, wd_schedule, DepMeasure, TrainConfig};
use depmax_core::gradcheck;
use depmax_core::lsmi::{lsmi_estimate, LsmiConfig};
use depmax_core::net::NetworkParams;
use depmax_core::oracles::{discrete_smi, gaussian_mi, gaussian_smi, ksg_mi, DiscreteJoint};
use depmax_core::{Matrix, SampleBatch, SplitMix64};

type Outcome = (bool, String);

fn a1_gaussian_smi() -> Outcome {
    let start = Instant::now();
    let cfg = LsmiConfig::cross_validated();
    let mut means = Vec::new();
    for rho in [0.0, 0.5, 0.8] {
        let total: f64 = (0..10)
            .map(|seed| {
                let (x, y) = gen_gaussian_pair(2000, rho, seed).unwrap();
                lsmi_estimate(&x, &y, &cfg).unwrap().value
            })
            .sum();
        means.push(total / 10.0);
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = means[0].abs() <= 0.05
        && (0.10..=0.24).contains(&means[1])
        && (0.62..=1.15).contains(&means[2])
        && secs <= 120.0;
    let detail = format!(
        "means rho=0: {:.4}, rho=0.5: {:.4} (truth {:.4}), rho=0.8: {:.4} (truth {:.4}); {secs:.1} s",
        means[0],
        means[1],
        gaussian_smi(0.5).unwrap(),
        means[2],
        gaussian_smi(0.8).unwrap()
    );
    (ok, detail)
}

fn random_joint(seed: u64) -> DiscreteJoint {
    let mut rng = SplitMix64::new(seed);
    let cells: Vec<f64> = (0..9).map(|_| rng.uniform_range(0.05, 1.0)).collect();
    let total: f64 = cells.iter().sum();
    let pmf = Matrix::from_vec(3, 3, cells.iter().map(|c| c / total).collect()).unwrap();
    DiscreteJoint::new(pmf).unwrap()
}

fn a2_discrete() -> Outcome {
    let cfg = LsmiConfig::cross_validated();
    let mut rel = Vec::new();
    for seed in 0..10 {
        let joint = random_joint(1000 + seed);
        let truth = discrete_smi(&joint).unwrap();
        let (x, y) = gen_discrete_joint(&joint, 3000, seed).unwrap();
        let est = lsmi_estimate(&x, &y, &cfg).unwrap().value;
        rel.push((est - truth).abs() / truth);
    }
    let mean = rel.iter().sum::<f64>() / rel.len() as f64;
    (mean <= 0.25, format!("mean relative error {:.1}%", 100.0 * mean))
}

fn a3_ksg() -> Outcome {
    let truth = gaussian_mi(0.8).unwrap();
    let mean = (0..10)
        .map(|seed| {
            let (x, y) = gen_gaussian_pair(2000, 0.8, seed).unwrap();
            ksg_mi(&x, &y, 5).unwrap().value
        })
        .sum::<f64>()
        / 10.0;
    ((mean - truth).abs() <= 0.05, format!("mean {mean:.4} vs {truth:.5}"))
}

fn a4_lsmi_gradient() -> Outcome {
    let (report, col_sum) = gradcheck::check_lsmi().unwrap();
    let err = report.max_rel_err();
    let ok = err <= 1e-4 && col_sum <= 1e-10;
    (ok, format!("max relative error {err:.2e}, max column sum {col_sum:.2e}"))
}

fn a5_network_gradients() -> Outcome {
    let net = gradcheck::check_net().unwrap().max_rel_err();
    let total = gradcheck::check_total().unwrap().max_rel_err();
    let ok = net <= 1e-4 && total <= 1e-4;
    (ok, format!("network {net:.2e}, composite loss {total:.2e}"))
}

fn a6_ema() -> Outcome {
    let arch = gradcheck::net_architecture();
    let c = 0.75;
    let mut student = NetworkParams::zeros(&arch).unwrap();
    student.set_flat(&vec![c; student.num_params()]).unwrap();
    let mut worst = 0.0f64;
    for eta in [0.0, 0.5, 0.99, 1.0] {
        let mut teacher = NetworkParams::zeros(&arch).unwrap();
        for tau in 1..=100 {
            ema_update(&mut teacher, &student, eta).unwrap();
            let expect = c * (1.0 - f64::powi(eta, tau));
            for v in teacher.to_flat() {
                worst = worst.max((v - expect).abs());
            }
        }
    }
    (worst <= 1e-12, format!("max deviation {worst:.2e}"))
}

fn a7_schedules() -> Outcome {
    let cfg = TrainConfig::large_scale();
    let lr = lr_schedule(cfg.warmup_epochs - 1, &cfg);
    let wd0 = wd_schedule(0, &cfg);
    let wd1 = wd_schedule(cfg.epochs - 1, &cfg);
    let lam = ramp(30, 30, cfg.lambda_max);
    let beta = ramp(30, 30, cfg.beta_max);
    let ok = lr == 4e-5 && wd0 == 2e-5 && wd1 == 2e-2 && lam == cfg.lambda_max && beta == cfg.beta_max;
    (ok, format!("lr {lr:e}, wd {wd0:e} -> {wd1:e}, ramp {lam} / {beta}"))
}

fn train_config(dep: DepMeasure, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.seed = seed;
    cfg.train = match dep {
        DepMeasure::None => cfg.train.ce_only(),
        d => TrainConfig {
            dep_measure: d,
            ..cfg.train
        },
    };
    cfg
}

fn a8_drn_benefit() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let variants = [DepMeasure::Lsmi, DepMeasure::Kl, DepMeasure::Jsd, DepMeasure::None];
    let mut means = [0.0; 4];
    let mut slowest = 0.0f64;
    for (v, &dep) in variants.iter().enumerate() {
        for seed in 0..5 {
            let cfg = train_config(dep, seed);
            let start = Instant::now();
            let (_, outcome) = commands::train(&Dataset::TwoMoons, &cfg, dir.path()).unwrap();
            slowest = slowest.max(start.elapsed().as_secs_f64());
            means[v] += outcome.best_val_macro_f1 / 5.0;
        }
    }
    let [lsmi, kl, jsd, ce] = means;
    let ok = lsmi >= ce && slowest <= 60.0;
    let detail = format!(
        "mean best val macro F1: LSMI {lsmi:.4}, CE-only {ce:.4} (diff {:+.4}); \
         ungated: KL {kl:.4}, JSD {jsd:.4}, LSMI best = {}; slowest run {slowest:.1} s",
        lsmi - ce,
        lsmi >= kl && lsmi >= jsd
    );
    (ok, detail)
}

fn a9_determinism() -> Outcome {
    let cfg = train_config(DepMeasure::Lsmi, 7);
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            commands::train(&Dataset::TwoMoons, &cfg, dir.path()).unwrap();
            std::fs::read(dir.path().join(METRICS_FILE)).unwrap()
        })
        .collect();
    let ok = runs[0] == runs[1] && !runs[0].is_empty();
    (ok, format!("metrics files of {} bytes, identical: {}", runs[0].len(), runs[0] == runs[1]))
}

fn a10_symmetry() -> Outcome {
    let cfg = LsmiConfig::default();
    let (mut swap, mut perm) = (0.0f64, 0.0f64);
    for inst in 0..20u64 {
        let mut rng = SplitMix64::new(5000 + inst);
        let n = 10 + rng.below(50);
        let (ds, dt) = (1 + rng.below(3), 1 + rng.below(3));
        let ps = Matrix::from_fn(n, ds, |_, _| rng.normal());
        let pt = Matrix::from_fn(n, dt, |i, j| 0.7 * ps[(i, j % ds)] + 0.5 * rng.normal());
        let (ps, pt) = (SampleBatch::new(ps).unwrap(), SampleBatch::new(pt).unwrap());
        let a = lsmi_estimate(&ps, &pt, &cfg).unwrap().value;
        let b = lsmi_estimate(&pt, &ps, &cfg.swapped()).unwrap().value;
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let c = lsmi_estimate(&ps.select(&order), &pt.select(&order), &cfg).unwrap().value;
        swap = swap.max((a - b).abs());
        perm = perm.max((a - c).abs());
    }
    (swap <= 1e-12 && perm <= 1e-12, format!("max swap gap {swap:.2e}, max permutation gap {perm:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("A1 Gaussian SMI recovery", a1_gaussian_smi),
        ("A2 discrete oracle equivalence", a2_discrete),
        ("A3 KSG sanity", a3_ksg),
        ("A4 LSMI gradient", a4_lsmi_gradient),
        ("A5 network and composite-loss gradients", a5_network_gradients),
        ("A6 EMA closed form", a6_ema),
        ("A7 schedules", a7_schedules),
        ("A8 DRN benefit on two moons", a8_drn_benefit),
        ("A9 determinism", a9_determinism),
        ("A10 symmetry and permutation invariance", a10_symmetry),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (ok, detail) = check();
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
