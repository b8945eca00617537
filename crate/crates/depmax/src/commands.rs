//! Command bodies. Each returns the text destined for standard output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use depmax_core::data::{gen_two_moons, LabeledSet};
use depmax_core::drn::{self, DepMeasure, TrainConfig, TrainOutcome};
use depmax_core::gradcheck::{self, Report, TOLERANCE};
use depmax_core::lsmi::lsmi_estimate;
use depmax_core::oracles::{kde_mi, ksg_mi, silverman_bandwidth};
use depmax_core::{Bandwidth, SampleBatch};

use crate::benchmark::{self, Grid, Method};
use crate::checkpoint;
use crate::config::{KdeBandwidth, RunConfig};
use crate::csvio::{fmt_f64, load_labeled_csv, load_paired_csv};
use crate::error::{CliError, Result};
use crate::metrics;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

pub fn kde_bandwidths(x: &SampleBatch, y: &SampleBatch, cfg: &RunConfig) -> Result<(Bandwidth, Bandwidth)> {
    let pick = |rule: KdeBandwidth, b: &SampleBatch| -> Result<Bandwidth> {
        Ok(match rule {
            KdeBandwidth::Silverman => silverman_bandwidth(b.as_slice())?,
            KdeBandwidth::Fixed(h) => Bandwidth::new(h)?,
        })
    };
    Ok((pick(cfg.kde_bw_x, x)?, pick(cfg.kde_bw_y, y)?))
}

/// `method,value,n,d,sigma_s,sigma_t,delta`; the last three are empty for
/// KSG and KDE.
pub fn estimate(input: &Path, method: Method, cfg: &RunConfig) -> Result<String> {
    let (s, t) = load_paired_csv(input)?;
    let (n, d) = (s.n(), s.dim());
    let (value, extra) = match method {
        Method::Lsmi => {
            let est = lsmi_estimate(&s, &t, cfg.lsmi())?;
            let extra = [est.sigma_s.get(), est.sigma_t.get(), est.delta].map(fmt_f64).join(",");
            (est.value, extra)
        }
        Method::Ksg => (ksg_mi(&s, &t, cfg.ksg_k)?.value, ",,".to_string()),
        Method::Kde => {
            let (bx, by) = kde_bandwidths(&s, &t, cfg)?;
            (kde_mi(&s, &t, bx, by)?.value, ",,".to_string())
        }
    };
    Ok(format!("{},{},{n},{d},{extra}\n", method.name(), fmt_f64(value)))
}

/// Writes the sweep to `out` and returns nothing for standard output.
pub fn benchmark(grid: &Grid, cfg: &RunConfig, timings: bool, out: &Path) -> Result<String> {
    let text = benchmark::run(grid, cfg, timings)?;
    crate::csvio::write_text(out, &text)?;
    Ok(String::new())
}

pub fn variant_name(cfg: &TrainConfig) -> &'static str {
    match cfg.dep_measure {
        DepMeasure::Lsmi => "DRN-MSE-LSMI",
        DepMeasure::Kl => "DRN-MSE-KL",
        DepMeasure::Jsd => "DRN-MSE-JSD",
        DepMeasure::None if cfg.lambda_max == 0.0 => "CE-only",
        DepMeasure::None => "DRN-MSE",
    }
}

#[derive(Debug, Clone)]
pub enum Dataset {
    TwoMoons,
    Csv { train: PathBuf, val: PathBuf },
}

pub fn load_dataset(dataset: &Dataset, cfg: &RunConfig) -> Result<(LabeledSet, LabeledSet)> {
    match dataset {
        Dataset::TwoMoons => {
            let seed = cfg.train.seed;
            let d = &cfg.data;
            Ok((
                gen_two_moons(d.n_train, d.noise, d.train_seed(seed))?,
                gen_two_moons(d.n_val, d.noise, d.val_seed(seed))?,
            ))
        }
        Dataset::Csv { train, val } => {
            let mut tr = load_labeled_csv(train)?;
            let mut va = load_labeled_csv(val)?;
            if tr.dim() != va.dim() {
                return Err(CliError::Input {
                    path: val.clone(),
                    msg: format!("{} features, training file has {}", va.dim(), tr.dim()),
                });
            }
            let classes = tr.classes.max(va.classes);
            tr.classes = classes;
            va.classes = classes;
            Ok((tr, va))
        }
    }
}

/// Trains, writes `metrics.csv` and the best student checkpoint into
/// `out_dir`, and reports `variant,seed,best_val_macro_f1`.
pub fn train(dataset: &Dataset, cfg: &RunConfig, out_dir: &Path) -> Result<(String, TrainOutcome)> {
    let (train_set, val_set) = load_dataset(dataset, cfg)?;
    let outcome = drn::train(&cfg.train, &train_set, &val_set)?;
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    metrics::write(&out_dir.join(METRICS_FILE), &outcome.history)?;
    checkpoint::save(&out_dir.join(CHECKPOINT_FILE), &outcome.best.theta_s)?;
    let line = format!(
        "{},{},{}\n",
        variant_name(&cfg.train),
        cfg.train.seed,
        fmt_f64(outcome.best_val_macro_f1)
    );
    Ok((line, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GradTarget {
    Lsmi,
    Net,
    Total,
}

impl GradTarget {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lsmi" => Ok(Self::Lsmi),
            "net" => Ok(Self::Net),
            "total" => Ok(Self::Total),
            _ => Err(CliError::Usage(format!("unknown target `{s}`; expected lsmi, net or total"))),
        }
    }
}

/// One `block,max_rel_err,entries` line per parameter block, then
/// `max,<error>,<pass|fail>`. Fails with exit code 5 past the tolerance.
pub fn gradcheck(target: GradTarget) -> Result<String> {
    let (report, col_sum): (Report, Option<f64>) = match target {
        GradTarget::Lsmi => {
            let (r, c) = gradcheck::check_lsmi()?;
            (r, Some(c))
        }
        GradTarget::Net => (gradcheck::check_net()?, None),
        GradTarget::Total => (gradcheck::check_total()?, None),
    };
    let mut out = String::from("block,max_rel_err,entries\n");
    for b in &report.blocks {
        let _ = writeln!(out, "{},{},{}", b.name, fmt_f64(b.max_rel_err), b.entries);
    }
    if let Some(c) = col_sum {
        let _ = writeln!(out, "column_sum,{},", fmt_f64(c));
    }
    let max = report.max_rel_err();
    let verdict = if report.passed() { "pass" } else { "fail" };
    let _ = writeln!(out, "max,{},{verdict}", fmt_f64(max));
    if !report.passed() {
        return Err(CliError::GradCheck {
            max_rel_err: max,
            tolerance: TOLERANCE,
            report: out,
        });
    }
    Ok(out)
}
