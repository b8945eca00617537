//! Estimator sweep over correlated Gaussian pairs.
//!
//! Every `(method, rho, n, seed)` cell draws [`gen_gaussian_pair`] with the
//! seed index as RNG seed, so all methods see the same samples. LSMI is
//! scored against the closed-form SMI, KSG and KDE against the closed-form
//! MI. After the runs of each `(method, rho, n)` group come two summary
//! rows: `mean` (mean estimate, mean absolute error) and `std` (sample
//! standard deviation of the estimates and of the absolute errors).

use std::fmt::Write as _;
use std::time::Instant;

use depmax_core::data::gen_gaussian_pair;
use depmax_core::lsmi::lsmi_estimate;
use depmax_core::oracles::{gaussian_mi, gaussian_smi, kde_mi, ksg_mi};
use depmax_core::SampleBatch;

use crate::config::RunConfig;
use crate::csvio::fmt_f64;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Lsmi,
    Ksg,
    Kde,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lsmi, Method::Ksg, Method::Kde];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lsmi => "lsmi",
            Self::Ksg => "ksg",
            Self::Kde => "kde",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lsmi" => Ok(Self::Lsmi),
            "ksg" => Ok(Self::Ksg),
            "kde" => Ok(Self::Kde),
            _ => Err(CliError::Usage(format!("unknown method `{s}`; expected lsmi, ksg or kde"))),
        }
    }

    pub fn truth(self, rho: f64) -> Result<f64> {
        Ok(match self {
            Self::Lsmi => gaussian_smi(rho)?,
            Self::Ksg | Self::Kde => gaussian_mi(rho)?,
        })
    }
}

/// Runs `method` on one pair of batches.
pub fn estimate(method: Method, x: &SampleBatch, y: &SampleBatch, cfg: &RunConfig) -> Result<f64> {
    Ok(match method {
        Method::Lsmi => lsmi_estimate(x, y, cfg.lsmi())?.value,
        Method::Ksg => ksg_mi(x, y, cfg.ksg_k)?.value,
        Method::Kde => {
            let (bx, by) = crate::commands::kde_bandwidths(x, y, cfg)?;
            kde_mi(x, y, bx, by)?.value
        }
    })
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub methods: Vec<Method>,
    pub rhos: Vec<f64>,
    pub ns: Vec<usize>,
    pub seeds: u64,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.methods.is_empty() || self.rhos.is_empty() || self.ns.is_empty() {
            return usage("benchmark grids must be non-empty".into());
        }
        if self.seeds == 0 {
            return usage("--seeds must be >= 1".into());
        }
        if let Some(r) = self.rhos.iter().find(|r| !(r.abs() < 1.0)) {
            return usage(format!("rho must satisfy |rho| < 1, got {r}"));
        }
        if let Some(n) = self.ns.iter().find(|n| **n < 4) {
            return usage(format!("n must be >= 4, got {n}"));
        }
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        let cells = self.methods.len() * self.rhos.len() * self.ns.len();
        cells * (self.seeds as usize + 2)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sweep output as CSV text. With `timings` an extra `seconds` column
/// records wall time per run, which makes the output nondeterministic.
pub fn run(grid: &Grid, cfg: &RunConfig, timings: bool) -> Result<String> {
    grid.validate()?;
    let mut out = String::from("kind,method,rho,n,seed,estimate,truth,error");
    if timings {
        out.push_str(",seconds");
    }
    out.push('\n');
    for &method in &grid.methods {
        for &rho in &grid.rhos {
            let truth = method.truth(rho)?;
            for &n in &grid.ns {
                let mut estimates = Vec::with_capacity(grid.seeds as usize);
                for seed in 0..grid.seeds {
                    let (x, y) = gen_gaussian_pair(n, rho, seed)?;
                    let start = Instant::now();
                    let est = estimate(method, &x, &y, cfg)?;
                    let secs = start.elapsed().as_secs_f64();
                    let _ = write!(
                        out,
                        "run,{},{},{n},{seed},{},{},{}",
                        method.name(),
                        fmt_f64(rho),
                        fmt_f64(est),
                        fmt_f64(truth),
                        fmt_f64(est - truth)
                    );
                    if timings {
                        let _ = write!(out, ",{}", fmt_f64(secs));
                    }
                    out.push('\n');
                    estimates.push(est);
                }
                let abs_err: Vec<f64> = estimates.iter().map(|e| (e - truth).abs()).collect();
                let (est_mean, est_std) = mean_std(&estimates);
                let (err_mean, err_std) = mean_std(&abs_err);
                for (kind, e, err) in [("mean", est_mean, err_mean), ("std", est_std, err_std)] {
                    let _ = write!(
                        out,
                        "{kind},{},{},{n},,{},{},{}",
                        method.name(),
                        fmt_f64(rho),
                        fmt_f64(e),
                        fmt_f64(truth),
                        fmt_f64(err)
                    );
                    if timings {
                        out.push(',');
                    }
                    out.push('\n');
                }
            }
        }
    }
    Ok(out)
}
