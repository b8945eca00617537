//! `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Every key must appear in
//! [`KEYS`]; unknown or repeated keys are rejected. Lists are comma
//! separated.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `lsmi.sigma_s`, `lsmi.sigma_t` | `median`, a positive number, or `grid m1,m2,...` (multiples of the median) | `grid 0.5,1` |
//! | `lsmi.delta` | number or list | `1e-6,1e-5,1e-4,1e-3,1e-2` |
//! | `lsmi.folds` | integer >= 2 | `2` |
//! | `lsmi.grad_mode` | `full`, `frozen_alpha` | `full` |
//! | `ksg.k` | integer >= 1 | `5` |
//! | `kde.bw_x`, `kde.bw_y` | `silverman` or a positive number | `silverman` |
//! | `train.*` | see [`TrainConfig`] | desk defaults |
//! | `aug.*` | see [`depmax_core::drn::AugmentConfig`] | |
//! | `data.n_train`, `data.n_val` | integer | `400` |
//! | `data.noise` | number | `0.3` |
//! | `data.train_seed`, `data.val_seed` | integer | `100 + train.seed`, `200 + train.seed` |

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use depmax_core::drn::{DepMeasure, TrainConfig};
use depmax_core::lsmi::{BandwidthRule, GradMode, LsmiConfig};
use depmax_core::Bandwidth;

use crate::error::{CliError, Result};

pub const KEYS: &[&str] = &[
    "lsmi.sigma_s",
    "lsmi.sigma_t",
    "lsmi.delta",
    "lsmi.folds",
    "lsmi.grad_mode",
    "ksg.k",
    "kde.bw_x",
    "kde.bw_y",
    "train.lambda",
    "train.beta",
    "train.ramp_epochs",
    "train.eta",
    "train.epochs",
    "train.warmup_epochs",
    "train.lr_peak",
    "train.wd_start",
    "train.wd_end",
    "train.label_eps",
    "train.patience",
    "train.dep_measure",
    "train.seed",
    "train.batch_size",
    "train.hidden",
    "train.proj_dim",
    "aug.noise_std",
    "aug.smooth_radius",
    "aug.scale_range",
    "aug.shift_range",
    "aug.zoom_range",
    "data.n_train",
    "data.n_val",
    "data.noise",
    "data.train_seed",
    "data.val_seed",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KdeBandwidth {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub noise: f64,
    pub train_seed: Option<u64>,
    pub val_seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_train: 400,
            n_val: 400,
            noise: 0.3,
            train_seed: None,
            val_seed: None,
        }
    }
}

impl DataConfig {
    pub fn train_seed(&self, run_seed: u64) -> u64 {
        self.train_seed.unwrap_or(100 + run_seed)
    }

    pub fn val_seed(&self, run_seed: u64) -> u64 {
        self.val_seed.unwrap_or(200 + run_seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Training options; `train.lsmi` doubles as the estimator setting for
    /// `estimate` and `benchmark`.
    pub train: TrainConfig,
    pub ksg_k: usize,
    pub kde_bw_x: KdeBandwidth,
    pub kde_bw_y: KdeBandwidth,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            ksg_k: 5,
            kde_bw_x: KdeBandwidth::Silverman,
            kde_bw_y: KdeBandwidth::Silverman,
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn lsmi(&self) -> &LsmiConfig {
        &self.train.lsmi
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses `text` on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::Config {
                    line,
                    msg: format!("expected `key = value`, got `{content}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(CliError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config {
                    line,
                    msg: format!("key `{key}` given twice"),
                });
            }
            cfg.set(key, value).map_err(|msg| CliError::Config {
                line,
                msg: format!("{key}: {msg}"),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.ksg_k == 0 {
            return Err(CliError::Usage("ksg.k must be >= 1".into()));
        }
        if !(self.data.noise >= 0.0 && self.data.noise.is_finite()) {
            return Err(CliError::Usage(format!("data.noise must be >= 0, got {}", self.data.noise)));
        }
        if self.data.n_train == 0 || self.data.n_val == 0 {
            return Err(CliError::Usage("data.n_train and data.n_val must be >= 1".into()));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let t = &mut self.train;
        let a = &mut t.aug;
        match key {
            "lsmi.sigma_s" => t.lsmi.sigma_s = bandwidth_rule(v)?,
            "lsmi.sigma_t" => t.lsmi.sigma_t = bandwidth_rule(v)?,
            "lsmi.delta" => t.lsmi.deltas = list(v)?,
            "lsmi.folds" => t.lsmi.folds = num(v)?,
            "lsmi.grad_mode" => {
                t.lsmi.grad_mode = match v {
                    "full" => GradMode::Full,
                    "frozen_alpha" => GradMode::FrozenAlpha,
                    _ => return Err(format!("expected `full` or `frozen_alpha`, got `{v}`")),
                }
            }
            "ksg.k" => self.ksg_k = num(v)?,
            "kde.bw_x" => self.kde_bw_x = kde_bandwidth(v)?,
            "kde.bw_y" => self.kde_bw_y = kde_bandwidth(v)?,
            "train.lambda" => t.lambda_max = num(v)?,
            "train.beta" => t.beta_max = num(v)?,
            "train.ramp_epochs" => t.ramp_epochs = num(v)?,
            "train.eta" => t.eta = num(v)?,
            "train.epochs" => t.epochs = num(v)?,
            "train.warmup_epochs" => t.warmup_epochs = num(v)?,
            "train.lr_peak" => t.lr_peak = num(v)?,
            "train.wd_start" => t.wd_start = num(v)?,
            "train.wd_end" => t.wd_end = num(v)?,
            "train.label_eps" => t.label_eps = num(v)?,
            "train.patience" => t.early_stop_patience = num(v)?,
            "train.dep_measure" => {
                t.dep_measure = DepMeasure::parse(v)
                    .ok_or_else(|| format!("expected lsmi, kl, jsd or none, got `{v}`"))?
            }
            "train.seed" => t.seed = num(v)?,
            "train.batch_size" => t.batch_size = num(v)?,
            "train.hidden" => t.hidden = list(v)?,
            "train.proj_dim" => t.proj_dim = num(v)?,
            "aug.noise_std" => a.noise_std = num(v)?,
            "aug.smooth_radius" => a.smooth_radius = num(v)?,
            "aug.scale_range" => a.scale_range = num(v)?,
            "aug.shift_range" => a.shift_range = num(v)?,
            "aug.zoom_range" => a.zoom_range = num(v)?,
            "data.n_train" => self.data.n_train = num(v)?,
            "data.n_val" => self.data.n_val = num(v)?,
            "data.noise" => self.data.noise = num(v)?,
            "data.train_seed" => self.data.train_seed = Some(num(v)?),
            "data.val_seed" => self.data.val_seed = Some(num(v)?),
            _ => unreachable!("key list and setter out of sync: {key}"),
        }
        Ok(())
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.trim().parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    let items = v.split(',').map(num).collect::<std::result::Result<Vec<T>, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn bandwidth_rule(v: &str) -> std::result::Result<BandwidthRule, String> {
    if v == "median" {
        return Ok(BandwidthRule::Median);
    }
    if let Some(rest) = v.strip_prefix("grid") {
        return Ok(BandwidthRule::MedianGrid(list(rest)?));
    }
    let sigma: f64 = num(v)?;
    Bandwidth::new(sigma)
        .map(BandwidthRule::Fixed)
        .map_err(|e| e.to_string())
}

fn kde_bandwidth(v: &str) -> std::result::Result<KdeBandwidth, String> {
    if v == "silverman" {
        return Ok(KdeBandwidth::Silverman);
    }
    let h: f64 = num(v)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(format!("bandwidth must be positive, got {h}"));
    }
    Ok(KdeBandwidth::Fixed(h))
}
