use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("paired batches differ in length: {left} vs {right}")]
    Pairing { left: usize, right: usize },
    #[error("matrix is not positive definite: pivot {pivot} at row {index}")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("linear solve residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },
    #[error("cannot split {n} samples into {folds} folds")]
    Folds { n: usize, folds: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid probability table: {0}")]
    InvalidPmf(String),
    #[error("marginal probability of {axis} {index} is zero")]
    DegenerateMarginal { axis: &'static str, index: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at step {step} (epoch {epoch}): {detail}")]
    NonFiniteLoss {
        step: u64,
        epoch: usize,
        detail: String,
    },
}
