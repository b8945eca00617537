//! Dependence estimation and dual-role network training.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: a small row-major matrix type, gemm-backed products and a
//!   blocked Cholesky solver.
//! - [`kernels`]: pairwise distances, Gaussian Gram matrices, the median
//!   bandwidth heuristic and the Gram vector-Jacobian product.
//! - [`lsmi`]: the least-squares mutual information estimator, its
//!   hold-out hyperparameter search and its exact gradient.
//! - [`oracles`]: ground-truth and baseline dependence measures (discrete
//!   and Gaussian SMI, Gaussian MI, KSG, KDE, finite differences).
//! - [`net`]: a small MLP with classification and projection heads, exact
//!   backpropagation, the losses and an AdamW optimizer.
//! - [`drn`]: the student/teacher trainer with EMA teacher updates and the
//!   composite loss.
//! - [`data`]: synthetic generators with known ground truth.
//! - [`gradcheck`]: finite-difference checks on fixed fixtures.
//!
//! Everything here is `no_std` + `alloc`; file formats and the command line
//! live in the companion `depmax` crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod data;
pub mod drn;
mod error;
pub mod gradcheck;
pub mod kernels;
pub mod linalg;
pub mod lsmi;
pub mod math;
pub mod net;
pub mod oracles;
pub mod rng;

pub use error::{Error, Result};
pub use kernels::{Bandwidth, GramMatrix, SampleBatch};
pub use linalg::Matrix;
pub use rng::SplitMix64;
