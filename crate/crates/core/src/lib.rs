//! Sharpness-aware minimization with adaptive PSF sampling and gradient
//! reuse (vSAM), plus SGD, SAM and periodic SAM-k baselines, diagnostics
//! and an experiment harness.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod selfcheck;
pub mod train;

pub use error::{Error, Result};
