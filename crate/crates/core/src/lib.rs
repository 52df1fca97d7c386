//! Ridgeless kernel regression, the hard-margin kernel SVM and exact
//! detection of support-vector proliferation over bi-level kernel spectra.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod features;
pub mod gram;
pub mod seed;
pub mod solvers;
pub mod spectrum;
pub mod stats;
pub mod svp;

pub use error::{Error, Result};
