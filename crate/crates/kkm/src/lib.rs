//! Kernel k-means at three speed grades: a full-batch Lloyd solver, a
//! mini-batch solver that tracks point-center inner products across the
//! whole dataset, and a truncated mini-batch solver whose centers keep only
//! a bounded window of recent batches.
//!
//! Centers live in feature space as weighted combinations of dataset points;
//! everything is driven by kernel evaluations, never explicit features.

pub mod centers;
pub mod data;
pub mod error;
pub mod init;
pub mod kernels;
pub mod matrix;
pub mod metrics;
#[cfg(feature = "oracle")]
pub mod oracle;
mod par;
pub mod solver;

pub use error::{Error, Result};
