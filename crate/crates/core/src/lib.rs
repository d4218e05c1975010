//! Testing by betting on exact finite probability spaces.
//!
//! The crate covers the whole p-value / e-value toolkit at desk scale:
//!
//! * [`space`]: finite probability spaces, random variables on them, and the
//!   exact validity checks for p-variables and e-variables.
//! * [`calibration`]: p-to-e calibrators (behind the [`calibration::Calibrator`]
//!   trait and a name-keyed registry), the `e ↦ min(1, 1/e)` map back, round
//!   trips and the Jeffreys comparison.
//! * [`testing`]: Cournot tests with their p- and e-embeddings, likelihood
//!   ratio e-variables and Neyman–Pearson p-variables.
//! * [`combination`]: averaging e-values, test-martingale products and the
//!   p-averaging counterexample.
//! * [`datasplit`]: random data splitting with e-values and its
//!   derandomization by averaging over splits.
//! * [`cli`]: the `evaltk` command surface.

// `!(x >= 0.0)` is used on purpose: NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod combination;
pub mod datasplit;
mod error;
pub mod rng;
pub mod serde_ext;
pub mod space;
pub mod testing;

pub use error::{EvalError, Result};

/// Tolerance used by every validity check unless the caller overrides it.
pub const DEFAULT_TOL: f64 = 1e-9;
