//! Generalized-propensity-score caliper matching for continuous exposures.
//!
//! The crate estimates causal exposure-response functions from
//! observational tables by one-to-M nearest-neighbor caliper matching on
//! standardized exposure and standardized GPS, diagnoses covariate
//! balance, tunes the matching parameters without touching outcomes, and
//! benchmarks the matching estimator against GPS-adjustment, IPTW and
//! doubly-robust comparators in a built-in Monte-Carlo harness.

pub mod balance;
pub mod data;
pub mod error;
pub mod gps;
pub mod learners;
pub mod matching;
pub mod tuning;

pub use error::{Error, Result};
