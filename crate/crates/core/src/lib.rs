//! Fairness auditing for binary classification: group metrics, conditional
//! demographic disparity, chi-square association tests, a demographic-parity
//! constrained logistic scorer, and the repeated-split evaluation harness.

pub mod error;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod par;
pub mod report;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use ingest::{Dataset, Group, Outcome, Recipe};
pub use metrics::{FairnessReport, OutcomeVector};
pub use trainer::{Model, TrainConfig};
