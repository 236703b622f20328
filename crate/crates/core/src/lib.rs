//! Imbalanced tabular risk prediction.
//!
//! The crate covers the whole experimental loop for a rare binary outcome on
//! mixed-type tabular data: ingestion and stratified splitting ([`data`]),
//! train-only preprocessing ([`preprocess`]), four probabilistic classifiers
//! ([`models`]), cross-validated sigmoid calibration ([`calibration`]),
//! minority-class generators and edge-case cohorts ([`synthgen`]), metrics
//! ([`eval`]), permutation importance ([`importance`]) and the experiment
//! driver ([`harness`]).

pub mod benchmark;
pub mod calibration;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod importance;
pub mod linalg;
pub mod models;
pub mod preprocess;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
