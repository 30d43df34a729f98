//! Desk-scale pipeline for generative modeling of regional hourly temperature
//! fields. Ingests gridded data, aggregates it into labeled daily samples,
//! trains a dual-critic Wasserstein GAN with gradient penalty on a built-in
//! reverse-mode tensor engine, and evaluates outputs with spatial-correlation,
//! daily-mean, and temporal-gradient distribution metrics.

pub mod baseline;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod nets;
pub mod objectives;
pub mod tensor;
#[doc(hidden)]
pub mod testkit;
pub mod trainer;

pub use error::{Error, Result};

/// Version stamp recorded in manifests, reports, and checkpoint metadata.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
