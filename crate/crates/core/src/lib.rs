//! Tabular model bake-off: tune heterogeneous predictors under a shared
//! Bayesian optimization budget, combine them into ensembles and test whether
//! their differences are significant.
//!
//! The crate is organised along the pipeline:
//!
//! - [`data`]: CSV ingestion, encoding, standardization and splitting.
//! - [`learners`]: the predictor contract plus native GBDT, soft oblivious
//!   tree and MLP learners, and an adapter for external predictor processes.
//! - [`metrics`]: losses, seed aggregation, relative deterioration and the
//!   Friedman test.
//! - [`hpo`]: search spaces, TPE suggestions and the trial loop.
//! - [`ensemble`]: uniform / validation-loss-weighted combining and subset
//!   selection.
//! - [`experiment`]: configuration, orchestration, persistence and reports.

pub mod data;
pub mod ensemble;
pub mod experiment;
pub mod hpo;
pub mod learners;
pub mod metrics;
pub mod rng;

pub use data::{Dataset, SplitBundle, SplitPolicy, Task};
pub use learners::{FittedModel, LearnerKind, Predictions};
