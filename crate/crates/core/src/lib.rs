//! Multi-view self-attention stacking for imbalanced credit default prediction.
//!
//! The pipeline is:
//!
//! 1. [`data`]: load a CSV, drop sparse and id columns, impute, encode and
//!    min-max scale, then split into seeded train/test partitions.
//! 2. [`views`]: rank features by tree information gain (single tree,
//!    boosting, forest), logistic-regression coefficients, Pearson
//!    correlation and k-means feature similarity; each ranking yields one
//!    local view, plus the global view of all features.
//! 3. [`model`]: one small MLP per local view predicts default on its own,
//!    a wider MLP embeds the global view, and a self-attention block mixes
//!    the concatenated local predictions and global embedding before the
//!    output head.
//! 4. [`train`]: Adam with a learning-rate schedule and early stop driven by
//!    a monitored metric (f1 of the default class by default).
//! 5. [`metrics`]: Acc, AUC, KS and per-class precision/recall/f1, aggregated
//!    over seeds.
//!
//! [`baselines`] provides the comparison models and [`experiment`] the seed
//! sweeps used by the CLI and the acceptance suite.

pub mod baselines;
pub mod cluster;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod linear;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod rng;
pub mod train;
pub mod trees;
pub mod views;

pub use error::{Error, Result};
