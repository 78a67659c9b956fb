//! Pre-processing debiasing for fair node classification on attributed graphs.
//!
//! The crate bundles everything needed to take an attributed graph with one or
//! more binary sensitive attributes, strip dependence between the released
//! data and those attributes, and measure what is left:
//!
//! - [`graph`] — the in-memory graph model, CSV ingestion and stratified splits.
//! - [`stats`] — empirical distance covariance / correlation and sensitive homophily.
//! - [`nn`] — a small reverse-mode autodiff engine with the layers, losses and
//!   optimizers used by every training loop in the crate.
//! - [`metrics`] — utility (ACC / F1 / AUROC) and fairness (ΔSP / ΔEO) metrics.
//! - [`synth`] — biased / unbiased synthetic data generators and the four
//!   feature-topology scenario cases.
//! - [`feature_debias`] — correlation-guided pre-masking plus adversarial
//!   reconstruction with a distance-covariance penalty and L1-sparse weights.
//! - [`topology_debias`] — fair message passing with learnable edge weights
//!   and hard post-pruning.
//! - [`classifier`] — GCN / GraphSAGE / GIN node classifiers.
//! - [`attack`] — an attribute-inference attack harness for leakage audits.
//! - [`pipeline`] — batch orchestration, configs, reports and artifacts.

pub mod attack;
pub mod classifier;
pub mod error;
pub mod feature_debias;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod topology_debias;

pub use error::{Error, Result};
pub use graph::{AttributedGraph, DataSplit};
