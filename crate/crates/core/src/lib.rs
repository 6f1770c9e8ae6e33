//! Deterministic simulator of cluster-based hierarchical federated learning
//! for network intrusion detection.
//!
//! Clients train a small depthwise-separable 1D convolutional classifier on
//! their local share of the data; a cluster head averages its members'
//! models weighted by local data size, and the server averages the cluster
//! models weighted by cluster data size. Alongside the protocol the crate
//! provides the analytical latency model used to compare model sizes, and the
//! evaluation metrics and report files of an experiment.
//!
//! Module map:
//!
//! - [`nn`]: tensors, layers, hybrid SoftMax/Gumbel-SoftMax loss, Adam.
//! - [`data`]: CSV ingestion, preprocessing, stratified split, non-IID
//!   partitioning, synthetic data.
//! - [`federation`]: topology, local training, two-level aggregation, rounds.
//! - [`latency`]: analytical training time, testing latency, time per round.
//! - [`metrics`]: confusion matrices, per-class metrics, ROC, report files.

pub mod data;
pub mod error;
pub mod federation;
pub mod latency;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
