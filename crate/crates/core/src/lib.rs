//! Deterministic discrete-event simulation of synchronous (FedAvg) and
//! asynchronous federated learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: parameter vectors, the two learners and mini-batch SGD,
//!   plus the two aggregation primitives.
//! * [`data`]: IDX ingestion, synthetic blobs and client partitioning.
//! * [`timing`]: integer-tick clock, event queue, TDMA channel and the
//!   closed-form completion times of both learning modes.
//! * [`sfl`], [`baseline`], [`csmaafl`]: the three learning engines.
//! * [`config`], [`metrics`], [`experiment`], [`report`]: experiment
//!   orchestration used by the `fedsim` binary.

pub mod baseline;
pub mod config;
pub mod csmaafl;
pub mod data;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod report;
pub mod seed;
pub mod sfl;
pub mod timing;

pub use error::{Error, Result};
pub use model::ModelVector;
