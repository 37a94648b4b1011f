//! Orchestration of split, multi-sensor DNN inference across mobile nodes and
//! edge servers under quantile latency and accuracy constraints.

pub mod baselines;
pub mod dnn_catalog;
pub mod dyngraph;
pub mod error;
pub mod harness;
pub mod perf;
pub mod qcpo;
pub mod radio;
pub mod scenario;

pub use error::{Error, Result};
