//! Photon statistics of clusters of single-photon emitters seen through a
//! lossy network of on-off detectors, and the multiphoton nonclassicality
//! witnesses evaluated on them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cluster;
pub mod config;
pub mod detection;
pub mod error;
pub mod estimators;
pub mod oracle;
pub mod records;
pub mod simulator;
pub mod stats;
pub mod witnesses;

pub use error::{Error, Result};
