//! Desk-scale deep anomaly detection with Outlier Exposure.

pub mod bench;
pub mod data;
pub mod error;
pub mod evo;
pub mod freq;
pub mod losses;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
