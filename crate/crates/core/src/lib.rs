//! Targeted and augmented-IPCW estimation of the average treatment effect
//! under two-phase sampling, with a Monte-Carlo simulation harness.

pub mod data;
pub mod eic;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod nuisance;
pub mod sim;
pub mod config;
pub mod cli;

pub use error::{Error, Result};
