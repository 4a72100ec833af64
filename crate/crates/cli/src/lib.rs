//! Experiment harness for the Stokes LOD solver: parallel basis
//! computation, configuration, text file formats and CSV reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod parallel;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use error::{HarnessError, Result};
