//! Monte Carlo harness around `carma-renewal`: configured experiments with
//! resumable CSV output, the OU table grid, and coverage studies of the
//! asymptotic covariance.

pub mod config;
pub mod coverage;
pub mod error;
pub mod harness;
pub mod tables;

pub use config::{ExperimentConfig, ModelConfig};
pub use coverage::{coverage_study, CoverageOptions, CoverageReport};
pub use error::{HarnessError, Result};
pub use harness::{read_rows, run_experiment, summarize, ExperimentReport, ReplicationRow, RowStatus, Summary};
pub use tables::{reproduce_tables, TableOptions, TableReport};
