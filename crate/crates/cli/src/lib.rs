//! Experiment harness for `fedsim-core`: configuration files, the run /
//! compare / partition-report commands and their output artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_compare, cmd_partition_report, cmd_run, CompareOutcome, RunOptions, RunOutcome};
pub use config::{DatasetConfig, Experiment, ExperimentConfig, ModelConfig, ModelKind, PartitionConfig};
pub use error::CliError;

/// Process exit status for a successful command.
pub const EXIT_OK: u8 = 0;
/// Bad configuration, unreadable input, or any other failure.
pub const EXIT_ERROR: u8 = 1;
/// The run completed but the federated/centralized accuracy gap was too large.
pub const EXIT_GAP_FAILED: u8 = 2;
