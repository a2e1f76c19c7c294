//! Run orchestration: configuration, artifacts and the `tms` subcommands.

pub mod checks;
pub mod config;
pub mod evolve;
pub mod harness;
pub mod snapshot;

pub use checks::{run_check, CheckLine, CheckReport, Suite};
pub use config::{parse_config, parse_manifest, SimConfig, OUTPUT_DIR_ENV};
pub use evolve::{exit_code, run_evolve, RunSummary, NORMS_HEADER};
pub use harness::{fit_csv, run_convergence, run_decay, ConvergenceTable, DecayReport};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotHeader};
