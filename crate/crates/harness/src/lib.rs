//! Configuration, execution, sweeps and the acceptance battery for the
//! `hessmc` command-line tool.

pub mod config;
pub mod oracle;
pub mod run;
pub mod suite;
pub mod sweep;

pub use config::{validate, ConfigError, EstimatorId, ExperimentConfig, OutputFormat, Resolved};
pub use run::{run, run_resolved, Check, HarnessError, RunRecord, Status};
pub use suite::{verify_suite, CriterionReport, Mutation, SuiteOptions, SuiteReport};
pub use sweep::{sweep, Axis, SweepTable};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_VAR: &str = "HESSMC_OUTPUT_DIR";
/// Output directory when the variable is unset.
pub const DEFAULT_OUTPUT_DIR: &str = "hessmc-out";

pub fn output_dir() -> std::path::PathBuf {
    std::env::var_os(OUTPUT_DIR_VAR)
        .map(Into::into)
        .unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into())
}
