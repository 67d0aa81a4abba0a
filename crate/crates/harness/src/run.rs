//! Executes one experiment and assembles its record.

use std::time::Instant;

use hessmc_core::estimators::{
    estimate, exp_moment_diagnostic, nt_scaling_diagnostic, EstimatorError, EstimatorResult, ExpMomentReport,
    NtScalingTable,
};
use serde::{Deserialize, Serialize};

use crate::config::{validate, ConfigError, EstimatorId, ExperimentConfig, Resolved};
use crate::oracle::{references, STDERR_FACTOR};

/// Runs with a larger share of failed paths are marked degraded.
pub const DEGRADED_FAILURE_RATE: f64 = 1e-3;
/// Bias allowance of the doubly damped finite-difference comparison.
pub const DOUBLY_DAMPED_ALLOWANCE: f64 = 5e-3;
/// Expected slope of `log E|N_t|` against `log t`, and its tolerance.
pub const NT_SLOPE: f64 = -1.0;
pub const NT_SLOPE_TOL: f64 = 0.2;
/// Largest relative change of the exponential moment when the paths double.
pub const EXP_MOMENT_CHANGE: f64 = 0.05;
/// Largest share of the exponential-moment sum carried by one path.
pub const EXP_MOMENT_SHARE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub tolerance: f64,
    pub abs_err: f64,
    pub pass: bool,
    pub source: String,
}

impl Check {
    pub fn new(label: &str, estimate: f64, stderr: f64, oracle: f64, tolerance: f64, source: &str) -> Self {
        let abs_err = (estimate - oracle).abs();
        Self {
            label: label.into(),
            estimate,
            stderr,
            oracle,
            tolerance,
            abs_err,
            pass: abs_err <= tolerance,
            source: source.into(),
        }
    }

    /// A one-sided bound `estimate ≤ limit`.
    pub fn at_most(label: &str, estimate: f64, limit: f64, source: &str) -> Self {
        Self {
            label: label.into(),
            estimate,
            stderr: 0.0,
            oracle: limit,
            tolerance: 0.0,
            abs_err: (estimate - limit).max(0.0),
            pass: estimate <= limit,
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// More than 0.1% of the paths failed.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<EstimatorResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nt_scaling: Option<NtScalingTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exp_moment: Option<ExpMomentReport>,
    pub checks: Vec<Check>,
    /// `None` when nothing could be checked.
    pub pass: Option<bool>,
    pub status: Status,
    pub failed_paths: u64,
    pub wall_time_s: f64,
    pub version: String,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records are plain data")
    }

    /// Mean and standard error of the primary output, if there is one.
    pub fn primary(&self) -> Option<(f64, f64)> {
        if let Some(r) = &self.result {
            return Some((r.value(), r.error()));
        }
        if let Some(t) = &self.nt_scaling {
            return Some((t.slope, f64::NAN));
        }
        self.exp_moment
            .as_ref()
            .and_then(|e| e.rows.first())
            .map(|row| (row.mean, row.stderr))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(#[from] ConfigError),
    #[error("usage: {0}")]
    BadArgument(String),
    #[error("estimation failed: {0}")]
    Estimation(#[from] EstimatorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::BadArgument(_) => 2,
            HarnessError::Estimation(_) | HarnessError::Io(_) | HarnessError::Csv(_) => 3,
        }
    }
}

pub fn status(failed_paths: u64, total_paths: u64) -> Status {
    if total_paths > 0 && failed_paths as f64 > DEGRADED_FAILURE_RATE * total_paths as f64 {
        Status::Degraded
    } else {
        Status::Ok
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool for 0.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Checks for the scalar estimators.
pub fn scalar_checks(r: &Resolved, result: &EstimatorResult) -> Vec<Check> {
    if r.config.estimator == EstimatorId::DoublyDampedCheck {
        return (0..3)
            .map(|c| {
                let (w, fd) = (result.stderr[c], result.stderr[3 + c]);
                let combined = (w * w + fd * fd).sqrt();
                Check::new(
                    &result.labels[6 + c],
                    result.mean[6 + c],
                    combined,
                    0.0,
                    STDERR_FACTOR * combined + DOUBLY_DAMPED_ALLOWANCE,
                    "common-noise finite difference",
                )
            })
            .collect();
    }
    references(r)
        .into_iter()
        .map(|rf| {
            let (mean, se) = (result.mean[rf.output], result.stderr[rf.output]);
            Check::new(
                &result.labels[rf.output],
                mean,
                se,
                rf.value,
                STDERR_FACTOR * se + rf.allowance,
                &rf.source,
            )
        })
        .collect()
}

/// Runs a validated experiment.
pub fn run_resolved(r: &Resolved) -> Result<RunRecord, HarnessError> {
    let start = Instant::now();
    let problem = r.problem();
    let mut record = RunRecord {
        config: r.config.clone(),
        result: None,
        nt_scaling: None,
        exp_moment: None,
        checks: Vec::new(),
        pass: None,
        status: Status::Ok,
        failed_paths: 0,
        wall_time_s: 0.0,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mut total_paths = 0;
    with_threads(r.config.threads, || -> Result<(), HarnessError> {
        match r.config.estimator {
            EstimatorId::NtScaling => {
                let table = nt_scaling_diagnostic(&problem, &r.t_list, &r.mc)?;
                record.checks.push(Check::new(
                    "slope",
                    table.slope,
                    0.0,
                    NT_SLOPE,
                    NT_SLOPE_TOL,
                    "small-time scaling of the second-order weight",
                ));
                record.failed_paths = table.rows.iter().map(|row| row.failed_paths).sum();
                total_paths = r.mc.n_paths * table.rows.len() as u64;
                record.nt_scaling = Some(table);
            }
            EstimatorId::ExpMoment => {
                let report = exp_moment_diagnostic(&problem, &r.alphas, &r.mc)?;
                for row in &report.rows {
                    let a = format!("{:e}", row.alpha);
                    record.checks.push(Check::at_most(
                        &format!("finite@{a}"),
                        if row.mean.is_finite() { 0.0 } else { 1.0 },
                        0.0,
                        "finite moment",
                    ));
                    record.checks.push(Check::at_most(
                        &format!("relative_change@{a}"),
                        row.relative_change,
                        EXP_MOMENT_CHANGE,
                        "stability under doubling of paths",
                    ));
                    record.checks.push(Check::at_most(
                        &format!("max_share@{a}"),
                        row.max_share,
                        EXP_MOMENT_SHARE,
                        "no dominating path",
                    ));
                }
                total_paths = 2 * r.mc.n_paths;
                record.exp_moment = Some(report);
            }
            _ => {
                let spec = r.spec().expect("scalar estimator");
                let result = estimate(&problem, &spec.build(&problem, &r.mc)?, &r.mc)?;
                record.checks = scalar_checks(r, &result);
                record.failed_paths = result.failed_paths;
                total_paths = result.n_paths + result.failed_paths;
                record.result = Some(result);
            }
        }
        Ok(())
    })?;
    if !record.checks.is_empty() {
        record.pass = Some(record.checks.iter().all(|c| c.pass));
    }
    record.status = status(record.failed_paths, total_paths);
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}

pub fn run(config: &ExperimentConfig) -> Result<RunRecord, HarnessError> {
    run_resolved(&validate(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degraded_above_one_in_a_thousand() {
        assert_eq!(status(0, 0), Status::Ok);
        assert_eq!(status(10, 10_000), Status::Ok);
        assert_eq!(status(11, 10_000), Status::Degraded);
    }

    #[test]
    fn one_sided_checks() {
        assert!(Check::at_most("share", 0.2, 0.5, "").pass);
        let c = Check::at_most("share", 0.7, 0.5, "");
        assert!(!c.pass);
        assert!((c.abs_err - 0.2).abs() < 1e-15);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::BadArgument("x".into()).exit_code(), 2);
        assert_eq!(HarnessError::Io(std::io::Error::other("x")).exit_code(), 3);
    }
}
