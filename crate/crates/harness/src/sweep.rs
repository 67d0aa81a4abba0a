//! Convergence sweeps over `Δt`, `n_paths` or `t` with common seeds.

use std::io::Write;
use std::str::FromStr;

use hessmc_core::estimators::{coupled_sweep, estimate, fit_slope, NtWeight};
use serde::{Deserialize, Serialize};

use crate::config::{validate, EstimatorId, ExperimentConfig, Resolved};
use crate::oracle::STDERR_FACTOR;
use crate::run::{run_resolved, scalar_checks, with_threads, HarnessError, NT_SLOPE, NT_SLOPE_TOL};

/// Smallest weak order accepted by a `Δt` sweep.
pub const MIN_ORDER: f64 = 0.8;
/// Expected slope of `log stderr` against `log n_paths`, and its tolerance.
pub const STDERR_SLOPE: f64 = -0.5;
pub const STDERR_SLOPE_TOL: f64 = 0.1;
/// Allowed relative deviation of the stderr ratio from 2 per 4× paths.
pub const HALVING_TOL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Dt,
    NPaths,
    T,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dt" => Ok(Axis::Dt),
            "n_paths" | "n-paths" => Ok(Axis::NPaths),
            "t" => Ok(Axis::T),
            other => Err(format!("unknown axis `{other}`; expected dt, n_paths or t")),
        }
    }
}

/// One CSV row. Empty cells mark quantities that do not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub oracle: Option<f64>,
    pub abs_err: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub name: String,
    pub value: f64,
    /// Standard error of the fitted quantity, where one is available.
    pub stderr: Option<f64>,
    pub expected: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: Axis,
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub fits: Vec<Fit>,
    /// Cells that could not run, with the reason.
    pub errors: Vec<(f64, String)>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn pass(&self) -> bool {
        self.errors.is_empty() && self.fits.iter().all(|f| f.pass) && self.rows.iter().all(|r| r.pass != Some(false))
    }
}

fn cell_config(base: &ExperimentConfig, axis: Axis, value: f64) -> ExperimentConfig {
    let mut c = base.clone();
    match axis {
        Axis::Dt => c.dt = value,
        Axis::NPaths => c.n_paths = value as u64,
        Axis::T => {
            c.t = Some(value);
            c.t_list = None;
        }
    }
    c
}

fn failed_row(axis_value: f64) -> SweepRow {
    SweepRow {
        axis_value,
        mean: None,
        stderr: None,
        oracle: None,
        abs_err: None,
        pass: Some(false),
    }
}

fn row_from(axis_value: f64, mean: f64, stderr: f64, check: Option<&crate::run::Check>) -> SweepRow {
    SweepRow {
        axis_value,
        mean: Some(mean),
        stderr: Some(stderr),
        oracle: check.map(|c| c.oracle),
        abs_err: check.map(|c| c.abs_err),
        pass: check.map(|c| c.pass),
    }
}

/// Runs `config` once per axis value. Every cell uses the same seed; a cell
/// that fails is reported without aborting the sweep.
pub fn sweep(config: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<SweepTable, HarnessError> {
    if values.len() < 2 {
        return Err(HarnessError::BadArgument("a sweep needs at least two values".into()));
    }
    if axis == Axis::NPaths && values.iter().any(|v| !(*v >= 1.0) || v.fract() != 0.0) {
        return Err(HarnessError::BadArgument("n_paths values must be positive integers".into()));
    }
    let mut table = SweepTable {
        axis,
        config: config.clone(),
        rows: Vec::new(),
        fits: Vec::new(),
        errors: Vec::new(),
    };
    let nt = config.estimator == EstimatorId::NtScaling;
    if !config.estimator.is_scalar() && !(nt && axis == Axis::T) {
        return Err(HarnessError::BadArgument(format!(
            "{} can only be swept along t (nt_scaling)",
            config.estimator
        )));
    }
    let mut cells: Vec<(usize, Resolved)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let mut c = cell_config(config, axis, v);
        if nt {
            // each cell is a single-time run of the weight
            c.estimator = EstimatorId::FeynmanKac;
        }
        match validate(&c) {
            Ok(r) => cells.push((i, r)),
            Err(e) => table.errors.push((v, e.to_string())),
        }
    }
    let mut rows: Vec<Option<SweepRow>> = vec![None; values.len()];
    if axis == Axis::Dt && cells.len() >= 2 && coupled(&cells) {
        dt_sweep_coupled(config, &cells, &mut rows, &mut table)?;
    } else {
        for (i, r) in &cells {
            let outcome = if nt {
                let problem = r.problem();
                with_threads(r.config.threads, || estimate(&problem, &NtWeight, &r.mc))
                    .map(|res| row_from(values[*i], res.value(), res.error(), None))
                    .map_err(HarnessError::from)
            } else {
                run_resolved(r).map(|rec| {
                    let res = rec.result.as_ref().expect("scalar estimator");
                    row_from(values[*i], res.value(), res.error(), primary_check(&rec.checks, &res.labels[0]))
                })
            };
            match outcome {
                Ok(row) => rows[*i] = Some(row),
                Err(e) => table.errors.push((values[*i], e.to_string())),
            }
        }
    }
    table.rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.unwrap_or_else(|| failed_row(values[i])))
        .collect();
    fit(&mut table, axis, nt);
    Ok(table)
}

fn primary_check<'a>(checks: &'a [crate::run::Check], label: &str) -> Option<&'a crate::run::Check> {
    checks.iter().find(|c| c.label == label)
}

/// Whether every step size is a whole multiple of the finest one, so the
/// cells can share one fine Brownian grid. Only single-output estimators
/// are coupled.
fn coupled(cells: &[(usize, Resolved)]) -> bool {
    if cells
        .iter()
        .any(|(_, r)| matches!(r.config.estimator, EstimatorId::HessianMatrix | EstimatorId::DoublyDampedCheck))
    {
        return false;
    }
    let finest = cells.iter().map(|(_, r)| r.config.dt).fold(f64::INFINITY, f64::min);
    cells.iter().all(|(_, r)| {
        let q = r.config.dt / finest;
        (q - q.round()).abs() < 1e-9 * q
    })
}

fn dt_sweep_coupled(
    config: &ExperimentConfig,
    cells: &[(usize, Resolved)],
    rows: &mut [Option<SweepRow>],
    table: &mut SweepTable,
) -> Result<(), HarnessError> {
    let finest = cells
        .iter()
        .min_by(|a, b| a.1.config.dt.total_cmp(&b.1.config.dt))
        .map(|c| &c.1)
        .expect("at least two cells");
    let problem = finest.problem();
    let spec = finest.spec().expect("scalar estimator");
    let dts: Vec<f64> = cells.iter().map(|(_, r)| r.config.dt).collect();
    let report = with_threads(config.threads, || {
        let functional = spec.build(&problem, &finest.mc)?;
        coupled_sweep(&problem, functional, &dts, &finest.mc)
    });
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            for (i, r) in cells {
                table.errors.push((r.config.dt, e.to_string()));
                rows[*i] = None;
            }
            return Ok(());
        }
    };
    for ((i, r), row) in cells.iter().zip(&report.rows) {
        // the oracle depends on Δt only through its bias allowance
        let result = hessmc_core::estimators::EstimatorResult {
            labels: vec!["value".into()],
            mean: vec![row.mean],
            stderr: vec![row.stderr],
            rows: 1,
            cols: 1,
            n_paths: report.n_paths,
            failed_paths: report.failed_paths,
            n_steps: 0,
            dt: row.dt,
            seed: config.seed,
            accumulators: Vec::new(),
        };
        let checks = scalar_checks(r, &result);
        rows[*i] = Some(row_from(row.dt, row.mean, row.stderr, checks.first()));
    }
    let diffs = &report.differences;
    if let Some(order) = report.order {
        table.fits.push(Fit {
            name: "weak_order".into(),
            value: order,
            stderr: None,
            expected: format!(">= {MIN_ORDER}"),
            pass: order >= MIN_ORDER,
        });
    }
    for d in diffs {
        table.fits.push(Fit {
            name: format!("difference@{:e}-{:e}", d.coarse, d.fine),
            value: d.mean,
            stderr: Some(d.stderr),
            expected: "shrinking with dt".into(),
            pass: true,
        });
    }
    let shrinking = diffs.windows(2).all(|w| w[1].mean.abs() < w[0].mean.abs());
    table.fits.push(Fit {
        name: "bias_decreasing".into(),
        value: if shrinking { 1.0 } else { 0.0 },
        stderr: None,
        expected: "1".into(),
        pass: shrinking,
    });
    Ok(())
}

fn fit(table: &mut SweepTable, axis: Axis, nt: bool) {
    let ok: Vec<&SweepRow> = table.rows.iter().filter(|r| r.mean.is_some()).collect();
    if ok.len() < 2 {
        return;
    }
    let lx: Vec<f64> = ok.iter().map(|r| r.axis_value.ln()).collect();
    match axis {
        Axis::NPaths => {
            let ly: Vec<f64> = ok.iter().map(|r| r.stderr.unwrap().ln()).collect();
            let slope = fit_slope(&lx, &ly);
            table.fits.push(Fit {
                name: "stderr_slope".into(),
                value: slope,
                stderr: None,
                expected: format!("{STDERR_SLOPE} ± {STDERR_SLOPE_TOL}"),
                pass: (slope - STDERR_SLOPE).abs() <= STDERR_SLOPE_TOL,
            });
            for w in ok.windows(2) {
                let ratio = w[1].axis_value / w[0].axis_value;
                if (ratio - 4.0).abs() < 1e-9 {
                    let halving = w[0].stderr.unwrap() / w[1].stderr.unwrap();
                    table.fits.push(Fit {
                        name: format!("stderr_ratio@{}", w[1].axis_value),
                        value: halving,
                        stderr: None,
                        expected: format!("2 ± {}%", HALVING_TOL * 100.0),
                        pass: (halving / 2.0 - 1.0).abs() <= HALVING_TOL,
                    });
                }
            }
        }
        Axis::T => {
            let ly: Vec<f64> = ok.iter().map(|r| r.mean.unwrap().abs().ln()).collect();
            let slope = fit_slope(&lx, &ly);
            table.fits.push(Fit {
                name: "log_log_slope".into(),
                value: slope,
                stderr: None,
                expected: if nt {
                    format!("{NT_SLOPE} ± {NT_SLOPE_TOL}")
                } else {
                    "none".into()
                },
                pass: !nt || (slope - NT_SLOPE).abs() <= NT_SLOPE_TOL,
            });
        }
        Axis::Dt => {
            if table.fits.is_empty() {
                // uncoupled cells: fit the bias against the oracle where it
                // is resolved above the noise
                let biased: Vec<(f64, f64)> = ok
                    .iter()
                    .filter_map(|r| {
                        let err = r.abs_err?;
                        (err > STDERR_FACTOR * r.stderr.unwrap()).then(|| (r.axis_value.ln(), err.ln()))
                    })
                    .collect();
                if biased.len() >= 2 {
                    let (x, y): (Vec<f64>, Vec<f64>) = biased.into_iter().unzip();
                    let order = fit_slope(&x, &y);
                    table.fits.push(Fit {
                        name: "weak_order".into(),
                        value: order,
                        stderr: None,
                        expected: format!(">= {MIN_ORDER}"),
                        pass: order >= MIN_ORDER,
                    });
                }
            }
        }
    }
}
