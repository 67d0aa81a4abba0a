//! Deterministic parallel Monte Carlo over paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, ManifoldModel, ScalarFieldBundle, Vec3};
use crate::pathsim::{simulate_path, BrownianDriver, PathError, PathState, PotentialIntegral, Scheme};
use crate::transport::TransportObserver;

use super::stats::Welford;
use super::EstimatorError;

/// Relative slack when checking that `t / Δt` is an integer.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Each increment is a sum of this many finer increments.
    pub noise_substeps: usize,
    pub batch_size: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            dt: 5e-3,
            seed: 1,
            scheme: Scheme::FrameBundle,
            noise_substeps: 1,
            batch_size: 512,
        }
    }
}

impl McConfig {
    pub fn new(n_paths: u64, dt: f64, seed: u64) -> Self {
        Self {
            n_paths,
            dt,
            seed,
            ..Self::default()
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.noise_substeps = substeps;
        self
    }

    /// Number of steps `m` with `t = m Δt`.
    pub fn steps_for(&self, t: f64) -> Result<usize, EstimatorError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(EstimatorError::InvalidArgument(format!("t must be positive, got {t}")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(EstimatorError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        let m = (t / self.dt).round();
        if m < 1.0 || ((t / self.dt) - m).abs() > GRID_TOL * m.max(1.0) {
            return Err(EstimatorError::InvalidArgument(format!(
                "t = {t} is not a whole number of steps of {}",
                self.dt
            )));
        }
        Ok(m as usize)
    }
}

/// Model, fields, base point and horizon shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub model: ManifoldModel,
    pub fields: ScalarFieldBundle,
    pub x0: Vec3,
    pub t: f64,
    /// Frame at `x0`; directions are passed to the transport in this frame.
    pub u0: Mat3,
}

impl Problem {
    pub fn new(
        model: ManifoldModel,
        fields: ScalarFieldBundle,
        x0: Vec3,
        t: f64,
    ) -> Result<Self, EstimatorError> {
        model.check_point(&x0)?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(EstimatorError::InvalidArgument(format!("t must be positive, got {t}")));
        }
        Ok(Self {
            model,
            fields,
            x0,
            t,
            u0: model.orthonormal_frame(&x0),
        })
    }

    pub fn with_t(mut self, t: f64) -> Result<Self, EstimatorError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(EstimatorError::InvalidArgument(format!("t must be positive, got {t}")));
        }
        self.t = t;
        Ok(self)
    }

    /// Frame coordinates of a tangent vector at `x0`.
    pub fn frame_coords(&self, v: &Vec3) -> Result<Vec3, EstimatorError> {
        self.model.check_tangent(&self.x0, v)?;
        Ok(self.model.to_frame(&self.x0, &self.u0, v))
    }

    pub fn start(&self) -> PathState {
        PathState::with_frame(self.x0, self.u0)
    }
}

/// Mean and standard error of every output of a functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub labels: Vec<String>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Shape of the primary output, stored first in `mean`.
    pub rows: usize,
    pub cols: usize,
    pub n_paths: u64,
    pub failed_paths: u64,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    #[serde(skip)]
    pub accumulators: Vec<Welford>,
}

impl EstimatorResult {
    pub fn value(&self) -> f64 {
        self.mean[0]
    }

    pub fn error(&self) -> f64 {
        self.stderr[0]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Mean and standard error of a named output.
    pub fn get(&self, label: &str) -> Option<(f64, f64)> {
        self.index_of(label).map(|i| (self.mean[i], self.stderr[i]))
    }

    /// Entry `(i, j)` of a matrix-valued primary output.
    pub fn entry(&self, i: usize, j: usize) -> (f64, f64) {
        let k = i * self.cols + j;
        (self.mean[k], self.stderr[k])
    }

    pub fn failure_rate(&self) -> f64 {
        let total = self.n_paths + self.failed_paths;
        if total == 0 {
            0.0
        } else {
            self.failed_paths as f64 / total as f64
        }
    }
}

/// What the transport observer must integrate for a functional.
#[derive(Debug, Clone, Default)]
pub struct TransportNeeds {
    pub directions: Vec<Vec3>,
    pub pairs: Vec<(usize, usize)>,
    pub weights: bool,
}

/// A per-path quantity whose expectation is estimated.
pub trait PathFunctional: Sync {
    fn labels(&self) -> Vec<String>;

    /// Shape of the leading (primary) outputs.
    fn shape(&self) -> (usize, usize) {
        (1, 1)
    }

    fn needs(&self) -> TransportNeeds;

    /// Simulates whatever the functional needs for path `path` and writes
    /// one value per label.
    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError>;
}

impl<T: PathFunctional + ?Sized> PathFunctional for Box<T> {
    fn labels(&self) -> Vec<String> {
        (**self).labels()
    }

    fn shape(&self) -> (usize, usize) {
        (**self).shape()
    }

    fn needs(&self) -> TransportNeeds {
        (**self).needs()
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        (**self).sample(sim, path, out)
    }
}

/// Outcome of one simulated path.
pub struct PathView<'s> {
    pub end: PathState,
    pub transport: &'s TransportObserver,
    /// Left-point `∫₀ᵗ V(x_s) ds`.
    pub potential_integral: f64,
}

/// Reusable per-thread simulation workspace.
pub struct Simulator<'a> {
    pub problem: &'a Problem,
    pub cfg: &'a McConfig,
    pub steps: usize,
    transport: TransportObserver,
    potential: PotentialIntegral,
}

impl<'a> Simulator<'a> {
    pub fn new(problem: &'a Problem, cfg: &'a McConfig, steps: usize, needs: TransportNeeds) -> Self {
        let mut transport = TransportObserver::new(needs.directions, needs.pairs, needs.weights);
        transport.reserve(steps);
        Self {
            problem,
            cfg,
            steps,
            transport,
            potential: PotentialIntegral::default(),
        }
    }

    fn driver(&self, path: u64) -> BrownianDriver {
        BrownianDriver::new(
            self.cfg.seed,
            path,
            self.cfg.scheme.noise_dim(&self.problem.model),
            self.cfg.dt,
            self.steps,
            self.cfg.noise_substeps,
        )
    }

    /// Runs path `path` from `start`; the same index always reuses the same noise.
    pub fn run(&mut self, path: u64, start: PathState) -> Result<PathView<'_>, PathError> {
        let mut driver = self.driver(path);
        let end = simulate_path(
            &self.problem.model,
            &self.problem.fields,
            self.cfg.scheme,
            start,
            &mut driver,
            &mut [&mut self.transport, &mut self.potential],
        )?;
        Ok(PathView {
            end,
            transport: &self.transport,
            potential_integral: self.potential.value,
        })
    }

    pub fn run_from_x0(&mut self, path: u64) -> Result<PathView<'_>, PathError> {
        let start = self.problem.start();
        self.run(path, start)
    }
}

fn is_path_failure(e: &PathError) -> bool {
    matches!(e, PathError::ChartExit { .. } | PathError::ProjectionFailure { .. })
}

fn check_config(cfg: &McConfig) -> Result<(), EstimatorError> {
    if cfg.n_paths == 0 {
        return Err(EstimatorError::InvalidArgument("n_paths must be positive".into()));
    }
    if cfg.batch_size == 0 {
        return Err(EstimatorError::InvalidArgument("batch_size must be positive".into()));
    }
    if cfg.noise_substeps == 0 {
        return Err(EstimatorError::InvalidArgument("noise_substeps must be positive".into()));
    }
    Ok(())
}

/// Averages `functional` over `cfg.n_paths` paths. Batches run in parallel
/// and are merged in index order, so the result does not depend on the
/// number of threads.
pub fn estimate<F: PathFunctional>(
    problem: &Problem,
    functional: &F,
    cfg: &McConfig,
) -> Result<EstimatorResult, EstimatorError> {
    let mut out = estimate_checkpoints(problem, functional, cfg, &[])?;
    Ok(out.pop().expect("the full run is always reported"))
}

/// Like [`estimate`], additionally reporting the estimate over the first
/// `c` paths for every checkpoint `c` (rounded up to whole batches). The
/// full run comes last.
pub fn estimate_checkpoints<F: PathFunctional>(
    problem: &Problem,
    functional: &F,
    cfg: &McConfig,
    checkpoints: &[u64],
) -> Result<Vec<EstimatorResult>, EstimatorError> {
    check_config(cfg)?;
    let steps = cfg.steps_for(problem.t)?;
    let labels = functional.labels();
    let k = labels.len();
    let needs = functional.needs();
    let n_batches = cfg.n_paths.div_ceil(cfg.batch_size);
    let batches: Vec<Result<(Vec<Welford>, u64), EstimatorError>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut sim = Simulator::new(problem, cfg, steps, needs.clone());
            let mut acc = vec![Welford::default(); k];
            let mut out = vec![0.0; k];
            let mut failed = 0;
            let lo = b * cfg.batch_size;
            let hi = (lo + cfg.batch_size).min(cfg.n_paths);
            for path in lo..hi {
                match functional.sample(&mut sim, path, &mut out) {
                    Ok(()) => acc.iter_mut().zip(&out).for_each(|(a, &x)| a.push(x)),
                    Err(e) if is_path_failure(&e) => failed += 1,
                    Err(e) => return Err(EstimatorError::Path(e)),
                }
            }
            Ok((acc, failed))
        })
        .collect();
    let (rows, cols) = functional.shape();
    let finish = |total: &[Welford], failed: u64| -> Result<EstimatorResult, EstimatorError> {
        let n_ok = total.first().map(|w| w.count()).unwrap_or(0);
        if n_ok == 0 {
            return Err(EstimatorError::AllPathsFailed(failed));
        }
        Ok(EstimatorResult {
            labels: labels.clone(),
            mean: total.iter().map(|w| w.mean()).collect(),
            stderr: total.iter().map(|w| w.stderr()).collect(),
            rows,
            cols,
            n_paths: n_ok,
            failed_paths: failed,
            n_steps: steps,
            dt: cfg.dt,
            seed: cfg.seed,
            accumulators: total.to_vec(),
        })
    };
    let marks: Vec<u64> = checkpoints
        .iter()
        .map(|c| c.div_ceil(cfg.batch_size).clamp(1, n_batches))
        .collect();
    let mut snapshots = vec![None; marks.len()];
    let mut total = vec![Welford::default(); k];
    let mut failed = 0;
    for (b, batch) in batches.into_iter().enumerate() {
        let (acc, f) = batch?;
        total.iter_mut().zip(&acc).for_each(|(t, a)| t.merge(a));
        failed += f;
        for (snap, &mark) in snapshots.iter_mut().zip(&marks) {
            if mark == b as u64 + 1 {
                *snap = Some(finish(&total, failed)?);
            }
        }
    }
    let mut out: Vec<EstimatorResult> = snapshots.into_iter().map(|s| s.expect("mark within range")).collect();
    out.push(finish(&total, failed)?);
    Ok(out)
}

/// Runs `inner` at every step size in `dts` on the same Brownian paths.
/// Increments are built from a fine grid of step `min(dts) / base
/// substeps`, so every step size must be a whole multiple of the finest.
/// Outputs the primary value per step size, then the successive differences.
pub struct CoupledSweep<F: PathFunctional> {
    pub inner: F,
    pub dts: Vec<f64>,
}

impl<F: PathFunctional> CoupledSweep<F> {
    pub fn new(inner: F, dts: Vec<f64>) -> Result<Self, EstimatorError> {
        let finest = dts.iter().cloned().fold(f64::INFINITY, f64::min);
        if dts.is_empty() || !(finest > 0.0) {
            return Err(EstimatorError::InvalidArgument("step sizes must be positive".into()));
        }
        for dt in &dts {
            let r = dt / finest;
            if (r - r.round()).abs() > GRID_TOL * r {
                return Err(EstimatorError::InvalidArgument(format!(
                    "step {dt} is not a multiple of the finest step {finest}"
                )));
            }
        }
        Ok(Self { inner, dts })
    }

    fn finest(&self) -> f64 {
        self.dts.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

impl<F: PathFunctional> PathFunctional for CoupledSweep<F> {
    fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.dts.iter().map(|dt| format!("value@{dt:e}")).collect();
        for w in self.dts.windows(2) {
            l.push(format!("diff@{:e}-{:e}", w[0], w[1]));
        }
        l
    }

    fn shape(&self) -> (usize, usize) {
        (1, self.dts.len())
    }

    fn needs(&self) -> TransportNeeds {
        self.inner.needs()
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let problem = sim.problem;
        let finest = self.finest();
        let mut buf = vec![0.0; self.inner.labels().len()];
        for (i, &dt) in self.dts.iter().enumerate() {
            let ratio = (dt / finest).round() as usize;
            let cfg = McConfig {
                dt,
                noise_substeps: sim.cfg.noise_substeps * ratio,
                ..*sim.cfg
            };
            let steps = (problem.t / dt).round() as usize;
            let mut inner_sim = Simulator::new(problem, &cfg, steps, self.inner.needs());
            self.inner.sample(&mut inner_sim, path, &mut buf)?;
            out[i] = buf[0];
        }
        let n = self.dts.len();
        for i in 0..n.saturating_sub(1) {
            out[n + i] = out[i] - out[i + 1];
        }
        Ok(())
    }
}

/// Per-path outputs for paths `0..n`, `None` for failed paths.
pub fn path_samples<F: PathFunctional>(
    problem: &Problem,
    functional: &F,
    cfg: &McConfig,
    n: u64,
) -> Result<Vec<Option<Vec<f64>>>, EstimatorError> {
    check_config(cfg)?;
    let steps = cfg.steps_for(problem.t)?;
    let k = functional.labels().len();
    let mut sim = Simulator::new(problem, cfg, steps, functional.needs());
    let mut out = Vec::with_capacity(n as usize);
    for path in 0..n {
        let mut buf = vec![0.0; k];
        match functional.sample(&mut sim, path, &mut buf) {
            Ok(()) => out.push(Some(buf)),
            Err(e) if is_path_failure(&e) => out.push(None),
            Err(e) => return Err(EstimatorError::Path(e)),
        }
    }
    Ok(out)
}
