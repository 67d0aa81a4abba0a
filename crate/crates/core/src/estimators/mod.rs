//! Monte Carlo estimators for `P_t f`, `dP_t f` and `Hess P_t f`, and the
//! diagnostics built on the same path weights.

mod engine;
mod formulas;
mod functions;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Vec3};
use crate::pathsim::{PathError, Scheme};

pub use engine::{
    estimate, estimate_checkpoints, path_samples, CoupledSweep, EstimatorResult, McConfig, PathFunctional, PathView, Problem, Simulator,
    TransportNeeds,
};
pub use formulas::{
    fk_terms, DoublyDampedCheck, ExpMoment, FeynmanKac, FkTerms, GradientBismut, GradientPathwise,
    HessianElementary, HessianFk, HessianMatrix, HessianMethod, NtWeight, GRADED_FRACTION,
    POTENTIAL_SIGN,
};
pub use functions::{Smoothness, TestFunction};
pub use stats::{fit_slope, Welford};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EstimatorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown test function `{0}`")]
    UnknownFunction(String),
    #[error("{0}")]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Path(PathError),
    #[error("all paths failed ({0} chart exits or projection failures)")]
    AllPathsFailed(u64),
    #[error("alpha = {alpha:e} exceeds the admissible alpha_2 = {alpha2:e}")]
    AlphaTooLarge { alpha: f64, alpha2: f64 },
}

fn require_zero_potential(problem: &Problem, what: &str) -> Result<(), EstimatorError> {
    if problem.fields.potential_kind().is_zero() {
        Ok(())
    } else {
        Err(EstimatorError::InvalidArgument(format!(
            "{what} requires V = 0, got {}",
            problem.fields.potential_kind()
        )))
    }
}

/// An estimator with its parameters. Tangent vectors are in representation
/// coordinates at `x₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    FeynmanKac { f: TestFunction },
    GradientPathwise { f: TestFunction, v: Vec3 },
    GradientBismut { f: TestFunction, v: Vec3 },
    HessianElementary { f: TestFunction, v1: Vec3, v2: Vec3 },
    HessianFk { f: TestFunction, v1: Vec3, v2: Vec3 },
    HessianMatrix { f: TestFunction, method: HessianMethod },
    /// `E[u_t C_t]` against the finite-difference derivative of damped
    /// transport; gradient-SDE scheme only.
    DoublyDamped { v1: Vec3, v2: Vec3, eps: f64 },
}

impl EstimatorSpec {
    /// Checks the preconditions and returns the path functional.
    pub fn build(&self, problem: &Problem, cfg: &McConfig) -> Result<Box<dyn PathFunctional>, EstimatorError> {
        let check_f = |f: &TestFunction| f.check(&problem.model);
        Ok(match *self {
            EstimatorSpec::FeynmanKac { f } => {
                check_f(&f)?;
                Box::new(FeynmanKac { f })
            }
            EstimatorSpec::GradientPathwise { f, v } => {
                check_f(&f)?;
                require_zero_potential(problem, "the pathwise gradient")?;
                Box::new(GradientPathwise { f, v: problem.frame_coords(&v)? })
            }
            EstimatorSpec::GradientBismut { f, v } => {
                check_f(&f)?;
                require_zero_potential(problem, "the integration-by-parts gradient")?;
                Box::new(GradientBismut { f, v: problem.frame_coords(&v)? })
            }
            EstimatorSpec::HessianElementary { f, v1, v2 } => {
                check_f(&f)?;
                require_zero_potential(problem, "the elementary Hessian formula")?;
                let (v1, v2) = (problem.frame_coords(&v1)?, problem.frame_coords(&v2)?);
                Box::new(HessianElementary { f, v1, v2 })
            }
            EstimatorSpec::HessianFk { f, v1, v2 } => {
                check_f(&f)?;
                require_quarter_grid(problem, cfg)?;
                let (v1, v2) = (problem.frame_coords(&v1)?, problem.frame_coords(&v2)?);
                Box::new(HessianFk { f, v1, v2 })
            }
            EstimatorSpec::HessianMatrix { f, method } => {
                check_f(&f)?;
                match method {
                    HessianMethod::Elementary => {
                        require_zero_potential(problem, "the elementary Hessian formula")?
                    }
                    HessianMethod::FeynmanKac => require_quarter_grid(problem, cfg)?,
                }
                Box::new(HessianMatrix {
                    f,
                    method,
                    dim: problem.model.dim(),
                })
            }
            EstimatorSpec::DoublyDamped { v1, v2, eps } => {
                if !(eps > 0.0) {
                    return Err(EstimatorError::InvalidArgument("eps must be positive".into()));
                }
                if cfg.scheme != Scheme::GradientSde {
                    return Err(EstimatorError::InvalidArgument(
                        "the doubly damped check needs the gradient-SDE scheme".into(),
                    ));
                }
                let (v1, v2) = (problem.frame_coords(&v1)?, problem.frame_coords(&v2)?);
                Box::new(DoublyDampedCheck { v1, v2, eps })
            }
        })
    }

    pub fn run(&self, problem: &Problem, cfg: &McConfig) -> Result<EstimatorResult, EstimatorError> {
        estimate(problem, &self.build(problem, cfg)?, cfg)
    }
}

pub fn feynman_kac(
    problem: &Problem,
    f: TestFunction,
    cfg: &McConfig,
) -> Result<EstimatorResult, EstimatorError> {
    EstimatorSpec::FeynmanKac { f }.run(problem, cfg)
}

/// `v` is a tangent vector at `x₀` in representation coordinates.
pub fn gradient_pathwise(
    problem: &Problem,
    f: TestFunction,
    v: &Vec3,
    cfg: &McConfig,
) -> Result<EstimatorResult, EstimatorError> {
    EstimatorSpec::GradientPathwise { f, v: *v }.run(problem, cfg)
}

pub fn gradient_bismut(
    problem: &Problem,
    f: TestFunction,
    v: &Vec3,
    cfg: &McConfig,
) -> Result<EstimatorResult, EstimatorError> {
    EstimatorSpec::GradientBismut { f, v: *v }.run(problem, cfg)
}

pub fn hessian_elementary(
    problem: &Problem,
    f: TestFunction,
    v1: &Vec3,
    v2: &Vec3,
    cfg: &McConfig,
) -> Result<EstimatorResult, EstimatorError> {
    EstimatorSpec::HessianElementary { f, v1: *v1, v2: *v2 }.run(problem, cfg)
}

fn require_quarter_grid(problem: &Problem, cfg: &McConfig) -> Result<(), EstimatorError> {
    let m = cfg.steps_for(problem.t)?;
    if m % 4 == 0 {
        Ok(())
    } else {
        Err(EstimatorError::InvalidArgument(format!(
            "the number of steps t/dt = {m} must be divisible by 4"
        )))
    }
}

pub fn hessian_fk(
    problem: &Problem,
    f: TestFunction,
    v1: &Vec3,
    v2: &Vec3,
    cfg: &McConfig,
) -> Result<EstimatorResult, EstimatorError> {
    EstimatorSpec::HessianFk { f, v1: *v1, v2: *v2 }.run(problem, cfg)
}

/// Hessian in the orthonormal frame at `x₀`; the primary output is the
/// `n × n` matrix.
pub fn hessian_matrix(
    problem: &Problem,
    f: TestFunction,
    method: HessianMethod,
    cfg: &McConfig,
) -> Result<EstimatorResult, EstimatorError> {
    EstimatorSpec::HessianMatrix { f, method }.run(problem, cfg)
}

/// Bound on `|Hess P_t f(v₂, v₁)|` from `|∇df|_∞`, `|df|_∞` and the
/// empirical `E|W_t^(2)|`, with a `(1 + Δt)` discretisation allowance.
pub fn hessian_bound(
    problem: &Problem,
    f: TestFunction,
    v1: &Vec3,
    v2: &Vec3,
    mean_abs_w2: f64,
    dt: f64,
) -> Option<f64> {
    let m = &problem.model;
    let hess = f.hess_sup(m)?;
    let grad = f.df_sup(m)?;
    let rho = problem.fields.rho_bar(m);
    let scale = m.norm(&problem.x0, v1) * m.norm(&problem.x0, v2);
    Some((hess * scale * (2.0 * rho * problem.t).exp() + grad * mean_abs_w2) * (1.0 + dt))
}

pub fn doubly_damped_check(
    problem: &Problem,
    v1: &Vec3,
    v2: &Vec3,
    eps: f64,
    cfg: &McConfig,
) -> Result<EstimatorResult, EstimatorError> {
    EstimatorSpec::DoublyDamped { v1: *v1, v2: *v2, eps }.run(problem, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtRow {
    pub t: f64,
    pub mean_abs_n: f64,
    pub stderr: f64,
    pub failed_paths: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtScalingTable {
    pub rows: Vec<NtRow>,
    /// Least-squares slope of `log E|N_t|` against `log t`.
    pub slope: f64,
}

/// `E|N_t|` over `t_list` with `v₁ = v₂` the first frame vector.
pub fn nt_scaling_diagnostic(
    problem: &Problem,
    t_list: &[f64],
    cfg: &McConfig,
) -> Result<NtScalingTable, EstimatorError> {
    if t_list.len() < 2 || t_list.iter().any(|&t| !(t > 0.0)) {
        return Err(EstimatorError::InvalidArgument(
            "t_list needs at least two positive times".into(),
        ));
    }
    let mut rows = Vec::new();
    for &t in t_list {
        let p = problem.with_t(t)?;
        let r = estimate(&p, &NtWeight, cfg)?;
        rows.push(NtRow {
            t,
            mean_abs_n: r.value(),
            stderr: r.error(),
            failed_paths: r.failed_paths,
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.mean_abs_n.ln()).collect();
    Ok(NtScalingTable {
        slope: fit_slope(&lx, &ly),
        rows,
    })
}

/// `C₁(T, K) = sup_{0<s≤3KT} (e^s − 1)/s = (e^{3KT} − 1)/(3KT)`, and 1 for `K = 0`.
pub fn c1(t: f64, k: f64) -> f64 {
    let s = 3.0 * k * t;
    if s == 0.0 {
        1.0
    } else {
        s.exp_m1() / s
    }
}

/// `α₂ = 1 / (49 n² ‖R‖²_∞ C₁(T, K))`; infinite on flat models.
pub fn alpha2(n: usize, r_sup: f64, t: f64, k: f64) -> f64 {
    let d = 49.0 * (n * n) as f64 * r_sup * r_sup * c1(t, k);
    if d == 0.0 {
        f64::INFINITY
    } else {
        1.0 / d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentRow {
    pub alpha: f64,
    /// Estimate over the first half of the paths.
    pub mean_half: f64,
    pub mean: f64,
    pub stderr: f64,
    /// `|mean − mean_half| / mean_half`.
    pub relative_change: f64,
    /// Largest single-path term over the sum of all terms.
    pub max_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub t: f64,
    pub k: f64,
    pub curvature_sup: f64,
    pub c1: f64,
    pub alpha2: f64,
    pub mean_w2_squared: f64,
    pub rows: Vec<ExpMomentRow>,
}

/// `E exp(α|W_t^(2)|²)` over `2 cfg.n_paths` paths, compared with the first
/// `cfg.n_paths` of them.
pub fn exp_moment_diagnostic(
    problem: &Problem,
    alphas: &[f64],
    cfg: &McConfig,
) -> Result<ExpMomentReport, EstimatorError> {
    let m = &problem.model;
    let k = m.lower_bound_k();
    let r_sup = m.curvature_sup_norm();
    let a2 = alpha2(m.dim(), r_sup, problem.t, k);
    if let Some(&bad) = alphas.iter().find(|&&a| !(a >= 0.0) || a > a2) {
        return Err(EstimatorError::AlphaTooLarge { alpha: bad, alpha2: a2 });
    }
    let functional = ExpMoment {
        alphas: alphas.to_vec(),
        dim: m.dim(),
    };
    let doubled = McConfig {
        n_paths: 2 * cfg.n_paths,
        ..*cfg
    };
    let mut runs = estimate_checkpoints(problem, &functional, &doubled, &[cfg.n_paths])?;
    let full = runs.pop().expect("full run");
    let half = runs.pop().expect("checkpoint");
    let rows = alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let acc = &full.accumulators[i];
            ExpMomentRow {
                alpha,
                mean_half: half.mean[i],
                mean: full.mean[i],
                stderr: full.stderr[i],
                relative_change: (full.mean[i] - half.mean[i]).abs() / half.mean[i].abs(),
                max_share: acc.max() / acc.sum(),
            }
        })
        .collect();
    Ok(ExpMomentReport {
        t: problem.t,
        k,
        curvature_sup: r_sup,
        c1: c1(problem.t, k),
        alpha2: a2,
        mean_w2_squared: full.mean[alphas.len()],
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dt: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDifference {
    pub coarse: f64,
    pub fine: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSweepReport {
    pub rows: Vec<SweepRow>,
    pub differences: Vec<SweepDifference>,
    /// Weak order from the least-squares slope of `log |difference|`
    /// against `log Δt`. Differences of a method of order `p` scale like
    /// `Δt^p` when the step ratio is fixed. `None` with fewer than two
    /// differences.
    pub order: Option<f64>,
    pub n_paths: u64,
    pub failed_paths: u64,
}

/// Estimates the primary output of `functional` at every step size in
/// `dts` on shared Brownian paths, so successive differences resolve the
/// discretisation bias far below the statistical error of each estimate.
/// `dts` should be decreasing with a constant ratio.
pub fn coupled_sweep<F: PathFunctional>(
    problem: &Problem,
    functional: F,
    dts: &[f64],
    cfg: &McConfig,
) -> Result<CoupledSweepReport, EstimatorError> {
    for &dt in dts {
        McConfig { dt, ..*cfg }.steps_for(problem.t)?;
    }
    let sweep = CoupledSweep::new(functional, dts.to_vec())?;
    let finest = dts.iter().cloned().fold(f64::INFINITY, f64::min);
    let r = estimate(problem, &sweep, &McConfig { dt: finest, ..*cfg })?;
    let n = dts.len();
    let rows = dts
        .iter()
        .enumerate()
        .map(|(i, &dt)| SweepRow {
            dt,
            mean: r.mean[i],
            stderr: r.stderr[i],
        })
        .collect();
    let differences: Vec<SweepDifference> = dts
        .windows(2)
        .enumerate()
        .map(|(i, w)| SweepDifference {
            coarse: w[0],
            fine: w[1],
            mean: r.mean[n + i],
            stderr: r.stderr[n + i],
        })
        .collect();
    let order = (differences.len() >= 2).then(|| {
        let lx: Vec<f64> = differences.iter().map(|d| d.coarse.ln()).collect();
        let ly: Vec<f64> = differences.iter().map(|d| d.mean.abs().ln()).collect();
        fit_slope(&lx, &ly)
    });
    Ok(CoupledSweepReport {
        rows,
        differences,
        order,
        n_paths: r.n_paths,
        failed_paths: r.failed_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Drift, ManifoldModel, Potential, ScalarFieldBundle};

    fn flat(dim: usize) -> Problem {
        let m = ManifoldModel::euclidean(dim).unwrap();
        Problem::new(m, ScalarFieldBundle::zero(), Vec3::zeros(), 1.0).unwrap()
    }

    #[test]
    fn c1_and_alpha2_values() {
        assert_eq!(c1(1.0, 0.0), 1.0);
        let c = c1(1.0, 1.0);
        assert!((c - 6.361_845_641_062_556).abs() < 1e-12);
        let a = alpha2(2, 1.0, 1.0, 1.0);
        assert!((a - 1.0 / (196.0 * c)).abs() < 1e-18);
        assert!((a - 8.0203e-4).abs() < 1e-7);
        assert_eq!(alpha2(2, 0.0, 1.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let cfg = McConfig::new(100, 0.3, 1);
        assert!(matches!(cfg.steps_for(1.0), Err(EstimatorError::InvalidArgument(_))));
        let cfg = McConfig::new(100, 0.1, 1);
        let e = hessian_fk(&flat(1), TestFunction::Square(0), &Vec3::x(), &Vec3::x(), &cfg);
        assert!(matches!(e, Err(EstimatorError::InvalidArgument(_))));
    }

    #[test]
    fn flat_elementary_hessian_is_exact() {
        let p = flat(2);
        let cfg = McConfig::new(1000, 0.05, 3);
        let r = hessian_elementary(&p, TestFunction::Square(0), &Vec3::x(), &Vec3::x(), &cfg).unwrap();
        assert_eq!(r.value(), 2.0);
        assert_eq!(r.error(), 0.0);
    }

    #[test]
    fn results_do_not_depend_on_batch_size() {
        let p = flat(1);
        let a = feynman_kac(&p, TestFunction::Square(0), &McConfig::new(2000, 0.05, 9)).unwrap();
        let cfg = McConfig {
            batch_size: 7,
            ..McConfig::new(2000, 0.05, 9)
        };
        let b = feynman_kac(&p, TestFunction::Square(0), &cfg).unwrap();
        assert!((a.value() - b.value()).abs() < 1e-13);
        assert!((a.error() - b.error()).abs() < 1e-13);
    }

    #[test]
    fn gradient_requires_zero_potential() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let f = ScalarFieldBundle::zero().with_potential(Potential::Constant(1.0));
        let p = Problem::new(m, f, Vec3::zeros(), 1.0).unwrap();
        let e = gradient_pathwise(&p, TestFunction::Coord(0), &Vec3::x(), &McConfig::new(100, 0.1, 1));
        assert!(matches!(e, Err(EstimatorError::InvalidArgument(_))));
    }

    #[test]
    fn alpha_above_threshold_is_rejected() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let p = Problem::new(m, ScalarFieldBundle::zero(), m.default_point(), 1.0).unwrap();
        let e = exp_moment_diagnostic(&p, &[1e-2], &McConfig::new(100, 0.05, 1));
        assert!(matches!(e, Err(EstimatorError::AlphaTooLarge { .. })));
    }

    #[test]
    fn ou_pathwise_gradient_is_deterministic_for_linear_f() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let f = ScalarFieldBundle::new(&m, Drift::NegHalfSquare, Potential::Zero).unwrap();
        let p = Problem::new(m, f, Vec3::new(0.4, 0.0, 0.0), 1.0).unwrap();
        let r = gradient_pathwise(&p, TestFunction::Coord(0), &Vec3::x(), &McConfig::new(200, 0.01, 2))
            .unwrap();
        assert!((r.value() - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(r.get("bound_violation").unwrap().0, 0.0);
    }

    #[test]
    fn checkpoints_match_shorter_runs() {
        let p = flat(1);
        let cfg = McConfig {
            batch_size: 50,
            ..McConfig::new(400, 0.05, 4)
        };
        let runs = estimate_checkpoints(&p, &FeynmanKac { f: TestFunction::Sin(0) }, &cfg, &[200]).unwrap();
        let short = feynman_kac(&p, TestFunction::Sin(0), &McConfig { n_paths: 200, ..cfg }).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].n_paths, 200);
        assert!((runs[0].value() - short.value()).abs() < 1e-14);
        assert_eq!(runs[1].n_paths, 400);
    }

    #[test]
    fn coupled_sweep_shares_noise() {
        // Brownian motion itself is exact at every step size, so on shared
        // noise the endpoints agree path by path.
        let p = flat(1);
        let cfg = McConfig::new(300, 0.025, 5);
        let r = coupled_sweep(&p, FeynmanKac { f: TestFunction::Coord(0) }, &[0.1, 0.05, 0.025], &cfg).unwrap();
        for d in &r.differences {
            assert!(d.mean.abs() < 1e-12 && d.stderr < 1e-12, "{d:?}");
        }
        assert!(r.rows[0].stderr > 0.01);
    }
}
