//! The acceptance battery behind `hessmc verify` and the `acceptance` test.

use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use hessmc_core::estimators::{
    alpha2, c1, coupled_sweep, estimate, exp_moment_diagnostic, feynman_kac, gradient_bismut, gradient_pathwise,
    hessian_elementary, hessian_fk, nt_scaling_diagnostic, path_samples, EstimatorError, EstimatorSpec,
    FeynmanKac, McConfig, PathFunctional, Problem, Simulator, TestFunction, TransportNeeds, POTENTIAL_SIGN,
};
use hessmc_core::geometry::verify::{curvature_identities, verify_connection_with};
use hessmc_core::geometry::{builtin_models, Drift, ManifoldModel, Potential, ScalarFieldBundle, Vec3};
use hessmc_core::pathsim::{simulate_path, BrownianDriver, PathError, PathObserver, PathState, Scheme};
use hessmc_core::transport::TransportObserver;
use serde::{Deserialize, Serialize};

use crate::oracle::{BIAS_PER_DT, STDERR_FACTOR};
use crate::run::{with_threads, DOUBLY_DAMPED_ALLOWANCE, EXP_MOMENT_CHANGE, EXP_MOMENT_SHARE, NT_SLOPE, NT_SLOPE_TOL};
use crate::sweep::MIN_ORDER;

pub const DESK_PATHS: u64 = 100_000;
pub const DESK_DT: f64 = 5e-3;
const TRANSPORT_TOL: f64 = 1e-8;
const GEOMETRY_TOL: f64 = 1e-6;
const GEOMETRY_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Negates the Riemann tensor of every curved model.
    FlipCurvature,
}

impl std::str::FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flip-curvature" => Ok(Mutation::FlipCurvature),
            other => Err(format!("unknown mutation `{other}`; expected flip-curvature")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Multiplies every path count.
    pub path_scale: f64,
    pub mutation: Option<Mutation>,
    /// Criteria to run; all when empty.
    pub only: Vec<u8>,
    pub threads: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            path_scale: 1.0,
            mutation: None,
            only: Vec::new(),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    pub details: Vec<String>,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {} ({:.1} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub options: SuiteOptions,
    pub criteria: Vec<CriterionReport>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

/// Collects pass/fail lines for one criterion.
struct Log {
    pass: bool,
    details: Vec<String>,
}

impl Log {
    fn new() -> Self {
        Self {
            pass: true,
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, text: String) {
        self.pass &= ok;
        self.details.push(format!("{} {text}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, text: String) {
        self.details.push(format!("     {text}"));
    }

    /// `|estimate − oracle| ≤ tolerance`.
    fn close(&mut self, name: &str, est: f64, se: f64, oracle: f64, tol: f64) {
        let err = (est - oracle).abs();
        self.check(
            err <= tol,
            format!("{name}: {est:.6} ± {se:.6} vs {oracle:.6}, |err| {err:.2e} <= {tol:.2e}"),
        );
    }

    fn error(&mut self, what: &str, e: impl std::fmt::Display) {
        self.check(false, format!("{what}: {e}"));
    }
}

type Outcome = Result<(), EstimatorError>;

struct Ctx {
    seed: u64,
    scale: f64,
    mutation: Option<Mutation>,
}

impl Ctx {
    fn paths(&self, n: u64) -> u64 {
        ((n as f64 * self.scale).round() as u64).max(100)
    }

    fn cfg(&self, n: u64) -> McConfig {
        McConfig::new(self.paths(n), DESK_DT, self.seed)
    }

    fn model(&self, m: ManifoldModel) -> ManifoldModel {
        match self.mutation {
            Some(Mutation::FlipCurvature) if m.sectional_curvature() != 0.0 => m.with_flipped_curvature_sign(),
            _ => m,
        }
    }

    fn sphere(&self) -> ManifoldModel {
        self.model(ManifoldModel::sphere(1.0).expect("unit sphere"))
    }
}

const TITLES: [&str; 11] = [
    "flat degeneracy",
    "gaussian hessian oracle",
    "ornstein-uhlenbeck damped transport",
    "sphere eigenfunction suite",
    "doubly damped transport oracle",
    "constant potential reductions",
    "non-constant potential consistency",
    "second-order weight scaling",
    "exponential moment diagnostic",
    "representation cross-check",
    "geometry identities",
];

/// Runs the selected criteria in order.
pub fn verify_suite(options: &SuiteOptions, mut progress: impl FnMut(&CriterionReport)) -> SuiteReport {
    let ctx = Ctx {
        seed: options.seed,
        scale: options.path_scale,
        mutation: options.mutation,
    };
    let mut criteria = Vec::new();
    for id in 1..=11u8 {
        if !options.only.is_empty() && !options.only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut log = Log::new();
        let outcome = with_threads(options.threads, || run_criterion(id, &ctx, &mut log));
        if let Err(e) = outcome {
            log.error("estimation error", e);
        }
        let report = CriterionReport {
            id,
            title: TITLES[id as usize - 1].to_string(),
            pass: log.pass,
            details: log.details,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&report);
        criteria.push(report);
    }
    SuiteReport {
        options: options.clone(),
        criteria,
    }
}

fn run_criterion(id: u8, ctx: &Ctx, log: &mut Log) -> Outcome {
    match id {
        1 => flat_degeneracy(ctx, log),
        2 => gaussian_hessian(ctx, log),
        3 => ou_transport(ctx, log),
        4 => sphere_eigenfunction(ctx, log),
        5 => doubly_damped(ctx, log),
        6 => constant_potential(ctx, log),
        7 => potential_consistency(ctx, log),
        8 => nt_scaling(ctx, log),
        9 => exp_moment(ctx, log),
        10 => representation(ctx, log),
        11 => geometry(ctx, log),
        _ => unreachable!("criteria are numbered 1 to 11"),
    }
}

fn e(i: usize) -> Vec3 {
    let mut v = Vec3::zeros();
    v[i] = 1.0;
    v
}

/// Damped and doubly damped transport along one path.
fn transport_along(
    problem: &Problem,
    scheme: Scheme,
    seed: u64,
    path: u64,
    observer: &mut TransportObserver,
) -> Result<PathState, PathError> {
    let steps = (problem.t / DESK_DT).round() as usize;
    let mut driver = BrownianDriver::new(seed, path, scheme.noise_dim(&problem.model), DESK_DT, steps, 1);
    simulate_path(&problem.model, &problem.fields, scheme, problem.start(), &mut driver, &mut [observer as &mut dyn PathObserver])
}

/// Largest deviation of the `n × n` block of `A_t` from `c Id` over `paths` paths.
fn damping_deviation(problem: &Problem, seed: u64, paths: u64, c: f64) -> Result<f64, EstimatorError> {
    let n = problem.model.dim();
    let mut worst: f64 = 0.0;
    for path in 0..paths {
        let mut obs = TransportObserver::damped();
        transport_along(problem, Scheme::FrameBundle, seed, path, &mut obs).map_err(EstimatorError::Path)?;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { c } else { 0.0 };
                worst = worst.max((obs.a[(i, j)] - target).abs());
            }
        }
    }
    Ok(worst)
}

fn flat_degeneracy(ctx: &Ctx, log: &mut Log) -> Outcome {
    let m = ManifoldModel::euclidean(2)?;
    let p = Problem::new(m, ScalarFieldBundle::zero(), Vec3::new(0.3, -0.2, 0.0), 1.0)?;
    let (mut a_dev, mut c_max): (f64, f64) = (0.0, 0.0);
    for path in 0..200 {
        let mut obs = TransportObserver::new(vec![e(0), e(1)], vec![(0, 0), (0, 1), (1, 1)], true);
        transport_along(&p, Scheme::FrameBundle, ctx.seed, path, &mut obs).map_err(EstimatorError::Path)?;
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                a_dev = a_dev.max((obs.a[(i, j)] - target).abs());
            }
        }
        for c in &obs.c {
            c_max = c_max.max(c.abs().max());
        }
    }
    log.check(a_dev == 0.0, format!("A_t = Id exactly on 200 paths (max deviation {a_dev:e})"));
    log.check(c_max == 0.0, format!("C_t = 0 exactly on 200 paths (max |C| {c_max:e})"));
    let r = hessian_elementary(&p, TestFunction::Square(0), &e(0), &e(0), &ctx.cfg(DESK_PATHS))?;
    log.check(
        r.value() == 2.0 && r.error() == 0.0,
        format!("hessian_elementary of x1^2 = {} with stderr {}", r.value(), r.error()),
    );
    Ok(())
}

fn gaussian_hessian(ctx: &Ctx, log: &mut Log) -> Outcome {
    // Hess E[(x + B_t)^2] = Hess (x^2 + t) = 2
    let oracle = 2.0;
    let m = ManifoldModel::euclidean(1)?;
    let p = Problem::new(m, ScalarFieldBundle::zero(), Vec3::new(0.3, 0.0, 0.0), 1.0)?;
    let r = hessian_fk(&p, TestFunction::Square(0), &e(0), &e(0), &ctx.cfg(DESK_PATHS))?;
    log.close("hessian_fk of x^2", r.value(), r.error(), oracle, STDERR_FACTOR * r.error());
    let limit = 0.05 * (DESK_PATHS as f64 / r.n_paths as f64).sqrt();
    log.check(r.error() <= limit, format!("stderr {:.4} <= {limit:.4}", r.error()));
    Ok(())
}

/// `d/dx E[sin(a x + s Z)]` by composite Simpson quadrature over the
/// Gaussian density.
fn mehler_sine_gradient(x: f64, t: f64) -> f64 {
    let a = (-t).exp();
    let s = (0.5 * (1.0 - (-2.0 * t).exp())).sqrt();
    let (lo, hi, n) = (-12.0, 12.0, 4000);
    let h = (hi - lo) / n as f64;
    let g = |z: f64| a * (a * x + s * z).cos() * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = g(lo) + g(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * g(lo + k as f64 * h);
    }
    sum * h / 3.0
}

fn ou_transport(ctx: &Ctx, log: &mut Log) -> Outcome {
    let m = ManifoldModel::euclidean(1)?;
    let fields = ScalarFieldBundle::new(&m, Drift::NegHalfSquare, Potential::Zero)?;
    let (x0, t) = (0.5, 1.0);
    let p = Problem::new(m, fields, Vec3::new(x0, 0.0, 0.0), t)?;
    let dev = damping_deviation(&p, ctx.seed, 100, (-t).exp())?;
    log.check(dev <= TRANSPORT_TOL, format!("A_t = e^-t within {dev:.2e} on 100 paths"));
    let oracle = mehler_sine_gradient(x0, t);
    let r = gradient_pathwise(&p, TestFunction::Sin(0), &e(0), &ctx.cfg(DESK_PATHS))?;
    log.close("gradient_pathwise of sin x", r.value(), r.error(), oracle, STDERR_FACTOR * r.error() + 1e-3);
    Ok(())
}

fn sphere_eigenfunction(ctx: &Ctx, log: &mut Log) -> Outcome {
    let m = ctx.sphere();
    let x0 = Vec3::new(0.0, FRAC_PI_4.sin(), FRAC_PI_4.cos());
    let t = 0.5;
    let p = Problem::new(m, ScalarFieldBundle::zero(), x0, t)?;
    let f = TestFunction::Coord(2);
    let decay = (-t).exp();
    let v = e(0);
    let w = Vec3::new(0.0, FRAC_PI_4.cos(), -FRAC_PI_4.sin());
    let allowance = BIAS_PER_DT * DESK_DT;
    let tol = |se: f64| STDERR_FACTOR * se + allowance;

    let dev = damping_deviation(&p, ctx.seed, 100, (-0.5 * t).exp())?;
    log.check(dev <= TRANSPORT_TOL, format!("A_t = e^(-t/2) Id within {dev:.2e} on 100 paths"));

    let dts = [2.0 * DESK_DT, DESK_DT, 0.5 * DESK_DT];
    let sweep = coupled_sweep(&p, FeynmanKac { f }, &dts, &ctx.cfg(DESK_PATHS))?;
    let value = decay * x0[2];
    for row in &sweep.rows {
        log.close(&format!("feynman_kac dt={:e}", row.dt), row.mean, row.stderr, value, tol(row.stderr));
    }
    for d in &sweep.differences {
        log.note(format!("difference dt={:e} - dt={:e}: {:.3e} ± {:.1e}", d.coarse, d.fine, d.mean, d.stderr));
    }
    let order = sweep.order.unwrap_or(f64::NAN);
    log.check(order >= MIN_ORDER, format!("fitted weak order {order:.3} >= {MIN_ORDER}"));

    let cfg = ctx.cfg(DESK_PATHS);
    let grad = decay * w[2];
    let r = gradient_pathwise(&p, f, &w, &cfg)?;
    log.close("gradient_pathwise", r.value(), r.error(), grad, tol(r.error()));
    let r = gradient_bismut(&p, f, &w, &cfg)?;
    log.close("gradient_bismut", r.value(), r.error(), grad, tol(r.error()));

    let hess = -decay * x0[2] * v.dot(&v);
    let r = hessian_elementary(&p, f, &v, &v, &cfg)?;
    log.close("hessian_elementary", r.value(), r.error(), hess, tol(r.error()));
    let r = hessian_fk(&p, f, &v, &v, &cfg)?;
    log.close("hessian_fk", r.value(), r.error(), hess, tol(r.error()));
    Ok(())
}

fn doubly_damped(ctx: &Ctx, log: &mut Log) -> Outcome {
    let m = ctx.sphere();
    let x0 = Vec3::new(0.0, FRAC_PI_4.sin(), FRAC_PI_4.cos());
    let p = Problem::new(m, ScalarFieldBundle::zero(), x0, 0.5)?;
    let cfg = ctx.cfg(DESK_PATHS).with_scheme(Scheme::GradientSde);
    let v = e(0);
    let w = Vec3::new(0.0, FRAC_PI_4.cos(), -FRAC_PI_4.sin());
    for (name, v1, v2) in [("v1 = v2 = e1", v, v), ("v1 = e1, v2 = polar", v, w)] {
        let r = EstimatorSpec::DoublyDamped { v1, v2, eps: 1e-3 }.run(&p, &cfg)?;
        for (c, axis) in ["x", "y", "z"].iter().enumerate() {
            let (a, b) = (r.stderr[c], r.stderr[3 + c]);
            let combined = (a * a + b * b).sqrt();
            log.close(
                &format!("{name}: E[u C]_{axis} - finite difference"),
                r.mean[6 + c],
                combined,
                0.0,
                STDERR_FACTOR * combined + DOUBLY_DAMPED_ALLOWANCE,
            );
        }
        log.note(format!(
            "{name}: E[u C] = ({:.4}, {:.4}, {:.4})",
            r.mean[0], r.mean[1], r.mean[2]
        ));
    }
    Ok(())
}

fn constant_potential(ctx: &Ctx, log: &mut Log) -> Outcome {
    let m = ctx.sphere();
    let x0 = Vec3::new(0.0, FRAC_PI_4.sin(), FRAC_PI_4.cos());
    let (t, c) = (0.5, 0.7);
    let plain = Problem::new(m, ScalarFieldBundle::zero(), x0, t)?;
    let shifted = Problem::new(m, ScalarFieldBundle::zero().with_potential(Potential::Constant(c)), x0, t)?;
    let cfg = McConfig::new(2000, DESK_DT, ctx.seed);
    let n = 2000;
    let factor = (POTENTIAL_SIGN * c * t).exp();
    let f = TestFunction::Coord(2);
    let hess = EstimatorSpec::HessianFk { f, v1: e(0), v2: e(0) };
    let a = path_samples(&plain, &hess.build(&plain, &cfg)?, &cfg, n)?;
    let b = path_samples(&shifted, &hess.build(&shifted, &cfg)?, &cfg, n)?;
    let (mut weight_max, mut rel): (f64, f64) = (0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (Some(x), Some(y)) = (x, y) else { continue };
        // outputs: hessian, n_term, s_term, potential_term, quadrature_residual
        weight_max = weight_max.max(y[3].abs()).max(y[4].abs());
        rel = rel.max((y[0] - factor * x[0]).abs() / (factor * x[0]).abs().max(f64::MIN_POSITIVE));
    }
    log.check(weight_max == 0.0, format!("potential weight vanishes identically for V = {c} ({weight_max:e})"));
    log.check(
        rel <= 1e-13,
        format!("hessian_fk(V = {c}) = e^(-c t) hessian_fk(V = 0) path by path, max relative deviation {rel:.1e}"),
    );
    let fk = EstimatorSpec::FeynmanKac { f };
    let a = path_samples(&plain, &fk.build(&plain, &cfg)?, &cfg, n)?;
    let b = path_samples(&shifted, &fk.build(&shifted, &cfg)?, &cfg, n)?;
    let mut rel: f64 = 0.0;
    for (x, y) in a.iter().zip(&b) {
        let (Some(x), Some(y)) = (x, y) else { continue };
        rel = rel.max((y[0] - factor * x[0]).abs() / (factor * x[0]).abs().max(f64::MIN_POSITIVE));
    }
    log.check(
        rel <= 1e-13,
        format!("feynman_kac multiplicative in e^(-c t) path by path, max relative deviation {rel:.1e}"),
    );
    Ok(())
}

/// Central second difference of `P_t f` along `dir`, on one shared path
/// per sample.
struct SecondDifference {
    f: TestFunction,
    dir: Vec3,
    step: f64,
}

impl PathFunctional for SecondDifference {
    fn labels(&self) -> Vec<String> {
        vec!["second_difference".into()]
    }

    fn needs(&self) -> TransportNeeds {
        TransportNeeds::default()
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let x0 = sim.problem.x0;
        let mut vals = [0.0; 3];
        for (k, shift) in [1.0, 0.0, -1.0].into_iter().enumerate() {
            let start = PathState::new(&sim.problem.model, &(x0 + self.dir * (shift * self.step)))?;
            let view = sim.run(path, start)?;
            vals[k] = self.f.value(&view.end.x) * (POTENTIAL_SIGN * view.potential_integral).exp();
        }
        out[0] = (vals[0] - 2.0 * vals[1] + vals[2]) / (self.step * self.step);
        Ok(())
    }
}

fn potential_consistency(ctx: &Ctx, log: &mut Log) -> Outcome {
    let m = ManifoldModel::euclidean(2)?;
    let fields = ScalarFieldBundle::new(&m, Drift::Zero, Potential::Cosine { amplitude: 0.2 })?;
    let p = Problem::new(m, fields, Vec3::new(0.5, 0.0, 0.0), 1.0)?;
    let f = TestFunction::Square(0);
    let cfg = ctx.cfg(DESK_PATHS);
    let fd = estimate(&p, &SecondDifference { f, dir: e(0), step: 0.05 }, &cfg)?;
    let r = hessian_fk(&p, f, &e(0), &e(0), &cfg)?;
    let combined = (fd.error().powi(2) + r.error().powi(2)).sqrt();
    let tol = (STDERR_FACTOR * combined).max(0.02 * fd.value().abs());
    log.close("hessian_fk vs finite differences", r.value(), combined, fd.value(), tol);
    let (pot, _) = r.get("potential_term").expect("labelled output");
    log.note(format!(
        "potential term {pot:.4}; with the opposite sign the estimate would be {:.4}",
        r.value() - 2.0 * pot
    ));
    Ok(())
}

fn nt_scaling(ctx: &Ctx, log: &mut Log) -> Outcome {
    let ts = [0.04, 0.08, 0.16, 0.32, 0.64];
    for m in [ManifoldModel::euclidean(2)?, ctx.sphere()] {
        let p = Problem::new(m, ScalarFieldBundle::zero(), m.default_point(), ts[0])?;
        let table = nt_scaling_diagnostic(&p, &ts, &ctx.cfg(DESK_PATHS))?;
        let rows: Vec<String> = table
            .rows
            .iter()
            .map(|r| format!("{}: {:.3}", r.t, r.mean_abs_n))
            .collect();
        log.note(format!("{} E|N_t| {}", m.id(), rows.join(", ")));
        log.close(
            &format!("{} log-log slope", m.id()),
            table.slope,
            0.0,
            NT_SLOPE,
            NT_SLOPE_TOL,
        );
    }
    Ok(())
}

fn exp_moment(ctx: &Ctx, log: &mut Log) -> Outcome {
    let m = ctx.sphere();
    let t = 1.0;
    let a2 = alpha2(m.dim(), m.curvature_sup_norm(), t, m.lower_bound_k());
    let c = c1(t, m.lower_bound_k());
    let c_oracle = ((3.0f64).exp() - 1.0) / 3.0;
    log.check((c - c_oracle).abs() <= 1e-12, format!("C1(1, 1) = {c:.6} = (e^3 - 1)/3"));
    log.check((a2 - 8.02e-4).abs() <= 5e-7, format!("alpha_2 = {a2:.5e}"));
    let p = Problem::new(m, ScalarFieldBundle::zero(), m.default_point(), t)?;
    let report = exp_moment_diagnostic(&p, &[a2], &ctx.cfg(DESK_PATHS))?;
    let row = &report.rows[0];
    log.check(row.mean.is_finite(), format!("E exp(alpha |W2|^2) = {:.6} ± {:.1e}", row.mean, row.stderr));
    log.check(
        row.relative_change <= EXP_MOMENT_CHANGE,
        format!("change under doubling {:.2e} <= {EXP_MOMENT_CHANGE}", row.relative_change),
    );
    log.check(
        row.max_share <= EXP_MOMENT_SHARE,
        format!("largest single-path share {:.2e} <= {EXP_MOMENT_SHARE}", row.max_share),
    );
    log.note(format!("E|W2|^2 = {:.4}", report.mean_w2_squared));
    Ok(())
}

fn representation(ctx: &Ctx, log: &mut Log) -> Outcome {
    let m = ctx.sphere();
    let x0 = Vec3::new(0.0, FRAC_PI_4.sin(), FRAC_PI_4.cos());
    let p = Problem::new(m, ScalarFieldBundle::zero(), x0, 0.5)?;
    let f = TestFunction::Coord(2);
    let cfg = ctx.cfg(DESK_PATHS);
    let a = feynman_kac(&p, f, &cfg.with_scheme(Scheme::FrameBundle))?;
    let b = feynman_kac(&p, f, &cfg.with_scheme(Scheme::GradientSde))?;
    let combined = (a.error().powi(2) + b.error().powi(2)).sqrt();
    log.note(format!("frame bundle {:.6} ± {:.6}", a.value(), a.error()));
    log.note(format!("gradient sde {:.6} ± {:.6}", b.value(), b.error()));
    log.close("difference", a.value() - b.value(), combined, 0.0, STDERR_FACTOR * combined);
    Ok(())
}

fn geometry(ctx: &Ctx, log: &mut Log) -> Outcome {
    for entry in builtin_models() {
        let m = ctx.model(entry.model);
        match verify_connection_with(&m, GEOMETRY_TOL, GEOMETRY_POINTS, ctx.seed) {
            Ok(r) => log.check(
                true,
                format!("{} connection and metric compatibility, max {:.1e}", m.id(), r.max_deviation()),
            ),
            Err(e) => log.error(&m.id(), e),
        }
        let report = curvature_identities(&m, GEOMETRY_POINTS, ctx.seed);
        match report.check(GEOMETRY_TOL, GEOMETRY_TOL) {
            Ok(()) => log.check(
                true,
                format!(
                    "{} curvature symmetries, Bianchi, nabla Ric = 0, Theta = 0, max {:.1e}",
                    m.id(),
                    report.analytic_deviation().max(report.fd_deviation())
                ),
            ),
            Err(e) => log.error(&m.id(), e),
        }
    }
    Ok(())
}
