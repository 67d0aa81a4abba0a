//! Simulation of the h-Brownian motion together with a stochastically
//! parallel-transported orthonormal frame.
//!
//! Two discretisations are provided: the frame-bundle SDE driven by `n`
//! dimensional noise, and, on embedded models, the gradient SDE driven by
//! ambient noise. Both use a Heun predictor-corrector step for the
//! Stratonovich equations, followed by retraction onto the model and
//! re-orthonormalisation of the frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Mat3, ManifoldModel, ScalarFieldBundle, Vec3};

/// Largest relative radial drift tolerated before retraction on the sphere.
pub const PROJ_GUARD: f64 = 1e-2;
pub const PROJ_TOL: f64 = 1e-12;
pub const ORTHO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub x: Vec3,
    /// Columns `0..n` hold an orthonormal frame at `x`; the rest are zero.
    pub u: Mat3,
}

impl PathState {
    /// Starts at `x0` with the model's canonical orthonormal frame.
    pub fn new(model: &ManifoldModel, x0: &Vec3) -> Result<Self, GeometryError> {
        model.check_point(x0)?;
        Ok(Self {
            t: 0.0,
            x: *x0,
            u: model.orthonormal_frame(x0),
        })
    }

    pub fn with_frame(x0: Vec3, u0: Mat3) -> Self {
        Self { t: 0.0, x: x0, u: u0 }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PathError {
    #[error("path left the chart domain at step {step}")]
    ChartExit { step: usize, last: PathState },
    #[error("projection failed at step {step}: radial deviation {deviation:.3e}")]
    ProjectionFailure { step: usize, deviation: f64 },
    #[error("{0}")]
    Geometry(#[from] GeometryError),
    #[error("the gradient SDE needs an embedded model, `{0}` is a chart model")]
    NotExtrinsic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    FrameBundle,
    GradientSde,
}

impl Scheme {
    pub fn id(&self) -> &'static str {
        match self {
            Scheme::FrameBundle => "frame-bundle",
            Scheme::GradientSde => "gradient-sde",
        }
    }

    /// Number of driving Brownian components.
    pub fn noise_dim(&self, model: &ManifoldModel) -> usize {
        match self {
            Scheme::FrameBundle => model.dim(),
            Scheme::GradientSde => model.coord_dim(),
        }
    }
}

/// Brownian increments for one path.
///
/// The stream is keyed by `(seed, path)`; increments are drawn in order, so
/// replaying a path reproduces it bit for bit. Each increment of step `dt`
/// is the sum of `substeps` independent increments of step `dt / substeps`,
/// which couples runs at different step sizes that share a fine grid.
#[derive(Debug, Clone)]
pub struct BrownianDriver {
    rng: ChaCha8Rng,
    dim: usize,
    dt: f64,
    substeps: usize,
    steps: usize,
    issued: usize,
}

impl BrownianDriver {
    pub fn new(seed: u64, path: u64, dim: usize, dt: f64, steps: usize, substeps: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        Self {
            rng,
            dim,
            dt,
            substeps: substeps.max(1),
            steps,
            issued: 0,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The next increment, `N(0, dt Id)` in the first `dim` components.
    pub fn next_increment(&mut self) -> Vec3 {
        let sd = (self.dt / self.substeps as f64).sqrt();
        let mut db = Vec3::zeros();
        for _ in 0..self.substeps {
            for i in 0..self.dim {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                db[i] += sd * z;
            }
        }
        self.issued += 1;
        db
    }
}

/// Everything an observer sees about one step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<'a> {
    pub index: usize,
    pub dt: f64,
    pub before: &'a PathState,
    pub after: &'a PathState,
    /// Itô increment of the martingale part of `x` in the frame at `before`.
    pub xi: Vec3,
}

pub trait PathObserver {
    fn start(&mut self, _model: &ManifoldModel, _fields: &ScalarFieldBundle, _state: &PathState) {}
    fn step(&mut self, model: &ManifoldModel, fields: &ScalarFieldBundle, info: &StepInfo<'_>);
}

fn transport_frame(model: &ManifoldModel, x: &Vec3, u: &Mat3, dx: &Vec3) -> Mat3 {
    let mut du = Mat3::zeros();
    for a in 0..model.dim() {
        let col: Vec3 = u.column(a).into_owned();
        du.set_column(a, &(-model.connection(x, &col, dx)));
    }
    du
}

fn finish_step(
    model: &ManifoldModel,
    state: &PathState,
    x: Vec3,
    u: Mat3,
    dt: f64,
    step: usize,
) -> Result<PathState, PathError> {
    if let Some(r) = model.radius().filter(|_| model.is_extrinsic()) {
        let dev = (x.norm() - r).abs() / r;
        if !(dev <= PROJ_GUARD) {
            return Err(PathError::ProjectionFailure {
                step,
                deviation: dev,
            });
        }
    }
    let x = model.retract(&x);
    if !model.in_domain(&x) {
        return Err(PathError::ChartExit {
            step,
            last: *state,
        });
    }
    Ok(PathState {
        t: state.t + dt,
        x,
        u: model.orthonormalize(&x, &u),
    })
}

/// One Heun step of `dx = u ∘ dB + ∇h dt`, `du_α = −Γ(u_α, ∘dx)`.
pub fn step_frame_bundle(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    state: &PathState,
    db: &Vec3,
    dt: f64,
) -> Result<PathState, PathError> {
    step_frame_bundle_at(model, fields, state, db, dt, 0)
}

fn step_frame_bundle_at(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    state: &PathState,
    db: &Vec3,
    dt: f64,
    step: usize,
) -> Result<PathState, PathError> {
    let (x, u) = (state.x, state.u);
    let dx0 = u * db + fields.grad_h(model, &x) * dt;
    let du0 = transport_frame(model, &x, &u, &dx0);
    let (xp, up) = (x + dx0, u + du0);
    if !model.is_extrinsic() && !model.in_domain(&xp) {
        return Err(PathError::ChartExit {
            step,
            last: *state,
        });
    }
    let dx1 = up * db + fields.grad_h(model, &xp) * dt;
    let du1 = transport_frame(model, &xp, &up, &dx1);
    let x1 = x + (dx0 + dx1) * 0.5;
    let u1 = u + (du0 + du1) * 0.5;
    finish_step(model, state, x1, u1, dt, step)
}

/// One Heun step of the gradient SDE `dx = X(x) ∘ dB + ∇h dt` with ambient
/// noise, transporting the frame along the resulting increment.
pub fn step_gradient_sde(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    state: &PathState,
    db: &Vec3,
    dt: f64,
) -> Result<PathState, PathError> {
    step_gradient_sde_at(model, fields, state, db, dt, 0)
}

fn step_gradient_sde_at(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    state: &PathState,
    db: &Vec3,
    dt: f64,
    step: usize,
) -> Result<PathState, PathError> {
    if !model.is_extrinsic() {
        return Err(PathError::NotExtrinsic(model.id()));
    }
    let (x, u) = (state.x, state.u);
    let drive = |p: &Vec3| model.project_tangent(p, db) + fields.grad_h(model, p) * dt;
    let dx0 = drive(&x);
    let du0 = transport_frame(model, &x, &u, &dx0);
    let (xp, up) = (x + dx0, u + du0);
    let dx1 = drive(&xp);
    let du1 = transport_frame(model, &xp, &up, &dx1);
    let x1 = x + (dx0 + dx1) * 0.5;
    let u1 = u + (du0 + du1) * 0.5;
    finish_step(model, state, x1, u1, dt, step)
}

/// Itô martingale increment of `x` in frame coordinates at the left point.
fn martingale_increment(model: &ManifoldModel, scheme: Scheme, state: &PathState, db: &Vec3) -> Vec3 {
    match scheme {
        Scheme::FrameBundle => *db,
        Scheme::GradientSde => {
            let mut xi = Vec3::zeros();
            for a in 0..model.dim() {
                xi[a] = state.u.column(a).dot(db);
            }
            xi
        }
    }
}

/// Runs one trajectory of `driver.steps()` steps, calling every observer after
/// each step. Returns the terminal state.
pub fn simulate_path(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    scheme: Scheme,
    start: PathState,
    driver: &mut BrownianDriver,
    observers: &mut [&mut dyn PathObserver],
) -> Result<PathState, PathError> {
    let dt = driver.dt();
    for obs in observers.iter_mut() {
        obs.start(model, fields, &start);
    }
    let mut state = start;
    for k in 0..driver.steps() {
        let db = driver.next_increment();
        let next = match scheme {
            Scheme::FrameBundle => step_frame_bundle_at(model, fields, &state, &db, dt, k)?,
            Scheme::GradientSde => step_gradient_sde_at(model, fields, &state, &db, dt, k)?,
        };
        let info = StepInfo {
            index: k,
            dt,
            before: &state,
            after: &next,
            xi: martingale_increment(model, scheme, &state, &db),
        };
        for obs in observers.iter_mut() {
            obs.step(model, fields, &info);
        }
        state = next;
    }
    Ok(state)
}

/// Records `f(x_t)` at the end of the path.
pub struct TerminalValue<F: Fn(&Vec3) -> f64> {
    f: F,
    pub value: f64,
}

impl<F: Fn(&Vec3) -> f64> TerminalValue<F> {
    pub fn new(f: F) -> Self {
        Self { f, value: f64::NAN }
    }
}

impl<F: Fn(&Vec3) -> f64> PathObserver for TerminalValue<F> {
    fn start(&mut self, _: &ManifoldModel, _: &ScalarFieldBundle, state: &PathState) {
        self.value = (self.f)(&state.x);
    }

    fn step(&mut self, _: &ManifoldModel, _: &ScalarFieldBundle, info: &StepInfo<'_>) {
        self.value = (self.f)(&info.after.x);
    }
}

/// Left-point sum of `V(x_k) Δt`.
#[derive(Debug, Clone, Default)]
pub struct PotentialIntegral {
    pub value: f64,
}

impl PathObserver for PotentialIntegral {
    fn start(&mut self, _: &ManifoldModel, _: &ScalarFieldBundle, _: &PathState) {
        self.value = 0.0;
    }

    fn step(&mut self, _: &ManifoldModel, fields: &ScalarFieldBundle, info: &StepInfo<'_>) {
        self.value += fields.potential(&info.before.x) * info.dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Drift, Potential};

    #[test]
    fn flat_step_is_plain_increment() {
        let m = ManifoldModel::euclidean(2).unwrap();
        let f = ScalarFieldBundle::zero();
        let s = PathState::new(&m, &Vec3::new(0.5, -1.0, 0.0)).unwrap();
        let db = Vec3::new(0.1, 0.2, 0.0);
        let n = step_frame_bundle(&m, &f, &s, &db, 0.01).unwrap();
        assert_eq!(n.x, s.x + db);
        assert_eq!(n.u, s.u);
        let g = step_gradient_sde(&m, &f, &s, &db, 0.01).unwrap();
        assert_eq!(g.x, s.x + db);
    }

    #[test]
    fn sphere_step_stays_on_sphere_with_orthonormal_frame() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let f = ScalarFieldBundle::zero();
        let s = PathState::new(&m, &m.default_point()).unwrap();
        let mut d = BrownianDriver::new(1, 0, 3, 0.01, 1, 1);
        let db = d.next_increment();
        for next in [
            step_gradient_sde(&m, &f, &s, &db, 0.01).unwrap(),
            step_frame_bundle(&m, &f, &s, &Vec3::new(db[0], db[1], 0.0), 0.01).unwrap(),
        ] {
            assert!((next.x.norm() - 1.0).abs() <= PROJ_TOL);
            let g = next.u.transpose() * next.u;
            for a in 0..2 {
                for b in 0..2 {
                    let e = if a == b { 1.0 } else { 0.0 };
                    assert!((g[(a, b)] - e).abs() <= ORTHO_TOL);
                }
                assert!(next.u.column(a).dot(&next.x).abs() <= ORTHO_TOL);
            }
        }
    }

    #[test]
    fn gradient_sde_rejects_chart_models() {
        let m = ManifoldModel::hyperbolic(1.0).unwrap();
        let s = PathState::new(&m, &Vec3::zeros()).unwrap();
        let r = step_gradient_sde(&m, &ScalarFieldBundle::zero(), &s, &Vec3::zeros(), 0.1);
        assert!(matches!(r, Err(PathError::NotExtrinsic(_))));
    }

    #[test]
    fn disk_exit_reports_last_state() {
        let m = ManifoldModel::hyperbolic(1.0).unwrap();
        let s = PathState::new(&m, &Vec3::new(0.99, 0.0, 0.0)).unwrap();
        let r = step_frame_bundle(&m, &ScalarFieldBundle::zero(), &s, &Vec3::new(100.0, 0.0, 0.0), 0.1);
        match r {
            Err(PathError::ChartExit { last, .. }) => assert_eq!(last, s),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn replay_is_bit_identical_and_observers_run() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let f = ScalarFieldBundle::new(&m, Drift::Height, Potential::Constant(0.7)).unwrap();
        let run = || {
            let mut d = BrownianDriver::new(42, 7, 2, 0.01, 50, 1);
            let mut pv = PotentialIntegral::default();
            let mut tv = TerminalValue::new(|x: &Vec3| x[2]);
            let s0 = PathState::new(&m, &m.default_point()).unwrap();
            let end = simulate_path(&m, &f, Scheme::FrameBundle, s0, &mut d, &mut [&mut pv, &mut tv])
                .unwrap();
            (end, pv.value, tv.value)
        };
        let (a, pa, ta) = run();
        let (b, pb, tb) = run();
        assert_eq!(a, b);
        assert_eq!(ta.to_bits(), tb.to_bits());
        assert_eq!(pa, pb);
        assert!((pa - 0.7 * 0.5).abs() < 1e-14);
        assert!((a.t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn substeps_sum_fine_increments() {
        let mut coarse = BrownianDriver::new(3, 1, 2, 0.02, 1, 2);
        let mut fine = BrownianDriver::new(3, 1, 2, 0.01, 2, 1);
        let sum = fine.next_increment() + fine.next_increment();
        let c = coarse.next_increment();
        assert!((c - sum).norm() < 1e-15);
    }

    #[test]
    fn empty_observer_list_advances_time() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let mut d = BrownianDriver::new(0, 0, 1, 0.25, 4, 1);
        let s0 = PathState::new(&m, &Vec3::zeros()).unwrap();
        let end = simulate_path(&m, &ScalarFieldBundle::zero(), Scheme::FrameBundle, s0, &mut d, &mut [])
            .unwrap();
        assert_eq!(end.t, 1.0);
    }
}
