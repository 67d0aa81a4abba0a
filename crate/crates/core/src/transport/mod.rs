//! Damped and doubly damped parallel transport along a simulated path, in
//! moving-frame coordinates.
//!
//! With `u_t` the transported frame, `W_t = u_t A_t u₀⁻¹` and
//! `W_t^(2)(v₁, v₂) = u_t C_t`. The damped equation is linear with
//! coefficient `M = uᵀ(−½Ric♯ + Hess h)u`, integrated by the exponential
//! midpoint rule `A ← exp(½Δt(M_k + M_{k+1})) A`, exact when `M` is constant.
//! The doubly damped drift is integrated by Heun and its curvature
//! martingale term by left-point Itô sums.

use crate::geometry::{theta_h_unchecked, theta_h_vanishes, Mat3, ManifoldModel, ScalarFieldBundle, Vec3};
use crate::pathsim::{PathObserver, PathState, StepInfo};

/// `M = uᵀ g (−½Ric♯ + Hess h) u`, padded with zeros beyond the dimension.
pub fn drift_matrix(model: &ManifoldModel, fields: &ScalarFieldBundle, state: &PathState) -> Mat3 {
    let n = model.dim();
    let x = &state.x;
    let mut m = Mat3::zeros();
    for a in 0..n {
        let ua: Vec3 = state.u.column(a).into_owned();
        for b in a..n {
            let ub: Vec3 = state.u.column(b).into_owned();
            let v = -0.5 * model.ricci(x, &ua, &ub) + fields.hess_h(model, x, &ua, &ub);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

fn is_scalar_block(m: &Mat3, n: usize) -> Option<f64> {
    let d = m[(0, 0)];
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { d } else { 0.0 };
            if m[(i, j)] != expect {
                return None;
            }
        }
    }
    Some(d)
}

/// `exp(½Δt(M₀ + M₁)) A` on the leading `n × n` block.
pub fn damped_step(a: &Mat3, m0: &Mat3, m1: &Mat3, dt: f64, n: usize) -> Mat3 {
    let gen = (m0 + m1) * (0.5 * dt);
    if let Some(d) = is_scalar_block(&gen, n) {
        return a * d.exp();
    }
    let mut e = gen.exp();
    // the zero padding exponentiates to the identity; keep A's padding zero
    for i in n..3 {
        e[(i, i)] = 0.0;
    }
    e * a
}

/// `Θ^h(u a₂)(u a₁)` in frame coordinates.
pub fn theta_h_frame(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    state: &PathState,
    a2: &Vec3,
    a1: &Vec3,
) -> Vec3 {
    let w = theta_h_unchecked(model, fields, &state.x, &(state.u * a2), &(state.u * a1));
    model.to_frame(&state.x, &state.u, &w)
}

/// `R(u ξ, u a₂)(u a₁)` in frame coordinates.
pub fn curvature_frame(model: &ManifoldModel, state: &PathState, xi: &Vec3, a2: &Vec3, a1: &Vec3) -> Vec3 {
    let u = &state.u;
    let w = model.riemann(&state.x, &(u * xi), &(u * a2), &(u * a1));
    model.to_frame(&state.x, u, &w)
}

/// Inputs of one doubly damped step for a fixed pair `(v₁, v₂)`.
pub struct DoublyDampedInput<'a> {
    pub before: &'a PathState,
    pub after: &'a PathState,
    pub a_before: &'a Mat3,
    pub a_after: &'a Mat3,
    pub m_before: &'a Mat3,
    pub m_after: &'a Mat3,
    pub xi: &'a Vec3,
    pub dt: f64,
}

/// Advances `C` by Heun on `M C + Θ^h(A v₂)(A v₁)` plus the left-point
/// curvature term `R(ξ, A_k v₂) A_k v₁`.
pub fn doubly_damped_step(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    input: &DoublyDampedInput<'_>,
    c: &Vec3,
    v1: &Vec3,
    v2: &Vec3,
) -> Vec3 {
    let dt = input.dt;
    let (w1, w2) = (input.a_before * v1, input.a_before * v2);
    let noise = if model.sectional_curvature() == 0.0 {
        Vec3::zeros()
    } else {
        curvature_frame(model, input.before, input.xi, &w2, &w1)
    };
    let (th0, th1) = if theta_h_vanishes(model, fields) {
        (Vec3::zeros(), Vec3::zeros())
    } else {
        (
            theta_h_frame(model, fields, input.before, &w2, &w1),
            theta_h_frame(
                model,
                fields,
                input.after,
                &(input.a_after * v2),
                &(input.a_after * v1),
            ),
        )
    };
    let d0 = input.m_before * c + th0;
    let pred = c + d0 * dt + noise;
    let d1 = input.m_after * pred + th1;
    c + (d0 + d1) * (0.5 * dt) + noise
}

/// Prefix sums on the time grid, one entry per grid point starting at 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightAccumulators {
    pub dt: f64,
    /// `G_i(τ_k) = Σ_{j<k} ⟨ξ_j, A_j v_i⟩`, one array per direction.
    pub g: Vec<Vec<f64>>,
    /// `S(τ_k) = Σ_{j<k} ⟨ξ_j, C_j⟩`, one array per pair.
    pub s: Vec<Vec<f64>>,
    /// `P_V(τ_k) = Σ_{j<k} V(x_j) Δt`.
    pub pv: Vec<f64>,
    /// `V(x_k)`.
    pub v: Vec<f64>,
}

impl WeightAccumulators {
    fn reset(&mut self, dt: f64, directions: usize, pairs: usize, v0: f64, capacity: usize) {
        self.dt = dt;
        let fresh = || {
            let mut a = Vec::with_capacity(capacity + 1);
            a.push(0.0);
            a
        };
        self.g = (0..directions).map(|_| fresh()).collect();
        self.s = (0..pairs).map(|_| fresh()).collect();
        self.pv = fresh();
        self.v = Vec::with_capacity(capacity + 1);
        self.v.push(v0);
    }

    pub fn steps(&self) -> usize {
        self.pv.len() - 1
    }

    /// Linear interpolation of a prefix array at time `s`.
    pub fn at(&self, arr: &[f64], s: f64) -> f64 {
        interpolate(arr, self.dt, s)
    }
}

/// Linear interpolation of grid values `arr[k] ≈ F(kΔt)` at time `s`.
pub fn interpolate(arr: &[f64], dt: f64, s: f64) -> f64 {
    let last = arr.len() - 1;
    let pos = (s / dt).clamp(0.0, last as f64);
    let k = (pos.floor() as usize).min(last);
    if k == last {
        return arr[last];
    }
    let frac = pos - k as f64;
    if frac == 0.0 {
        arr[k]
    } else {
        arr[k] + frac * (arr[k + 1] - arr[k])
    }
}

/// Per-path transport integrator.
///
/// Directions are frame-coordinate vectors at `x₀`; each pair `(i, j)`
/// selects `(v₁, v₂) = (directions[i], directions[j])` for a doubly damped
/// accumulator.
#[derive(Debug, Clone)]
pub struct TransportObserver {
    directions: Vec<Vec3>,
    pairs: Vec<(usize, usize)>,
    record_weights: bool,
    pub a: Mat3,
    pub c: Vec<Vec3>,
    m: Mat3,
    pub weights: WeightAccumulators,
}

impl TransportObserver {
    pub fn new(directions: Vec<Vec3>, pairs: Vec<(usize, usize)>, record_weights: bool) -> Self {
        let c = vec![Vec3::zeros(); pairs.len()];
        Self {
            directions,
            pairs,
            record_weights,
            a: Mat3::identity(),
            c,
            m: Mat3::zeros(),
            weights: WeightAccumulators::default(),
        }
    }

    /// Damped transport only.
    pub fn damped() -> Self {
        Self::new(Vec::new(), Vec::new(), false)
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Capacity hint for the prefix arrays.
    pub fn reserve(&mut self, steps: usize) {
        self.weights.pv.reserve(steps + 1);
    }
}

impl PathObserver for TransportObserver {
    fn start(&mut self, model: &ManifoldModel, fields: &ScalarFieldBundle, state: &PathState) {
        let n = model.dim();
        self.a = Mat3::zeros();
        for i in 0..n {
            self.a[(i, i)] = 1.0;
        }
        self.c.iter_mut().for_each(|c| *c = Vec3::zeros());
        self.m = drift_matrix(model, fields, state);
        if self.record_weights {
            let cap = self.weights.pv.capacity();
            self.weights.reset(
                0.0,
                self.directions.len(),
                self.pairs.len(),
                fields.potential(&state.x),
                cap,
            );
        }
    }

    fn step(&mut self, model: &ManifoldModel, fields: &ScalarFieldBundle, info: &StepInfo<'_>) {
        let n = model.dim();
        let m1 = drift_matrix(model, fields, info.after);
        let a1 = damped_step(&self.a, &self.m, &m1, info.dt, n);
        if self.record_weights {
            let w = &mut self.weights;
            w.dt = info.dt;
            for (g, v) in w.g.iter_mut().zip(&self.directions) {
                let last = *g.last().expect("prefix arrays start at 0");
                g.push(last + info.xi.dot(&(self.a * v)));
            }
            for (s, c) in w.s.iter_mut().zip(&self.c) {
                let last = *s.last().expect("prefix arrays start at 0");
                s.push(last + info.xi.dot(c));
            }
            let last = *w.pv.last().expect("prefix arrays start at 0");
            w.pv.push(last + fields.potential(&info.before.x) * info.dt);
            w.v.push(fields.potential(&info.after.x));
        }
        if !self.pairs.is_empty() {
            let input = DoublyDampedInput {
                before: info.before,
                after: info.after,
                a_before: &self.a,
                a_after: &a1,
                m_before: &self.m,
                m_after: &m1,
                xi: &info.xi,
                dt: info.dt,
            };
            for (c, &(i, j)) in self.c.iter_mut().zip(&self.pairs) {
                *c = doubly_damped_step(
                    model,
                    fields,
                    &input,
                    c,
                    &self.directions[i],
                    &self.directions[j],
                );
            }
        }
        self.a = a1;
        self.m = m1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Drift, Potential};
    use crate::pathsim::{simulate_path, BrownianDriver, Scheme};

    fn run(
        model: &ManifoldModel,
        fields: &ScalarFieldBundle,
        obs: &mut TransportObserver,
        dt: f64,
        steps: usize,
        seed: u64,
    ) -> PathState {
        let s0 = PathState::new(model, &model.default_point()).unwrap();
        let mut d = BrownianDriver::new(seed, 0, model.dim(), dt, steps, 1);
        simulate_path(model, fields, Scheme::FrameBundle, s0, &mut d, &mut [obs]).unwrap()
    }

    #[test]
    fn flat_transport_is_identity() {
        let m = ManifoldModel::euclidean(3).unwrap();
        let f = ScalarFieldBundle::zero();
        let dirs = vec![Vec3::x(), Vec3::y()];
        let mut obs = TransportObserver::new(dirs, vec![(0, 1), (1, 1)], true);
        run(&m, &f, &mut obs, 0.01, 100, 1);
        assert_eq!(obs.a, Mat3::identity());
        assert!(obs.c.iter().all(|c| *c == Vec3::zeros()));
        assert!(obs.weights.s.iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn sphere_damping_is_exponential() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let mut obs = TransportObserver::damped();
        run(&m, &ScalarFieldBundle::zero(), &mut obs, 0.005, 200, 5);
        let expect = (-0.5f64).exp();
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { expect } else { 0.0 };
                assert!((obs.a[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_potential_prefix_is_linear() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let f = ScalarFieldBundle::zero().with_potential(Potential::Constant(0.3));
        let mut obs = TransportObserver::new(vec![Vec3::x()], vec![], true);
        run(&m, &f, &mut obs, 0.01, 100, 2);
        let w = &obs.weights;
        assert_eq!(w.pv.len(), 101);
        assert!((w.pv[100] - 0.3).abs() < 1e-14);
        assert!(w.v.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn doubly_damped_is_bilinear() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let f = ScalarFieldBundle::new(&m, Drift::Height, Potential::Zero).unwrap();
        let a = Vec3::new(0.3, -1.2, 0.0);
        let b = Vec3::new(0.7, 0.4, 0.0);
        let w = Vec3::new(-0.5, 0.9, 0.0);
        let mut obs = TransportObserver::new(vec![a, b, a + b, w], vec![(0, 3), (1, 3), (2, 3)], false);
        run(&m, &f, &mut obs, 0.01, 100, 3);
        assert!((obs.c[0] + obs.c[1] - obs.c[2]).norm() < 1e-10);
    }

    #[test]
    fn interpolation_hits_grid_and_midpoints() {
        let arr = [0.0, 1.0, 4.0];
        assert_eq!(interpolate(&arr, 0.5, 0.5), 1.0);
        assert_eq!(interpolate(&arr, 0.5, 0.75), 2.5);
        assert_eq!(interpolate(&arr, 0.5, 1.0), 4.0);
        assert_eq!(interpolate(&arr, 0.5, 0.0), 0.0);
    }
}
