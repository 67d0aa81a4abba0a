//! Path functionals for the value, gradient and Hessian formulas.

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Vec3};
use crate::pathsim::{PathError, Scheme};
use crate::transport::{interpolate, WeightAccumulators};

use super::engine::{PathFunctional, PathView, Simulator, TransportNeeds};
use super::functions::TestFunction;

/// The semigroup is `E[f(x_t) exp(POTENTIAL_SIGN ∫₀ᵗ V(x_s) ds)]`.
pub const POTENTIAL_SIGN: f64 = -1.0;

fn basis(n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|i| {
            let mut e = Vec3::zeros();
            e[i] = 1.0;
            e
        })
        .collect()
}

/// `W_t v` in representation coordinates, `v` in frame coordinates at `x₀`.
fn damped(view: &PathView<'_>, v: &Vec3) -> Vec3 {
    view.end.u * (view.transport.a * v)
}

/// `W_t^(2)` for pair `p` in representation coordinates.
fn doubly_damped(view: &PathView<'_>, p: usize) -> Vec3 {
    view.end.u * view.transport.c[p]
}

/// `P_t f(x₀) = E[f(x_t) exp(−∫₀ᵗ V)]`.
#[derive(Debug, Clone, Copy)]
pub struct FeynmanKac {
    pub f: TestFunction,
}

impl PathFunctional for FeynmanKac {
    fn labels(&self) -> Vec<String> {
        vec!["value".into()]
    }

    fn needs(&self) -> TransportNeeds {
        TransportNeeds::default()
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let view = sim.run_from_x0(path)?;
        let weight = if view.potential_integral == 0.0 {
            1.0
        } else {
            (POTENTIAL_SIGN * view.potential_integral).exp()
        };
        out[0] = self.f.value(&view.end.x) * weight;
        Ok(())
    }
}

/// `dP_t f(v) = E[df(W_t v)]`. Also reports, per path, whether
/// `|df(W_t v)| ≤ |df|_∞ |v| e^{ρ̄ t}(1 + Δt)` failed.
#[derive(Debug, Clone, Copy)]
pub struct GradientPathwise {
    pub f: TestFunction,
    /// Frame coordinates at `x₀`.
    pub v: Vec3,
}

impl PathFunctional for GradientPathwise {
    fn labels(&self) -> Vec<String> {
        vec!["gradient".into(), "bound_violation".into()]
    }

    fn needs(&self) -> TransportNeeds {
        TransportNeeds::default()
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let p = *sim.problem;
        let dt = sim.cfg.dt;
        let view = sim.run_from_x0(path)?;
        let g = self.f.df(&view.end.x, &damped(&view, &self.v));
        out[0] = g;
        out[1] = match self.f.df_sup(&p.model) {
            Some(sup) => {
                let bound = sup * self.v.norm() * (p.fields.rho_bar(&p.model) * p.t).exp() * (1.0 + dt);
                if g.abs() > bound {
                    1.0
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        Ok(())
    }
}

/// `dP_t f(v) = E[f(x_t) (2/t) ∫₀^{t/2} ⟨dM_s, W_s v⟩]`.
#[derive(Debug, Clone, Copy)]
pub struct GradientBismut {
    pub f: TestFunction,
    pub v: Vec3,
}

impl PathFunctional for GradientBismut {
    fn labels(&self) -> Vec<String> {
        vec!["gradient".into()]
    }

    fn needs(&self) -> TransportNeeds {
        TransportNeeds {
            directions: vec![self.v],
            pairs: vec![],
            weights: true,
        }
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let t = sim.problem.t;
        let view = sim.run_from_x0(path)?;
        let w = &view.transport.weights;
        out[0] = self.f.value(&view.end.x) * (2.0 / t) * w.at(&w.g[0], 0.5 * t);
        Ok(())
    }
}

/// `Hess P_t f(v₂, v₁) = E[∇df(W_t v₂, W_t v₁)] + E[df(W_t^(2)(v₁, v₂))]`.
#[derive(Debug, Clone, Copy)]
pub struct HessianElementary {
    pub f: TestFunction,
    pub v1: Vec3,
    pub v2: Vec3,
}

impl PathFunctional for HessianElementary {
    fn labels(&self) -> Vec<String> {
        vec![
            "hessian".into(),
            "second_order_term".into(),
            "first_order_term".into(),
            "abs_w2".into(),
        ]
    }

    fn needs(&self) -> TransportNeeds {
        TransportNeeds {
            directions: vec![self.v1, self.v2],
            pairs: vec![(0, 1)],
            weights: false,
        }
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let model = sim.problem.model;
        let view = sim.run_from_x0(path)?;
        let x = view.end.x;
        let (w1, w2) = (damped(&view, &self.v1), damped(&view, &self.v2));
        let second = self.f.nabla_df(&model, &x, &w2, &w1);
        let w2nd = doubly_damped(&view, 0);
        let first = self.f.df(&x, &w2nd);
        out[0] = second + first;
        out[1] = second;
        out[2] = first;
        out[3] = model.norm(&x, &w2nd);
        Ok(())
    }
}

/// Per-path pieces of the second order Feynman-Kac formula.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FkTerms {
    /// `N_t`.
    pub n: f64,
    /// `(2/t) S(t/2)`.
    pub s: f64,
    /// `∫₀ᵗ 𝕍_{t−r,t} (N_{t−r} + (2/(t−r)) S((t−r)/2)) dr` on the graded mesh.
    pub integral: f64,
    /// Graded-mesh minus uniform-grid value of the same integral.
    pub residual: f64,
}

/// Share of the horizon near `r = t` integrated on the graded mesh.
pub const GRADED_FRACTION: f64 = 0.1;

/// Evaluates the weights from the prefix arrays of one path. `i`, `j` index
/// the directions `v₁`, `v₂`; `p` the pair `(v₁, v₂)`.
pub fn fk_terms(w: &WeightAccumulators, t: f64, i: usize, j: usize, p: usize) -> FkTerms {
    let dt = w.dt;
    let (g1, g2, sa) = (&w.g[i], &w.g[j], &w.s[p]);
    let n_at = |s: f64| {
        4.0 / (s * s) * (interpolate(g1, dt, s) - interpolate(g1, dt, 0.5 * s)) * interpolate(g2, dt, 0.5 * s)
    };
    let s_at = |s: f64| 2.0 / s * interpolate(sa, dt, 0.5 * s);
    let mut terms = FkTerms {
        n: n_at(t),
        s: s_at(t),
        ..FkTerms::default()
    };
    let v0 = w.v[0];
    if w.v.iter().all(|&v| v == v0) {
        // 𝕍 vanishes identically
        return terms;
    }
    let pv_t = *w.pv.last().expect("prefix arrays start at 0");
    // integrand in s = t − r; F(0) = 0 because V(x_0) − V(x₀) = 0
    let integrand = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let dv = interpolate(&w.v, dt, s) - v0;
        if dv == 0.0 {
            return 0.0;
        }
        let tail = (pv_t - interpolate(&w.pv, dt, s)) - v0 * (t - s);
        dv * (-tail).exp() * (n_at(s) + s_at(s))
    };
    let m = w.steps();
    let k_star = ((GRADED_FRACTION * m as f64).round() as usize).clamp(1, m);
    let grid: Vec<f64> = (0..=m).map(|k| integrand(k as f64 * dt)).collect();
    let trap = |lo: usize, hi: usize| -> f64 {
        if hi <= lo {
            return 0.0;
        }
        dt * (0.5 * grid[lo] + grid[lo + 1..hi].iter().sum::<f64>() + 0.5 * grid[hi])
    };
    let outer = trap(k_star, m);
    let uniform_inner = trap(0, k_star);
    // quadratically graded nodes on [0, s*], denser towards s = 0
    let s_star = k_star as f64 * dt;
    let nodes = 4 * k_star;
    let mut graded_inner = 0.0;
    let mut prev_s = 0.0;
    let mut prev_f = 0.0;
    for q in 1..=nodes {
        let frac = q as f64 / nodes as f64;
        let s = s_star * frac * frac;
        let f = if q == nodes { grid[k_star] } else { integrand(s) };
        graded_inner += 0.5 * (s - prev_s) * (f + prev_f);
        prev_s = s;
        prev_f = f;
    }
    terms.integral = outer + graded_inner;
    terms.residual = graded_inner - uniform_inner;
    terms
}

/// The second order Feynman-Kac formula; needs no derivatives of `f`.
#[derive(Debug, Clone, Copy)]
pub struct HessianFk {
    pub f: TestFunction,
    pub v1: Vec3,
    pub v2: Vec3,
}

impl PathFunctional for HessianFk {
    fn labels(&self) -> Vec<String> {
        vec![
            "hessian".into(),
            "n_term".into(),
            "s_term".into(),
            "potential_term".into(),
            "quadrature_residual".into(),
        ]
    }

    fn needs(&self) -> TransportNeeds {
        TransportNeeds {
            directions: vec![self.v1, self.v2],
            pairs: vec![(0, 1)],
            weights: true,
        }
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let t = sim.problem.t;
        let view = sim.run_from_x0(path)?;
        let w = &view.transport.weights;
        let terms = fk_terms(w, t, 0, 1, 0);
        let pre = (POTENTIAL_SIGN * w.v[0] * t).exp() * self.f.value(&view.end.x);
        out[1] = pre * terms.n;
        out[2] = pre * terms.s;
        out[3] = -pre * terms.integral;
        out[4] = -pre * terms.residual;
        out[0] = pre * (terms.n + terms.s - terms.integral);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMethod {
    Elementary,
    FeynmanKac,
}

/// Full Hessian matrix in the frame at `x₀`, entry `(i, j)` being the
/// estimate with `v₁ = e_i`, `v₂ = e_j`, all pairs on the same paths. The
/// trailing outputs are the antisymmetric parts `H_ij − H_ji`, `i < j`.
#[derive(Debug, Clone, Copy)]
pub struct HessianMatrix {
    pub f: TestFunction,
    pub method: HessianMethod,
    pub dim: usize,
}

impl PathFunctional for HessianMatrix {
    fn labels(&self) -> Vec<String> {
        let n = self.dim;
        let mut l: Vec<String> = (0..n * n).map(|k| format!("h{}{}", k / n + 1, k % n + 1)).collect();
        for i in 0..n {
            for j in i + 1..n {
                l.push(format!("asym{}{}", i + 1, j + 1));
            }
        }
        l
    }

    fn shape(&self) -> (usize, usize) {
        (self.dim, self.dim)
    }

    fn needs(&self) -> TransportNeeds {
        let n = self.dim;
        TransportNeeds {
            directions: basis(n),
            pairs: (0..n * n).map(|k| (k / n, k % n)).collect(),
            weights: self.method == HessianMethod::FeynmanKac,
        }
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let n = self.dim;
        let (model, t) = (sim.problem.model, sim.problem.t);
        let view = sim.run_from_x0(path)?;
        let x = view.end.x;
        let e = basis(n);
        let mut h = Mat3::zeros();
        match self.method {
            HessianMethod::Elementary => {
                let w: Vec<Vec3> = e.iter().map(|v| damped(&view, v)).collect();
                for i in 0..n {
                    for j in 0..n {
                        h[(i, j)] = self.f.nabla_df(&model, &x, &w[j], &w[i])
                            + self.f.df(&x, &doubly_damped(&view, i * n + j));
                    }
                }
            }
            HessianMethod::FeynmanKac => {
                let wts = &view.transport.weights;
                let pre = (POTENTIAL_SIGN * wts.v[0] * t).exp() * self.f.value(&x);
                for i in 0..n {
                    for j in 0..n {
                        let terms = fk_terms(wts, t, i, j, i * n + j);
                        h[(i, j)] = pre * (terms.n + terms.s - terms.integral);
                    }
                }
            }
        }
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                out[k] = h[(i, j)];
                k += 1;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                out[k] = h[(i, j)] - h[(j, i)];
                k += 1;
            }
        }
        Ok(())
    }
}

/// `E|N_t|` for `v₁ = v₂ = e₁`.
#[derive(Debug, Clone, Copy)]
pub struct NtWeight;

impl PathFunctional for NtWeight {
    fn labels(&self) -> Vec<String> {
        vec!["abs_n".into(), "n".into()]
    }

    fn needs(&self) -> TransportNeeds {
        TransportNeeds {
            directions: vec![Vec3::x()],
            pairs: vec![],
            weights: true,
        }
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let t = sim.problem.t;
        let view = sim.run_from_x0(path)?;
        let w = &view.transport.weights;
        let g = &w.g[0];
        let n = 4.0 / (t * t) * (w.at(g, t) - w.at(g, 0.5 * t)) * w.at(g, 0.5 * t);
        out[0] = n.abs();
        out[1] = n;
        Ok(())
    }
}

/// `exp(α |W_t^(2)|²)` for each `α`, with `|W^(2)|² = Σ_ij |W^(2)(e_i, e_j)|²`.
#[derive(Debug, Clone)]
pub struct ExpMoment {
    pub alphas: Vec<f64>,
    pub dim: usize,
}

impl PathFunctional for ExpMoment {
    fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.alphas.iter().map(|a| format!("exp_moment:{a:e}")).collect();
        l.push("w2_squared".into());
        l
    }

    fn needs(&self) -> TransportNeeds {
        let n = self.dim;
        TransportNeeds {
            directions: basis(n),
            pairs: (0..n * n).map(|k| (k / n, k % n)).collect(),
            weights: false,
        }
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        let view = sim.run_from_x0(path)?;
        let sq: f64 = view.transport.c.iter().map(|c| c.norm_squared()).sum();
        for (o, a) in out.iter_mut().zip(&self.alphas) {
            *o = (a * sq).exp();
        }
        out[self.alphas.len()] = sq;
        Ok(())
    }
}

/// Compares `W_t^(2)(v₁, v₂)` with the central difference of
/// `s ↦ W_t^{γ(s)}(j(s))` along the geodesic `γ` from `x₀` in direction
/// `v₂`, `j` the parallel field with `j(0) = v₁`, using the same noise.
/// Outputs are ambient 3-vectors: `u_t C_t`, the difference quotient, and
/// their difference. Gradient-SDE scheme only.
#[derive(Debug, Clone, Copy)]
pub struct DoublyDampedCheck {
    pub v1: Vec3,
    pub v2: Vec3,
    pub eps: f64,
}

impl PathFunctional for DoublyDampedCheck {
    fn labels(&self) -> Vec<String> {
        let mut l = Vec::new();
        for name in ["w2", "fd", "diff"] {
            for c in ["x", "y", "z"] {
                l.push(format!("{name}_{c}"));
            }
        }
        l
    }

    fn shape(&self) -> (usize, usize) {
        (1, 3)
    }

    fn needs(&self) -> TransportNeeds {
        TransportNeeds {
            directions: vec![self.v1, self.v2],
            pairs: vec![(0, 1)],
            weights: false,
        }
    }

    fn sample(&self, sim: &mut Simulator<'_>, path: u64, out: &mut [f64]) -> Result<(), PathError> {
        if sim.cfg.scheme != Scheme::GradientSde {
            return Err(PathError::NotExtrinsic(
                "the finite-difference check needs the gradient-SDE scheme".into(),
            ));
        }
        let p = *sim.problem;
        let (w2, x_t) = {
            let view = sim.run_from_x0(path)?;
            (doubly_damped(&view, 0), view.end.x)
        };
        let dir = p.u0 * self.v2;
        let mut ends = [Vec3::zeros(); 2];
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let (xs, us) = p.model.geodesic(&p.x0, &(dir * (sign * self.eps)), &p.u0)?;
            let start = crate::pathsim::PathState::with_frame(xs, us);
            let view = sim.run(path, start)?;
            ends[k] = damped(&view, &self.v1);
        }
        let fd = p.model.project_tangent(&x_t, &((ends[0] - ends[1]) / (2.0 * self.eps)));
        for c in 0..3 {
            out[c] = w2[c];
            out[3 + c] = fd[c];
            out[6 + c] = w2[c] - fd[c];
        }
        Ok(())
    }
}
