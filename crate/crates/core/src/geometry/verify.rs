//! Finite-difference cross-checks of the analytic geometry.
//!
//! Christoffel symbols are compared with the metric derivatives, the
//! Riemann tensor with derivatives of the Christoffel symbols, and `∇Ric♯`
//! with derivatives of the Ricci tensor, all in the model's conformal chart
//! with central differences of step [`FD_STEP`]. Vectors are taken
//! orthonormal in the metric so deviations are scale free.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::chart::{Christoffel, ConformalChart};
use super::fields::ScalarFieldBundle;
use super::model::{Mat3, ManifoldModel, Vec3};
use super::tensors::theta_unchecked;
use super::GeometryError;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-6;
pub const ANALYTIC_TOL: f64 = 1e-10;

type Riemann4 = [[[[f64; 3]; 3]; 3]; 3];

fn unit(i: usize) -> Vec3 {
    let mut e = Vec3::zeros();
    e[i] = 1.0;
    e
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Tracks the largest deviation seen and where it occurred.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Worst {
    pub deviation: f64,
    pub point: [f64; 3],
}

impl Worst {
    fn update(&mut self, dev: f64, y: &Vec3) {
        if dev > self.deviation || dev.is_nan() {
            self.deviation = dev;
            self.point = arr(y);
        }
    }
}

fn christoffel_apply(gamma: &Christoffel, w: &Vec3, v: &Vec3) -> Vec3 {
    let mut out = Vec3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i] += gamma[i][j][k] * w[j] * v[k];
            }
        }
    }
    out
}

fn metric_derivative(chart: &ConformalChart, y: &Vec3, l: usize) -> Mat3 {
    let e = unit(l) * FD_STEP;
    (chart.metric(&(y + e)) - chart.metric(&(y - e))) / (2.0 * FD_STEP)
}

/// Christoffel symbols from central differences of the metric.
pub fn christoffel_from_metric(chart: &ConformalChart, y: &Vec3) -> Christoffel {
    let n = chart.dim();
    let ginv = chart.metric_inverse(y);
    let dg: Vec<Mat3> = (0..n).map(|l| metric_derivative(chart, y, l)).collect();
    let mut gamma = [[[0.0; 3]; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[(i, l)] * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]);
                }
                gamma[i][j][k] = 0.5 * s;
            }
        }
    }
    gamma
}

/// `R^i_{jkl}` with `R(∂_k, ∂_l)∂_j = R^i_{jkl} ∂_i`, from central
/// differences of the analytic Christoffel symbols.
pub fn riemann_from_christoffel(chart: &ConformalChart, y: &Vec3) -> Riemann4 {
    let n = chart.dim();
    let g0 = chart.christoffel(y);
    let dgamma: Vec<Christoffel> = (0..n)
        .map(|k| {
            let e = unit(k) * FD_STEP;
            let gp = chart.christoffel(&(y + e));
            let gm = chart.christoffel(&(y - e));
            let mut d = [[[0.0; 3]; 3]; 3];
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        d[i][j][l] = (gp[i][j][l] - gm[i][j][l]) / (2.0 * FD_STEP);
                    }
                }
            }
            d
        })
        .collect();
    let mut r = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = dgamma[k][i][l][j] - dgamma[l][i][k][j];
                    for m in 0..n {
                        v += g0[i][k][m] * g0[m][l][j] - g0[i][l][m] * g0[m][k][j];
                    }
                    r[i][j][k][l] = v;
                }
            }
        }
    }
    r
}

fn riemann_apply(r: &Riemann4, u: &Vec3, v: &Vec3, w: &Vec3) -> Vec3 {
    let mut out = Vec3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[i] += r[i][j][k][l] * w[j] * u[k] * v[l];
                }
            }
        }
    }
    out
}

/// `Ric♯` as a matrix, from the finite-difference Riemann tensor.
pub fn ricci_sharp_fd(chart: &ConformalChart, y: &Vec3) -> Mat3 {
    let n = chart.dim();
    let r = riemann_from_christoffel(chart, y);
    let mut ric = Mat3::zeros();
    for j in 0..n {
        for l in 0..n {
            for k in 0..n {
                ric[(j, l)] += r[k][j][k][l];
            }
        }
    }
    chart.metric_inverse(y) * ric
}

/// `⟨(∇_a Ric♯)(b), c⟩` where `ric_field` supplies `Ric♯` as a matrix field.
fn nabla_ricci_chart<F: Fn(&Vec3) -> Mat3>(
    chart: &ConformalChart,
    ric_field: F,
    y: &Vec3,
    a: &Vec3,
    b: &Vec3,
    c: &Vec3,
) -> f64 {
    let h = FD_STEP;
    let d_ric = (ric_field(&(y + a * h)) - ric_field(&(y - a * h))) / (2.0 * h);
    let ric = ric_field(y);
    let gamma = chart.christoffel(y);
    let rb = ric * b;
    let cov = d_ric * b + christoffel_apply(&gamma, &rb, a) - ric * christoffel_apply(&gamma, b, a);
    chart.inner(y, &cov, c)
}

fn orthonormal_chart_basis(chart: &ConformalChart, y: &Vec3) -> Vec<Vec3> {
    let (phi, _) = chart.log_factor(y);
    let s = (-phi).exp();
    (0..chart.dim()).map(|i| unit(i) * s).collect()
}

/// Jacobian of the chart-to-representation map, by central differences.
fn chart_jacobian(chart: &ConformalChart, y: &Vec3) -> Mat3 {
    let mut j = Mat3::zeros();
    for k in 0..chart.dim() {
        let e = unit(k) * FD_STEP;
        let col = (chart.to_representation(&(y + e)) - chart.to_representation(&(y - e)))
            / (2.0 * FD_STEP);
        j.set_column(k, &col);
    }
    j
}

fn chart_second_derivative(chart: &ConformalChart, y: &Vec3, j: usize, k: usize) -> Vec3 {
    let h = FD_STEP;
    let (ej, ek) = (unit(j) * h, unit(k) * h);
    (chart.to_representation(&(y + ej + ek)) - chart.to_representation(&(y + ej - ek))
        - chart.to_representation(&(y - ej + ek))
        + chart.to_representation(&(y - ej - ek)))
        / (4.0 * h * h)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectionReport {
    pub model: String,
    pub points: usize,
    /// Analytic Christoffel symbols against `½ g^{il}(∂g)` by finite differences.
    pub christoffel: Worst,
    /// Metric compatibility `∇g = 0` with finite-difference `∂g`.
    pub compatibility: Worst,
    /// Connection used by the simulator against the chart connection pushed
    /// into representation coordinates.
    pub representation: Worst,
}

impl ConnectionReport {
    pub fn max_deviation(&self) -> f64 {
        self.christoffel
            .deviation
            .max(self.compatibility.deviation)
            .max(self.representation.deviation)
    }
}

/// Checks the connection at 100 sampled chart points.
pub fn verify_connection(
    model: &ManifoldModel,
    tolerance: f64,
) -> Result<ConnectionReport, GeometryError> {
    verify_connection_with(model, tolerance, 100, 0x5eed)
}

pub fn verify_connection_with(
    model: &ManifoldModel,
    tolerance: f64,
    n_points: usize,
    seed: u64,
) -> Result<ConnectionReport, GeometryError> {
    let chart = model.chart();
    let n = chart.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConnectionReport {
        model: model.id(),
        points: n_points,
        christoffel: Worst::default(),
        compatibility: Worst::default(),
        representation: Worst::default(),
    };
    for _ in 0..n_points {
        let y = chart.sample(&mut rng);
        let gamma = chart.christoffel(&y);
        let fd = christoffel_from_metric(&chart, &y);
        let g = chart.metric(&y);
        let dg: Vec<Mat3> = (0..n).map(|l| metric_derivative(&chart, &y, l)).collect();
        // deviations are measured on orthonormal vectors
        let basis = orthonormal_chart_basis(&chart, &y);
        for (j, bj) in basis.iter().enumerate() {
            for (k, bk) in basis.iter().enumerate() {
                let diff = christoffel_apply(&gamma, bj, bk) - christoffel_apply(&fd, bj, bk);
                report.christoffel.update(chart.inner(&y, &diff, &diff).sqrt(), &y);
                for (i, bi) in basis.iter().enumerate() {
                    let _ = i;
                    // (∇_{bk} g)(bi, bj)
                    let dgk: Mat3 = dg.iter().enumerate().fold(Mat3::zeros(), |acc, (l, d)| {
                        acc + d * bk[l]
                    });
                    let val = (bi.transpose() * dgk * bj)[0]
                        - (christoffel_apply(&gamma, bi, bk).transpose() * g * bj)[0]
                        - (bi.transpose() * g * christoffel_apply(&gamma, bj, bk))[0];
                    report.compatibility.update(val.abs(), &y);
                }
                let _ = (j, k);
            }
        }
        // simulator connection: dφ(Γ(∂_j, ∂_k)) = ∂_j∂_k φ + Γ_rep(∂_j φ, ∂_k φ)
        let x = chart.to_representation(&y);
        let jac = chart_jacobian(&chart, &y);
        for j in 0..n {
            for k in 0..n {
                let lhs = jac * christoffel_apply(&gamma, &unit(j), &unit(k));
                let dj: Vec3 = jac.column(j).into_owned();
                let dk: Vec3 = jac.column(k).into_owned();
                let rhs = chart_second_derivative(&chart, &y, j, k) + model.connection(&x, &dj, &dk);
                // scale by the metric factor so the comparison is on unit vectors
                let (phi, _) = chart.log_factor(&y);
                let dev = model.norm(&x, &(lhs - rhs)) * (-2.0 * phi).exp();
                report.representation.update(dev, &y);
            }
        }
    }
    for (name, w) in [
        ("christoffel symbols", report.christoffel),
        ("metric compatibility", report.compatibility),
        ("representation connection", report.representation),
    ] {
        if !(w.deviation <= tolerance) {
            return Err(GeometryError::VerificationFailed {
                model: model.id(),
                check: name.to_string(),
                deviation: w.deviation,
                tolerance,
                point: w.point,
            });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub model: String,
    pub points: usize,
    /// `R(u,v)w + R(v,u)w`.
    pub antisymmetry: Worst,
    /// `⟨R(u,v)w, z⟩ + ⟨R(u,v)z, w⟩`.
    pub skew: Worst,
    /// `R(u,v)w + R(v,w)u + R(w,u)v`.
    pub bianchi: Worst,
    /// `⟨Ric♯ u, v⟩ − ⟨u, Ric♯ v⟩`.
    pub ricci_symmetry: Worst,
    /// Analytic chart Riemann tensor against derivatives of Christoffel symbols.
    pub fd_riemann: Worst,
    /// Simulator Riemann tensor against the chart one pushed forward.
    pub representation_riemann: Worst,
    /// Analytic `Ric♯` against the contraction of the finite-difference Riemann tensor.
    pub fd_ricci: Worst,
    /// `∇Ric♯` from differences of the analytic Ricci tensor.
    pub fd_nabla_ricci: Worst,
    /// `∇Ric♯` from differences of the finite-difference Ricci tensor.
    pub fd_nabla_ricci_nested: Worst,
    /// Analytic `Θ`.
    pub theta: Worst,
    /// `Θ` assembled from the nested finite-difference `∇Ric♯`.
    pub fd_theta: Worst,
}

impl CurvatureReport {
    pub fn analytic_deviation(&self) -> f64 {
        [self.antisymmetry, self.skew, self.bianchi, self.ricci_symmetry, self.theta]
            .iter()
            .map(|w| w.deviation)
            .fold(0.0, f64::max)
    }

    pub fn fd_deviation(&self) -> f64 {
        [
            self.fd_riemann,
            self.representation_riemann,
            self.fd_ricci,
            self.fd_nabla_ricci,
            self.fd_nabla_ricci_nested,
            self.fd_theta,
        ]
        .iter()
        .map(|w| w.deviation)
        .fold(0.0, f64::max)
    }

    pub fn check(&self, analytic_tol: f64, fd_tol: f64) -> Result<(), GeometryError> {
        let analytic = [
            ("riemann antisymmetry", self.antisymmetry),
            ("riemann skew symmetry", self.skew),
            ("first bianchi identity", self.bianchi),
            ("ricci symmetry", self.ricci_symmetry),
            ("theta", self.theta),
        ];
        let fd = [
            ("finite-difference riemann", self.fd_riemann),
            ("representation riemann", self.representation_riemann),
            ("finite-difference ricci", self.fd_ricci),
            ("finite-difference nabla ricci", self.fd_nabla_ricci),
            ("nested finite-difference nabla ricci", self.fd_nabla_ricci_nested),
            ("finite-difference theta", self.fd_theta),
        ];
        for (checks, tol) in [(&analytic[..], analytic_tol), (&fd[..], fd_tol)] {
            for (name, w) in checks {
                if !(w.deviation <= tol) {
                    return Err(GeometryError::VerificationFailed {
                        model: self.model.clone(),
                        check: name.to_string(),
                        deviation: w.deviation,
                        tolerance: tol,
                        point: w.point,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Evaluates curvature identities at `n_points` sampled points.
pub fn curvature_identities(model: &ManifoldModel, n_points: usize, seed: u64) -> CurvatureReport {
    let chart = model.chart();
    let n = chart.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = CurvatureReport {
        model: model.id(),
        points: n_points,
        antisymmetry: Worst::default(),
        skew: Worst::default(),
        bianchi: Worst::default(),
        ricci_symmetry: Worst::default(),
        fd_riemann: Worst::default(),
        representation_riemann: Worst::default(),
        fd_ricci: Worst::default(),
        fd_nabla_ricci: Worst::default(),
        fd_nabla_ricci_nested: Worst::default(),
        theta: Worst::default(),
        fd_theta: Worst::default(),
    };
    for _ in 0..n_points {
        // analytic identities in representation coordinates
        let x = model.sample_point(&mut rng);
        let [u, v, w, z] = [0; 4].map(|_| model.sample_tangent(&x, &mut rng));
        let r_uvw = model.riemann(&x, &u, &v, &w);
        rep.antisymmetry
            .update(model.norm(&x, &(r_uvw + model.riemann(&x, &v, &u, &w))), &x);
        rep.skew.update(
            (model.inner(&x, &r_uvw, &z) + model.inner(&x, &model.riemann(&x, &u, &v, &z), &w))
                .abs(),
            &x,
        );
        let b = r_uvw + model.riemann(&x, &v, &w, &u) + model.riemann(&x, &w, &u, &v);
        rep.bianchi.update(model.norm(&x, &b), &x);
        rep.ricci_symmetry.update(
            (model.inner(&x, &model.ricci_sharp(&x, &u), &v)
                - model.inner(&x, &u, &model.ricci_sharp(&x, &v)))
            .abs(),
            &x,
        );
        rep.theta
            .update(theta_unchecked(model, &x, &u, &v, &w).abs(), &x);

        // finite-difference checks in the chart on orthonormal vectors
        let y = chart.sample(&mut rng);
        let basis = orthonormal_chart_basis(&chart, &y);
        let r_fd = riemann_from_christoffel(&chart, &y);
        let xr = chart.to_representation(&y);
        let jac = chart_jacobian(&chart, &y);
        for a in &basis {
            for b in &basis {
                for c in &basis {
                    let d = riemann_apply(&r_fd, a, b, c) - chart.riemann(&y, a, b, c);
                    rep.fd_riemann.update(chart.inner(&y, &d, &d).sqrt(), &y);
                    let pushed = jac * chart.riemann(&y, a, b, c);
                    let rep_r = model.riemann(&xr, &(jac * a), &(jac * b), &(jac * c));
                    rep.representation_riemann
                        .update(model.norm(&xr, &(pushed - rep_r)), &y);
                }
            }
        }
        let ric_fd = ricci_sharp_fd(&chart, &y);
        let ric = chart.ricci_sharp(&y);
        for a in &basis {
            let d = (ric_fd - ric) * a;
            rep.fd_ricci.update(chart.inner(&y, &d, &d).sqrt(), &y);
        }
        let analytic_field = |p: &Vec3| chart.ricci_sharp(p);
        let fd_field = |p: &Vec3| ricci_sharp_fd(&chart, p);
        let nr = |f: &dyn Fn(&Vec3) -> Mat3, a: &Vec3, b: &Vec3, c: &Vec3| {
            nabla_ricci_chart(&chart, f, &y, a, b, c)
        };
        for a in &basis {
            for b in &basis {
                for c in &basis {
                    rep.fd_nabla_ricci.update(nr(&analytic_field, a, b, c).abs(), &y);
                    rep.fd_nabla_ricci_nested.update(nr(&fd_field, a, b, c).abs(), &y);
                    let th = nr(&fd_field, c, a, b) - nr(&fd_field, a, c, b) - nr(&fd_field, b, a, c);
                    rep.fd_theta.update(th.abs(), &y);
                }
            }
        }
        let _ = n;
    }
    rep
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldReport {
    pub model: String,
    pub drift: String,
    pub potential: String,
    pub hess_symmetry: Worst,
    pub grad_fd: Worst,
    pub hess_fd: Worst,
    pub second_grad_fd: Worst,
    /// `max(|V| − V_bound, 0)`.
    pub potential_bound: Worst,
    /// `max(−K − λ_min(Ric − 2 Hess h), 0)`.
    pub ricci_lower_bound: Worst,
}

/// Checks the drift derivatives along geodesics and the declared bounds.
pub fn verify_fields(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    n_points: usize,
    seed: u64,
) -> Result<FieldReport, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = FD_STEP;
    let n = model.dim();
    let k = model.lower_bound_k();
    let mut rep = FieldReport {
        model: model.id(),
        drift: fields.drift().id().to_string(),
        potential: fields.potential_kind().id(),
        hess_symmetry: Worst::default(),
        grad_fd: Worst::default(),
        hess_fd: Worst::default(),
        second_grad_fd: Worst::default(),
        potential_bound: Worst::default(),
        ricci_lower_bound: Worst::default(),
    };
    for _ in 0..n_points {
        let x = model.sample_point(&mut rng);
        let frame = model.orthonormal_frame(&x);
        let [a, b] = [0; 2].map(|_| model.sample_tangent(&x, &mut rng));
        rep.hess_symmetry.update(
            (fields.hess_h(model, &x, &a, &b) - fields.hess_h(model, &x, &b, &a)).abs(),
            &x,
        );
        let v = a / model.norm(&x, &a);
        let (xp, up) = model.geodesic(&x, &(v * eps), &frame)?;
        let (xm, um) = model.geodesic(&x, &(-v * eps), &frame)?;
        let hp = fields.h(&xp);
        let hm = fields.h(&xm);
        let h0 = fields.h(&x);
        let grad = model.inner(&x, &fields.grad_h(model, &x), &v);
        rep.grad_fd.update((grad - (hp - hm) / (2.0 * eps)).abs(), &x);
        let hess = fields.hess_h(model, &x, &v, &v);
        rep.hess_fd
            .update((hess - (hp - 2.0 * h0 + hm) / (eps * eps)).abs(), &x);
        // d/ds Hess h(P_s b, P_s c) = ⟨∇²(∇h)(v, b), c⟩ for parallel b, c
        let bf = model.to_frame(&x, &frame, &b);
        let cf = model.to_frame(&x, &frame, &model.sample_tangent(&x, &mut rng));
        let hp2 = fields.hess_h(model, &xp, &(up * bf), &(up * cf));
        let hm2 = fields.hess_h(model, &xm, &(um * bf), &(um * cf));
        let analytic =
            model.inner(&x, &fields.second_grad_h(model, &x, &v, &(frame * bf)), &(frame * cf));
        rep.second_grad_fd
            .update((analytic - (hp2 - hm2) / (2.0 * eps)).abs(), &x);
        rep.potential_bound.update(
            (fields.potential(&x).abs() - fields.potential_bound()).max(0.0),
            &x,
        );
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let ui: Vec3 = frame.column(i).into_owned();
            for j in 0..n {
                let uj: Vec3 = frame.column(j).into_owned();
                m[(i, j)] = model.ricci(&x, &ui, &uj) - 2.0 * fields.hess_h(model, &x, &ui, &uj);
            }
        }
        let lmin = m.symmetric_eigenvalues().min();
        rep.ricci_lower_bound.update((-k - lmin).max(0.0), &x);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Drift, Potential};

    #[test]
    fn euclidean_connection_is_exact() {
        let m = ManifoldModel::euclidean(3).unwrap();
        let r = verify_connection(&m, 1e-9).unwrap();
        assert_eq!(r.christoffel.deviation, 0.0);
        assert_eq!(r.compatibility.deviation, 0.0);
    }

    #[test]
    fn sphere_and_disk_connections_match_metric() {
        for id in ["sphere:r=1", "hyperbolic:r=1", "sphere:r=2"] {
            let m = ManifoldModel::from_id(id).unwrap();
            let r = verify_connection(&m, FD_TOL).unwrap();
            assert!(r.max_deviation() < FD_TOL, "{id}: {r:?}");
        }
    }

    #[test]
    fn curvature_identities_hold_on_catalog() {
        for entry in crate::geometry::builtin_models() {
            let r = curvature_identities(&entry.model, 200, 4);
            r.check(ANALYTIC_TOL, FD_TOL).unwrap();
        }
    }

    #[test]
    fn flipped_curvature_breaks_representation_check() {
        let m = ManifoldModel::sphere(1.0).unwrap().with_flipped_curvature_sign();
        let r = curvature_identities(&m, 20, 1);
        assert!(r.check(ANALYTIC_TOL, FD_TOL).is_err());
    }

    #[test]
    fn field_derivatives_match_geodesic_differences() {
        let cases = [
            ("euclidean:2", Drift::NegHalfSquare),
            ("sphere:r=1", Drift::Height),
            ("sphere:r=1", Drift::Zero),
            ("hyperbolic:r=1", Drift::Zero),
        ];
        for (id, d) in cases {
            let m = ManifoldModel::from_id(id).unwrap();
            let f = ScalarFieldBundle::new(&m, d, Potential::Cosine { amplitude: 0.2 }).unwrap();
            let r = verify_fields(&m, &f, 100, 9).unwrap();
            assert!(r.hess_symmetry.deviation < 1e-12, "{r:?}");
            assert!(r.grad_fd.deviation < FD_TOL, "{r:?}");
            assert!(r.hess_fd.deviation < FD_TOL, "{r:?}");
            assert!(r.second_grad_fd.deviation < FD_TOL, "{r:?}");
            assert_eq!(r.potential_bound.deviation, 0.0);
            assert!(r.ricci_lower_bound.deviation <= 1e-12, "{r:?}");
        }
    }
}
