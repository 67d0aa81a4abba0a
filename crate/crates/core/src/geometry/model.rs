//! Built-in constant-curvature manifolds.
//!
//! Points and tangent vectors are stored in *representation coordinates*:
//! the identity chart for Euclidean space, ambient `R^3` for the sphere and
//! the Poincaré disk for the hyperbolic plane. Every vector type is a padded
//! `Vector3`; components beyond the representation dimension stay zero.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::chart::ConformalChart;
use super::GeometryError;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Points closer than this to the Poincaré disk boundary are rejected.
pub const DISK_BOUNDARY_GUARD: f64 = 1e-6;

/// Relative tolerance used when checking that an input vector is tangent.
pub const TANGENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    Euclidean { dim: usize },
    Sphere { radius: f64 },
    Hyperbolic { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    /// Isometrically embedded; the gradient family `X(x)` is available.
    Extrinsic { ambient_dim: usize },
    IntrinsicChart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldModel {
    kind: ModelKind,
    flip_curvature_sign: bool,
}

impl fmt::Display for ManifoldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

fn parse_radius(rest: &str, id: &str) -> Result<f64, GeometryError> {
    let value = rest
        .strip_prefix("r=")
        .ok_or_else(|| GeometryError::UnknownModel(id.to_string()))?;
    value
        .parse::<f64>()
        .map_err(|_| GeometryError::UnknownModel(id.to_string()))
}

impl ManifoldModel {
    pub fn euclidean(dim: usize) -> Result<Self, GeometryError> {
        if !(1..=3).contains(&dim) {
            return Err(GeometryError::UnknownModel(format!("euclidean:{dim}")));
        }
        Ok(Self {
            kind: ModelKind::Euclidean { dim },
            flip_curvature_sign: false,
        })
    }

    pub fn sphere(radius: f64) -> Result<Self, GeometryError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::UnknownModel(format!("sphere:r={radius}")));
        }
        Ok(Self {
            kind: ModelKind::Sphere { radius },
            flip_curvature_sign: false,
        })
    }

    pub fn hyperbolic(radius: f64) -> Result<Self, GeometryError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::UnknownModel(format!(
                "hyperbolic:r={radius}"
            )));
        }
        Ok(Self {
            kind: ModelKind::Hyperbolic { radius },
            flip_curvature_sign: false,
        })
    }

    /// Resolves a catalog identifier such as `euclidean:2`, `sphere:r=1` or
    /// `hyperbolic:r=1`.
    pub fn from_id(id: &str) -> Result<Self, GeometryError> {
        let id = id.trim();
        let (name, rest) = id
            .split_once(':')
            .ok_or_else(|| GeometryError::UnknownModel(id.to_string()))?;
        match name {
            "euclidean" => {
                let dim = rest
                    .parse::<usize>()
                    .map_err(|_| GeometryError::UnknownModel(id.to_string()))?;
                Self::euclidean(dim)
            }
            "sphere" => Self::sphere(parse_radius(rest, id)?),
            "hyperbolic" => Self::hyperbolic(parse_radius(rest, id)?),
            _ => Err(GeometryError::UnknownModel(id.to_string())),
        }
    }

    pub fn id(&self) -> String {
        match self.kind {
            ModelKind::Euclidean { dim } => format!("euclidean:{dim}"),
            ModelKind::Sphere { radius } => format!("sphere:r={radius}"),
            ModelKind::Hyperbolic { radius } => format!("hyperbolic:r={radius}"),
        }
    }

    /// Mutation hook: negates the Riemann tensor while leaving the Ricci
    /// tensor untouched. Only used to check that the verification battery
    /// notices a wrong curvature sign.
    pub fn with_flipped_curvature_sign(mut self) -> Self {
        self.flip_curvature_sign = true;
        self
    }

    pub fn curvature_sign_flipped(&self) -> bool {
        self.flip_curvature_sign
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Intrinsic dimension `n`.
    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Euclidean { dim } => dim,
            ModelKind::Sphere { .. } | ModelKind::Hyperbolic { .. } => 2,
        }
    }

    /// Number of representation coordinates (ambient dimension for embedded models).
    pub fn coord_dim(&self) -> usize {
        match self.kind {
            ModelKind::Euclidean { dim } => dim,
            ModelKind::Sphere { .. } => 3,
            ModelKind::Hyperbolic { .. } => 2,
        }
    }

    pub fn representation(&self) -> Representation {
        match self.kind {
            ModelKind::Euclidean { dim } => Representation::Extrinsic { ambient_dim: dim },
            ModelKind::Sphere { .. } => Representation::Extrinsic { ambient_dim: 3 },
            ModelKind::Hyperbolic { .. } => Representation::IntrinsicChart,
        }
    }

    pub fn is_extrinsic(&self) -> bool {
        matches!(self.representation(), Representation::Extrinsic { .. })
    }

    /// Constant sectional curvature κ.
    pub fn sectional_curvature(&self) -> f64 {
        match self.kind {
            ModelKind::Euclidean { .. } => 0.0,
            ModelKind::Sphere { radius } => 1.0 / (radius * radius),
            ModelKind::Hyperbolic { radius } => -1.0 / (radius * radius),
        }
    }

    /// `‖R‖_∞`, stored analytically.
    pub fn curvature_sup_norm(&self) -> f64 {
        self.sectional_curvature().abs()
    }

    /// Declared `K` with `Ric − 2 Hess h ≥ −K` for every built-in drift
    /// compatible with this model.
    pub fn lower_bound_k(&self) -> f64 {
        match self.kind {
            ModelKind::Euclidean { .. } => 0.0,
            // height drift: Ric − 2 Hess h = (1 + 2 x₃)/r², smallest at the south pole
            ModelKind::Sphere { radius } => (1.0f64).max(2.0 * radius - 1.0) / (radius * radius),
            ModelKind::Hyperbolic { radius } => 1.0 / (radius * radius),
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Euclidean { .. } => None,
            ModelKind::Sphere { radius } | ModelKind::Hyperbolic { radius } => Some(radius),
        }
    }

    /// A canonical base point: the origin, or the north pole of the sphere.
    pub fn default_point(&self) -> Vec3 {
        match self.kind {
            ModelKind::Sphere { radius } => Vec3::new(0.0, 0.0, radius),
            _ => Vec3::zeros(),
        }
    }

    pub fn in_domain(&self, x: &Vec3) -> bool {
        if !x.iter().all(|c| c.is_finite()) {
            return false;
        }
        match self.kind {
            ModelKind::Euclidean { dim } => x.iter().skip(dim).all(|&c| c == 0.0),
            ModelKind::Sphere { radius } => ((x.norm() - radius) / radius).abs() < 1e-6,
            ModelKind::Hyperbolic { .. } => {
                x[2] == 0.0 && x.norm() < 1.0 - DISK_BOUNDARY_GUARD
            }
        }
    }

    pub fn check_point(&self, x: &Vec3) -> Result<(), GeometryError> {
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(GeometryError::OutsideDomain {
                model: self.id(),
                point: [x[0], x[1], x[2]],
            })
        }
    }

    pub fn check_tangent(&self, x: &Vec3, v: &Vec3) -> Result<(), GeometryError> {
        let scale = v.norm().max(1.0);
        let ok = match self.kind {
            ModelKind::Euclidean { dim } => v.iter().skip(dim).all(|&c| c == 0.0),
            ModelKind::Sphere { radius } => x.dot(v).abs() <= TANGENT_TOL * scale * radius,
            ModelKind::Hyperbolic { .. } => v[2] == 0.0,
        };
        if ok && v.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(GeometryError::NotTangent {
                model: self.id(),
                vector: [v[0], v[1], v[2]],
            })
        }
    }

    /// Logarithm of the conformal factor of the Poincaré chart and its gradient.
    fn poincare_log_factor(radius: f64, x: &Vec3) -> (f64, Vec3) {
        let q = 1.0 - x.norm_squared();
        ((2.0 * radius / q).ln(), x * (2.0 / q))
    }

    /// Metric matrix in representation coordinates, padded with zeros.
    pub fn metric(&self, x: &Vec3) -> Mat3 {
        match self.kind {
            ModelKind::Euclidean { dim } => {
                let mut g = Mat3::zeros();
                for i in 0..dim {
                    g[(i, i)] = 1.0;
                }
                g
            }
            ModelKind::Sphere { .. } => Mat3::identity(),
            ModelKind::Hyperbolic { radius } => {
                let (phi, _) = Self::poincare_log_factor(radius, x);
                let l2 = (2.0 * phi).exp();
                Mat3::from_diagonal(&Vec3::new(l2, l2, 0.0))
            }
        }
    }

    pub fn inner(&self, x: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
        match self.kind {
            ModelKind::Euclidean { .. } | ModelKind::Sphere { .. } => a.dot(b),
            ModelKind::Hyperbolic { radius } => {
                let q = 1.0 - x.norm_squared();
                let l = 2.0 * radius / q;
                l * l * a.dot(b)
            }
        }
    }

    pub fn norm(&self, x: &Vec3, a: &Vec3) -> f64 {
        self.inner(x, a, a).sqrt()
    }

    /// Turns a coordinate covector (e.g. a coordinate gradient) into a tangent vector.
    pub fn raise(&self, x: &Vec3, covector: &Vec3) -> Vec3 {
        match self.kind {
            ModelKind::Euclidean { dim } => {
                let mut v = *covector;
                for i in dim..3 {
                    v[i] = 0.0;
                }
                v
            }
            ModelKind::Sphere { .. } => self.project_tangent(x, covector),
            ModelKind::Hyperbolic { radius } => {
                let q = 1.0 - x.norm_squared();
                let l = 2.0 * radius / q;
                Vec3::new(covector[0], covector[1], 0.0) / (l * l)
            }
        }
    }

    pub fn project_tangent(&self, x: &Vec3, v: &Vec3) -> Vec3 {
        match self.kind {
            ModelKind::Sphere { .. } => {
                let n2 = x.norm_squared();
                v - x * (x.dot(v) / n2)
            }
            ModelKind::Euclidean { dim } => {
                let mut w = *v;
                for i in dim..3 {
                    w[i] = 0.0;
                }
                w
            }
            ModelKind::Hyperbolic { .. } => Vec3::new(v[0], v[1], 0.0),
        }
    }

    /// Nearest point of the model to `x` (radial projection on the sphere).
    pub fn retract(&self, x: &Vec3) -> Vec3 {
        match self.kind {
            ModelKind::Sphere { radius } => x * (radius / x.norm()),
            _ => *x,
        }
    }

    /// Connection coefficients in representation coordinates: the covariant
    /// derivative of a vector field `W` along `v` is `dW(v) + Γ(W, v)`.
    /// Symmetric in its arguments.
    pub fn connection(&self, x: &Vec3, w: &Vec3, v: &Vec3) -> Vec3 {
        match self.kind {
            ModelKind::Euclidean { .. } => Vec3::zeros(),
            // second fundamental form of the round sphere
            ModelKind::Sphere { radius } => x * (w.dot(v) / (radius * radius)),
            ModelKind::Hyperbolic { radius } => {
                let (_, dphi) = Self::poincare_log_factor(radius, x);
                w * dphi.dot(v) + v * dphi.dot(w) - dphi * w.dot(v)
            }
        }
    }

    /// `R(u, v) w = ∇_u ∇_v w − ∇_v ∇_u w − ∇_[u,v] w`. On the unit sphere
    /// `⟨R(u, v) v, u⟩ = |u ∧ v|² > 0`.
    pub fn riemann(&self, x: &Vec3, u: &Vec3, v: &Vec3, w: &Vec3) -> Vec3 {
        let kappa = self.sectional_curvature();
        if kappa == 0.0 {
            return Vec3::zeros();
        }
        let sign = if self.flip_curvature_sign { -1.0 } else { 1.0 };
        (u * self.inner(x, v, w) - v * self.inner(x, u, w)) * (sign * kappa)
    }

    pub fn ricci(&self, x: &Vec3, u: &Vec3, v: &Vec3) -> f64 {
        self.sectional_curvature() * (self.dim() as f64 - 1.0) * self.inner(x, u, v)
    }

    /// `Ric♯`, defined by `⟨Ric♯(u), v⟩ = Ric(u, v)`.
    pub fn ricci_sharp(&self, _x: &Vec3, v: &Vec3) -> Vec3 {
        v * (self.sectional_curvature() * (self.dim() as f64 - 1.0))
    }

    /// `(∇_a Ric♯)(b, c)` read as `⟨(∇_a Ric♯)(b), c⟩`. Identically zero on
    /// constant-curvature models.
    pub fn nabla_ricci(&self, _x: &Vec3, _a: &Vec3, _b: &Vec3, _c: &Vec3) -> f64 {
        0.0
    }

    /// Gradient vector field family `X(x) e` of the isometric embedding.
    pub fn noise_field(&self, x: &Vec3, e: &Vec3) -> Option<Vec3> {
        match self.kind {
            ModelKind::Euclidean { .. } | ModelKind::Sphere { .. } => {
                Some(self.project_tangent(x, e))
            }
            ModelKind::Hyperbolic { .. } => None,
        }
    }

    /// Projects the first `n` columns onto the tangent space and applies
    /// modified Gram-Schmidt in the metric. Remaining columns are zeroed.
    pub fn orthonormalize(&self, x: &Vec3, frame: &Mat3) -> Mat3 {
        let n = self.dim();
        let mut out = Mat3::zeros();
        for a in 0..n {
            let mut col: Vec3 = self.project_tangent(x, &frame.column(a).into_owned());
            for b in 0..a {
                let prev: Vec3 = out.column(b).into_owned();
                col -= prev * self.inner(x, &prev, &col);
            }
            let nrm = self.norm(x, &col);
            out.set_column(a, &(col / nrm));
        }
        out
    }

    /// Orthonormal frame at `x` obtained from the coordinate basis.
    pub fn orthonormal_frame(&self, x: &Vec3) -> Mat3 {
        match self.kind {
            ModelKind::Sphere { .. } => {
                // start from the ambient axis least aligned with x
                let xn = x.normalize();
                let mut idx: Vec<usize> = (0..3).collect();
                idx.sort_by(|&i, &j| xn[i].abs().partial_cmp(&xn[j].abs()).unwrap());
                let mut seed = Mat3::zeros();
                let mut cols = [idx[0], idx[1]];
                cols.sort_unstable();
                for (a, &i) in cols.iter().enumerate() {
                    seed[(i, a)] = 1.0;
                }
                self.orthonormalize(x, &seed)
            }
            _ => self.orthonormalize(x, &Mat3::identity()),
        }
    }

    /// Frame coordinates `uᵀ g w` of a tangent vector `w` for an orthonormal frame `u`.
    pub fn to_frame(&self, x: &Vec3, frame: &Mat3, w: &Vec3) -> Vec3 {
        let n = self.dim();
        let mut out = Vec3::zeros();
        for a in 0..n {
            out[a] = self.inner(x, &frame.column(a).into_owned(), w);
        }
        out
    }

    /// Frame-coordinate vector mapped back to representation coordinates.
    pub fn from_frame(frame: &Mat3, a: &Vec3) -> Vec3 {
        frame * a
    }

    /// Follows the geodesic `s ↦ exp_x(s v)` for `s ∈ [0, 1]`, parallel
    /// transporting `frame` along it. Integrated with classical RK4.
    pub fn geodesic(
        &self,
        x: &Vec3,
        v: &Vec3,
        frame: &Mat3,
    ) -> Result<(Vec3, Mat3), GeometryError> {
        const SUBSTEPS: usize = 64;
        let h = 1.0 / SUBSTEPS as f64;
        let n = self.dim();
        // state: position, velocity, frame columns
        let rhs = |p: &Vec3, q: &Vec3, u: &Mat3| -> (Vec3, Vec3, Mat3) {
            let acc = -self.connection(p, q, q);
            let mut du = Mat3::zeros();
            for a in 0..n {
                let col: Vec3 = u.column(a).into_owned();
                du.set_column(a, &(-self.connection(p, &col, q)));
            }
            (*q, acc, du)
        };
        let (mut p, mut q, mut u) = (*x, *v, *frame);
        for _ in 0..SUBSTEPS {
            let (k1p, k1q, k1u) = rhs(&p, &q, &u);
            let (k2p, k2q, k2u) = rhs(
                &(p + k1p * (0.5 * h)),
                &(q + k1q * (0.5 * h)),
                &(u + k1u * (0.5 * h)),
            );
            let (k3p, k3q, k3u) = rhs(
                &(p + k2p * (0.5 * h)),
                &(q + k2q * (0.5 * h)),
                &(u + k2u * (0.5 * h)),
            );
            let (k4p, k4q, k4u) = rhs(&(p + k3p * h), &(q + k3q * h), &(u + k3u * h));
            p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
            u += (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
            if !self.in_domain(&self.retract(&p)) {
                return Err(GeometryError::OutsideDomain {
                    model: self.id(),
                    point: [p[0], p[1], p[2]],
                });
            }
        }
        let p = self.retract(&p);
        let mut ut = Mat3::zeros();
        for a in 0..n {
            let col: Vec3 = u.column(a).into_owned();
            ut.set_column(a, &self.project_tangent(&p, &col));
        }
        Ok((p, ut))
    }

    /// Intrinsic conformal chart used for finite-difference verification.
    pub fn chart(&self) -> ConformalChart {
        ConformalChart::for_model(self)
    }

    /// Random point in a well-conditioned region of the model.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match self.kind {
            ModelKind::Euclidean { dim } => {
                let mut x = Vec3::zeros();
                for i in 0..dim {
                    x[i] = rng.random_range(-2.0..2.0);
                }
                x
            }
            ModelKind::Sphere { radius } => {
                let g = Vec3::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                );
                g * (radius / g.norm())
            }
            ModelKind::Hyperbolic { .. } => {
                let r = 0.7 * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                Vec3::new(r * a.cos(), r * a.sin(), 0.0)
            }
        }
    }

    /// Random tangent vector at `x` with standard normal frame coordinates.
    pub fn sample_tangent<R: Rng + ?Sized>(&self, x: &Vec3, rng: &mut R) -> Vec3 {
        let frame = self.orthonormal_frame(x);
        let mut a = Vec3::zeros();
        for i in 0..self.dim() {
            a[i] = rng.sample(StandardNormal);
        }
        frame * a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn models() -> Vec<ManifoldModel> {
        vec![
            ManifoldModel::euclidean(1).unwrap(),
            ManifoldModel::euclidean(2).unwrap(),
            ManifoldModel::euclidean(3).unwrap(),
            ManifoldModel::sphere(1.0).unwrap(),
            ManifoldModel::sphere(2.0).unwrap(),
            ManifoldModel::hyperbolic(1.0).unwrap(),
        ]
    }

    #[test]
    fn catalog_ids_round_trip() {
        for m in models() {
            assert_eq!(ManifoldModel::from_id(&m.id()).unwrap(), m);
        }
        assert!(ManifoldModel::from_id("torus:2").is_err());
        assert!(ManifoldModel::from_id("euclidean:4").is_err());
        assert!(ManifoldModel::from_id("sphere:1").is_err());
    }

    #[test]
    fn frames_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in models() {
            for _ in 0..50 {
                let x = m.sample_point(&mut rng);
                let u = m.orthonormal_frame(&x);
                for a in 0..m.dim() {
                    let ca: Vec3 = u.column(a).into_owned();
                    m.check_tangent(&x, &ca).unwrap();
                    for b in 0..m.dim() {
                        let cb: Vec3 = u.column(b).into_owned();
                        let expect = if a == b { 1.0 } else { 0.0 };
                        assert!((m.inner(&x, &ca, &cb) - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_geodesic_is_great_circle() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let x = Vec3::new(0.0, 0.0, 1.0);
        let v = Vec3::new(0.3, 0.0, 0.0);
        let (y, u) = m.geodesic(&x, &v, &m.orthonormal_frame(&x)).unwrap();
        let err = (y - Vec3::new(0.3f64.sin(), 0.0, 0.3f64.cos())).norm();
        assert!(err < 1e-10, "{err:e} {y:?}");
        // the frame stays orthonormal under parallel transport
        let uu = m.orthonormalize(&y, &u);
        assert!((uu - u).norm() < 1e-10);
    }

    #[test]
    fn disk_boundary_is_rejected() {
        let m = ManifoldModel::hyperbolic(1.0).unwrap();
        assert!(m.check_point(&Vec3::new(0.5, 0.0, 0.0)).is_ok());
        assert!(m.check_point(&Vec3::new(1.0 - 1e-7, 0.0, 0.0)).is_err());
    }

    #[test]
    fn tangent_check_on_sphere() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let x = Vec3::new(1.0, 0.0, 0.0);
        assert!(m.check_tangent(&x, &Vec3::new(0.0, 1.0, 0.0)).is_ok());
        assert!(m.check_tangent(&x, &Vec3::new(1.0, 1.0, 0.0)).is_err());
    }
}
