//! Drift potential `h` and zero-order potential `V`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::model::{Mat3, ManifoldModel, ModelKind, Vec3};
use super::GeometryError;

/// The drift potential; the diffusion has generator `½Δ + ∇h·∇`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Drift {
    Zero,
    /// `h(x) = −|x|²/2` on `R^n` (Ornstein-Uhlenbeck drift).
    NegHalfSquare,
    /// `h(x) = x₃`, the ambient height on the sphere.
    Height,
}

impl Drift {
    pub fn from_id(id: &str) -> Result<Self, GeometryError> {
        match id.trim() {
            "zero" => Ok(Drift::Zero),
            "neg-half-square" => Ok(Drift::NegHalfSquare),
            "height" => Ok(Drift::Height),
            other => Err(GeometryError::UnknownField(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Drift::Zero => "zero",
            Drift::NegHalfSquare => "neg-half-square",
            Drift::Height => "height",
        }
    }
}

/// Bounded Hölder potential `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    Zero,
    Constant(f64),
    /// `V(x) = ε cos(x₁)` in representation coordinates.
    Cosine { amplitude: f64 },
}

impl Potential {
    pub fn from_id(id: &str) -> Result<Self, GeometryError> {
        let id = id.trim();
        let bad = || GeometryError::UnknownField(id.to_string());
        if id == "zero" {
            return Ok(Potential::Zero);
        }
        let (name, rest) = id.split_once(':').ok_or_else(bad)?;
        let parse = |key: &str| -> Result<f64, GeometryError> {
            rest.strip_prefix(key)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(bad)
        };
        match name {
            "const" => Ok(Potential::Constant(parse("c=")?)),
            "cos" => Ok(Potential::Cosine {
                amplitude: parse("eps=")?,
            }),
            _ => Err(bad()),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Potential::Zero => "zero".to_string(),
            Potential::Constant(c) => format!("const:c={c}"),
            Potential::Cosine { amplitude } => format!("cos:eps={amplitude}"),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero) || matches!(self, Potential::Constant(c) if *c == 0.0)
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Hölder regularity of `V`; carried as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderData {
    pub exponent: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarFieldBundle {
    drift: Drift,
    potential: Potential,
}

impl ScalarFieldBundle {
    /// Pairs a drift and a potential, rejecting drifts the model does not support.
    pub fn new(
        model: &ManifoldModel,
        drift: Drift,
        potential: Potential,
    ) -> Result<Self, GeometryError> {
        let ok = match drift {
            Drift::Zero => true,
            Drift::NegHalfSquare => matches!(model.kind(), ModelKind::Euclidean { .. }),
            Drift::Height => matches!(model.kind(), ModelKind::Sphere { .. }),
        };
        if !ok {
            return Err(GeometryError::IncompatibleField {
                field: drift.id().to_string(),
                model: model.id(),
            });
        }
        Ok(Self { drift, potential })
    }

    /// `h ≡ 0`, `V ≡ 0`.
    pub fn zero() -> Self {
        Self {
            drift: Drift::Zero,
            potential: Potential::Zero,
        }
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    pub fn drift(&self) -> Drift {
        self.drift
    }

    pub fn potential_kind(&self) -> Potential {
        self.potential
    }

    pub fn h(&self, x: &Vec3) -> f64 {
        match self.drift {
            Drift::Zero => 0.0,
            Drift::NegHalfSquare => -0.5 * x.norm_squared(),
            Drift::Height => x[2],
        }
    }

    fn coord_gradient(&self, x: &Vec3) -> Vec3 {
        match self.drift {
            Drift::Zero => Vec3::zeros(),
            Drift::NegHalfSquare => -x,
            Drift::Height => Vec3::new(0.0, 0.0, 1.0),
        }
    }

    fn coord_hessian(&self) -> Mat3 {
        match self.drift {
            Drift::NegHalfSquare => -Mat3::identity(),
            Drift::Zero | Drift::Height => Mat3::zeros(),
        }
    }

    pub fn grad_h(&self, model: &ManifoldModel, x: &Vec3) -> Vec3 {
        match self.drift {
            Drift::Zero => Vec3::zeros(),
            _ => model.raise(x, &self.coord_gradient(x)),
        }
    }

    /// `Hess h(a, b) = D²h(a, b) − dh(Γ(a, b))`.
    pub fn hess_h(&self, model: &ManifoldModel, x: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
        match self.drift {
            Drift::Zero => 0.0,
            _ => {
                (a.transpose() * self.coord_hessian() * b)[0]
                    - self.coord_gradient(x).dot(&model.connection(x, a, b))
            }
        }
    }

    /// Second covariant derivative of the vector field `∇h`, `∇²(∇h)(a, b)`,
    /// with `a` the outer differentiation direction.
    pub fn second_grad_h(&self, model: &ManifoldModel, x: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
        match self.drift {
            // ∇h is affine in flat coordinates
            Drift::Zero | Drift::NegHalfSquare => Vec3::zeros(),
            Drift::Height => {
                // ∇(∇h) = −(h/r²) Id, so ∇_a of it applied to b is −(dh(a)/r²) b
                let r2 = model.radius().map(|r| r * r).unwrap_or(1.0);
                let dh_a = model.inner(x, &self.grad_h(model, x), a);
                b * (-dh_a / r2)
            }
        }
    }

    /// Supremum of `Hess h(v, v)` over points and unit vectors.
    pub fn hess_sup(&self, model: &ManifoldModel) -> f64 {
        match self.drift {
            Drift::Zero => 0.0,
            Drift::NegHalfSquare => -1.0,
            Drift::Height => 1.0 / model.radius().unwrap_or(1.0),
        }
    }

    /// `ρ^h(x) = sup_{|v|=1} (−½ Ric(v, v) + Hess h(v, v))`.
    pub fn rho(&self, model: &ManifoldModel, x: &Vec3) -> f64 {
        let frame = model.orthonormal_frame(x);
        let n = model.dim();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let ui: Vec3 = frame.column(i).into_owned();
            for j in 0..n {
                let uj: Vec3 = frame.column(j).into_owned();
                m[(i, j)] = -0.5 * model.ricci(x, &ui, &uj) + self.hess_h(model, x, &ui, &uj);
            }
        }
        m.symmetric_eigenvalues().max()
    }

    /// Analytic upper bound `ρ̄ ≥ ρ^h` for the built-in fields.
    pub fn rho_bar(&self, model: &ManifoldModel) -> f64 {
        -0.5 * model.sectional_curvature() * (model.dim() as f64 - 1.0) + self.hess_sup(model)
    }

    pub fn potential(&self, x: &Vec3) -> f64 {
        match self.potential {
            Potential::Zero => 0.0,
            Potential::Constant(c) => c,
            Potential::Cosine { amplitude } => amplitude * x[0].cos(),
        }
    }

    pub fn potential_bound(&self) -> f64 {
        match self.potential {
            Potential::Zero => 0.0,
            Potential::Constant(c) => c.abs(),
            Potential::Cosine { amplitude } => amplitude.abs(),
        }
    }

    pub fn holder(&self) -> HolderData {
        let constant = match self.potential {
            Potential::Zero | Potential::Constant(_) => 0.0,
            Potential::Cosine { amplitude } => amplitude.abs(),
        };
        HolderData {
            exponent: 1.0,
            constant,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for d in [Drift::Zero, Drift::NegHalfSquare, Drift::Height] {
            assert_eq!(Drift::from_id(d.id()).unwrap(), d);
        }
        for p in [
            Potential::Zero,
            Potential::Constant(0.5),
            Potential::Cosine { amplitude: 0.2 },
        ] {
            assert_eq!(Potential::from_id(&p.id()).unwrap(), p);
        }
        assert!(Potential::from_id("cos:amp=1").is_err());
        assert!(Drift::from_id("cubic").is_err());
    }

    #[test]
    fn incompatible_drifts_are_rejected() {
        let s = ManifoldModel::sphere(1.0).unwrap();
        let e = ManifoldModel::euclidean(2).unwrap();
        assert!(ScalarFieldBundle::new(&s, Drift::NegHalfSquare, Potential::Zero).is_err());
        assert!(ScalarFieldBundle::new(&e, Drift::Height, Potential::Zero).is_err());
        assert!(ScalarFieldBundle::new(&s, Drift::Height, Potential::Zero).is_ok());
    }

    #[test]
    fn height_hessian_is_minus_height_times_metric() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let f = ScalarFieldBundle::new(&m, Drift::Height, Potential::Zero).unwrap();
        let x = Vec3::new(0.0, 0.6, 0.8);
        let a = Vec3::new(1.0, 0.0, 0.0);
        let b = Vec3::new(0.0, 0.8, -0.6);
        assert!((f.hess_h(&m, &x, &a, &a) + 0.8).abs() < 1e-15);
        assert!((f.hess_h(&m, &x, &b, &b) + 0.8).abs() < 1e-15);
        assert!(f.hess_h(&m, &x, &a, &b).abs() < 1e-15);
    }

    #[test]
    fn rho_matches_bound_where_attained() {
        let s = ManifoldModel::sphere(1.0).unwrap();
        let f = ScalarFieldBundle::zero();
        let x = s.default_point();
        assert!((f.rho(&s, &x) - f.rho_bar(&s)).abs() < 1e-12);
        let e = ManifoldModel::euclidean(2).unwrap();
        let ou = ScalarFieldBundle::new(&e, Drift::NegHalfSquare, Potential::Zero).unwrap();
        assert!((ou.rho(&e, &Vec3::new(0.3, 0.1, 0.0)) + 1.0).abs() < 1e-12);
    }
}
