//! Test functions `f` evaluated in representation coordinates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, ManifoldModel, ModelKind, Vec3};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothness {
    BoundedMeasurable,
    Bc1,
    Bc2,
}

/// Coordinate indices are zero based internally and one based in ids, so
/// `coord:3` is the ambient height `x₃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    Coord(usize),
    Square(usize),
    Sin(usize),
    Const(f64),
}

impl TestFunction {
    pub fn from_id(id: &str) -> Result<Self, EstimatorError> {
        let bad = || EstimatorError::UnknownFunction(id.to_string());
        let (name, arg) = id.trim().split_once(':').ok_or_else(bad)?;
        let index = || -> Result<usize, EstimatorError> {
            match arg.parse::<usize>() {
                Ok(k) if (1..=3).contains(&k) => Ok(k - 1),
                _ => Err(bad()),
            }
        };
        match name {
            "coord" => Ok(TestFunction::Coord(index()?)),
            "square" => Ok(TestFunction::Square(index()?)),
            "sin" => Ok(TestFunction::Sin(index()?)),
            "const" => arg
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(TestFunction::Const)
                .ok_or_else(bad),
            _ => Err(bad()),
        }
    }

    pub fn id(&self) -> String {
        match self {
            TestFunction::Coord(i) => format!("coord:{}", i + 1),
            TestFunction::Square(i) => format!("square:{}", i + 1),
            TestFunction::Sin(i) => format!("sin:{}", i + 1),
            TestFunction::Const(c) => format!("const:{c}"),
        }
    }

    /// Rejects coordinates the model does not have.
    pub fn check(&self, model: &ManifoldModel) -> Result<(), EstimatorError> {
        let idx = match self {
            TestFunction::Coord(i) | TestFunction::Square(i) | TestFunction::Sin(i) => *i,
            TestFunction::Const(_) => 0,
        };
        if idx < model.coord_dim() {
            Ok(())
        } else {
            Err(EstimatorError::UnknownFunction(format!(
                "{} on {}",
                self.id(),
                model.id()
            )))
        }
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        match *self {
            TestFunction::Coord(i) => x[i],
            TestFunction::Square(i) => x[i] * x[i],
            TestFunction::Sin(i) => x[i].sin(),
            TestFunction::Const(c) => c,
        }
    }

    /// Coordinate differential, as a covector.
    pub fn coord_grad(&self, x: &Vec3) -> Vec3 {
        let mut g = Vec3::zeros();
        match *self {
            TestFunction::Coord(i) => g[i] = 1.0,
            TestFunction::Square(i) => g[i] = 2.0 * x[i],
            TestFunction::Sin(i) => g[i] = x[i].cos(),
            TestFunction::Const(_) => {}
        }
        g
    }

    pub fn coord_hess(&self, x: &Vec3) -> Mat3 {
        let mut h = Mat3::zeros();
        match *self {
            TestFunction::Square(i) => h[(i, i)] = 2.0,
            TestFunction::Sin(i) => h[(i, i)] = -x[i].sin(),
            TestFunction::Coord(_) | TestFunction::Const(_) => {}
        }
        h
    }

    /// `df(w)` for a tangent vector `w`.
    pub fn df(&self, x: &Vec3, w: &Vec3) -> f64 {
        self.coord_grad(x).dot(w)
    }

    /// `∇df(a, b) = D²f(a, b) − df(Γ(a, b))`.
    pub fn nabla_df(&self, model: &ManifoldModel, x: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
        (a.transpose() * self.coord_hess(x) * b)[0] - self.coord_grad(x).dot(&model.connection(x, a, b))
    }

    pub fn smoothness(&self, model: &ManifoldModel) -> Smoothness {
        match (self, model.kind()) {
            (TestFunction::Const(_) | TestFunction::Sin(_), _) => Smoothness::Bc2,
            (_, ModelKind::Sphere { .. }) => Smoothness::Bc2,
            (TestFunction::Coord(_), ModelKind::Euclidean { .. }) => Smoothness::Bc2,
            _ => Smoothness::BoundedMeasurable,
        }
    }

    /// `sup |df|` over the model, when finite and known.
    pub fn df_sup(&self, model: &ManifoldModel) -> Option<f64> {
        match (self, model.kind()) {
            (TestFunction::Const(_), _) => Some(0.0),
            (TestFunction::Coord(_) | TestFunction::Sin(_), ModelKind::Euclidean { .. }) => Some(1.0),
            (TestFunction::Coord(_), ModelKind::Sphere { .. }) => Some(1.0),
            (TestFunction::Sin(_), ModelKind::Sphere { .. }) => Some(1.0),
            _ => None,
        }
    }

    /// `sup |∇df|` over the model, when finite and known.
    pub fn hess_sup(&self, model: &ManifoldModel) -> Option<f64> {
        match (self, model.kind()) {
            (TestFunction::Const(_), _) => Some(0.0),
            (TestFunction::Coord(_), ModelKind::Euclidean { .. }) => Some(0.0),
            (TestFunction::Sin(_), ModelKind::Euclidean { .. }) => Some(1.0),
            // ∇dx_i = −(x_i / r²) g
            (TestFunction::Coord(_), ModelKind::Sphere { radius }) => Some(1.0 / radius),
            _ => None,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ids_round_trip() {
        for f in [
            TestFunction::Coord(2),
            TestFunction::Square(0),
            TestFunction::Sin(1),
            TestFunction::Const(1.5),
        ] {
            assert_eq!(TestFunction::from_id(&f.id()).unwrap(), f);
        }
        assert!(TestFunction::from_id("coord:0").is_err());
        assert!(TestFunction::from_id("cube:1").is_err());
    }

    #[test]
    fn derivatives_match_geodesic_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-4;
        for id in ["euclidean:2", "sphere:r=1", "hyperbolic:r=1"] {
            let m = ManifoldModel::from_id(id).unwrap();
            for f in [TestFunction::Coord(0), TestFunction::Square(1), TestFunction::Sin(0)] {
                for _ in 0..50 {
                    let x = m.sample_point(&mut rng);
                    let v = m.sample_tangent(&x, &mut rng);
                    let v = v / m.norm(&x, &v);
                    let u = m.orthonormal_frame(&x);
                    let (xp, _) = m.geodesic(&x, &(v * h), &u).unwrap();
                    let (xm, _) = m.geodesic(&x, &(-v * h), &u).unwrap();
                    let (fp, f0, fm) = (f.value(&xp), f.value(&x), f.value(&xm));
                    assert!((f.df(&x, &v) - (fp - fm) / (2.0 * h)).abs() < 1e-6);
                    let second = (fp - 2.0 * f0 + fm) / (h * h);
                    assert!((f.nabla_df(&m, &x, &v, &v) - second).abs() < 1e-6, "{id} {f}");
                }
            }
        }
    }

    #[test]
    fn height_hessian_on_sphere() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let f = TestFunction::Coord(2);
        let x = Vec3::new(0.0, 0.6, 0.8);
        let v = Vec3::new(1.0, 0.0, 0.0);
        assert!((f.nabla_df(&m, &x, &v, &v) + 0.8).abs() < 1e-15);
    }
}
