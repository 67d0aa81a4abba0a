//! Closed-form values of `P_t f` and its derivatives, where known.

use hessmc_core::estimators::{TestFunction, POTENTIAL_SIGN};
use hessmc_core::geometry::{Drift, Mat3, ManifoldModel, ModelKind, Potential, Vec3};
use serde::{Deserialize, Serialize};

use crate::config::{EstimatorId, Resolved};

/// Bias allowed per unit of `Δt` for discretised dynamics.
pub const BIAS_PER_DT: f64 = 0.2;
/// Statistical part of every tolerance, in standard errors.
pub const STDERR_FACTOR: f64 = 3.0;

/// `P_t f` as a function of the base point, through second order, in
/// representation coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec3,
    pub hess: Mat3,
    /// Zero when the simulated dynamics are exact in law.
    pub allowance_per_dt: f64,
    pub source: &'static str,
}

impl Jet {
    fn scaled(mut self, c: f64) -> Self {
        self.value *= c;
        self.grad *= c;
        self.hess *= c;
        self
    }

    pub fn gradient(&self, v: &Vec3) -> f64 {
        self.grad.dot(v)
    }

    /// Covariant Hessian `(D²P_t f)(a, b) − dP_t f(Γ(a, b))`.
    pub fn hessian(&self, model: &ManifoldModel, x: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
        (a.transpose() * self.hess * b)[0] - self.grad.dot(&model.connection(x, a, b))
    }
}

fn axis(i: usize, c: f64) -> Vec3 {
    let mut v = Vec3::zeros();
    v[i] = c;
    v
}

fn diag(i: usize, c: f64) -> Mat3 {
    let mut m = Mat3::zeros();
    m[(i, i)] = c;
    m
}

/// The jet of `P_t f` at `x`, when the law of `x_t` is known in closed form.
pub fn jet(
    model: &ManifoldModel,
    drift: Drift,
    potential: Potential,
    f: TestFunction,
    x: &Vec3,
    t: f64,
) -> Option<Jet> {
    let factor = match potential {
        Potential::Zero => 1.0,
        Potential::Constant(c) => (POTENTIAL_SIGN * c * t).exp(),
        Potential::Cosine { .. } => return None,
    };
    if let TestFunction::Const(c) = f {
        return Some(Jet {
            value: c * factor,
            grad: Vec3::zeros(),
            hess: Mat3::zeros(),
            allowance_per_dt: 0.0,
            source: "constant function",
        });
    }
    let jet = match (model.kind(), drift, f) {
        // x_t = x + B_t
        (ModelKind::Euclidean { .. }, Drift::Zero, f) => {
            let (value, g, h) = match f {
                TestFunction::Coord(i) => (x[i], axis(i, 1.0), Mat3::zeros()),
                TestFunction::Square(i) => (x[i] * x[i] + t, axis(i, 2.0 * x[i]), diag(i, 2.0)),
                TestFunction::Sin(i) => {
                    let d = (-0.5 * t).exp();
                    (d * x[i].sin(), axis(i, d * x[i].cos()), diag(i, -d * x[i].sin()))
                }
                TestFunction::Const(_) => unreachable!(),
            };
            Jet {
                value,
                grad: g,
                hess: h,
                allowance_per_dt: 0.0,
                source: "gaussian moments",
            }
        }
        // x_t = a x + s Z with a = e^{-t}, s² = (1 − e^{−2t}) / 2
        (ModelKind::Euclidean { .. }, Drift::NegHalfSquare, f) => {
            let a = (-t).exp();
            let s2 = 0.5 * (-(-2.0 * t).exp_m1());
            let (value, g, h) = match f {
                TestFunction::Coord(i) => (a * x[i], axis(i, a), Mat3::zeros()),
                TestFunction::Square(i) => {
                    let y = a * x[i];
                    (y * y + s2, axis(i, 2.0 * a * y), diag(i, 2.0 * a * a))
                }
                TestFunction::Sin(i) => {
                    let d = (-0.5 * s2).exp();
                    let y = a * x[i];
                    (d * y.sin(), axis(i, d * a * y.cos()), diag(i, -d * a * a * y.sin()))
                }
                TestFunction::Const(_) => unreachable!(),
            };
            Jet {
                value,
                grad: g,
                hess: h,
                allowance_per_dt: BIAS_PER_DT,
                source: "mehler formula",
            }
        }
        // ambient coordinates are eigenfunctions: ½Δ x_i = −x_i / r²
        (ModelKind::Sphere { radius }, Drift::Zero, TestFunction::Coord(i)) => {
            let d = (-t / (radius * radius)).exp();
            Jet {
                value: d * x[i],
                grad: axis(i, d),
                hess: Mat3::zeros(),
                allowance_per_dt: BIAS_PER_DT,
                source: "spherical eigenfunction",
            }
        }
        _ => return None,
    };
    Some(jet.scaled(factor))
}

/// A reference value for one output of an estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    /// Index into the estimator's outputs.
    pub output: usize,
    pub value: f64,
    /// Bias allowance added to the statistical tolerance.
    pub allowance: f64,
    pub source: String,
}

/// References for a scalar estimator at the resolved horizon.
pub fn references(r: &Resolved) -> Vec<Reference> {
    let Some(jet) = jet(&r.model, r.fields.drift(), r.fields.potential_kind(), r.f, &r.x0, r.t) else {
        return Vec::new();
    };
    let allowance = jet.allowance_per_dt * r.config.dt;
    let one = |output: usize, value: f64| Reference {
        output,
        value,
        allowance,
        source: jet.source.to_string(),
    };
    match r.config.estimator {
        EstimatorId::FeynmanKac => vec![one(0, jet.value)],
        EstimatorId::GradientPathwise | EstimatorId::GradientBismut => vec![one(0, jet.gradient(&r.v1))],
        EstimatorId::HessianElementary | EstimatorId::HessianFk => {
            vec![one(0, jet.hessian(&r.model, &r.x0, &r.v1, &r.v2))]
        }
        EstimatorId::HessianMatrix => {
            let n = r.model.dim();
            let u = r.model.orthonormal_frame(&r.x0);
            let mut out = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    let (ei, ej) = (u.column(i).into_owned(), u.column(j).into_owned());
                    out.push(one(i * n + j, jet.hessian(&r.model, &r.x0, &ei, &ej)));
                }
            }
            out
        }
        EstimatorId::DoublyDampedCheck | EstimatorId::NtScaling | EstimatorId::ExpMoment => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_height_values() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let x = Vec3::new(0.0, 0.6, 0.8);
        let j = jet(&m, Drift::Zero, Potential::Zero, TestFunction::Coord(2), &x, 0.5).unwrap();
        assert!((j.value - 0.485_224_527_770_106_8).abs() < 1e-15);
        let v = Vec3::x();
        assert!((j.hessian(&m, &x, &v, &v) + 0.485_224_527_770_106_8).abs() < 1e-15);
        let w = Vec3::new(0.0, 0.8, -0.6);
        assert!((j.gradient(&w) + 0.363_918_395_827_580_07).abs() < 1e-15);
    }

    #[test]
    fn ou_sine_gradient() {
        // frozen from direct quadrature of the Mehler kernel
        let m = ManifoldModel::euclidean(1).unwrap();
        let x = Vec3::new(0.5, 0.0, 0.0);
        let j = jet(&m, Drift::NegHalfSquare, Potential::Zero, TestFunction::Sin(0), &x, 1.0).unwrap();
        assert!((j.gradient(&Vec3::x()) - 0.291_364_752_073_427_4).abs() < 1e-12);
    }

    #[test]
    fn constant_potential_scales() {
        let m = ManifoldModel::euclidean(1).unwrap();
        let x = Vec3::zeros();
        let f = TestFunction::Square(0);
        let a = jet(&m, Drift::Zero, Potential::Zero, f, &x, 1.0).unwrap();
        let b = jet(&m, Drift::Zero, Potential::Constant(0.5), f, &x, 1.0).unwrap();
        assert!((b.hess[(0, 0)] - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((b.value - a.value * (-0.5f64).exp()).abs() < 1e-15);
        assert!(jet(&m, Drift::Zero, Potential::Cosine { amplitude: 0.1 }, f, &x, 1.0).is_none());
    }
}
