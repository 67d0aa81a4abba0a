//! The symmetrised tensor `Θ` built from `∇Ric♯` and its drift-corrected
//! version `Θ^h`.

use super::fields::ScalarFieldBundle;
use super::model::{ManifoldModel, Vec3};
use super::GeometryError;

/// `⟨Θ(v₂) v₁, v₃⟩ = (∇_{v₃}Ric♯)(v₁, v₂) − (∇_{v₁}Ric♯)(v₃, v₂) − (∇_{v₂}Ric♯)(v₁, v₃)`.
pub fn theta(
    model: &ManifoldModel,
    x: &Vec3,
    v1: &Vec3,
    v2: &Vec3,
    v3: &Vec3,
) -> Result<f64, GeometryError> {
    model.check_point(x)?;
    for v in [v1, v2, v3] {
        model.check_tangent(x, v)?;
    }
    Ok(theta_unchecked(model, x, v1, v2, v3))
}

pub fn theta_unchecked(
    model: &ManifoldModel,
    x: &Vec3,
    v1: &Vec3,
    v2: &Vec3,
    v3: &Vec3,
) -> f64 {
    model.nabla_ricci(x, v3, v1, v2)
        - model.nabla_ricci(x, v1, v3, v2)
        - model.nabla_ricci(x, v2, v1, v3)
}

/// The vector `Θ(v₂)(v₁)` dual to [`theta`].
pub fn theta_vector(model: &ManifoldModel, x: &Vec3, v2: &Vec3, v1: &Vec3) -> Vec3 {
    let frame = model.orthonormal_frame(x);
    let mut out = Vec3::zeros();
    for a in 0..model.dim() {
        let ua: Vec3 = frame.column(a).into_owned();
        out += ua * theta_unchecked(model, x, v1, v2, &ua);
    }
    out
}

/// `Θ^h(v₂)(v₁) = ½ Θ(v₂)(v₁) + ∇²(∇h)(v₂, v₁) + R(∇h, v₂) v₁`, vector valued.
pub fn theta_h(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    x: &Vec3,
    v2: &Vec3,
    v1: &Vec3,
) -> Result<Vec3, GeometryError> {
    model.check_point(x)?;
    model.check_tangent(x, v1)?;
    model.check_tangent(x, v2)?;
    Ok(theta_h_unchecked(model, fields, x, v2, v1))
}

pub fn theta_h_unchecked(
    model: &ManifoldModel,
    fields: &ScalarFieldBundle,
    x: &Vec3,
    v2: &Vec3,
    v1: &Vec3,
) -> Vec3 {
    let grad = fields.grad_h(model, x);
    theta_vector(model, x, v2, v1) * 0.5
        + fields.second_grad_h(model, x, v2, v1)
        + model.riemann(x, &grad, v2, v1)
}

/// True when `Θ^h` vanishes identically for this model and drift.
pub fn theta_h_vanishes(model: &ManifoldModel, fields: &ScalarFieldBundle) -> bool {
    use super::fields::Drift;
    match fields.drift() {
        Drift::Zero => true,
        Drift::NegHalfSquare => model.sectional_curvature() == 0.0,
        Drift::Height => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Drift, Potential};

    #[test]
    fn theta_vanishes_on_builtins() {
        for id in ["euclidean:2", "sphere:r=1", "hyperbolic:r=1"] {
            let m = ManifoldModel::from_id(id).unwrap();
            let x = m.default_point();
            let u = m.orthonormal_frame(&x);
            let a: Vec3 = u.column(0).into_owned();
            let b: Vec3 = u.column(1).into_owned();
            assert_eq!(theta(&m, &x, &a, &b, &(a + b)).unwrap(), 0.0);
        }
    }

    #[test]
    fn theta_rejects_non_tangent_input() {
        let m = ManifoldModel::sphere(1.0).unwrap();
        let x = Vec3::new(0.0, 0.0, 1.0);
        let bad = Vec3::new(0.0, 0.0, 1.0);
        let ok = Vec3::new(1.0, 0.0, 0.0);
        assert!(matches!(
            theta(&m, &x, &bad, &ok, &ok),
            Err(GeometryError::NotTangent { .. })
        ));
    }

    #[test]
    fn theta_h_zero_for_flat_quadratic_drift() {
        let m = ManifoldModel::euclidean(3).unwrap();
        let f = ScalarFieldBundle::new(&m, Drift::NegHalfSquare, Potential::Zero).unwrap();
        let x = Vec3::new(0.3, -1.0, 2.0);
        let v = theta_h(&m, &f, &x, &Vec3::new(1.0, 2.0, 3.0), &Vec3::new(0.0, 1.0, 0.0))
            .unwrap();
        assert_eq!(v, Vec3::zeros());
        assert!(theta_h_vanishes(&m, &f));
    }
}
