//! Manifold models, curvature, and the scalar fields driving the diffusion.

mod chart;
mod fields;
mod model;
mod tensors;
pub mod verify;

use thiserror::Error;

pub use chart::{ChartKind, Christoffel, ConformalChart};
pub use fields::{Drift, HolderData, Potential, ScalarFieldBundle};
pub use model::{
    Mat3, ManifoldModel, ModelKind, Representation, Vec3, DISK_BOUNDARY_GUARD, TANGENT_TOL,
};
pub use tensors::{theta, theta_h, theta_h_vanishes, theta_vector};
pub use tensors::theta_h_unchecked;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unknown model identifier `{0}`")]
    UnknownModel(String),
    #[error("unknown field identifier `{0}`")]
    UnknownField(String),
    #[error("field `{field}` is not defined on model `{model}`")]
    IncompatibleField { field: String, model: String },
    #[error("point {point:?} lies outside the domain of `{model}`")]
    OutsideDomain { model: String, point: [f64; 3] },
    #[error("vector {vector:?} is not tangent for `{model}`")]
    NotTangent { model: String, vector: [f64; 3] },
    #[error("{check} failed on `{model}`: deviation {deviation:.3e} > {tolerance:.1e} at {point:?}")]
    VerificationFailed {
        model: String,
        check: String,
        deviation: f64,
        tolerance: f64,
        point: [f64; 3],
    },
}

/// One entry of the built-in catalog.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub model: ManifoldModel,
    pub drifts: Vec<Drift>,
}

/// The built-in models with the drifts each supports. Every model also
/// accepts the potentials `zero`, `const:c=…` and `cos:eps=…`.
pub fn builtin_models() -> Vec<CatalogEntry> {
    let mut out = Vec::new();
    for dim in 1..=3 {
        out.push(CatalogEntry {
            model: ManifoldModel::euclidean(dim).expect("dimension in range"),
            drifts: vec![Drift::Zero, Drift::NegHalfSquare],
        });
    }
    out.push(CatalogEntry {
        model: ManifoldModel::sphere(1.0).expect("positive radius"),
        drifts: vec![Drift::Zero, Drift::Height],
    });
    out.push(CatalogEntry {
        model: ManifoldModel::hyperbolic(1.0).expect("positive radius"),
        drifts: vec![Drift::Zero],
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_expected_ricci() {
        for entry in builtin_models() {
            let m = &entry.model;
            let x = m.default_point();
            let u = m.orthonormal_frame(&x);
            let e: Vec3 = u.column(0).into_owned();
            let ric = m.ricci_sharp(&x, &e);
            let expected = match m.kind() {
                ModelKind::Euclidean { .. } => 0.0,
                ModelKind::Sphere { .. } => 1.0,
                ModelKind::Hyperbolic { .. } => -1.0,
            };
            assert!((ric - e * expected).norm() < 1e-15, "{}", m.id());
            for d in &entry.drifts {
                ScalarFieldBundle::new(m, *d, Potential::Zero).unwrap();
            }
        }
    }
}
