//! Intrinsic conformal charts `g = λ(y)² δ` with closed-form Christoffel symbols.
//!
//! The sphere is simulated in ambient coordinates, but its curvature
//! identities are checked in the stereographic chart. Euclidean space and
//! the Poincaré disk use the same chart for both purposes.

use rand::Rng;

use super::model::{Mat3, ManifoldModel, ModelKind, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChartKind {
    Flat { dim: usize },
    /// Stereographic projection from the south pole, north pole at `y = 0`.
    Stereographic { radius: f64 },
    Poincare { radius: f64 },
}

/// Christoffel symbols `Γ[i][j][k] = Γ^i_{jk}`.
pub type Christoffel = [[[f64; 3]; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalChart {
    kind: ChartKind,
}

impl ConformalChart {
    pub fn for_model(model: &ManifoldModel) -> Self {
        let kind = match model.kind() {
            ModelKind::Euclidean { dim } => ChartKind::Flat { dim },
            ModelKind::Sphere { radius } => ChartKind::Stereographic { radius },
            ModelKind::Hyperbolic { radius } => ChartKind::Poincare { radius },
        };
        Self { kind }
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ChartKind::Flat { dim } => dim,
            _ => 2,
        }
    }

    pub fn curvature(&self) -> f64 {
        match self.kind {
            ChartKind::Flat { .. } => 0.0,
            ChartKind::Stereographic { radius } => 1.0 / (radius * radius),
            ChartKind::Poincare { radius } => -1.0 / (radius * radius),
        }
    }

    /// `log λ(y)` and its coordinate gradient.
    pub fn log_factor(&self, y: &Vec3) -> (f64, Vec3) {
        match self.kind {
            ChartKind::Flat { .. } => (0.0, Vec3::zeros()),
            ChartKind::Stereographic { radius } => {
                let q = 1.0 + y.norm_squared();
                ((2.0 * radius / q).ln(), y * (-2.0 / q))
            }
            ChartKind::Poincare { radius } => {
                let q = 1.0 - y.norm_squared();
                ((2.0 * radius / q).ln(), y * (2.0 / q))
            }
        }
    }

    pub fn metric(&self, y: &Vec3) -> Mat3 {
        let n = self.dim();
        let (phi, _) = self.log_factor(y);
        let l2 = (2.0 * phi).exp();
        let mut g = Mat3::zeros();
        for i in 0..n {
            g[(i, i)] = l2;
        }
        g
    }

    pub fn metric_inverse(&self, y: &Vec3) -> Mat3 {
        let n = self.dim();
        let (phi, _) = self.log_factor(y);
        let l2 = (-2.0 * phi).exp();
        let mut g = Mat3::zeros();
        for i in 0..n {
            g[(i, i)] = l2;
        }
        g
    }

    pub fn inner(&self, y: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
        (a.transpose() * self.metric(y) * b)[0]
    }

    pub fn christoffel(&self, y: &Vec3) -> Christoffel {
        let n = self.dim();
        let (_, dphi) = self.log_factor(y);
        let mut gamma = [[[0.0; 3]; 3]; 3];
        for (i, gi) in gamma.iter_mut().enumerate().take(n) {
            for (j, gij) in gi.iter_mut().enumerate().take(n) {
                for (k, gijk) in gij.iter_mut().enumerate().take(n) {
                    let mut v = 0.0;
                    if i == j {
                        v += dphi[k];
                    }
                    if i == k {
                        v += dphi[j];
                    }
                    if j == k {
                        v -= dphi[i];
                    }
                    *gijk = v;
                }
            }
        }
        gamma
    }

    /// Analytic `R(u, v) w` in chart coordinates for the constant-curvature metric.
    pub fn riemann(&self, y: &Vec3, u: &Vec3, v: &Vec3, w: &Vec3) -> Vec3 {
        let k = self.curvature();
        (u * self.inner(y, v, w) - v * self.inner(y, u, w)) * k
    }

    /// Analytic `Ric♯` as a matrix acting on chart vectors.
    pub fn ricci_sharp(&self, _y: &Vec3) -> Mat3 {
        let n = self.dim();
        let mut m = Mat3::zeros();
        for i in 0..n {
            m[(i, i)] = self.curvature() * (n as f64 - 1.0);
        }
        m
    }

    /// Embedding of chart coordinates into the model's representation coordinates.
    pub fn to_representation(&self, y: &Vec3) -> Vec3 {
        match self.kind {
            ChartKind::Stereographic { radius } => {
                let s = y.norm_squared();
                Vec3::new(2.0 * y[0], 2.0 * y[1], 1.0 - s) * (radius / (1.0 + s))
            }
            _ => *y,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let n = self.dim();
        let bound = match self.kind {
            ChartKind::Flat { .. } => 2.0,
            ChartKind::Stereographic { .. } => 1.5,
            ChartKind::Poincare { .. } => 0.7,
        };
        loop {
            let mut y = Vec3::zeros();
            for i in 0..n {
                y[i] = rng.random_range(-bound..bound);
            }
            if y.norm() <= bound {
                return y;
            }
        }
    }

    pub fn unit(&self, i: usize) -> Vec3 {
        let mut e = Vec3::zeros();
        e[i] = 1.0;
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stereographic_lands_on_sphere() {
        let m = ManifoldModel::sphere(2.0).unwrap();
        let c = m.chart();
        let x = c.to_representation(&Vec3::new(0.4, -1.1, 0.0));
        assert!((x.norm() - 2.0).abs() < 1e-14);
        assert_eq!(c.to_representation(&Vec3::zeros()), Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices() {
        let c = ManifoldModel::hyperbolic(1.0).unwrap().chart();
        let g = c.christoffel(&Vec3::new(0.2, -0.3, 0.0));
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(g[i][j][k], g[i][k][j]);
                }
            }
        }
    }
}
