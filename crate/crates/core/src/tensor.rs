//! Small fixed-size linear algebra: points, 2x2 matrices, and symmetric
//! 2x2 tensors with a closed-form eigen-decomposition.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Relative eigenvalue gap below which a symmetric tensor is treated as
/// isotropic (repeated eigenvalues).
pub const DEGENERATE_REL_GAP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

pub type Point2 = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at polar angle `phi`.
    pub fn unit(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counterclockwise quarter turn `R v`.
    pub fn rot90(self) -> Vec2 {
        Vec2 { x: -self.y, y: self.x }
    }

    /// Clockwise quarter turn `Rᵀ v`.
    pub fn rot90_t(self) -> Vec2 {
        Vec2 { x: self.y, y: -self.x }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2 { x: self.x / n, y: self.y / n }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2 { x: self.x + o.x, y: self.y + o.y }
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2 { x: self.x - o.x, y: self.y - o.y }
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2 { x: -self.x, y: -self.y }
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2 { x: self.x * k, y: self.y * k }
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// General 2x2 matrix, row-major: `[[m11, m12], [m21, m22]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { m11: 1.0, m12: 0.0, m21: 0.0, m22: 1.0 };

    pub fn from_columns(c1: Vec2, c2: Vec2) -> Self {
        Mat2 { m11: c1.x, m12: c2.x, m21: c1.y, m22: c2.y }
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Mat2 { m11: c, m12: -s, m21: s, m22: c }
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2 {
            x: self.m11 * v.x + self.m12 * v.y,
            y: self.m21 * v.x + self.m22 * v.y,
        }
    }

    /// `MᵀM`, symmetric by construction.
    pub fn gram(&self) -> SymTensor2 {
        SymTensor2 {
            a11: self.m11 * self.m11 + self.m21 * self.m21,
            a12: self.m11 * self.m12 + self.m21 * self.m22,
            a22: self.m12 * self.m12 + self.m22 * self.m22,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m11.is_finite() && self.m12.is_finite() && self.m21.is_finite() && self.m22.is_finite()
    }
}

/// Symmetric 2x2 tensor stored by its three independent entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymTensor2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2 { a11: 0.0, a12: 0.0, a22: 0.0 };
    pub const IDENTITY: SymTensor2 = SymTensor2 { a11: 1.0, a12: 0.0, a22: 1.0 };

    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        SymTensor2 { a11, a12, a22 }
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2 {
            x: self.a11 * v.x + self.a12 * v.y,
            y: self.a12 * v.x + self.a22 * v.y,
        }
    }

    /// Quadratic form `⟨v, A v⟩`.
    pub fn quad(&self, v: Vec2) -> f64 {
        self.a11 * v.x * v.x + 2.0 * self.a12 * v.x * v.y + self.a22 * v.y * v.y
    }

    /// Bilinear form `⟨u, A v⟩`.
    pub fn bilinear(&self, u: Vec2, v: Vec2) -> f64 {
        u.dot(self.apply(v))
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    /// Matrix infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (self.a11.abs() + self.a12.abs()).max(self.a12.abs() + self.a22.abs())
    }

    pub fn inverse(&self) -> Option<SymTensor2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(SymTensor2 { a11: self.a22 / det, a12: -self.a12 / det, a22: self.a11 / det })
    }

    pub fn shifted(&self, alpha: f64) -> SymTensor2 {
        SymTensor2 { a11: self.a11 - alpha, a12: self.a12, a22: self.a22 - alpha }
    }

    pub fn scale(&self, k: f64) -> SymTensor2 {
        SymTensor2 { a11: self.a11 * k, a12: self.a12 * k, a22: self.a22 * k }
    }

    pub fn add(&self, o: &SymTensor2) -> SymTensor2 {
        SymTensor2 { a11: self.a11 + o.a11, a12: self.a12 + o.a12, a22: self.a22 + o.a22 }
    }

    /// `Q A Qᵀ` for a general 2x2 `Q`.
    pub fn congruence(&self, q: &Mat2) -> SymTensor2 {
        let c1 = self.apply(Vec2::new(q.m11, q.m12));
        let c2 = self.apply(Vec2::new(q.m21, q.m22));
        SymTensor2 {
            a11: q.m11 * c1.x + q.m12 * c1.y,
            a12: q.m11 * c2.x + q.m12 * c2.y,
            a22: q.m21 * c2.x + q.m22 * c2.y,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a22.is_finite()
    }

    /// Eigen-decomposition with `λ1 ≤ λ2`, unit `ξ1`, and `ξ2 = R ξ1`.
    ///
    /// `ξ1` is sign-normalised so that its first nonzero component is
    /// positive. When the eigenvalue gap is below [`DEGENERATE_REL_GAP`]
    /// relative to the eigenvalue magnitude, `ξ1 = (1, 0)` and the result is
    /// flagged degenerate.
    pub fn eigen(&self) -> SymEigen {
        let mean = 0.5 * (self.a11 + self.a22);
        let half_diff = 0.5 * (self.a11 - self.a22);
        let radius = half_diff.hypot(self.a12);
        let l1 = mean - radius;
        let l2 = mean + radius;
        let scale = l1.abs().max(l2.abs());
        let degenerate = 2.0 * radius <= DEGENERATE_REL_GAP * scale || radius == 0.0;
        let xi1 = if degenerate {
            Vec2::new(1.0, 0.0)
        } else {
            // Angle of the major eigenvector.
            let theta = 0.5 * self.a12.atan2(half_diff);
            let (s, c) = theta.sin_cos();
            let mut v = Vec2::new(s, -c);
            if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
                v = -v;
            }
            v
        };
        SymEigen { lambda1: l1, lambda2: l2, xi1, xi2: xi1.rot90(), degenerate }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEigen {
    pub lambda1: f64,
    pub lambda2: f64,
    pub xi1: Vec2,
    pub xi2: Vec2,
    pub degenerate: bool,
}

/// Spatial gradient of a symmetric tensor field: `d1 = ∂A/∂x1`, `d2 = ∂A/∂x2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TensorGradient {
    pub d1: SymTensor2,
    pub d2: SymTensor2,
}

impl TensorGradient {
    /// Directional derivative `(∇A) v = v1 ∂A/∂x1 + v2 ∂A/∂x2`.
    pub fn along(&self, v: Vec2) -> SymTensor2 {
        self.d1.scale(v.x).add(&self.d2.scale(v.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &SymTensor2, lambda: f64, v: Vec2) -> f64 {
        (a.apply(v) - v * lambda).norm()
    }

    #[test]
    fn eigen_of_diagonal_orders_eigenvalues() {
        let e = std::f64::consts::E;
        let c = SymTensor2::new(e * e, 0.0, 1.0 / (e * e));
        let eig = c.eigen();
        assert!((eig.lambda1 - 1.0 / (e * e)).abs() < 1e-15);
        assert!((eig.lambda2 - e * e).abs() < 1e-14);
        assert!(eig.xi1.x.abs() < 1e-15 && (eig.xi1.y.abs() - 1.0).abs() < 1e-15);
        assert!(!eig.degenerate);
    }

    #[test]
    fn eigen_identity_is_degenerate_with_tie_break() {
        let eig = SymTensor2::IDENTITY.eigen();
        assert!(eig.degenerate);
        assert_eq!(eig.xi1, Vec2::new(1.0, 0.0));
        assert_eq!(eig.xi2, Vec2::new(0.0, 1.0));
    }

    #[test]
    fn eigen_residuals_are_tiny() {
        let cases = [
            SymTensor2::new(3.0, 1.5, -2.0),
            SymTensor2::new(1e6, 1e-3, 1e-6),
            SymTensor2::new(1.0, 1e-9, 1.0),
            SymTensor2::new(-4.0, 0.0, 2.0),
            SymTensor2::new(0.0, 1.0, 0.0),
        ];
        for a in cases {
            let eig = a.eigen();
            let norm = a.norm_inf();
            assert!(eig.lambda1 <= eig.lambda2);
            assert!(residual(&a, eig.lambda1, eig.xi1) <= 1e-12 * norm, "{a:?}");
            assert!(residual(&a, eig.lambda2, eig.xi2) <= 1e-12 * norm, "{a:?}");
            assert!((eig.xi1.norm() - 1.0).abs() < 1e-15);
            assert_eq!(eig.xi2, eig.xi1.rot90());
        }
    }

    #[test]
    fn rotation_gram_is_identity() {
        let g = Mat2::rotation(0.7).gram();
        assert!((g.a11 - 1.0).abs() < 1e-15);
        assert!(g.a12.abs() < 1e-15);
        assert!((g.a22 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn congruence_matches_explicit_product() {
        let a = SymTensor2::new(1.0, 1.0, 0.5);
        let q = Mat2::rotation(0.3);
        let b = a.congruence(&q);
        // Compare the quadratic form on a few vectors: ⟨v, Q A Qᵀ v⟩ = ⟨Qᵀv, A Qᵀv⟩.
        for phi in [0.0, 0.4, 1.3, 2.9] {
            let v = Vec2::unit(phi);
            let qt_v = Vec2::new(q.m11 * v.x + q.m21 * v.y, q.m12 * v.x + q.m22 * v.y);
            assert!((b.quad(v) - a.quad(qt_v)).abs() < 1e-14);
        }
    }
}
