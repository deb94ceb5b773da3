//! 2×2 complex matrices.
//!
//! Every transfer matrix in the crate is a product of unimodular one-step
//! matrices, so [`Mat2::inverse`] uses the adjugate divided by the determinant
//! and norms are closed-form spectral norms.

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

pub type C64 = Complex64;

/// Row-major 2×2 complex matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a: C64::new(1.0, 0.0),
        b: C64::new(0.0, 0.0),
        c: C64::new(0.0, 0.0),
        d: C64::new(1.0, 0.0),
    };

    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn scaled(self, s: C64) -> Self {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> C64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Self {
        let det = self.det();
        Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det)
    }

    /// Frobenius norm squared.
    pub fn frobenius_sqr(&self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()
    }

    /// Largest singular value (valid for any 2×2 matrix).
    ///
    /// With `s = ‖M‖_F²` and `p = |det M| = σ₁σ₂`, the singular values satisfy
    /// `σ₁ ± σ₂ = sqrt(s ± 2p)`.
    pub fn norm(&self) -> f64 {
        let s = self.frobenius_sqr();
        let p = self.det().norm();
        let sum = (s + 2.0 * p).sqrt();
        let diff = (s - 2.0 * p).max(0.0).sqrt();
        0.5 * (sum + diff)
    }

    /// Smallest singular value.
    pub fn min_singular(&self) -> f64 {
        let s = self.frobenius_sqr();
        let p = self.det().norm();
        let sum = (s + 2.0 * p).sqrt();
        let diff = (s - 2.0 * p).max(0.0).sqrt();
        0.5 * (sum - diff)
    }

    pub fn is_finite(&self) -> bool {
        [self.a, self.b, self.c, self.d].iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.a.norm().max(self.b.norm()).max(self.c.norm()).max(self.d.norm())
    }

    /// Spectral norm of `self - other`.
    pub fn dist(&self, other: &Mat2) -> f64 {
        (*self - *other).norm()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, r: Mat2) -> Mat2 {
        Mat2 {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a + r.a, self.b + r.b, self.c + r.c, self.d + r.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a - r.a, self.b - r.b, self.c - r.c, self.d - r.d)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2::new(-self.a, -self.b, -self.c, -self.d)
    }
}
