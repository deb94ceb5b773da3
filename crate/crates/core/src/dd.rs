//! Double-double arithmetic for the few checks that cancel large entries.
//!
//! A value is the unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`, giving
//! about 32 significant digits.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::from_f64(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi));
        Dd { hi, lo }
    }
}

/// Real 2×2 matrix `[[a, b], [c, d]]` in double-double.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdMat2 {
    pub a: Dd,
    pub b: Dd,
    pub c: Dd,
    pub d: Dd,
}

impl DdMat2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        DdMat2 { a: a.into(), b: b.into(), c: c.into(), d: d.into() }
    }

    /// `[[E - v, -1], [1, 0]]`
    pub fn step(v: f64, energy: Dd) -> Self {
        DdMat2 { a: energy - Dd::from(v), b: Dd::from(-1.0), c: Dd::from(1.0), d: Dd::default() }
    }

    pub fn trace(&self) -> Dd {
        self.a + self.d
    }

    /// Entries rounded to `f64`.
    pub fn to_f64(&self) -> [f64; 4] {
        [self.a.to_f64(), self.b.to_f64(), self.c.to_f64(), self.d.to_f64()]
    }
}

impl Mul for DdMat2 {
    type Output = DdMat2;
    fn mul(self, o: DdMat2) -> DdMat2 {
        DdMat2 {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }
}

impl Add for DdMat2 {
    type Output = DdMat2;
    fn add(self, o: DdMat2) -> DdMat2 {
        DdMat2 { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, d: self.d + o.d }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_lost_low_bits() {
        let x = Dd::from(1.0) + Dd::from(1e-20);
        assert_eq!((x - Dd::from(1.0)).to_f64(), 1e-20);
        let third = Dd::from(1.0 / 3.0);
        let err = third * Dd::from(3.0) - Dd::from(1.0);
        assert_eq!(err.to_f64(), 3f64.mul_add(1.0 / 3.0, -1.0));
    }

    #[test]
    fn matrix_product_keeps_determinant() {
        let e = Dd::from(0.3);
        let mut m = DdMat2::new(1.0, 0.0, 0.0, 1.0);
        for v in [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0] {
            m = DdMat2::step(v, e) * m;
        }
        let det = m.a * m.d - m.b * m.c;
        assert!((det - Dd::from(1.0)).to_f64().abs() < 1e-28);
    }
}
