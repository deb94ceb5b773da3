//! Real root isolation for oscillating scalar functions on an interval.
//!
//! Roots are bracketed by sign changes on a uniform pre-sample, refined by
//! bisection and polished with safeguarded Newton steps. Even-multiplicity
//! roots never change sign, so critical points (sign changes of the
//! derivative) whose function value vanishes to tolerance are reported too.

/// `f(x)` and `f'(x)`.
pub trait ValueAndSlope: Fn(f64) -> (f64, f64) {}
impl<F: Fn(f64) -> (f64, f64)> ValueAndSlope for F {}

#[derive(Debug, Clone, Copy)]
pub struct RootSearch {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    /// Bracket width at which bisection stops.
    pub x_tol: f64,
    /// A critical point is a root when `|f| ≤ touch_tol · (1 + |f|)` with `|f|`
    /// the larger value at the two samples around it.
    pub touch_tol: f64,
}

impl RootSearch {
    pub fn new(lo: f64, hi: f64, samples: usize) -> Self {
        RootSearch { lo, hi, samples: samples.max(2), x_tol: 1e-12, touch_tol: 1e-10 }
    }
}

/// Bisection on a bracket `[a, b]` with `g(a)·g(b) ≤ 0`.
pub fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, x_tol: f64) -> f64 {
    let mut ga = g(a);
    if ga == 0.0 {
        return a;
    }
    for _ in 0..200 {
        if (b - a).abs() <= x_tol {
            break;
        }
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Newton steps from `x`, rejected whenever they leave `[a, b]` or fail to
/// reduce `|f|`.
pub fn polish(f: &impl ValueAndSlope, mut x: f64, a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let (mut fx, mut dfx) = f(x);
    for _ in 0..8 {
        if fx == 0.0 || dfx == 0.0 || !dfx.is_finite() {
            break;
        }
        let next = x - fx / dfx;
        if !(lo..=hi).contains(&next) {
            break;
        }
        let (fn_, dfn) = f(next);
        if fn_.abs() >= fx.abs() {
            break;
        }
        x = next;
        fx = fn_;
        dfx = dfn;
    }
    x
}

/// All real roots of `f` in `[search.lo, search.hi]`, ascending.
pub fn find_roots(f: impl ValueAndSlope, search: &RootSearch) -> Vec<f64> {
    let n = search.samples;
    let xs: Vec<f64> = (0..=n).map(|i| search.lo + (search.hi - search.lo) * i as f64 / n as f64).collect();
    let vals: Vec<(f64, f64)> = xs.iter().map(|&x| f(x)).collect();

    let mut roots = Vec::new();
    for i in 0..n {
        let (a, b) = (xs[i], xs[i + 1]);
        let (fa, fb) = (vals[i].0, vals[i + 1].0);
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if (fa < 0.0) != (fb < 0.0) && fb != 0.0 {
            let r = bisect(|x| f(x).0, a, b, search.x_tol);
            roots.push(polish(&f, r, a, b));
        } else if (vals[i].1 < 0.0) != (vals[i + 1].1 < 0.0) {
            // extremum without a sign change: candidate even-order root
            let c = bisect(|x| f(x).1, a, b, search.x_tol);
            let fc = f(c).0;
            let scale = fa.abs().max(fb.abs());
            if fc.abs() <= search.touch_tol * (1.0 + scale) {
                roots.push(c);
            }
        }
    }
    if vals[n].0 == 0.0 {
        roots.push(xs[n]);
    }
    roots.sort_by(f64::total_cmp);
    dedup_close(&mut roots, 1e-9);
    roots
}

pub fn dedup_close(v: &mut Vec<f64>, tol: f64) {
    v.dedup_by(|b, a| (*b - *a).abs() <= tol);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_and_double_roots() {
        // (x-1)(x+0.5)(x-0.25)^2
        let f = |x: f64| {
            let v = (x - 1.0) * (x + 0.5) * (x - 0.25).powi(2);
            let d = (x + 0.5) * (x - 0.25).powi(2) + (x - 1.0) * (x - 0.25).powi(2)
                + 2.0 * (x - 1.0) * (x + 0.5) * (x - 0.25);
            (v, d)
        };
        let roots = find_roots(f, &RootSearch::new(-2.0, 2.0, 997));
        assert_eq!(roots.len(), 3, "{roots:?}");
        assert!((roots[0] + 0.5).abs() < 1e-12);
        assert!((roots[1] - 0.25).abs() < 1e-8);
        assert!((roots[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extremum_away_from_zero_is_not_a_root() {
        let f = |x: f64| (x * x + 0.1, 2.0 * x);
        assert!(find_roots(f, &RootSearch::new(-1.0, 1.0, 101)).is_empty());
    }

    #[test]
    fn chebyshev_polynomial_roots() {
        // T_8 has roots cos((2j-1)π/16)
        let f = |x: f64| {
            let t = x.clamp(-1.0, 1.0).acos();
            let v = (8.0 * t).cos();
            let d = if t.sin() == 0.0 { 64.0 } else { 8.0 * (8.0 * t).sin() / t.sin() };
            (v, d)
        };
        let roots = find_roots(f, &RootSearch::new(-1.0, 1.0, 512));
        assert_eq!(roots.len(), 8);
        for (i, r) in roots.iter().rev().enumerate() {
            let exact = ((2 * i + 1) as f64 * std::f64::consts::PI / 16.0).cos();
            assert!((r - exact).abs() < 1e-13);
        }
    }
}
