//! Trace maps and substitution transfer-matrix recursions.
//!
//! Fibonacci: `M_k = M_{k-2} M_{k-1}` and `x_{k+1} = x_k x_{k-1} - x_{k-2}` with
//! the invariant `x_{k+1}² + x_k² + x_{k-1}² - x_{k+1} x_k x_{k-1} = 4 + λ²`.
//! Period doubling and Thue-Morse: block matrices `T^(a)_k = T(S^k(a))` and
//! their traces `x_k`, `y_k`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{fibonacci_letter, step_from_value, substitution_word, Model};
use crate::mat2::{Mat2, C64};
use crate::dd::{Dd, DdMat2};
use crate::roots::{dedup_close, find_roots, RootSearch};

/// Orbits stop once a trace exceeds this magnitude.
pub const TRACE_OVERFLOW: f64 = 1e150;

/// Fibonacci numbers with `F_0 = F_1 = 1`.
pub fn fibonacci_number(k: usize) -> u64 {
    let (mut a, mut b) = (1u64, 1u64);
    for _ in 0..k {
        (a, b) = (b, a + b);
    }
    a
}

/// Candidate readings of `M_k = T(F_k, 1; E)` as site products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexConvention {
    /// `A(F_k)···A(2)`: the literal `n > m` product with `m = 1`.
    SitesTwoToFk,
    /// `A(F_k)···A(1)`, with `M_0` the one-step matrix of the letter 0.
    SitesOneToFk,
}

impl IndexConvention {
    pub fn id(self) -> &'static str {
        match self {
            IndexConvention::SitesTwoToFk => "M_k=A(F_k)..A(2)",
            IndexConvention::SitesOneToFk => "M_k=A(F_k)..A(1);M_0=A[letter 0]",
        }
    }

    /// Directly multiplied block matrix for level `k`.
    pub fn block(self, lambda: f64, energy: f64, k: usize) -> Mat2 {
        let z = C64::new(energy, 0.0);
        let first = match self {
            IndexConvention::SitesTwoToFk => 2,
            IndexConvention::SitesOneToFk if k == 0 => return step_from_value(0.0, z),
            IndexConvention::SitesOneToFk => 1,
        };
        (first..=fibonacci_number(k) as i64)
            .fold(Mat2::IDENTITY, |acc, n| step_from_value(lambda * fibonacci_letter(n) as f64, z) * acc)
    }
}

/// Identifier of the convention every output in this crate uses.
pub const CONVENTION_ID: &str = "M_k=A(F_k)..A(1);M_0=A[letter 0]";

#[derive(Debug, Clone, Serialize)]
pub struct ConventionCheck {
    pub convention: IndexConvention,
    /// Largest `‖M_k - M_{k-2} M_{k-1}‖ / ‖M_k‖` per level `k = 2..=kmax`.
    pub defects: Vec<(usize, f64)>,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConventionReport {
    pub checks: Vec<ConventionCheck>,
    pub adopted: Option<IndexConvention>,
}

/// Multiplies one-step matrices under both candidate conventions and reports
/// for which one `M_k = M_{k-2} M_{k-1}` holds for `2 ≤ k ≤ kmax`.
pub fn indexing_oracle(lambdas: &[f64], energies: &[f64], kmax: usize) -> ConventionReport {
    let checks: Vec<ConventionCheck> = [IndexConvention::SitesTwoToFk, IndexConvention::SitesOneToFk]
        .into_iter()
        .map(|conv| {
            let defects: Vec<(usize, f64)> = (2..=kmax)
                .map(|k| {
                    let worst = lambdas
                        .iter()
                        .flat_map(|&l| energies.iter().map(move |&e| (l, e)))
                        .map(|(l, e)| {
                            let mk = conv.block(l, e, k);
                            let rec = conv.block(l, e, k - 2) * conv.block(l, e, k - 1);
                            mk.dist(&rec) / mk.norm().max(1.0)
                        })
                        .fold(0.0, f64::max);
                    (k, worst)
                })
                .collect();
            let holds = defects.iter().all(|&(_, d)| d <= 1e-12);
            ConventionCheck { convention: conv, defects, holds }
        })
        .collect();
    let adopted = checks.iter().find(|c| c.holds).map(|c| c.convention);
    ConventionReport { checks, adopted }
}

/// `M_0..=M_kmax` from the recursion, with `M_0`, `M_1`, `M_2` multiplied out
/// site by site.
pub fn fib_matrices(lambda: f64, energy: f64, kmax: usize) -> Result<Vec<Mat2>> {
    if kmax < 2 {
        return Err(Error::Domain(format!("kmax must be >= 2, got {kmax}")));
    }
    let conv = IndexConvention::SitesOneToFk;
    let mut ms: Vec<Mat2> = (0..=2).map(|k| conv.block(lambda, energy, k)).collect();
    for k in 3..=kmax {
        let next = ms[k - 2] * ms[k - 1];
        if !next.is_finite() {
            return Err(Error::ScaleOverflow { steps: k });
        }
        ms.push(next);
    }
    Ok(ms)
}

#[derive(Debug, Clone, Serialize)]
pub struct FibTraceOrbit {
    pub lambda: f64,
    pub energy: f64,
    /// `x_0, x_1, ...`
    pub xs: Vec<f64>,
    /// Set when the orbit was cut short at [`TRACE_OVERFLOW`].
    pub overflowed: bool,
}

impl FibTraceOrbit {
    /// `I(k)` for every interior `k`, paired with `k`.
    pub fn invariants(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.xs.windows(3).enumerate().map(|(i, w)| (i + 1, fib_invariant(w[0], w[1], w[2])))
    }

    /// Largest relative deviation of `I(k)` from `4 + λ²` over triples with
    /// all traces at most `cap` in magnitude.
    ///
    /// The orbit is replayed in double-double from `x_0, x_1, x_2`: near
    /// `|x| ~ 10⁶` the cubic term alone is `~10¹⁸`, past what `f64` resolves.
    pub fn invariant_drift(&self, cap: f64) -> f64 {
        let target = Dd::from(4.0 + self.lambda * self.lambda);
        let mut xs: Vec<Dd> = self.xs.iter().take(3).map(|&x| Dd::from(x)).collect();
        while xs.len() < self.xs.len() {
            let k = xs.len();
            xs.push(xs[k - 1] * xs[k - 2] - xs[k - 3]);
        }
        xs.windows(3)
            .filter(|w| w.iter().all(|x| x.hi.abs() <= cap))
            .map(|w| {
                let inv = w[2] * w[2] + w[1] * w[1] + w[0] * w[0] - w[2] * w[1] * w[0];
                (inv - target).abs().to_f64() / target.to_f64()
            })
            .fold(0.0, f64::max)
    }
}

/// Traces `x_0..=x_kmax` of the Fibonacci block matrices.
pub fn fib_trace_orbit(lambda: f64, energy: f64, kmax: usize) -> FibTraceOrbit {
    let conv = IndexConvention::SitesOneToFk;
    let mut xs: Vec<f64> = (0..=kmax.min(2)).map(|k| conv.block(lambda, energy, k).trace().re).collect();
    let mut overflowed = false;
    for k in 3..=kmax {
        let next = xs[k - 1] * xs[k - 2] - xs[k - 3];
        if !(next.abs() <= TRACE_OVERFLOW) {
            overflowed = true;
            break;
        }
        xs.push(next);
    }
    FibTraceOrbit { lambda, energy, xs, overflowed }
}

/// `x_next² + x_cur² + x_prev² - x_next x_cur x_prev`.
pub fn fib_invariant(x_prev: f64, x_cur: f64, x_next: f64) -> f64 {
    x_next * x_next + x_cur * x_cur + x_prev * x_prev - x_next * x_cur * x_prev
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceDerivOrbit {
    pub lambda: f64,
    pub energy: f64,
    pub xs: Vec<f64>,
    /// `dx_k/dE`.
    pub dxs: Vec<f64>,
}

fn base_with_derivative(lambda: f64, energy: f64, k: usize) -> (Mat2, Mat2) {
    // d/dE of a product of one-step matrices, by the product rule
    let z = C64::new(energy, 0.0);
    let d_step = Mat2::real(1.0, 0.0, 0.0, 0.0);
    let sites: Vec<f64> = if k == 0 {
        vec![0.0]
    } else {
        (1..=fibonacci_number(k) as i64).map(|n| lambda * fibonacci_letter(n) as f64).collect()
    };
    sites.iter().fold((Mat2::IDENTITY, Mat2::real(0.0, 0.0, 0.0, 0.0)), |(m, dm), &v| {
        let a = step_from_value(v, z);
        (a * m, d_step * m + a * dm)
    })
}

/// `(x_k, x_k')` for `k = 0..=kmax` by the differentiated trace map.
pub fn trace_derivative_orbit(lambda: f64, energy: f64, kmax: usize) -> TraceDerivOrbit {
    let mut xs = Vec::with_capacity(kmax + 1);
    let mut dxs = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax.min(2) {
        let (m, dm) = base_with_derivative(lambda, energy, k);
        xs.push(m.trace().re);
        dxs.push(dm.trace().re);
    }
    for k in 3..=kmax {
        let x = xs[k - 1] * xs[k - 2] - xs[k - 3];
        if !(x.abs() <= TRACE_OVERFLOW) {
            break;
        }
        dxs.push(dxs[k - 1] * xs[k - 2] + xs[k - 1] * dxs[k - 2] - dxs[k - 3]);
        xs.push(x);
    }
    TraceDerivOrbit { lambda, energy, xs, dxs }
}

/// `(x_k, x_k')` at a single level, without storing the orbit.
pub fn fib_trace_and_slope(lambda: f64, energy: f64, k: usize) -> (f64, f64) {
    // x_{-1} = 2 continues the recursion below k = 0
    let (mut p2, mut p1, mut p0) = (2.0, energy, energy - lambda);
    let (mut d2, mut d1, mut d0) = (0.0, 1.0, 1.0);
    if k == 0 {
        return (p1, d1);
    }
    for _ in 1..k {
        let x = p0 * p1 - p2;
        let d = d0 * p1 + p0 * d1 - d2;
        (p2, p1, p0) = (p1, p0, x);
        (d2, d1, d0) = (d1, d0, d);
    }
    (p0, d0)
}

/// Block matrices `(T^(0)_k, T^(1)_k)` for period doubling or Thue-Morse.
pub fn subst_transfer(model: Model, lambda: f64, energy: f64, k: usize) -> Result<(Mat2, Mat2)> {
    if model.substitute(0).is_none() {
        return Err(Error::Domain(format!("{model:?} has no substitution transfer matrices")));
    }
    let z = C64::new(energy, 0.0);
    let mut t0 = step_from_value(0.0, z);
    let mut t1 = step_from_value(lambda, z);
    for level in 0..k {
        (t0, t1) = match model {
            Model::PeriodDoubling => (t1 * t0, t0 * t0),
            _ => (t1 * t0, t0 * t1),
        };
        if !t0.is_finite() || !t1.is_finite() {
            return Err(Error::ScaleOverflow { steps: level + 1 });
        }
    }
    Ok((t0, t1))
}

/// Product of one-step matrices over an explicit word, for cross-checks.
pub fn word_transfer(word: &[u8], lambda: f64, energy: f64) -> Mat2 {
    let z = C64::new(energy, 0.0);
    word.iter().fold(Mat2::IDENTITY, |acc, &a| step_from_value(lambda * a as f64, z) * acc)
}

#[derive(Debug, Clone, Serialize)]
pub struct SubstTraceOrbit {
    pub model: Model,
    pub lambda: f64,
    pub energy: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub overflowed: bool,
}

/// Dual number `(value, d/dE)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual(f64, f64);

impl Dual {
    fn mul(self, o: Dual) -> Dual {
        Dual(self.0 * o.0, self.0 * o.1 + self.1 * o.0)
    }
    fn add(self, c: f64) -> Dual {
        Dual(self.0 + c, self.1)
    }
    fn sub(self, o: Dual) -> Dual {
        Dual(self.0 - o.0, self.1 - o.1)
    }
}

/// Iterates the model's trace map on dual numbers, `x` and `y` at every level.
fn subst_orbit_dual(model: Model, lambda: f64, energy: f64, kmax: usize) -> (Vec<Dual>, Vec<Dual>, bool) {
    let x0 = Dual(energy, 1.0);
    let y0 = Dual(energy - lambda, 1.0);
    let mut xs = vec![x0];
    let mut ys = vec![y0];
    let mut overflowed = false;
    for k in 0..kmax {
        let (x, y) = match model {
            Model::PeriodDoubling => (xs[k].mul(ys[k]).add(-2.0), xs[k].mul(xs[k]).add(-2.0)),
            _ => match k {
                // x_1 = y_1 = tr(A_1 A_0)
                0 => {
                    let t = x0.mul(y0).add(-2.0);
                    (t, t)
                }
                // x_2 = tr(A_0² A_1²) = x_0 y_0 x_1 - x_0² - y_0² + 2
                1 => {
                    let t = x0.mul(y0).mul(xs[1]).sub(x0.mul(x0)).sub(y0.mul(y0)).add(2.0);
                    (t, t)
                }
                _ => {
                    let t = xs[k - 1].mul(xs[k - 1]).mul(xs[k].add(-2.0)).add(2.0);
                    (t, t)
                }
            },
        };
        if !(x.0.abs() <= TRACE_OVERFLOW && y.0.abs() <= TRACE_OVERFLOW) {
            overflowed = true;
            break;
        }
        xs.push(x);
        ys.push(y);
    }
    (xs, ys, overflowed)
}

/// Traces `x_k = tr T^(0)_k`, `y_k = tr T^(1)_k` for `k = 0..=kmax`.
pub fn subst_trace_orbit(model: Model, lambda: f64, energy: f64, kmax: usize) -> Result<SubstTraceOrbit> {
    if model.substitute(0).is_none() {
        return Err(Error::Domain(format!("{model:?} has no substitution trace map")));
    }
    let (xs, ys, overflowed) = subst_orbit_dual(model, lambda, energy, kmax);
    Ok(SubstTraceOrbit {
        model,
        lambda,
        energy,
        xs: xs.iter().map(|d| d.0).collect(),
        ys: ys.iter().map(|d| d.0).collect(),
        overflowed,
    })
}

/// `(x_k, dx_k/dE)` for period doubling or Thue-Morse.
pub fn subst_trace_and_slope(model: Model, lambda: f64, energy: f64, k: usize) -> (f64, f64) {
    let (xs, _, _) = subst_orbit_dual(model, lambda, energy, k);
    xs.get(k).map(|d| (d.0, d.1)).unwrap_or((f64::INFINITY, 0.0))
}

/// Energies where substitution blocks commute or collapse, with the matrix
/// checks evaluated at each.
#[derive(Debug, Clone, Serialize)]
pub struct SpecialEnergy {
    pub energy: f64,
    /// `|x_k(E)|` for period doubling, `|x_k(E) - 2|` for Thue-Morse.
    pub residual: f64,
    /// Period doubling: `|tr T^(0)_{k+1} + 2|`; Thue-Morse: `‖T^(0)_k - I‖`.
    pub check0: f64,
    /// Period doubling: `‖T^(1)_{k+1} + I‖`; Thue-Morse: `‖T^(1)_k - I‖`.
    pub check1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecialEnergies {
    pub model: Model,
    pub lambda: f64,
    pub k: usize,
    pub energies: Vec<SpecialEnergy>,
    pub expected_count: Option<usize>,
    pub warnings: Vec<String>,
}

impl SpecialEnergies {
    pub fn roots(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e.energy).collect()
    }

    pub fn max_check(&self) -> f64 {
        self.energies.iter().map(|e| e.check0.max(e.check1)).fold(0.0, f64::max)
    }
}

/// `[-2 - λ, 2 + 2λ]`, which contains every spectrum of these models.
pub fn search_interval(lambda: f64) -> (f64, f64) {
    (-2.0 - lambda.abs(), 2.0 + 2.0 * lambda.abs())
}

fn sample_count(k: usize) -> usize {
    64usize << k.min(20)
}

/// Largest level for which roots come from a dense eigensolve.
pub const MAX_BLOCH_LEVEL: usize = 12;

/// Eigenvalues of the operator with period `word.len()` and Bloch factor
/// `e^{iθ}`, ascending. They are the energies where the trace of the word's
/// transfer matrix equals `2 cos θ`.
pub fn bloch_eigenvalues(word: &[u8], lambda: f64, theta: f64) -> Vec<f64> {
    use nalgebra::DMatrix;
    let n = word.len();
    let twist = C64::from_polar(1.0, theta);
    let mut h = DMatrix::<C64>::zeros(n, n);
    for (i, &a) in word.iter().enumerate() {
        h[(i, i)] = C64::new(lambda * a as f64, 0.0);
    }
    match n {
        0 => return Vec::new(),
        1 => h[(0, 0)] += 2.0 * theta.cos(),
        _ => {
            for i in 0..n - 1 {
                h[(i, i + 1)] += 1.0;
                h[(i + 1, i)] += 1.0;
            }
            h[(0, n - 1)] += twist.conj();
            h[(n - 1, 0)] += twist;
        }
    }
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn pd_trace_dd(lambda: f64, energy: Dd, k: usize) -> Dd {
    let two = Dd::from(2.0);
    let (mut x, mut y) = (energy, energy - Dd::from(lambda));
    for _ in 0..k {
        (x, y) = (x * y - two, x * x - two);
    }
    x
}

fn pd_blocks_dd(lambda: f64, energy: Dd, k: usize) -> (DdMat2, DdMat2) {
    let (mut t0, mut t1) = (DdMat2::step(0.0, energy), DdMat2::step(lambda, energy));
    for _ in 0..k {
        (t0, t1) = (t1 * t0, t0 * t0);
    }
    (t0, t1)
}

/// Real roots of `x_k(E) = 0` for period doubling: the `2^k` eigenvalues at
/// Bloch phase `π/2`, refined by Newton steps in double-double.
///
/// At a root `T^(1)_{k+1} = (T^(0)_k)² = -I`; the checks cancel entries of
/// size `‖T^(0)_k‖²`, so they are evaluated in double-double as well.
pub fn pd_special_energies(lambda: f64, k: usize) -> Result<SpecialEnergies> {
    if k > MAX_BLOCH_LEVEL {
        return Err(Error::Resource(format!("level {k} above {MAX_BLOCH_LEVEL}")));
    }
    let word = substitution_word(Model::PeriodDoubling, k as u32)?;
    let energies = bloch_eigenvalues(&word, lambda, 0.5 * std::f64::consts::PI)
        .into_iter()
        .map(|e| {
            let mut root = Dd::from(e);
            let mut res = pd_trace_dd(lambda, root, k).abs().to_f64();
            for _ in 0..8 {
                let slope = subst_trace_and_slope(Model::PeriodDoubling, lambda, root.to_f64(), k).1;
                let next = root - Dd::from(pd_trace_dd(lambda, root, k).to_f64() / slope);
                let r = pd_trace_dd(lambda, next, k).abs().to_f64();
                if !(r < res) {
                    break;
                }
                (root, res) = (next, r);
            }
            let (t0, t1) = pd_blocks_dd(lambda, root, k + 1);
            let [a, b, c, d] = (t1 + DdMat2::new(1.0, 0.0, 0.0, 1.0)).to_f64();
            SpecialEnergy {
                energy: root.to_f64(),
                residual: res,
                check0: (t0.trace() + Dd::from(2.0)).abs().to_f64(),
                check1: Mat2::real(a, b, c, d).norm(),
            }
        })
        .collect();
    Ok(SpecialEnergies {
        model: Model::PeriodDoubling,
        lambda,
        k,
        energies,
        expected_count: Some(1usize << k),
        warnings: Vec::new(),
    })
}

/// Distinct Bloch eigenvalues of the level-`k` Thue-Morse word, or `None`
/// above [`MAX_BLOCH_LEVEL`].
fn tm_bloch_roots(lambda: f64, k: usize, theta: f64) -> Option<Vec<f64>> {
    if k > MAX_BLOCH_LEVEL {
        return None;
    }
    let word = substitution_word(Model::ThueMorse, k as u32).ok()?;
    let mut ev = bloch_eigenvalues(&word, lambda, theta);
    // double roots come back as pairs split by rounding
    dedup_close(&mut ev, 1e-11 * (2.0 + lambda));
    Some(ev)
}

fn tm_sampled_roots(lambda: f64, k: usize, target: f64) -> Vec<f64> {
    let (lo, hi) = search_interval(lambda);
    let search = RootSearch::new(lo, hi, sample_count(k));
    find_roots(
        |e| {
            let (x, d) = subst_trace_and_slope(Model::ThueMorse, lambda, e, k);
            (x - target, d)
        },
        &search,
    )
}

/// `E_k = {E : x_k(E) = 2}` for Thue-Morse, every root including the double
/// ones. These are the periodic eigenvalues of the period-`2^k` operator;
/// sampling is used only above [`MAX_BLOCH_LEVEL`], where touching roots can
/// be missed.
pub fn tm_level_set(lambda: f64, k: usize) -> Vec<f64> {
    tm_bloch_roots(lambda, k, 0.0).unwrap_or_else(|| tm_sampled_roots(lambda, k, 2.0))
}

/// Real roots of `x_k(E) = 0` for Thue-Morse, `k ≥ 1`.
pub fn tm_trace_zeros(lambda: f64, k: usize) -> Vec<f64> {
    tm_bloch_roots(lambda, k, 0.5 * std::f64::consts::PI).unwrap_or_else(|| tm_sampled_roots(lambda, k, 0.0))
}

/// `E_k \ E_2` for Thue-Morse, where `T^(0)_k = T^(1)_k = I`.
pub fn tm_special_energies(lambda: f64, k: usize) -> Result<SpecialEnergies> {
    if k < 3 {
        return Err(Error::Domain(format!("Thue-Morse special energies need k >= 3, got {k}")));
    }
    let excluded = tm_level_set(lambda, 2);
    let energies = tm_level_set(lambda, k)
        .into_iter()
        .filter(|e| excluded.iter().all(|x| (x - e).abs() > 1e-8))
        .map(|e| {
            let (t0, t1) = subst_transfer(Model::ThueMorse, lambda, e, k)?;
            Ok(SpecialEnergy {
                energy: e,
                residual: (subst_trace_and_slope(Model::ThueMorse, lambda, e, k).0 - 2.0).abs(),
                check0: (t0 - Mat2::IDENTITY).norm(),
                check1: (t1 - Mat2::IDENTITY).norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpecialEnergies { model: Model::ThueMorse, lambda, k, energies, expected_count: None, warnings: Vec::new() })
}
