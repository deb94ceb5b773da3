//! Band spectra `σ_k = {E : |x_k(E)| ≤ 2}` of the periodic Fibonacci
//! approximants, band classification and the quantitative band estimates.
//!
//! Band edges are isolated without sampling: the Dirichlet eigenvalues of the
//! `F_k - 1` interior sites interlace the bands, one per (possibly closed) gap,
//! so each band lies between two consecutive Dirichlet eigenvalues.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::fibonacci_letter;
use crate::roots::bisect;
use crate::traces::{fib_trace_and_slope, fibonacci_number, trace_derivative_orbit};

/// Default edge tolerance in energy.
pub const EDGE_TOL: f64 = 1e-10;
/// Interior sample count per band for trace and ratio checks.
pub const BAND_SAMPLES: usize = 33;
/// Adjacent bands closer than this are treated as touching (closed gap).
pub const CLOSED_GAP_TOL: f64 = 1e-7;
/// Largest approximant level whose Dirichlet problem is solved directly.
pub const MAX_LEVEL: usize = 20;

/// `(1 + √5) / 2`.
pub fn golden_ratio() -> f64 {
    0.5 * (1.0 + 5f64.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BandKind {
    TypeA,
    TypeB,
    Unclassified,
}

impl BandKind {
    pub fn label(self) -> &'static str {
        match self {
            BandKind::TypeA => "A",
            BandKind::TypeB => "B",
            BandKind::Unclassified => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub kind: BandKind,
    pub k: usize,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, e: f64, tol: f64) -> bool {
        e >= self.lo - tol && e <= self.hi + tol
    }

    /// `other ⊆ self` up to `tol` at both ends.
    pub fn contains_band(&self, other: &Band, tol: f64) -> bool {
        other.lo >= self.lo - tol && other.hi <= self.hi + tol
    }

    pub fn intersects(&self, other: &Band) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// `n` Chebyshev points strictly inside the band.
    pub fn chebyshev_points(&self, n: usize) -> Vec<f64> {
        let (mid, half) = (self.midpoint(), 0.5 * self.width());
        (0..n).map(|i| mid + half * ((2 * i + 1) as f64 * PI / (2 * n) as f64).cos()).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BandSet {
    pub lambda: f64,
    pub k: usize,
    pub bands: Vec<Band>,
    pub warnings: Vec<String>,
}

impl BandSet {
    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Lebesgue measure.
    pub fn measure(&self) -> f64 {
        self.bands.iter().map(Band::width).sum()
    }

    pub fn min_width(&self) -> f64 {
        self.bands.iter().map(Band::width).fold(f64::INFINITY, f64::min)
    }

    /// Sorted by `lo`, `lo < hi` and pairwise disjoint.
    pub fn is_well_formed(&self) -> bool {
        self.bands.iter().all(|b| b.lo < b.hi) && self.bands.windows(2).all(|w| w[0].hi < w[1].lo)
    }

    pub fn contains(&self, e: f64, tol: f64) -> bool {
        self.find(e, tol).is_some()
    }

    /// Index of the band containing `e`.
    pub fn find(&self, e: f64, tol: f64) -> Option<usize> {
        let i = self.bands.partition_point(|b| b.hi + tol < e);
        (i < self.bands.len() && self.bands[i].contains(e, tol)).then_some(i)
    }

    /// Index of the band that contains `band`.
    pub fn parent_of(&self, band: &Band, tol: f64) -> Option<usize> {
        self.find(band.midpoint(), tol).filter(|&i| self.bands[i].contains_band(band, tol))
    }

    /// Bands of `self` contained in `outer`.
    pub fn inside<'a>(&'a self, outer: &'a Band, tol: f64) -> impl Iterator<Item = &'a Band> + 'a {
        self.bands.iter().filter(move |b| outer.contains_band(b, tol))
    }

    /// `n` interior energies spread over the bands in ascending order.
    pub fn sample_energies(&self, n: usize) -> Vec<f64> {
        if self.bands.is_empty() || n == 0 {
            return Vec::new();
        }
        let per_band = n.div_ceil(self.bands.len());
        let pool: Vec<f64> =
            self.bands.iter().flat_map(|b| b.chebyshev_points(per_band).into_iter().rev()).collect();
        (0..n).map(|s| pool[s * pool.len() / n]).collect()
    }
}

/// Union of two band lists as sorted disjoint intervals, joining pieces
/// that overlap or come within `tol` of each other.
pub fn interval_union(a: &[Band], b: &[Band], tol: f64) -> Vec<(f64, f64)> {
    let mut all: Vec<(f64, f64)> = a.iter().chain(b).map(|x| (x.lo, x.hi)).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(all.len());
    for (lo, hi) in all {
        match out.last_mut() {
            Some(last) if lo <= last.1 + tol => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Pairwise intersections of two sorted disjoint interval lists.
pub fn interval_intersection(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn intervals(set: &BandSet) -> Vec<(f64, f64)> {
    set.bands.iter().map(|b| (b.lo, b.hi)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundParameters {
    pub lambda: f64,
    /// `2 + √(8 + λ²)`
    pub c_lambda: f64,
    /// `C_λ (2C_λ + 1)²`
    pub d: f64,
    /// `2 ln d / ln φ`
    pub alpha: f64,
    /// `ln(2λ + 22) / ln φ - 1`
    pub gamma: f64,
    /// `γ` is only meaningful for `λ > 4`.
    pub gamma_in_regime: bool,
}

impl BoundParameters {
    /// `γ < 1 + α`.
    pub fn side_condition(&self) -> bool {
        self.gamma < 1.0 + self.alpha
    }
}

pub fn bound_parameters(lambda: f64) -> Result<BoundParameters> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("coupling must be positive, got {lambda}")));
    }
    let ln_phi = golden_ratio().ln();
    let c = 2.0 + (8.0 + lambda * lambda).sqrt();
    let d = c * (2.0 * c + 1.0).powi(2);
    let gamma_in_regime = lambda > 4.0;
    if !gamma_in_regime {
        log::debug!("gamma requested at lambda={lambda} <= 4: out of regime");
    }
    Ok(BoundParameters {
        lambda,
        c_lambda: c,
        d,
        alpha: 2.0 * d.ln() / ln_phi,
        gamma: (2.0 * lambda + 22.0).ln() / ln_phi - 1.0,
        gamma_in_regime,
    })
}

/// Letters of the period-`F_k` approximant: `s_1..s_{F_k}`, or the single
/// letter `0` at `k = 0`.
pub fn approximant_word(k: usize) -> Vec<u8> {
    if k == 0 {
        return vec![0];
    }
    (1..=fibonacci_number(k) as i64).map(fibonacci_letter).collect()
}

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix with
/// diagonal `diag` and unit off-diagonal.
fn sturm_count(diag: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &d) in diag.iter().enumerate() {
        q = if i == 0 { d - x } else { d - x - 1.0 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (1.0 + x.abs());
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenvalues of the unit-hopping tridiagonal matrix, ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64]) -> Vec<f64> {
    if diag.is_empty() {
        return Vec::new();
    }
    let vmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (vmin - 2.0 - 1e-9, vmax + 2.0 + 1e-9);
    (0..diag.len())
        .into_par_iter()
        .map(|j| {
            // smallest x with more than j eigenvalues below it
            let (mut a, mut b) = (lo, hi);
            loop {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if sturm_count(diag, m) > j {
                    b = m;
                } else {
                    a = m;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// The band of `σ_k` between consecutive Dirichlet eigenvalues `a < b`.
///
/// `x_k` has opposite signs at `a` and `b` and vanishes once in between, on
/// the band. Each edge is the boundary of the monotone set
/// `{E : ±x_k(E) ≥ 2}` on its side of that zero.
fn band_in_bracket(lambda: f64, k: usize, a: f64, b: f64) -> (f64, f64) {
    let x = |e: f64| fib_trace_and_slope(lambda, e, k).0;
    let s = x(a).signum();
    let zero = bisect(x, a, b, 0.0);
    let boundary = |mut inside: f64, mut outside: f64, out: &dyn Fn(f64) -> bool| {
        loop {
            let m = 0.5 * (inside + outside);
            if m == inside || m == outside {
                return inside;
            }
            if out(m) {
                outside = m;
            } else {
                inside = m;
            }
        }
    };
    let lo = boundary(zero, a, &|e| s * x(e) >= 2.0);
    let hi = boundary(zero, b, &|e| -s * x(e) >= 2.0);
    (lo, hi)
}

/// `σ_k` as an ordered list of maximal bands.
///
/// Edges are located to full double precision, which satisfies any
/// `edge_tol ≥ 1e-15 (1 + |E|)`. For `λ > 4` a band count other than `F_k`
/// is an error; below that it is reported as a warning.
pub fn approximant_spectrum(lambda: f64, k: usize, edge_tol: f64) -> Result<BandSet> {
    if !(edge_tol > 0.0) {
        return Err(Error::Domain(format!("edge_tol must be positive, got {edge_tol}")));
    }
    if k > MAX_LEVEL {
        return Err(Error::Resource(format!("approximant level {k} exceeds {MAX_LEVEL}")));
    }
    let word = approximant_word(k);
    let p = word.len();
    let dirichlet: Vec<f64> = word[..p - 1].iter().map(|&a| lambda * a as f64).collect();
    let mu = tridiagonal_eigenvalues(&dirichlet);
    let reach = 3.0 + lambda.abs();
    let mut brackets = Vec::with_capacity(p);
    let mut left = -reach;
    for &m in &mu {
        brackets.push((left, m));
        left = m;
    }
    brackets.push((left, reach));

    let raw: Vec<Band> = brackets
        .par_iter()
        .map(|&(a, b)| {
            let (lo, hi) = band_in_bracket(lambda, k, a, b);
            Band { lo, hi, kind: BandKind::Unclassified, k }
        })
        .collect();

    let mut bands: Vec<Band> = Vec::with_capacity(raw.len());
    for b in raw {
        match bands.last_mut() {
            Some(last) if b.lo - last.hi <= CLOSED_GAP_TOL.max(edge_tol) => last.hi = last.hi.max(b.hi),
            _ => bands.push(b),
        }
    }

    let expected = fibonacci_number(k) as usize;
    let mut warnings = Vec::new();
    if bands.len() != expected {
        if lambda > 4.0 {
            return Err(Error::BandCount { k, found: bands.len(), expected });
        }
        let msg = format!("lambda={lambda}, k={k}: {} bands (F_k = {expected}); closed gaps merged", bands.len());
        log::info!("{msg}");
        warnings.push(msg);
    }
    Ok(BandSet { lambda, k, bands, warnings })
}

/// `σ_0, ..., σ_kmax` for one coupling, computed once and shared by the checks.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumLadder {
    pub lambda: f64,
    pub edge_tol: f64,
    pub sets: Vec<BandSet>,
}

impl SpectrumLadder {
    pub fn new(lambda: f64, kmax: usize, edge_tol: f64) -> Result<Self> {
        let sets = (0..=kmax).map(|k| approximant_spectrum(lambda, k, edge_tol)).collect::<Result<Vec<_>>>()?;
        Ok(SpectrumLadder { lambda, edge_tol, sets })
    }

    pub fn kmax(&self) -> usize {
        self.sets.len() - 1
    }

    pub fn level(&self, k: usize) -> &BandSet {
        &self.sets[k]
    }

    /// Containment tolerance for comparisons between levels.
    pub fn tol(&self) -> f64 {
        10.0 * self.edge_tol
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoveringReport {
    pub m: usize,
    pub holds: bool,
    pub violations: Vec<Band>,
}

/// Checks `σ_m ∪ σ_{m+1} ⊆ σ_{m-1} ∪ σ_m`.
pub fn covering_between(prev: &BandSet, cur: &BandSet, next: &BandSet, tol: f64) -> CoveringReport {
    let cover = interval_union(&prev.bands, &cur.bands, tol);
    let covered = |b: &Band| {
        let i = cover.partition_point(|c| c.1 + tol < b.lo);
        i < cover.len() && cover[i].0 - tol <= b.lo && b.hi <= cover[i].1 + tol
    };
    let violations: Vec<Band> = cur.bands.iter().chain(&next.bands).filter(|b| !covered(b)).copied().collect();
    CoveringReport { m: cur.k, holds: violations.is_empty(), violations }
}

pub fn covering_check(lambda: f64, m: usize) -> Result<CoveringReport> {
    if m < 2 {
        return Err(Error::Domain(format!("covering check needs m >= 2, got {m}")));
    }
    let sets = (m - 1..=m + 1).map(|k| approximant_spectrum(lambda, k, EDGE_TOL)).collect::<Result<Vec<_>>>()?;
    Ok(covering_between(&sets[0], &sets[1], &sets[2], 10.0 * EDGE_TOL))
}

/// Labels every band of `σ_k` by its parent in `σ_{k-1}` (A) or `σ_{k-2}` (B).
pub fn classify_level(ladder: &SpectrumLadder, k: usize) -> Result<BandSet> {
    if k < 2 || k > ladder.kmax() {
        return Err(Error::Domain(format!("classification needs 2 <= k <= {}, got {k}", ladder.kmax())));
    }
    let tol = ladder.tol();
    let (p1, p2) = (ladder.level(k - 1), ladder.level(k - 2));
    let mut set = ladder.level(k).clone();
    for (i, band) in set.bands.iter_mut().enumerate() {
        let a = p1.parent_of(band, tol).is_some();
        let b = p2.parent_of(band, tol).is_some();
        band.kind = match (a, b) {
            (true, false) => BandKind::TypeA,
            (false, true) => BandKind::TypeB,
            (true, true) => {
                return Err(Error::Classification(format!("k={k}, band {i} lies in both sigma_{} and sigma_{}", k - 1, k - 2)))
            }
            (false, false) => {
                return Err(Error::Classification(format!("k={k}, band {i} lies in neither sigma_{} nor sigma_{}", k - 1, k - 2)))
            }
        };
    }
    Ok(set)
}

pub fn classify_bands(lambda: f64, k: usize) -> Result<BandSet> {
    let ladder = SpectrumLadder::new(lambda, k, EDGE_TOL)?;
    classify_level(&ladder, k)
}

#[derive(Debug, Clone, Serialize)]
pub struct GenealogyReport {
    pub kmax: usize,
    pub type_a: usize,
    pub type_b: usize,
    pub violations: Vec<String>,
    /// Points found in three consecutive `σ_k`.
    pub triple_overlaps: usize,
    /// Type A bands of `σ_k` meeting `σ_{k+1}`.
    pub a_meeting_next: usize,
}

impl GenealogyReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.triple_overlaps == 0 && self.a_meeting_next == 0
    }
}

/// Checks the descendant counts of every classified band of `σ_k` for
/// `2 ≤ k ≤ kmax - 2`, and that no energy lies in three consecutive `σ_k`.
pub fn genealogy_check(ladder: &SpectrumLadder) -> Result<GenealogyReport> {
    let kmax = ladder.kmax();
    let tol = ladder.tol();
    let classified: Vec<BandSet> = (2..=kmax).map(|k| classify_level(ladder, k)).collect::<Result<Vec<_>>>()?;
    let at = |k: usize| &classified[k - 2];
    let mut report =
        GenealogyReport { kmax, type_a: 0, type_b: 0, violations: Vec::new(), triple_overlaps: 0, a_meeting_next: 0 };
    for k in 2..=kmax.saturating_sub(2) {
        for (i, band) in at(k).bands.iter().enumerate() {
            let next: Vec<&Band> = at(k + 1).inside(band, tol).collect();
            let next2: Vec<&Band> = at(k + 2).inside(band, tol).collect();
            let kinds2_b = next2.iter().all(|b| b.kind == BandKind::TypeB);
            let ok = match band.kind {
                BandKind::TypeA => {
                    report.type_a += 1;
                    next.is_empty() && next2.len() == 1 && kinds2_b
                }
                _ => {
                    report.type_b += 1;
                    next.len() == 1
                        && next[0].kind == BandKind::TypeA
                        && next2.len() == 2
                        && kinds2_b
                        && next2[0].hi < next[0].lo
                        && next[0].hi < next2[1].lo
                }
            };
            if !ok {
                report.violations.push(format!(
                    "k={k} band {i} ({}): {} children in sigma_{}, {} in sigma_{}",
                    band.kind.label(),
                    next.len(),
                    k + 1,
                    next2.len(),
                    k + 2
                ));
            }
            if band.kind == BandKind::TypeA && ladder.level(k + 1).bands.iter().any(|b| b.intersects(band)) {
                report.a_meeting_next += 1;
            }
        }
    }
    for k in 0..=kmax.saturating_sub(2) {
        let two = interval_intersection(&intervals(ladder.level(k)), &intervals(ladder.level(k + 1)));
        let three = interval_intersection(&two, &intervals(ladder.level(k + 2)));
        report.triple_overlaps += three.len();
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

fn radicand(x: f64, y: f64, lambda: f64) -> Result<f64> {
    let r = 4.0 * lambda * lambda + (4.0 - x * x) * (4.0 - y * y);
    if r < 0.0 {
        return Err(Error::Domain(format!("negative radicand {r} at x={x}, y={y}, lambda={lambda}")));
    }
    Ok(r)
}

/// `(xy ± √(4λ² + (4 - x²)(4 - y²))) / 2`.
pub fn f_pm(x: f64, y: f64, lambda: f64, sign: Sign) -> Result<f64> {
    Ok(0.5 * (x * y + sign.value() * radicand(x, y, lambda)?.sqrt()))
}

/// `(∂f/∂x, ∂f/∂y)`.
pub fn f_pm_partials(x: f64, y: f64, lambda: f64, sign: Sign) -> Result<(f64, f64)> {
    let root = radicand(x, y, lambda)?.sqrt();
    if root == 0.0 {
        return Err(Error::Domain("f_pm is not differentiable where the radicand vanishes".into()));
    }
    let s = sign.value();
    Ok((0.5 * y - s * x * (4.0 - y * y) / (2.0 * root), 0.5 * x - s * y * (4.0 - x * x) / (2.0 * root)))
}

/// First `n` points of the two-dimensional Sobol sequence in `[0, 1)²`.
pub fn sobol2(n: usize) -> Vec<[f64; 2]> {
    const BITS: usize = 32;
    let mut v1 = [0u32; BITS];
    let mut v2 = [0u32; BITS];
    for j in 0..BITS {
        v1[j] = 1 << (31 - j);
        v2[j] = if j == 0 { 1 << 31 } else { v2[j - 1] ^ (v2[j - 1] >> 1) };
    }
    let scale = 1.0 / (1u64 << 32) as f64;
    let (mut a, mut b) = (0u32, 0u32);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push([a as f64 * scale, b as f64 * scale]);
        let c = (!i).trailing_zeros() as usize;
        a ^= v1[c];
        b ^= v2[c];
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialBoundReport {
    pub lambda: f64,
    pub samples: usize,
    pub max_partial: f64,
    pub violations: usize,
}

/// Evaluates both partials of both branches on `n` Sobol points of `[-2, 2]²`.
pub fn partial_bound_check(lambda: f64, n: usize, tol: f64) -> Result<PartialBoundReport> {
    let mut max_partial: f64 = 0.0;
    let mut violations = 0;
    for [u, v] in sobol2(n) {
        let (x, y) = (4.0 * u - 2.0, 4.0 * v - 2.0);
        for sign in [Sign::Plus, Sign::Minus] {
            let (dx, dy) = f_pm_partials(x, y, lambda, sign)?;
            let m = dx.abs().max(dy.abs());
            max_partial = max_partial.max(m);
            if m > 1.0 + tol {
                violations += 1;
            }
        }
    }
    Ok(PartialBoundReport { lambda, samples: n, max_partial, violations })
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeRatioReport {
    pub lambda: f64,
    pub kmax: usize,
    pub max_ratio_a: f64,
    pub max_ratio_b: f64,
    pub bound_a: f64,
    pub bound_b: f64,
    pub samples: usize,
    /// Samples where the denominator vanished.
    pub skipped: usize,
    pub violations: usize,
    /// `max |x_k'|` over sampled band interiors of `σ_k`, per level.
    pub max_slope: Vec<f64>,
    /// `max_k max|x_k'| (2λ + 22)^{-k}`.
    pub c_estimate: f64,
}

impl DerivativeRatioReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Ratios `|x_k'/x_{k-1}'|` on type A bands and `|x_k'/x_{k-2}'|` on type B
/// bands of `σ_k`, `2 ≤ k ≤ kmax`, at [`BAND_SAMPLES`] interior points.
pub fn derivative_ratio_check(ladder: &SpectrumLadder, tol: f64) -> Result<DerivativeRatioReport> {
    let lambda = ladder.lambda;
    let kmax = ladder.kmax();
    let growth = 2.0 * lambda + 22.0;
    let mut r = DerivativeRatioReport {
        lambda,
        kmax,
        max_ratio_a: 0.0,
        max_ratio_b: 0.0,
        bound_a: lambda + 11.0,
        bound_b: growth,
        samples: 0,
        skipped: 0,
        violations: 0,
        max_slope: vec![0.0; kmax + 1],
        c_estimate: 0.0,
    };
    for k in 0..=kmax {
        let set = if k >= 2 { classify_level(ladder, k)? } else { ladder.level(k).clone() };
        for band in &set.bands {
            for e in band.chebyshev_points(BAND_SAMPLES) {
                let d = trace_derivative_orbit(lambda, e, k).dxs;
                r.max_slope[k] = r.max_slope[k].max(d[k].abs());
                let (den, bound, slot) = match band.kind {
                    BandKind::TypeA => (d[k - 1], r.bound_a, &mut r.max_ratio_a),
                    BandKind::TypeB => (d[k - 2], r.bound_b, &mut r.max_ratio_b),
                    BandKind::Unclassified => continue,
                };
                r.samples += 1;
                if den == 0.0 {
                    r.skipped += 1;
                    continue;
                }
                let ratio = (d[k] / den).abs();
                *slot = slot.max(ratio);
                if ratio > bound * (1.0 + tol) {
                    r.violations += 1;
                }
            }
        }
        r.c_estimate = r.c_estimate.max(r.max_slope[k] / growth.powi(k as i32));
    }
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureRow {
    pub k: usize,
    pub f_k: u64,
    pub bands: usize,
    pub measure: f64,
    pub min_width: f64,
    /// `(4 / C) F_k^{-γ}` with the empirical `C`.
    pub lower_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureReport {
    pub lambda: f64,
    pub gamma: f64,
    pub rows: Vec<MeasureRow>,
    /// Least-squares slope of `ln|σ_k|` against `ln F_k`.
    pub decay_exponent: f64,
    pub c_estimate: f64,
    /// Smallest `min_width(k+1) / min_width(k)`.
    pub min_width_ratio: f64,
    pub measure_decreasing: bool,
}

impl MeasureReport {
    /// Decay no faster than `F_k^{-γ}` up to `fit_tol` in the exponent.
    pub fn decay_within(&self, fit_tol: f64) -> bool {
        self.decay_exponent >= -self.gamma - fit_tol
    }

    /// Band widths shrink by at most `2λ + 22` per level.
    pub fn width_rate_holds(&self, tol: f64) -> bool {
        self.min_width_ratio >= 1.0 / (2.0 * self.lambda + 22.0) - tol
    }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least two points, got {}", x.len().min(y.len()))));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

pub fn measure_report(ladder: &SpectrumLadder) -> Result<MeasureReport> {
    let lambda = ladder.lambda;
    let params = bound_parameters(lambda)?;
    let ratios = derivative_ratio_check(ladder, 0.0)?;
    let c = ratios.c_estimate.max(f64::MIN_POSITIVE);
    let rows: Vec<MeasureRow> = ladder
        .sets
        .iter()
        .map(|s| {
            let f_k = fibonacci_number(s.k);
            MeasureRow {
                k: s.k,
                f_k,
                bands: s.len(),
                measure: s.measure(),
                min_width: s.min_width(),
                lower_bound: 4.0 / c * (f_k as f64).powf(-params.gamma),
            }
        })
        .collect();
    let fit: Vec<&MeasureRow> = rows.iter().filter(|r| r.k >= 1).collect();
    let xs: Vec<f64> = fit.iter().map(|r| (r.f_k as f64).ln()).collect();
    let ys: Vec<f64> = fit.iter().map(|r| r.measure.ln()).collect();
    let (decay_exponent, _) = linear_fit(&xs, &ys)?;
    let min_width_ratio = rows.windows(2).map(|w| w[1].min_width / w[0].min_width).fold(f64::INFINITY, f64::min);
    let measure_decreasing = rows.windows(2).skip(1).all(|w| w[1].measure < w[0].measure);
    Ok(MeasureReport {
        lambda,
        gamma: params.gamma,
        rows,
        decay_exponent,
        c_estimate: c,
        min_width_ratio,
        measure_decreasing,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceBoundReport {
    pub lambda: f64,
    pub k: usize,
    pub samples: usize,
    pub max_trace: f64,
    pub c_lambda: f64,
    pub holds: bool,
}

/// `max_{i ≤ k} |x_i(E)|` over `samples` energies in `σ_k` plus every band edge.
pub fn trace_bound_check(lambda: f64, k: usize, samples: usize) -> Result<TraceBoundReport> {
    if k < 1 {
        return Err(Error::Domain("trace bound check needs k >= 1".into()));
    }
    let params = bound_parameters(lambda)?;
    let set = approximant_spectrum(lambda, k, EDGE_TOL)?;
    let mut energies = set.sample_energies(samples);
    energies.extend(set.bands.iter().flat_map(|b| [b.lo, b.hi]));
    let max_trace = energies
        .iter()
        .map(|&e| trace_derivative_orbit(lambda, e, k).xs.iter().fold(0.0f64, |m, x| m.max(x.abs())))
        .fold(0.0, f64::max);
    Ok(TraceBoundReport {
        lambda,
        k,
        samples: energies.len(),
        max_trace,
        c_lambda: params.c_lambda,
        holds: max_trace <= params.c_lambda * (1.0 + 1e-12),
    })
}

/// Level `k` with `F_{k-1} < n ≤ F_k`, used to pick `A(N) = σ_k`.
pub fn level_for_scale(n: f64) -> usize {
    let mut k = 1;
    while (fibonacci_number(k) as f64) < n {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn floquet_edges(lambda: f64, k: usize) -> Vec<f64> {
        // eigenvalues of the periodic and antiperiodic F_k-site matrices
        let word = approximant_word(k);
        let p = word.len();
        let mut out = Vec::new();
        for corner in [1.0, -1.0] {
            let mut h = DMatrix::<f64>::zeros(p, p);
            for i in 0..p {
                h[(i, i)] = lambda * word[i] as f64;
                if i + 1 < p {
                    h[(i, i + 1)] = 1.0;
                    h[(i + 1, i)] = 1.0;
                }
            }
            if p == 1 {
                h[(0, 0)] += 2.0 * corner;
            } else {
                h[(0, p - 1)] += corner;
                h[(p - 1, 0)] += corner;
            }
            out.extend(h.symmetric_eigenvalues().iter());
        }
        out.sort_by(f64::total_cmp);
        out
    }

    #[test]
    fn parameters_at_reference_couplings() {
        let p = bound_parameters(1.0).unwrap();
        assert_eq!(p.c_lambda, 5.0);
        assert_eq!(p.d, 605.0);
        assert!((p.alpha - 26.6213).abs() < 1e-4, "{}", p.alpha);
        assert!(!p.gamma_in_regime);
        let p = bound_parameters(5.0).unwrap();
        assert!((p.gamma - 6.2021).abs() < 1e-4, "{}", p.gamma);
        assert!(p.side_condition() && p.gamma_in_regime);
        assert!((p.c_lambda - (2.0 + 33f64.sqrt())).abs() < 1e-15);
        assert!(bound_parameters(0.0).is_err());
    }

    #[test]
    fn sturm_eigenvalues_match_dense() {
        let diag = [0.3, -1.0, 2.5, 0.0, 0.0, 1.7, -0.4];
        let ev = tridiagonal_eigenvalues(&diag);
        let n = diag.len();
        let h = DMatrix::<f64>::from_fn(n, n, |i, j| if i == j { diag[i] } else if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
        let mut dense: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn band_counts_at_five() {
        let expect = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89];
        for k in 0..=10 {
            let s = approximant_spectrum(5.0, k, EDGE_TOL).unwrap();
            assert_eq!(s.len(), expect[k], "k={k}");
            assert!(s.is_well_formed());
        }
    }

    #[test]
    fn edges_agree_with_floquet_oracle() {
        for &(lambda, k) in &[(5.0, 6), (1.0, 7), (2.0, 5)] {
            let s = approximant_spectrum(lambda, k, EDGE_TOL).unwrap();
            let mut edges: Vec<f64> = s.bands.iter().flat_map(|b| [b.lo, b.hi]).collect();
            edges.sort_by(f64::total_cmp);
            let oracle = floquet_edges(lambda, k);
            if s.len() == fibonacci_number(k) as usize {
                assert_eq!(edges.len(), oracle.len());
                for (a, b) in edges.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-9, "lambda={lambda} k={k}: {a} vs {b}");
                }
            }
            for e in edges {
                assert!(oracle.iter().any(|o| (o - e).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn edges_satisfy_bisection_contract() {
        let s = approximant_spectrum(5.0, 8, EDGE_TOL).unwrap();
        for b in &s.bands {
            for e in [b.lo, b.hi] {
                let (x, dx) = fib_trace_and_slope(5.0, e, 8);
                assert!((x.abs() - 2.0).abs() <= 10.0 * EDGE_TOL * dx.abs() + 1e-12, "{x} {dx}");
            }
            for e in b.chebyshev_points(BAND_SAMPLES) {
                assert!(fib_trace_and_slope(5.0, e, 8).0.abs() <= 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn free_case_is_one_interval() {
        for k in [1, 4, 9] {
            let s = approximant_spectrum(0.0, k, EDGE_TOL).unwrap();
            assert_eq!(s.len(), 1, "{:?}", s.bands);
            assert!((s.bands[0].lo + 2.0).abs() < 1e-9 && (s.bands[0].hi - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn covering_for_several_couplings() {
        for lambda in [1.0, 2.0, 5.0] {
            let ladder = SpectrumLadder::new(lambda, 10, EDGE_TOL).unwrap();
            for m in 2..=9 {
                let r = covering_between(ladder.level(m - 1), ladder.level(m), ladder.level(m + 1), ladder.tol());
                assert!(r.holds, "lambda={lambda} m={m}: {:?}", r.violations);
            }
        }
    }

    #[test]
    fn covering_of_empty_level_is_vacuous() {
        let empty = BandSet { lambda: 5.0, k: 3, bands: vec![], warnings: vec![] };
        let r = covering_between(&empty, &empty, &empty, 1e-9);
        assert!(r.holds);
    }

    #[test]
    fn classification_and_genealogy_at_five() {
        let ladder = SpectrumLadder::new(5.0, 10, EDGE_TOL).unwrap();
        for k in 2..=8 {
            let set = classify_level(&ladder, k).unwrap();
            assert!(set.bands.iter().all(|b| b.kind != BandKind::Unclassified));
        }
        let g = genealogy_check(&ladder).unwrap();
        assert!(g.holds(), "{g:?}");
        assert!(g.type_a > 0 && g.type_b > 0);
    }

    #[test]
    fn f_pm_examples() {
        assert!((f_pm(2.0, 2.0, 1.0, Sign::Plus).unwrap() - 3.0).abs() < 1e-15);
        assert!((f_pm(2.0, 2.0, 1.0, Sign::Minus).unwrap() - 1.0).abs() < 1e-15);
        assert!(f_pm(3.0, 0.0, 0.1, Sign::Plus).is_err());
    }

    #[test]
    fn partials_match_finite_differences() {
        let (x, y, l) = (0.7, -1.3, 5.0);
        let h = 1e-6;
        for sign in [Sign::Plus, Sign::Minus] {
            let (dx, dy) = f_pm_partials(x, y, l, sign).unwrap();
            let fx = (f_pm(x + h, y, l, sign).unwrap() - f_pm(x - h, y, l, sign).unwrap()) / (2.0 * h);
            let fy = (f_pm(x, y + h, l, sign).unwrap() - f_pm(x, y - h, l, sign).unwrap()) / (2.0 * h);
            assert!((dx - fx).abs() < 1e-8 && (dy - fy).abs() < 1e-8);
        }
    }

    #[test]
    fn partial_bound_on_sobol_samples() {
        for lambda in [4.5, 5.0, 8.0] {
            let r = partial_bound_check(lambda, 10_000, 1e-12).unwrap();
            assert_eq!(r.violations, 0, "{r:?}");
        }
    }

    #[test]
    fn sobol_prefix() {
        let s = sobol2(4);
        assert_eq!(s, vec![[0.0, 0.0], [0.5, 0.5], [0.75, 0.25], [0.25, 0.75]]);
    }

    #[test]
    fn invariant_solved_for_middle_trace() {
        // at λ = 5 an orbit point with |x_k|, |x_{k-2}| ≤ 2 determines x_{k-1}
        let s = approximant_spectrum(5.0, 6, EDGE_TOL).unwrap();
        let mut checked = 0;
        for e in s.sample_energies(60) {
            let xs = trace_derivative_orbit(5.0, e, 6).xs;
            for k in 2..=6 {
                if xs[k].abs() <= 2.0 && xs[k - 2].abs() <= 2.0 {
                    let p = f_pm(xs[k], xs[k - 2], 5.0, Sign::Plus).unwrap();
                    let m = f_pm(xs[k], xs[k - 2], 5.0, Sign::Minus).unwrap();
                    let d = (p - xs[k - 1]).abs().min((m - xs[k - 1]).abs());
                    assert!(d < 1e-8 * xs[k - 1].abs().max(1.0));
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn derivative_ratios_at_five() {
        let ladder = SpectrumLadder::new(5.0, 8, EDGE_TOL).unwrap();
        let r = derivative_ratio_check(&ladder, 1e-6).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.max_ratio_a <= 16.0 + 1e-6 && r.max_ratio_b <= 32.0 + 1e-6);
        for w in r.max_slope.windows(2) {
            assert!(w[1] <= 32.0 * w[0].max(1.0));
        }
    }

    #[test]
    fn measure_table_at_five() {
        let ladder = SpectrumLadder::new(5.0, 10, EDGE_TOL).unwrap();
        let m = measure_report(&ladder).unwrap();
        let total: f64 = ladder.level(7).bands.iter().map(Band::width).sum();
        assert_eq!(m.rows[7].measure, total);
        assert!(m.decay_within(0.5), "{}", m.decay_exponent);
        assert!(m.width_rate_holds(1e-12));
        assert!(m.measure_decreasing);
    }

    #[test]
    fn trace_bounds() {
        let r = trace_bound_check(1.0, 10, 100).unwrap();
        assert!(r.holds && r.max_trace <= 5.0, "{r:?}");
        let r = trace_bound_check(5.0, 8, 100).unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn scale_to_level() {
        assert_eq!(level_for_scale(1.0), 1);
        assert_eq!(level_for_scale(2.0), 2);
        assert_eq!(level_for_scale(3.5), 4);
        assert_eq!(level_for_scale(89.0), 10);
        assert_eq!(level_for_scale(89.5), 11);
    }

    #[test]
    fn interval_helpers() {
        let a = [(0.0, 1.0), (2.0, 3.0)];
        let b = [(0.5, 2.5)];
        assert_eq!(interval_intersection(&a, &b), vec![(0.5, 1.0), (2.0, 2.5)]);
        let band = |lo, hi| Band { lo, hi, kind: BandKind::Unclassified, k: 0 };
        assert_eq!(interval_union(&[band(0.0, 1.0)], &[band(0.5, 2.0), band(3.0, 4.0)], 0.0), vec![(0.0, 2.0), (3.0, 4.0)]);
    }
}
