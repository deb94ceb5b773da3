//! Wave-packet dynamics from `ψ = δ_1`.
//!
//! Two independent routes give the time-averaged profile
//! `a(n, T) = (2/T) ∫₀^∞ e^{-2t/T} |ψ(t, n)|² dt`:
//! Chebyshev propagation with trapezoidal time quadrature, and the resolvent
//! identity `a(n, T) = (ε/π) ∫ |R(E + iε)δ_1(n)|² dE` with `ε = 1/T`.
//! Both act on the operator restricted to a finite window with Dirichlet ends,
//! for which the identity is exact.
//!
//! The remaining operations estimate growth exponents of the moments and
//! compare them with the lower bounds that follow from power-law estimates
//! on transfer matrices.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{
    potential_on, step_from_value, Geometry, LatticeWindow, Model, Potential, PotentialSpec,
};
use crate::mat2::{Mat2, C64};
use crate::numeric::{gauss_legendre, log_sum_exp, pairwise_sum, tree_sum_vectors};
use crate::spectra::{
    approximant_spectrum, bound_parameters, level_for_scale, linear_fit, BandSet, EDGE_TOL,
};
use crate::traces::fibonacci_number;

/// Time-average cutoff `t_max = c·T`; the neglected weight is `e^{-2c}`.
pub const TIME_CUTOFF: f64 = 6.0;
/// Sites added to the light-cone radius `2·t_max`.
pub const WINDOW_MARGIN: i64 = 64;
/// Amplitudes with `|ψ|²` below this are dropped from the active support.
pub const PRUNE_BELOW: f64 = 1e-40;
/// Target size of the neglected Chebyshev coefficient tail.
pub const CHEBYSHEV_TOL: f64 = 1e-16;
/// Largest Chebyshev order per propagation step.
pub const MAX_CHEBYSHEV_ORDER: usize = 4096;
/// Largest `r·τ` per propagation step.
const MAX_STEP_PHASE: f64 = 20.0;
/// Allowed deviation of `‖ψ(t)‖` from one.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Allowed `|ψ|²` at a window edge during propagation.
pub const EDGE_MASS_TOL: f64 = 1e-20;
/// Relative residual allowed for resolvent solves.
pub const RESIDUAL_TOL: f64 = 1e-12;
/// Relative amplitude allowed at the window edge of a single resolvent vector.
pub const RESOLVENT_EDGE_TOL: f64 = 1e-6;
/// Gauss-Legendre nodes per spectral tail.
const TAIL_NODES: usize = 48;

/// Light-cone radius `2·t_max` plus a margin covering the front's decaying
/// tail, which widens like `t_max^{1/3}`.
pub fn window_radius(t_avg: f64) -> i64 {
    let t_max = TIME_CUTOFF * t_avg;
    (2.0 * t_max + 10.0 * t_max.cbrt()).ceil() as i64 + WINDOW_MARGIN
}

/// Default window for a time average at scale `T`.
pub fn default_window(spec: &PotentialSpec, t_avg: f64) -> LatticeWindow {
    LatticeWindow::around_origin(window_radius(t_avg), spec.geometry)
}

fn origin_index(window: &LatticeWindow) -> Result<usize> {
    window.index_of(1).ok_or_else(|| Error::Domain(format!("window [{}, {}] does not contain site 1", window.lo, window.hi)))
}

fn check_window(spec: &PotentialSpec, window: &LatticeWindow) -> Result<()> {
    if spec.geometry != window.geometry {
        return Err(Error::Domain("window geometry differs from the potential's".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileMethod {
    TimeAverage,
    Resolvent,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeProfile {
    pub t_avg: f64,
    pub window: LatticeWindow,
    /// `a(n, T)` for `n = window.lo..=window.hi`.
    pub a: Vec<f64>,
    pub method: ProfileMethod,
}

impl AmplitudeProfile {
    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.a)
    }

    pub fn get(&self, n: i64) -> f64 {
        self.window.index_of(n).map_or(0.0, |i| self.a[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.window.sites().zip(self.a.iter().copied())
    }

    /// `Σ_n |a(n) - b(n)|` over a common window.
    pub fn l1_distance(&self, other: &AmplitudeProfile) -> Result<f64> {
        if self.window != other.window {
            return Err(Error::DimensionMismatch { expected: self.a.len(), got: other.a.len() });
        }
        let d: Vec<f64> = self.a.iter().zip(&other.a).map(|(x, y)| (x - y).abs()).collect();
        Ok(pairwise_sum(&d))
    }

    /// Mass on the outermost `sites` sites at each end.
    pub fn edge_mass(&self, sites: usize) -> f64 {
        let n = self.a.len();
        let s = sites.min(n / 2);
        pairwise_sum(&self.a[..s]) + pairwise_sum(&self.a[n - s..])
    }
}

/// Solves `(H - z)φ = δ_src` for the tridiagonal operator with diagonal `pot`.
pub fn solve_shifted(pot: &[f64], src: usize, z: C64) -> Vec<C64> {
    let mut rhs = vec![C64::new(0.0, 0.0); pot.len()];
    rhs[src] = C64::new(1.0, 0.0);
    solve_tridiagonal(pot, &rhs, z)
}

/// Solves `(H - z)φ = rhs`. With `Im z > 0` every pivot has imaginary part at
/// most `-Im z`, so the elimination needs no pivoting.
pub fn solve_tridiagonal(pot: &[f64], rhs: &[C64], z: C64) -> Vec<C64> {
    let n = pot.len();
    let mut cp = vec![C64::new(0.0, 0.0); n];
    let mut x = vec![C64::new(0.0, 0.0); n];
    let one = C64::new(1.0, 0.0);
    for i in 0..n {
        let b = pot[i] - z;
        let (denom, carry) = if i == 0 { (b, C64::new(0.0, 0.0)) } else { (b - cp[i - 1], x[i - 1]) };
        let inv = one / denom;
        cp[i] = inv;
        x[i] = (rhs[i] - carry) * inv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let next = x[i + 1];
        x[i] -= cp[i] * next;
    }
    x
}

fn residual_norm(pot: &[f64], src: usize, z: C64, phi: &[C64]) -> f64 {
    let n = phi.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut r = (pot[i] - z) * phi[i];
        if i > 0 {
            r += phi[i - 1];
        }
        if i + 1 < n {
            r += phi[i + 1];
        }
        if i == src {
            r -= 1.0;
        }
        s += r.norm_sqr();
    }
    s.sqrt()
}

/// `φ = R(z)δ_1` on `window`.
///
/// Fails if the relative residual exceeds [`RESIDUAL_TOL`] or the amplitude at
/// a truncated window edge exceeds [`RESOLVENT_EDGE_TOL`] of the maximum.
pub fn resolvent_vector(spec: &PotentialSpec, z: C64, window: &LatticeWindow) -> Result<Vec<C64>> {
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("resolvent needs Im z > 0, got {z}")));
    }
    check_window(spec, window)?;
    let src = origin_index(window)?;
    let pot = potential_on(spec, window)?;
    let phi = solve_shifted(&pot, src, z);
    let norm = phi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let res = residual_norm(&pot, src, z, &phi);
    if res > RESIDUAL_TOL * norm.max(1.0) {
        return Err(Error::Accuracy(format!("resolvent residual {res:e} at z={z}")));
    }
    let peak = phi.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let n = phi.len();
    let mut edges = vec![phi[n - 1].norm()];
    // the half-line boundary at site 0 is part of the operator
    if window.geometry == Geometry::WholeLine {
        edges.push(phi[0].norm());
    }
    let edge = edges.into_iter().fold(0.0, f64::max);
    if n > 1 && edge > RESOLVENT_EDGE_TOL * peak {
        return Err(Error::Truncation(format!(
            "resolvent amplitude {:.3e} of peak at the window edge; enlarge [{}, {}]",
            edge / peak,
            window.lo,
            window.hi
        )));
    }
    Ok(phi)
}

/// Energy quadrature for the resolvent route: composite midpoint on
/// `[lo, hi]` plus Gauss-Legendre on both tails after `E = c ± (1-u)/u`.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub tail_nodes: usize,
}

impl EnergyGrid {
    /// Grid with spacing at most `ε/4` over the padded spectral window of `spec`.
    pub fn for_profile(spec: &PotentialSpec, window: &LatticeWindow, t_avg: f64) -> Result<Self> {
        let pot = potential_on(spec, window)?;
        let (vmin, vmax) = potential_range(&pot);
        let lam = spec.lambda.abs();
        let lo = (-3.0 - lam).min(vmin - 3.0);
        let hi = (3.0 + lam).max(vmax + 3.0);
        let eps = 1.0 / t_avg;
        let points = ((hi - lo) / (0.25 * eps)).ceil() as usize;
        Ok(EnergyGrid { lo, hi, points, tail_nodes: TAIL_NODES })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.points as f64
    }

    /// Rejects spacings coarser than `ε/4` and grids that miss the spectrum.
    pub fn validate(&self, eps: f64, vmin: f64, vmax: f64) -> Result<()> {
        if self.points == 0 || !(self.hi > self.lo) {
            return Err(Error::InvalidGrid("empty energy range".into()));
        }
        if self.spacing() > 0.25 * eps * (1.0 + 1e-12) {
            return Err(Error::InvalidGrid(format!("spacing {:e} exceeds eps/4 = {:e}", self.spacing(), 0.25 * eps)));
        }
        if self.lo > vmin - 2.5 || self.hi < vmax + 2.5 {
            return Err(Error::InvalidGrid(format!("[{}, {}] does not pad the spectrum", self.lo, self.hi)));
        }
        Ok(())
    }

    /// `(E, weight)` pairs of the full quadrature.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let h = self.spacing();
        let mut out: Vec<(f64, f64)> = (0..self.points).map(|i| (self.lo + (i as f64 + 0.5) * h, h)).collect();
        let (x, w) = gauss_legendre(self.tail_nodes);
        for (xi, wi) in x.iter().zip(&w) {
            let u = 0.5 * (xi + 1.0);
            let jac = 0.5 * wi / (u * u);
            let d = (1.0 - u) / u;
            out.push((self.hi + d, jac));
            out.push((self.lo - d, jac));
        }
        out
    }

    /// Same range at half the spacing.
    pub fn refined(&self) -> Self {
        EnergyGrid { points: 2 * self.points, ..self.clone() }
    }
}

fn potential_range(pot: &[f64]) -> (f64, f64) {
    let vmin = pot.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = pot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (vmin, vmax)
}

/// Energies per parallel task; fixed so the reduction tree is too.
const ENERGY_CHUNK: usize = 64;

/// `a(n, T)` from resolvent data on `window`.
pub fn profile_resolvent(
    spec: &PotentialSpec,
    t_avg: f64,
    window: &LatticeWindow,
    grid: &EnergyGrid,
) -> Result<AmplitudeProfile> {
    if !(t_avg > 0.0) {
        return Err(Error::Domain(format!("T must be positive, got {t_avg}")));
    }
    check_window(spec, window)?;
    let src = origin_index(window)?;
    let pot = potential_on(spec, window)?;
    let (vmin, vmax) = potential_range(&pot);
    let eps = 1.0 / t_avg;
    grid.validate(eps, vmin, vmax)?;
    let nodes = grid.nodes();
    let parts: Vec<Vec<f64>> = nodes
        .par_chunks(ENERGY_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; pot.len()];
            for &(e, w) in chunk {
                let phi = solve_shifted(&pot, src, C64::new(e, eps));
                for (a, p) in acc.iter_mut().zip(&phi) {
                    *a += w * p.norm_sqr();
                }
            }
            acc
        })
        .collect();
    let mut a = tree_sum_vectors(parts);
    // midpoint end correction (h²/24)(f'(hi) - f'(lo)), f' = 2 Re(φ̄ · Rφ)
    let h2 = grid.spacing().powi(2) / 24.0;
    for (e, sign) in [(grid.hi, 1.0), (grid.lo, -1.0)] {
        let z = C64::new(e, eps);
        let phi = solve_shifted(&pot, src, z);
        let dphi = solve_tridiagonal(&pot, &phi, z);
        for ((x, p), d) in a.iter_mut().zip(&phi).zip(&dphi) {
            *x += sign * h2 * 2.0 * (p.conj() * d).re;
        }
    }
    for x in a.iter_mut() {
        *x = (*x * eps / PI).max(0.0);
    }
    Ok(AmplitudeProfile { t_avg, window: *window, a, method: ProfileMethod::Resolvent })
}

/// Largest relative change of `a(n, T)` at `sites` when the midpoint spacing
/// is halved.
pub fn resolvent_richardson(
    spec: &PotentialSpec,
    t_avg: f64,
    window: &LatticeWindow,
    grid: &EnergyGrid,
    sites: &[i64],
) -> Result<f64> {
    let coarse = profile_resolvent(spec, t_avg, window, grid)?;
    let fine = profile_resolvent(spec, t_avg, window, &grid.refined())?;
    Ok(sites
        .iter()
        .map(|&n| {
            let (c, f) = (coarse.get(n), fine.get(n));
            (c - f).abs() / f.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max))
}

/// `J_0(x), ..., J_K(x)` with `K` the smallest order whose certified tail
/// `2 Σ_{k>K} |J_k(x)|` is below `tol`.
pub fn bessel_coefficients(x: f64, tol: f64, max_order: usize) -> Result<Vec<f64>> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("Bessel argument must be finite and nonnegative, got {x}")));
    }
    if x == 0.0 {
        return Ok(vec![1.0]);
    }
    // |J_k(x)| ≤ (x/2)^k / k!, summed geometrically once k + 2 > x
    let mut order = 0usize;
    let mut log_term = 0.0f64; // ln((x/2)^(K+1)/(K+1)!) for K = order
    loop {
        log_term += (0.5 * x).ln() - ((order + 1) as f64).ln();
        let ratio = 0.5 * x / (order + 2) as f64;
        if ratio < 1.0 {
            let tail = 2.0 * log_term.exp() / (1.0 - ratio);
            if tail <= tol {
                break;
            }
        }
        order += 1;
        if order > max_order {
            return Err(Error::Accuracy(format!("Chebyshev order above {max_order} needed for phase {x}")));
        }
    }
    // Miller's backward recurrence from well above the cutoff
    let start = order + 20 + (x as usize) / 2;
    let start = start + start % 2;
    let mut j = vec![0.0f64; start + 2];
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    j.truncate(order + 1);
    for v in j.iter_mut() {
        *v /= norm;
    }
    Ok(j)
}

/// Chebyshev propagator for the windowed operator, tracking the occupied range.
struct Propagator {
    pot: Vec<f64>,
    center: f64,
    radius: f64,
    scratch: [Vec<C64>; 3],
}

impl Propagator {
    fn new(pot: Vec<f64>) -> Self {
        let (vmin, vmax) = potential_range(&pot);
        let n = pot.len();
        let zero = vec![C64::new(0.0, 0.0); n];
        Propagator {
            center: 0.5 * (vmin + vmax),
            radius: 0.5 * (vmax - vmin) + 2.0,
            pot,
            scratch: [zero.clone(), zero.clone(), zero],
        }
    }

    /// `out = (H - c)/r · v` on `lo..=hi`, treating `v` as zero outside.
    fn apply_scaled(pot: &[f64], center: f64, radius: f64, v: &[C64], out: &mut [C64], lo: usize, hi: usize) {
        let inv = 1.0 / radius;
        for i in lo..=hi {
            let mut s = v[i] * (pot[i] - center);
            if i > lo {
                s += v[i - 1];
            }
            if i < hi {
                s += v[i + 1];
            }
            out[i] = s * inv;
        }
    }

    /// `ψ ← e^{-iHτ} ψ`, with `support` the index range outside which `ψ = 0`.
    fn step(&mut self, psi: &mut [C64], support: &mut (usize, usize), tau: f64) -> Result<()> {
        let n = psi.len();
        let coeffs = bessel_coefficients(self.radius * tau, CHEBYSHEV_TOL, MAX_CHEBYSHEV_ORDER)?;
        let (lo0, hi0) = *support;
        let [prev, cur, next] = &mut self.scratch;
        let (mut lo, mut hi) = (lo0, hi0);
        let mut acc = vec![C64::new(0.0, 0.0); n];
        // φ_0 = ψ, φ_1 = H̃ψ, φ_{k+1} = 2H̃φ_k - φ_{k-1}
        prev[lo..=hi].copy_from_slice(&psi[lo..=hi]);
        let phase = |k: usize| -> C64 {
            // (2 - δ_k0) (-i)^k
            let m = if k == 0 { 1.0 } else { 2.0 };
            match k % 4 {
                0 => C64::new(m, 0.0),
                1 => C64::new(0.0, -m),
                2 => C64::new(-m, 0.0),
                _ => C64::new(0.0, m),
            }
        };
        let c0 = phase(0) * coeffs[0];
        for i in lo..=hi {
            acc[i] = c0 * prev[i];
        }
        if coeffs.len() > 1 {
            lo = lo.saturating_sub(1);
            hi = (hi + 1).min(n - 1);
            for v in &mut cur[lo..=hi] {
                *v = C64::new(0.0, 0.0);
            }
            for i in [lo, hi] {
                if i < lo0 || i > hi0 {
                    prev[i] = C64::new(0.0, 0.0);
                }
            }
            Self::apply_scaled(&self.pot, self.center, self.radius, prev, cur, lo, hi);
            let c1 = phase(1) * coeffs[1];
            for i in lo..=hi {
                acc[i] += c1 * cur[i];
            }
        }
        for (k, &jk) in coeffs.iter().enumerate().skip(2) {
            let (plo, phi) = (lo, hi);
            lo = lo.saturating_sub(1);
            hi = (hi + 1).min(n - 1);
            if lo < plo {
                cur[lo] = C64::new(0.0, 0.0);
                prev[lo] = C64::new(0.0, 0.0);
            }
            if hi > phi {
                cur[hi] = C64::new(0.0, 0.0);
                prev[hi] = C64::new(0.0, 0.0);
            }
            Self::apply_scaled(&self.pot, self.center, self.radius, cur, next, lo, hi);
            let ck = phase(k) * jk;
            for i in lo..=hi {
                let v = 2.0 * next[i] - prev[i];
                next[i] = v;
                acc[i] += ck * v;
            }
            std::mem::swap(prev, cur);
            std::mem::swap(cur, next);
        }
        let rot = C64::from_polar(1.0, -self.center * tau);
        for i in lo0.min(lo)..=hi0.max(hi) {
            psi[i] = acc[i] * rot;
        }
        // shrink the support to where the state is not negligible
        let (mut a, mut b) = (lo, hi);
        while a < b && psi[a].norm_sqr() < PRUNE_BELOW {
            psi[a] = C64::new(0.0, 0.0);
            a += 1;
        }
        while b > a && psi[b].norm_sqr() < PRUNE_BELOW {
            psi[b] = C64::new(0.0, 0.0);
            b -= 1;
        }
        *support = (a, b);
        Ok(())
    }
}

/// Stepwise evolution of `δ_1` on a window.
struct Evolution {
    prop: Propagator,
    psi: Vec<C64>,
    support: (usize, usize),
    max_edge_mass: f64,
}

impl Evolution {
    fn new(spec: &PotentialSpec, window: &LatticeWindow) -> Result<Self> {
        check_window(spec, window)?;
        let src = origin_index(window)?;
        let pot = potential_on(spec, window)?;
        let mut psi = vec![C64::new(0.0, 0.0); pot.len()];
        psi[src] = C64::new(1.0, 0.0);
        Ok(Evolution { prop: Propagator::new(pot), psi, support: (src, src), max_edge_mass: 0.0 })
    }

    fn advance(&mut self, tau: f64) -> Result<()> {
        let pieces = (self.prop.radius * tau / MAX_STEP_PHASE).ceil().max(1.0) as usize;
        for _ in 0..pieces {
            self.prop.step(&mut self.psi, &mut self.support, tau / pieces as f64)?;
        }
        let n = self.psi.len();
        let edge = self.psi[n - 1].norm_sqr().max(self.psi[0].norm_sqr());
        self.max_edge_mass = self.max_edge_mass.max(edge);
        Ok(())
    }

    fn norm_sqr(&self) -> f64 {
        let (lo, hi) = self.support;
        let v: Vec<f64> = self.psi[lo..=hi].iter().map(|x| x.norm_sqr()).collect();
        pairwise_sum(&v)
    }

    fn check(&self, window: &LatticeWindow, t: f64) -> Result<()> {
        let dev = (self.norm_sqr().sqrt() - 1.0).abs();
        if dev > UNITARITY_TOL {
            return Err(Error::Accuracy(format!("norm drift {dev:e} at t={t}")));
        }
        // the half-line boundary at site 0 is physical, only the far edge truncates
        if self.max_edge_mass > EDGE_MASS_TOL {
            let which = if window.geometry == Geometry::WholeLine { "an edge" } else { "the far edge" };
            let n = self.psi.len();
            let far = self.psi[n - 1].norm_sqr();
            if window.geometry == Geometry::WholeLine || far > EDGE_MASS_TOL {
                return Err(Error::Truncation(format!(
                    "|psi|^2 reached {:.3e} at {which} of [{}, {}] by t={t}",
                    self.max_edge_mass, window.lo, window.hi
                )));
            }
        }
        Ok(())
    }
}

/// `ψ(t) = e^{-itH}δ_1` on `window`.
pub fn evolve_state(spec: &PotentialSpec, t: f64, window: &LatticeWindow) -> Result<Vec<C64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")));
    }
    let mut ev = Evolution::new(spec, window)?;
    if t > 0.0 {
        ev.advance(t)?;
    }
    ev.check(window, t)?;
    Ok(ev.psi)
}

/// Trapezoid step for the time average: below `π/W` for spectral width `W`,
/// so no frequency of `|ψ(t, n)|²` aliases, and below `T/20`.
pub fn time_step(pot: &[f64], t_avg: f64) -> f64 {
    let (vmin, vmax) = potential_range(pot);
    let width = vmax - vmin + 4.0;
    (PI / width).min(t_avg / 20.0)
}

/// `a(n, T)` by time integration up to `c·T`.
pub fn profile_time(spec: &PotentialSpec, t_avg: f64, window: &LatticeWindow) -> Result<AmplitudeProfile> {
    if !(t_avg > 0.0 && t_avg.is_finite()) {
        return Err(Error::Domain(format!("T must be positive, got {t_avg}")));
    }
    let mut ev = Evolution::new(spec, window)?;
    let t_max = TIME_CUTOFF * t_avg;
    let h0 = time_step(&ev.prop.pot, t_avg);
    let steps = (t_max / h0).ceil() as usize;
    let h = t_max / steps as f64;
    // trapezoid weights; the total is rescaled at the end so the weight integrates exactly
    let raw: Vec<f64> = (0..=steps)
        .map(|j| {
            let end = if j == 0 || j == steps { 0.5 } else { 1.0 };
            end * h * (2.0 / t_avg) * (-2.0 * j as f64 * h / t_avg).exp()
        })
        .collect();
    let mut a = vec![0.0; ev.psi.len()];
    for (j, w) in raw.iter().enumerate() {
        if j > 0 {
            ev.advance(h)?;
        }
        let (lo, hi) = ev.support;
        for i in lo..=hi {
            a[i] += w * ev.psi[i].norm_sqr();
        }
    }
    ev.check(window, t_max)?;
    // end correction (h²/12) f'(0); d|ψ(n)|²/dt vanishes at t = 0, leaving
    // the weight's slope at site 1 (the far end carries e^{-2c})
    a[origin_index(window)?] -= h * h / 12.0 * 4.0 / (t_avg * t_avg);
    let exact = 1.0 - (-2.0 * TIME_CUTOFF).exp();
    let scale = exact / pairwise_sum(&a);
    for x in a.iter_mut() {
        *x = (*x * scale).max(0.0);
    }
    Ok(AmplitudeProfile { t_avg, window: *window, a, method: ProfileMethod::TimeAverage })
}

/// `ln Σ_n |n|^p a(n, T)`.
pub fn log_moment(profile: &AmplitudeProfile, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("moment order must be positive, got {p}")));
    }
    let terms: Vec<f64> = profile
        .iter()
        .filter(|&(n, a)| n != 0 && a > 0.0)
        .map(|(n, a)| p * (n.unsigned_abs() as f64).ln() + a.ln())
        .collect();
    if terms.is_empty() {
        return Err(Error::InsufficientData("profile has no mass away from site 0".into()));
    }
    Ok(log_sum_exp(&terms))
}

/// `S(γ, T) = Σ_{|n| ≥ T^γ - 2} a(n, T)`.
pub fn outside_probability(profile: &AmplitudeProfile, gamma: f64) -> f64 {
    let threshold = profile.t_avg.powf(gamma) - 2.0;
    let v: Vec<f64> = profile.iter().filter(|&(n, _)| (n.abs() as f64) >= threshold).map(|(_, a)| a).collect();
    pairwise_sum(&v)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentSeries {
    pub p: f64,
    /// `(T, ln⟨|X|^p⟩(T))`, `T` increasing.
    pub points: Vec<(f64, f64)>,
    pub model: String,
}

impl MomentSeries {
    pub fn from_profiles(profiles: &[AmplitudeProfile], p: f64, model: &str) -> Result<Self> {
        let mut points = profiles.iter().map(|pr| Ok((pr.t_avg, log_moment(pr, p)?))).collect::<Result<Vec<_>>>()?;
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Domain("times in a moment series must be distinct".into()));
        }
        Ok(MomentSeries { p, points, model: model.to_string() })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthEstimate {
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope from the fit residuals.
    pub half_width: f64,
    pub points_used: usize,
}

/// Least-squares slope of `ln⟨|X|^p⟩` against `ln T` over the larger-`T` half.
pub fn growth_exponent(series: &MomentSeries) -> Result<GrowthEstimate> {
    let pts = &series.points;
    if pts.len() < 5 {
        return Err(Error::InsufficientData(format!("{} points, need at least 5", pts.len())));
    }
    let span = (pts[pts.len() - 1].0 / pts[0].0).log10();
    if span < 1.5 - 1e-12 {
        return Err(Error::InsufficientData(format!("T spans {span:.2} decades, need 1.5")));
    }
    if pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::InsufficientData("non-finite log moment".into()));
    }
    let used = &pts[pts.len() / 2..];
    let x: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = used.iter().map(|p| p.1).collect();
    let (slope, intercept) = linear_fit(&x, &y)?;
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let half_width = if used.len() > 2 { 2.0 * (rss / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(GrowthEstimate { slope, intercept, half_width, points_used: used.len() })
}

/// Lower-bound formulas for `β^-(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum BoundFormula {
    /// Free motion: the slope equals `p`.
    Ballistic,
    /// `‖T(n,m;E₀)‖ ≤ C (|n| + |m|)^α`: `(p - 1 - 4α)/(1 + α)`.
    OneEnergy { alpha: f64 },
    /// `‖T(n,1;E₀)‖ ≤ C|n|^η`: `(p - 1 - 8η)/(1 + 2η)`.
    SingleSite { eta: f64 },
    /// Bounded norms on `|n|·|E - E₀|^θ ≤ 1`: `p - 1/θ`.
    ThetaWindow { theta: f64 },
    /// Fibonacci, any coupling: one-energy formula with `α(λ)`.
    FibonacciAllCouplings { lambda: f64 },
    /// Fibonacci, `λ > 4`: `(p - γ - 3α)/(1 + α)`.
    FibonacciStrongCoupling { lambda: f64 },
    /// Period doubling: `(p - 5)/2`.
    PeriodDoubling,
    /// Thue-Morse: `p - 1`.
    ThueMorse,
}

impl BoundFormula {
    pub fn id(&self) -> &'static str {
        match self {
            BoundFormula::Ballistic => "ballistic",
            BoundFormula::OneEnergy { .. } => "one_energy",
            BoundFormula::SingleSite { .. } => "single_site_eta",
            BoundFormula::ThetaWindow { .. } => "theta_window",
            BoundFormula::FibonacciAllCouplings { .. } => "fibonacci_all_couplings",
            BoundFormula::FibonacciStrongCoupling { .. } => "fibonacci_strong_coupling",
            BoundFormula::PeriodDoubling => "period_doubling",
            BoundFormula::ThueMorse => "thue_morse",
        }
    }

    pub fn expression(&self) -> &'static str {
        match self {
            BoundFormula::Ballistic => "p",
            BoundFormula::OneEnergy { .. } | BoundFormula::FibonacciAllCouplings { .. } => "(p-1-4a)/(1+a)",
            BoundFormula::SingleSite { .. } => "(p-1-8eta)/(1+2eta)",
            BoundFormula::ThetaWindow { .. } => "p-1/theta",
            BoundFormula::FibonacciStrongCoupling { .. } => "(p-g-3a)/(1+a)",
            BoundFormula::PeriodDoubling => "(p-5)/2",
            BoundFormula::ThueMorse => "p-1",
        }
    }

    /// Lower bound on the growth exponent of the `p`-th moment.
    pub fn slope(&self, p: f64) -> Result<f64> {
        Ok(match *self {
            BoundFormula::Ballistic => p,
            BoundFormula::OneEnergy { alpha } => (p - 1.0 - 4.0 * alpha) / (1.0 + alpha),
            BoundFormula::SingleSite { eta } => (p - 1.0 - 8.0 * eta) / (1.0 + 2.0 * eta),
            BoundFormula::ThetaWindow { theta } => p - 1.0 / theta,
            BoundFormula::FibonacciAllCouplings { lambda } => {
                let a = bound_parameters(lambda)?.alpha;
                (p - 1.0 - 4.0 * a) / (1.0 + a)
            }
            BoundFormula::FibonacciStrongCoupling { lambda } => {
                let b = bound_parameters(lambda)?;
                if !b.gamma_in_regime {
                    return Err(Error::Domain(format!("strong-coupling bound needs lambda > 4, got {lambda}")));
                }
                (p - b.gamma - 3.0 * b.alpha) / (1.0 + b.alpha)
            }
            BoundFormula::PeriodDoubling => (p - 5.0) / 2.0,
            BoundFormula::ThueMorse => p - 1.0,
        })
    }
}

/// The good set `A(N)` of a power-law input.
#[derive(Debug, Clone, Serialize)]
pub enum GoodSet {
    SingleEnergy(f64),
    /// `[E₀ - N^{-1/θ}, E₀ + N^{-1/θ}]`
    ThetaWindow { e0: f64, theta: f64 },
    /// `σ_k` with `F_{k-1} < N ≤ F_k`.
    FibonacciApproximant { lambda: f64 },
    /// Any set with `|B(T)| = c N^{-γ}`.
    MeasureLaw { c: f64, gamma: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremOneInput {
    pub alpha: f64,
    pub good_set: GoodSet,
    /// `A(N) ⊆ [-K, K]`.
    pub k_bound: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TheoremOneBound {
    pub t_avg: f64,
    pub n_scale: f64,
    pub b_measure: f64,
    /// `ln(|B(T)| N^{p+1-2α} / T)`, the moment bound up to `ln Ĉ`.
    pub log_moment_bound: f64,
    /// `ln(|B(T)| N^{1-2α} / T)`, the outside-mass bound up to `ln Ĉ`.
    pub log_outside_bound: f64,
}

fn dilated_measure(set: &BandSet, r: f64) -> f64 {
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for b in &set.bands {
        let (lo, hi) = (b.lo - r, b.hi + r);
        cur = match cur {
            Some((a, c)) if lo <= c => Some((a, c.max(hi))),
            Some((a, c)) => {
                total += c - a;
                Some((lo, hi))
            }
            None => Some((lo, hi)),
        };
    }
    total + cur.map_or(0.0, |(a, c)| c - a)
}

impl TheoremOneInput {
    /// `N(T) = T^{1/(1+α)}`.
    pub fn n_scale(&self, t_avg: f64) -> f64 {
        t_avg.powf(1.0 / (1.0 + self.alpha))
    }

    /// `|B(T)|` for the `1/T`-neighbourhood of `A(N(T))`.
    pub fn b_measure(&self, t_avg: f64) -> Result<f64> {
        let n = self.n_scale(t_avg);
        let r = 1.0 / t_avg;
        let m = match &self.good_set {
            GoodSet::SingleEnergy(e) => {
                self.check_range(*e, *e)?;
                2.0 * r
            }
            GoodSet::ThetaWindow { e0, theta } => {
                let half = n.powf(-1.0 / theta);
                self.check_range(e0 - half, e0 + half)?;
                2.0 * (half + r)
            }
            GoodSet::FibonacciApproximant { lambda } => {
                let set = approximant_spectrum(*lambda, level_for_scale(n), EDGE_TOL)?;
                if let (Some(first), Some(last)) = (set.bands.first(), set.bands.last()) {
                    self.check_range(first.lo, last.hi)?;
                }
                dilated_measure(&set, r)
            }
            GoodSet::MeasureLaw { c, gamma } => c * n.powf(-gamma),
        };
        Ok(m)
    }

    fn check_range(&self, lo: f64, hi: f64) -> Result<()> {
        if lo < -self.k_bound || hi > self.k_bound {
            return Err(Error::Domain(format!("good set [{lo}, {hi}] leaves [-K, K] with K={}", self.k_bound)));
        }
        Ok(())
    }
}

/// The moment and outside-mass lower bounds at time scale `T`, up to the
/// unspecified constant.
pub fn theorem1_bound(input: &TheoremOneInput, t_avg: f64, p: f64) -> Result<TheoremOneBound> {
    if !(input.alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha must be nonnegative, got {}", input.alpha)));
    }
    if !(t_avg > 1.0) {
        return Err(Error::Domain(format!("T must exceed 1, got {t_avg}")));
    }
    let n = input.n_scale(t_avg);
    let b = input.b_measure(t_avg)?;
    if !(b > 0.0) {
        return Err(Error::Domain("the good set has empty neighbourhood".into()));
    }
    let base = b.ln() - t_avg.ln();
    Ok(TheoremOneBound {
        t_avg,
        n_scale: n,
        b_measure: b,
        log_moment_bound: base + (p + 1.0 - 2.0 * input.alpha) * n.ln(),
        log_outside_bound: base + (1.0 - 2.0 * input.alpha) * n.ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    SoftFail,
    OutOfRegime,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub model: String,
    pub lambda: f64,
    pub formula_id: String,
    pub formula: String,
    pub p: f64,
    /// Finite-time estimate of `β^-(p)`.
    pub measured_slope: f64,
    pub confidence_half_width: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    /// Times dropped because they exceeded the work budget.
    pub skipped_times: Vec<f64>,
    pub series: MomentSeries,
}

/// Compares a measured slope with a formula's bound.
pub fn judge(formula: &BoundFormula, p: f64, slope: f64, tol: f64) -> Result<(f64, Verdict)> {
    let bound = formula.slope(p)?;
    let verdict = match formula {
        BoundFormula::Ballistic if (slope - bound).abs() <= tol => Verdict::Pass,
        BoundFormula::Ballistic => Verdict::SoftFail,
        _ if bound <= 0.0 => Verdict::OutOfRegime,
        _ if slope >= bound - tol => Verdict::Pass,
        _ => Verdict::SoftFail,
    };
    Ok((bound, verdict))
}

/// Work estimate (site updates) for a time-averaged profile on a window of
/// the given radius.
pub fn profile_cost(t_avg: f64, radius: i64) -> f64 {
    TIME_CUTOFF * t_avg * 8.0 * 2.0 * radius as f64
}

/// Time-averaged profiles for every `T` in `times`, skipping those whose
/// estimated cost exceeds `budget`. `radius` overrides [`window_radius`].
pub fn profile_sweep(
    spec: &PotentialSpec,
    times: &[f64],
    radius: Option<i64>,
    budget: f64,
) -> Result<(Vec<AmplitudeProfile>, Vec<f64>)> {
    let window_for = |t: f64| LatticeWindow::around_origin(radius.unwrap_or_else(|| window_radius(t)), spec.geometry);
    let (run, skipped): (Vec<f64>, Vec<f64>) =
        times.iter().partition(|&&t| profile_cost(t, window_for(t).len() as i64 / 2) <= budget);
    let profiles = run.par_iter().map(|&t| profile_time(spec, t, &window_for(t))).collect::<Result<Vec<_>>>()?;
    Ok((profiles, skipped))
}

/// Moment growth for each `p` against `formula`, from precomputed profiles.
pub fn reports_from_profiles(
    spec: &PotentialSpec,
    profiles: &[AmplitudeProfile],
    skipped: &[f64],
    p_list: &[f64],
    formula: BoundFormula,
    tol: f64,
) -> Result<Vec<BoundReport>> {
    p_list
        .iter()
        .map(|&p| {
            let series = MomentSeries::from_profiles(profiles, p, spec.model.short_name())?;
            let fit = growth_exponent(&series)?;
            let (bound, verdict) = judge(&formula, p, fit.slope, tol)?;
            Ok(BoundReport {
                model: spec.model.short_name().to_string(),
                lambda: spec.lambda,
                formula_id: formula.id().to_string(),
                formula: formula.expression().to_string(),
                p,
                measured_slope: fit.slope,
                confidence_half_width: fit.half_width,
                bound,
                tolerance: tol,
                verdict,
                skipped_times: skipped.to_vec(),
                series,
            })
        })
        .collect()
}

/// Moment growth for each `p` against `formula`.
pub fn bound_report(
    spec: &PotentialSpec,
    p_list: &[f64],
    times: &[f64],
    formula: BoundFormula,
    tol: f64,
    budget: f64,
) -> Result<Vec<BoundReport>> {
    let (profiles, skipped) = profile_sweep(spec, times, None, budget)?;
    if profiles.len() < 5 {
        return Err(Error::Resource(format!(
            "only {} of {} times fit the work budget {budget:e}",
            profiles.len(),
            times.len()
        )));
    }
    if !skipped.is_empty() {
        log::warn!("budget exceeded: skipped T = {skipped:?}");
    }
    reports_from_profiles(spec, &profiles, &skipped, p_list, formula, tol)
}

/// The bound formula matching a model and coupling.
pub fn default_formula(model: Model, lambda: f64) -> Result<BoundFormula> {
    Ok(match model {
        Model::Free => BoundFormula::Ballistic,
        Model::ThueMorse => BoundFormula::ThueMorse,
        Model::PeriodDoubling => BoundFormula::PeriodDoubling,
        Model::Fibonacci if lambda > 4.0 => BoundFormula::FibonacciStrongCoupling { lambda },
        Model::Fibonacci => BoundFormula::FibonacciAllCouplings { lambda },
        Model::ExplicitPeriodic => return Err(Error::Domain("no lower-bound formula for periodic potentials".into())),
    })
}

/// `‖T(m,1;E)‖` for `m = 1..=m_max` and, on the whole line, `‖T(m,1;E)‖` for
/// `m = 0, -1, ..., 1 - m_max` (as `‖T(1,m;E)‖`).
fn norm_sweep(spec: &PotentialSpec, energy: C64, m_max: usize) -> Result<Vec<(i64, f64)>> {
    let pot = Potential::new(spec)?;
    let mut out = Vec::with_capacity(2 * m_max);
    let mut t = Mat2::IDENTITY;
    out.push((1, 1.0));
    for m in 2..=m_max as i64 {
        t = pot.step(m, energy)? * t;
        if !t.is_finite() {
            return Err(Error::ScaleOverflow { steps: m as usize });
        }
        out.push((m, t.norm()));
    }
    if spec.geometry == Geometry::WholeLine {
        // T(1, j-1) = A(1) A(0) ··· A(j)
        let mut t = Mat2::IDENTITY;
        for j in (2 - m_max as i64..=1).rev() {
            t = t * pot.step(j, energy)?;
            if !t.is_finite() {
                return Err(Error::ScaleOverflow { steps: (2 - j) as usize });
            }
            out.push((j - 1, t.norm()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerLawReport {
    pub energy: f64,
    pub alpha: f64,
    pub m_max: usize,
    /// `max_m ‖T(m,1;E)‖ / |m|^α`, the smallest admissible constant.
    pub c_estimate: f64,
    pub argmax: i64,
    pub max_norm: f64,
    /// Sites where the ratio exceeds the supplied constant.
    pub violations: usize,
}

/// `‖T(m,1;E)‖ / |m|^α` over `1 ≤ |m| ≤ m_max` (`m ≥ 1` on the half-line).
pub fn powerlaw_check(
    spec: &PotentialSpec,
    energy: f64,
    alpha: f64,
    m_max: usize,
    c_bound: Option<f64>,
) -> Result<PowerLawReport> {
    if m_max < 2 {
        return Err(Error::Domain(format!("m_max must be at least 2, got {m_max}")));
    }
    let norms = norm_sweep(spec, C64::new(energy, 0.0), m_max)?;
    let mut report =
        PowerLawReport { energy, alpha, m_max, c_estimate: 0.0, argmax: 1, max_norm: 0.0, violations: 0 };
    for (m, norm) in norms {
        if m == 0 {
            continue;
        }
        let ratio = norm / (m.unsigned_abs() as f64).powf(alpha);
        report.max_norm = report.max_norm.max(norm);
        if ratio > report.c_estimate {
            report.c_estimate = ratio;
            report.argmax = m;
        }
        if c_bound.is_some_and(|c| ratio > c) {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Zeckendorf indices `m_0 < ... < m_N` with `m = Σ F_{m_l}`, indices `≥ 1`
/// and gaps at least 2.
pub fn zeckendorf(m: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Domain("zeckendorf coding needs m >= 1".into()));
    }
    let mut fibs = vec![(1usize, 1u64)];
    while let Some(&(i, f)) = fibs.last() {
        let next = fibonacci_number(i + 1);
        if next > m || next < f {
            break;
        }
        fibs.push((i + 1, next));
    }
    let mut rest = m;
    let mut out = Vec::new();
    for &(i, f) in fibs.iter().rev() {
        if f <= rest {
            out.push(i);
            rest -= f;
        }
    }
    out.reverse();
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct StepBoundReport {
    pub energy: f64,
    pub m_max: usize,
    /// `max_m (ln‖T(m,1;E)‖ - m_N ln d)`; nonpositive when the bound holds.
    pub max_log_excess: f64,
    pub violations: usize,
}

/// `‖T(m,1;E)‖ ≤ d^{m_N}` for `1 ≤ m ≤ m_max` on the Fibonacci potential.
pub fn step_bound_check(lambda: f64, energy: f64, m_max: usize) -> Result<StepBoundReport> {
    let d = bound_parameters(lambda)?.d;
    let spec = PotentialSpec::fibonacci(lambda);
    let norms = norm_sweep(&spec.clone().with_geometry(Geometry::HalfLineDirichlet), C64::new(energy, 0.0), m_max)?;
    let mut report = StepBoundReport { energy, m_max, max_log_excess: f64::NEG_INFINITY, violations: 0 };
    for (m, norm) in norms {
        let top = *zeckendorf(m as u64)?.last().expect("nonempty coding");
        let excess = norm.ln() - top as f64 * d.ln();
        report.max_log_excess = report.max_log_excess.max(excess);
        if excess > 1e-12 {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexBoundReport {
    pub energy: f64,
    pub n_max: usize,
    /// `K(N)` (whole line) or `L(N)` (half-line).
    pub k_n: f64,
    pub checks: usize,
    pub violations: usize,
    /// `max (ln‖T‖ - ln K - K|n||δ|)`.
    pub max_log_excess: f64,
}

/// `‖T(n,1;E+δ)‖ ≤ K(N) exp(K(N)|n||δ|)` for `1 ≤ n ≤ N`, and on the whole
/// line `‖T(n,0;E+δ)‖` for `-N ≤ n ≤ 0`.
pub fn complex_energy_bound_check(
    spec: &PotentialSpec,
    energy: f64,
    n_max: usize,
    deltas: &[C64],
) -> Result<ComplexBoundReport> {
    let pot = Potential::new(spec)?;
    let whole = spec.geometry == Geometry::WholeLine;
    let n = n_max as i64;
    let lo = if whole { -n } else { 1 };
    let z = C64::new(energy, 0.0);
    // P_j = T(j, lo), then T(a, b) = P_a P_b⁻¹
    let mut prods = Vec::with_capacity((n - lo + 1) as usize);
    let mut t = Mat2::IDENTITY;
    prods.push(t);
    for j in lo + 1..=n {
        t = pot.step(j, z)? * t;
        if !t.is_finite() {
            return Err(Error::ScaleOverflow { steps: (j - lo) as usize });
        }
        prods.push(t);
    }
    let inverses: Vec<Mat2> = prods.iter().map(Mat2::inverse).collect();
    let k_n = prods
        .par_iter()
        .map(|a| inverses.iter().map(|b| (*a * *b).norm()).fold(0.0, f64::max))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);

    let mut report = ComplexBoundReport {
        energy,
        n_max,
        k_n,
        checks: 0,
        violations: 0,
        max_log_excess: f64::NEG_INFINITY,
    };
    for &delta in deltas {
        let zc = z + delta;
        let mut judge = |norm: f64, dist: f64| {
            let excess = norm.ln() - k_n.ln() - k_n * dist * delta.norm();
            report.checks += 1;
            report.max_log_excess = report.max_log_excess.max(excess);
            if excess > 1e-12 {
                report.violations += 1;
            }
        };
        let mut t = Mat2::IDENTITY;
        judge(1.0, 1.0);
        for j in 2..=n {
            t = pot.step(j, zc)? * t;
            judge(t.norm(), j as f64);
        }
        if whole {
            // T(-j, 0) = (A(0) A(-1) ··· A(1-j))⁻¹
            let mut t = Mat2::IDENTITY;
            judge(1.0, 0.0);
            for j in 1..=n {
                t = t * pot.step(1 - j, zc)?;
                judge(t.norm(), j as f64);
            }
        }
    }
    Ok(report)
}

/// `max_{m ≤ n} ‖T(m,1;E)‖` at log-spaced `n`, and the fitted exponent.
pub fn local_growth_exponent(spec: &PotentialSpec, energy: f64, n_min: usize, n_max: usize) -> Result<f64> {
    let norms = norm_sweep(&spec.clone().with_geometry(Geometry::HalfLineDirichlet), C64::new(energy, 0.0), n_max)?;
    let mut running = 0.0f64;
    let envelope: Vec<f64> = norms.iter().map(|&(_, v)| {
        running = running.max(v);
        running
    }).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = n_min.max(2) as f64;
    while n <= n_max as f64 {
        let i = n as usize;
        xs.push((i as f64).ln());
        ys.push(envelope[i - 1].ln());
        n *= 1.25;
    }
    Ok(linear_fit(&xs, &ys)?.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct OutsideSumRow {
    pub t_avg: f64,
    pub n_scale: f64,
    pub level: usize,
    pub energies: usize,
    /// `min_E Σ_{|n| ≥ N/2} |R(E + i/T)δ_1(n)|²` over the sampled `E ∈ B(T)`.
    pub min_sum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutsideSumReport {
    pub lambda: f64,
    pub alpha_eff: f64,
    pub rows: Vec<OutsideSumRow>,
    /// Fitted exponent of `min_sum` against `T`.
    pub exponent_t: f64,
    /// Fitted exponent of `min_sum` against `N(T)`.
    pub exponent_n: f64,
    /// `1 - 2α_eff`.
    pub predicted_exponent_n: f64,
    pub all_positive: bool,
}

impl OutsideSumReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.all_positive && self.exponent_t > 0.0 && self.exponent_n >= self.predicted_exponent_n - tol
    }
}

/// Lower-bound mechanics on the Fibonacci model: the resolvent mass beyond
/// `N(T)/2` at energies of `B(T)`, with `N(T) = T^{1/(1+α_eff)}` and `α_eff`
/// the measured growth exponent of transfer-matrix norms on `σ_k`.
pub fn outside_sum_ladder(lambda: f64, times: &[f64], energies_per_level: usize) -> Result<OutsideSumReport> {
    let spec = PotentialSpec::fibonacci(lambda);
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let probe_level = level_for_scale(t_max.sqrt()).max(8);
    let probe = approximant_spectrum(lambda, probe_level, EDGE_TOL)?;
    let n_probe = fibonacci_number(probe_level) as usize;
    let alpha_eff = probe
        .sample_energies(energies_per_level)
        .into_iter()
        .map(|e| local_growth_exponent(&spec, e, 8, n_probe))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let rows = times
        .iter()
        .map(|&t| {
            let n_scale = t.powf(1.0 / (1.0 + alpha_eff));
            let level = level_for_scale(n_scale);
            let set = approximant_spectrum(lambda, level, EDGE_TOL)?;
            let mut energies = set.sample_energies(energies_per_level);
            let r = 1.0 / t;
            let edges: Vec<f64> = energies.iter().flat_map(|&e| [e - r, e + r]).collect();
            energies.extend(edges);
            let radius = (40.0 * t).ceil() as i64 + WINDOW_MARGIN;
            let window = LatticeWindow::around_origin(radius, Geometry::WholeLine);
            let pot = potential_on(&spec, &window)?;
            let src = origin_index(&window)?;
            let cut = (0.5 * n_scale).ceil() as i64;
            let sums: Vec<f64> = energies
                .par_iter()
                .map(|&e| {
                    let phi = solve_shifted(&pot, src, C64::new(e, r));
                    let v: Vec<f64> = window
                        .sites()
                        .zip(&phi)
                        .filter(|(n, _)| n.abs() >= cut)
                        .map(|(_, p)| p.norm_sqr())
                        .collect();
                    pairwise_sum(&v)
                })
                .collect();
            Ok(OutsideSumRow {
                t_avg: t,
                n_scale,
                level,
                energies: sums.len(),
                min_sum: sums.into_iter().fold(f64::INFINITY, f64::min),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_positive = rows.iter().all(|r| r.min_sum > 0.0);
    let ln_t: Vec<f64> = rows.iter().map(|r| r.t_avg.ln()).collect();
    let ln_n: Vec<f64> = rows.iter().map(|r| r.n_scale.ln()).collect();
    let ln_s: Vec<f64> = rows.iter().map(|r| r.min_sum.ln()).collect();
    Ok(OutsideSumReport {
        lambda,
        alpha_eff,
        exponent_t: linear_fit(&ln_t, &ln_s)?.0,
        exponent_n: linear_fit(&ln_n, &ln_s)?.0,
        predicted_exponent_n: 1.0 - 2.0 * alpha_eff,
        rows,
        all_positive,
    })
}

/// `C_λ²(√2 + (λ/2)|n - m|)` with `C_λ = ‖[[-λ, -1], [1, 0]]‖`: the linear
/// bound on period-doubling transfer matrices at `E = 0`.
pub fn pd_linear_bound(lambda: f64, distance: f64) -> f64 {
    let c = step_from_value(lambda, C64::new(0.0, 0.0)).norm();
    c * c * (2f64.sqrt() + 0.5 * lambda * distance)
}
