//! Potentials, the discrete Schrödinger operator and its transfer matrices.
//!
//! The operator acts as `(Hψ)(n) = ψ(n-1) + ψ(n+1) + V(n)ψ(n)`, on `ℓ²(ℤ)` or on
//! `ℓ²(ℕ)` with a Dirichlet condition `ψ(0) = 0`. The one-step matrix
//! `A(n, z) = [[z - V(n), -1], [1, 0]]` maps `(ψ(n), ψ(n-1))` to `(ψ(n+1), ψ(n))`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::{Mat2, C64};

/// Longest substitution word [`substitution_word`] will materialize.
pub const MAX_WORD_LEN: usize = 1 << 26;

/// Renormalization threshold for log-scaled transfer products.
const RESCALE_ABOVE: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Fibonacci,
    PeriodDoubling,
    ThueMorse,
    ExplicitPeriodic,
    Free,
}

impl Model {
    /// Image of a letter under the model's substitution, if it has one.
    pub fn substitute(self, letter: u8) -> Option<[u8; 2]> {
        match (self, letter) {
            (Model::PeriodDoubling, 0) => Some([0, 1]),
            (Model::PeriodDoubling, _) => Some([0, 0]),
            (Model::ThueMorse, 0) => Some([0, 1]),
            (Model::ThueMorse, _) => Some([1, 0]),
            _ => None,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Model::Fibonacci => "fib",
            Model::PeriodDoubling => "pd",
            Model::ThueMorse => "tm",
            Model::ExplicitPeriodic => "periodic",
            Model::Free => "free",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    WholeLine,
    HalfLineDirichlet,
}

/// Which element of the subshift (or which explicit word) fills the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seed {
    /// The model's default two-sided sequence (see [`Seed::default_for`]).
    Default,
    /// Two-sided fixed point `lim S^{2k}(left) . S^{2k}(right)`, with site 1
    /// holding the first letter of the right half and site 0 the last letter
    /// of the left half.
    FixedPoint { left: u8, right: u8 },
    /// Finite word on sites `1..=len`.
    Word(Vec<u8>),
    /// Real pattern repeated with period `len`, starting at site 1.
    Periodic(Vec<f64>),
}

impl Seed {
    /// Default legal two-sided sequences.
    ///
    /// Thue-Morse uses `0.0`, which is the reflection `(w reversed)(w)` of the
    /// one-sided fixed point about the bond between sites 0 and 1. For period
    /// doubling that reflection contains `1001`, which never occurs, so the
    /// legal seed `1.0` is used; it gives `V(-n) = V(n)` with `V(0) = λ`.
    pub fn default_for(model: Model) -> Option<(u8, u8)> {
        match model {
            Model::ThueMorse => Some((0, 0)),
            Model::PeriodDoubling => Some((1, 0)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub model: Model,
    pub lambda: f64,
    pub geometry: Geometry,
    pub seed: Seed,
    /// Finite overlay added to the base potential.
    #[serde(default)]
    pub perturbation: BTreeMap<i64, f64>,
}

impl PotentialSpec {
    pub fn new(model: Model, lambda: f64, geometry: Geometry) -> Self {
        PotentialSpec { model, lambda, geometry, seed: Seed::Default, perturbation: BTreeMap::new() }
    }

    pub fn fibonacci(lambda: f64) -> Self {
        Self::new(Model::Fibonacci, lambda, Geometry::WholeLine)
    }

    pub fn period_doubling(lambda: f64) -> Self {
        Self::new(Model::PeriodDoubling, lambda, Geometry::WholeLine)
    }

    pub fn thue_morse(lambda: f64) -> Self {
        Self::new(Model::ThueMorse, lambda, Geometry::WholeLine)
    }

    pub fn free() -> Self {
        Self::new(Model::Free, 0.0, Geometry::WholeLine)
    }

    pub fn periodic(lambda: f64, pattern: Vec<f64>) -> Self {
        PotentialSpec { seed: Seed::Periodic(pattern), ..Self::new(Model::ExplicitPeriodic, lambda, Geometry::WholeLine) }
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn with_seed(mut self, seed: Seed) -> Self {
        self.seed = seed;
        self
    }

    /// Human-readable description of the concrete sequence, for output metadata.
    pub fn describe_sequence(&self) -> String {
        match (&self.seed, self.model) {
            (_, Model::Free) => "free".into(),
            (_, Model::Fibonacci) => "fibonacci: lambda*chi_[1-w,1)(n*w mod 1), w=(sqrt5-1)/2".into(),
            (Seed::Default, m) => match Seed::default_for(m) {
                Some((l, r)) => format!("{}: two-sided fixed point {l}.{r}", m.short_name()),
                None => format!("{}: no default sequence", m.short_name()),
            },
            (Seed::FixedPoint { left, right }, m) => {
                format!("{}: two-sided fixed point {left}.{right}", m.short_name())
            }
            (Seed::Word(w), m) => format!("{}: explicit word of length {}", m.short_name(), w.len()),
            (Seed::Periodic(p), m) => format!("{}: periodic pattern of length {}", m.short_name(), p.len()),
        }
    }
}

/// Inclusive range of sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub lo: i64,
    pub hi: i64,
    pub geometry: Geometry,
}

impl LatticeWindow {
    pub fn new(lo: i64, hi: i64, geometry: Geometry) -> Result<Self> {
        if lo > hi {
            return Err(Error::Domain(format!("window lo={lo} > hi={hi}")));
        }
        if geometry == Geometry::HalfLineDirichlet && lo < 1 {
            return Err(Error::Domain(format!("half-line window must start at site >= 1, got {lo}")));
        }
        Ok(LatticeWindow { lo, hi, geometry })
    }

    /// Window centred on the initial site 1 reaching `radius` sites out.
    pub fn around_origin(radius: i64, geometry: Geometry) -> Self {
        match geometry {
            Geometry::WholeLine => LatticeWindow { lo: 1 - radius, hi: 1 + radius, geometry },
            Geometry::HalfLineDirichlet => LatticeWindow { lo: 1, hi: 1 + radius, geometry },
        }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i64) -> bool {
        self.lo <= n && n <= self.hi
    }

    pub fn index_of(&self, n: i64) -> Option<usize> {
        self.contains(n).then(|| (n - self.lo) as usize)
    }

    pub fn site(&self, idx: usize) -> i64 {
        self.lo + idx as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// Exact `floor(n·ω)` for `ω = (√5 - 1)/2`, using integer square roots.
pub fn floor_n_omega(n: i64) -> i64 {
    if n == 0 {
        return 0;
    }
    let m = n.unsigned_abs() as u128;
    let s = isqrt(5 * m * m) as i128; // floor(|n|√5)
    // floor(n√5), n√5 irrational for n ≠ 0
    let f = if n > 0 { s } else { -s - 1 };
    (f - n as i128).div_euclid(2) as i64
}

fn isqrt(x: u128) -> u128 {
    let mut r = (x as f64).sqrt() as u128;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

/// Letter of the Fibonacci sequence at site `n`: `χ_{[1-ω,1)}(nω mod 1)`.
///
/// Equivalent to `floor((n+1)ω) - floor(nω)`, evaluated exactly.
pub fn fibonacci_letter(n: i64) -> u8 {
    (floor_n_omega(n + 1) - floor_n_omega(n)) as u8
}

/// `S^k(0)` for the period-doubling or Thue-Morse substitution.
pub fn substitution_word(model: Model, k: u32) -> Result<Vec<u8>> {
    if model.substitute(0).is_none() {
        return Err(Error::Domain(format!("{model:?} has no substitution")));
    }
    if k >= usize::BITS || (1usize << k) > MAX_WORD_LEN {
        return Err(Error::Resource(format!("S^{k}(0) exceeds the {MAX_WORD_LEN}-letter cap")));
    }
    let mut w = vec![0u8];
    for _ in 0..k {
        w = apply_substitution(model, &w);
    }
    Ok(w)
}

/// One application of the substitution to every letter of `word`.
pub fn apply_substitution(model: Model, word: &[u8]) -> Vec<u8> {
    word.iter().flat_map(|&a| model.substitute(a).expect("substitution model")).collect()
}

/// Letter `idx` of `S^k(start)`, reading the binary digits of `idx` from the top.
fn iterate_letter(model: Model, start: u8, k: u32, idx: u64) -> u8 {
    let mut letter = start;
    for bit in (0..k).rev() {
        let img = model.substitute(letter).expect("substitution model");
        letter = img[((idx >> bit) & 1) as usize];
    }
    letter
}

fn bits_for(idx: u64) -> u32 {
    // even number of doublings with at least one spare bit
    let need = 64 - idx.leading_zeros() + 1;
    need + (need & 1)
}

fn check_seed(model: Model, left: u8, right: u8) -> Result<()> {
    let s2 = |a: u8| apply_substitution(model, &apply_substitution(model, &[a]));
    if left > 1 || right > 1 {
        return Err(Error::Domain("seed letters must be 0 or 1".into()));
    }
    if s2(right)[0] != right || *s2(left).last().unwrap() != left {
        return Err(Error::Domain(format!("seed {left}.{right} is not fixed by S^2")));
    }
    let u = substitution_word(model, 8)?;
    if !u.windows(2).any(|w| w == [left, right]) {
        return Err(Error::Domain(format!("seed {left}.{right} does not occur in the fixed point")));
    }
    Ok(())
}

fn subshift_letter(model: Model, left: u8, right: u8, n: i64) -> u8 {
    if n >= 1 {
        let idx = (n - 1) as u64;
        iterate_letter(model, right, bits_for(idx), idx)
    } else {
        let j = n.unsigned_abs();
        let k = bits_for(j);
        let len_minus_one = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        iterate_letter(model, left, k, len_minus_one - j)
    }
}

/// A [`PotentialSpec`] with its subshift seed validated once, for repeated
/// evaluation.
#[derive(Debug, Clone)]
pub struct Potential<'a> {
    spec: &'a PotentialSpec,
    seed: Option<(u8, u8)>,
}

impl<'a> Potential<'a> {
    pub fn new(spec: &'a PotentialSpec) -> Result<Self> {
        let seed = match (spec.model, &spec.seed) {
            (Model::PeriodDoubling | Model::ThueMorse, Seed::Default) => Seed::default_for(spec.model),
            (Model::PeriodDoubling | Model::ThueMorse, Seed::FixedPoint { left, right }) => {
                check_seed(spec.model, *left, *right)?;
                Some((*left, *right))
            }
            (Model::ExplicitPeriodic, Seed::Periodic(p)) if p.is_empty() => {
                return Err(Error::Domain("empty periodic pattern".into()));
            }
            (Model::ExplicitPeriodic, Seed::Periodic(_)) => None,
            (Model::ExplicitPeriodic, _) => {
                return Err(Error::Domain("explicit periodic model needs a periodic seed".into()));
            }
            (Model::Fibonacci | Model::Free, Seed::Default) => None,
            (_, Seed::Word(_)) => None,
            (m, other) => return Err(Error::Domain(format!("seed {other:?} does not apply to {m:?}"))),
        };
        Ok(Potential { spec, seed })
    }

    pub fn spec(&self) -> &PotentialSpec {
        self.spec
    }

    pub fn value(&self, n: i64) -> Result<f64> {
        let spec = self.spec;
        if spec.geometry == Geometry::HalfLineDirichlet && n < 1 {
            return Err(Error::Domain(format!("site {n} is outside the half-line")));
        }
        let base = match (&spec.seed, self.seed) {
            (Seed::Word(w), _) => {
                if n < 1 || n as usize > w.len() {
                    return Err(Error::Domain(format!("site {n} is outside the explicit word")));
                }
                spec.lambda * w[(n - 1) as usize] as f64
            }
            (Seed::Periodic(p), _) => spec.lambda * p[(n - 1).rem_euclid(p.len() as i64) as usize],
            (_, Some((l, r))) => spec.lambda * subshift_letter(spec.model, l, r, n) as f64,
            _ => match spec.model {
                Model::Fibonacci => spec.lambda * fibonacci_letter(n) as f64,
                _ => 0.0,
            },
        };
        Ok(base + spec.perturbation.get(&n).copied().unwrap_or(0.0))
    }

    /// `[[z - V(n), -1], [1, 0]]`.
    pub fn step(&self, n: i64, z: C64) -> Result<Mat2> {
        Ok(step_from_value(self.value(n)?, z))
    }
}

/// `V(n)` including the perturbation overlay.
pub fn potential_value(spec: &PotentialSpec, n: i64) -> Result<f64> {
    Potential::new(spec)?.value(n)
}

/// Potential values on every site of `window`.
pub fn potential_on(spec: &PotentialSpec, window: &LatticeWindow) -> Result<Vec<f64>> {
    let pot = Potential::new(spec)?;
    window.sites().map(|n| pot.value(n)).collect()
}

/// `[[z - V(n), -1], [1, 0]]`.
pub fn one_step_matrix(spec: &PotentialSpec, n: i64, z: C64) -> Result<Mat2> {
    Potential::new(spec)?.step(n, z)
}

pub fn step_from_value(v: f64, z: C64) -> Mat2 {
    Mat2::new(z - v, C64::new(-1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0))
}

/// `T(n, m; z)`: `A(n)···A(m+1)` for `n > m`, identity for `n = m`, and
/// `T(m, n; z)⁻¹ = A(n+1)⁻¹···A(m)⁻¹` for `n < m`.
pub fn transfer_matrix(spec: &PotentialSpec, n: i64, m: i64, z: C64) -> Result<Mat2> {
    let pot = Potential::new(spec)?;
    let mut t = Mat2::IDENTITY;
    if n >= m {
        for (steps, site) in (m + 1..=n).enumerate() {
            t = pot.step(site, z)? * t;
            if !t.is_finite() {
                return Err(Error::ScaleOverflow { steps: steps + 1 });
            }
        }
    } else {
        // exact one-step inverses; dividing by a computed det would cost ε‖T‖²
        for (steps, site) in (n + 1..=m).rev().enumerate() {
            let a = pot.step(site, z)?;
            t = Mat2::new(a.d, -a.b, -a.c, a.a) * t;
            if !t.is_finite() {
                return Err(Error::ScaleOverflow { steps: steps + 1 });
            }
        }
    }
    Ok(t)
}

/// Transfer matrix as `exp(log_scale) · normalized`, never overflowing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMat2 {
    pub log_scale: f64,
    pub normalized: Mat2,
}

impl ScaledMat2 {
    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.normalized.norm().ln()
    }

    pub fn to_mat2(&self) -> Mat2 {
        self.normalized.scaled(C64::new(self.log_scale.exp(), 0.0))
    }

    fn renormalized(self) -> Self {
        let s = self.normalized.max_abs_entry();
        if s == 0.0 || !s.is_finite() {
            return self;
        }
        ScaledMat2 { log_scale: self.log_scale + s.ln(), normalized: self.normalized.scaled(C64::new(1.0 / s, 0.0)) }
    }
}

/// Log-scaled variant of [`transfer_matrix`] for energies where entries grow
/// exponentially.
pub fn transfer_matrix_scaled(spec: &PotentialSpec, n: i64, m: i64, z: C64) -> Result<ScaledMat2> {
    if n < m {
        // T = e^s N with det T = 1, so T⁻¹ = e^s adj(N)
        let s = transfer_matrix_scaled(spec, m, n, z)?;
        let t = s.normalized;
        return Ok(ScaledMat2 { log_scale: s.log_scale, normalized: Mat2::new(t.d, -t.b, -t.c, t.a) });
    }
    let pot = Potential::new(spec)?;
    let mut acc = ScaledMat2 { log_scale: 0.0, normalized: Mat2::IDENTITY };
    for site in m + 1..=n {
        acc.normalized = pot.step(site, z)? * acc.normalized;
        if acc.normalized.max_abs_entry() > RESCALE_ABOVE {
            acc = acc.renormalized();
        }
    }
    Ok(acc)
}

/// `T(m + j, m; z)` for `j = 0..=len`, built incrementally.
pub fn forward_products(spec: &PotentialSpec, m: i64, len: usize, z: C64) -> Result<Vec<Mat2>> {
    let pot = Potential::new(spec)?;
    let mut out = Vec::with_capacity(len + 1);
    let mut t = Mat2::IDENTITY;
    out.push(t);
    for j in 1..=len {
        t = pot.step(m + j as i64, z)? * t;
        if !t.is_finite() {
            return Err(Error::ScaleOverflow { steps: j });
        }
        out.push(t);
    }
    Ok(out)
}

/// `H v` on `window` with zero values outside it.
pub fn apply_hamiltonian(spec: &PotentialSpec, window: &LatticeWindow, v: &[C64]) -> Result<Vec<C64>> {
    if v.len() != window.len() {
        return Err(Error::DimensionMismatch { expected: window.len(), got: v.len() });
    }
    let pot = potential_on(spec, window)?;
    Ok(apply_tridiagonal(&pot, v))
}

/// `(Hv)_i = v_{i-1} + v_{i+1} + V_i v_i` with Dirichlet ends.
pub fn apply_tridiagonal(pot: &[f64], v: &[C64]) -> Vec<C64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let mut s = v[i] * pot[i];
            if i > 0 {
                s += v[i - 1];
            }
            if i + 1 < n {
                s += v[i + 1];
            }
            s
        })
        .collect()
}

/// Adds `overlay` to the existing perturbation pointwise.
pub fn perturb(spec: &PotentialSpec, overlay: &BTreeMap<i64, f64>) -> PotentialSpec {
    let mut out = spec.clone();
    for (&n, &w) in overlay {
        *out.perturbation.entry(n).or_insert(0.0) += w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word_values(spec: &PotentialSpec, sites: std::ops::RangeInclusive<i64>) -> Vec<f64> {
        sites.map(|n| potential_value(spec, n).unwrap()).collect()
    }

    #[test]
    fn fibonacci_first_sites() {
        let spec = PotentialSpec::fibonacci(1.0);
        assert_eq!(word_values(&spec, 1..=6), vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn fibonacci_letters_match_float_formula_away_from_boundary() {
        let omega = (5f64.sqrt() - 1.0) / 2.0;
        for n in -2000i64..2000 {
            let x = (n as f64 * omega).rem_euclid(1.0);
            if (x - (1.0 - omega)).abs() < 1e-9 {
                continue;
            }
            let expect = u8::from(x >= 1.0 - omega);
            assert_eq!(fibonacci_letter(n), expect, "n={n}");
        }
    }

    #[test]
    fn fibonacci_boundary_site_is_exact() {
        // (-1)·ω mod 1 = 1 - ω exactly, which lies in the half-open interval
        assert_eq!(fibonacci_letter(-1), 1);
    }

    #[test]
    fn substitution_prefixes() {
        let pd = PotentialSpec::period_doubling(1.0);
        let tm = PotentialSpec::thue_morse(1.0);
        assert_eq!(word_values(&tm, 1..=8), vec![0., 1., 1., 0., 1., 0., 0., 1.]);
        assert_eq!(word_values(&pd, 1..=8), vec![0., 1., 0., 0., 0., 1., 0., 1.]);
        assert_eq!(substitution_word(Model::PeriodDoubling, 2).unwrap(), vec![0, 1, 0, 0]);
        assert_eq!(substitution_word(Model::ThueMorse, 2).unwrap(), vec![0, 1, 1, 0]);
        assert_eq!(substitution_word(Model::ThueMorse, 0).unwrap(), vec![0]);
        assert_eq!(substitution_word(Model::PeriodDoubling, 0).unwrap(), vec![0]);
    }

    #[test]
    fn substitution_word_cap() {
        assert!(matches!(substitution_word(Model::ThueMorse, 40), Err(Error::Resource(_))));
        assert!(matches!(substitution_word(Model::Fibonacci, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn two_sided_sequences_are_legal() {
        for model in [Model::PeriodDoubling, Model::ThueMorse] {
            let spec = PotentialSpec::new(model, 1.0, Geometry::WholeLine);
            let two_sided: Vec<u8> = (-300..=300).map(|n| potential_value(&spec, n).unwrap() as u8).collect();
            let u = substitution_word(model, 14).unwrap();
            for len in [4usize, 8, 12] {
                for w in two_sided.windows(len) {
                    assert!(u.windows(len).any(|x| x == w), "{model:?}: illegal subword {w:?}");
                }
            }
        }
    }

    #[test]
    fn thue_morse_default_is_reflection() {
        let spec = PotentialSpec::thue_morse(1.0);
        for j in 0..200 {
            assert_eq!(potential_value(&spec, -j).unwrap(), potential_value(&spec, j + 1).unwrap());
        }
    }

    #[test]
    fn period_doubling_default_symmetric_about_origin() {
        let spec = PotentialSpec::period_doubling(2.0);
        assert_eq!(potential_value(&spec, 0).unwrap(), 2.0);
        for j in 1..200 {
            assert_eq!(potential_value(&spec, -j).unwrap(), potential_value(&spec, j).unwrap());
        }
    }

    #[test]
    fn illegal_seed_rejected() {
        let spec = PotentialSpec::period_doubling(1.0).with_seed(Seed::FixedPoint { left: 1, right: 1 });
        assert!(potential_value(&spec, 3).is_err());
    }

    #[test]
    fn half_line_rejects_nonpositive_sites() {
        let spec = PotentialSpec::fibonacci(1.0).with_geometry(Geometry::HalfLineDirichlet);
        assert!(matches!(potential_value(&spec, 0), Err(Error::Domain(_))));
        assert!(LatticeWindow::new(0, 5, Geometry::HalfLineDirichlet).is_err());
        assert!(LatticeWindow::new(3, 2, Geometry::WholeLine).is_err());
    }

    #[test]
    fn one_step_examples() {
        let free = PotentialSpec::free();
        let a = one_step_matrix(&free, 4, C64::new(0.0, 0.0)).unwrap();
        assert_eq!(a, Mat2::real(0.0, -1.0, 1.0, 0.0));
        let fib = PotentialSpec::fibonacci(2.5);
        let a = one_step_matrix(&fib, 1, C64::new(0.7, 0.0)).unwrap();
        assert_eq!(a, Mat2::real(0.7 - 2.5, -1.0, 1.0, 0.0));
        assert_eq!(a.det(), C64::new(1.0, 0.0));
    }

    #[test]
    fn transfer_matrix_cases() {
        let spec = PotentialSpec::fibonacci(1.0);
        let z = C64::new(0.0, 0.0);
        assert_eq!(transfer_matrix(&spec, 5, 5, z).unwrap(), Mat2::IDENTITY);
        // brute-force product A(8)···A(2)
        let mut brute = Mat2::IDENTITY;
        for n in 2..=8 {
            let v = fibonacci_letter(n) as f64;
            brute = Mat2::real(-v, -1.0, 1.0, 0.0) * brute;
        }
        assert!(transfer_matrix(&spec, 8, 1, z).unwrap().dist(&brute) < 1e-14);
        let t = transfer_matrix(&spec, 40, -7, C64::new(0.3, 0.1)).unwrap();
        let ti = transfer_matrix(&spec, -7, 40, C64::new(0.3, 0.1)).unwrap();
        assert!((t.norm() - ti.norm()).abs() < 1e-9 * t.norm());
        assert!((t * ti).dist(&Mat2::IDENTITY) < 1e-9);
    }

    #[test]
    fn scaled_transfer_agrees_and_survives_overflow() {
        let spec = PotentialSpec::free();
        let z = C64::new(5.0, 0.0);
        let t = transfer_matrix(&spec, 60, 0, z).unwrap();
        let s = transfer_matrix_scaled(&spec, 60, 0, z).unwrap();
        assert!(s.to_mat2().dist(&t) < 1e-12 * t.norm());
        assert!(matches!(transfer_matrix(&spec, 2000, 0, z), Err(Error::ScaleOverflow { .. })));
        let big = transfer_matrix_scaled(&spec, 2000, 0, z).unwrap();
        // free growth rate at E=5: log((5+√21)/2) per site
        let rate = ((5.0 + 21f64.sqrt()) / 2.0).ln();
        assert!((big.log_norm() / 2000.0 - rate).abs() < 1e-3);
        let inv = transfer_matrix_scaled(&spec, 0, 60, z).unwrap();
        assert!((inv.log_norm() - s.log_norm()).abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_examples() {
        let free = PotentialSpec::free();
        let w = LatticeWindow::new(-3, 3, Geometry::WholeLine).unwrap();
        let mut v = vec![C64::new(0.0, 0.0); w.len()];
        v[w.index_of(1).unwrap()] = C64::new(1.0, 0.0);
        let hv = apply_hamiltonian(&free, &w, &v).unwrap();
        for n in w.sites() {
            let expect = if n == 0 || n == 2 { 1.0 } else { 0.0 };
            assert_eq!(hv[w.index_of(n).unwrap()], C64::new(expect, 0.0));
        }

        let fib = PotentialSpec::fibonacci(3.0).with_geometry(Geometry::HalfLineDirichlet);
        let w = LatticeWindow::new(1, 6, Geometry::HalfLineDirichlet).unwrap();
        let mut v = vec![C64::new(0.0, 0.0); 6];
        v[0] = C64::new(1.0, 0.0);
        let hv = apply_hamiltonian(&fib, &w, &v).unwrap();
        assert_eq!(hv[0], C64::new(3.0, 0.0));
        assert_eq!(hv[1], C64::new(1.0, 0.0));
        assert!(hv[2..].iter().all(|z| z.norm() == 0.0));

        assert!(matches!(
            apply_hamiltonian(&free, &w, &v[..3]),
            Err(Error::DimensionMismatch { expected: 6, got: 3 })
        ));
    }

    #[test]
    fn perturbation_examples() {
        let base = PotentialSpec::fibonacci(1.0);
        let same = perturb(&base, &BTreeMap::new());
        assert_eq!(word_values(&same, -20..=20), word_values(&base, -20..=20));

        let one = perturb(&base, &BTreeMap::from([(1, 5.0)]));
        assert_eq!(potential_value(&one, 1).unwrap(), 6.0);
        for n in (-20..=20).filter(|&n| n != 1) {
            assert_eq!(potential_value(&one, n).unwrap(), potential_value(&base, n).unwrap());
        }

        let twice = perturb(&perturb(&base, &BTreeMap::from([(1, 1.0)])), &BTreeMap::from([(1, 2.0)]));
        assert_eq!(potential_value(&twice, 1).unwrap(), 1.0 + 3.0);
    }

    #[test]
    fn periodic_pattern() {
        let spec = PotentialSpec::periodic(2.0, vec![0.0, 1.0, 0.5]);
        assert_eq!(word_values(&spec, 1..=6), vec![0.0, 2.0, 1.0, 0.0, 2.0, 1.0]);
        assert_eq!(potential_value(&spec, 0).unwrap(), 1.0);
    }

    #[test]
    fn explicit_word_seed() {
        let spec = PotentialSpec::thue_morse(2.0).with_seed(Seed::Word(vec![1, 0, 1]));
        assert_eq!(word_values(&spec, 1..=3), vec![2.0, 0.0, 2.0]);
        assert!(potential_value(&spec, 4).is_err());
    }
}
