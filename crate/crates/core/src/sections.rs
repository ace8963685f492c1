//! Horocycle sections `n(t) = (I, ξ(t))·u(t)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::fmath;
use crate::group::{a_mat, u, GroupElement, Mat2};
use crate::modular::{reduce_lattice, ReducedPoint};

/// An exactly specified real coefficient of a constant section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    /// `num/den` with `den > 0` in lowest terms.
    Rational { num: i64, den: u64 },
    /// `√n` for a non-negative integer `n`.
    Sqrt(u64),
    /// A floating-point value of unknown arithmetic nature.
    Real(f64),
}

impl Coefficient {
    pub fn rational(num: i64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::NonPositive { name: "denominator", value: 0.0 });
        }
        let g = crate::numtheory::gcd(num.unsigned_abs(), den).max(1);
        Ok(Coefficient::Rational { num: num / g as i64, den: den / g })
    }

    pub fn value(&self) -> f64 {
        match *self {
            Coefficient::Rational { num, den } => num as f64 / den as f64,
            Coefficient::Sqrt(n) => fmath::sqrt(n as f64),
            Coefficient::Real(v) => v,
        }
    }

    /// `Some(true)` if rational, `Some(false)` if provably irrational.
    pub fn is_rational(&self) -> Option<bool> {
        match *self {
            Coefficient::Rational { .. } => Some(true),
            Coefficient::Sqrt(n) => {
                let r = fmath::round(fmath::sqrt(n as f64)) as u64;
                Some((r.saturating_sub(1)..=r + 1).any(|s| s * s == n))
            }
            Coefficient::Real(_) => None,
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Coefficient::Rational { num, den: 1 } => write!(f, "{num}"),
            Coefficient::Rational { num, den } => write!(f, "{num}/{den}"),
            Coefficient::Sqrt(n) => write!(f, "sqrt{n}"),
            Coefficient::Real(v) => write!(f, "{v:?}"),
        }
    }
}

impl FromStr for Coefficient {
    type Err = Error;

    /// Accepts `p/q`, terminating decimals (read exactly), `sqrtN`,
    /// `sqrt(N)`, `√N`, or any other float literal.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::Parse(t.to_string());
        let root = t
            .strip_prefix("sqrt")
            .or_else(|| t.strip_prefix('√'))
            .map(|r| r.trim_start_matches('(').trim_end_matches(')'));
        if let Some(r) = root {
            return r.trim().parse::<u64>().map(Coefficient::Sqrt).map_err(|_| bad());
        }
        if let Some((p, q)) = t.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: u64 = q.trim().parse().map_err(|_| bad())?;
            return Coefficient::rational(p, q).map_err(|_| bad());
        }
        if let Ok(n) = t.parse::<i64>() {
            return Ok(Coefficient::Rational { num: n, den: 1 });
        }
        if let Some(c) = exact_decimal(t) {
            return Ok(c);
        }
        let v: f64 = t.parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        Ok(Coefficient::Real(v))
    }
}

fn exact_decimal(t: &str) -> Option<Coefficient> {
    let (neg, body) = match t.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.')?;
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) || frac.len() > 17 {
        return None;
    }
    let den = 10u64.checked_pow(frac.len() as u32)?;
    let int_v: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac_v: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let num = int_v.checked_mul(den as i64)?.checked_add(frac_v)?;
    Coefficient::rational(if neg { -num } else { num }, den).ok()
}

/// Three-valued answer for properties that cannot always be decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Tristate {
    Yes,
    No,
    Unknown,
}

/// Diophantine annotation `‖ξ − m/q‖ > c·q^{−K}` (not verified in general).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiophantineMeta {
    pub k: f64,
    /// Smallest observed `q^K·‖ξ − m/q‖_∞` over `q ≤ checked_up_to`.
    pub c: f64,
    pub checked_up_to: u64,
}

/// Empirical constant `min_{q ≤ qmax} q^K·min_m ‖ξ − m/q‖_∞`.
pub fn diophantine_constant(xi: [f64; 2], k: f64, qmax: u64) -> f64 {
    let mut best = f64::INFINITY;
    for q in 1..=qmax {
        let qf = q as f64;
        let mut dist = 0.0f64;
        for v in xi {
            let s = v * qf;
            dist = dist.max((s - fmath::round(s)).abs() / qf);
        }
        best = best.min(dist * libm::pow(qf, k));
    }
    best
}

pub type SectionFn = Arc<dyn Fn(f64) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub enum SectionFamily {
    Zero,
    Parabolic,
    Constant(Coefficient, Coefficient),
    Custom(SectionFn),
}

impl fmt::Debug for SectionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectionFamily::Zero => write!(f, "Zero"),
            SectionFamily::Parabolic => write!(f, "Parabolic"),
            SectionFamily::Constant(a, b) => write!(f, "Constant({a}, {b})"),
            SectionFamily::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A section `ξ: R → R²` with its metadata.
#[derive(Debug, Clone)]
pub struct HorocycleSection {
    pub family: SectionFamily,
    pub period: Option<f64>,
    pub diophantine: Option<DiophantineMeta>,
    pub name: String,
}

/// Number of denominators scanned when annotating constant sections.
pub const DIOPHANTINE_SCAN: u64 = 100_000;

impl HorocycleSection {
    /// `ξ ≡ 0`: the closed horocycle through the identity coset.
    pub fn zero() -> Self {
        HorocycleSection { family: SectionFamily::Zero, period: Some(1.0), diophantine: None, name: "zero".into() }
    }

    /// `ξ(t) = (t/2, −t²/4)`.
    pub fn parabolic() -> Self {
        HorocycleSection {
            family: SectionFamily::Parabolic,
            period: Some(2.0),
            diophantine: None,
            name: "parabolic".into(),
        }
    }

    /// `ξ ≡ (ξ₁, ξ₂)`. Period is the denominator of `ξ₁` when it is
    /// rational; pairs of independent quadratic surds get type `3/2`
    /// with an empirically scanned constant.
    pub fn constant(xi1: Coefficient, xi2: Coefficient) -> Self {
        let period = match xi1 {
            Coefficient::Rational { den, .. } => Some(den as f64),
            _ => None,
        };
        let diophantine = match (xi1, xi2) {
            (Coefficient::Sqrt(p), Coefficient::Sqrt(q))
                if xi1.is_rational() == Some(false) && xi2.is_rational() == Some(false) && !square_ratio(p, q) =>
            {
                let xi = [xi1.value(), xi2.value()];
                Some(DiophantineMeta { k: 1.5, c: diophantine_constant(xi, 1.5, DIOPHANTINE_SCAN), checked_up_to: DIOPHANTINE_SCAN })
            }
            _ => None,
        };
        HorocycleSection {
            family: SectionFamily::Constant(xi1, xi2),
            period,
            diophantine,
            name: format!("constant:{xi1},{xi2}"),
        }
    }

    pub fn custom<F: Fn(f64) -> [f64; 2] + Send + Sync + 'static>(name: &str, xi: F, period: Option<f64>) -> Self {
        HorocycleSection { family: SectionFamily::Custom(Arc::new(xi)), period, diophantine: None, name: name.into() }
    }

    pub fn xi(&self, t: f64) -> [f64; 2] {
        match &self.family {
            SectionFamily::Zero => [0.0, 0.0],
            SectionFamily::Parabolic => [t / 2.0, -t * t / 4.0],
            SectionFamily::Constant(a, b) => [a.value(), b.value()],
            SectionFamily::Custom(f) => f(t),
        }
    }

    /// Whether `Λ_ξ` agrees with a rational affine function on a set of
    /// positive measure. Custom sections are `Unknown`.
    pub fn is_rationally_linear(&self) -> Tristate {
        match &self.family {
            SectionFamily::Zero => Tristate::Yes,
            SectionFamily::Parabolic => Tristate::No,
            SectionFamily::Constant(a, b) => match (a.is_rational(), b.is_rational()) {
                (Some(true), Some(true)) => Tristate::Yes,
                (Some(false), _) | (_, Some(false)) => Tristate::No,
                _ => Tristate::Unknown,
            },
            SectionFamily::Custom(_) => Tristate::Unknown,
        }
    }
}

// √p/√q rational, i.e. the two surds are rationally dependent
fn square_ratio(p: u64, q: u64) -> bool {
    let pq = p as u128 * q as u128;
    let r = libm::sqrt(pq as f64) as u128;
    (r.saturating_sub(1)..=r + 1).any(|s| s * s == pq)
}

impl FromStr for HorocycleSection {
    type Err = Error;

    /// `zero`, `parabolic`, or `constant:ξ₁,ξ₂`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t {
            "zero" => return Ok(HorocycleSection::zero()),
            "parabolic" => return Ok(HorocycleSection::parabolic()),
            _ => {}
        }
        let body = t.strip_prefix("constant:").ok_or_else(|| Error::Parse(t.to_string()))?;
        let (a, b) = body.split_once(',').ok_or_else(|| Error::Parse(t.to_string()))?;
        Ok(HorocycleSection::constant(a.parse()?, b.parse()?))
    }
}

impl fmt::Display for HorocycleSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// `n(t) = (I, ξ(t))·u(t)`.
pub fn eval_section(n: &HorocycleSection, t: f64) -> GroupElement {
    GroupElement::translation(n.xi(t)) * u(t)
}

/// `Λ_ξ(t) = t·ξ₁(t) + ξ₂(t)`.
pub fn lambda_of(n: &HorocycleSection, t: f64) -> f64 {
    let [x1, x2] = n.xi(t);
    t * x1 + x2
}

/// The point `n(t)·a(y)` of `X`, reduced. The lattice coordinates of the
/// affine part are exactly `ξ(t)`, so they are passed through unchanged.
pub fn section_point(n: &HorocycleSection, t: f64, y: f64) -> Result<ReducedPoint> {
    let am = a_mat(y);
    let m = Mat2::new(am.0[0][0], t * am.0[1][1], 0.0, am.0[1][1]);
    reduce_lattice(m, n.xi(t))
}

/// Window data on `[α, β]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SectionWindow {
    pub alpha: f64,
    pub beta: f64,
    /// `max(|α|, |β|, 1)`.
    pub l: f64,
    /// `β − α`.
    pub w: f64,
    /// `sup|ξ₁| + Lip(Λ_ξ)` on the window.
    pub a_xi: f64,
}

/// Grid size for custom sections.
pub const LIPSCHITZ_GRID: usize = 10_000;

pub fn window_constants(n: &HorocycleSection, alpha: f64, beta: f64) -> Result<SectionWindow> {
    if !(alpha < beta) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::BadInterval { lo: alpha, hi: beta });
    }
    let reach = alpha.abs().max(beta.abs());
    let a_xi = match &n.family {
        SectionFamily::Zero => 0.0,
        // ξ₁ = t/2 and Λ′ = t/2
        SectionFamily::Parabolic => reach,
        SectionFamily::Constant(a, _) => 2.0 * a.value().abs(),
        SectionFamily::Custom(_) => sup_xi1(n, alpha, beta) + lipschitz_lambda(n, alpha, beta),
    };
    Ok(SectionWindow { alpha, beta, l: reach.max(1.0), w: beta - alpha, a_xi })
}

fn sup_xi1(n: &HorocycleSection, alpha: f64, beta: f64) -> f64 {
    let h = (beta - alpha) / LIPSCHITZ_GRID as f64;
    (0..=LIPSCHITZ_GRID).map(|i| n.xi(alpha + i as f64 * h)[0].abs()).fold(0.0, f64::max)
}

/// Largest difference quotient of `Λ` on a uniform grid, refined tenfold
/// around the best cell.
pub fn lipschitz_lambda(n: &HorocycleSection, alpha: f64, beta: f64) -> f64 {
    let grid = LIPSCHITZ_GRID;
    let h = (beta - alpha) / grid as f64;
    let mut best = 0.0f64;
    let mut arg = 0usize;
    let mut prev = lambda_of(n, alpha);
    for i in 1..=grid {
        let cur = lambda_of(n, alpha + i as f64 * h);
        let q = ((cur - prev) / h).abs();
        if q > best {
            best = q;
            arg = i - 1;
        }
        prev = cur;
    }
    let lo = alpha + arg.saturating_sub(1) as f64 * h;
    let hi = (alpha + (arg + 2) as f64 * h).min(beta);
    let fine = 10 * 3;
    let hf = (hi - lo) / fine as f64;
    let mut prev = lambda_of(n, lo);
    for i in 1..=fine {
        let cur = lambda_of(n, lo + i as f64 * hf);
        best = best.max(((cur - prev) / hf).abs());
        prev = cur;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{a, dist_proxy};
    use crate::modular::HaarSampler;
    use core::f64::consts::SQRT_2;

    fn sqrt(n: u64) -> Coefficient {
        Coefficient::Sqrt(n)
    }

    #[test]
    fn evaluation_examples() {
        let z = HorocycleSection::zero();
        assert_eq!(eval_section(&z, 0.37), u(0.37));
        let p = HorocycleSection::parabolic();
        let g = eval_section(&p, 2.0);
        assert_eq!(g, GroupElement::translation([1.0, -1.0]) * u(2.0));
        assert_eq!(g.m, Mat2::new(1.0, 2.0, 0.0, 1.0));
        let c = HorocycleSection::constant(sqrt(2), sqrt(3));
        let g = eval_section(&c, 0.0);
        assert!((g.x[0] - SQRT_2).abs() < 1e-15 && (g.x[1] - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lambda_examples() {
        let p = HorocycleSection::parabolic();
        for t in [0.0, 1.0, 2.0, -3.5] {
            assert!((lambda_of(&p, t) - t * t / 4.0).abs() < 1e-15);
            assert_eq!(lambda_of(&HorocycleSection::zero(), t), 0.0);
        }
        let c = HorocycleSection::constant(Coefficient::rational(1, 2).unwrap(), Coefficient::rational(1, 3).unwrap());
        assert!((lambda_of(&c, 3.0) - (1.5 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn window_examples() {
        let w = window_constants(&HorocycleSection::parabolic(), -1.0, 1.0).unwrap();
        assert_eq!(w.a_xi, 1.0);
        assert_eq!(w.l, 1.0);
        assert_eq!(window_constants(&HorocycleSection::zero(), 3.0, 9.0).unwrap().a_xi, 0.0);
        let w = window_constants(&HorocycleSection::constant(sqrt(2), sqrt(3)), 0.0, 2.0).unwrap();
        assert!((w.a_xi - 2.0 * SQRT_2).abs() < 1e-15);
        assert_eq!(w.l, 2.0);
        assert!(window_constants(&HorocycleSection::zero(), 1.0, 1.0).is_err());
    }

    #[test]
    fn custom_window_matches_analytic() {
        let c = HorocycleSection::custom("parabolic-copy", |t| [t / 2.0, -t * t / 4.0], None);
        let w = window_constants(&c, -1.0, 1.0).unwrap();
        assert!((w.a_xi - 1.0).abs() < 1e-3);
        assert_eq!(c.is_rationally_linear(), Tristate::Unknown);
    }

    #[test]
    fn rational_linearity() {
        assert_eq!(HorocycleSection::zero().is_rationally_linear(), Tristate::Yes);
        assert_eq!(HorocycleSection::parabolic().is_rationally_linear(), Tristate::No);
        assert_eq!(HorocycleSection::constant(sqrt(2), sqrt(3)).is_rationally_linear(), Tristate::No);
        let half: HorocycleSection = "constant:1/2,1/3".parse().unwrap();
        assert_eq!(half.is_rationally_linear(), Tristate::Yes);
        assert_eq!(half.period, Some(2.0));
        let four: HorocycleSection = "constant:sqrt4,0.25".parse().unwrap();
        assert_eq!(four.is_rationally_linear(), Tristate::Yes);
        let fuzzy: HorocycleSection = "constant:1e-3,0.1".parse().unwrap();
        assert_eq!(fuzzy.is_rationally_linear(), Tristate::Unknown);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["zero", "parabolic", "constant:sqrt2,sqrt3", "constant:1/2,-7/3", "constant:2,sqrt5"] {
            let n: HorocycleSection = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        let n: HorocycleSection = "constant:√2,sqrt(3)".parse().unwrap();
        assert_eq!(n.to_string(), "constant:sqrt2,sqrt3");
        assert!("cubic".parse::<HorocycleSection>().is_err());
        assert!("constant:1/0,1".parse::<HorocycleSection>().is_err());
    }

    #[test]
    fn surd_pair_carries_diophantine_annotation() {
        let c = HorocycleSection::constant(sqrt(2), sqrt(3));
        let d = c.diophantine.unwrap();
        assert_eq!(d.k, 1.5);
        assert!(d.c > 0.0 && d.c < 1.0);
        assert!(HorocycleSection::constant(sqrt(2), sqrt(8)).diophantine.is_none());
    }

    #[test]
    fn parabolic_section_has_period_two() {
        let p = HorocycleSection::parabolic();
        let mut s = HaarSampler::new(17);
        for _ in 0..1000 {
            let t = s.uniform() * 8.0 - 4.0;
            let y = 10f64.powf(-3.0 * s.uniform());
            let p0 = section_point(&p, t, y).unwrap();
            let p2 = section_point(&p, t + 2.0, y).unwrap();
            let ambient = reduce_lattice_check(&p, t + 2.0, y);
            assert!(p0.m_red.max_abs_diff(&p2.m_red) < 1e-9);
            assert!(torus_gap(p0.x_red, p2.x_red) < 1e-9);
            assert!(torus_gap(p2.x_red, ambient.x_red) < 1e-9);
        }
    }

    fn reduce_lattice_check(n: &HorocycleSection, t: f64, y: f64) -> ReducedPoint {
        crate::modular::reduce(&(eval_section(n, t) * a(y).unwrap())).unwrap()
    }

    fn torus_gap(a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = |x: f64| {
            let r = x - libm::round(x);
            r.abs()
        };
        d(a[0] - b[0]).max(d(a[1] - b[1]))
    }

    #[test]
    fn distance_first_bound_is_sharp_in_translation() {
        // n(t)a(1/N)u(m) and n(t+m/N)a(1/N) differ by a pure translation
        let p = HorocycleSection::parabolic();
        let big_n = 10_000.0;
        let (t, m) = (0.3, 5.0);
        let g1 = eval_section(&p, t) * a(1.0 / big_n).unwrap() * u(m);
        let g2 = eval_section(&p, t + m / big_n) * a(1.0 / big_n).unwrap();
        let w = window_constants(&p, 0.0, 1.0).unwrap();
        let bound = (1.0 + m) * w.a_xi / big_n.sqrt();
        assert!(dist_proxy(&g1, &g2) <= bound);
        assert!((g1.m.max_abs_diff(&g2.m)) < 1e-9);
    }
}
