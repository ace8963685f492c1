//! Weighted averages along horocycle sections, the orbit discrepancy
//! `D_M`, correlation estimates and power-law fits.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{self, Executor};
use crate::fmath;
use crate::modular::{bump, haar_moments, smooth_step, HaarSampler, Observable, ReducedPoint};
use crate::numtheory::{self, gcd};
use crate::quad::CompositeRule;
use crate::sections::{section_point, HorocycleSection};
use crate::sum::{pairwise, pairwise_complex, Moments};

/// `∫_{-1}^{1} exp(1 − 1/(1 − u²)) du`.
pub const BUMP_INTEGRAL: f64 = 1.206_900_322_437_876_2;
/// `max |d/du exp(1 − 1/(1 − u²))|`.
pub const BUMP_SLOPE: f64 = 2.170_357_085_710_339;

/// Compactly supported weights `ψ`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum WeightFunction {
    /// Rescaled bump on `[a, b]` with peak 1 at the midpoint.
    SmoothBump { a: f64, b: f64 },
    /// Piecewise linear hat on `[a, b]` with peak 1 at the midpoint.
    Triangle { a: f64, b: f64 },
    /// `Σ_k (c_k cos 2πkt + s_k sin 2πkt)` on the half-open unit window
    /// `[start, start + 1)`, zero elsewhere. Entries are `(k, c_k, s_k)`.
    Trig { start: f64, terms: Vec<(u32, f64, f64)> },
    /// `base·1_{[lo, hi)}`.
    Truncated { base: Box<WeightFunction>, lo: f64, hi: f64 },
}

impl WeightFunction {
    pub fn smooth_bump(a: f64, b: f64) -> Result<Self> {
        check_interval(a, b)?;
        Ok(WeightFunction::SmoothBump { a, b })
    }

    pub fn triangle(a: f64, b: f64) -> Result<Self> {
        check_interval(a, b)?;
        Ok(WeightFunction::Triangle { a, b })
    }

    pub fn trig(start: f64, terms: Vec<(u32, f64, f64)>) -> Result<Self> {
        if !start.is_finite() || terms.iter().any(|&(_, c, s)| !c.is_finite() || !s.is_finite()) {
            return Err(Error::NonFinite("trig weight"));
        }
        Ok(WeightFunction::Trig { start, terms })
    }

    pub fn truncated(base: WeightFunction, lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        Ok(WeightFunction::Truncated { base: Box::new(base), lo, hi })
    }

    /// Closed interval outside of which `ψ` vanishes.
    pub fn support(&self) -> (f64, f64) {
        match self {
            WeightFunction::SmoothBump { a, b } | WeightFunction::Triangle { a, b } => (*a, *b),
            WeightFunction::Trig { start, .. } => (*start, start + 1.0),
            WeightFunction::Truncated { base, lo, hi } => {
                let (a, b) = base.support();
                (a.max(*lo), b.min(*hi))
            }
        }
    }

    /// Support width `W`.
    pub fn width(&self) -> f64 {
        let (a, b) = self.support();
        (b - a).max(0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            WeightFunction::SmoothBump { a, b } => bump((2.0 * t - a - b) / (b - a)),
            WeightFunction::Triangle { a, b } => {
                let u = (2.0 * t - a - b) / (b - a);
                (1.0 - u.abs()).max(0.0)
            }
            WeightFunction::Trig { start, terms } => {
                if t < *start || t >= start + 1.0 {
                    return 0.0;
                }
                terms
                    .iter()
                    .map(|&(k, c, s)| {
                        let w = numtheory::e(k as f64 * (t - start));
                        c * w.re + s * w.im
                    })
                    .sum()
            }
            WeightFunction::Truncated { base, lo, hi } => {
                if t >= *lo && t < *hi {
                    base.eval(t)
                } else {
                    0.0
                }
            }
        }
    }

    /// `ψ′(t)` where it exists (one-sided at kinks and jumps).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            WeightFunction::SmoothBump { a, b } => {
                let u = (2.0 * t - a - b) / (b - a);
                let s = 1.0 - u * u;
                if s <= 0.0 {
                    0.0
                } else {
                    bump(u) * (-2.0 * u / (s * s)) * 2.0 / (b - a)
                }
            }
            WeightFunction::Triangle { a, b } => {
                let mid = 0.5 * (a + b);
                let slope = 2.0 / (b - a);
                if t < *a || t >= *b {
                    0.0
                } else if t < mid {
                    slope
                } else {
                    -slope
                }
            }
            WeightFunction::Trig { start, terms } => {
                if t < *start || t >= start + 1.0 {
                    return 0.0;
                }
                terms
                    .iter()
                    .map(|&(k, c, s)| {
                        let w = numtheory::e(k as f64 * (t - start));
                        let kk = core::f64::consts::TAU * k as f64;
                        kk * (-c * w.im + s * w.re)
                    })
                    .sum()
            }
            WeightFunction::Truncated { base, lo, hi } => {
                if t >= *lo && t < *hi {
                    base.derivative(t)
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ψ dt`.
    pub fn integral(&self) -> f64 {
        match self {
            WeightFunction::SmoothBump { a, b } => 0.5 * (b - a) * BUMP_INTEGRAL,
            WeightFunction::Triangle { a, b } => 0.5 * (b - a),
            WeightFunction::Trig { terms, .. } => {
                terms.iter().filter(|t| t.0 == 0).map(|t| t.1).sum()
            }
            WeightFunction::Truncated { .. } => {
                let (a, b) = self.support();
                if b <= a {
                    return 0.0;
                }
                CompositeRule::new(16, 256).integrate(a, b, |t| self.eval(t))
            }
        }
    }

    /// `‖ψ‖_∞ + ‖ψ′‖_∞`, the derivative taken almost everywhere.
    pub fn w1_inf_norm(&self) -> f64 {
        match self {
            WeightFunction::SmoothBump { a, b } => 1.0 + BUMP_SLOPE * 2.0 / (b - a),
            WeightFunction::Triangle { a, b } => 1.0 + 2.0 / (b - a),
            _ => {
                let (a, b) = self.support();
                let n = 20_000;
                let h = (b - a) / n as f64;
                let mut sup = 0.0f64;
                let mut dsup = 0.0f64;
                for i in 0..n {
                    let t = a + (i as f64 + 0.5) * h;
                    sup = sup.max(self.eval(t).abs());
                    dsup = dsup.max(self.derivative(t).abs());
                }
                sup + dsup
            }
        }
    }

    /// Fourier coefficient `ψ̂(k) = ∫_start^{start+1} ψ(t) e(−k(t − start)) dt`
    /// of a trigonometric window; `None` for other kinds.
    pub fn trig_coefficient(&self, k: i64) -> Option<Complex64> {
        let WeightFunction::Trig { terms, .. } = self else {
            return None;
        };
        let mut out = Complex64::new(0.0, 0.0);
        for &(m, c, s) in terms {
            if m == 0 && k == 0 {
                out += c;
            } else if m as i64 == k.abs() && m != 0 {
                // c cos + s sin = (c − i s)/2 e(mt) + (c + i s)/2 e(−mt)
                let sign = if k > 0 { -1.0 } else { 1.0 };
                out += Complex64::new(0.5 * c, sign * 0.5 * s);
            }
        }
        Some(out)
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::BadInterval { lo: a, hi: b })
    }
}

/// Which average a result row describes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Ensemble {
    Continuous,
    Nonprimitive,
    Primitive,
    Twisted(f64),
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ensemble::Continuous => f.write_str("continuous"),
            Ensemble::Nonprimitive => f.write_str("nonprimitive"),
            Ensemble::Primitive => f.write_str("primitive"),
            Ensemble::Twisted(c) => write!(f, "twisted({c})"),
        }
    }
}

/// One `(ensemble, parameter)` cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleResult {
    pub parameter: u64,
    pub ensemble: Ensemble,
    pub estimate: Complex64,
    pub haar_ref: f64,
    pub haar_stderr: f64,
    pub psi_integral: f64,
    pub abs_err: f64,
    pub terms: u64,
    pub runtime_ms: f64,
}

impl EnsembleResult {
    /// Fill `abs_err = |estimate − haar_ref·∫ψ|`. Twisted rows average a
    /// mean-zero function, so they are passed `haar_ref = 0`.
    pub fn new(
        parameter: u64,
        ensemble: Ensemble,
        estimate: Complex64,
        haar: (f64, f64),
        psi_integral: f64,
        terms: u64,
    ) -> Self {
        let abs_err = (estimate - haar.0 * psi_integral).norm();
        EnsembleResult {
            parameter,
            ensemble,
            estimate,
            haar_ref: haar.0,
            haar_stderr: haar.1,
            psi_integral,
            abs_err,
            terms,
            runtime_ms: 0.0,
        }
    }

    /// Monte Carlo uncertainty of `haar_ref·∫ψ`.
    pub fn noise_floor(&self) -> f64 {
        self.haar_stderr * self.psi_integral.abs()
    }
}

/// A finite weighted average and the number of terms it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Average<T> {
    pub value: T,
    pub terms: u64,
}

/// Indices `k` with `k/n` in the closed support of `ψ`.
fn support_indices(psi: &WeightFunction, n: u64) -> (i64, i64) {
    let (a, b) = psi.support();
    let (first, _) = numtheory::index_window(n, a, b);
    let (_, end) = numtheory::index_window(n, a, b);
    // include k/n = b
    let mut end = end;
    while (end as f64) / (n as f64) <= b {
        end += 1;
    }
    (first, end)
}

/// Chunked, order-fixed sum of `term(k)` over `first..end`.
fn index_sum<E, F>(executor: &E, first: i64, end: i64, term: F) -> Result<f64>
where
    E: Executor,
    F: Fn(i64) -> Result<f64> + Sync + Send,
{
    let len = (end - first).max(0) as usize;
    let chunks = len.div_ceil(exec::TERM_CHUNK);
    let parts = executor.map(chunks, |j| -> Result<f64> {
        let lo = first + (j * exec::TERM_CHUNK) as i64;
        let hi = (lo + exec::TERM_CHUNK as i64).min(end);
        let mut vals = Vec::with_capacity((hi - lo) as usize);
        for k in lo..hi {
            vals.push(term(k)?);
        }
        Ok(pairwise(&vals))
    });
    let parts: Result<Vec<f64>> = parts.into_iter().collect();
    Ok(pairwise(&parts?))
}

fn check_finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `f(n(t)a(y))·ψ(t)`, skipping the evaluation where `ψ(t) = 0`.
fn weighted_term<O: Observable + ?Sized>(
    n: &HorocycleSection,
    f: &O,
    psi: &WeightFunction,
    t: f64,
    y: f64,
) -> Result<f64> {
    let w = psi.eval(t);
    if w == 0.0 {
        return Ok(0.0);
    }
    let p = section_point(n, t, y)?;
    Ok(f.eval(&p) * w)
}

/// `N⁻¹ Σ_k f(n(k/N)a(1/N)) ψ(k/N)`.
pub fn nonprimitive_average<O: Observable + ?Sized, E: Executor>(
    n: &HorocycleSection,
    f: &O,
    psi: &WeightFunction,
    big_n: u64,
    executor: &E,
) -> Result<Average<f64>> {
    if big_n == 0 {
        return Err(Error::NonPositive { name: "N", value: 0.0 });
    }
    let (first, end) = support_indices(psi, big_n);
    let nf = big_n as f64;
    let y = 1.0 / nf;
    let total = index_sum(executor, first, end, |k| weighted_term(n, f, psi, k as f64 / nf, y))?;
    Ok(Average { value: check_finite(total / nf, "nonprimitive_average")?, terms: (end - first).max(0) as u64 })
}

/// `φ(q)⁻¹ Σ_{(p,q)=1} f(n(p/q)a(1/q)) ψ(p/q)`.
pub fn primitive_average<O: Observable + ?Sized, E: Executor>(
    n: &HorocycleSection,
    f: &O,
    psi: &WeightFunction,
    q: u64,
    executor: &E,
) -> Result<Average<f64>> {
    if q == 0 {
        return Err(Error::NonPositive { name: "q", value: 0.0 });
    }
    let (first, end) = support_indices(psi, q);
    let qf = q as f64;
    let y = 1.0 / qf;
    let total = index_sum(executor, first, end, |p| {
        if gcd(p.unsigned_abs(), q) != 1 {
            return Ok(0.0);
        }
        weighted_term(n, f, psi, p as f64 / qf, y)
    })?;
    let terms = (first..end).filter(|p| gcd(p.unsigned_abs(), q) == 1).count() as u64;
    let phi = numtheory::euler_phi(q) as f64;
    Ok(Average { value: check_finite(total / phi, "primitive_average")?, terms })
}

/// `e(c·k/N)` with the integer part of `c` reduced exactly modulo `N`.
pub fn twist_phase(c: f64, k: i64, big_n: u64) -> Complex64 {
    let ci = fmath::floor(c);
    let cf = c - ci;
    let nn = big_n as i128;
    let r = ((ci as i128 % nn) * (k as i128 % nn)).rem_euclid(nn);
    let frac = (r as f64) / (big_n as f64) + cf * (k as f64) / (big_n as f64);
    numtheory::e(frac)
}

/// `N⁻¹ Σ_k (f − mean)(n(k/N)a(1/N)) ψ(k/N) e(ck/N)` for every `c` in
/// `cs`, sharing the evaluations of `f`. `mean = 0` gives the raw sum.
pub fn twisted_averages<O: Observable + ?Sized, E: Executor>(
    n: &HorocycleSection,
    f: &O,
    psi: &WeightFunction,
    big_n: u64,
    cs: &[f64],
    mean: f64,
    executor: &E,
) -> Result<Average<Vec<Complex64>>> {
    if big_n == 0 {
        return Err(Error::NonPositive { name: "N", value: 0.0 });
    }
    let (first, end) = support_indices(psi, big_n);
    let nf = big_n as f64;
    let y = 1.0 / nf;
    let len = (end - first).max(0) as usize;
    let chunks = len.div_ceil(exec::TERM_CHUNK);
    let parts = executor.map(chunks, |j| -> Result<Vec<Complex64>> {
        let lo = first + (j * exec::TERM_CHUNK) as i64;
        let hi = (lo + exec::TERM_CHUNK as i64).min(end);
        let mut g = Vec::with_capacity((hi - lo) as usize);
        for k in lo..hi {
            let t = k as f64 / nf;
            let w = psi.eval(t);
            g.push(if w == 0.0 { 0.0 } else { (f.eval(&section_point(n, t, y)?) - mean) * w });
        }
        let mut out = Vec::with_capacity(cs.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); g.len()];
        for &c in cs {
            for (i, k) in (lo..hi).enumerate() {
                buf[i] = if g[i] == 0.0 { Complex64::new(0.0, 0.0) } else { g[i] * twist_phase(c, k, big_n) };
            }
            out.push(pairwise_complex(&buf));
        }
        Ok(out)
    });
    let parts: Result<Vec<Vec<Complex64>>> = parts.into_iter().collect();
    let parts = parts?;
    let mut value = Vec::with_capacity(cs.len());
    for ci in 0..cs.len() {
        let col: Vec<Complex64> = parts.iter().map(|p| p[ci]).collect();
        let v = pairwise_complex(&col) / nf;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite("twisted_average"));
        }
        value.push(v);
    }
    Ok(Average { value, terms: len as u64 })
}

/// Single-`c` form of [`twisted_averages`].
pub fn twisted_average<O: Observable + ?Sized, E: Executor>(
    n: &HorocycleSection,
    f: &O,
    psi: &WeightFunction,
    big_n: u64,
    c: f64,
    mean: f64,
    executor: &E,
) -> Result<Average<Complex64>> {
    let r = twisted_averages(n, f, psi, big_n, &[c], mean, executor)?;
    Ok(Average { value: r.value[0], terms: r.terms })
}

/// Largest accepted number of quadrature nodes.
pub const MAX_QUAD_POINTS: usize = 1 << 24;
const GAUSS_ORDER: usize = 8;

/// `(β − α)⁻¹ ∫_α^β f(n(t)a(y)) dt` by composite 8-point Gauss–Legendre,
/// doubling the node count from `quad_points` until two successive
/// estimates agree to `tol`. Returns the estimate and the final node count.
#[allow(clippy::too_many_arguments)]
pub fn continuous_average<O: Observable + ?Sized, E: Executor>(
    n: &HorocycleSection,
    f: &O,
    alpha: f64,
    beta: f64,
    y: f64,
    quad_points: usize,
    tol: f64,
    executor: &E,
) -> Result<Average<f64>> {
    check_interval(alpha, beta)?;
    if !(y > 0.0) {
        return Err(Error::NonPositive { name: "y", value: y });
    }
    if quad_points < 64 {
        return Err(Error::Invalid("continuous_average needs at least 64 nodes"));
    }
    let estimate = |points: usize| -> Result<f64> {
        let rule = CompositeRule::new(GAUSS_ORDER, points / GAUSS_ORDER);
        let nodes = rule.abscissae(alpha, beta);
        let total = index_sum(executor, 0, nodes.len() as i64, |i| {
            let (t, w) = nodes[i as usize];
            Ok(f.eval(&section_point(n, t, y)?) * w)
        })?;
        check_finite(total / (beta - alpha), "continuous_average")
    };
    let mut points = quad_points.next_multiple_of(GAUSS_ORDER);
    let mut prev = estimate(points)?;
    loop {
        if 2 * points > MAX_QUAD_POINTS {
            return Err(Error::NotConverged(f64::NAN));
        }
        points *= 2;
        let cur = estimate(points)?;
        let gap = (cur - prev).abs();
        if gap < tol {
            return Ok(Average { value: cur, terms: points as u64 });
        }
        if 2 * points > MAX_QUAD_POINTS {
            return Err(Error::NotConverged(gap));
        }
        prev = cur;
    }
}

/// `D_M f(x) = M⁻¹ Σ_{m<M} f(x·u(m)) − haar_ref`.
pub fn discrepancy_dm<O: Observable + ?Sized>(f: &O, x: &ReducedPoint, m: u64, haar_ref: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::NonPositive { name: "M", value: 0.0 });
    }
    let mut vals = Vec::with_capacity(m as usize);
    for j in 0..m {
        vals.push(f.eval(&x.right_u(j as f64)?));
    }
    Ok(pairwise(&vals) / m as f64 - haar_ref)
}

/// Monte Carlo `∫|D_M f|² dν` for every `M` in `ms`, computed from one
/// orbit of length `max(ms)` per sample. Returns `(mean, stderr)` pairs.
pub fn dm_second_moments<O: Observable + ?Sized, E: Executor>(
    f: &O,
    ms: &[u64],
    haar_ref: f64,
    n: usize,
    seed: u64,
    executor: &E,
) -> Result<Vec<(f64, f64)>> {
    if ms.is_empty() || ms.contains(&0) {
        return Err(Error::Invalid("M grid must be nonempty and positive"));
    }
    let top = *ms.iter().max().unwrap_or(&1) as usize;
    let chunks = n.div_ceil(exec::SAMPLE_CHUNK);
    let parts = executor.map(chunks, |j| -> Result<Vec<Moments>> {
        let mut sampler = HaarSampler::with_stream(seed, j as u64);
        let len = exec::SAMPLE_CHUNK.min(n - j * exec::SAMPLE_CHUNK);
        let mut cols = vec![Vec::with_capacity(len); ms.len()];
        let mut orbit = vec![0.0; top];
        for _ in 0..len {
            let x = sampler.sample();
            for (m, slot) in orbit.iter_mut().enumerate() {
                *slot = f.eval(&x.right_u(m as f64)?);
            }
            for (c, &m) in cols.iter_mut().zip(ms) {
                let d = pairwise(&orbit[..m as usize]) / m as f64 - haar_ref;
                c.push(d * d);
            }
        }
        Ok(cols.iter().map(|c| Moments::from_slice(c)).collect())
    });
    let parts: Result<Vec<Vec<Moments>>> = parts.into_iter().collect();
    let parts = parts?;
    Ok((0..ms.len())
        .map(|i| {
            let col: Vec<Moments> = parts.iter().map(|p| p[i]).collect();
            let m = Moments::merge_all(&col);
            (m.mean, m.stderr())
        })
        .collect())
}

/// Running co-moments of a pair of samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct CoMoments {
    count: u64,
    mean_a: f64,
    mean_b: f64,
    c_ab: f64,
}

impl CoMoments {
    fn push(&mut self, a: f64, b: f64) {
        self.count += 1;
        let n = self.count as f64;
        let da = a - self.mean_a;
        self.mean_a += da / n;
        self.mean_b += (b - self.mean_b) / n;
        self.c_ab += da * (b - self.mean_b);
    }

    fn merge(&self, o: &CoMoments) -> CoMoments {
        if self.count == 0 {
            return *o;
        }
        if o.count == 0 {
            return *self;
        }
        let n = (self.count + o.count) as f64;
        let (na, nb) = (self.count as f64, o.count as f64);
        let da = o.mean_a - self.mean_a;
        let db = o.mean_b - self.mean_b;
        CoMoments {
            count: self.count + o.count,
            mean_a: self.mean_a + da * nb / n,
            mean_b: self.mean_b + db * nb / n,
            c_ab: self.c_ab + o.c_ab + da * db * na * nb / n,
        }
    }

    fn merge_all(parts: &[CoMoments]) -> CoMoments {
        match parts.len() {
            0 => CoMoments::default(),
            1 => parts[0],
            n => {
                let (l, r) = parts.split_at(n / 2);
                CoMoments::merge_all(l).merge(&CoMoments::merge_all(r))
            }
        }
    }

    fn covariance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.c_ab / self.count as f64
        }
    }
}

/// Covariance estimates `∫ f(x·u(t)) h(x) dν − ∫f ∫h` for each `t`.
///
/// The standard error uses the spread of the products
/// `(f(xu(t)) − centers.0)(h(x) − centers.1)`, so `centers` should be
/// reference means of `f` and `h`.
pub fn mixing_correlations<F, H, E>(
    f: &F,
    h: &H,
    ts: &[f64],
    n: usize,
    seed: u64,
    centers: (f64, f64),
    executor: &E,
) -> Result<Vec<(f64, f64)>>
where
    F: Observable + ?Sized,
    H: Observable + ?Sized,
    E: Executor,
{
    let chunks = n.div_ceil(exec::SAMPLE_CHUNK);
    let parts = executor.map(chunks, |j| -> Result<Vec<(CoMoments, Moments)>> {
        let mut sampler = HaarSampler::with_stream(seed, j as u64);
        let len = exec::SAMPLE_CHUNK.min(n - j * exec::SAMPLE_CHUNK);
        let mut co = vec![CoMoments::default(); ts.len()];
        let mut prods = vec![Vec::with_capacity(len); ts.len()];
        for _ in 0..len {
            let x = sampler.sample();
            let hb = h.eval(&x);
            for (i, &t) in ts.iter().enumerate() {
                let fa = f.eval(&x.right_u(t)?);
                co[i].push(fa, hb);
                prods[i].push((fa - centers.0) * (hb - centers.1));
            }
        }
        Ok(co.into_iter().zip(prods.iter().map(|p| Moments::from_slice(p))).collect())
    });
    let parts: Result<Vec<Vec<(CoMoments, Moments)>>> = parts.into_iter().collect();
    let parts = parts?;
    Ok((0..ts.len())
        .map(|i| {
            let co: Vec<CoMoments> = parts.iter().map(|p| p[i].0).collect();
            let pm: Vec<Moments> = parts.iter().map(|p| p[i].1).collect();
            (CoMoments::merge_all(&co).covariance(), Moments::merge_all(&pm).stderr())
        })
        .collect())
}

/// Single-`t` form of [`mixing_correlations`], centered at the sample
/// means of a pilot run on the same stream.
pub fn mixing_correlation<F, H, E>(f: &F, h: &H, t: f64, n: usize, seed: u64, executor: &E) -> Result<(f64, f64)>
where
    F: Observable + ?Sized,
    H: Observable + ?Sized,
    E: Executor,
{
    let mf = haar_moments(n.min(1 << 16), seed, executor, |p| f.eval(p)).mean;
    let mh = haar_moments(n.min(1 << 16), seed, executor, |p| h.eval(p)).mean;
    Ok(mixing_correlations(f, h, &[t], n, seed, (mf, mh), executor)?[0])
}

/// Least-squares power law `err ≈ C·param^{−δ̂}`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecayFit {
    pub points: Vec<(f64, f64)>,
    pub delta_hat: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    for &(p, e) in points {
        if !(e > 0.0) {
            return Err(Error::NonPositiveError(e));
        }
        if !(p > 0.0) {
            return Err(Error::NonPositive { name: "parameter", value: p });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| fmath::ln(p.0)).collect();
    let ys: Vec<f64> = points.iter().map(|p| fmath::ln(p.1)).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("decay fit needs distinct parameters"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayFit { points: points.to_vec(), delta_hat: -slope, intercept: my - slope * mx, r2 })
}

/// Fit only the rows whose error exceeds `factor` times their noise floor.
pub fn fit_above_floor(rows: &[EnsembleResult], factor: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.abs_err > factor * r.noise_floor())
        .map(|r| (r.parameter as f64, r.abs_err))
        .collect();
    fit_decay(&pts)
}

/// Smooth partition of unity `Σ_j Δ(t − j·step) = 1` with `Δ` supported
/// on `[−step, step]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionOfUnity {
    pub step: f64,
}

/// `max |d/ds smooth_step(s)|`, attained at `s = ½`.
pub const SMOOTH_STEP_SLOPE: f64 = 2.0;

impl PartitionOfUnity {
    pub fn new(step: f64) -> Result<Self> {
        if step > 0.0 && step.is_finite() {
            Ok(PartitionOfUnity { step })
        } else {
            Err(Error::NonPositive { name: "step", value: step })
        }
    }

    /// The profile `Δ`.
    pub fn delta(&self, t: f64) -> f64 {
        let s = t / self.step;
        if s <= 0.0 {
            smooth_step(s + 1.0)
        } else {
            1.0 - smooth_step(s)
        }
    }

    /// `Δ_j(t) = Δ(t − j·step)`.
    pub fn member(&self, j: i64, t: f64) -> f64 {
        self.delta(t - j as f64 * self.step)
    }

    /// Indices `j` whose member can be nonzero somewhere on `[a, b]`.
    pub fn indices(&self, a: f64, b: f64) -> core::ops::RangeInclusive<i64> {
        (fmath::floor(a / self.step) as i64 - 1)..=(fmath::ceil(b / self.step) as i64 + 1)
    }

    /// `‖Δ′‖_∞`.
    pub fn slope_bound(&self) -> f64 {
        SMOOTH_STEP_SLOPE / self.step
    }

    pub fn member_derivative(&self, j: i64, t: f64) -> f64 {
        let s = (t - j as f64 * self.step) / self.step;
        let sigma_prime = |x: f64| -> f64 {
            if x <= 0.0 || x >= 1.0 {
                return 0.0;
            }
            let a = fmath::exp(-1.0 / x);
            let b = fmath::exp(-1.0 / (1.0 - x));
            let da = a / (x * x);
            let db = b / ((1.0 - x) * (1.0 - x));
            (da * b + a * db) / ((a + b) * (a + b))
        };
        if s <= 0.0 {
            sigma_prime(s + 1.0) / self.step
        } else {
            -sigma_prime(s) / self.step
        }
    }
}

/// The primitive average recomputed from the residue-class expansion
/// `1_{(p,q)=1} = (φ(q)/q) Σ_r S(q,r) e(rp/q)`, i.e.
/// `Σ_{r<q} S(q,r)·q⁻¹ Σ_p f(n(p/q)a(1/q)) ψ(p/q) e(rp/q)`.
pub fn primitive_via_ramanujan<O: Observable + ?Sized, E: Executor>(
    n: &HorocycleSection,
    f: &O,
    psi: &WeightFunction,
    q: u64,
    executor: &E,
) -> Result<f64> {
    if q == 0 {
        return Err(Error::NonPositive { name: "q", value: 0.0 });
    }
    let cs: Vec<f64> = (0..q).map(|r| r as f64).collect();
    let twisted = twisted_averages(n, f, psi, q, &cs, 0.0, executor)?;
    let terms: Vec<Complex64> = twisted
        .value
        .iter()
        .enumerate()
        .map(|(r, t)| numtheory::ramanujan_sum(q, r as i64).map(|s| t * s))
        .collect::<Result<_>>()?;
    Ok(pairwise_complex(&terms).re)
}

/// `Σ_k ψ̂(k) S(q,k)` for a trigonometric window: the primitive average of
/// `f ≡ 1` predicted from the spectrum of `ψ` alone.
pub fn trig_primitive_spectral(psi: &WeightFunction, q: u64) -> Result<f64> {
    let WeightFunction::Trig { start, terms } = psi else {
        return Err(Error::Invalid("spectral form needs a trigonometric window"));
    };
    let kmax = terms.iter().map(|t| t.0).max().unwrap_or(0) as i64;
    let mut total = Complex64::new(0.0, 0.0);
    for k in -kmax..=kmax {
        let c = psi.trig_coefficient(k).unwrap_or_default();
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        // the window starts at `start`, so ψ(t) = Σ ψ̂(k) e(k(t − start))
        let shift = numtheory::e(-(k as f64) * start);
        total += c * shift * numtheory::ramanujan_sum(q, k)?;
    }
    Ok(total.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Serial;
    use crate::modular::TestFunction;
    use crate::sections::Coefficient;

    fn one() -> TestFunction {
        TestFunction::Constant(1.0)
    }

    #[test]
    fn bump_constants_match_quadrature() {
        let i = crate::quad::adaptive(bump, -1.0, 1.0, 1e-14).unwrap();
        assert!((i - BUMP_INTEGRAL).abs() < 1e-12);
        let psi = WeightFunction::smooth_bump(0.0, 2.0).unwrap();
        let slope = (0..200_000).map(|i| psi.derivative(i as f64 * 1e-5).abs()).fold(0.0, f64::max);
        assert!((slope - BUMP_SLOPE).abs() < 1e-6);
        // analytic derivative against a central difference
        let t = 0.4;
        let fd = (psi.eval(t + 1e-6) - psi.eval(t - 1e-6)) / 2e-6;
        assert!((fd - psi.derivative(t)).abs() < 1e-6);
    }

    #[test]
    fn riemann_sum_of_triangle() {
        let psi = WeightFunction::triangle(0.0, 2.0).unwrap();
        for big_n in [10u64, 100, 2000] {
            let v = nonprimitive_average(&HorocycleSection::parabolic(), &one(), &psi, big_n, &Serial).unwrap();
            assert!((v.value - 1.0).abs() <= 3.0 / big_n as f64);
        }
    }

    #[test]
    fn primitive_q1_is_nonprimitive_n1() {
        let psi = WeightFunction::triangle(-1.5, 2.5).unwrap();
        let f = TestFunction::shortest_vector_bump(0.5, 0.4).unwrap();
        let n = HorocycleSection::parabolic();
        let a = primitive_average(&n, &f, &psi, 1, &Serial).unwrap();
        let b = nonprimitive_average(&n, &f, &psi, 1, &Serial).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn primitive_average_of_constant_tends_to_integral() {
        let psi = WeightFunction::smooth_bump(0.0, 1.0).unwrap();
        let n = HorocycleSection::zero();
        for q in [97u64, 1009, 10007] {
            let v = primitive_average(&n, &one(), &psi, q, &Serial).unwrap();
            assert!((v.value - psi.integral()).abs() < 10.0 * psi.w1_inf_norm() / q as f64);
        }
    }

    #[test]
    fn twisting_by_integer_multiples_is_trivial() {
        let psi = WeightFunction::triangle(0.0, 2.0).unwrap();
        let f = TestFunction::shortest_vector_bump(0.6, 0.3).unwrap();
        let n = HorocycleSection::parabolic();
        let base = nonprimitive_average(&n, &f, &psi, 500, &Serial).unwrap().value;
        let tw = twisted_averages(&n, &f, &psi, 500, &[0.0, 500.0, 1500.0], 0.0, &Serial).unwrap();
        for v in tw.value {
            assert!((v - base).norm() < 1e-13);
        }
    }

    #[test]
    fn twist_phase_is_accurate_for_large_products() {
        let n = 200_000u64;
        let v = twist_phase(199_999.25, 399_999, n);
        let exact = {
            // (199999.25·399999 mod n)/n in exact rational arithmetic
            let num = 19_999_925i128 * 399_999;
            let den = 100i128 * n as i128;
            numtheory::e((num.rem_euclid(den)) as f64 / den as f64)
        };
        assert!((v - exact).norm() < 1e-11);
    }

    #[test]
    fn ramanujan_recomputation_matches_direct_sum() {
        let psi = WeightFunction::trig(0.0, vec![(0, 0.5, 0.0), (1, 0.3, -0.2), (3, 0.1, 0.25)]).unwrap();
        let f = TestFunction::shortest_vector_bump(0.5, 0.3).unwrap();
        let n = HorocycleSection::parabolic();
        for q in 1..=30u64 {
            let direct = primitive_average(&n, &f, &psi, q, &Serial).unwrap().value;
            let via = primitive_via_ramanujan(&n, &f, &psi, q, &Serial).unwrap();
            assert!((direct - via).abs() < 1e-10, "q={q}");
            let c1 = primitive_average(&n, &one(), &psi, q, &Serial).unwrap().value;
            assert!((c1 - trig_primitive_spectral(&psi, q).unwrap()).abs() < 1e-10, "q={q}");
        }
    }

    #[test]
    fn trig_integral_is_constant_term() {
        let psi = WeightFunction::trig(0.25, vec![(0, 0.7, 0.0), (2, 0.3, 0.1)]).unwrap();
        let q = CompositeRule::new(16, 64).integrate(0.25, 1.25, |t| psi.eval(t));
        assert!((q - 0.7).abs() < 1e-12);
        assert_eq!(psi.integral(), 0.7);
    }

    #[test]
    fn dm_examples() {
        let mut s = HaarSampler::new(1);
        let x = s.sample();
        let f = TestFunction::shortest_vector_bump(0.5, 0.3).unwrap();
        assert_eq!(discrepancy_dm(&f, &x, 1, 0.25).unwrap(), f.eval(&x) - 0.25);
        assert_eq!(discrepancy_dm(&one(), &x, 17, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn fit_examples() {
        let fit = fit_decay(&[(10.0, 1e-1), (100.0, 1e-2), (1000.0, 1e-3)]).unwrap();
        assert!((fit.delta_hat - 1.0).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
        let flat = fit_decay(&[(10.0, 5.0), (100.0, 5.0), (1000.0, 5.0)]).unwrap();
        assert_eq!(flat.delta_hat, 0.0);
        assert!(matches!(fit_decay(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]), Err(Error::NonPositiveError(_))));
        assert_eq!(fit_decay(&[(1.0, 1.0)]), Err(Error::TooFewPoints(1)));
    }

    #[test]
    fn partition_sums_to_one() {
        for step in [0.5, 2.0, 0.37] {
            let pu = PartitionOfUnity::new(step).unwrap();
            for i in 0..2000 {
                let t = -7.0 + i as f64 * 0.0071;
                let total: f64 = pu.indices(t, t).map(|j| pu.member(j, t)).sum();
                assert!((total - 1.0).abs() < 1e-12, "step={step} t={t}");
                assert_eq!(pu.member(0, step * 1.0001), 0.0);
            }
        }
    }

    #[test]
    fn section_parse_feeds_constant_family() {
        let c = HorocycleSection::constant(Coefficient::Sqrt(2), Coefficient::Sqrt(3));
        let psi = WeightFunction::smooth_bump(0.0, 1.0).unwrap();
        let v = nonprimitive_average(&c, &one(), &psi, 1000, &Serial).unwrap();
        assert!((v.value - psi.integral()).abs() < 1e-6);
    }
}
