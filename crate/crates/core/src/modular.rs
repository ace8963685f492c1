//! The space `X = Γ\G` of unimodular affine lattices, `Γ = SL(2,Z) ⋉ Z²`.
//!
//! A point `Γ(M, x)` is the affine lattice `Z²M + x`. We represent it by a
//! basis `M` whose Möbius image `z = M·i` lies in the classical fundamental
//! domain `|Re z| ≤ ½, |z| ≥ 1`, a rotation angle `θ ∈ [0, π)` (the factor
//! `k(θ)` in `M = u(Re z) a(Im z) k(θ)`; `-I ∈ Γ` identifies `θ` with
//! `θ + π`), and the affine part in lattice coordinates reduced to `[0,1)²`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::exec::{self, Executor};
use crate::fmath;
use crate::group::{exp_generator, row_mul, GroupElement, LieGenerator, Mat2};
use crate::quad;
use crate::sum::Moments;

/// Iteration cap for Gauss reduction.
pub const MAX_REDUCTION_STEPS: usize = 10_000;
/// Coefficient window for the shortest-vector search (in units of `b₁`).
pub const SHORTEST_VECTOR_WINDOW: i64 = 8;

const ARC_TIE: f64 = 1e-13;
const EDGE_TIE: f64 = 1e-13;

/// A point of `X` in fundamental-domain coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedPoint {
    /// Reduced basis (rows are the lattice basis `b₁, b₂`; `b₂` is shortest).
    pub m_red: Mat2,
    /// Affine part in lattice coordinates, both entries in `[0, 1)`.
    pub x_red: [f64; 2],
    /// `γ ∈ Γ` with `γ·g = (m_red, x_red·m_red)` for the input `g`.
    pub gamma: GroupElement,
    /// `m_red·i` in the upper half-plane.
    pub z: Complex64,
    pub theta: f64,
}

impl ReducedPoint {
    /// The representative `(m_red, x_red·m_red) ∈ G`.
    pub fn ambient(&self) -> GroupElement {
        GroupElement::new(self.m_red, row_mul(self.x_red, &self.m_red))
    }

    /// Reduce `self·h`; the returned `gamma` is relative to `ambient()·h`.
    pub fn right_mul(&self, h: &GroupElement) -> Result<ReducedPoint> {
        let m = self.m_red * h.m;
        let shift = row_mul(h.x, &m.inv_unimodular());
        reduce_lattice(m, [self.x_red[0] + shift[0], self.x_red[1] + shift[1]])
    }

    /// Right action of the horocycle flow, `self·u(t)`.
    pub fn right_u(&self, t: f64) -> Result<ReducedPoint> {
        let [[a, b], [c, d]] = self.m_red.0;
        reduce_lattice(Mat2::new(a, a * t + b, c, c * t + d), self.x_red)
    }

    /// Length of the shortest nonzero vector of the linear lattice `Z²m_red`.
    pub fn systole(&self) -> f64 {
        let r = self.m_red.row(1);
        fmath::hypot(r[0], r[1])
    }
}

/// Membership of `z` in the closed fundamental domain, with `1e-12` slack.
pub fn is_fundamental(z: Complex64) -> bool {
    z.re >= -0.5 - 1e-12 && z.re <= 0.5 + 1e-12 && z.norm_sqr() >= 1.0 - 1e-12
}

fn moebius_i(r0: [f64; 2], r1: [f64; 2]) -> Complex64 {
    // (a i + b) / (c i + d) with rows (a, b), (c, d)
    let (a, b, c, d) = (r0[0], r0[1], r1[0], r1[1]);
    let n2 = c * c + d * d;
    Complex64::new((a * c + b * d) / n2, (a * d - b * c) / n2)
}

/// Reduce `g = (M, x)` to its fundamental-domain representative.
pub fn reduce(g: &GroupElement) -> Result<ReducedPoint> {
    if !g.is_finite() {
        return Err(Error::NonFinite("reduce"));
    }
    reduce_lattice(g.m, g.lattice_coords())
}

/// Reduce the affine lattice `Z²m + coords·m`.
///
/// Passing lattice coordinates directly avoids forming `x M⁻¹` for very
/// skewed `m`, which is how section points are built.
pub fn reduce_lattice(m: Mat2, coords: [f64; 2]) -> Result<ReducedPoint> {
    if !m.is_finite() || !coords[0].is_finite() || !coords[1].is_finite() {
        return Err(Error::NonFinite("reduce"));
    }
    let mut r0 = m.row(0);
    let mut r1 = m.row(1);
    // integer change of basis, rows track r0 / r1
    let mut a = [[1i64, 0], [0, 1]];
    let mut steps = 0usize;
    let mut last_n = 0.0;
    loop {
        steps += 1;
        if steps > MAX_REDUCTION_STEPS {
            return Err(Error::ReductionStalled(MAX_REDUCTION_STEPS));
        }
        let z = moebius_i(r0, r1);
        // half-open [-½, ½) with slack, so rounding cannot bounce between ±½
        let mut n = if z.re >= -0.5 - EDGE_TIE && z.re < 0.5 - EDGE_TIE {
            0.0
        } else {
            fmath::floor(z.re + 0.5 + EDGE_TIE)
        };
        // high in the cusp Re z carries error ~ eps·Im z; never undo a step
        if n != 0.0 && n == -last_n {
            n = 0.0;
        }
        last_n = n;
        if n != 0.0 {
            r0 = [r0[0] - n * r1[0], r0[1] - n * r1[1]];
            let ni = n as i64;
            a[0] = [
                checked_sub_mul(a[0][0], ni, a[1][0])?,
                checked_sub_mul(a[0][1], ni, a[1][1])?,
            ];
            continue;
        }
        let norm0 = r0[0] * r0[0] + r0[1] * r0[1];
        let norm1 = r1[0] * r1[0] + r1[1] * r1[1];
        let ratio = norm0 / norm1;
        if ratio < 1.0 - ARC_TIE || ((ratio - 1.0).abs() <= ARC_TIE && z.re > 0.0) {
            // S = [[0,-1],[1,0]]: (r0, r1) -> (-r1, r0)
            let t = r0;
            r0 = [-r1[0], -r1[1]];
            r1 = t;
            let ta = a[0];
            a[0] = [-a[1][0], -a[1][1]];
            a[1] = ta;
            if (ratio - 1.0).abs() <= ARC_TIE {
                break;
            }
            continue;
        }
        break;
    }
    // rotation angle of the second row: M = u(x) a(y) k(θ) has row 2 = (sin θ, cos θ)/√y
    let mut theta = fmath::atan2(r1[0], r1[1]);
    if !(0.0..PI).contains(&theta) {
        r0 = [-r0[0], -r0[1]];
        r1 = [-r1[0], -r1[1]];
        a = [[-a[0][0], -a[0][1]], [-a[1][0], -a[1][1]]];
        theta = fmath::atan2(r1[0], r1[1]);
        if !(0.0..PI).contains(&theta) {
            theta = 0.0;
        }
    }
    let m_red = Mat2([r0, r1]);
    let z = moebius_i(r0, r1);
    // coords' = coords · A⁻¹
    let ainv = [[a[1][1] as f64, -a[0][1] as f64], [-a[1][0] as f64, a[0][0] as f64]];
    let cp = [
        coords[0] * ainv[0][0] + coords[1] * ainv[1][0],
        coords[0] * ainv[0][1] + coords[1] * ainv[1][1],
    ];
    let fl = [fmath::floor(cp[0]), fmath::floor(cp[1])];
    let mut x_red = [cp[0] - fl[0], cp[1] - fl[1]];
    for v in &mut x_red {
        if *v >= 1.0 {
            *v = 0.0;
        }
    }
    let af = Mat2::new(a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64);
    let shift = row_mul([-fl[0], -fl[1]], &af);
    Ok(ReducedPoint { m_red, x_red, gamma: GroupElement::new(af, shift), z, theta })
}

fn checked_sub_mul(x: i64, n: i64, y: i64) -> Result<i64> {
    n.checked_mul(y)
        .and_then(|p| x.checked_sub(p))
        .ok_or(Error::Invalid("integer overflow in lattice reduction"))
}

/// Build the reduced point with basis `u(x) a(y) k(θ)` and affine lattice
/// coordinates `c`, assuming `x + iy` is already in the fundamental domain.
pub fn point_from_coordinates(x: f64, y: f64, theta: f64, c: [f64; 2]) -> ReducedPoint {
    let sy = fmath::sqrt(y);
    let (s, co) = fmath::sincos(theta);
    // u(x) a(y) k(θ)
    let m = Mat2::new(sy * co + x * s / sy, -sy * s + x * co / sy, s / sy, co / sy);
    ReducedPoint { m_red: m, x_red: c, gamma: GroupElement::IDENTITY, z: Complex64::new(x, y), theta }
}

/// Minimum Euclidean norm over the affine lattice `Z²m_red + x_red·m_red`.
///
/// For each coefficient `m` of `b₁` in the window `|m| ≤ 8` the optimal
/// coefficient of `b₂` is found exactly by rounding the 1-d minimizer.
pub fn shortest_affine_vector(p: &ReducedPoint) -> f64 {
    let b1 = p.m_red.row(0);
    let b2 = p.m_red.row(1);
    let n22 = b2[0] * b2[0] + b2[1] * b2[1];
    let [s1, s2] = p.x_red;
    let mut best = f64::INFINITY;
    for m in -SHORTEST_VECTOR_WINDOW..=SHORTEST_VECTOR_WINDOW {
        let c1 = m as f64 + s1;
        let w = [c1 * b1[0], c1 * b1[1]];
        let t_star = -(w[0] * b2[0] + w[1] * b2[1]) / n22;
        let n0 = fmath::round(t_star - s2);
        for dn in -1..=1 {
            let c2 = n0 + dn as f64 + s2;
            let v = [w[0] + c2 * b2[0], w[1] + c2 * b2[1]];
            let r = v[0] * v[0] + v[1] * v[1];
            if r < best {
                best = r;
            }
        }
    }
    fmath::sqrt(best)
}

/// Visit the norm of every vector of `Z²m_red + x_red·m_red` with norm at
/// most `radius`.
pub fn for_each_vector_within<F: FnMut(f64)>(p: &ReducedPoint, radius: f64, mut visit: F) {
    let b1 = p.m_red.row(0);
    let b2 = p.m_red.row(1);
    let n22 = b2[0] * b2[0] + b2[1] * b2[1];
    // height of b1 over the line R·b2 (covolume 1)
    let h = 1.0 / fmath::sqrt(n22);
    let [s1, s2] = p.x_red;
    let r2 = radius * radius;
    let m_lo = fmath::ceil(-radius / h - s1) as i64;
    let m_hi = fmath::floor(radius / h - s1) as i64;
    for m in m_lo..=m_hi {
        let c1 = m as f64 + s1;
        let w = [c1 * b1[0], c1 * b1[1]];
        let wb = w[0] * b2[0] + w[1] * b2[1];
        let ww = w[0] * w[0] + w[1] * w[1];
        // |w + t b2|² ≤ R²  ⇔  n22 t² + 2 wb t + ww − R² ≤ 0
        let disc = wb * wb - n22 * (ww - r2);
        if disc < 0.0 {
            continue;
        }
        let sq = fmath::sqrt(disc);
        let t_lo = (-wb - sq) / n22;
        let t_hi = (-wb + sq) / n22;
        let n_lo = fmath::ceil(t_lo - s2) as i64 - 1;
        let n_hi = fmath::floor(t_hi - s2) as i64 + 1;
        for n in n_lo..=n_hi {
            let c2 = n as f64 + s2;
            let v = [w[0] + c2 * b2[0], w[1] + c2 * b2[1]];
            let r = v[0] * v[0] + v[1] * v[1];
            if r <= r2 {
                visit(fmath::sqrt(r));
            }
        }
    }
}

/// Compactly supported bump `exp(1 − 1/(1 − u²))` on `(-1, 1)` with peak 1.
pub fn bump(u: f64) -> f64 {
    let s = 1.0 - u * u;
    if s <= 0.0 {
        0.0
    } else {
        fmath::exp(1.0 - 1.0 / s)
    }
}

/// Smooth monotone transition from 0 (`s ≤ 0`) to 1 (`s ≥ 1`).
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let a = fmath::exp(-1.0 / s);
    let b = fmath::exp(-1.0 / (1.0 - s));
    a / (a + b)
}

/// Observables on `X`. Every kind is a function of the affine lattice
/// `Z²M + x` itself and hence Γ-invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// `bump((s − center)/width)` where `s` is the shortest affine vector.
    ShortestVectorBump { center: f64, width: f64 },
    /// `bump((λ₁ − center)/width)` where `λ₁` is the systole of the linear
    /// lattice; blind to the affine part.
    SystoleBump { center: f64, width: f64 },
    /// `Σ_v χ(|v|)` over the affine lattice, `χ` the indicator of
    /// `[inner, outer]` smoothed over `mollifier` (sharp when 0).
    SmoothedCount { inner: f64, outer: f64, mollifier: f64 },
    /// Linear combination `Σ wᵢ fᵢ`.
    Linear(Vec<(f64, TestFunction)>),
}

/// Anything that can be evaluated at a point of `X`.
pub trait Observable: Sync {
    fn eval(&self, p: &ReducedPoint) -> f64;
}

impl<F: Fn(&ReducedPoint) -> f64 + Sync> Observable for F {
    fn eval(&self, p: &ReducedPoint) -> f64 {
        self(p)
    }
}

impl Observable for TestFunction {
    fn eval(&self, p: &ReducedPoint) -> f64 {
        evaluate(self, p)
    }
}

impl TestFunction {
    pub fn shortest_vector_bump(center: f64, width: f64) -> Result<Self> {
        check_positive("width", width)?;
        Ok(TestFunction::ShortestVectorBump { center, width })
    }

    pub fn systole_bump(center: f64, width: f64) -> Result<Self> {
        check_positive("width", width)?;
        Ok(TestFunction::SystoleBump { center, width })
    }

    pub fn smoothed_count(inner: f64, outer: f64, mollifier: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner) {
            return Err(Error::BadInterval { lo: inner, hi: outer });
        }
        if !(mollifier >= 0.0) {
            return Err(Error::NonPositive { name: "mollifier", value: mollifier });
        }
        Ok(TestFunction::SmoothedCount { inner, outer, mollifier })
    }

    /// `self − c`.
    pub fn minus_constant(&self, c: f64) -> TestFunction {
        TestFunction::Linear(alloc::vec![(1.0, self.clone()), (-c, TestFunction::Constant(1.0))])
    }

    /// Declared bound on `|f|`; infinite for lattice-point counts, which
    /// grow in the cusp.
    pub fn sup_bound(&self) -> f64 {
        match self {
            TestFunction::Constant(c) => c.abs(),
            TestFunction::ShortestVectorBump { .. } | TestFunction::SystoleBump { .. } => 1.0,
            TestFunction::SmoothedCount { .. } => f64::INFINITY,
            TestFunction::Linear(parts) => parts.iter().map(|(w, f)| w.abs() * f.sup_bound()).sum(),
        }
    }

    /// Whether the function can tell affine lattices apart from their
    /// linear part.
    pub fn affine_sensitive(&self) -> bool {
        match self {
            TestFunction::Constant(_) | TestFunction::SystoleBump { .. } => false,
            TestFunction::ShortestVectorBump { .. } | TestFunction::SmoothedCount { .. } => true,
            TestFunction::Linear(parts) => parts.iter().any(|(w, f)| *w != 0.0 && f.affine_sensitive()),
        }
    }

    /// Haar mean without sampling. Lattice-point counts reduce to the
    /// Lebesgue integral of their radial profile. The bumps are integrated
    /// over the fundamental domain, the shortest-vector kind after
    /// averaging over the torus fiber, which is an integral over the
    /// Voronoi cell. That one takes a few seconds.
    pub fn exact_mean(&self) -> Option<f64> {
        match self {
            TestFunction::Constant(c) => Some(*c),
            TestFunction::SmoothedCount { inner, outer, mollifier } => {
                if *mollifier == 0.0 {
                    return Some(PI * (outer * outer - inner * inner));
                }
                let lo = (inner - mollifier / 2.0).max(0.0);
                let hi = outer + mollifier / 2.0;
                let profile = |r: f64| radial_window(r, *inner, *outer, *mollifier) * 2.0 * PI * r;
                quad::adaptive(profile, lo, hi, 1e-13).ok()
            }
            TestFunction::Linear(parts) => {
                let mut total = 0.0;
                for (w, f) in parts {
                    total += w * f.exact_mean()?;
                }
                Some(total)
            }
            TestFunction::SystoleBump { center, width } => {
                let (c, w) = (*center, *width);
                haar_mean_of_z(|_, y| bump((1.0 / fmath::sqrt(y) - c) / w), 1e-11).ok()
            }
            TestFunction::ShortestVectorBump { center, width } => {
                let (c, w) = (*center, *width);
                let g = move |r: f64| bump((r - c) / w);
                let (lo, hi) = ((c - w).max(0.0), c + w);
                haar_mean_of_z(|x, y| voronoi_radial_integral(x, y, g, lo, hi, 1e-12).unwrap_or(f64::NAN), 1e-9)
                    .ok()
                    .filter(|v| v.is_finite())
            }
        }
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value: v })
    }
}

fn radial_window(r: f64, inner: f64, outer: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return if r >= inner && r <= outer { 1.0 } else { 0.0 };
    }
    let rise = if inner <= 0.0 { 1.0 } else { smooth_step((r - inner) / eps + 0.5) };
    let fall = 1.0 - smooth_step((r - outer) / eps + 0.5);
    rise * fall
}

/// Evaluate a test function at a reduced point.
pub fn evaluate(f: &TestFunction, p: &ReducedPoint) -> f64 {
    match f {
        TestFunction::Constant(c) => *c,
        TestFunction::ShortestVectorBump { center, width } => {
            bump((shortest_affine_vector(p) - center) / width)
        }
        TestFunction::SystoleBump { center, width } => bump((p.systole() - center) / width),
        TestFunction::SmoothedCount { inner, outer, mollifier } => {
            let mut total = 0.0;
            let reach = outer + mollifier / 2.0;
            for_each_vector_within(p, reach, |r| total += radial_window(r, *inner, *outer, *mollifier));
            total
        }
        TestFunction::Linear(parts) => parts.iter().map(|(w, g)| w * evaluate(g, p)).sum(),
    }
}

/// Density constant of the hyperbolic area `dx dy / y²` normalized to a
/// probability on the fundamental domain (whose area is `π/3`).
pub const HYPERBOLIC_DENSITY: f64 = 3.0 / PI;

/// Deterministic Haar sampler on `X`.
///
/// `z` has density `(3/π) dx dy / y²` on the fundamental domain (rejection
/// from the strip), `θ` is uniform on `[0, π)`, and the affine part is
/// uniform on the torus.
#[derive(Debug, Clone)]
pub struct HaarSampler {
    seed: u64,
    rng: ChaCha8Rng,
}

impl HaarSampler {
    pub fn new(seed: u64) -> Self {
        HaarSampler::with_stream(seed, 0)
    }

    /// Independent stream `stream` of the generator seeded with `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        HaarSampler { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normalization(&self) -> f64 {
        HYPERBOLIC_DENSITY
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn sample_z(&mut self) -> Complex64 {
        let y0 = fmath::sqrt(3.0) / 2.0;
        loop {
            let x = self.uniform() - 0.5;
            let y = y0 / (1.0 - self.uniform());
            if x * x + y * y >= 1.0 {
                return Complex64::new(x, y);
            }
        }
    }

    pub fn sample(&mut self) -> ReducedPoint {
        let z = self.sample_z();
        let theta = PI * self.uniform();
        let c = [self.uniform(), self.uniform()];
        point_from_coordinates(z.re, z.im, theta, c)
    }
}

/// Mean and standard error of `f` under Haar measure from `n` samples.
///
/// Samples are drawn in chunks of [`exec::SAMPLE_CHUNK`], chunk `j` using
/// stream `j` of `seed`, so the result does not depend on the executor.
pub fn haar_integral<O: Observable + ?Sized, E: Executor>(
    f: &O,
    n: usize,
    seed: u64,
    executor: &E,
) -> (f64, f64) {
    let m = haar_moments(n, seed, executor, |p| f.eval(p));
    (m.mean, m.stderr())
}

/// Chunked Monte Carlo moments of an arbitrary per-sample statistic.
pub fn haar_moments<E: Executor, G>(n: usize, seed: u64, executor: &E, stat: G) -> Moments
where
    G: Fn(&ReducedPoint) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(exec::SAMPLE_CHUNK);
    let parts = executor.map(chunks, |j| {
        let mut sampler = HaarSampler::with_stream(seed, j as u64);
        let len = exec::SAMPLE_CHUNK.min(n - j * exec::SAMPLE_CHUNK);
        let vals: Vec<f64> = (0..len).map(|_| stat(&sampler.sample())).collect();
        Moments::from_slice(&vals)
    });
    Moments::merge_all(&parts)
}

/// Highest Sobolev degree accepted by [`sobolev_proxy`].
pub const MAX_SOBOLEV_DEGREE: usize = 4;

/// Finite-difference step used for derivatives of order `j` (1-based).
/// First derivatives use `1e-5`; higher orders use larger steps so that
/// the `(2h)^{-j}` cancellation stays well above double rounding.
pub fn default_step(order: usize) -> f64 {
    match order {
        0 | 1 => 1e-5,
        2 => 1e-4,
        3 => 5e-4,
        _ => 2e-3,
    }
}

/// All words of length `len` over the five generators, in lexicographic order.
pub fn monomials(len: usize) -> Vec<Vec<LieGenerator>> {
    let mut out: Vec<Vec<LieGenerator>> = alloc::vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * 5);
        for w in &out {
            for g in LieGenerator::ALL {
                let mut v = w.clone();
                v.push(g);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Central-difference Lie derivative `X_{i1}⋯X_{ij} f` at `p` with step `h`.
pub fn lie_derivative<O: Observable + ?Sized>(f: &O, p: &ReducedPoint, word: &[LieGenerator], h: f64) -> f64 {
    let j = word.len();
    if j == 0 {
        return f.eval(p);
    }
    let base = p.ambient();
    let mut total = 0.0;
    for signs in 0u32..(1 << j) {
        let mut g = base;
        let mut sign = 1.0;
        for (i, gen) in word.iter().enumerate() {
            let s = if signs & (1 << i) != 0 { -1.0 } else { 1.0 };
            sign *= s;
            g = g * exp_generator(*gen, s * h);
        }
        // reducing the perturbed ambient element keeps the affine part exact
        let q = match reduce(&g) {
            Ok(q) => q,
            Err(_) => continue,
        };
        total += sign * f.eval(&q);
    }
    total / fmath::powi(2.0 * h, j as i32)
}

/// Numerical lower bound for `‖f‖_{C_b^d} = Σ_{deg D ≤ d} ‖Df‖_∞`: each
/// monomial's sup is replaced by its maximum over `n` Haar samples.
pub fn sobolev_proxy<O: Observable + ?Sized>(f: &O, d: usize, n: usize, seed: u64) -> Result<f64> {
    sobolev_proxy_with_steps(f, d, n, seed, default_step)
}

/// [`sobolev_proxy`] with a caller-chosen step per derivative order.
pub fn sobolev_proxy_with_steps<O: Observable + ?Sized, S: Fn(usize) -> f64>(
    f: &O,
    d: usize,
    n: usize,
    seed: u64,
    step: S,
) -> Result<f64> {
    if d > MAX_SOBOLEV_DEGREE {
        return Err(Error::DegreeTooLarge(d));
    }
    let mut sampler = HaarSampler::new(seed);
    let points: Vec<ReducedPoint> = (0..n).map(|_| sampler.sample()).collect();
    let mut total = 0.0;
    for order in 0..=d {
        let h = step(order);
        for word in monomials(order) {
            let sup = points.iter().map(|p| lie_derivative(f, p, &word, h).abs()).fold(0.0, f64::max);
            total += sup;
        }
    }
    Ok(total)
}

/// Sobolev proxies for every degree up to `max_degree`.
pub fn sobolev_profile<O: Observable + ?Sized>(
    f: &O,
    max_degree: usize,
    n: usize,
    seed: u64,
) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for d in 0..=max_degree {
        out.insert(d, sobolev_proxy(f, d, n, seed)?);
    }
    Ok(out)
}

/// `∫_F h(x, y) dx dy / y²` over the fundamental domain by nested adaptive
/// quadrature. The substitution `y = 1/s²` turns the measure into
/// `2s ds dx` on `0 < s ≤ (1 − x²)^{-1/4}`; `h` must be even in `x`.
pub fn fundamental_domain_integral<H: Fn(f64, f64) -> f64>(h: H, tol: f64) -> Result<f64> {
    let mut failure = None;
    let half = quad::adaptive(
        |x| {
            let top = libm::pow(1.0 - x * x, -0.25);
            match quad::adaptive(|s| 2.0 * s * h(x, 1.0 / (s * s)), 0.0, top, tol * 0.1) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        0.0,
        0.5,
        tol * 0.5,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(2.0 * half),
    }
}

/// Area of the fundamental domain under `dx dy / y²`.
pub fn fundamental_domain_area(tol: f64) -> Result<f64> {
    fundamental_domain_integral(|_, _| 1.0, tol)
}

/// Haar mean of `h(x, y)` where `x + iy` is the reduced point.
pub fn haar_mean_of_z<H: Fn(f64, f64) -> f64>(h: H, tol: f64) -> Result<f64> {
    Ok(HYPERBOLIC_DENSITY * fundamental_domain_integral(h, tol / HYPERBOLIC_DENSITY)?)
}

/// Angular measure of the circle of radius `r` inside the Voronoi cell of
/// the lattice with rows `b1, b2`.
fn voronoi_angle(b1: [f64; 2], b2: [f64; 2], r: f64) -> f64 {
    let tau = 2.0 * PI;
    let mut cuts: [(f64, f64); 16] = [(0.0, 0.0); 16];
    let mut n = 0;
    let cands = [b1, b2, [b1[0] + b2[0], b1[1] + b2[1]], [b1[0] - b2[0], b1[1] - b2[1]]];
    for w in cands {
        for sgn in [1.0, -1.0] {
            let d = 0.5 * fmath::hypot(w[0], w[1]);
            if d >= r {
                continue;
            }
            let half = libm::acos(d / r);
            let mut lo = fmath::atan2(sgn * w[1], sgn * w[0]) - half;
            lo -= tau * fmath::floor(lo / tau);
            let hi = lo + 2.0 * half;
            if hi > tau {
                cuts[n] = (lo, tau);
                cuts[n + 1] = (0.0, hi - tau);
                n += 2;
            } else {
                cuts[n] = (lo, hi);
                n += 1;
            }
        }
    }
    let cuts = &mut cuts[..n];
    cuts.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut covered = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for &(lo, hi) in cuts.iter() {
        cur = match cur {
            Some((a, b)) if lo <= b => Some((a, b.max(hi))),
            Some((a, b)) => {
                covered += b - a;
                Some((lo, hi))
            }
            None => Some((lo, hi)),
        };
    }
    if let Some((a, b)) = cur {
        covered += b - a;
    }
    (tau - covered).max(0.0)
}

/// `∫_{Vor(L)} g(|v|) dv` for the lattice `L` with basis `u(x)a(y)`, where
/// `g` vanishes outside `[r_lo, r_hi]`. This is the torus average of
/// `g(shortest affine vector)` over all translates of `L`.
pub fn voronoi_radial_integral<G: Fn(f64) -> f64>(x: f64, y: f64, g: G, r_lo: f64, r_hi: f64, tol: f64) -> Result<f64> {
    let sy = fmath::sqrt(y);
    let b1 = [sy, x / sy];
    let b2 = [0.0, 1.0 / sy];
    let mut breaks: Vec<f64> = alloc::vec![r_lo.max(0.0), r_hi];
    let cands = [b1, b2, [b1[0] + b2[0], b1[1] + b2[1]], [b1[0] - b2[0], b1[1] - b2[1]]];
    for w in cands {
        let d = 0.5 * fmath::hypot(w[0], w[1]);
        if d > breaks[0] && d < r_hi {
            breaks.push(d);
        }
    }
    breaks.sort_unstable_by(f64::total_cmp);
    let mut total = 0.0;
    for win in breaks.windows(2) {
        if win[1] > win[0] {
            total += quad::adaptive(|r| g(r) * r * voronoi_angle(b1, b2, r), win[0], win[1], tol)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod voronoi_tests {
    use super::*;

    #[test]
    fn square_lattice_angles() {
        // Voronoi cell of Z² is the unit square centred at 0
        let b1 = [1.0, 0.0];
        let b2 = [0.0, 1.0];
        assert!((voronoi_angle(b1, b2, 0.4) - 2.0 * PI).abs() < 1e-15);
        let r: f64 = 0.6;
        let expect = 2.0 * PI - 8.0 * (0.5 / r).acos();
        assert!((voronoi_angle(b1, b2, r) - expect).abs() < 1e-14);
        assert_eq!(voronoi_angle(b1, b2, 0.75), 0.0);
    }

    #[test]
    fn voronoi_integral_of_one_is_cell_area() {
        for (x, y) in [(0.0, 1.0), (0.3, 1.2), (-0.5, 0.8660254037844386), (0.1, 40.0)] {
            let a = voronoi_radial_integral(x, y, |_| 1.0, 0.0, 20.0 * y.sqrt() + 2.0, 1e-11).unwrap();
            assert!((a - 1.0).abs() < 1e-8, "({x},{y}) -> {a}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{a, u};
    use core::f64::consts::SQRT_2;

    fn check_fundamental(p: &ReducedPoint) {
        assert!(is_fundamental(p.z), "{:?}", p.z);
        assert!(p.z.re < 0.5 + 1e-12);
        assert!(p.x_red.iter().all(|v| (0.0..1.0).contains(v)));
        assert!((0.0..PI).contains(&p.theta));
        assert!((p.m_red.det() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_translation_step() {
        let g = GroupElement::linear(Mat2::new(1.0, 0.7, 0.0, 1.0));
        let p = reduce(&g).unwrap();
        assert!(p.m_red.max_abs_diff(&Mat2::new(1.0, -0.3, 0.0, 1.0)) < 1e-15);
        assert!((p.z - Complex64::new(-0.3, 1.0)).norm() < 1e-15);
        assert_eq!(p.gamma, GroupElement::linear(Mat2::new(1.0, -1.0, 0.0, 1.0)));
    }

    #[test]
    fn torus_reduction() {
        let p = reduce(&GroupElement::translation([2.3, -0.4])).unwrap();
        assert!((p.x_red[0] - 0.3).abs() < 1e-15 && (p.x_red[1] - 0.6).abs() < 1e-15);
        assert_eq!(p.gamma, GroupElement::translation([-2.0, 1.0]));
        assert_eq!(p.m_red, Mat2::IDENTITY);
    }

    #[test]
    fn one_inversion_step() {
        // z = 0.5 i, reduced by S to 2i
        let g = a(0.5).unwrap();
        let p = reduce(&g).unwrap();
        assert!((p.z - Complex64::new(0.0, 2.0)).norm() < 1e-14);
        let s = Mat2::new(0.0, -1.0, 1.0, 0.0);
        let expect = s * g.m;
        // equal up to the sign fixed by the θ convention
        assert!(p.m_red.max_abs_diff(&expect) < 1e-15 || p.m_red.max_abs_diff(&expect.scale(-1.0)) < 1e-15);
        check_fundamental(&p);
    }

    #[test]
    fn gamma_maps_input_to_representative() {
        let mut s = HaarSampler::new(7);
        for i in 0..200 {
            let t = s.uniform() * 20.0 - 10.0;
            let y = 10f64.powf(s.uniform() * 6.0 - 5.0);
            let x = [s.uniform() * 6.0 - 3.0, s.uniform() * 6.0 - 3.0];
            let g = GroupElement::translation(x) * u(t) * a(y).unwrap();
            let p = reduce(&g).unwrap();
            check_fundamental(&p);
            let lhs = p.gamma * g;
            let rhs = p.ambient();
            let scale = 1.0 + g.m.max_abs() * p.gamma.m.max_abs();
            assert!(lhs.max_abs_diff(&rhs) < 1e-12 * scale, "case {i}: {lhs:?} vs {rhs:?}");
            let gi = p.gamma.embed();
            assert!(gi.iter().all(|v| v.fract() == 0.0));
            assert_eq!(p.gamma.m.det(), 1.0);
        }
    }

    #[test]
    fn reducing_a_reduced_point_is_idempotent() {
        let mut s = HaarSampler::new(3);
        for _ in 0..500 {
            let p = s.sample();
            let q = reduce(&p.ambient()).unwrap();
            assert!(q.m_red.max_abs_diff(&p.m_red) < 1e-12);
            for i in 0..2 {
                let d = q.x_red[i] - p.x_red[i];
                // the ambient affine part carries absolute error ~ eps·y in lattice coordinates
                assert!((d - d.round()).abs() < 1e-13 * (1.0 + p.z.im), "{p:?} {q:?}");
            }
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let g = GroupElement::translation([f64::NAN, 0.0]);
        assert_eq!(reduce(&g), Err(Error::NonFinite("reduce")));
    }

    #[test]
    fn shortest_vector_examples() {
        let p = point_from_coordinates(0.0, 1.0, 0.0, [0.5, 0.5]);
        assert!((shortest_affine_vector(&p) - SQRT_2 / 2.0).abs() < 1e-15);
        let p = point_from_coordinates(0.0, 1.0, 0.0, [0.0, 0.0]);
        assert_eq!(shortest_affine_vector(&p), 0.0);
        // lattice {(m/2 + 0.2, 2n + 0.3)}, brute force gives (0.2, 0.3)
        let g = GroupElement::new(Mat2::new(0.5, 0.0, 0.0, 2.0), [0.2, 0.3]);
        let p = reduce(&g).unwrap();
        assert!((shortest_affine_vector(&p) - 0.13f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn shortest_vector_matches_wide_enumeration() {
        let mut s = HaarSampler::new(11);
        for _ in 0..2000 {
            let p = s.sample();
            let b1 = p.m_red.row(0);
            let b2 = p.m_red.row(1);
            let mut best = f64::INFINITY;
            for m in -40i64..=40 {
                for n in -400i64..=400 {
                    let c1 = m as f64 + p.x_red[0];
                    let c2 = n as f64 + p.x_red[1];
                    let v = [c1 * b1[0] + c2 * b2[0], c1 * b1[1] + c2 * b2[1]];
                    best = best.min(libm::hypot(v[0], v[1]));
                }
            }
            assert!((shortest_affine_vector(&p) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_enumeration_matches_brute_force() {
        let mut s = HaarSampler::new(5);
        for _ in 0..300 {
            let p = s.sample();
            let mut fast = 0usize;
            for_each_vector_within(&p, 2.5, |_| fast += 1);
            let b1 = p.m_red.row(0);
            let b2 = p.m_red.row(1);
            let mut slow = 0usize;
            let lim = (2.5 * p.z.im.sqrt() + 4.0) as i64;
            for m in -8i64..=8 {
                for n in -lim..=lim {
                    let c1 = m as f64 + p.x_red[0];
                    let c2 = n as f64 + p.x_red[1];
                    let v = [c1 * b1[0] + c2 * b2[0], c1 * b1[1] + c2 * b2[1]];
                    if v[0] * v[0] + v[1] * v[1] <= 6.25 {
                        slow += 1;
                    }
                }
            }
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn bump_evaluation_example() {
        let f = TestFunction::shortest_vector_bump(0.7, 0.2).unwrap();
        let p = point_from_coordinates(0.0, 1.0, 0.0, [0.5, 0.5]);
        let u = (SQRT_2 / 2.0 - 0.7) / 0.2;
        assert!((u - 0.0355339).abs() < 1e-6);
        assert!((evaluate(&f, &p) - (1.0 - 1.0 / (1.0 - u * u)).exp()).abs() < 1e-15);
    }

    #[test]
    fn sharp_count_matches_enumeration() {
        // Z² + (1/2, 1/2): |v|² = ((2a+1)² + (2b+1)²)/4 ∈ [25, 36]
        let f = TestFunction::smoothed_count(5.0, 6.0, 0.0).unwrap();
        let p = point_from_coordinates(0.0, 1.0, 0.0, [0.5, 0.5]);
        let mut oracle = 0;
        for a in -20i64..20 {
            for b in -20i64..20 {
                let r2 = ((2 * a + 1).pow(2) + (2 * b + 1).pow(2)) as f64 / 4.0;
                if (25.0..=36.0).contains(&r2) {
                    oracle += 1;
                }
            }
        }
        assert_eq!(evaluate(&f, &p), oracle as f64);
        // tiny mollifier: same count away from the boundary radii
        let g = TestFunction::smoothed_count(5.0, 6.0, 1e-9).unwrap();
        assert_eq!(evaluate(&g, &p), oracle as f64);
    }

    #[test]
    fn test_functions_are_gamma_invariant() {
        let fs = [
            TestFunction::shortest_vector_bump(0.5, 0.3).unwrap(),
            TestFunction::systole_bump(0.9, 0.2).unwrap(),
            TestFunction::smoothed_count(0.0, 1.3, 0.1).unwrap(),
        ];
        let mut s = HaarSampler::new(9);
        let gens = [
            GroupElement::linear(Mat2::new(1.0, 1.0, 0.0, 1.0)),
            GroupElement::linear(Mat2::new(0.0, -1.0, 1.0, 0.0)),
            GroupElement::translation([1.0, 0.0]),
            GroupElement::translation([0.0, -1.0]),
        ];
        for _ in 0..200 {
            let p = s.sample();
            let mut g = p.ambient();
            for _ in 0..12 {
                let w = (s.uniform() * 4.0) as usize;
                g = gens[w] * g;
            }
            let q = reduce(&g).unwrap();
            for f in &fs {
                assert!((evaluate(f, &p) - evaluate(f, &q)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sampler_is_deterministic_and_in_domain() {
        let mut a1 = HaarSampler::new(42);
        let mut a2 = HaarSampler::new(42);
        for _ in 0..1000 {
            let p = a1.sample();
            assert_eq!(p, a2.sample());
            check_fundamental(&p);
        }
        assert_ne!(HaarSampler::with_stream(42, 1).sample(), HaarSampler::with_stream(42, 2).sample());
    }

    #[test]
    fn constant_has_exact_integral() {
        let (m, se) = haar_integral(&TestFunction::Constant(1.0), 1000, 1, &crate::exec::Serial);
        assert_eq!(m, 1.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn exact_means() {
        let disc = TestFunction::smoothed_count(0.0, (2.0 / PI).sqrt(), 0.0).unwrap();
        assert!((disc.exact_mean().unwrap() - 2.0).abs() < 1e-14);
        let soft = TestFunction::smoothed_count(0.5, 1.0, 0.1).unwrap();
        let m = soft.exact_mean().unwrap();
        assert!((m - PI * 0.75).abs() < 1e-2);
    }

    #[test]
    fn quadrature_means_agree_with_sampling() {
        for f in [
            TestFunction::systole_bump(0.9, 0.15).unwrap(),
            TestFunction::shortest_vector_bump(0.3, 0.25).unwrap(),
        ] {
            let exact = f.exact_mean().unwrap();
            let (m, se) = haar_integral(&f, 400_000, 77, &crate::exec::Serial);
            assert!((m - exact).abs() < 4.0 * se, "{f:?}: {exact} vs {m} ± {se}");
        }
    }

    #[test]
    fn sobolev_degree_guard() {
        let f = TestFunction::Constant(1.0);
        assert_eq!(sobolev_proxy(&f, 5, 10, 0), Err(Error::DegreeTooLarge(5)));
        assert_eq!(monomials(2).len(), 25);
    }

    #[test]
    fn fundamental_domain_has_area_pi_over_three() {
        let area = fundamental_domain_area(1e-10).unwrap();
        assert!((area - PI / 3.0).abs() < 1e-9);
    }
}
