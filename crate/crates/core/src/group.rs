//! The group `G = SL(2,R) ⋉ R²` with elements written `(M, x)`, `x` a row
//! vector, and product `(M, x)·(M', x') = (MM', xM' + x')`.
//!
//! Right multiplication by `(E, e)` maps the affine lattice `Z²M + x` to
//! `(Z²M + x)E + e`, which is how every flow in this crate acts on lattices.

use core::ops::Mul;

use crate::error::{Error, Result};
use crate::fmath;

/// Row-major 2×2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    #[inline]
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    #[inline]
    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        a * d - b * c
    }

    /// Inverse assuming `det = 1`.
    #[inline]
    pub fn inv_unimodular(&self) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[d, -b], [-c, a]])
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a * s, b * s], [c * s, d * s]])
    }

    #[inline]
    pub fn row(&self, i: usize) -> [f64; 2] {
        self.0[i]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut m = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, o: Mat2) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        let [[e, f], [g, h]] = o.0;
        Mat2([[a * e + b * g, a * f + b * h], [c * e + d * g, c * f + d * h]])
    }
}

/// Row vector times matrix.
#[inline]
pub fn row_mul(x: [f64; 2], m: &Mat2) -> [f64; 2] {
    let [[a, b], [c, d]] = m.0;
    [x[0] * a + x[1] * c, x[0] * b + x[1] * d]
}

/// Threshold above which products are projected back onto `det = 1`,
/// raised to the rounding level of `ad − bc` for large entries.
pub const DET_RENORM_THRESHOLD: f64 = 1e-13;

/// An element `(M, x)` of ASL(2,R).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupElement {
    pub m: Mat2,
    pub x: [f64; 2],
}

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement { m: Mat2::IDENTITY, x: [0.0, 0.0] };

    pub const fn new(m: Mat2, x: [f64; 2]) -> Self {
        GroupElement { m, x }
    }

    pub const fn translation(x: [f64; 2]) -> Self {
        GroupElement { m: Mat2::IDENTITY, x }
    }

    pub const fn linear(m: Mat2) -> Self {
        GroupElement { m, x: [0.0, 0.0] }
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        let m = renormalize(self.m * other.m);
        let xm = row_mul(self.x, &other.m);
        GroupElement { m, x: [xm[0] + other.x[0], xm[1] + other.x[1]] }
    }

    pub fn inv(&self) -> GroupElement {
        let mi = self.m.inv_unimodular();
        let y = row_mul(self.x, &mi);
        GroupElement { m: mi, x: [-y[0], -y[1]] }
    }

    /// The six coordinates `(m11, m12, m21, m22, x1, x2)`.
    pub fn embed(&self) -> [f64; 6] {
        let [[a, b], [c, d]] = self.m.0;
        [a, b, c, d, self.x[0], self.x[1]]
    }

    pub fn max_abs_diff(&self, other: &GroupElement) -> f64 {
        self.embed()
            .iter()
            .zip(other.embed().iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    /// Lattice coordinates of the affine part: `x M⁻¹`.
    pub fn lattice_coords(&self) -> [f64; 2] {
        row_mul(self.x, &self.m.inv_unimodular())
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    fn mul(self, o: GroupElement) -> GroupElement {
        GroupElement::mul(&self, &o)
    }
}

fn renormalize(m: Mat2) -> Mat2 {
    let [[a, b], [c, d]] = m.0;
    let det = m.det();
    let noise = 16.0 * f64::EPSILON * ((a * d).abs() + (b * c).abs());
    if (det - 1.0).abs() > DET_RENORM_THRESHOLD.max(noise) && det > 0.0 {
        m.scale(1.0 / fmath::sqrt(det))
    } else {
        m
    }
}

/// Horocycle flow `u(t)`.
pub fn u(t: f64) -> GroupElement {
    GroupElement::linear(Mat2::new(1.0, t, 0.0, 1.0))
}

/// Geodesic flow `Φ(s) = diag(e^{s/2}, e^{-s/2})`.
pub fn phi(s: f64) -> GroupElement {
    let e = fmath::exp(s / 2.0);
    GroupElement::linear(Mat2::new(e, 0.0, 0.0, 1.0 / e))
}

/// `a(y) = Φ(log y)`.
pub fn a(y: f64) -> Result<GroupElement> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::NonPositive { name: "y", value: y });
    }
    Ok(phi(fmath::ln(y)))
}

/// Matrix of `a(y)` computed directly from `√y`, for hot loops with `y > 0`
/// already validated.
#[inline]
pub(crate) fn a_mat(y: f64) -> Mat2 {
    let s = fmath::sqrt(y);
    Mat2::new(s, 0.0, 0.0, 1.0 / s)
}

/// Rotation `k(θ)`.
pub fn k(theta: f64) -> GroupElement {
    let (s, c) = fmath::sincos(theta);
    GroupElement::linear(Mat2::new(c, -s, s, c))
}

/// Basis of the Lie algebra `sl(2,R) ⊕ R²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LieGenerator {
    /// Upper nilpotent `[[0,1],[0,0]]`.
    X1,
    /// Lower nilpotent `[[0,0],[1,0]]`.
    X2,
    /// Diagonal `diag(1,-1)`.
    X3,
    /// Translation along the first coordinate.
    X4,
    /// Translation along the second coordinate.
    X5,
}

impl LieGenerator {
    pub const ALL: [LieGenerator; 5] =
        [LieGenerator::X1, LieGenerator::X2, LieGenerator::X3, LieGenerator::X4, LieGenerator::X5];
}

/// Closed-form `exp(t·X)` for a basis generator.
pub fn exp_generator(gen: LieGenerator, t: f64) -> GroupElement {
    match gen {
        LieGenerator::X1 => u(t),
        LieGenerator::X2 => GroupElement::linear(Mat2::new(1.0, 0.0, t, 1.0)),
        LieGenerator::X3 => phi(2.0 * t),
        LieGenerator::X4 => GroupElement::translation([t, 0.0]),
        LieGenerator::X5 => GroupElement::translation([0.0, t]),
    }
}

/// `u(t) = k(θ₁)·Φ(s)·k(θ₂)` with `s ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartanFactors {
    pub theta1: f64,
    pub s: f64,
    pub theta2: f64,
}

impl CartanFactors {
    pub fn reconstruct(&self) -> GroupElement {
        k(self.theta1) * phi(self.s) * k(self.theta2)
    }
}

/// KAK factors of `u(t)` from the closed-form 2×2 singular value
/// decomposition. The largest singular value `σ` solves `σ - 1/σ = |t|`,
/// so `s = 2 asinh(|t|/2)`.
pub fn cartan_of_u(t: f64) -> CartanFactors {
    // M = [[1, t], [0, 1]]
    let (e, f, g, h) = (1.0, 0.0, t / 2.0, -t / 2.0);
    let a1 = fmath::atan2(g, f);
    let a2 = fmath::atan2(h, e);
    let theta2 = (a2 - a1) / 2.0;
    let theta1 = (a2 + a1) / 2.0;
    let s = 2.0 * fmath::asinh(t.abs() / 2.0);
    CartanFactors { theta1, s, theta2 }
}

/// Near-identity proxy for a left-invariant metric: the sup-norm distance
/// of `g1⁻¹g2` from the identity in the six matrix/affine coordinates.
pub fn dist_proxy(g1: &GroupElement, g2: &GroupElement) -> f64 {
    let d = g1.inv() * *g2;
    d.max_abs_diff(&GroupElement::IDENTITY)
}
