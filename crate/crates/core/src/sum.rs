//! Pairwise (tree) summation with a fixed split order.

use num_complex::Complex64;

const LEAF: usize = 32;

/// Sum of `xs` by recursive halving. The split points depend only on the
/// length, so the result is reproducible bit for bit.
pub fn pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise(&xs[..mid]) + pairwise(&xs[mid..])
}

pub fn pairwise_complex(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= LEAF {
        let mut s = Complex64::new(0.0, 0.0);
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_complex(&xs[..mid]) + pairwise_complex(&xs[mid..])
}

/// Running mean and second moment accumulated per chunk and merged in
/// a fixed order (Chan et al. parallel update).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn from_slice(xs: &[f64]) -> Moments {
        if xs.is_empty() {
            return Moments::default();
        }
        let n = xs.len() as f64;
        let mean = pairwise(xs) / n;
        let mut m2 = 0.0;
        for &x in xs {
            let d = x - mean;
            m2 += d * d;
        }
        Moments { count: xs.len() as u64, mean, m2 }
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64) * (other.count as f64) / n;
        Moments { count: self.count + other.count, mean, m2 }
    }

    /// Merge a sequence of moments as a balanced tree.
    pub fn merge_all(parts: &[Moments]) -> Moments {
        match parts.len() {
            0 => Moments::default(),
            1 => parts[0],
            n => {
                let mid = n / 2;
                Moments::merge_all(&parts[..mid]).merge(&Moments::merge_all(&parts[mid..]))
            }
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count as f64 - 1.0)
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            libm::sqrt(self.variance() / self.count as f64)
        }
    }
}
