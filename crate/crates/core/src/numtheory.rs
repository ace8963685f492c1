//! Integer kernel: gcd, a linear sieve for φ and μ, additive characters
//! `e(x) = exp(2πix)` and the normalized Ramanujan sums
//! `S(q,k) = φ(q)⁻¹ Σ_{(p,q)=1} e(kp/q) = μ(q_k)/φ(q_k)` with `q_k = q/(q,k)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fmath;

/// Largest sieve accepted by [`SieveTable::build`].
pub const SIEVE_LIMIT_MAX: u64 = 1_000_000_000;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn gcd_i64(a: i64, b: i64) -> u64 {
    gcd(a.unsigned_abs(), b.unsigned_abs())
}

/// `e(x) = exp(2πix)` with `x` reduced mod 1 before scaling.
pub fn e(x: f64) -> Complex64 {
    let r = x - fmath::round(x);
    let (s, c) = fmath::sincos(TAU * r);
    Complex64::new(c, s)
}

/// `e(num/den)` with the numerator reduced mod `den` in integer arithmetic.
pub fn e_rational(num: i128, den: u64) -> Complex64 {
    let d = den as i128;
    let r = num.rem_euclid(d);
    // Map to (-den/2, den/2] to keep the angle small.
    let r = if 2 * r > d { r - d } else { r };
    e(r as f64 / den as f64)
}

/// Precomputed smallest prime factor, Euler φ and Möbius μ up to `limit`.
#[derive(Debug, Clone)]
pub struct SieveTable {
    limit: u32,
    spf: Vec<u32>,
    phi: Vec<u32>,
    mu: Vec<i8>,
    primes: Vec<u32>,
}

impl SieveTable {
    /// Linear (Euler) sieve, `O(limit)` time.
    pub fn build(limit: u64) -> Result<SieveTable> {
        if limit == 0 {
            return Err(Error::NonPositive { name: "limit", value: 0.0 });
        }
        if limit > SIEVE_LIMIT_MAX {
            return Err(Error::SieveTooLarge(limit));
        }
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        let mut phi = vec![0u32; n + 1];
        let mut mu = vec![0i8; n + 1];
        let mut primes: Vec<u32> = Vec::new();
        phi[1] = 1;
        mu[1] = 1;
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                phi[i] = i as u32 - 1;
                mu[i] = -1;
                primes.push(i as u32);
            }
            for &p in &primes {
                let ip = i * p as usize;
                if p > spf[i] || ip > n {
                    break;
                }
                spf[ip] = p;
                if p == spf[i] {
                    phi[ip] = phi[i] * p;
                    mu[ip] = 0;
                } else {
                    phi[ip] = phi[i] * (p - 1);
                    mu[ip] = -mu[i];
                }
            }
        }
        Ok(SieveTable { limit: limit as u32, spf, phi, mu, primes })
    }

    pub fn limit(&self) -> u64 {
        self.limit as u64
    }

    pub fn phi(&self, n: u64) -> u64 {
        self.phi[n as usize] as u64
    }

    pub fn mu(&self, n: u64) -> i32 {
        self.mu[n as usize] as i32
    }

    pub fn smallest_prime_factor(&self, n: u64) -> u64 {
        self.spf[n as usize] as u64
    }

    pub fn is_prime(&self, n: u64) -> bool {
        n >= 2 && self.spf[n as usize] as u64 == n
    }

    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    /// Distinct prime factors of `n` in increasing order.
    pub fn distinct_primes(&self, mut n: u64) -> Vec<u64> {
        let mut out = Vec::new();
        while n > 1 {
            let p = self.smallest_prime_factor(n);
            out.push(p);
            while n.is_multiple_of(p) {
                n /= p;
            }
        }
        out
    }

    pub fn omega(&self, n: u64) -> u32 {
        self.distinct_primes(n).len() as u32
    }

    /// Ramanujan sum from the table: `μ(q_k)/φ(q_k)`.
    pub fn ramanujan_sum(&self, q: u64, k: i64) -> f64 {
        let qk = q / gcd(q, k.unsigned_abs());
        self.mu(qk) as f64 / self.phi(qk) as f64
    }
}

/// Prime factorization by trial division, as `(p, exponent)` pairs.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn euler_phi(n: u64) -> u64 {
    factorize(n).iter().fold(n, |acc, &(p, _)| acc / p * (p - 1))
}

pub fn mobius(n: u64) -> i32 {
    let f = factorize(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

pub fn omega(n: u64) -> u32 {
    factorize(n).len() as u32
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && factorize(n) == [(n, 1)]
}

/// Smallest prime `≥ n`.
pub fn next_prime(n: u64) -> u64 {
    let mut m = n.max(2);
    while !is_prime(m) {
        m += 1;
    }
    m
}

/// `q⁻¹ Σ_{p=0}^{q-1} e(mp/q)`, summed directly.
pub fn full_exp_sum(q: u64, m: i64) -> Result<Complex64> {
    if q == 0 {
        return Err(Error::NonPositive { name: "q", value: 0.0 });
    }
    let mut s = Complex64::new(0.0, 0.0);
    for p in 0..q {
        s += e_rational(m as i128 * p as i128, q);
    }
    Ok(s / q as f64)
}

/// Normalized Ramanujan sum `S(q,k)` from the closed form `μ(q_k)/φ(q_k)`.
pub fn ramanujan_sum(q: u64, k: i64) -> Result<f64> {
    if q == 0 {
        return Err(Error::NonPositive { name: "q", value: 0.0 });
    }
    let qk = q / gcd(q, k.unsigned_abs());
    Ok(mobius(qk) as f64 / euler_phi(qk) as f64)
}

/// `φ(q)⁻¹ Σ_{0≤p<q, (p,q)=1} e(kp/q)`, summed directly.
pub fn ramanujan_sum_direct(q: u64, k: i64) -> Result<Complex64> {
    if q == 0 {
        return Err(Error::NonPositive { name: "q", value: 0.0 });
    }
    let mut s = Complex64::new(0.0, 0.0);
    let mut count = 0u64;
    for p in 0..q {
        if gcd(p, q) == 1 {
            s += e_rational(k as i128 * p as i128, q);
            count += 1;
        }
    }
    Ok(s / count as f64)
}

/// `Σ_{r=0}^{q-1} |S(q,r)|` through the divisor sum
/// `Σ_{d|q} #{r : q_r = d}·|μ(d)|/φ(d)`; the count of residues with
/// `q_r = d` is `φ(d)`.
pub fn abs_s_row_sum(q: u64) -> Result<f64> {
    if q == 0 {
        return Err(Error::NonPositive { name: "q", value: 0.0 });
    }
    let mut total = 0.0;
    for d in divisors(q) {
        let phi_d = euler_phi(d) as f64;
        total += phi_d * mobius(d).unsigned_abs() as f64 / phi_d;
    }
    Ok(total)
}

/// Brute-force `Σ_r |S(q,r)|` from direct character sums, `O(q²)`.
pub fn abs_s_row_sum_direct(q: u64) -> Result<f64> {
    let mut total = 0.0;
    for r in 0..q {
        total += ramanujan_sum_direct(q, r as i64)?.norm();
    }
    Ok(total)
}

/// Divisors of `n` in increasing order.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Integers `p` with `gcd(p, q) = 1` and `p/q ∈ [lo, hi)`, ascending.
pub fn coprime_residues(q: u64, lo: f64, hi: f64) -> Result<impl Iterator<Item = i64>> {
    if q == 0 {
        return Err(Error::NonPositive { name: "q", value: 0.0 });
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::BadInterval { lo, hi });
    }
    let (first, end) = index_window(q, lo, hi);
    Ok((first..end).filter(move |&p| gcd(p.unsigned_abs(), q) == 1))
}

/// Integer range `[first, end)` of `k` with `k/n ∈ [lo, hi)`, exact at the
/// endpoints when `lo·n` or `hi·n` are integers.
pub fn index_window(n: u64, lo: f64, hi: f64) -> (i64, i64) {
    let nf = n as f64;
    let mut first = fmath::ceil(lo * nf) as i64;
    while (first as f64) / nf < lo {
        first += 1;
    }
    while ((first - 1) as f64) / nf >= lo {
        first -= 1;
    }
    let mut end = fmath::ceil(hi * nf) as i64;
    while (end as f64) / nf < hi {
        end += 1;
    }
    while ((end - 1) as f64) / nf >= hi {
        end -= 1;
    }
    (first, end.max(first))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn sieve_examples() {
        let s = SieveTable::build(100).unwrap();
        // 1, 5, 7, 11
        assert_eq!(s.phi(12), 4);
        assert_eq!(s.mu(30), -1);
        assert_eq!(s.mu(12), 0);
        assert_eq!(s.phi(1), 1);
        assert_eq!(s.mu(1), 1);
        assert!(s.is_prime(97) && !s.is_prime(91));
        assert_eq!(s.omega(60), 3);
    }

    #[test]
    fn sieve_guards() {
        assert!(matches!(SieveTable::build(0), Err(Error::NonPositive { .. })));
        assert_eq!(SieveTable::build(SIEVE_LIMIT_MAX + 1).unwrap_err(), Error::SieveTooLarge(SIEVE_LIMIT_MAX + 1));
    }

    #[test]
    fn sieve_agrees_with_trial_division() {
        let s = SieveTable::build(5000).unwrap();
        for n in 1..=5000u64 {
            assert_eq!(s.phi(n), euler_phi(n), "phi({n})");
            assert_eq!(s.mu(n), mobius(n), "mu({n})");
        }
    }

    #[test]
    fn divisor_sum_of_phi() {
        let s = SieveTable::build(20_000).unwrap();
        for q in 1..=20_000u64 {
            let total: u64 = divisors(q).iter().map(|&d| s.phi(d)).sum();
            assert_eq!(total, q);
        }
    }

    #[test]
    fn full_sum_examples() {
        assert!((full_exp_sum(7, 14).unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(full_exp_sum(7, 3).unwrap().norm() < 1e-12);
        for m in -5..5 {
            assert!((full_exp_sum(1, m).unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert!(full_exp_sum(0, 1).is_err());
    }

    #[test]
    fn ramanujan_examples() {
        for q in 1..30 {
            assert_eq!(ramanujan_sum(q, 0).unwrap(), 1.0);
        }
        assert!((ramanujan_sum(5, 1).unwrap() + 0.25).abs() < 1e-15);
        assert!((ramanujan_sum_direct(5, 1).unwrap() - Complex64::new(-0.25, 0.0)).norm() < 1e-12);
        assert_eq!(ramanujan_sum(4, 2).unwrap(), -1.0);
        assert!((ramanujan_sum_direct(4, 2).unwrap() - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn abs_row_sum_examples() {
        for q in [2u64, 3, 5, 7] {
            assert_eq!(abs_s_row_sum(q).unwrap(), 2.0);
            assert!((abs_s_row_sum_direct(q).unwrap() - 2.0).abs() < 1e-12);
        }
        assert_eq!(abs_s_row_sum(12).unwrap(), 4.0);
        assert!((abs_s_row_sum_direct(12).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(abs_s_row_sum(1).unwrap(), 1.0);
    }

    #[test]
    fn coprime_examples() {
        let v: Vec<i64> = coprime_residues(6, 0.0, 1.0).unwrap().collect();
        assert_eq!(v, [1, 5]);
        let v: Vec<i64> = coprime_residues(6, 0.0, 2.0).unwrap().collect();
        assert_eq!(v, [1, 5, 7, 11]);
        let v: Vec<i64> = coprime_residues(1, 0.0, 3.0).unwrap().collect();
        assert_eq!(v, [0, 1, 2]);
        let v: Vec<i64> = coprime_residues(10, -0.5, 0.0).unwrap().collect();
        assert_eq!(v, [-3, -1]);
        for q in 1..60u64 {
            for &x in &[0.0, 0.37, -2.2] {
                let n = coprime_residues(q, x, x + 1.0).unwrap().count() as u64;
                assert_eq!(n, euler_phi(q));
            }
        }
    }

    #[test]
    fn characters_reduce_their_argument() {
        let big = e(1e9 + 0.25);
        assert!((big - Complex64::new(0.0, 1.0)).norm() < 1e-6);
        let r = e_rational(3 * 1_000_000_007i128 + 1, 4);
        // 3·1_000_000_007 + 1 ≡ 2 (mod 4)
        assert!((r - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn next_prime_walks_forward() {
        assert_eq!(next_prime(2000), 2003);
        assert_eq!(next_prime(20_000), 20_011);
        assert_eq!(next_prime(1), 2);
    }
}
