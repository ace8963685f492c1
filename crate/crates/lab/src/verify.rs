//! Verification suites and the acceptance criteria.
//!
//! Every check is deterministic: random inputs come from fixed seeds.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use horocycle_core::ensembles::{
    dm_second_moments, fit_decay, mixing_correlations, primitive_average, primitive_via_ramanujan,
    trig_primitive_spectral, Ensemble, EnsembleResult, WeightFunction,
};
use horocycle_core::group::{a, cartan_of_u, dist_proxy, u, GroupElement, Mat2};
use horocycle_core::modular::{
    evaluate, fundamental_domain_area, haar_moments, point_from_coordinates, HaarSampler, ReducedPoint,
};
use horocycle_core::numtheory::{self, SieveTable};
use horocycle_core::sections::{eval_section, window_constants};
use horocycle_core::{HorocycleSection, TestFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::config::{EnsembleKind, ExperimentConfig, Preset};
use crate::error::LabError;
use crate::pool::Pool;
use crate::runner;

/// One row of a pass/fail table. `criterion` is the acceptance criterion
/// number, or 0 for supplementary checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        if self.criterion > 0 {
            write!(f, "[{tag}] criterion {:>2} {}: {} ({:.1} s)", self.criterion, self.name, self.detail, self.seconds)
        } else {
            write!(f, "[{tag}] {}: {} ({:.1} s)", self.name, self.detail, self.seconds)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Identities,
    Group,
    Measure,
    Distance,
    Mixing,
    Ensembles,
    Full,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::Identities, Suite::Group, Suite::Measure, Suite::Distance, Suite::Mixing, Suite::Ensembles, Suite::Full];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Group => "group",
            Suite::Measure => "measure",
            Suite::Distance => "distance",
            Suite::Mixing => "mixing",
            Suite::Ensembles => "ensembles",
            Suite::Full => "full",
        }
    }

    pub fn criteria(self) -> &'static [u8] {
        match self {
            Suite::Identities => &[1, 11],
            Suite::Group => &[2],
            Suite::Measure => &[3],
            Suite::Distance => &[4],
            Suite::Mixing => &[5, 6],
            Suite::Ensembles => &[7, 8, 9, 10],
            Suite::Full => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
        }
    }
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown suite `{s}`")))
    }
}

pub fn run_suite(suite: Suite, pool: &Pool) -> Vec<Check> {
    suite.criteria().iter().map(|&c| criterion(c, pool)).collect()
}

/// Evaluate acceptance criterion `id` (1 to 11).
pub fn criterion(id: u8, pool: &Pool) -> Check {
    let start = Instant::now();
    let (name, outcome) = match id {
        1 => ("exact identities", exact_identities()),
        2 => ("group laws", group_laws()),
        3 => ("Haar measure", haar_measure(pool)),
        4 => ("distance bounds", distance_bounds()),
        5 => ("mixing decay", mixing_decay(pool)),
        6 => ("orbit discrepancy decay", discrepancy_decay(pool)),
        7 => ("nonprimitive decay", nonprimitive_decay(pool)),
        8 => ("primitive decay", primitive_decay(pool)),
        9 => ("twisted uniformity", twisted_uniformity(pool)),
        10 => ("negative control", negative_control(pool)),
        11 => ("Ramanujan expansion", ramanujan_expansion(pool)),
        _ => ("unknown", Err(format!("no criterion {id}"))),
    };
    let (passed, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Check { criterion: id, name: name.into(), passed, detail, seconds: start.elapsed().as_secs_f64() }
}

type Outcome = Result<(bool, String), String>;

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

/// `Σ_r |S(q,r)|` for every `q ≤ qmax`, from one FFT of the coprimality
/// indicator per `q`.
pub fn abs_s_row_sums_fft(qmax: usize) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let mut out = vec![0.0; qmax + 1];
    for (q, slot) in out.iter_mut().enumerate().skip(1) {
        let mut buf: Vec<Complex<f64>> = (0..q)
            .map(|p| Complex::new(if numtheory::gcd(p as u64, q as u64) == 1 { 1.0 } else { 0.0 }, 0.0))
            .collect();
        let phi = buf.iter().filter(|c| c.re == 1.0).count() as f64;
        planner.plan_fft_forward(q).process(&mut buf);
        *slot = buf.iter().map(|c| c.norm()).sum::<f64>() / phi;
    }
    out
}

fn exact_identities() -> Outcome {
    let mut worst_full = 0.0f64;
    let mut worst_ram = 0.0f64;
    for q in 1..=300u64 {
        for m in -(q as i64)..=2 * q as i64 {
            let want = if m.rem_euclid(q as i64) == 0 { 1.0 } else { 0.0 };
            let v = numtheory::full_exp_sum(q, m).map_err(err)?;
            worst_full = worst_full.max((v.re - want).abs().max(v.im.abs()));
        }
        for m in 0..q as i64 {
            let direct = numtheory::ramanujan_sum_direct(q, m).map_err(err)?;
            let closed = numtheory::ramanujan_sum(q, m).map_err(err)?;
            worst_ram = worst_ram.max((direct.re - closed).abs().max(direct.im.abs()));
        }
    }
    let sieve = SieveTable::build(10_000).map_err(err)?;
    let fft = abs_s_row_sums_fft(10_000);
    let mut closed_mismatch = 0u64;
    let mut worst_sum = 0.0f64;
    for q in 1..=10_000u64 {
        let want = (1u64 << sieve.omega(q)) as f64;
        if numtheory::abs_s_row_sum(q).map_err(err)? != want {
            closed_mismatch += 1;
        }
        worst_sum = worst_sum.max((fft[q as usize] - want).abs());
    }
    let mut worst_brute = 0.0f64;
    for q in 1..=120u64 {
        let want = (1u64 << sieve.omega(q)) as f64;
        worst_brute = worst_brute.max((numtheory::abs_s_row_sum_direct(q).map_err(err)? - want).abs());
    }
    let passed = worst_full <= 1e-9 && worst_ram <= 1e-9 && closed_mismatch == 0 && worst_sum <= 1e-9 && worst_brute <= 1e-9;
    Ok((
        passed,
        format!(
            "full sums {worst_full:.1e}, Ramanujan {worst_ram:.1e} (q<=300); sum|S| closed form mismatches {closed_mismatch}, \
             FFT {worst_sum:.1e} (q<=1e4), brute force {worst_brute:.1e} (q<=120)"
        ),
    ))
}

fn scale(g: &GroupElement) -> f64 {
    g.embed().iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

fn random_element(rng: &mut ChaCha20Rng) -> GroupElement {
    let e = rng.gen_range(-1.5..1.5f64).exp();
    let b = rng.gen_range(-3.0..3.0);
    let c = rng.gen_range(-3.0..3.0);
    let x = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
    GroupElement::new(Mat2::new(e, b, c, (1.0 + b * c) / e), x)
}

fn group_laws() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut assoc = 0.0f64;
    let mut inverse = 0.0f64;
    for _ in 0..100_000 {
        let (g, h, k) = (random_element(&mut rng), random_element(&mut rng), random_element(&mut rng));
        let s = scale(&g) * scale(&h) * scale(&k);
        assoc = assoc.max(((g * h) * k).max_abs_diff(&(g * (h * k))) / s);
        let s2 = scale(&g).powi(2);
        inverse = inverse
            .max((g * g.inv()).max_abs_diff(&GroupElement::IDENTITY) / s2)
            .max((g.inv() * g).max_abs_diff(&GroupElement::IDENTITY) / s2);
    }
    let mut conj = 0.0f64;
    for i in 0..=60 {
        let y = 10f64.powf(-3.0 + 0.1 * i as f64);
        let ay = a(y).map_err(err)?;
        for j in 0..=40 {
            let t = -10.0 + 0.5 * j as f64;
            let r = (ay * u(t) * ay.inv()).max_abs_diff(&u(t * y));
            conj = conj.max(r / (t * y).abs().max(1.0));
        }
    }
    let mut cartan = 0.0f64;
    for i in 0..=240 {
        let t = 10f64.powf(-6.0 + 0.05 * i as f64);
        for t in [t, -t] {
            let k = cartan_of_u(t);
            cartan = cartan.max(k.reconstruct().max_abs_diff(&u(t)));
        }
    }
    let passed = assoc < 1e-10 && inverse < 1e-10 && conj < 1e-12 && cartan < 1e-9;
    Ok((
        passed,
        format!(
            "associativity {assoc:.1e}, inverse {inverse:.1e} (relative, 1e5 triples); conjugation {conj:.1e}; \
             Cartan {cartan:.1e} (t in +-[1e-6,1e6])"
        ),
    ))
}

/// `P(Im z > y)` for `z` Haar-distributed on the fundamental domain.
pub fn im_z_tail(y: f64) -> f64 {
    let s = if y >= 1.0 {
        1.0 / y
    } else if y <= 3f64.sqrt() / 2.0 {
        PI / 3.0
    } else {
        let x0 = (1.0 - y * y).sqrt();
        2.0 * (x0.asin() + (0.5 - x0) / y)
    };
    3.0 / PI * s
}

/// A second Haar sampler, independent of [`HaarSampler`]: `x = sin φ`
/// with `φ` uniform on `[−π/6, π/6]`, then `y = cos φ / V` with `V`
/// uniform on `(0, 1]`. No rejection step.
pub struct AngleSampler {
    rng: ChaCha20Rng,
}

impl AngleSampler {
    pub fn new(seed: u64) -> Self {
        AngleSampler { rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn sample(&mut self) -> ReducedPoint {
        let phi = self.rng.gen_range(-PI / 6.0..PI / 6.0);
        let v = 1.0 - self.rng.gen::<f64>();
        let (x, y) = (phi.sin(), phi.cos() / v);
        let theta = PI * self.rng.gen::<f64>();
        point_from_coordinates(x, y, theta, [self.rng.gen(), self.rng.gen()])
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn haar_measure(pool: &Pool) -> Outcome {
    const N: usize = 1_000_000;
    let area = fundamental_domain_area(1e-12).map_err(err)?;
    let area_gap = (area - PI / 3.0).abs();

    let tail = 3.0 / (2.0 * PI);
    let cusp = haar_moments(N, 3, pool, |p| if p.z.im > 2.0 { 1.0 } else { 0.0 });
    let cusp_z = (cusp.mean - tail).abs() / cusp.stderr();

    let disc = TestFunction::smoothed_count(0.0, (2.0 / PI).sqrt(), 0.0).map_err(err)?;
    let count = haar_moments(N, 4, pool, |p| evaluate(&disc, p));
    let count_z = (count.mean - 2.0).abs() / count.stderr();

    // the same statistics under the second sampler
    let mut alt = AngleSampler::new(5);
    let mut cusp_alt = Vec::with_capacity(N);
    let mut count_alt = Vec::with_capacity(N);
    for _ in 0..N {
        let p = alt.sample();
        cusp_alt.push(if p.z.im > 2.0 { 1.0 } else { 0.0 });
        count_alt.push(evaluate(&disc, &p));
    }
    let (cm, cs) = mean_se(&cusp_alt);
    let (sm, ss) = mean_se(&count_alt);
    let alt_z = ((cm - tail).abs() / cs).max((sm - 2.0).abs() / ss);

    // Kolmogorov–Smirnov on Im z
    let mut s = HaarSampler::new(6);
    let mut ys: Vec<f64> = (0..N).map(|_| s.sample_z().im).collect();
    ys.sort_by(f64::total_cmp);
    let ks = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let cdf = 1.0 - im_z_tail(y);
            (cdf - i as f64 / N as f64).abs().max(((i + 1) as f64 / N as f64 - cdf).abs())
        })
        .fold(0.0f64, f64::max)
        * (N as f64).sqrt();

    let passed = area_gap <= 1e-6 && cusp_z <= 3.0 && count_z <= 3.0 && alt_z <= 3.0 && ks < 1.95;
    Ok((
        passed,
        format!(
            "area error {area_gap:.1e}; P(Im z>2) {:.5} ({cusp_z:.2} se); disc count {:.4} ({count_z:.2} se); \
             second sampler max {alt_z:.2} se; KS sqrt(n)D {ks:.2}",
            cusp.mean, count.mean
        ),
    ))
}

/// Worst ratios of `dist_proxy` to the two distance bounds over random
/// admissible `(t, m, N)`.
pub fn distance_ratios(section: &HorocycleSection, alpha: f64, beta: f64, trials: usize, seed: u64) -> Result<(f64, f64), String> {
    let a_xi = window_constants(section, alpha, beta).map_err(err)?.a_xi;
    if a_xi == 0.0 {
        return Err("A(xi) = 0 makes the bounds vacuous".into());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let n = 10f64.powf(rng.gen_range(3.0..8.0)).round();
        let ay = a(1.0 / n).map_err(err)?;
        // (1 + m) N^{-1/2} A ≤ 0.1
        let mmax = (0.1 * n.sqrt() / a_xi - 1.0).floor().max(0.0) as u64;
        let m = rng.gen_range(0..=mmax) as f64;
        let t = rng.gen_range(alpha..beta - m / n);
        let g1 = eval_section(section, t) * ay * u(m);
        let g2 = eval_section(section, t + m / n) * ay;
        first = first.max(dist_proxy(&g1, &g2) / ((1.0 + m) * a_xi / n.sqrt()));

        // N|s − t| ≤ 1
        let d = 10f64.powf(rng.gen_range(-3.0..0.0)) / n;
        let s = rng.gen_range(alpha..beta - d);
        let h1 = eval_section(section, s) * ay;
        let h2 = eval_section(section, s + d) * ay;
        second = second.max(dist_proxy(&h1, &h2) / (n * d + (1.0 + d) * a_xi / n.sqrt()));
    }
    Ok((first, second))
}

fn distance_bounds() -> Outcome {
    let brown = distance_ratios(&HorocycleSection::parabolic(), 0.0, 2.0, 100_000, 7)?;
    let strom: HorocycleSection = "constant:sqrt2,sqrt3".parse().map_err(err)?;
    let strom = distance_ratios(&strom, 0.0, 2.0, 100_000, 8)?;
    let worst = brown.0.max(brown.1).max(strom.0).max(strom.1);
    Ok((
        worst.is_finite() && worst <= 50.0,
        format!(
            "max ratio first/second bound: parabolic {:.2e}/{:.3}, constant {:.2e}/{:.3} (1e5 trials each)",
            brown.0, brown.1, strom.0, strom.1
        ),
    ))
}

fn svb() -> Result<(TestFunction, f64), String> {
    let f = TestFunction::shortest_vector_bump(0.3, 0.25).map_err(err)?;
    let mean = f.exact_mean().ok_or("no quadrature mean")?;
    Ok((f, mean))
}

fn mixing_decay(pool: &Pool) -> Outcome {
    let (f, mean) = svb()?;
    let ts = [1.0, 4.0, 16.0, 64.0];
    let cov = mixing_correlations(&f, &f, &ts, 10_000_000, 9, (mean, mean), pool).map_err(err)?;
    let pts: Vec<(f64, f64)> =
        ts.iter().zip(&cov).filter(|(_, c)| c.0.abs() > 3.0 * c.1).map(|(t, c)| (*t, c.0.abs())).collect();
    let fit = fit_decay(&pts).map_err(err)?;
    let shown: Vec<String> = cov.iter().map(|c| format!("{:.2e}+-{:.1e}", c.0, c.1)).collect();
    Ok((-fit.delta_hat <= -0.5, format!("slope {:.2} on {} points; {}", -fit.delta_hat, pts.len(), shown.join(", "))))
}

fn discrepancy_decay(pool: &Pool) -> Outcome {
    let (f, mean) = svb()?;
    let ms: Vec<u64> = (0..=6).map(|k| 1u64 << k).collect();
    let mom = dm_second_moments(&f, &ms, mean, 100_000, 10, pool).map_err(err)?;
    let pts: Vec<(f64, f64)> =
        ms.iter().zip(&mom).filter(|(_, m)| m.0 > 3.0 * m.1).map(|(m, v)| (*m as f64, v.0)).collect();
    let fit = fit_decay(&pts).map_err(err)?;
    Ok((
        -fit.delta_hat <= -0.5,
        format!("slope {:.2} over M=1..64 on {} points (r2 {:.3})", -fit.delta_hat, pts.len(), fit.r2),
    ))
}

fn brown(ensembles: Vec<EnsembleKind>) -> ExperimentConfig {
    ExperimentConfig { ensembles, ..ExperimentConfig::preset(Preset::Brown) }
}

fn rows(results: &[EnsembleResult], e: Ensemble) -> Vec<EnsembleResult> {
    results.iter().filter(|r| r.ensemble == e).cloned().collect()
}

fn series_fit(report: &runner::RunReport, name: &str) -> Result<f64, String> {
    let s = report.fits.iter().find(|s| s.series == name).ok_or(format!("no {name} fit"))?;
    s.fit.as_ref().map(|f| f.delta_hat).ok_or(s.note.clone().unwrap_or_default())
}

fn nonprimitive_decay(pool: &Pool) -> Outcome {
    let report = runner::run(&brown(vec![EnsembleKind::Nonprimitive]), pool).map_err(err)?;
    let r = rows(&report.results, Ensemble::Nonprimitive);
    let decreasing = r.windows(2).all(|w| w[1].abs_err < w[0].abs_err);
    let above = r.iter().all(|x| x.abs_err > runner::FLOOR_FACTOR * x.noise_floor());
    let delta = series_fit(&report, "nonprimitive")?;
    let errs: Vec<String> = r.iter().map(|x| format!("{:.2e}", x.abs_err)).collect();
    Ok((
        decreasing && above && delta >= 0.2,
        format!("abs_err {} at N=2e3,2e4,2e5; delta1 {delta:.3}", errs.join(", ")),
    ))
}

fn primitive_decay(pool: &Pool) -> Outcome {
    let cfg = ExperimentConfig {
        q_grid: crate::config::default_q_grid(&[2_000, 20_000, 200_000], true),
        q_primes_only: true,
        ..brown(vec![EnsembleKind::Nonprimitive, EnsembleKind::Primitive])
    };
    let report = runner::run(&cfg, pool).map_err(err)?;
    let delta = series_fit(&report, "primitive")?;
    let gaps = runner::primitive_gaps(&report.results);
    let gap_fit = fit_decay(&gaps).map_err(err)?;
    let shrinking = gaps.len() == 3 && gaps[2].1 < gaps[0].1 && gap_fit.delta_hat > 0.0;
    let shown: Vec<String> = gaps.iter().map(|g| format!("{:.1e}", g.1)).collect();
    Ok((
        delta >= 0.15 && shrinking,
        format!(
            "delta2 {delta:.3} over q={:?}; |prim-nonprim| {} (exponent {:.2})",
            cfg.q_grid,
            shown.join(", "),
            gap_fit.delta_hat
        ),
    ))
}

fn twisted_uniformity(pool: &Pool) -> Outcome {
    let cfg = ExperimentConfig { n_grid: vec![1_000, 10_000, 100_000], ..brown(vec![EnsembleKind::Twisted]) };
    let report = runner::run(&cfg, pool).map_err(err)?;
    let delta = series_fit(&report, "twisted_max")?;
    let fit = report.fits.iter().find(|s| s.series == "twisted_max").and_then(|s| s.fit.clone()).ok_or("no fit")?;
    let shown: Vec<String> = fit.points.iter().map(|p| format!("{:.2e}", p.1)).collect();
    Ok((delta >= 0.1, format!("max_c |twisted| {} at N=1e3,1e4,1e5; exponent {delta:.3}", shown.join(", "))))
}

fn negative_control(pool: &Pool) -> Outcome {
    let base = |preset| ExperimentConfig {
        n_grid: vec![100_000],
        ensembles: vec![EnsembleKind::Nonprimitive],
        ..ExperimentConfig::preset(preset)
    };
    let (control, good) = (base(Preset::NegativeControl), base(Preset::Brown));
    if !control.test_function().map_err(err)?.affine_sensitive() {
        return Err("test function is not affine sensitive".into());
    }
    let bad = runner::run(&control, pool).map_err(err)?.results[0].abs_err;
    let ok = runner::run(&good, pool).map_err(err)?.results[0].abs_err;
    Ok((bad >= 10.0 * ok, format!("zero section {bad:.2e} vs parabolic {ok:.2e} at N=1e5 (ratio {:.0})", bad / ok)))
}

fn ramanujan_expansion(pool: &Pool) -> Outcome {
    let psi = WeightFunction::trig(0.25, vec![(0, 1.0, 0.0), (1, 0.4, -0.3), (3, 0.2, 0.1), (7, -0.05, 0.15)])
        .map_err(err)?;
    let sec = HorocycleSection::parabolic();
    let (f, _) = svb()?;
    let one = TestFunction::Constant(1.0);
    let (mut worst_f, mut worst_one) = (0.0f64, 0.0f64);
    for q in 1..=50u64 {
        let direct = primitive_average(&sec, &f, &psi, q, pool).map_err(err)?.value;
        let expanded = primitive_via_ramanujan(&sec, &f, &psi, q, pool).map_err(err)?;
        worst_f = worst_f.max((direct - expanded).abs());
        let direct = primitive_average(&sec, &one, &psi, q, pool).map_err(err)?.value;
        let spectral = trig_primitive_spectral(&psi, q).map_err(err)?;
        worst_one = worst_one.max((direct - spectral).abs());
    }
    Ok((
        worst_f <= 1e-8 && worst_one <= 1e-8,
        format!("residue expansion {worst_f:.1e} (shortest-vector bump), spectral form {worst_one:.1e} (f=1), q<=50"),
    ))
}
