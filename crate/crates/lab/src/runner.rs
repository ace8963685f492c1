//! Executes a configuration over its parameter grid.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use horocycle_core::ensembles::{
    continuous_average, fit_above_floor, fit_decay, nonprimitive_average, primitive_average, twisted_averages,
    DecayFit, Ensemble, EnsembleResult,
};
use horocycle_core::modular::haar_integral;
use horocycle_core::numtheory::is_prime;
use horocycle_core::sections::{window_constants, DiophantineMeta, Tristate};
use horocycle_core::{Complex64, TestFunction};
use serde::{Deserialize, Serialize};

use crate::config::{EnsembleKind, ExperimentConfig, HaarMethod};
use crate::error::LabError;
use crate::pool::Pool;
use crate::verify::{self, Check};

pub const CSV_HEADER: [&str; 10] = [
    "param",
    "ensemble",
    "estimate_re",
    "estimate_im",
    "haar_ref",
    "haar_stderr",
    "abs_err",
    "terms",
    "runtime_ms",
    "seed",
];

/// Rows whose error is below this many noise floors are left out of fits.
pub const FLOOR_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarReference {
    pub f: String,
    pub seed: u64,
    /// `quadrature` or `monte_carlo`; never `auto`.
    pub method: HaarMethod,
    /// Monte Carlo sample count, 0 for quadrature.
    pub samples: u64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub rationally_linear: Tristate,
    pub period: Option<f64>,
    /// `sup|ξ₁| + Lip(Λ)` on the support of `ψ`.
    pub a_xi: f64,
    pub diophantine: Option<DiophantineMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit {
    pub series: String,
    pub fit: Option<DecayFit>,
    /// Why no fit was produced.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub section: SectionInfo,
    pub haar: HaarReference,
    pub results: Vec<EnsembleResult>,
    pub fits: Vec<SeriesFit>,
    pub verification: Vec<Check>,
    pub workers: usize,
    pub wall_clock_ms: f64,
}

type CacheKey = (String, u64, HaarMethod, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, HaarReference>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, HaarReference>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `∫f dν` for the configured method, memoized per process on
/// `(f, seed, method, samples)`.
pub fn haar_reference(cfg: &ExperimentConfig, f: &TestFunction, pool: &Pool) -> Result<HaarReference, LabError> {
    let key = (format!("{f:?}"), cfg.seed, cfg.haar_method, cfg.haar_samples);
    if let Some(r) = cache().lock().expect("cache lock").get(&key) {
        return Ok(r.clone());
    }
    let exact = match cfg.haar_method {
        HaarMethod::MonteCarlo => None,
        _ => f.exact_mean(),
    };
    let r = match exact {
        Some(mean) => HaarReference {
            f: cfg.f.clone(),
            seed: cfg.seed,
            method: HaarMethod::Quadrature,
            samples: 0,
            mean,
            stderr: 0.0,
        },
        None if cfg.haar_method == HaarMethod::Quadrature => {
            return Err(LabError::Numeric(format!("quadrature mean of `{}` failed", cfg.f)));
        }
        None => {
            let (mean, stderr) = haar_integral(f, cfg.haar_samples as usize, cfg.seed, pool);
            HaarReference {
                f: cfg.f.clone(),
                seed: cfg.seed,
                method: HaarMethod::MonteCarlo,
                samples: cfg.haar_samples,
                mean,
                stderr,
            }
        }
    };
    if !(r.mean.is_finite() && r.stderr.is_finite()) {
        return Err(LabError::Numeric("non-finite Haar reference".into()));
    }
    cache().lock().expect("cache lock").insert(key, r.clone());
    Ok(r)
}

fn finite(row: EnsembleResult) -> Result<EnsembleResult, LabError> {
    let e = row.estimate;
    if e.re.is_finite() && e.im.is_finite() && row.abs_err.is_finite() {
        Ok(row)
    } else {
        Err(LabError::Numeric(format!("non-finite estimate for {} at {}", row.ensemble, row.parameter)))
    }
}

/// Run every grid cell in order and fit the error decay of each series.
pub fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<RunReport, LabError> {
    cfg.validate()?;
    let start = Instant::now();
    let section = cfg.section()?;
    let f = cfg.test_function()?;
    let psi = cfg.weight()?;
    let (alpha, beta) = psi.support();
    let window = window_constants(&section, alpha, beta)?;
    let haar = haar_reference(cfg, &f, pool)?;
    let href = (haar.mean, haar.stderr);
    let psi_int = psi.integral();
    let stamp = |t: Instant| if cfg.timing { t.elapsed().as_secs_f64() * 1e3 } else { 0.0 };

    let mut results = Vec::new();
    for kind in &cfg.ensembles {
        match kind {
            EnsembleKind::Continuous => {
                for &n in &cfg.n_grid {
                    let t = Instant::now();
                    let nodes = (4 * n as usize).clamp(64, 1 << 20);
                    let avg = continuous_average(&section, &f, alpha, beta, 1.0 / n as f64, nodes, cfg.continuous_tol, pool)?;
                    let mut row =
                        EnsembleResult::new(n, Ensemble::Continuous, Complex64::new(avg.value, 0.0), href, 1.0, avg.terms);
                    row.runtime_ms = stamp(t);
                    results.push(finite(row)?);
                }
            }
            EnsembleKind::Nonprimitive => {
                for &n in &cfg.n_grid {
                    let t = Instant::now();
                    let avg = nonprimitive_average(&section, &f, &psi, n, pool)?;
                    let mut row =
                        EnsembleResult::new(n, Ensemble::Nonprimitive, Complex64::new(avg.value, 0.0), href, psi_int, avg.terms);
                    row.runtime_ms = stamp(t);
                    results.push(finite(row)?);
                }
            }
            EnsembleKind::Primitive => {
                for &q in &cfg.q_grid {
                    let t = Instant::now();
                    let avg = primitive_average(&section, &f, &psi, q, pool)?;
                    let mut row =
                        EnsembleResult::new(q, Ensemble::Primitive, Complex64::new(avg.value, 0.0), href, psi_int, avg.terms);
                    row.runtime_ms = stamp(t);
                    results.push(finite(row)?);
                }
            }
            EnsembleKind::Twisted => {
                for &n in &cfg.n_grid {
                    let t = Instant::now();
                    let cs = cfg.twists(n);
                    let avg = twisted_averages(&section, &f, &psi, n, &cs, haar.mean, pool)?;
                    let ms = stamp(t) / cs.len() as f64;
                    for (c, v) in cs.iter().zip(avg.value) {
                        // f − ∫f has mean zero, so the reference is 0
                        let mut row = EnsembleResult::new(n, Ensemble::Twisted(*c), v, (0.0, haar.stderr), psi_int, avg.terms);
                        row.runtime_ms = ms;
                        results.push(finite(row)?);
                    }
                }
            }
        }
    }

    let fits = fit_series(&results);
    let mut verification = Vec::new();
    for s in &cfg.verify {
        verification.extend(verify::run_suite(s.parse()?, pool));
    }
    Ok(RunReport {
        config: cfg.clone(),
        section: SectionInfo {
            name: section.name.clone(),
            rationally_linear: section.is_rationally_linear(),
            period: section.period,
            a_xi: window.a_xi,
            diophantine: section.diophantine,
        },
        haar,
        results,
        fits,
        verification,
        workers: pool.workers(),
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn named(series: &str, fit: horocycle_core::Result<DecayFit>) -> SeriesFit {
    match fit {
        Ok(fit) => SeriesFit { series: series.into(), fit: Some(fit), note: None },
        Err(e) => SeriesFit { series: series.into(), fit: None, note: Some(e.to_string()) },
    }
}

fn rows_of(results: &[EnsembleResult], pred: impl Fn(&EnsembleResult) -> bool) -> Vec<EnsembleResult> {
    results.iter().filter(|r| pred(r)).cloned().collect()
}

/// Power-law fits for each ensemble present, the primes and highly
/// composite subsets of the primitive grid, the largest twist per `N`,
/// and the gap between primitive and nonprimitive averages at matched
/// parameters.
pub fn fit_series(results: &[EnsembleResult]) -> Vec<SeriesFit> {
    let mut out = Vec::new();
    for (label, e) in [("continuous", Ensemble::Continuous), ("nonprimitive", Ensemble::Nonprimitive)] {
        let rows = rows_of(results, |r| r.ensemble == e);
        if !rows.is_empty() {
            out.push(named(label, fit_above_floor(&rows, FLOOR_FACTOR)));
        }
    }
    let prim = rows_of(results, |r| r.ensemble == Ensemble::Primitive);
    if !prim.is_empty() {
        out.push(named("primitive", fit_above_floor(&prim, FLOOR_FACTOR)));
        let primes = rows_of(&prim, |r| is_prime(r.parameter));
        if primes.len() != prim.len() {
            out.push(named("primitive_prime", fit_above_floor(&primes, FLOOR_FACTOR)));
            let composite = rows_of(&prim, |r| !is_prime(r.parameter));
            out.push(named("primitive_composite", fit_above_floor(&composite, FLOOR_FACTOR)));
        }
        let gaps = primitive_gaps(results);
        if !gaps.is_empty() {
            out.push(named("primitive_minus_nonprimitive", fit_decay(&gaps)));
        }
    }
    let mut twisted: Vec<(f64, f64)> = Vec::new();
    for r in results.iter().filter(|r| matches!(r.ensemble, Ensemble::Twisted(_))) {
        let n = r.parameter as f64;
        match twisted.last_mut() {
            Some(last) if last.0 == n => last.1 = last.1.max(r.abs_err),
            _ => twisted.push((n, r.abs_err)),
        }
    }
    if !twisted.is_empty() {
        out.push(named("twisted_max", fit_decay(&twisted)));
    }
    out
}

/// `(N, |primitive(q) − nonprimitive(N)|)` pairing each `N` with the
/// smallest prime `q ≥ N` on the grid, when that is below the next `N`.
pub fn primitive_gaps(results: &[EnsembleResult]) -> Vec<(f64, f64)> {
    let non = rows_of(results, |r| r.ensemble == Ensemble::Nonprimitive);
    let prim = rows_of(results, |r| r.ensemble == Ensemble::Primitive && is_prime(r.parameter));
    let mut out = Vec::new();
    for (i, r) in non.iter().enumerate() {
        let limit = non.get(i + 1).map_or(u64::MAX, |s| s.parameter);
        if let Some(p) = prim.iter().find(|p| p.parameter >= r.parameter && p.parameter < limit) {
            out.push((r.parameter as f64, (p.estimate - r.estimate).norm()));
        }
    }
    out
}

/// The CSV table as a string. Floats use the shortest representation
/// that round-trips, so equal results give equal bytes.
pub fn csv_string(rows: &[EnsembleResult], seed: u64) -> Result<String, LabError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| LabError::Output(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.parameter.to_string(),
            r.ensemble.to_string(),
            r.estimate.re.to_string(),
            r.estimate.im.to_string(),
            r.haar_ref.to_string(),
            r.haar_stderr.to_string(),
            r.abs_err.to_string(),
            r.terms.to_string(),
            r.runtime_ms.to_string(),
            seed.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Output(e.to_string()))
}

/// Write `results.csv` and `report.json` under `dir`.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<(), LabError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| LabError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv_path = dir.join("results.csv");
    std::fs::write(&csv_path, csv_string(&report.results, report.config.seed)?).map_err(io(&csv_path))?;
    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| LabError::Output(e.to_string()))?;
    std::fs::write(&json_path, json).map_err(io(&json_path))?;
    Ok(())
}
