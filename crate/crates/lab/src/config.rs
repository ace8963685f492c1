//! Experiment configuration, stored as a flat TOML file.
//!
//! A file may name a preset and override any subset of keys; loading
//! always yields the fully expanded configuration, which serializes back
//! to an equivalent file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use horocycle_core::ensembles::WeightFunction;
use horocycle_core::numtheory::{divisors, is_prime, next_prime};
use horocycle_core::{HorocycleSection, TestFunction};
use serde::{Deserialize, Serialize};

use crate::error::LabError;
use crate::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Constant section `(√2, √3)`.
    Strom,
    /// Parabolic section `(t/2, −t²/4)`.
    Brown,
    /// Zero section, which is rationally linear.
    NegativeControl,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Strom, Preset::Brown, Preset::NegativeControl, Preset::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Strom => "strom",
            Preset::Brown => "brown",
            Preset::NegativeControl => "negative_control",
            Preset::Custom => "custom",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Preset::Strom => "constant section (sqrt2, sqrt3); continuous and discrete ensembles",
            Preset::Brown => "parabolic section (t/2, -t^2/4); nonprimitive, primitive and twisted ensembles",
            Preset::NegativeControl => "zero section; the averages do not equidistribute",
            Preset::Custom => "brown defaults with every key left to the user",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Continuous,
    Nonprimitive,
    Primitive,
    Twisted,
}

/// How the Haar reference `∫f dν` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaarMethod {
    /// Quadrature when the test function has one, else Monte Carlo.
    Auto,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// `zero`, `parabolic` or `constant:a,b`.
    pub section: String,
    pub ensembles: Vec<EnsembleKind>,
    /// Expansion parameters `N` for the continuous, nonprimitive and
    /// twisted ensembles.
    pub n_grid: Vec<u64>,
    /// Denominators for the primitive ensemble. Empty means: primes near
    /// `n_grid`, plus the largest highly composite number below each `N`
    /// unless `q_primes_only`.
    pub q_grid: Vec<u64>,
    pub q_primes_only: bool,
    /// Number of twists `c`, spread evenly over `[0, N]`.
    pub twist_count: u32,
    /// Test function, e.g. `shortest_vector_bump:0.3,0.25`.
    pub f: String,
    /// Weight, e.g. `smooth_bump:0,2`.
    pub psi: String,
    /// Convergence tolerance of the continuous ensemble's quadrature.
    pub continuous_tol: f64,
    pub haar_method: HaarMethod,
    pub haar_samples: u64,
    /// At most `2^63 − 1`, the TOML integer range.
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    /// Record per-row runtimes. Off by default so that the CSV depends
    /// only on the configuration.
    pub timing: bool,
    /// Verification suites to run after the experiment.
    pub verify: Vec<String>,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let brown = ExperimentConfig {
            preset,
            section: "parabolic".into(),
            ensembles: vec![EnsembleKind::Nonprimitive, EnsembleKind::Primitive, EnsembleKind::Twisted],
            n_grid: vec![2_000, 20_000, 200_000],
            q_grid: Vec::new(),
            q_primes_only: false,
            twist_count: 32,
            f: "shortest_vector_bump:0.3,0.25".into(),
            psi: "smooth_bump:0,2".into(),
            continuous_tol: 1e-5,
            haar_method: HaarMethod::Auto,
            haar_samples: 1_000_000,
            seed: 1,
            workers: 1,
            out: PathBuf::from(format!("out/{}", preset.name())),
            timing: false,
            verify: Vec::new(),
        };
        let mut cfg = match preset {
            Preset::Brown | Preset::Custom => brown,
            Preset::Strom => ExperimentConfig {
                section: "constant:sqrt2,sqrt3".into(),
                ensembles: vec![EnsembleKind::Continuous, EnsembleKind::Nonprimitive, EnsembleKind::Primitive],
                ..brown
            },
            Preset::NegativeControl => ExperimentConfig {
                section: "zero".into(),
                ensembles: vec![EnsembleKind::Nonprimitive, EnsembleKind::Primitive],
                ..brown
            },
        };
        cfg.q_grid = default_q_grid(&cfg.n_grid, cfg.q_primes_only);
        cfg
    }

    /// Parse a config file body: start from the named preset (default
    /// `custom`), overlay the given keys, fill an empty `q_grid`, validate.
    pub fn from_toml_str(text: &str) -> Result<Self, LabError> {
        let table: toml::Table = text.parse().map_err(|e| LabError::Config(format!("{e}")))?;
        let preset = match table.get("preset") {
            None => Preset::Custom,
            Some(toml::Value::String(s)) => s.parse()?,
            Some(v) => return Err(LabError::Config(format!("preset must be a string, got {v}"))),
        };
        let mut merged = toml::Table::try_from(ExperimentConfig::preset(preset))
            .map_err(|e| LabError::Config(format!("{e}")))?;
        let explicit_q = table.contains_key("q_grid");
        for (k, v) in table {
            merged.insert(k, v);
        }
        let mut cfg: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| LabError::Config(format!("{e}")))?;
        if !explicit_q {
            cfg.q_grid = default_q_grid(&cfg.n_grid, cfg.q_primes_only);
        } else if cfg.q_primes_only {
            cfg.q_grid.retain(|&q| is_prime(q));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io { path: path.to_owned(), source: e })?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.ensembles.is_empty() {
            return bad("no ensembles selected".into());
        }
        check_grid("n_grid", &self.n_grid)?;
        if self.ensembles.contains(&EnsembleKind::Primitive) {
            check_grid("q_grid", &self.q_grid)?;
        }
        if self.twist_count == 0 && self.ensembles.contains(&EnsembleKind::Twisted) {
            return bad("twist_count must be positive".into());
        }
        if self.continuous_tol.is_nan() || self.continuous_tol <= 0.0 {
            return bad(format!("continuous_tol must be positive, got {}", self.continuous_tol));
        }
        if self.haar_samples < 2 {
            return bad("haar_samples must be at least 2".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must be below 2^63 to fit a TOML integer, got {}", self.seed));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.section()?;
        let f = self.test_function()?;
        self.weight()?;
        if self.haar_method == HaarMethod::Quadrature && f.exact_mean().is_none() {
            return bad(format!("no quadrature mean for `{}`", self.f));
        }
        for s in &self.verify {
            s.parse::<crate::verify::Suite>()?;
        }
        Ok(())
    }

    pub fn section(&self) -> Result<HorocycleSection, LabError> {
        self.section.parse().map_err(|e| LabError::Config(format!("section `{}`: {e}", self.section)))
    }

    pub fn test_function(&self) -> Result<TestFunction, LabError> {
        parse::parse_test_function(&self.f)
    }

    pub fn weight(&self) -> Result<WeightFunction, LabError> {
        parse::parse_weight(&self.psi)
    }

    /// `c_j = j·N/(count − 1)`, or `[0]` for a single twist.
    pub fn twists(&self, big_n: u64) -> Vec<f64> {
        let k = self.twist_count as u64;
        if k <= 1 {
            return vec![0.0];
        }
        (0..k).map(|j| (j * big_n) as f64 / (k - 1) as f64).collect()
    }
}

fn check_grid(name: &str, grid: &[u64]) -> Result<(), LabError> {
    if grid.is_empty() {
        return Err(LabError::Config(format!("{name} is empty")));
    }
    if grid[0] == 0 {
        return Err(LabError::Config(format!("{name} entries must be at least 1")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::Config(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// Primes at or after each `N`, merged with the largest highly composite
/// number not exceeding it.
pub fn default_q_grid(n_grid: &[u64], primes_only: bool) -> Vec<u64> {
    let mut q: Vec<u64> = n_grid.iter().map(|&n| next_prime(n)).collect();
    if !primes_only {
        q.extend(n_grid.iter().map(|&n| highly_composite_at_most(n)).filter(|&h| h > 1));
    }
    q.sort_unstable();
    q.dedup();
    q
}

/// Largest highly composite number `≤ n`: the smallest integer attaining
/// the maximal divisor count below `n`.
pub fn highly_composite_at_most(n: u64) -> u64 {
    const PRIMES: [u64; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];
    // exponents are nonincreasing along the primes
    fn search(n: u64, i: usize, cap: u32, value: u64, count: u64, best: &mut (u64, u64)) {
        if count > best.1 || (count == best.1 && value < best.0) {
            *best = (value, count);
        }
        if i == PRIMES.len() {
            return;
        }
        let mut v = value;
        for e in 1..=cap {
            match v.checked_mul(PRIMES[i]) {
                Some(w) if w <= n => v = w,
                _ => break,
            }
            search(n, i + 1, e, v, count * (e as u64 + 1), best);
        }
    }
    let mut best = (1, 1);
    search(n.max(1), 0, 64, 1, 1, &mut best);
    debug_assert_eq!(divisors(best.0).len() as u64, best.1);
    best.0
}
