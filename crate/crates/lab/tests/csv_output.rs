use horocycle::config::{EnsembleKind, ExperimentConfig, Preset};
use horocycle::pool::Pool;
use horocycle::runner::{self, csv_string};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        ensembles: vec![EnsembleKind::Nonprimitive, EnsembleKind::Primitive, EnsembleKind::Twisted],
        n_grid: vec![200, 2_000],
        q_grid: vec![211, 1_680, 2_003],
        twist_count: 4,
        ..ExperimentConfig::preset(Preset::Brown)
    }
}

#[test]
fn header_is_stable() {
    let text = csv_string(&[], 0).unwrap();
    assert_eq!(text, "param,ensemble,estimate_re,estimate_im,haar_ref,haar_stderr,abs_err,terms,runtime_ms,seed\n");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let cfg = small();
    let a = csv_string(&runner::run(&cfg, &Pool::new(1)).unwrap().results, cfg.seed).unwrap();
    let b = csv_string(&runner::run(&cfg, &Pool::new(1)).unwrap().results, cfg.seed).unwrap();
    let c = csv_string(&runner::run(&cfg, &Pool::new(3)).unwrap().results, cfg.seed).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.lines().count(), 1 + 2 + 3 + 2 * 4);
}

#[test]
fn monte_carlo_reference_is_worker_independent() {
    let cfg = ExperimentConfig {
        haar_method: horocycle::config::HaarMethod::MonteCarlo,
        haar_samples: 50_000,
        ensembles: vec![EnsembleKind::Nonprimitive],
        ..small()
    };
    let a = runner::run(&cfg, &Pool::new(1)).unwrap();
    let b = runner::run(&cfg, &Pool::new(4)).unwrap();
    assert_eq!(a.results, b.results);
    assert!(a.haar.stderr > 0.0);
    // quadrature agrees with sampling
    let exact = cfg.test_function().unwrap().exact_mean().unwrap();
    assert!((a.haar.mean - exact).abs() < 4.0 * a.haar.stderr);
}

#[test]
fn constant_function_gives_the_weight_integral() {
    let cfg = ExperimentConfig {
        f: "constant:1".into(),
        n_grid: vec![2_000],
        ensembles: vec![EnsembleKind::Nonprimitive],
        ..small()
    };
    let r = runner::run(&cfg, &Pool::new(1)).unwrap();
    let psi = cfg.weight().unwrap().integral();
    assert!((r.results[0].estimate.re - psi).abs() <= 3.0 / 2_000.0);
    assert_eq!(r.results[0].estimate.im, 0.0);
}

#[test]
fn rows_are_self_consistent() {
    let cfg = small();
    let r = runner::run(&cfg, &Pool::new(1)).unwrap();
    for row in &r.results {
        let recomputed = (row.estimate - row.haar_ref * row.psi_integral).norm();
        assert_eq!(recomputed, row.abs_err);
        assert_eq!(row.runtime_ms, 0.0);
    }
    let series: Vec<&str> = r.fits.iter().map(|f| f.series.as_str()).collect();
    assert!(series.contains(&"nonprimitive") && series.contains(&"twisted_max"));
}

#[test]
fn outputs_land_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { ensembles: vec![EnsembleKind::Nonprimitive], ..small() };
    let report = runner::run(&cfg, &Pool::new(1)).unwrap();
    runner::write_outputs(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv, csv_string(&report.results, cfg.seed).unwrap());
    let json: runner::RunReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json.results, report.results);
    assert_eq!(json.config, cfg);

    let blocked = dir.path().join("results.csv").join("nested");
    let e = runner::write_outputs(&report, &blocked).unwrap_err();
    assert_eq!(e.exit_code(), 1);
}

#[test]
fn continuous_rows_use_unit_weight() {
    let cfg = ExperimentConfig {
        ensembles: vec![EnsembleKind::Continuous],
        n_grid: vec![200, 2_000],
        ..ExperimentConfig::preset(Preset::Strom)
    };
    let r = runner::run(&cfg, &Pool::new(1)).unwrap();
    assert_eq!(r.results.len(), 2);
    for row in &r.results {
        assert_eq!(row.psi_integral, 1.0);
        assert!(row.abs_err < 0.05);
    }
    assert!(r.section.diophantine.is_some());
}
