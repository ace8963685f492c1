use horocycle::config::{EnsembleKind, ExperimentConfig, HaarMethod, Preset};
use proptest::prelude::*;

#[test]
fn presets_round_trip() {
    for p in Preset::ALL {
        let c = ExperimentConfig::preset(p);
        let text = c.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c, "{text}");
    }
}

#[test]
fn comments_and_partial_files() {
    let text = "# negative control at a single N\npreset = \"negative_control\" # zero section\nn_grid = [5000]\n";
    let c = ExperimentConfig::from_toml_str(text).unwrap();
    assert_eq!(c.section, "zero");
    assert_eq!(c.n_grid, vec![5000]);
    assert_eq!(c.q_grid, vec![2520, 5003]);
}

fn grid() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::btree_set(1u64..1_000_000, 1..6).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_configs_round_trip(
        n_grid in grid(),
        q_grid in grid(),
        seed in 0..=i64::MAX as u64,
        workers in 1usize..64,
        twist_count in 1u32..100,
        tol in 1e-12..1e-3f64,
        timing in any::<bool>(),
        mc in any::<bool>(),
        sec in 0usize..4,
    ) {
        let section = ["zero", "parabolic", "constant:sqrt2,sqrt3", "constant:1/2,-3/7"][sec];
        let c = ExperimentConfig {
            section: section.into(),
            n_grid,
            q_grid,
            seed,
            workers,
            twist_count,
            continuous_tol: tol,
            timing,
            haar_method: if mc { HaarMethod::MonteCarlo } else { HaarMethod::Auto },
            ensembles: vec![EnsembleKind::Twisted, EnsembleKind::Primitive],
            ..ExperimentConfig::preset(Preset::Custom)
        };
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn oversized_seed_is_a_config_error() {
    let c = ExperimentConfig { seed: u64::MAX, ..ExperimentConfig::preset(Preset::Brown) };
    assert_eq!(c.validate().unwrap_err().exit_code(), 1);
}
