use std::path::Path;
use std::process::Command;

fn horocycle(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_horocycle")).args(args).env_remove("HOROCYCLE_WORKERS").output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn lists_presets() {
    let out = horocycle(&["presets", "--list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for p in ["strom", "brown", "negative_control", "custom"] {
        assert!(text.contains(p));
    }
    let out = horocycle(&["presets", "--show", "brown"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("section = \"parabolic\""));
}

#[test]
fn run_writes_identical_csv_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "preset = \"brown\"\nn_grid = [300, 3000]\nq_grid = [307]\ntwist_count = 3\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = horocycle(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = horocycle(&["run", "--config", &cfg, "--out", b.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success());
    let ca = std::fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("results.csv")).unwrap());
    assert!(a.join("report.json").exists());

    let c = dir.path().join("c");
    let out = horocycle(&["run", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "99"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(c.join("results.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",99")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(horocycle(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(1));

    let cfg = write_config(dir.path(), "n_grid = [100, 50]\n");
    assert_eq!(horocycle(&["run", "--config", &cfg]).status.code(), Some(1));

    let out = dir.path().join("huge");
    let cfg = write_config(
        dir.path(),
        "f = \"constant:1e308\"\npsi = \"triangle:0,1000\"\nn_grid = [10]\nensembles = [\"nonprimitive\"]\n",
    );
    assert_eq!(horocycle(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(horocycle(&["verify", "--suite", "everything"]).status.code(), Some(1));
}

#[test]
fn group_suite_passes() {
    let out = horocycle(&["verify", "--suite", "group"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("[PASS]"));
}
