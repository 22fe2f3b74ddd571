use std::process::Command;

use cascade_bo::benchmarks::registry;
use cascade_bo::harness::read_trace;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cascade-bo"))
}

#[test]
fn lists_every_benchmark() {
    let out = bin().arg("list-benchmarks").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for spec in registry() {
        assert!(text.lines().any(|l| l.starts_with(&format!("{} ", spec.name))), "{}", spec.name);
    }
    assert!(text.contains("sphere-3-unscaled") && text.contains("analytic(0)"));
}

#[test]
fn run_writes_outputs_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "benchmark = \"sphere-3-unscaled\"\nmethod = \"ei\"\nseeds = [0, 1]\niterations = 9\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--method", "random", "--seed", "4", "--iters", "5", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_trace(std::fs::File::open(out_dir.join("trace.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r.seed == 4));
    assert!(!out_dir.join("ledger.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["method"], "random");
    assert!(String::from_utf8(out.stdout).unwrap().contains("seed 4: final simple regret"));
}

#[test]
fn bad_configs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "benchmark = \"sphere-3\"\nmethod = \"ei\"\nbudjet = 3\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budjet"));

    std::fs::write(&cfg, "benchmark = \"nope-3\"\nmethod = \"ei\"\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown benchmark"));
}
