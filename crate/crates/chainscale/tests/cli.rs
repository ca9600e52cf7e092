use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chainscale::report::check_report_files;

const SMALL: &str = r#"
name = "small"
seed = 3
horizon_s = 200
strategy = "hybrid"

[topology]
datacenters = ["a", "b", "c"]
delays_ms = [[0, 10, 30], [10, 0, 25], [30, 25, 0]]
scscf_home = "a"
global_dc = "a"

[traffic]
[[traffic.generators]]
dc = "a"
change_interval_s = 50
ramp = [1, 4, 2]

[[traffic.generators]]
dc = "c"
change_interval_s = 50
rates = [2, 3]
"#;

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn config_in(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn chainscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainscale")).args(args).env_remove("CHAINSCALE_OUT").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_a_valid_report() {
    let dir = scratch("run");
    let cfg = config_in(&dir, SMALL);
    let out = dir.join("out");
    let o = chainscale(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (summary, lines) = check_report_files(&out).unwrap();
    assert_eq!(summary.scenario, "small");
    assert_eq!(summary.seed, 3);
    assert!(lines > summary.flows);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = scratch("seed");
    let cfg = config_in(&dir, SMALL);
    let read = |d: &Path| (std::fs::read(d.join("summary.json")).unwrap(), std::fs::read(d.join("records.jsonl")).unwrap());
    let mut outs = Vec::new();
    for tag in ["x", "y", "z"] {
        let out = dir.join(tag);
        let seed = if tag == "z" { "2" } else { "1" };
        assert!(chainscale(&["run", "--config", s(&cfg), "--seed", seed, "--out", s(&out)]).status.success());
        outs.push(read(&out));
    }
    assert_eq!(outs[0], outs[1]);
    assert_ne!(outs[0].1, outs[2].1);
}

#[test]
fn overrides_reach_the_report() {
    let dir = scratch("overrides");
    let cfg = config_in(&dir, SMALL);
    let out = dir.join("out");
    let o = chainscale(&[
        "run", "--config", s(&cfg), "--out", s(&out), "--strategy", "reactive", "--tagging", "off", "--set", "horizon_s=120",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (summary, _) = check_report_files(&out).unwrap();
    assert_eq!((summary.strategy.as_str(), summary.tagging, summary.horizon_s), ("reactive", false, 120));
}

#[test]
fn output_dir_from_environment() {
    let dir = scratch("env");
    let cfg = config_in(&dir, SMALL);
    let out = dir.join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_chainscale"))
        .args(["run", "--config", s(&cfg), "--set", "horizon_s=60"])
        .env("CHAINSCALE_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("summary.json").exists());
}

#[test]
fn missing_config_fails() {
    let o = chainscale(&["run", "--config", "/nonexistent/scenario.toml"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/scenario.toml"));
}

#[test]
fn validate_lists_every_problem() {
    let dir = scratch("validate");
    let good = config_in(&dir, SMALL);
    assert!(chainscale(&["validate", "--config", s(&good)]).status.success());
    let bad_text = SMALL
        .replace("[[0, 10, 30], [10, 0, 25], [30, 25, 0]]", "[[0, 10, 30], [10, 0, 25]]")
        .replace("global_dc = \"a\"", "global_dc = \"z\"\n\n[chain]\nstages = [\"firewall\", \"ids\", \"transcoder\", \"nat\"]");
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, bad_text).unwrap();
    let o = chainscale(&["validate", "--config", s(&bad)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["topology.delays_ms", "topology.global_dc", "chain.stages"] {
        assert!(err.contains(field), "{field} missing from:\n{err}");
    }
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = scratch("sweep");
    let cfg = config_in(&dir, SMALL);
    let out = dir.join("out");
    let o = chainscale(&[
        "sweep", "--config", s(&cfg), "--out", s(&out), "--axis", "traffic.generators.change_interval_s", "--values", "20..80:10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let values: Vec<&str> = rows.iter().map(|r| r["value"].as_str().unwrap()).collect();
    assert_eq!(values, ["20", "30", "40", "50", "60", "70", "80"]);
    assert_eq!(std::fs::read_to_string(out.join("sweep.txt")).unwrap().lines().count(), 8);
}

#[test]
fn sweep_rejects_empty_and_unknown_axes() {
    let dir = scratch("sweep-bad");
    let cfg = config_in(&dir, SMALL);
    let empty = chainscale(&["sweep", "--config", s(&cfg), "--axis", "scaling.tau", "--values", ""]);
    assert!(!empty.status.success());
    let unknown = chainscale(&["sweep", "--config", s(&cfg), "--axis", "scaling.nope", "--values", "1,2"]);
    assert!(!unknown.status.success());
}
