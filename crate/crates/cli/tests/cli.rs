use std::path::Path;
use std::process::{Command, Output};

const SMALL_CI: &str = r#"
scenario = "stability-ci"
seed = 7
n = [40]
time-steps = 6
reps = 40
delta = 0.0
k = [2]
networks = 2
contrast = "total-effect"

[population]
kind = "erdos-renyi"
reference-p = 0.1
reference-n = 40

[design]
kind = "bernoulli"
p = 0.5

[map]
kind = "self-and-fraction"

[dgp]
family = "stability-chain"
mean = 10.0
sd = 1.0
epsilon = 1.0
"#;

const ZERO_MIXED: &str = r#"
scenario = "household-mixed"
n = [16]
time-steps = 4
reps = 30
household-sizes = [4]
contrast = "household-extremes"

[population]
kind = "equal-households"
size = 4

[design]
kind = "bernoulli"
p = 0.5

[map]
kind = "stratified-carryover"

[dgp]
family = "constant"
value = 0.0
"#;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interference-lab")).args(args).output().expect("spawn")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ci.toml", SMALL_CI);
    let out_dir = dir.path().join("out");
    let out = lab(&["stability-ci", "--config", &cfg, "--seed", "11", "--threads", "1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("stability-ci.csv")).unwrap();
    assert!(csv.starts_with("scenario,n,T,reps,metric,value,se,seed,config_hash\n"));
    assert!(csv.contains("net=2/chebyshev_upper_coverage"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stability-ci_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["threads"], 1);
    assert_eq!(manifest["reps"], 40);
    let listed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listed.lines().count(), 2);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ci.toml", SMALL_CI);
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(threads);
        let out = lab(&["stability-ci", "--config", &cfg, "--threads", threads, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        csvs.push(std::fs::read(out_dir.join("stability-ci.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn quarter_scale_divides_reps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ci.toml", SMALL_CI);
    let out_dir = dir.path().join("out");
    let out = lab(&["stability-ci", "--config", &cfg, "--scale", "quarter", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(out_dir.join("stability-ci.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(3) == Some("10")));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out_dir = out_dir.to_str().unwrap();
    let malformed = write(dir.path(), "bad.toml", "scenario = \"stability-ci\"\nn = [");
    let unknown = write(dir.path(), "unknown.toml", &format!("bogus = 1\n{SMALL_CI}"));
    let mismatch = write(dir.path(), "ci.toml", SMALL_CI);
    for args in [
        vec!["stability-ci", "--config", malformed.as_str(), "--out", out_dir],
        vec!["stability-ci", "--config", unknown.as_str(), "--out", out_dir],
        vec!["clt-tec", "--config", mismatch.as_str(), "--out", out_dir],
        vec!["stability-ci", "--config", mismatch.as_str(), "--threads", "0", "--out", out_dir],
        vec!["stability-ci", "--config", "/nonexistent/config.toml", "--out", out_dir],
        vec!["no-such-scenario"],
        vec![],
    ] {
        let out = lab(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(!Path::new(out_dir).exists());
}

#[test]
fn assumption_violation_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mixed.toml", ZERO_MIXED);
    let out = lab(&["household-mixed", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("zero variance"), "{err}");
}
