use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hypou(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypou")).args(args).env_remove("HYPOU_SEED").output().expect("spawn hypou")
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn check_reports_kolmogorov_structure() {
    let out = hypou(&["check", "--config", &cfg("kolmogorov.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["hypoelliptic"], true);
    assert_eq!(v["k"], 1);
}

#[test]
fn check_degenerate_is_a_verdict_unless_permissive() {
    let out = hypou(&["check", "--config", &cfg("degenerate.json")]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["hypoelliptic"], false);
    let out = hypou(&["check", "--permissive", "--config", &cfg("degenerate.json")]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn solve_refuses_degenerate_system() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(configs().join("solve.json")).unwrap()).unwrap();
    c["system"]["A"] = serde_json::json!([[0, 0], [0, 0]]);
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, c.to_string()).unwrap();
    let out = hypou(&["solve", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string() && err["message"].is_string());
}

#[test]
fn malformed_and_unknown_keys_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = tmp.path().join("broken.json");
    std::fs::write(&broken, "{\"N\": 2,\n \"d0\": }").unwrap();
    let out = hypou(&["check", "--config", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("line 2"));

    let extra = tmp.path().join("extra.json");
    std::fs::write(&extra, r#"{"N": 2, "d0": 1, "A": [[0,0],[1,0]], "B0": [[1]], "nu": 1, "colour": 3}"#).unwrap();
    assert_eq!(hypou(&["check", "--config", extra.to_str().unwrap()]).status.code(), Some(2));

    let missing = tmp.path().join("nope.json");
    assert_eq!(hypou(&["check", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(hypou(&["solve"]).status.code(), Some(2));
}

#[test]
fn manifest_reproduces_solve_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = hypou(&["solve", "--config", &cfg("solve.json"), "--out", a.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = a.path().join("manifest.json");
    let out = hypou(&["solve", "--config", m.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["field.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_perturbation_matches_solve() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(hypou(&["solve", "--config", &cfg("solve.json"), "--out", a.path().to_str().unwrap()]).status.code(), Some(0));
    let out = hypou(&["perturb", "--mode", "direct", "--config", &cfg("perturb-zero.json"), "--out", b.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(a.path().join("field.csv")).unwrap(), std::fs::read(b.path().join("field.csv")).unwrap());
}

#[test]
fn seed_precedence_flag_env_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hypou"));
        cmd.env_remove("HYPOU_SEED");
        if let Some(e) = env {
            cmd.env("HYPOU_SEED", e);
        }
        cmd.args(["poisson-demo", "--out", dir]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        let out = cmd.output().unwrap();
        (out.status.code(), manifest(tmp.path())["seed"].as_u64())
    };
    assert_eq!(run(None, None), (Some(0), Some(0)));
    assert_eq!(run(Some("11"), None), (Some(0), Some(11)));
    assert_eq!(run(Some("11"), Some("5")), (Some(0), Some(5)));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hypou"));
    let out = cmd.env("HYPOU_SEED", "eleven").args(["poisson-demo", "--out", dir]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_is_independent_of_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = cfg("verify-small.json");
    let o1 = hypou(&["verify", "--config", &c, "--workers", "1", "--out", a.path().to_str().unwrap()]);
    let o2 = hypou(&["verify", "--config", &c, "--workers", "2", "--out", b.path().to_str().unwrap()]);
    assert_eq!(o1.status.code(), Some(0), "{}", String::from_utf8_lossy(&o1.stderr));
    assert_eq!(o2.status.code(), Some(0));
    for f in ["report.json", "ratios.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert!(a.path().join("timings.json").exists());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passes"], true);
    assert_eq!(report["stability"]["pairs"].as_array().unwrap().len(), 3);
}

#[test]
fn norms_command_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(configs().join("solve.json")).unwrap()).unwrap();
    c["norms"] = serde_json::json!([{"kind": "lp", "p": 2}, {"kind": "d2x", "p": 2}, {"kind": "sobolev", "p": 2}, {"kind": "holder", "gamma": 0.5}]);
    let path = tmp.path().join("norms.json.in");
    std::fs::write(&path, c.to_string()).unwrap();
    let out = hypou(&["norms", "--config", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("norms.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 4);
}

#[test]
fn help_lists_global_flags_and_commands() {
    let out = hypou(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for w in ["--workers", "--seed", "--out", "check", "solve", "perturb", "norms", "verify", "poisson-demo"] {
        assert!(text.contains(w), "{w} missing from --help");
    }
}
