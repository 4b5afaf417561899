use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smp")).args(args).env_remove("SMP_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/atom2d.json")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn square(extra: &str) -> String {
    format!(
        r#"{{
  "version": 1,
  "domain": {{"shape": "rectangle", "x": [0, 1], "y": [0, 1]}},
  "h": 0.03125,
  "coefficient": {{"preset": "identity"}},
  "delta": {{"delta": 1.0}},
  "n_list": [1, 2, 4, 8, 16]{extra}
}}"#
    )
}

#[test]
fn sample_config_solves_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = sample();
    let o = smp(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("runs/h-0/report.json")).unwrap()).unwrap();
    assert!(report["weak_residual"].as_f64().unwrap() <= 1e-6);
    assert!(out.join("runs/h-0/u_n16.bin").exists());
    assert!(out.join("runs/h-0/norms.csv").exists());

    let o = smp(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(out.join("conformance.csv")).unwrap();
    assert!(csv.starts_with("claim_id,paper_ref,n_or_h,statistic,value,threshold,pass"));
    assert_eq!(csv.matches("claim_id").count(), 1);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn malformed_json_exits_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &square("").replace("\"h\": 0.03125,", "\"h\": 0.03125,,"));
    let o = smp(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));

    let cfg = write_config(dir.path(), &square(r#", "mystery": 1"#));
    let o = smp(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mystery"));
}

#[test]
fn zero_data_gives_zero_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &square(""));
    let out = dir.path().join("out");
    let o = smp(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = fs::read(out.join("runs/h-0/u_n16.bin")).unwrap();
    assert!(!bytes.is_empty() && bytes.iter().all(|&b| b == 0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flag: nu is zero"));

    let o = smp(&["--strict", "solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn artifacts_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &square(r#", "nu": {"density": "1 + x*y"}, "mu": {"density": 2}"#));
    let run = |name: &str| {
        let out = dir.path().join(name);
        assert_eq!(code(&smp(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["manifest.json", "runs/h-0/report.json", "runs/h-0/u_n16.bin", "runs/h-0/barrier.bin", "runs/h-0/norms.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), &square(r#", "nu": {"density": 1}"#));
    let out = dir.path().join("none");
    let o = smp(&["verify", "--config", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(out.join("conformance.csv")).unwrap().lines().count(), 1);

    let claimed = dir.path().join("claimed.json");
    fs::write(&claimed, square(r#", "nu": {"density": 1}, "claims": [{"claim": "positivity"}]"#)).unwrap();
    let o = smp(&["verify", "--config", claimed.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);

    // Atom data does not lie in L^2, so claiming boundedness must fail.
    let negative = dir.path().join("negative.json");
    fs::write(
        &negative,
        square(r#", "nu": {"density": 1}, "mu": {"atoms": [{"x": [0.5, 0.5], "mass": 1}]}, "mollifier": {"scale": 0.5}, "claims": [{"claim": "regularity", "r": 2, "m": 2}]"#),
    )
    .unwrap();
    let o = smp(&["verify", "--solve", "--config", negative.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL regularity#0"));
}

#[test]
fn non_convergence_exits_two_with_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &square(r#", "nu": {"density": 1}, "fixed_point": {"max_iterations": 1}"#));
    let out = dir.path().join("out");
    let o = smp(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("runs/h-0/report.json")).unwrap()).unwrap();
    assert_eq!(report["complete"], false);
    assert!(report["failure"]["message"].as_str().is_some());
}

#[test]
fn sweep_writes_refinement_table() {
    let dir = tempfile::tempdir().unwrap();
    let body = square(r#", "nu": {"density": 1}"#).replace("\"h\": 0.03125", "\"h_list\": [0.0625, 0.03125]").replace("[1, 2, 4, 8, 16]", "[1, 2, 4]");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = smp(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("refinement.csv")).unwrap();
    assert!(table.starts_with("h,n,linf,l1,grad_l2,linf_change"));
    assert_eq!(table.lines().count(), 7);
    assert!(out.join("runs/h-1/u_n4.bin").exists());
}

#[test]
fn exponents_table() {
    let o = smp(&["exponents", "--dim", "2", "--delta", "1", "--r", "2", "--m", "2"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("T4.i: L^inf"), "{text}");
    let o = smp(&["exponents", "--dim", "3", "--delta", "0.5", "--r", "1", "--m", "1"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("no prediction"));
}

#[test]
fn thread_count_from_environment() {
    let run = |t: &str| {
        Command::new(env!("CARGO_BIN_EXE_smp"))
            .args(["exponents", "--dim", "2", "--delta", "1", "--r", "2", "--m", "2"])
            .env("SMP_THREADS", t)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1")), 0);
    assert_eq!(code(&run("0")), 1);
}
