use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_viscoctl"))
}

fn small_config(dir: &Path, horizon: f64, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        format!(
            "horizon = {horizon}\ngrid_h = 2e-3\nmodes = 8\ntruncation = 4\n{extra}\n[domain]\ngeometry = {{ kind = \"interval\", length = {PI} }}\ngamma = [\"right\"]\n[kernel]\nfamily = \"exponential_sum\"\ncoefficients = [1.0]\nrates = [1.0]\n"
        ),
    )
    .unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn written(out: &Output) -> Vec<PathBuf> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(PathBuf::from)
        .collect()
}

#[test]
fn spectrum_artifacts_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2.5 * PI, "");
    let out = run(&["spectrum"], &cfg, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let files = written(&out);
    assert_eq!(files.len(), 2);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
    assert_eq!(json["kind"], "spectrum");
    let hash = json["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let name = files[0].file_name().unwrap().to_string_lossy().to_string();
    assert_eq!(name, format!("spectrum-{}.csv", &hash[..12]));
    let csv = std::fs::read_to_string(&files[0]).unwrap();
    assert!(csv.lines().next().unwrap().contains(hash));
}

#[test]
fn unknown_keys_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2.5 * PI, "mystery = 3");
    let out = run(&["spectrum"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));
}

#[test]
fn missing_config_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gram"], &dir.path().join("absent.toml"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args(["report", "/nonexistent/x.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn short_horizon_is_not_controllable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 0.5 * PI, "");
    let out = run(&["synthesize"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lower frame bound"));
}

#[test]
fn stored_control_verifies_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2.5 * PI, "k_sim = 8");
    let out = run(&["synthesize"], &cfg, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let control = written(&out)
        .into_iter()
        .find(|p| p.to_string_lossy().ends_with("-control.csv"))
        .unwrap();

    let cfg = small_config(
        dir.path(),
        2.5 * PI,
        &format!("k_sim = 8\ncontrol = {:?}", control.to_string_lossy()),
    );
    let verify = bin()
        .args(["verify", "--workers", "1", "--config"])
        .arg(&cfg)
        .env("VISCOCTL_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(
        verify.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&verify.stderr)
    );
    let verdict = written(&verify)
        .into_iter()
        .find(|p| p.to_string_lossy().ends_with("-verdict.json"))
        .unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&verdict).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["target_error"].as_f64().unwrap() <= 1e-3);

    let report = bin().arg("report").arg(&verdict).output().unwrap();
    assert_eq!(report.status.code(), Some(0));
    let md = String::from_utf8_lossy(&report.stdout);
    assert!(md.contains("(verdict)") && md.contains("| passed | true |"));
}

#[test]
fn gram_writes_closeness_for_the_viscoelastic_family() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2.5 * PI, "");
    let out = run(&["gram"], &cfg, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let files = written(&out);
    assert!(files
        .iter()
        .any(|p| p.to_string_lossy().ends_with("-closeness.csv")));
    let json = files
        .iter()
        .find(|p| p.extension().is_some_and(|e| e == "json"))
        .unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["kind"], "gram");
    assert!(v["m_N"].as_f64().unwrap() > 0.0);
    assert_eq!(v["levels"].as_array().unwrap().len(), 8);
}

#[test]
fn grid_flag_changes_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2.5 * PI, "");
    let a = written(&run(&["spectrum"], &cfg, dir.path()));
    let b = written(
        &bin()
            .args(["spectrum", "--grid-h", "1e-3", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap(),
    );
    assert_ne!(a[0], b[0]);
}
