use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tripartite"))
}

fn run_config(dir: &Path, text: &str) -> Output {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, text).unwrap();
    bin()
        .args(["--quiet", "run"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

const BASE: &str = r#"
output_dir = "unused"
[model]
delta_a = 1.6
lambda = 0.15
omega_drive = 1.3
[truncation]
photons = 6
phonons = 6
"#;

#[test]
fn empty_config_exits_with_validation_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), "");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid configuration"), "{err}");
}

#[test]
fn scan_writes_levels_and_anticrossings_near_both_resonances() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{BASE}[[run]]\nname = \"scan\"\n[run.experiment]\nkind = \"scan\"\nomega = {{ start = 1.0, stop = 3.0, step = 0.02 }}\n"
    );
    let out = run_config(dir.path(), &text);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let levels = fs::read_to_string(dir.path().join("out/scan/levels.csv")).unwrap();
    assert!(levels.starts_with("omega,E1,"));
    assert_eq!(levels.lines().count(), 1 + 101);
    let ac: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/scan/anticrossings.json")).unwrap()).unwrap();
    let minima: Vec<f64> = ac.as_array().unwrap().iter().map(|e| e["omega_star"].as_f64().unwrap()).collect();
    assert!((minima[0] - 1.3).abs() < 0.05 && (minima[1] - 2.6).abs() < 0.05, "{minima:?}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["runs"][0]["experiment"]["n_levels"], 12);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["library_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn rates_table_has_analytic_and_numeric_columns() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}[[run]]\nname = \"r\"\n[run.experiment]\nkind = \"rates\"\nresonance = \"w11\"\nlambda = [0.02, 0.05]\n");
    let out = run_config(dir.path(), &text);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/r/rates.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let (ia, inum) = (
        header.iter().position(|h| h == "analytic").unwrap(),
        header.iter().position(|h| h == "numeric").unwrap(),
    );
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (a, n): (f64, f64) = (rec[ia].parse().unwrap(), rec[inum].parse().unwrap());
        assert!((n - a).abs() / a < 0.05, "{a} vs {n}");
    }
}

#[test]
fn undecayed_correlation_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
output_dir = "unused"
[model]
delta_a = 1.6
lambda = 0.15
omega_drive = 1.3
kappa_a = 0.25
kappa_b = 0.25
[truncation]
photons = 2
phonons = 2
[[run]]
name = "short"
[run.experiment]
kind = "spectrum"
omega = [1.0, 1.6]
tau_max = 1.0
"#;
    let out = run_config(dir.path(), text);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run 'short'") && err.contains("emission spectrum"), "{err}");
}

#[test]
fn trajectory_artifacts_are_byte_reproducible() {
    let text = r#"
output_dir = "unused"
[model]
delta_a = 1.6
lambda = 0.15
omega_drive = 1.3
kappa_a = 0.25
kappa_b = 0.25
gamma = 0.025
[truncation]
photons = 3
phonons = 3
[[run]]
name = "traj"
[run.experiment]
kind = "trajectories"
t_max = 200.0
n_traj = 6
seed = 5
record = 2
"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = run_config(d.path(), text);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let files = ["events.jsonl", "populations_0.csv", "populations_1.csv", "ensemble.csv", "summary.json"];
    for f in files {
        let x = fs::read(a.path().join("out/traj").join(f)).unwrap();
        let y = fs::read(b.path().join("out/traj").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let header = fs::read_to_string(a.path().join("out/traj/populations_0.csv")).unwrap();
    assert!(header.starts_with("t,\"P(0,0,+)\",\"P(1,1,-)\",\"P(2,2,-)\""), "{header}");
}

#[test]
fn validate_prints_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let text = format!("{BASE}[[run]]\nname = \"st\"\nmodel = {{ kappa_a = 0.25 }}\n[run.experiment]\nkind = \"steady\"\n");
    fs::write(&cfg, text).unwrap();
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["runs"][0]["model"]["kappa_a"], 0.25);
    assert_eq!(v["runs"][0]["experiment"]["populations"][1], "(1,1,-)");
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn unwritable_output_dir_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("{BASE}[[run]]\nname = \"r\"\n[run.experiment]\nkind = \"rates\"\nresonance = \"w11\"\nlambda = [0.05]\n")).unwrap();
    let out = bin().args(["-q", "run"]).arg(&cfg).arg("--out").arg(blocker.join("sub")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn presets_are_listed_and_shown() {
    let out = bin().args(["presets", "list"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig2a", "fig2d", "fig2e", "fig3ab", "fig3cd", "fig3ef", "fig4a", "fig4b"] {
        assert!(text.contains(name), "{name} missing");
        let shown = bin().args(["presets", "show", name]).output().unwrap();
        assert!(shown.status.success());
        assert!(String::from_utf8(shown.stdout).unwrap().contains("[[run]]"));
    }
    let missing = bin().args(["presets", "show", "fig9"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn fig2d_preset_runs_and_shows_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let shown = bin().args(["presets", "show", "fig2d"]).output().unwrap();
    let out = run_config(dir.path(), &String::from_utf8(shown.stdout).unwrap());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/rabi11/observables.csv")).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "P(1,1,-)").unwrap();
    let peak = rdr
        .records()
        .map(|r| r.unwrap()[col].parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(peak > 0.8, "{peak}");
}
