use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
[geometry]
d = 1.0
profile = { kind = "bump", gamma_max = 0.99, s0 = 6.0 }

[field]
f = 2.9e-3
f_list = [2.9e-3, 2.4e-3, 2.0e-3, 1.7e-3]
eta_alpha0_fraction = 0.5

[grid]
l_minus = -60.0
l_plus = 30.0
n_s = 179
n_u = 4

[distortion]
alpha = 1.2
trust_fraction = 0.9

[solver]
k = 6
tol = 1e-9
seed = 11
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_waveguide")).args(args).current_dir(dir).output().unwrap()
}

fn setup(text: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, text).unwrap();
    (dir, cfg)
}

fn records(dir: &Path) -> Vec<Value> {
    let text = std::fs::read_to_string(dir.join("out/records.jsonl")).unwrap();
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn geometry_check_passes_and_fails_with_named_hypothesis() {
    let (dir, cfg) = setup(SMALL);
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(dir.path(), &["geometry-check", c])), 0);
    let o = run(dir.path(), &["geometry-check", c, "--override", "geometry.profile.gamma_max=1.05"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("h2"));
    let recs = records(dir.path());
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["outputs"]["all_pass"], true);
    assert_eq!(recs[1]["outputs"]["all_pass"], false);
    assert_ne!(recs[0]["config_hash"], recs[1]["config_hash"]);
}

#[test]
fn perpendicular_field_is_rejected() {
    let text = SMALL.replace("eta_alpha0_fraction = 0.5", "eta = 1.5707963267948966");
    let (dir, cfg) = setup(&text);
    let o = run(dir.path(), &["geometry-check", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no Stark resonance"));
}

#[test]
fn config_errors_exit_4() {
    let (dir, cfg) = setup(&SMALL.replace("n_u = 4", "n_u = 4\nn_w = 2"));
    let o = run(dir.path(), &["bound-states", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    let (dir, cfg) = setup(SMALL);
    assert_eq!(code(&run(dir.path(), &["bound-states", cfg.to_str().unwrap(), "--override", "grid.n_s"])), 4);
    assert_eq!(code(&run(dir.path(), &["bound-states", "missing.toml"])), 4);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 4);
}

#[test]
fn bound_states_record_and_straight_guide() {
    let (dir, cfg) = setup(SMALL);
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(dir.path(), &["bound-states", c])), 0);
    let o = run(dir.path(), &["bound-states", c, "--override", "geometry.profile.kind=straight"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let recs = records(dir.path());
    let bound = &recs[0]["outputs"];
    assert_eq!(bound["status"], "bound");
    assert!(bound["e0"].as_f64().unwrap() < std::f64::consts::PI.powi(2));
    assert!(bound["decay"]["a"].as_f64().unwrap() > 0.0);
    assert_eq!(recs[1]["outputs"]["status"], "no_bound_state");
    assert_eq!(recs[1]["outputs"]["eigenvalues"].as_array().unwrap().len(), 0);
}

#[test]
fn resonance_rerun_is_identical() {
    let (dir, cfg) = setup(SMALL);
    let c = cfg.to_str().unwrap();
    for _ in 0..2 {
        let o = run(dir.path(), &["resonance", c]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let recs = records(dir.path());
    assert_eq!(recs[0]["outputs"], recs[1]["outputs"]);
    assert_eq!(recs[0]["config_hash"], recs[1]["config_hash"]);
    let z = &recs[0]["outputs"]["Z"];
    assert!(z[1].as_f64().unwrap() < 0.0);
    assert_eq!(recs[0]["solver"]["seed"], 11);
}

#[test]
fn sweep_writes_one_record_per_field_a_fit_and_csv() {
    let (dir, cfg) = setup(SMALL);
    let o = run(dir.path(), &["sweep", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let recs = records(dir.path());
    assert_eq!(recs.len(), 5);
    let fs: Vec<f64> = recs[..4].iter().map(|r| r["outputs"]["estimate"]["F"].as_f64().unwrap()).collect();
    assert!(fs.windows(2).all(|w| w[0] < w[1]));
    let fit = &recs[4];
    assert_eq!(fit["subcommand"], "sweep-fit");
    for key in ["c1", "c2", "r_squared", "censored"] {
        assert!(fit["outputs"].get(key).is_some(), "{key}");
    }

    let hash = recs[0]["config_hash"].as_str().unwrap();
    let csv_path = dir.path().join(format!("out/sweep-{}.csv", &hash[..12]));
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["F", "Re Z", "Im Z", "beta_used", "plateau_score", "residual"]);
    let rows: Vec<Vec<f64>> =
        rdr.records().map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    for (row, rec) in rows.iter().zip(&recs) {
        let est = &rec["outputs"]["estimate"];
        assert_eq!(row[0].to_bits(), est["F"].as_f64().unwrap().to_bits());
        assert_eq!(row[1].to_bits(), est["Z"][0].as_f64().unwrap().to_bits());
        assert_eq!(row[2].to_bits(), est["Z"][1].as_f64().unwrap().to_bits());
        assert_eq!(row[5].to_bits(), est["residual"].as_f64().unwrap().to_bits());
    }
}

#[test]
fn validate_checks_are_selectable() {
    let text = SMALL.replace("f = 2.9e-3", "f = 2.0").replace("eta_alpha0_fraction = 0.5", "eta = 0.0")
        + "\n[validate]\ntilted_n_u = 199\nairy_left = -30.0\nweyl_n = [4]\n";
    let (dir, cfg) = setup(&text);
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(dir.path(), &["validate", c, "--tilted"])), 0);
    assert_eq!(code(&run(dir.path(), &["validate", c, "--airy"])), 0);
    let recs = records(dir.path());
    let a = recs[0]["outputs"].as_object().unwrap();
    assert!(a.contains_key("tilted") && !a.contains_key("airy") && !a.contains_key("weyl"));
    let b = recs[1]["outputs"].as_object().unwrap();
    assert!(b.contains_key("airy") && !b.contains_key("tilted"));
    assert!(b["airy"]["max_relative_deviation"].as_f64().unwrap() < 1e-2);
}
