use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cvgate(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvgate"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(dir: &Path, scenario: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{scenario}.json"))).unwrap()).unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn every_scenario_succeeds_at_defaults() {
    let dir = TempDir::new().unwrap();
    for s in ["cluster-verify", "figure2", "figure4", "figure5", "figure6", "figure8", "table1"] {
        let o = cvgate(&[s, "-q"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{s}: {}", String::from_utf8_lossy(&o.stderr));
        let j = json(dir.path(), s);
        assert_eq!(j["schema_version"], 1);
        assert_eq!(j["all_pass"], true);
        assert!(dir.path().join(format!("{s}.csv")).exists());
    }
    let o = cvgate(&["mc-validate", "--shots", "5000"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(files_in(dir.path()).len(), 16);
}

#[test]
fn cluster_verify_reports_decomposition_and_nullifiers() {
    let dir = TempDir::new().unwrap();
    cvgate(&["cluster-verify"], dir.path());
    let j = json(dir.path(), "cluster-verify");
    assert!(j["summary"]["decomposition_max_error"].as_f64().unwrap() < 1e-9);
    let db = j["summary"]["nullifier_db"].as_array().unwrap();
    assert_eq!(db.len(), 6);
    for v in db {
        assert!((v.as_f64().unwrap() + 4.0).abs() < 0.01);
    }
}

#[test]
fn figure2_columns() {
    let dir = TempDir::new().unwrap();
    cvgate(&["figure2"], dir.path());
    let csv = fs::read_to_string(dir.path().join("figure2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("nullifier_index,variance_db,snl_db"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn table1_has_ten_rows_and_row_j_gain() {
    let dir = TempDir::new().unwrap();
    let o = cvgate(&["table1", "--cluster-db", "-4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let j = json(dir.path(), "table1");
    let rows = j["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    let cols: Vec<&str> = j["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    for c in ["g", "e", "f_mu", "f_nu"] {
        assert!(cols.contains(&c));
    }
    let gi = cols.iter().position(|&c| c == "g").unwrap();
    assert_eq!(rows[9][0], "j");
    assert!((rows[9][gi].as_f64().unwrap() - 0.98).abs() < 0.005);
}

#[test]
fn figure4_lists_parse_into_six_curves() {
    let dir = TempDir::new().unwrap();
    let o = cvgate(
        &["figure4", "--beta", "vacuum,-4,-12", "--cluster", "-4,-6", "--sweep-step-db", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("figure4.csv")).unwrap();
    let mut curves: Vec<(String, String)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    curves.dedup();
    assert_eq!(curves.len(), 6);
    assert_eq!(csv.lines().count(), 1 + 6 * 13);
}

#[test]
fn fixed_seed_gives_identical_files() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let args = ["mc-validate", "--shots", "3000", "--seed", "7", "-q"];
    cvgate(&args, a.path());
    cvgate(&args, b.path());
    cvgate(&["mc-validate", "--shots", "3000", "--seed", "8", "-q"], c.path());
    for f in ["mc-validate.csv", "mc-validate.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, fs::read(b.path().join(f)).unwrap());
        assert_ne!(x, fs::read(c.path().join(f)).unwrap());
    }
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "cluster_db = -6.0\nefficiency = 0.95\n").unwrap();
    let out = dir.path().join("o");
    let o = cvgate(&["figure2", "--config", cfg.to_str().unwrap(), "--cluster-db", "-5"], &out);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&out, "figure2")["parameters"]["cluster_db"], -5.0);

    let o = cvgate(&["figure8", "--config", cfg.to_str().unwrap(), "--sweep-step-db", "3"], &out);
    assert_eq!(o.status.code(), Some(0));
    let j = json(&out, "figure8");
    assert_eq!(j["parameters"]["cluster_db"], -6.0);
    assert_eq!(j["parameters"]["efficiency"], 0.95);
}

#[test]
fn failed_check_exits_one() {
    let dir = TempDir::new().unwrap();
    let o = cvgate(&["table1", "--efficiency", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_eq!(json(dir.path(), "table1")["all_pass"], false);
}

#[test]
fn bad_config_exits_two_without_files() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    let out = dir.path().join("o");
    for text in ["no_such_field = 1\n", "cluster_db = \"loud\"\n", "cluster_db = 3.0\n", "beta = \"thermal\"\n", "shots = 0\n"] {
        fs::write(&cfg, text).unwrap();
        let o = cvgate(&["figure5", "--config", cfg.to_str().unwrap()], &out);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
        assert!(files_in(&out).is_empty(), "{text}");
    }
    let o = cvgate(&["figure5", "--config", dir.path().join("missing.toml").to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(cvgate(&["figure7"], dir.path()).status.code(), Some(2));
    assert_eq!(cvgate(&["figure5", "--beta", "-4,-6"], dir.path()).status.code(), Some(2));
    assert_eq!(cvgate(&["figure5", "--ancilla", "thermal"], dir.path()).status.code(), Some(2));
    assert_eq!(cvgate(&["table1", "--shots", "many"], dir.path()).status.code(), Some(2));
    assert!(files_in(dir.path()).is_empty());
}

#[test]
fn unwritable_output_leaves_nothing_behind() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = cvgate(&["figure2"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(files_in(dir.path()), vec!["file".to_string()]);
}

#[test]
fn example_config_matches_defaults() {
    let dir = TempDir::new().unwrap();
    let example = concat!(env!("CARGO_MANIFEST_DIR"), "/../../config.example.toml");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    cvgate(&["table1", "--config", example], &a);
    cvgate(&["table1"], &b);
    assert_eq!(fs::read(a.join("table1.json")).unwrap(), fs::read(b.join("table1.json")).unwrap());
}
