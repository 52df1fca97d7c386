use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn svplab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svplab"))
        .current_dir(dir)
        .env_remove("SVPLAB_WORKERS")
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_HEATMAP: &str = "[heatmap]\ntrials = 4\nr_grid = [0.2, 0.4, 0.8]\nq_grid = [-0.4, 0.4, 0.8, 2.5]\n";

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = svplab(dir.path(), &["solve", "--config", "absent.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.toml"), "{}", stderr(&o));
}

#[test]
fn config_errors_point_at_the_field() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[model]\nn = 50\n\nbeat = 3.2\n");
    let o = svplab(dir.path(), &["solve", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("line 4") && msg.contains("beat"), "{msg}");

    write(dir.path(), "d.toml", "[model]\nbeta = 0.5\n");
    let o = svplab(dir.path(), &["solve", "--config", "d.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));

    let o = svplab(dir.path(), &["solve", "--workers", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = svplab(dir.path(), &["nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_writes_verdict_and_solutions() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[model]\nn = 100\nbeta = 3.2\nr = 0.4\nq = 0.8\n");
    let o = svplab(dir.path(), &["solve", "--config", "c.toml", "--out", "a", "--seed", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trial: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/trial.json")).unwrap()).unwrap();
    assert_eq!(trial["svp"], serde_json::Value::Bool(true));
    assert_eq!(trial["svm_certified"], serde_json::Value::Bool(true));
    assert!(trial["report"]["alpha_l"].as_f64().unwrap() > 0.0);

    let beta = fs::read_to_string(dir.path().join("a/beta.csv")).unwrap();
    let mut lines = beta.lines();
    assert_eq!(lines.next(), Some("index,x,y,beta_mni,beta_svm,sign_margin,loo_margin"));
    assert_eq!(lines.count(), 100);

    let o = svplab(dir.path(), &["solve", "--config", "c.toml", "--out", "b", "--seed", "11"]);
    assert!(o.status.success());
    assert_eq!(beta.as_bytes(), fs::read(dir.path().join("b/beta.csv")).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["config"]["model"]["q"], 0.8);
}

#[test]
fn solver_failure_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        "[model]\nn = 60\nq = -0.4\nsvm_tol = 1e-300\nsvm_max_iter = 1\n",
    );
    let o = svplab(dir.path(), &["solve", "--config", "c.toml", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let left: Vec<_> = fs::read_dir(dir.path().join("x"))
        .map(|d| d.collect())
        .unwrap_or_default();
    assert!(left.is_empty());
}

#[test]
fn unwritable_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "taken", "");
    let o = svplab(dir.path(), &["solve", "--out", "taken"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("taken"), "{}", stderr(&o));
}

#[test]
fn failed_trials_exit_3_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        "[model]\nn = 40\nq = -0.4\nsvm_tol = 1e-300\nsvm_max_iter = 1\n[diagnostics]\ntrials = 3\nabc = false\n",
    );
    let o = svplab(dir.path(), &["diagnostics", "--config", "c.toml", "--out", "d"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let failures = fs::read_to_string(dir.path().join("d/failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 4);
    assert!(failures.contains("did not converge"));
    assert!(dir.path().join("d/manifest.json").exists());
}

#[test]
fn figure1_has_1024_rows_per_panel() {
    let dir = tempfile::tempdir().unwrap();
    let o = svplab(dir.path(), &["figure1", "--out", "f"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("f/overlay.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["x", "eta_star", "eta_mni", "eta_svm", "panel"]
    );
    let mut per_panel = std::collections::BTreeMap::new();
    for rec in r.records() {
        *per_panel.entry(rec.unwrap()[4].to_string()).or_insert(0) += 1;
    }
    assert_eq!(per_panel.into_iter().collect::<Vec<_>>(), [("a".into(), 1024), ("b".into(), 1024), ("c".into(), 1024)]);
    let svg = fs::read_to_string(dir.path().join("f/figure1.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
}

#[test]
fn heatmap_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "h.toml", SMALL_HEATMAP);
    let o = svplab(dir.path(), &["heatmap", "--config", "h.toml", "--out", "h", "--workers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = fs::read_to_string(dir.path().join("h/heatmap.csv")).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/heatmap_small.csv");
    assert_eq!(got, fs::read_to_string(golden).unwrap());

    let row = got.lines().find(|l| l.starts_with("4.0000000000000002e-1,8.0000000000000004e-1,")).unwrap();
    assert!(row.ends_with(",true,valid"), "{row}");
    // q > beta - r
    let row = got.lines().find(|l| l.starts_with("8.0000000000000004e-1,2.5")).unwrap();
    assert_eq!(row, "8.0000000000000004e-1,2.5000000000000000e0,0,0,0,false,invalid");
}

#[test]
fn outputs_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "h.toml", SMALL_HEATMAP);
    for (out, workers) in [("w1", "1"), ("w3", "3")] {
        let o = svplab(dir.path(), &["heatmap", "--config", "h.toml", "--out", out, "--workers", workers]);
        assert!(o.status.success());
    }
    for name in ["heatmap.csv", "heatmap.svg", "heatmap.json"] {
        assert_eq!(
            fs::read(dir.path().join("w1").join(name)).unwrap(),
            fs::read(dir.path().join("w3").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "h.toml", SMALL_HEATMAP);
    let o = svplab(dir.path(), &["heatmap", "--config", "h.toml", "--out", "a", "--seed", "99"]);
    assert!(o.status.success());
    let o = svplab(dir.path(), &["heatmap", "--config", "a/manifest.json", "--out", "b"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("a/heatmap.csv")).unwrap(),
        fs::read(dir.path().join("b/heatmap.csv")).unwrap()
    );
}

#[test]
fn format_selects_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "h.toml", SMALL_HEATMAP);
    let o = svplab(dir.path(), &["heatmap", "--config", "h.toml", "--out", "j", "--format", "json"]);
    assert!(o.status.success());
    let mut names: Vec<String> = fs::read_dir(dir.path().join("j"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["heatmap.json", "manifest.json"]);
    let o = svplab(dir.path(), &["solve", "--format", "svg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "h.toml", SMALL_HEATMAP);
    let o = Command::new(env!("CARGO_BIN_EXE_svplab"))
        .current_dir(dir.path())
        .env("SVPLAB_WORKERS", "2")
        .args(["heatmap", "--config", "h.toml", "--out", "e"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("e/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["workers"], 2);
}

#[test]
fn sampled_family_rejects_risk() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[model]\nfamily = \"gaussian\"\nbeta = 2.2\n");
    let o = svplab(dir.path(), &["risk", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
}
