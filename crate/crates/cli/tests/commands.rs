use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prlandscape")).args(args).env_remove("PRLANDSCAPE_JOBS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn out(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_passes_in_the_well_sampled_regime() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--n", "8", "--m", "2000", "--n-dirs", "60", "--n-pts", "20", "--seed", "3", "--out-dir", out(d.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(d.path().join("landscape.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lemma_id,n,m,seed,worst_statistic,pass");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.ends_with(",1")));

    let report = json(&d.path().join("report.json"));
    assert_eq!(report["schema"], 1);
    assert_eq!(report["verdicts"].as_array().unwrap().len(), 4);

    let manifest = json(&d.path().join("manifest.json"));
    for key in ["command", "config_hash", "base_seed", "tool_version", "started", "finished", "output_paths"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(manifest["command"], "verify");
    assert_eq!(manifest["base_seed"], 3);
}

#[test]
fn verify_below_n_measurements_fails_verdicts() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--n", "16", "--m", "8", "--n-dirs", "20", "--n-pts", "5", "--out-dir", out(d.path())]);
    assert_eq!(code(&o), 2);
    let csv = std::fs::read_to_string(d.path().join("landscape.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("origin_max,") && l.ends_with(",0")));
}

#[test]
fn usage_and_config_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["verify", "--m", "8"])), 1);
    assert_eq!(code(&run(&["verify", "--n", "8", "--m", "80", "--eps0", "0.5", "--out-dir", out(d.path())])), 1);
    assert_eq!(code(&run(&["verify", "--n", "8", "--m", "80", "--m-mult", "3"])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["moments", "--n", "4", "--m", "40", "--check", "bogus", "--out-dir", out(d.path())])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unwritable_out_dir_exits_one() {
    let d = tempfile::tempdir().unwrap();
    let blocker = d.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let target = blocker.join("sub");
    let o = run(&["verify", "--n", "4", "--m", "40", "--n-dirs", "5", "--n-pts", "5", "--out-dir", out(&target)]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
}

#[test]
fn verify_and_transition_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (d, jobs) in [(&a, "1"), (&b, "2")] {
        let v = run(&["verify", "--n", "8", "--m", "200", "--n-dirs", "30", "--n-pts", "10", "--seed", "11", "--jobs", jobs, "--out-dir", out(d.path())]);
        assert_ne!(code(&v), 1);
        let t = run(&["transition", "--n", "4,6", "--mult", "3,8", "--trials", "3", "--max-iter", "2000", "--seed", "11", "--jobs", jobs, "--out-dir", out(d.path())]);
        assert_eq!(code(&t), 0);
    }
    for f in ["landscape.csv", "report.json", "transition.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    let (ma, mb) = (json(&a.path().join("manifest.json")), json(&b.path().join("manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn transition_writes_one_row_per_trial_and_cell_summary() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["transition", "--n", "4,6", "--mult", "2,5,10,20,40", "--trials", "2", "--max-iter", "2000", "--replicates", "50", "--out-dir", out(d.path())]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(d.path().join("transition.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n,m,multiplier,trial,outcome,iters,final_dist");
    assert_eq!(csv.lines().count(), 1 + 20);
    let summary = json(&d.path().join("transition.json"));
    assert_eq!(summary["cells"].as_array().unwrap().len(), 10);
}

#[test]
fn oracle_check_and_moments() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["oracle-check", "--n", "8", "--m", "100000", "--seed", "3", "--out-dir", out(d.path())])), 0);
    assert_eq!(code(&run(&["oracle-check", "--n", "8", "--m", "50", "--tol", "1e-6", "--out-dir", out(d.path())])), 2);

    let o = run(&["moments", "--check", "spectral_norm,truncation_split", "--n", "8", "--m", "400", "--trials", "10", "--n-dirs", "5", "--out-dir", out(d.path())]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(d.path().join("concentration.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "check_id,n,m,epsilon,trial,value,fail");
    assert_eq!(csv.lines().count(), 1 + 20);
    let strict = run(&["moments", "--check", "spectral_norm", "--n", "8", "--m", "40", "--epsilon", "0.01", "--trials", "5", "--max-fail-rate", "0", "--out-dir", out(d.path())]);
    assert_eq!(code(&strict), 2);
}

#[test]
fn solve_reports_distance() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--n", "16", "--m", "640", "--init", "random", "--seed", "5", "--out-dir", out(d.path())]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let dist: f64 = text.split("dist=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(dist <= 1e-5);
    let z = run(&["solve", "--n", "8", "--m", "320", "--init", "zero", "--out-dir", out(d.path())]);
    assert_eq!(code(&z), 0);
}
