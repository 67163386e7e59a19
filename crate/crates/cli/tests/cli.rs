use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delpolar"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("delpolar-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn delpolar")
}

fn construct(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["construct", "--n", "4", "--nu", "0.5", "--delta", "0.1", "--trials", "64", "--seed", "3", "--rate", "0.25"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    run(&args)
}

#[test]
fn construct_and_run_are_deterministic() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    assert!(construct(&a, &[]).status.success());
    assert!(construct(&b, &["--sequential"]).status.success());
    for f in ["stats.csv", "config.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let cfg = a.join("config.json");
    let r1 = run(&["run", "--config", cfg.to_str().unwrap(), "--trials", "16", "--seed", "9"]);
    let r2 = run(&["--sequential", "run", "--config", cfg.to_str().unwrap(), "--trials", "16", "--seed", "9"]);
    assert!(r1.status.success(), "{}", String::from_utf8_lossy(&r1.stderr));
    assert_eq!(r1.stdout, r2.stdout);
    let report: serde_json::Value = serde_json::from_slice(&r1.stdout).unwrap();
    assert_eq!(report["trials"], 16);
    assert_eq!(report["records"].as_array().unwrap().len(), 16);
}

#[test]
fn stats_csv_shape() {
    let dir = scratch("csv");
    assert!(construct(&dir, &[]).status.success());
    let text = std::fs::read_to_string(dir.join("stats.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "index,h,h_hat,h_star,Z,K,se_h,se_h_hat,se_h_star,se_Z,se_K,count");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 16);
    for (i, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 12);
        assert_eq!(cols[0], (i + 1).to_string());
        assert_eq!(cols[11], "64");
    }
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["information_set"].as_array().unwrap().len(), 4);
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = scratch("bad");
    for extra in [&["--xi", "0.7"][..], &["--n0", "9"][..]] {
        let out = construct(&dir, extra);
        assert_eq!(out.status.code(), Some(2), "{extra:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["construct", "--n", "4", "--delta", "1.2", "--trials", "4", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["construct", "--n", "4", "--delta", "0.1", "--process", "markov:1.5", "--trials", "4", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_trials_is_rejected() {
    let dir = scratch("zero");
    let out = run(&["construct", "--n", "4", "--delta", "0.1", "--trials", "0", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
    let out = run(&["polarize", "--delta", "0.1", "--n", "3", "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_detects_perturbation() {
    assert!(run(&["oracle", "--max-len", "4"]).status.success());
    let out = run(&["oracle", "--max-len", "4", "--perturb", "1.001"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn noiseless_exact_rate_is_input_entropy() {
    let out = run(&["rate", "--delta", "0", "--len", "6", "--method", "exact", "--process", "markov:0.8"]);
    assert!(out.status.success());
    let est: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rate = est["info_rate"].as_f64().unwrap();
    let h = est["input_entropy"].as_f64().unwrap();
    assert!((rate - h).abs() < 1e-9, "{rate} vs {h}");
}

#[test]
fn polarize_emits_one_row_per_depth() {
    let out = run(&["polarize", "--delta", "0.1", "--n", "2,3,4", "--trials", "20"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,low,mid,high,mean_h_star,trials");
    assert_eq!(lines.len(), 4);
    for row in &lines[1..] {
        let c: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((c[1] + c[2] + c[3] - 1.0).abs() < 1e-12);
    }
}
