use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_progressive-nas");

const QUICK: &str = "seed = 2\n[train]\nepochs = 3\n[evo]\nconvergence_count = 4\n";

const TINY: &str = r#"
seed = 1
[space]
nodes = 3
catalog = ["zero", "skip", "linear_relu"]
schedule = [3, 2]
[train]
epochs = 5
[truth]
kind = "trained"
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

/// Runs a subcommand that must succeed and returns its run directory.
fn run_ok(args: &[&str]) -> PathBuf {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("c.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn assert_seed_everywhere(dir: &Path, seed: u64) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let recorded = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => text.lines().next() == Some(format!("# seed={seed}").as_str()),
            Some("toml") => text.lines().any(|l| l == format!("seed = {seed}")),
            Some("json") => text.contains(&format!("\"seed\": {seed}")) || text.contains(&format!("\"run_seed\": {seed}")),
            _ => false,
        };
        assert!(recorded, "{} does not record seed {seed}", path.display());
    }
}

#[test]
fn search_is_reproducible_and_records_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUICK);
    let out = tmp.path().join("runs");
    let args = ["search", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()];
    let a = run_ok(&args);
    let b = run_ok(&args);
    assert_ne!(a, b);
    for name in ["result.json", "stage0.evolution.csv", "stage2.supernet.json", "config.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_seed_everywhere(&a, 7);
    let index = fs::read_to_string(a.join("index.json")).unwrap();
    assert!(index.contains("stage1.supernet.json") && index.contains("result.json"));
}

#[test]
fn baselines_write_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUICK);
    let out = tmp.path().join("runs");
    let r = run_ok(&["random-baseline", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let result = fs::read_to_string(r.join("result.json")).unwrap();
    assert!(result.contains("\"variant\": \"random-baseline\"") && result.contains("\"evaluated\": 100"));
    let n = run_ok(&["no-inherit", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(fs::read_to_string(n.join("result.json")).unwrap().contains("\"inherit\": false"));
    assert_seed_everywhere(&r, 2);
}

#[test]
fn correlate_reports_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let dir = run_ok(&["correlate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    let text = fs::read_to_string(dir.join("correlation.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# seed=1");
    assert_eq!(lines[1], "stage,op_count,arch_count,kendall_tau");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("0,3,27,") && lines[3].starts_with("1,2,8,"));
    assert_seed_everywhere(&dir, 1);
}

#[test]
fn truth_then_search_then_export_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUICK);
    let out = tmp.path().to_str().unwrap();
    let truth = run_ok(&["truth", "--config", &cfg, "--out", out, "--kind", "synthetic"]).join("truth.csv");
    let search = run_ok(&["search", "--config", &cfg, "--out", out]).join("result.json");
    let base = run_ok(&["random-baseline", "--config", &cfg, "--out", out]).join("result.json");
    let plot = run_ok(&[
        "export-plot",
        "--config",
        &cfg,
        "--out",
        out,
        "--truth",
        truth.to_str().unwrap(),
        "--result",
        search.to_str().unwrap(),
        "--result",
        base.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(plot.join("plot.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# seed=2"));
    assert_eq!(
        lines.next(),
        Some("index,arch,fitness,r0_search_ops5,r0_search_ops3,r0_search_ops2,r1_random-baseline_ops2")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 15_625);
    let count = |col: usize| rows.iter().filter(|r| r[col] == "1").count();
    assert_eq!((count(3), count(4), count(5), count(6)), (15_625, 729, 64, 64));
    assert!(rows.iter().all(|r| r[5] == "0" || r[4] == "1"));
}

#[test]
fn bad_input_fails_with_a_diagnostic() {
    let out = run(&["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[evo]\npopulation = 10\n");
    let out = run(&["search", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("population"));

    let cfg = write_config(tmp.path(), "mode = \"truth\"\n");
    let out = run(&["search", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
