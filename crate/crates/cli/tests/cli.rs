use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = include_str!("../../../configs/minimal.toml");

fn tdgr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdgr")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_run_then_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let first = tdgr(&["run", "--config", &cfg, "--out", out_s]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("1 runs trained, 0 reused"));

    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,seed,replay_ratio,metric,value"));
    let metrics: Vec<&str> = lines.map(|l| l.split(',').nth(3).unwrap()).collect();
    let mut unique = metrics.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), metrics.len(), "one row per metric: {csv}");
    for m in ["success", "forward_transfer", "forgetting", "success_task0", "success_task1"] {
        assert!(metrics.contains(&m), "missing {m}");
    }
    let run = out.join("finetune").join("seed_1");
    for f in ["inputs.json", "result.json", "model.ckpt", "run.log"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let result = std::fs::read(run.join("result.json")).unwrap();

    let second = tdgr(&["run", "--config", &cfg, "--out", out_s]);
    assert!(second.status.success());
    assert!(stdout(&second).contains("0 runs trained, 1 reused"));
    assert_eq!(std::fs::read_to_string(out.join("metrics.csv")).unwrap(), csv);
    assert_eq!(std::fs::read(run.join("result.json")).unwrap(), result);
}

#[test]
fn changed_budget_retrains() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), MINIMAL);
    assert!(tdgr(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let cfg = write_config(tmp.path(), &MINIMAL.replace("policy_epochs = 3", "policy_epochs = 4"));
    let again = tdgr(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(stdout(&again).contains("1 runs trained, 0 reused"));
}

#[test]
fn invalid_configs_fail_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("policy_epochs = 3", "policy_epoch = 3"));
    let o = tdgr(&["run", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("policy_epoch") && stderr(&o).contains("line 13"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), &MINIMAL.replace("seeds = [1]", "seeds = [1]\nreplay_ratios = [1.5]"));
    let o = tdgr(&["run", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 6: replay_ratios"), "{}", stderr(&o));

    let o = tdgr(&["run", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn failed_run_keeps_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let body = MINIMAL.replace("methods = [\"finetune\"]", "methods = [\"packnet\"]").replace(
        "eval_episodes = 10",
        "eval_episodes = 10\nprune_fraction = 0.001",
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = tdgr(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let result = std::fs::read_to_string(out.join("packnet").join("seed_1").join("result.json")).unwrap();
    let v: serde_json_lite::Value = serde_json_lite::parse(&result);
    assert_eq!(v.completed, Some(false));
    assert!(v.columns >= 2, "evaluations before the failure are kept");
    assert!(std::fs::read_to_string(out.join("summary.md")).unwrap().contains("capacity exhausted"));
}

#[test]
fn plots_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &MINIMAL.replace("methods = [\"finetune\"]", "methods = [\"tdgr\"]"));
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(tdgr(&["run", "--config", &cfg, "--out", out_s]).status.success());
    let first = tdgr(&["plot", "--out", out_s]);
    assert!(first.status.success(), "{}", stderr(&first));
    let files: Vec<String> = stdout(&first).lines().map(String::from).collect();
    assert!(files.iter().any(|f| f.ends_with("quality_tdgr_r0.9_seed1.svg")));
    assert!(files.iter().any(|f| f.ends_with("paths_tdgr_r0.9_seed1.svg")));
    let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    let svg = String::from_utf8(bytes[0].clone()).unwrap();
    // Two tasks seen after the second bucket: one series each.
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(tdgr(&["plot", "--out", out_s]).status.success());
    for (f, b) in files.iter().zip(&bytes) {
        assert_eq!(&std::fs::read(f).unwrap(), b, "{f}");
    }
}

#[test]
fn sweep_rejects_non_replay_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let o = tdgr(&["sweep", "--config", &cfg, "--ratios", "0.5,0.9"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("t-DGR and DGR only"));
}

#[test]
fn sweep_reports_one_row_per_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let body = MINIMAL.replace("methods = [\"finetune\"]", "methods = [\"tdgr\", \"dgr\"]");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = tdgr(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--ratios", "0.5,0.9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("sweep.md")).unwrap();
    assert_eq!(table.lines().count(), 2 + 2);
    assert!(table.starts_with("| Replay ratio | t-DGR | DGR |"));
}

#[test]
fn analyze_and_hyperparams() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("analysis");
    let o = tdgr(&["analyze", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let offcourse = std::fs::read_to_string(out.join("offcourse.csv")).unwrap();
    assert!(offcourse.lines().any(|l| l.starts_with("0.01,200,0.866")));
    assert!(out.join("coverage.svg").is_file());
    let o = tdgr(&["hyperparams"]);
    assert!(stdout(&o).contains("| budgets.learning_rate | 1e-4 | 1e-3 |"));
}

/// Just enough JSON inspection for the checks above, without a dependency.
mod serde_json_lite {
    pub struct Value {
        pub completed: Option<bool>,
        pub columns: usize,
    }

    pub fn parse(src: &str) -> Value {
        let completed = if src.contains("\"completed\": false") {
            Some(false)
        } else if src.contains("\"completed\": true") {
            Some(true)
        } else {
            None
        };
        let evals = src.split("\"evaluations\": [").nth(1).and_then(|s| s.split("\"trained_at\"").next()).unwrap_or("");
        Value { completed, columns: evals.matches('[').count() }
    }
}
