use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kd_parallel::cli::{parse_config, CliConfig};

const BIN: &str = env!("CARGO_BIN_EXE_kd-parallel");

fn kd(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = kd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL: &str = r#"{
  "corpus": {
    "num_classes": 5,
    "feature_dim": 3,
    "utterances": {"train": 10, "dev": 3, "eval": 3},
    "utterance_frames": [20, 40],
    "segment_frames": [3, 8],
    "seed": 7
  },
  "model": {"context": 3, "hidden": [6]},
  "train": {"lr": 0.5, "batch_size": 32, "max_epochs": 3},
  "tiers": [{"name": "A", "hidden": [8], "max_epochs": 2}],
  "seeds": [2]
}"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn no_arguments_is_a_usage_error() {
    assert_eq!(kd(&[]).status.code(), Some(1));
    assert_eq!(kd(&["bogus"]).status.code(), Some(1));
    assert_eq!(kd(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_is_an_io_error_naming_the_path() {
    let out = kd(&["gen-corpus", "--config", "/nonexistent/kd.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/kd.json"));
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"train":{"lr":-1}}"#).unwrap();
    let out = kd(&["gen-corpus", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.lr"));
}

#[test]
fn unknown_baseline_mode_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().to_str().unwrap();
    ok(&["gen-corpus", "--config", &cfg, "--out", out_dir]);
    let out = kd(&["train-baseline", "--config", &cfg, "--out", out_dir, "--mode", "close"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_manifest_echoes_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    ok(&["gen-corpus", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    let run: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "gen-corpus");
    let echoed: CliConfig = serde_json::from_value(run["config"].clone()).unwrap();
    let mut expected = parse_config(SMALL).unwrap();
    expected.out = dir.path().to_path_buf();
    assert_eq!(echoed, expected);
    // Defaults that were absent from the file are spelled out.
    assert_eq!(run["config"]["train"]["patience"], 3);
    assert_eq!(run["config"]["temperature"], 1.0);
    assert!(run["artifacts"]["corpus"].is_string());
}

#[test]
fn experiment_is_reproducible_and_matches_chained_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (a_s, b_s) = (a.to_str().unwrap(), b.to_str().unwrap());
    ok(&["gen-corpus", "--config", &cfg, "--out", a_s]);
    ok(&["gen-corpus", "--config", &cfg, "--out", b_s]);
    for name in ["manifest.json", "train-00000.far.f32", "eval-00002.labels.u16"] {
        assert_eq!(
            fs::read(a.join("corpus").join(name)).unwrap(),
            fs::read(b.join("corpus").join(name)).unwrap()
        );
    }
    ok(&["experiment", "--config", &cfg, "--out", a_s]);
    ok(&["experiment", "--config", &cfg, "--out", b_s]);
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(report, fs::read_to_string(b.join("report.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("report.json")).unwrap(),
        fs::read(b.join("report.json")).unwrap()
    );

    // The same models built one subcommand at a time.
    let c = b_s;
    ok(&["train-baseline", "--config", &cfg, "--out", c, "--mode", "far-hard"]);
    ok(&["train-baseline", "--config", &cfg, "--out", c, "--mode", "multi-cond"]);
    ok(&["train-teacher", "--config", &cfg, "--out", c]);
    ok(&["soft-labels", "--config", &cfg, "--out", c]);
    ok(&["distill", "--config", &cfg, "--out", c]);

    let score = |model: &str, clean: bool| -> (String, String, String) {
        let path = b.join(model);
        let mut args = vec!["eval", "--config", &cfg, "--out", c, "--model", path.to_str().unwrap()];
        if clean {
            args.push("--clean");
        }
        ok(&args);
        let stem = model.trim_end_matches(".model");
        let m: serde_json::Value =
            serde_json::from_slice(&fs::read(b.join(format!("metrics-{stem}.json"))).unwrap())
                .unwrap();
        (
            m["frame_error_rate"].to_string(),
            m["segment_error_rate"].to_string(),
            m["mean_loss"].to_string(),
        )
    };
    let mut chained = String::from("seed,model,tier,split,fer,ser,loss\n");
    let mut push = |model: &str, tier: &str, split: &str, (f, s, l): (String, String, String)| {
        chained.push_str(&format!("2,{model},{tier},{split},{f},{s},{l}\n"));
    };
    push("far-hard", "", "eval-far", score("far-hard-seed2.model", false));
    push("multi-cond", "", "eval-far", score("multi-cond-seed2.model", false));
    push("teacher", "A", "eval-far", score("teacher-A-seed2.model", false));
    push("teacher", "A", "eval-clean", score("teacher-A-seed2.model", true));
    push("student", "A", "eval-far", score("student-A-seed2.model", false));
    assert_eq!(chained, report);
}
