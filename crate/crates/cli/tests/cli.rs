use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
backbone_dim = 64
epochs = 1
state_dim = 8
hidden_dim = 16
n_regimes = 2
n_faults = 6
seed = 7
";

fn rslicer(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rslicer"))
        .args(args)
        .current_dir(dir)
        .env_clear()
        .envs(env.iter().copied())
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rslicer(dir, args, &[]);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let s = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(s.trim_end().lines().count(), 1, "{s}");
    s.trim_end().to_string()
}

fn prepare(dir: &Path) {
    std::fs::write(dir.join("run.toml"), CONFIG).unwrap();
    ok(dir, &["synth", "--config", "run.toml", "--out", "raw"]);
    ok(
        dir,
        &[
            "ingest", "--metrics", "raw/metrics.csv", "--traces", "raw/traces.jsonl", "--logs", "raw/logs.jsonl",
            "--labels", "raw/labels.jsonl", "--config", "run.toml", "--out", "corpus.json",
        ],
    );
    ok(dir, &["embed", "--corpus", "corpus.json", "--config", "run.toml", "--out", "emb.json"]);
    ok(dir, &["train", "--embeddings", "emb.json", "--config", "run.toml", "--out", "fusion.json"]);
    ok(dir, &["fuse", "--embeddings", "emb.json", "--model", "fusion.json", "--out", "states.json"]);
    ok(dir, &["partition", "--states", "states.json", "--config", "run.toml", "--out", "part.json"]);
}

#[test]
fn anomaly_stage_reports_precision_recall_f1() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    ok(
        dir,
        &[
            "tune", "--task", "ad", "--states", "states.json", "--partition", "part.json", "--corpus", "corpus.json",
            "--config", "run.toml", "--out", "ad.json",
        ],
    );
    let stdout = ok(
        dir,
        &[
            "eval", "--task", "ad", "--bundle", "ad.json", "--states", "states.json", "--corpus", "corpus.json",
            "--truth", "raw/labels.jsonl", "--out", "report.json",
        ],
    );
    assert!(stdout.starts_with("task=ad precision="));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    for key in ["precision", "recall", "f1", "tp", "fp", "fn", "n"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let f1 = report["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    // A bundle tuned for one task is refused by another.
    let out = rslicer(
        dir,
        &[
            "eval", "--task", "cls", "--bundle", "ad.json", "--states", "states.json", "--corpus", "corpus.json",
            "--truth", "raw/labels.jsonl",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error: input: "));
}

#[test]
fn train_prints_one_line_per_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("run.toml"), CONFIG.replace("epochs = 1", "epochs = 3")).unwrap();
    ok(dir, &["synth", "--config", "run.toml", "--out", "raw"]);
    ok(
        dir,
        &[
            "ingest", "--metrics", "raw/metrics.csv", "--traces", "raw/traces.jsonl", "--logs", "raw/logs.jsonl",
            "--config", "run.toml", "--out", "corpus.json",
        ],
    );
    ok(dir, &["embed", "--corpus", "corpus.json", "--config", "run.toml", "--out", "emb.json"]);
    let stdout = ok(dir, &["train", "--embeddings", "emb.json", "--config", "run.toml", "--out", "f.json"]);
    let epochs: Vec<&str> = stdout.lines().filter(|l| l.starts_with("epoch")).collect();
    assert_eq!(epochs.len(), 3);
    assert!(epochs.iter().all(|l| l.contains(" total ") && l.contains(" anomaly ")));
}

#[test]
fn missing_input_is_a_single_error_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rslicer(tmp.path(), &["fuse", "--embeddings", "nope.json", "--model", "nope.json"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let line = stderr_line(&out);
    assert!(line.starts_with("error: artifact: "), "{line}");
    assert!(out.stdout.is_empty());
}

#[test]
fn corrupt_artifact_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.json"), "{\"format\": \"rslicer.corpus\"").unwrap();
    let out = rslicer(tmp.path(), &["embed", "--corpus", "c.json"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error: artifact: "));
}

#[test]
fn bad_arguments_exit_with_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rslicer(tmp.path(), &["tune", "--task", "nope"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error: usage: "));
    let out = rslicer(tmp.path(), &["--help"], &[]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.toml"), "no_such_key = 1\n").unwrap();
    let out = rslicer(tmp.path(), &["synth", "--config", "run.toml"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error: config: "));
}

#[test]
fn seed_flag_and_environment_override_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("run.toml"), CONFIG).unwrap();
    let synth = |out: &str, seed: Option<&str>, env: &[(&str, &str)]| {
        let mut args = vec!["synth", "--config", "run.toml", "--out", out];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        let o = rslicer(dir, &args, env);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.join(out).join("metrics.csv")).unwrap()
    };
    let file = synth("a", None, &[]);
    let flag = synth("b", Some("11"), &[]);
    let env = synth("c", None, &[("RSLICER_SEED", "11")]);
    let both = synth("d", Some("7"), &[("RSLICER_SEED", "11")]);
    assert_ne!(file, flag);
    assert_eq!(flag, env);
    assert_eq!(both, file);
}
