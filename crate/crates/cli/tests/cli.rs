use std::path::Path;
use std::process::{Command, Output};

use trustsup::ensemble::io::load_samples;
use trustsup_cli::commands::{EvalManifest, TrainManifest};

const SMALL: &str = r#"{"synth": {"classes": 5, "train_samples": 120, "test_samples": 40},
    "train": {"epochs": 3}, "trust": {"capacity": 256},
    "toy": {"train_samples": 100, "supervisor_samples": 100, "stream_samples": 100, "drift_at": 30}}"#;

fn trustsup(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trustsup"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("TRUSTSUP_THREADS", "1")
        .output()
        .unwrap()
}

fn with_config(dir: &Path, json: &str) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, json).unwrap();
    path.display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn gen_writes_loadable_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let out = trustsup(dir.path(), &["gen", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("train e-histogram 0:"));
    let (train, sidecar) = load_samples(&dir.path().join("data/train.csv")).unwrap();
    assert_eq!(train.len(), 120);
    assert_eq!((sidecar.models, sidecar.classes), (7, 5));
    assert!(dir.path().join("data/toy_stream.csv").exists());
}

#[test]
fn seed_changes_data_but_not_shape() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = with_config(a.path(), SMALL);
    assert_eq!(code(&trustsup(a.path(), &["gen", "--config", &cfg, "--seed", "1"])), 0);
    assert_eq!(code(&trustsup(b.path(), &["gen", "--config", &cfg, "--seed", "2"])), 0);
    let (x, sx) = load_samples(&a.path().join("data/test.csv")).unwrap();
    let (y, sy) = load_samples(&b.path().join("data/test.csv")).unwrap();
    assert_eq!(sx, sy);
    assert_eq!(x.len(), y.len());
    assert_ne!(x, y);
}

#[test]
fn zero_samples_give_empty_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), r#"{"synth": {"train_samples": 0, "test_samples": 0}}"#);
    assert_eq!(code(&trustsup(dir.path(), &["gen", "--config", &cfg])), 0);
    let (train, _) = load_samples(&dir.path().join("data/train.csv")).unwrap();
    assert!(train.is_empty());
}

#[test]
fn unknown_config_key_is_named_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), r#"{"train": {"epoch": 3}}"#);
    let out = trustsup(dir.path(), &["gen", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

#[test]
fn missing_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&trustsup(dir.path(), &["train"])), 3);
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(
        dir.path(),
        r#"{"synth": {"train_samples": 64, "test_samples": 8}, "train": {"learning_rate": 1e300, "epochs": 50}}"#,
    );
    assert_eq!(code(&trustsup(dir.path(), &["gen", "--config", &cfg])), 0);
    let out = trustsup(dir.path(), &["train", "--config", &cfg]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_trustsup"))
        .args(["gen", "--out"])
        .arg(dir.path())
        .env("TRUSTSUP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(
        dir.path(),
        r#"{"synth": {"classes": 5, "train_samples": 100, "test_samples": 30},
            "trust": {"capacity": 8192},
            "toy": {"train_samples": 100, "supervisor_samples": 100, "stream_samples": 100, "drift_at": 30}}"#,
    );
    assert_eq!(code(&trustsup(dir.path(), &["gen", "--config", &cfg])), 0);
    let out = trustsup(dir.path(), &["train", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: TrainManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("model/train_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.synth.memory_capacity, 8192);
    let loss = std::fs::read_to_string(dir.path().join("model/loss_trace.csv")).unwrap();
    assert_eq!(loss.lines().count(), 201);
    let tt = std::fs::read_to_string(dir.path().join("model/tt_trace.csv")).unwrap();
    assert!(tt.starts_with("step,tt,sse_tt,buffer_count\n"));

    let out = trustsup(dir.path(), &["eval", "--config", &cfg, "--mode", "maximal,predicted"]);
    assert_eq!(code(&out), 0);
    let table = std::fs::read_to_string(dir.path().join("eval/synth/metrics.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), table);
    let rows: Vec<&str> = table.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        [
            "Metric",
            "Untrusted accuracy",
            "Trusted accuracy",
            "Trusted precision",
            "Trusted recall",
            "Trusted F1 score",
            "Trusted specificity"
        ]
    );
    assert!(table.starts_with("Metric,Maximal,Predicted\n"));
    let em: EvalManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval/synth/manifest.json")).unwrap()).unwrap();
    assert!(em.runs.iter().all(|r| r.metrics.total() == 30));
    for m in ["maximal", "predicted"] {
        let records = std::fs::read_to_string(dir.path().join(format!("eval/synth/records_{m}.csv"))).unwrap();
        assert_eq!(records.lines().count(), 31);
    }

    let out = trustsup(dir.path(), &["eval", "--config", &cfg, "--mode", "active"]);
    assert_eq!(code(&out), 2);

    let out = trustsup(
        dir.path(),
        &[
            "eval", "--config", &cfg, "--source", "toy", "--mode", "active", "--budget", "0.001",
        ],
    );
    assert_eq!(code(&out), 0);
    let em: EvalManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval/toy/manifest.json")).unwrap()).unwrap();
    assert_eq!(em.runs[0].column, "Active 0.1%");
    assert_eq!(em.runs[0].oracle_budget, 0);
    assert_eq!(em.runs[0].oracle_calls, 0);
}

#[test]
fn bench_reports_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let out = trustsup(dir.path(), &["bench", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    let columns: Vec<&str> = summary["toy"]["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["column"].as_str().unwrap())
        .collect();
    assert_eq!(columns, ["Maximal", "Predicted", "Online", "Active 1%", "Active 0.1%"]);
    for r in summary["toy"]["runs"].as_array().unwrap() {
        assert!(r["oracle_calls"].as_u64() <= r["oracle_budget"].as_u64());
    }
    assert_eq!(summary["config"]["trust"]["capacity"], 256);
}
