use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use idvid::providers::{MockProvider, MockServer};
use serde_json::Value;

fn idvid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idvid"))
        .current_dir(dir)
        .env_remove("CONSID_PROVIDER_TOKEN")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn live_config(dir: &Path, endpoint: &str) -> String {
    let p = dir.join("live.json");
    let cfg = serde_json::json!({
        "providers": { "mode": "live", "endpoint": endpoint, "timeout_ms": 2000, "max_retries": 1, "backoff_ms": 1 }
    });
    std::fs::write(&p, cfg.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

fn dead_endpoint() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    format!("http://{}", l.local_addr().unwrap())
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = idvid(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for sub in ["curate", "caption", "eval", "report", "providers", "synth-corpus"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"seed": 1, "colour": "blue"}"#).unwrap();
    std::fs::write(d.join("range.json"), r#"{"curation_thresholds": {"min_frames": 0}}"#).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["--config", "bad.json", "providers", "check"],
        vec!["--config", "missing.json", "providers", "check"],
        vec!["--providers", "remote", "providers", "check"],
        vec!["--penalty", "1.5", "providers", "check"],
        vec!["--metrics", "i2v_subject,sharpness", "providers", "check"],
        vec!["--workers", "0", "curate"],
        vec!["caption"],
        vec!["curate", "--corpus", "nowhere"],
        vec!["report", "--input", ".", "--format", "xml"],
        vec!["providers", "check", "--require", "telepathy"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let o = idvid(d, &args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = idvid(d, &["--config", "range.json", "providers", "check"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn empty_corpus_curates_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = idvid(dir.path(), &["curate", "--corpus", "empty"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&o);
    assert_eq!((s["assets"].as_u64(), s["clips"].as_u64(), s["kept"].as_u64()), (Some(0), Some(0), Some(0)));
    assert!(dir.path().join("run.curate.json").exists());
}

#[test]
fn desk_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = idvid(d, &["synth-corpus", "--out", "synth"]);
    assert_eq!(code(&o), 0);
    let truth: Value = serde_json::from_slice(&std::fs::read(d.join("synth/ground_truth.json")).unwrap()).unwrap();

    let o = idvid(d, &["--workers", "4", "curate", "--corpus", "synth/corpus"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&o);
    assert_eq!(s["kept"], truth["kept"]);
    assert_eq!(s["rejected"], truth["rejected"]);
    assert_eq!(s["segments"], truth["segments"]);

    let o = idvid(d, &["caption"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["captioned"], truth["kept"]);
    let again = idvid(d, &["caption"]);
    assert_eq!(json(&again)["captioned"], 0);

    let o = idvid(d, &["eval", "--pairs", "synth/eval/pairs.json", "--out", "eval"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o).as_array().unwrap().len(), 3);

    let o = idvid(d, &["report", "--input", "eval/summary.json", "--second-best", "--out", "board.md"]);
    assert_eq!(code(&o), 0);
    let board = std::fs::read_to_string(d.join("board.md")).unwrap();
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/leaderboard.md")).unwrap();
    assert_eq!(board, golden);

    let o = idvid(d, &["report", "--input", "eval/reports", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 13);
    let o = idvid(d, &["report", "--input", "eval/summary.json", "--format", "json"]);
    assert_eq!(json(&o)["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn metric_selection_and_penalty_flags_apply() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&idvid(d, &["synth-corpus", "--out", "s"])), 0);
    let run = |out: &str, extra: &[&str]| {
        let mut args = extra.to_vec();
        args.extend(["eval", "--pairs", "s/eval/pairs.json", "--out", out]);
        let o = idvid(d, &args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let v: Value = serde_json::from_slice(&std::fs::read(d.join(out).join("reports/mismatch/p2_vase.json")).unwrap()).unwrap();
        v["report"]["metrics"].clone()
    };
    let only = run("a", &["--metrics", "object_similarity,temporal_flickering"]);
    assert_eq!(only["object_similarity"]["status"], "OK");
    assert_eq!(only["temporal_flickering"]["status"], "OK");
    assert_eq!(only["chamfer_distance"]["status"], "SKIPPED");
    assert_eq!(only["i2v_subject"]["status"], "SKIPPED");
    let harsh = run("b", &["--metrics", "object_similarity", "--penalty", "0.3"]);
    assert!(harsh["object_similarity"]["value"].as_f64().unwrap() > only["object_similarity"]["value"].as_f64().unwrap());
}

#[test]
fn provider_check_mock_and_live() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = idvid(d, &["providers", "check", "--require", "geometry,ocr"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["passed"], true);

    let server = MockServer::start(Arc::new(MockProvider::default())).unwrap();
    let cfg = live_config(d, &server.url());
    let o = idvid(d, &["--config", &cfg, "providers", "check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(server.request_count() > 5);

    let cfg = live_config(d, &dead_endpoint());
    let o = idvid(d, &["--config", &cfg, "providers", "check"]);
    assert_eq!(code(&o), 3);
    assert_eq!(json(&o)["passed"], false);
}

#[test]
fn outage_leaves_pending_work_and_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&idvid(d, &["synth-corpus", "--out", "s"])), 0);
    let cfg = live_config(d, &dead_endpoint());
    let o = idvid(d, &["--config", &cfg, "curate", "--corpus", "s/corpus"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // The same manifest finishes once a provider is back.
    let o = idvid(d, &["curate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&o);
    assert!(s["pending"].as_object().unwrap().values().all(|v| v == 0));
}
