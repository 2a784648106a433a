use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use idvid::bench::synth::{synth_corpus, DeskGroundTruth};
use idvid::bench::*;
use idvid::model::{Decision, Manifest, MetricName, MetricReport, MetricStatus, MetricValue, Stage};
use idvid::providers::{CountingProvider, FailAfter, MockConfig, MockProvider, ModelProvider};

fn truth(path: &Path) -> DeskGroundTruth {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// curate → caption → eval → report under mocks; returns every output file.
fn desk_run(out: &Path, seed: u64) -> (BTreeMap<String, Vec<u8>>, idvid::curation::CurateSummary) {
    let layout = synth_corpus(out, seed).unwrap();
    let cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    let decoder = cfg.build_decoder();
    let provider = cfg.build_provider(Some(&layout.scenes)).unwrap();
    let work = out.join("work");
    std::fs::create_dir_all(&work).unwrap();
    let manifest = Manifest::open(&work.join("manifest.jsonl")).unwrap();
    let summary = run_curate(&cfg, &manifest, Some(&layout.corpus), decoder.as_ref(), provider.as_ref(), 4).unwrap();
    let captions = run_caption(&cfg, &manifest, decoder.as_ref(), provider.as_ref(), 4).unwrap();
    assert_eq!(captions.eligible, 12);
    assert_eq!(captions.captioned, 12);
    assert!(!captions.is_degraded());
    let spec = load_pairs(&layout.pairs).unwrap();
    let eval_out = out.join("eval_out");
    let outcome = run_eval(&cfg, &spec, &eval_out, decoder.as_ref(), provider.as_ref(), Some(&manifest), 4).unwrap();
    assert!(!outcome.is_degraded());
    let rows = load_rows(&eval_out.join("summary.json")).unwrap();
    let md = emit_report(&rows, ReportFormat::Markdown, false).unwrap();
    std::fs::write(out.join("leaderboard.md"), md).unwrap();
    let mut files = BTreeMap::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(out).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    (files, summary)
}

#[test]
fn desk_run_matches_planted_defects_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let (first, summary) = desk_run(dir.path(), 7);
    let elapsed = t.elapsed();
    let gt = truth(&dir.path().join("ground_truth.json"));
    assert_eq!(summary.assets, 20);
    assert_eq!(summary.clips, gt.clips);
    assert_eq!(summary.rejected, gt.rejected, "{summary:#?}");
    assert_eq!(summary.split, gt.split);
    assert_eq!(summary.segments, gt.segments);
    assert_eq!(summary.kept, gt.kept);
    assert!(!summary.is_degraded());
    eprintln!("desk run {elapsed:?}");
    std::fs::remove_dir_all(dir.path()).unwrap();
    std::fs::create_dir_all(dir.path()).unwrap();
    let (second, _) = desk_run(dir.path(), 7);
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (k, v) in &first {
        assert!(second[k] == *v, "{k} differs between runs");
    }
}

fn counting_curate_caption(
    cfg: &RunConfig,
    manifest: &Manifest,
    corpus: &Path,
    budget: Option<usize>,
) -> (usize, bool) {
    let decoder = cfg.build_decoder();
    let inner = CountingProvider::new(MockProvider::new(MockConfig::default()));
    let degraded = match budget {
        Some(b) => {
            let p = FailAfter::new(&inner, b);
            let c = run_curate(cfg, manifest, Some(corpus), decoder.as_ref(), &p, 4).unwrap();
            let d = c.is_degraded();
            if d {
                return (inner.total(), true);
            }
            run_caption(cfg, manifest, decoder.as_ref(), &p, 4).unwrap().is_degraded()
        }
        None => {
            let c = run_curate(cfg, manifest, Some(corpus), decoder.as_ref(), &inner, 4).unwrap();
            let k = run_caption(cfg, manifest, decoder.as_ref(), &inner, 4).unwrap();
            c.is_degraded() || k.is_degraded()
        }
    };
    (inner.total(), degraded)
}

fn clip_states(m: &Manifest) -> BTreeMap<String, serde_json::Value> {
    m.with_state(|s| s.clips().iter().map(|c| (c.clip_id.clone(), serde_json::to_value(c).unwrap())).collect())
}

#[test]
fn interrupted_runs_resume_without_duplicate_calls() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    idvid::bench::synth::write_desk_corpus(&corpus, 3).unwrap();
    let cfg = RunConfig::default();

    let clean_dir = dir.path().join("clean");
    std::fs::create_dir_all(&clean_dir).unwrap();
    let clean = Manifest::open(&clean_dir.join("m.jsonl")).unwrap();
    let (oracle, degraded) = counting_curate_caption(&cfg, &clean, &corpus, None);
    assert!(!degraded);
    // 12 aesthetics calls, 1 boundary embedding, 3 prompts for each of 12 clips.
    assert_eq!(oracle, 12 + 1 + 36);

    for budget in [0, 5, 13, 20, 31] {
        let work = dir.path().join(format!("budget_{budget}"));
        std::fs::create_dir_all(&work).unwrap();
        let path = work.join("m.jsonl");
        let mut spent = 0;
        let mut rounds = 0;
        loop {
            let m = Manifest::open(&path).unwrap();
            let (calls, degraded) = counting_curate_caption(&cfg, &m, &corpus, Some(if rounds == 0 { budget } else { 17 }));
            spent += calls;
            rounds += 1;
            if !degraded {
                let (got, want) = (clip_states(&m), clip_states(&clean));
                assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
                for (id, v) in &want {
                    assert_eq!(&got[id], v, "budget {budget}, clip {id}");
                }
                break;
            }
            assert!(rounds < 10);
        }
        assert_eq!(spent, oracle, "budget {budget}: completed work was redone");
    }

    let inner = CountingProvider::new(MockProvider::new(MockConfig::default()));
    let again = run_caption(&cfg, &clean, cfg.build_decoder().as_ref(), &inner, 4).unwrap();
    assert_eq!(inner.total(), 0);
    assert_eq!((again.captioned, again.tagged, again.pending), (0, 0, 0));
    assert_eq!(again.tag_statistics.captions, 12);
}

#[test]
fn empty_corpus_is_a_zero_summary() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty");
    std::fs::create_dir_all(&corpus).unwrap();
    let cfg = RunConfig::default();
    let m = Manifest::open(&dir.path().join("m.jsonl")).unwrap();
    let p = MockProvider::default();
    let s = run_curate(&cfg, &m, Some(&corpus), cfg.build_decoder().as_ref(), &p, 2).unwrap();
    assert_eq!((s.assets, s.clips, s.kept, s.split), (0, 0, 0, 0));
    assert!(s.rejected.is_empty() && !s.is_degraded());
    let c = run_caption(&cfg, &m, cfg.build_decoder().as_ref(), &p, 2).unwrap();
    assert_eq!((c.eligible, c.pending), (0, 0));
    assert!(record_path(m.path(), "curate").exists());
}

struct EvalFixture {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
    spec: PairSpec,
}

fn eval_fixture() -> EvalFixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let pairs = idvid::bench::synth::write_eval_set(&root.join("eval")).unwrap();
    let spec = load_pairs(&pairs).unwrap();
    EvalFixture { _dir: dir, root, spec }
}

fn eval(f: &EvalFixture, cfg: &RunConfig, out: &str) -> EvalOutcome {
    let provider = cfg.build_provider(f.spec.scenes.as_deref()).unwrap();
    run_eval(cfg, &f.spec, &f.root.join(out), cfg.build_decoder().as_ref(), provider.as_ref(), None, 3).unwrap()
}

fn pair<'a>(o: &'a EvalOutcome, system: &str, id: &str) -> &'a MetricReport {
    &o.pairs.iter().find(|p| p.system == system && p.pair_id == id).unwrap().report
}

fn value(r: &MetricReport, m: MetricName) -> f64 {
    r.get(m).unwrap().ok_value().unwrap_or_else(|| panic!("{m:?} not OK: {:?}", r.get(m)))
}

#[test]
fn self_pair_hits_fixed_points() {
    let f = eval_fixture();
    let o = eval(&f, &RunConfig::default(), "out");
    let r = pair(&o, "reference-copy", "p0_static");
    for m in MetricName::ALL {
        match m {
            MetricName::MotionSmoothness => assert_eq!(r.get(m).unwrap().status, MetricStatus::Skipped),
            MetricName::ChamferDistance | MetricName::Met3r => assert!(value(r, m) <= 1e-6, "{m:?}"),
            _ => assert_eq!(value(r, m), 100.0, "{m:?}"),
        }
    }
    for p in &o.pairs {
        p.report.validate().unwrap();
        assert!(f.root.join("out/reports").join(&p.system).join(format!("{}.json", p.pair_id)).exists());
    }
    let copy = |id| pair(&o, "reference-copy", id);
    for id in ["p1_bottle", "p2_vase", "p3_watch"] {
        assert_eq!(value(copy(id), MetricName::VideoSimilarity), 100.0);
        assert!(value(copy(id), MetricName::ChamferDistance) <= 1e-6);
    }
    assert!(f.root.join("out/run.json").exists());
}

#[test]
fn aggregates_are_means_of_pair_values() {
    let f = eval_fixture();
    let o = eval(&f, &RunConfig::default(), "out");
    let written: Vec<SystemSummary> = serde_json::from_slice(&std::fs::read(f.root.join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(written, o.systems);
    for s in &o.systems {
        assert_eq!(s.pairs, 4);
        for m in MetricName::ALL {
            let vals: Vec<f64> = o
                .pairs
                .iter()
                .filter(|p| p.system == s.name)
                .filter_map(|p| p.report.get(m).unwrap().ok_value())
                .collect();
            let got = s.report.get(m).unwrap();
            if vals.is_empty() {
                assert_eq!(got.status, MetricStatus::Skipped);
            } else {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((got.value.unwrap() - mean).abs() < 1e-12, "{} {m:?}", s.name);
            }
        }
    }
}

#[test]
fn aggregate_skips_and_errors() {
    let ok = |v| MetricValue::ok(MetricName::I2vSubject, v).unwrap();
    let report = |v: MetricValue| MetricReport {
        metrics: [(MetricName::I2vSubject, v)].into(),
        ..MetricReport::default()
    };
    let a = report(ok(90.0));
    let b = report(MetricValue::error("boom"));
    let c = report(ok(80.0));
    assert_eq!(aggregate(&[&a, &b, &c])[&MetricName::I2vSubject].value, Some(85.0));
    assert_eq!(aggregate(&[&b])[&MetricName::I2vSubject].status, MetricStatus::Error);
    let s = report(MetricValue::skipped("x"));
    assert_eq!(aggregate(&[&s, &s])[&MetricName::I2vSubject].status, MetricStatus::Skipped);
}

#[test]
fn disabled_metrics_are_skipped_everywhere() {
    let f = eval_fixture();
    let mut cfg = RunConfig::default();
    cfg.metrics.enabled.remove(&MetricName::ChamferDistance);
    cfg.metrics.enabled.remove(&MetricName::VideoSimilarity);
    let o = eval(&f, &cfg, "out");
    for p in &o.pairs {
        for m in [MetricName::ChamferDistance, MetricName::VideoSimilarity] {
            let v = p.report.get(m).unwrap();
            assert_eq!(v.status, MetricStatus::Skipped);
            assert_eq!(v.detail.as_deref(), Some("disabled by config"));
            assert_eq!(v.value, None);
        }
        assert_eq!(p.report.get(MetricName::Met3r).unwrap().status, MetricStatus::Ok);
    }
    assert_ne!(cfg.hash(), RunConfig::default().hash());
    assert!(o.pairs.iter().all(|p| p.report.run_config_hash == cfg.hash()));
}

#[test]
fn penalty_law_on_planted_misses() {
    let f = eval_fixture();
    let mut low = RunConfig::default();
    low.metrics.object_similarity.penalty = 0.1;
    let mut high = low.clone();
    high.metrics.object_similarity.penalty = 0.5;
    let (a, b) = (eval(&f, &low, "low"), eval(&f, &high, "high"));
    let mut strict = 0;
    for (pa, pb) in a.pairs.iter().zip(&b.pairs) {
        let (sa, sb) = (value(&pa.report, MetricName::ObjectSimilarity), value(&pb.report, MetricName::ObjectSimilarity));
        let misses = pa.object_cells.iter().filter(|c| c.outcome == idvid::appearance::CellOutcome::Miss).count();
        assert!(sb >= sa);
        if misses > 0 {
            assert!(sb > sa, "{}/{}", pa.system, pa.pair_id);
            strict += 1;
        } else {
            assert_eq!(sa, sb);
        }
        if pa.system == "mismatch" {
            // nothing is ever found
            assert_eq!(sa, 10.0);
            assert_eq!(sb, 50.0);
        }
    }
    assert!(strict >= 6);
}

#[test]
fn broken_pair_reports_errors_and_run_continues() {
    let mut f = eval_fixture();
    f.spec.systems[0].pairs[1].generated = f.root.join("missing.rvid");
    let o = eval(&f, &RunConfig::default(), "out");
    assert!(o.is_degraded());
    let broken = &o.pairs[1].report;
    assert!(broken.metrics.values().all(|v| v.status == MetricStatus::Error));
    assert_eq!(value(pair(&o, "reference-copy", "p0_static"), MetricName::I2vSubject), 100.0);
    assert_eq!(o.systems[0].report.get(MetricName::I2vSubject).unwrap().status, MetricStatus::Ok);
}

#[test]
fn pair_specs_reject_duplicates_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pairs.json");
    std::fs::write(&p, r#"{"systems": [{"name": "a", "pairs": []}, {"name": "a", "pairs": []}]}"#).unwrap();
    assert_eq!(load_pairs(&p).unwrap_err().code(), "CONFIG_ERROR");
    std::fs::write(&p, r#"{"systems": [], "extra": 1}"#).unwrap();
    assert_eq!(load_pairs(&p).unwrap_err().code(), "CONFIG_ERROR");
    std::fs::write(&p, r#"{"systems": [{"name": "a", "pairs": [{"id": "x", "reference": "r.rvid", "generated": "/abs/g.rvid"}]}]}"#).unwrap();
    let spec = load_pairs(&p).unwrap();
    assert_eq!(spec.systems[0].pairs[0].reference, dir.path().join("r.rvid"));
    assert_eq!(spec.systems[0].pairs[0].generated, Path::new("/abs/g.rvid"));
}

#[test]
fn config_schema() {
    let cfg = RunConfig::from_json(b"{}").unwrap();
    assert_eq!(cfg, RunConfig::default());
    let round = RunConfig::from_json(&serde_json::to_vec(&cfg).unwrap()).unwrap();
    assert_eq!(round.hash(), cfg.hash());
    for bad in [
        r#"{"bogus": 1}"#,
        r#"{"providers": {"mode": "remote"}}"#,
        r#"{"metrics": {"object_similarity": {"penalty": 1.5}}}"#,
        r#"{"metrics": {"enabled": ["psnr"]}}"#,
        r#"{"curation_thresholds": {"min_frames": 0}}"#,
        r#"{"sampling": {"geometry_frames": 1}}"#,
        r#"{"decoder": {"kind": "ffmpeg"}}"#,
        "not json",
    ] {
        let e = RunConfig::from_json(bad.as_bytes()).unwrap_err();
        assert_eq!(e.code(), "CONFIG_ERROR", "{bad}");
        assert_eq!(ExitCode::for_error(&e), ExitCode::Config);
    }
    let live = RunConfig::from_json(br#"{"providers": {"mode": "live", "endpoint": "http://127.0.0.1:9"}, "seed": 4}"#).unwrap();
    assert_eq!(live.providers.mode, ProviderMode::Live);
    assert_eq!(live.geometry_params().seed, 4);
    let sub = RunConfig::from_json(br#"{"decoder": {"kind": "subprocess", "program": "/bin/dec"}}"#).unwrap();
    assert!(matches!(sub.decoder, DecoderConfig::Subprocess { .. }));
    assert_eq!(RunConfig::load(Path::new("/nonexistent/cfg.json")).unwrap_err().code(), "CONFIG_ERROR");
}

#[test]
fn run_records_are_stable() {
    let cfg = RunConfig::default();
    let p = MockProvider::default();
    let a = RunRecord::new("eval", &cfg, &p);
    let b = RunRecord::new("eval", &cfg, &p);
    assert_eq!(a, b);
    assert_eq!(a.provider_versions["mock"], "mock-1");
    assert_eq!(a.config_hash.len(), 64);
    let other = RunRecord::new("eval", &RunConfig { seed: 1, ..cfg.clone() }, &p);
    assert_ne!(a.config_hash, other.config_hash);
    let _ = Decision::Keep;
    let _ = Stage::Blur;
    let _: &dyn ModelProvider = &p;
}
