//! One line per acceptance criterion. Runs without the libtest harness so
//! the lines are always printed; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use idvid::appearance::{temporal_flickering, CellOutcome};
use idvid::bench::synth::{synth_corpus, write_desk_corpus, write_eval_set, DeskGroundTruth};
use idvid::bench::*;
use idvid::curation::*;
use idvid::geometry::*;
use idvid::ingest::FrameImage;
use idvid::model::*;
use idvid::providers::scene::rotation_about;
use idvid::providers::*;
use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn verdicts_exact() -> Check {
    let d = |n, w, h| gate_duration_resolution(n, w, h, 81, 320).decision;
    ensure!(d(81, 640, 480) == Decision::Keep && d(80, 640, 480) == Decision::Reject, "frame gate");
    ensure!(d(100, 320, 320) == Decision::Keep && d(100, 319, 480) == Decision::Reject && d(100, 640, 319) == Decision::Reject, "side gate");
    let a = |v: f64| aesthetic_gate(&[v; 10], 10, 3.0).map(|v| v.decision);
    ensure!(a(3.00).ok() == Some(Decision::Keep) && a(2.99).ok() == Some(Decision::Reject), "aesthetic gate");
    ensure!(ocr_gate(30, 30).decision == Decision::Keep && ocr_gate(31, 30).decision == Decision::Reject, "ocr gate");
    Ok("81/80 frames, 320/319 px, 3.00/2.99 aesthetic, 30/31 chars".into())
}

fn percentile_exact() -> Check {
    let values: BTreeMap<String, f64> = (1..=100).map(|i| (format!("c{i:03}"), i as f64)).collect();
    let (kept, _) = percentile_prune(&values, Stage::Brightness, 5.0, 5.0);
    let pruned: Vec<u32> = (1..=100).filter(|i| !kept.contains(&format!("c{i:03}"))).collect();
    ensure!(pruned == [1, 2, 3, 4, 5, 96, 97, 98, 99, 100], "pruned {pruned:?}");
    let flat: BTreeMap<String, f64> = (0..50).map(|i| (format!("f{i}"), 4.2)).collect();
    let (kept_flat, _) = percentile_prune(&flat, Stage::Blur, 5.0, 5.0);
    ensure!(kept_flat.len() == 50, "all-equal corpus lost {}", 50 - kept_flat.len());
    Ok("1..100 prunes 1-5 and 96-100; all-equal prunes none".into())
}

fn blob(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    PointCloud::new((0..n).map(|_| Point3::new(g(), g() * 0.6, g() * 0.3)).collect())
}

fn icp_recovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_rot, mut worst_t) = (0.0f64, 0.0f64);
    for inst in 0..50 {
        let src = blob(&mut rng, 1000);
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        let truth = RigidTransform::new(rotation_about(axis, rng.random_range(0.0..30.0)), dir * rng.random_range(0.0..0.5));
        let tgt = src.transformed(&truth);
        let r = icp_align(&src, &tgt, 50, 1e-9).map_err(|e| format!("instance {inst}: {e}"))?;
        for w in r.history.windows(2) {
            ensure!(w[1] <= w[0] + 1e-12, "instance {inst}: residual rose {:?}", r.history);
        }
        worst_rot = worst_rot.max(r.transform.rotation_angle_to(&truth));
        worst_t = worst_t.max((r.transform.translation - truth.translation).norm());
    }
    ensure!(worst_rot < 1e-3 && worst_t < 1e-3, "worst rotation {worst_rot:.2e}, translation {worst_t:.2e}");
    Ok(format!("50 instances, worst rotation {worst_rot:.1e} rad, translation {worst_t:.1e}"))
}

fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    let dir = |x: &PointCloud, y: &PointCloud| {
        x.points.iter().map(|p| y.points.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).sum::<f64>() / x.len() as f64
    };
    0.5 * (dir(a, b) + dir(b, a))
}

fn chamfer_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (na, nb) = (rng.random_range(1..=200), rng.random_range(1..=200));
        let a = blob(&mut rng, na);
        let b = blob(&mut rng, nb);
        let got = chamfer_distance(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_chamfer(&a, &b)).abs());
        ensure!(got == chamfer_distance(&b, &a).unwrap(), "asymmetric");
        ensure!(chamfer_distance(&a, &a).unwrap() == 0.0, "CD(A,A) != 0");
    }
    ensure!(worst <= 1e-9, "max deviation {worst:.2e}");
    Ok(format!("100 pairs, max deviation {worst:.1e}"))
}

/// Union-find over core points; border points join the lowest-numbered
/// adjacent component.
fn dbscan_reference(pts: &[EmbeddingVector], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = pts.len();
    let dist = |i: usize, j: usize| 1.0 - pts[i].cosine(&pts[j]);
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| dist(i, j) <= eps).count() >= min_pts).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && dist(i, j) <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut labels = vec![NOISE; n];
    for i in (0..n).filter(|&i| core[i]) {
        labels[i] = find(&mut parent, i) as i64;
    }
    for i in (0..n).filter(|&i| !core[i]) {
        labels[i] = (0..n).filter(|&j| core[j] && dist(i, j) <= eps).map(|j| labels[j]).min().unwrap_or(NOISE);
    }
    labels
}

fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l == NOISE {
                NOISE
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

fn dbscan_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut clusters = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=64);
        let centers: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let pts: Vec<EmbeddingVector> = (0..n)
            .map(|_| {
                let c = &centers[rng.random_range(0..4)];
                EmbeddingVector::normalized(EmbeddingKind::Global, c.iter().map(|v| v + rng.random_range(-0.25..0.25)).collect()).unwrap()
            })
            .collect();
        let (eps, min_pts) = (rng.random_range(0.02..0.3), rng.random_range(1..5));
        let got = canonical(&dbscan_cluster(&pts, eps, min_pts));
        ensure!(got == canonical(&dbscan_reference(&pts, eps, min_pts)), "labels differ (n={n}, eps={eps:.3}, min_pts={min_pts})");
        clusters += got.iter().max().map_or(0, |m| m + 1);
    }
    Ok(format!("100 sets, {clusters} clusters in total"))
}

fn eval_set(root: &Path, cfg: &RunConfig, out: &str) -> Result<EvalOutcome, String> {
    let pairs = if root.join("pairs.json").exists() { root.join("pairs.json") } else { write_eval_set(root).map_err(|e| e.to_string())? };
    let spec = load_pairs(&pairs).map_err(|e| e.to_string())?;
    let provider = cfg.build_provider(spec.scenes.as_deref()).map_err(|e| e.to_string())?;
    run_eval(cfg, &spec, &root.join(out), cfg.build_decoder().as_ref(), provider.as_ref(), None, 4).map_err(|e| e.to_string())
}

fn ok_value(r: &MetricReport, m: MetricName) -> Result<f64, String> {
    r.get(m).and_then(MetricValue::ok_value).ok_or_else(|| format!("{} not OK: {:?}", m.key(), r.get(m)))
}

fn metric_fixed_points() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let o = eval_set(dir.path(), &RunConfig::default(), "out")?;
    let p = o.pairs.iter().find(|p| p.system == "reference-copy" && p.pair_id == "p0_static").ok_or("self pair missing")?;
    let mut worst_geo = 0.0f64;
    for m in MetricName::ALL {
        match m {
            MetricName::MotionSmoothness => {}
            MetricName::ChamferDistance | MetricName::Met3r => {
                let v = ok_value(&p.report, m)?;
                ensure!(v <= 1e-6, "{} = {v}", m.key());
                worst_geo = worst_geo.max(v);
            }
            _ => {
                let v = ok_value(&p.report, m)?;
                ensure!(v == 100.0, "{} = {v}", m.key());
            }
        }
    }
    Ok(format!("8 percentage metrics = 100.0, chamfer/met3r max {worst_geo:.1e}"))
}

fn flickering_exact() -> Check {
    let still = vec![FrameImage::solid(16, 16, [77; 3]); 8];
    let strobe: Vec<_> = (0..8).map(|i| FrameImage::solid(16, 16, [if i % 2 == 0 { 0 } else { 255 }; 3])).collect();
    let jitter: Vec<_> = (0..8).map(|i| FrameImage::solid(16, 16, [128 + (i % 2) as u8; 3])).collect();
    let (s, a, j) = (
        temporal_flickering(&still).unwrap(),
        temporal_flickering(&strobe).unwrap(),
        temporal_flickering(&jitter).unwrap(),
    );
    ensure!(s == 100.0 && a == 0.0 && (j - 99.6078).abs() < 1e-4, "static {s}, alternating {a}, ±1 {j}");
    Ok(format!("static {s}, alternating {a}, ±1 gray {j:.4}"))
}

fn penalty_law() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut low = RunConfig::default();
    low.metrics.enabled = [MetricName::ObjectSimilarity].into();
    low.metrics.object_similarity.penalty = 0.1;
    let mut high = low.clone();
    high.metrics.object_similarity.penalty = 0.5;
    let a = eval_set(dir.path(), &low, "low")?;
    let b = eval_set(dir.path(), &high, "high")?;
    let (mut strict, mut all_miss) = (0, 0);
    for (pa, pb) in a.pairs.iter().zip(&b.pairs) {
        let (sa, sb) = (ok_value(&pa.report, MetricName::ObjectSimilarity)?, ok_value(&pb.report, MetricName::ObjectSimilarity)?);
        let misses = pa.object_cells.iter().filter(|c| c.outcome == CellOutcome::Miss).count();
        ensure!(sb >= sa, "{}/{}: {sb} < {sa}", pa.system, pa.pair_id);
        if misses > 0 {
            ensure!(sb > sa, "{}/{} has misses but equal scores", pa.system, pa.pair_id);
            strict += 1;
        }
        if misses == pa.object_cells.len() {
            ensure!(sa == 10.0 && sb == 50.0, "all-miss {}/{}: {sa}, {sb}", pa.system, pa.pair_id);
            all_miss += 1;
        }
    }
    ensure!(strict > 0 && all_miss > 0, "no planted misses observed");
    Ok(format!("{} pairs, {strict} strictly increase, {all_miss} all-miss at 100·penalty", a.pairs.len()))
}

fn met3r_analytic() -> Check {
    let m = MockProvider::default();
    let plane = SceneSpec::Plane {
        z: 2.0,
        texture: Texture {
            primary: label_color("watch"),
            secondary: [30, 30, 30],
            cell: 0.25,
        },
    };
    let cam = Camera::new(32, 24, 16.0);
    let a = m.registry.register(plane, cam.clone());
    let b = m.registry.register(plane, cam.with_pose(RigidTransform::new(Matrix3::identity(), Vector3::new(-0.25, 0.0, 0.0))));
    let two = video_met3r(&m, &[a.clone(), b]).map_err(|e| e.to_string())?.score.ok_or("two-camera pair skipped")?;
    ensure!(two <= 1e-6, "two-camera plane scored {two}");
    let same = video_met3r(&m, &[a.clone(), a]).map_err(|e| e.to_string())?.score.ok_or("identical pair skipped")?;
    ensure!(same.abs() <= 1e-6, "identical views scored {same}");
    Ok(format!("two-camera plane {two:.1e}, identical views {same:.1e}"))
}

fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn desk_once(out: &Path, seed: u64) -> Result<(idvid::curation::CurateSummary, BTreeMap<String, Vec<u8>>), String> {
    let s = |e: idvid::Error| e.to_string();
    let layout = synth_corpus(out, seed).map_err(s)?;
    let cfg = RunConfig { seed, ..RunConfig::default() };
    let decoder = cfg.build_decoder();
    let provider = cfg.build_provider(Some(&layout.scenes)).map_err(s)?;
    let manifest = Manifest::open(&out.join("work/manifest.jsonl")).map_err(s)?;
    let summary = run_curate(&cfg, &manifest, Some(&layout.corpus), decoder.as_ref(), provider.as_ref(), 4).map_err(s)?;
    let captions = run_caption(&cfg, &manifest, decoder.as_ref(), provider.as_ref(), 4).map_err(s)?;
    ensure!(captions.captioned == summary.kept && !captions.is_degraded(), "captioned {} of {}", captions.captioned, summary.kept);
    let spec = load_pairs(&layout.pairs).map_err(s)?;
    let eval = run_eval(&cfg, &spec, &out.join("eval"), decoder.as_ref(), provider.as_ref(), Some(&manifest), 4).map_err(s)?;
    ensure!(!eval.is_degraded(), "eval degraded");
    let rows = load_rows(&out.join("eval/summary.json")).map_err(s)?;
    std::fs::write(out.join("leaderboard.md"), emit_report(&rows, ReportFormat::Markdown, false).map_err(s)?).unwrap();
    Ok((summary, collect_files(out)))
}

fn desk_run() -> Check {
    // Same location both times: asset ids and source paths record where the corpus lives.
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let (summary, first) = desk_once(dir.path(), 11)?;
    let one = t.elapsed();
    let truth: DeskGroundTruth = serde_json::from_slice(&first["ground_truth.json"]).unwrap();
    ensure!(
        summary.rejected == truth.rejected && summary.kept == truth.kept && summary.segments == truth.segments && summary.split == truth.split,
        "summary {:?} vs truth {:?}",
        summary.rejected,
        truth.rejected
    );
    std::fs::remove_dir_all(dir.path()).unwrap();
    let (_, second) = desk_once(dir.path(), 11)?;
    ensure!(first.keys().eq(second.keys()), "different output file sets");
    let differing: Vec<_> = first.iter().filter(|(k, v)| second[*k] != **v).map(|(k, _)| k.clone()).collect();
    ensure!(differing.is_empty(), "outputs differ: {differing:?}");
    ensure!(one < Duration::from_secs(60), "one run took {one:?}");
    Ok(format!("{} files identical across runs, {} kept, one run {:.1} s", first.len(), summary.kept, one.as_secs_f64()))
}

fn curate_and_caption(cfg: &RunConfig, manifest: &Manifest, corpus: &Path, budget: Option<usize>) -> Result<(usize, bool), String> {
    let s = |e: idvid::Error| e.to_string();
    let decoder = cfg.build_decoder();
    let counting = CountingProvider::new(MockProvider::default());
    let provider = FailAfter::new(&counting, budget.unwrap_or(usize::MAX));
    let c = run_curate(cfg, manifest, Some(corpus), decoder.as_ref(), &provider, 4).map_err(s)?;
    if c.is_degraded() {
        return Ok((counting.total(), true));
    }
    let k = run_caption(cfg, manifest, decoder.as_ref(), &provider, 4).map_err(s)?;
    Ok((counting.total(), k.is_degraded()))
}

fn states(m: &Manifest) -> BTreeMap<String, serde_json::Value> {
    m.with_state(|s| s.clips().iter().map(|c| (c.clip_id.clone(), serde_json::to_value(c).unwrap())).collect())
}

fn resumability() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_desk_corpus(&corpus, 1).map_err(|e| e.to_string())?;
    let cfg = RunConfig::default();
    let clean = Manifest::open(&dir.path().join("clean/m.jsonl")).unwrap();
    let (oracle, degraded) = curate_and_caption(&cfg, &clean, &corpus, None)?;
    ensure!(!degraded, "clean run degraded");
    for budget in [7, 19] {
        let m = Manifest::open(&dir.path().join(format!("b{budget}/m.jsonl"))).unwrap();
        let (mut spent, mut degraded) = curate_and_caption(&cfg, &m, &corpus, Some(budget))?;
        ensure!(degraded, "budget {budget} did not interrupt the run");
        let mut rounds = 0;
        while degraded {
            let (s, d) = curate_and_caption(&cfg, &m, &corpus, Some(budget))?;
            spent += s;
            degraded = d;
            rounds += 1;
            ensure!(rounds < 20, "budget {budget}: no progress");
        }
        ensure!(spent == oracle, "budget {budget}: {spent} calls vs {oracle} for a clean run");
        ensure!(states(&m) == states(&clean), "budget {budget}: final state differs from clean run");
        let (rerun, _) = curate_and_caption(&cfg, &m, &corpus, None)?;
        ensure!(rerun == 0, "finished manifest made {rerun} calls");
    }
    Ok(format!("interrupted runs spend exactly {oracle} calls, rerun 0"))
}

fn main() {
    let checks: [(&str, fn() -> Check, Option<u64>); 11] = [
        ("curation thresholds exact", verdicts_exact, Some(1)),
        ("percentile pruning", percentile_exact, Some(1)),
        ("ICP recovery", icp_recovery, Some(10)),
        ("Chamfer oracle", chamfer_oracle, Some(5)),
        ("DBSCAN oracle", dbscan_oracle, Some(5)),
        ("metric fixed points", metric_fixed_points, None),
        ("temporal flickering exactness", flickering_exact, None),
        ("object-similarity penalty law", penalty_law, None),
        ("MEt3R analytic warp", met3r_analytic, None),
        ("end-to-end desk run", desk_run, Some(150)),
        ("resumability", resumability, None),
    ];
    let quiet = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f, limit) in checks {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = t.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(s)) if elapsed > Duration::from_secs(s) => Err(format!("took {elapsed:.1?}, limit {s} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name:<32} {detail} [{elapsed:.1?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<32} {why} [{elapsed:.1?}]");
            }
        }
    }
    std::panic::set_hook(quiet);
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
