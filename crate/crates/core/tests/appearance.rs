mod common;

use std::collections::BTreeMap;

use idvid::appearance::*;
use idvid::ingest::FrameImage;
use idvid::model::{EmbeddingKind, EmbeddingVector, MetricName, MetricStatus};
use idvid::providers::*;
use idvid::Result;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn basis(kind: EmbeddingKind, dim: usize, i: usize) -> EmbeddingVector {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    EmbeddingVector::from_unit(kind, v).unwrap()
}

/// A unit vector at cosine `c` to the first basis vector.
fn at_cosine(kind: EmbeddingKind, c: f64) -> EmbeddingVector {
    EmbeddingVector::normalized(kind, vec![c, (1.0 - c * c).sqrt(), 0.0]).unwrap()
}

#[test]
fn cosine_cases() {
    let k = EmbeddingKind::Global;
    let u = basis(k, 3, 0);
    assert_eq!(cosine(&u, &u).unwrap(), 1.0);
    assert_eq!(cosine(&u, &basis(k, 3, 1)).unwrap(), 0.0);
    let neg = EmbeddingVector::from_unit(k, vec![-1.0, 0.0, 0.0]).unwrap();
    assert_eq!(cosine(&u, &neg).unwrap(), -1.0);
    assert!(cosine(&u, &basis(k, 4, 0)).is_err());
    assert!(cosine(&u, &basis(EmbeddingKind::Perceptual, 3, 0)).is_err());
}

#[test]
fn planted_cosine_means() {
    let k = EmbeddingKind::PatchObject;
    let r = basis(k, 3, 0);
    let v = mean_cosine_to(&r, &[at_cosine(k, 0.9), at_cosine(k, 0.8)]).unwrap();
    assert!((v - 85.0).abs() < 1e-9);
    let p = EmbeddingKind::Perceptual;
    let v = mean_cosine_to(&basis(p, 3, 0), &[at_cosine(p, 1.0), at_cosine(p, 0.5), at_cosine(p, 0.75)]).unwrap();
    assert!((v - 75.0).abs() < 1e-9);

    // Consecutive pairs at cosines 0.9 then 0.7.
    let a = basis(k, 3, 0);
    let b = at_cosine(k, 0.9);
    let t = 0.9f64.acos() + 0.7f64.acos();
    let c = EmbeddingVector::normalized(k, vec![t.cos(), t.sin(), 0.0]).unwrap();
    assert!((consecutive_mean_cosine(&[a.clone(), b, c]).unwrap() - 80.0).abs() < 1e-9);
    let g = EmbeddingKind::Global;
    let v = consecutive_mean_cosine(&[basis(g, 2, 0), basis(g, 2, 0), basis(g, 2, 1)]).unwrap();
    assert_eq!(v, 50.0);
    assert!(consecutive_mean_cosine(&[a]).is_err());
    let planted = [at_cosine(g, 0.6), at_cosine(g, 0.8)];
    let v = paired_mean_cosine(&[basis(g, 3, 0), basis(g, 3, 0)], &planted).unwrap();
    assert!((v - 70.0).abs() < 1e-9);
}

fn oracle_consecutive(e: &[EmbeddingVector]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..e.len() {
        for j in 0..e.len() {
            if j == i + 1 {
                sum += e[i].values().iter().zip(e[j].values()).map(|(a, b)| a * b).sum::<f64>();
                n += 1;
            }
        }
    }
    100.0 * sum / n as f64
}

fn random_unit(rng: &mut ChaCha8Rng, kind: EmbeddingKind, dim: usize) -> EmbeddingVector {
    EmbeddingVector::normalized(kind, (0..dim).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap()
}

#[test]
fn consecutive_structure_matters() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e: Vec<_> = (0..6).map(|_| random_unit(&mut rng, EmbeddingKind::PatchObject, 8)).collect();
    let mut shuffled = e.clone();
    shuffled.swap(1, 4);
    let a = consecutive_mean_cosine(&e).unwrap();
    let b = consecutive_mean_cosine(&shuffled).unwrap();
    assert!((a - oracle_consecutive(&e)).abs() < 1e-9);
    assert!((b - oracle_consecutive(&shuffled)).abs() < 1e-9);
    assert_ne!(a, b);
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    m.qr().q()
}

proptest! {
    #[test]
    fn cosine_metrics_ignore_orthogonal_maps(seed in any::<u64>(), dim in 2usize..10, n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = EmbeddingKind::Global;
        let e: Vec<_> = (0..n).map(|_| random_unit(&mut rng, k, dim)).collect();
        let q = random_orthogonal(&mut rng, dim);
        let rotated: Vec<_> = e
            .iter()
            .map(|v| EmbeddingVector::normalized(k, (&q * nalgebra::DVector::from_column_slice(v.values())).as_slice().to_vec()).unwrap())
            .collect();
        prop_assert!((consecutive_mean_cosine(&e).unwrap() - consecutive_mean_cosine(&rotated).unwrap()).abs() < 1e-9);
        prop_assert!((mean_cosine_to(&e[0], &e[1..]).unwrap() - mean_cosine_to(&rotated[0], &rotated[1..]).unwrap()).abs() < 1e-9);
        prop_assert!((paired_mean_cosine(&e, &e[..].iter().rev().cloned().collect::<Vec<_>>()).unwrap()
            - paired_mean_cosine(&rotated, &rotated[..].iter().rev().cloned().collect::<Vec<_>>()).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn static_video_scores_one_hundred() {
    let m = MockProvider::default();
    let f = common::object_frame("mug", 3);
    let frames = vec![f.clone(); 5];
    assert_eq!(i2v_subject(&m, &f, &frames).unwrap(), 100.0);
    assert_eq!(i2v_background(&m, &f, &frames).unwrap(), 100.0);
    assert_eq!(subject_consistency(&m, &frames).unwrap(), 100.0);
    assert_eq!(background_consistency(&m, &frames).unwrap(), 100.0);
    assert_eq!(temporal_flickering(&frames).unwrap(), 100.0);
    assert_eq!(video_similarity(&m, &frames, &frames).unwrap(), 100.0);
    assert!(video_similarity(&m, &frames, &frames[..4]).is_err());
    assert!(subject_consistency(&m, &frames[..1]).is_err());
}

#[test]
fn missing_perceptual_capability_is_skipped() {
    let m = MockProvider::new(MockConfig {
        disabled: [Capability::EmbedPerceptual].into(),
        ..MockConfig::default()
    });
    let f = common::object_frame("mug", 0);
    let v = to_metric(MetricName::I2vBackground, i2v_background(&m, &f, &[f.clone()]));
    assert_eq!(v.status, MetricStatus::Skipped);
    let v = to_metric(MetricName::I2vSubject, i2v_subject(&m, &f, &[f.clone()]));
    assert_eq!(v.value, Some(100.0));
}

/// Answers global requests with patch-object features.
struct Aliased(MockProvider);

impl ModelProvider for Aliased {
    fn health(&self) -> Result<Health> {
        self.0.health()
    }
    fn embed(&self, kind: EmbeddingKind, images: &[FrameImage]) -> Result<Vec<EmbeddingVector>> {
        let _ = kind;
        self.0.embed(EmbeddingKind::PatchObject, images)
    }
}

#[test]
fn background_equals_subject_under_aliasing() {
    let m = Aliased(MockProvider::default());
    let frames: Vec<_> = (0..6).map(|t| common::object_frame(if t < 3 { "mug" } else { "vase" }, t)).collect();
    let s = subject_consistency(&m, &frames).unwrap();
    let b = background_consistency(&m, &frames).unwrap();
    assert_eq!(s, b);
    assert!(s < 100.0);
}

#[test]
fn flickering_exact_values() {
    let black = FrameImage::solid(8, 8, [0, 0, 0]);
    let white = FrameImage::solid(8, 8, [255, 255, 255]);
    assert_eq!(temporal_flickering(&[black.clone(), white.clone(), black.clone()]).unwrap(), 0.0);
    let g = FrameImage::solid(8, 8, [100, 100, 100]);
    let g1 = FrameImage::solid(8, 8, [101, 101, 101]);
    let v = temporal_flickering(&[g, g1]).unwrap();
    assert!((v - 100.0 * (1.0 - 1.0 / 255.0)).abs() < 1e-12);
    assert!((v - 99.6078).abs() < 1e-4);
    assert!(temporal_flickering(&[black, FrameImage::solid(4, 4, [0; 3])]).is_err());
}

proptest! {
    #[test]
    fn flickering_ignores_channel_permutation(seed in any::<u64>(), perm in Just([0usize, 1, 2]).prop_shuffle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<_> = (0..4).map(|_| FrameImage::from_fn(6, 5, |_, _| [rng.random(), rng.random(), rng.random()])).collect();
        let permuted: Vec<_> = frames
            .iter()
            .map(|f| FrameImage::from_fn(6, 5, |x, y| {
                let p = f.pixel(x, y);
                [p[perm[0]], p[perm[1]], p[perm[2]]]
            }))
            .collect();
        prop_assert_eq!(temporal_flickering(&frames).unwrap(), temporal_flickering(&permuted).unwrap());
    }
}

fn det(label: &str, x0: u32, y0: u32, x1: u32, y1: u32, score: f64) -> Detection {
    Detection {
        label: label.into(),
        bbox: BoundingBox { x0, y0, x1, y1 },
        score,
    }
}

#[test]
fn dedup_cases() {
    let same = dedup_instances(&[det("Mug", 0, 0, 10, 10, 0.5), det("mug ", 0, 0, 10, 10, 0.9)]);
    assert_eq!(same.len(), 1);
    assert_eq!(same[0].score, 0.9);
    assert_eq!(same[0].label, "mug");
    // IoU 0.5
    let apart = dedup_instances(&[det("mug", 0, 0, 10, 10, 0.5), det("mug", 0, 0, 10, 5, 0.9)]);
    assert_eq!(apart.len(), 2);
    let labels = dedup_instances(&[det("mug", 0, 0, 10, 10, 0.5), det("vase", 0, 0, 10, 10, 0.9)]);
    assert_eq!(labels.len(), 2);
}

/// Kept iff no higher-priority kept detection merges with it.
fn oracle_dedup(d: &[Detection]) -> Vec<usize> {
    let before = |a: usize, b: usize| d[a].score > d[b].score || (d[a].score == d[b].score && a < b);
    let matches = |a: usize, b: usize| {
        normalize_label(&d[a].label) == normalize_label(&d[b].label) && d[a].bbox.iou(&d[b].bbox) >= 0.9
    };
    let mut kept = vec![None::<bool>; d.len()];
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..d.len() {
            if kept[i].is_some() {
                continue;
            }
            let higher: Vec<usize> = (0..d.len()).filter(|&j| j != i && before(j, i) && matches(j, i)).collect();
            if higher.iter().any(|&j| kept[j] == Some(true)) {
                kept[i] = Some(false);
                changed = true;
            } else if higher.iter().all(|&j| kept[j] == Some(false)) {
                kept[i] = Some(true);
                changed = true;
            }
        }
    }
    (0..d.len()).filter(|&i| kept[i] == Some(true)).collect()
}

#[test]
fn dedup_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.random_range(1..12);
        let d: Vec<_> = (0..n)
            .map(|_| {
                let x0 = rng.random_range(0..3);
                let y0 = rng.random_range(0..3);
                let w = rng.random_range(18..21);
                let label = ["mug", "MUG", "vase"][rng.random_range(0..3)];
                det(label, x0, y0, x0 + w, y0 + 20, rng.random_range(0..4) as f64 / 4.0)
            })
            .collect();
        let got: Vec<_> = dedup_instances(&d).into_iter().map(|x| (x.bbox, x.score)).collect();
        let want: Vec<_> = oracle_dedup(&d).into_iter().map(|i| (d[i].bbox, d[i].score)).collect();
        assert_eq!(got, want);
    }
}

fn keyframes(label: &str) -> Vec<(usize, FrameImage)> {
    (0..5).map(|i| (i * 10, common::object_frame(label, i))).collect()
}

#[test]
fn object_similarity_all_found_and_all_missed() {
    let m = MockProvider::new(MockConfig {
        identity_noise: 0.0,
        ..MockConfig::default()
    });
    let tags = vec!["mug".to_string(), "lamp".to_string()];
    let ref_frames: Vec<_> = (0..3).map(|i| common::object_frame("mug", i)).collect();
    let mut refs = reference_embeddings(&m, &ref_frames, &tags).unwrap();
    assert_eq!(refs["mug"].len(), 3);
    assert!(refs["lamp"].is_empty());

    let p = ObjectSimilarityParams::default();
    let found = object_similarity(&m, &refs, &keyframes("mug"), &tags[..1], &p).unwrap();
    assert_eq!(found.score, Some(100.0));
    assert_eq!(found.cells.len(), 5);

    // Lamp references exist, but no generated keyframe shows a lamp.
    refs.insert("lamp".into(), vec![m.embed_one(EmbeddingKind::PatchObject, &common::object_frame("lamp", 0))]);
    let missed = object_similarity(&m, &refs, &keyframes("mug"), &tags[1..], &p).unwrap();
    assert_eq!(missed.score, Some(10.0));
    assert_eq!(missed.misses(), 5);
    assert_eq!(missed.rescore(0.5), Some(50.0));

    let mixed = object_similarity(&m, &refs, &keyframes("mug"), &tags, &p).unwrap();
    assert!((mixed.score.unwrap() - 55.0).abs() < 1e-9);

    let unref = object_similarity(&m, &BTreeMap::new(), &keyframes("mug"), &tags, &p).unwrap();
    assert_eq!(unref.score, None);
    assert_eq!(unref.unreferenced, tags);
}

#[test]
fn object_similarity_penalty_must_be_open_unit() {
    let m = MockProvider::default();
    for penalty in [0.0, 1.0, -0.2] {
        let p = ObjectSimilarityParams {
            penalty,
            ..Default::default()
        };
        let err = object_similarity(&m, &BTreeMap::new(), &keyframes("mug"), &["mug".into()], &p).unwrap_err();
        assert_eq!(err.code(), "CONFIG_ERROR");
    }
}

#[test]
fn provider_failures_become_error_cells() {
    let inner = MockProvider::default();
    let tags = vec!["mug".to_string()];
    let refs = reference_embeddings(&inner, &[common::object_frame("mug", 0)], &tags).unwrap();
    // Each keyframe costs three calls: detect, segment and embed.
    let p = ObjectSimilarityParams::default();
    let one_bad = FailAfter::new(&inner, 12);
    let r = object_similarity(&one_bad, &refs, &keyframes("mug"), &tags, &p).unwrap();
    assert_eq!(r.cells.iter().filter(|c| matches!(c.outcome, CellOutcome::Error { .. })).count(), 1);
    assert!(r.score.is_some());
    let two_bad = FailAfter::new(&inner, 9);
    let r = object_similarity(&two_bad, &refs, &keyframes("mug"), &tags, &p).unwrap();
    assert_eq!(r.score, None);
}

fn cell(outcome: CellOutcome) -> ObjectCell {
    ObjectCell {
        frame: 0,
        tag: "t".into(),
        outcome,
    }
}

proptest! {
    #[test]
    fn penalty_monotonicity(scores in prop::collection::vec(prop::option::of(0.0f64..1.0), 1..25)) {
        let cells: Vec<_> = scores
            .iter()
            .map(|s| cell(match s {
                Some(score) => CellOutcome::Found { score: *score },
                None => CellOutcome::Miss,
            }))
            .collect();
        let low = score_cells(&cells, 0.1).unwrap();
        let high = score_cells(&cells, 0.5).unwrap();
        let missed = scores.iter().any(|s| s.is_none());
        prop_assert!(high >= low);
        prop_assert_eq!(high > low, missed);
        if scores.iter().all(|s| s.is_none()) {
            prop_assert_eq!(low, 10.0);
        }
    }
}

#[test]
fn error_share_threshold() {
    let err = || {
        cell(CellOutcome::Error {
            code: "X".into(),
            message: String::new(),
        })
    };
    let found = || cell(CellOutcome::Found { score: 0.8 });
    let mut cells = vec![err(), found(), found(), found(), found()];
    assert!((score_cells(&cells, 0.1).unwrap() - 80.0).abs() < 1e-9);
    cells.push(err());
    assert_eq!(score_cells(&cells, 0.1), None);
}
