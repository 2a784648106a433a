//! Manifest-driven execution of both filter cascades.
//!
//! Work is processed in chunks: per-clip results are computed on a worker
//! pool and appended in manifest order once the chunk finishes, so two runs
//! over the same corpus write byte-identical manifests. A failed task
//! leaves its clip pending and is reported in the summary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::*;
use crate::error::{Error, Result};
use crate::ingest::decode::{asset_id_for, convert_image_sequence, sequence_files};
use crate::ingest::{laplacian_variance, luminance_mean, FrameDecoder, FramePlan, FrameSource, Probe};
use crate::model::blob::{decode_embedding, encode_embedding};
use crate::model::{
    BlobStore, ClipRecord, CurationVerdict, Decision, EmbeddingKind, EmbeddingVector, FrameRange, Manifest, ManifestState,
    MediaKind, Md5Hex, Stage,
};
use crate::providers::ModelProvider;

const VIDEO_EXTENSIONS: [&str; 7] = ["rvid", "mp4", "mov", "mkv", "avi", "webm", "m4v"];
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
const EMBEDDING_BLOB: &str = "embed_global";

/// One task that did not produce a verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageError {
    pub clip_id: String,
    pub stage: Stage,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CurateSummary {
    pub assets: usize,
    pub clips: usize,
    pub rejected: BTreeMap<Stage, usize>,
    pub split: usize,
    pub segments: usize,
    pub kept: usize,
    pub pending: BTreeMap<Stage, usize>,
    pub statistics: Vec<CorpusStatistic>,
    pub errors: Vec<StageError>,
}

impl CurateSummary {
    /// Work is left over, typically after a provider outage.
    pub fn is_degraded(&self) -> bool {
        !self.errors.is_empty() || self.pending.values().any(|&n| n > 0)
    }
}

/// Media files and `*.seq` sequence directories under `corpus`, in sorted order.
pub fn discover_assets(corpus: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(corpus)
        .map_err(|e| Error::io(corpus, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(corpus, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.starts_with('.') {
            continue;
        }
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if path.is_dir() {
            if ext == "seq" {
                out.push(path);
            } else {
                out.extend(discover_assets(&path)?);
            }
        } else if VIDEO_EXTENSIONS.contains(&ext.as_str()) || IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            out.push(path);
        }
    }
    Ok(out)
}

/// Runs the curation cascades against one manifest.
pub struct Curator<'a> {
    pub manifest: &'a Manifest,
    pub decoder: &'a dyn FrameDecoder,
    pub provider: &'a dyn ModelProvider,
    pub thresholds: CurationThresholds,
    /// Directory of outlier exemplar images for the image cascade.
    pub outlier_gallery: Option<PathBuf>,
    pool: rayon::ThreadPool,
    chunk: usize,
}

enum SplitOutcome {
    Keep(CurationVerdict),
    Split(Vec<ClipRecord>, CurationVerdict),
}

impl<'a> Curator<'a> {
    pub fn new(
        manifest: &'a Manifest,
        decoder: &'a dyn FrameDecoder,
        provider: &'a dyn ModelProvider,
        thresholds: CurationThresholds,
        workers: usize,
    ) -> Result<Self> {
        thresholds.validate()?;
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Curator {
            manifest,
            decoder,
            provider,
            thresholds,
            outlier_gallery: None,
            pool,
            chunk: workers * 4,
        })
    }

    fn work_dir(&self) -> PathBuf {
        self.manifest.path().parent().unwrap_or(Path::new(".")).to_path_buf()
    }

    fn blobs(&self) -> BlobStore {
        BlobStore::beside(self.manifest.path())
    }

    /// Maps `f` over `items` on the pool, chunk by chunk, handing each
    /// chunk's results to `commit` in input order.
    fn chunked<T: Sync, R: Send>(
        &self,
        items: &[T],
        f: impl Fn(&T) -> R + Sync,
        mut commit: impl FnMut(&T, R) -> Result<()>,
    ) -> Result<()> {
        for chunk in items.chunks(self.chunk) {
            let results: Vec<R> = self.pool.install(|| chunk.par_iter().map(&f).collect());
            for (item, r) in chunk.iter().zip(results) {
                commit(item, r)?;
            }
        }
        Ok(())
    }

    pub fn run(&self, corpus: Option<&Path>) -> Result<CurateSummary> {
        let mut errors = Vec::new();
        if let Some(dir) = corpus {
            self.ingest(dir, &mut errors)?;
        }
        self.validity()?;
        self.duration_resolution()?;
        self.statistics(&mut errors)?;
        let mut statistics = Vec::new();
        statistics.extend(self.barrier(Stage::Brightness, &mut errors)?);
        statistics.extend(self.barrier(Stage::Blur, &mut errors)?);
        self.shot_split(&mut errors)?;
        self.aesthetics(&mut errors)?;
        self.dedup()?;
        self.ocr(&mut errors)?;
        self.outlier(&mut errors)?;
        Ok(self.summarize(statistics, errors))
    }

    fn summarize(&self, statistics: Vec<CorpusStatistic>, errors: Vec<StageError>) -> CurateSummary {
        self.manifest.with_state(|s| {
            let split = s.decision_counts(Decision::Split).values().sum();
            let asset_ids: BTreeSet<&str> = s
                .clips()
                .iter()
                .map(|c| c.asset_id.as_str())
                .chain(s.rejected_assets.iter().map(|(a, _)| a.asset_id.as_str()))
                .collect();
            CurateSummary {
                assets: asset_ids.len(),
                clips: s.len(),
                rejected: s.decision_counts(Decision::Reject),
                split,
                segments: s.clips().iter().filter(|c| c.parent_clip_id.is_some()).count(),
                kept: s.clips().iter().filter(|c| c.is_fully_kept()).count(),
                pending: Stage::ALL
                    .iter()
                    .map(|st| (*st, s.pending(*st).len()))
                    .filter(|(_, n)| *n > 0)
                    .collect(),
                statistics,
                errors,
            }
        })
    }

    fn pending(&self, stage: Stage) -> Vec<ClipRecord> {
        self.manifest
            .with_state(|s| s.pending(stage).into_iter().cloned().collect())
    }

    fn ingest(&self, corpus: &Path, errors: &mut Vec<StageError>) -> Result<()> {
        let known: BTreeSet<String> = self.manifest.with_state(|s| {
            s.clips()
                .iter()
                .map(|c| c.asset_id.clone())
                .chain(s.rejected_assets.iter().map(|(a, _)| a.asset_id.clone()))
                .collect()
        });
        let paths: Vec<PathBuf> = discover_assets(corpus)?
            .into_iter()
            .filter(|p| !known.contains(&asset_id_for(p)))
            .collect();
        let converted = self.work_dir().join("converted");
        self.chunked(
            &paths,
            |path| -> Result<Probe> { self.decoder.probe(path) },
            |path, probe| {
                let probe = match probe {
                    Ok(p) => p,
                    Err(e) => {
                        errors.push(StageError {
                            clip_id: asset_id_for(path),
                            stage: Stage::Validity,
                            code: e.code().into(),
                            message: e.to_string(),
                        });
                        return Ok(());
                    }
                };
                let probed = match probe {
                    Probe::Rejected { asset, verdict } => return self.manifest.append_rejected_asset(asset, verdict),
                    Probe::Valid(p) => p,
                };
                let mut asset = probed.asset.clone();
                let stream = probed.stream;
                let (source_path, media_kind) = match asset.kind {
                    MediaKind::ImageSequence => {
                        let out = converted.join(format!("{}.rvid", asset.asset_id));
                        std::fs::create_dir_all(&converted).map_err(|e| Error::io(&converted, e))?;
                        let fps = (stream.fps.round().max(1.0) as u32, 1);
                        convert_image_sequence(&asset.source_path, &out, fps)?;
                        debug_assert_eq!(sequence_files(&asset.source_path)?.len(), stream.frame_count);
                        (out, MediaKind::Video)
                    }
                    k => (asset.source_path.clone(), k),
                };
                let range = FrameRange {
                    start: 0,
                    end: stream.frame_count - 1,
                };
                let clip_id = match media_kind {
                    MediaKind::Image => ClipRecord::derive_id(&Md5Hex::of_bytes(asset.asset_id.as_bytes()), range),
                    _ => ClipRecord::derive_id(&asset.checksum_md5, range),
                };
                if let Some(existing) = self.manifest.with_state(|s| s.get(&clip_id).map(|c| c.asset_id.clone())) {
                    asset.kind = media_kind;
                    let verdict = CurationVerdict::reject(Stage::Validity, format!("same content as asset {existing}"));
                    return self.manifest.append_rejected_asset(asset, verdict);
                }
                self.manifest.append_clip(ClipRecord {
                    clip_id,
                    asset_id: asset.asset_id.clone(),
                    checksum_md5: asset.checksum_md5.clone(),
                    source_path,
                    media_kind,
                    frame_range: range,
                    frame_count: stream.frame_count,
                    width: stream.width,
                    height: stream.height,
                    fps: stream.fps,
                    parent_clip_id: None,
                    stage_verdicts: Vec::new(),
                    captions: None,
                    tags: None,
                    scores: None,
                })
            },
        )
    }

    /// Clips only enter the manifest after a successful probe.
    fn validity(&self) -> Result<()> {
        for clip in self.pending(Stage::Validity) {
            let reason = format!("{} frames, {}x{}", clip.frame_count, clip.width, clip.height);
            self.manifest
                .append_verdict(&clip.clip_id, CurationVerdict::keep(Stage::Validity, reason))?;
        }
        Ok(())
    }

    fn duration_resolution(&self) -> Result<()> {
        let t = &self.thresholds;
        for clip in self.pending(Stage::DurationResolution) {
            let v = gate_duration_resolution(clip.frame_count, clip.width, clip.height, t.min_frames, t.min_side);
            self.manifest.append_verdict(&clip.clip_id, v)?;
        }
        Ok(())
    }

    /// Mean luma and mean Laplacian variance over a uniform plan, persisted
    /// before either barrier runs.
    fn statistics(&self, errors: &mut Vec<StageError>) -> Result<()> {
        let todo: Vec<ClipRecord> = self.manifest.with_state(|s| {
            s.pending(Stage::Brightness)
                .into_iter()
                .filter(|c| {
                    !s.statistics.contains_key(&(c.clip_id.clone(), Stage::Brightness))
                        || !s.statistics.contains_key(&(c.clip_id.clone(), Stage::Blur))
                })
                .cloned()
                .collect()
        });
        let k = self.thresholds.statistic_frames;
        self.chunked(
            &todo,
            |clip| -> Result<(f64, f64)> {
                let plan = FramePlan::uniform(clip.frame_count, k.min(clip.frame_count))?;
                let frames = self.decoder.decode(&FrameSource::from_clip(clip), &plan)?;
                let n = frames.len() as f64;
                let luma = frames.iter().map(luminance_mean).sum::<f64>() / n;
                let blur = frames.iter().map(laplacian_variance).sum::<f64>() / n;
                Ok((luma, blur))
            },
            |clip, r| match r {
                Ok((luma, blur)) => {
                    let have = |st| self.manifest.with_state(|s| s.statistics.contains_key(&(clip.clip_id.clone(), st)));
                    if !have(Stage::Brightness) {
                        self.manifest.append_statistic(&clip.clip_id, Stage::Brightness, luma)?;
                    }
                    if !have(Stage::Blur) {
                        self.manifest.append_statistic(&clip.clip_id, Stage::Blur, blur)?;
                    }
                    Ok(())
                }
                Err(e) => {
                    push_error(errors, clip, Stage::Brightness, &e);
                    Ok(())
                }
            },
        )
    }

    /// Corpus percentile barrier. The population is every clip that reached
    /// `stage`, so verdicts written before an interruption and after it use
    /// the same cuts.
    fn barrier(&self, stage: Stage, errors: &mut Vec<StageError>) -> Result<Option<CorpusStatistic>> {
        let previous = match stage {
            Stage::Brightness => Stage::DurationResolution,
            _ => Stage::Brightness,
        };
        let (values, missing, pending) = self.manifest.with_state(|s: &ManifestState| {
            let mut values = BTreeMap::new();
            let mut missing = Vec::new();
            // Split segments inherit their parent's statistics and verdicts.
            for c in s.clips().iter().filter(|c| c.parent_clip_id.is_none() && reached(c, previous)) {
                match s.statistics.get(&(c.clip_id.clone(), stage)) {
                    Some(v) => {
                        values.insert(c.clip_id.clone(), *v);
                    }
                    None => missing.push(c.clip_id.clone()),
                }
            }
            let pending: Vec<String> = s.pending(stage).iter().map(|c| c.clip_id.clone()).collect();
            (values, missing, pending)
        });
        if !missing.is_empty() {
            for id in missing {
                errors.push(StageError {
                    clip_id: id,
                    stage,
                    code: "PRECONDITION_FAILED".into(),
                    message: format!("{stage} barrier waits for this clip's statistic"),
                });
            }
            return Ok(None);
        }
        if values.is_empty() {
            return Ok(None);
        }
        let t = &self.thresholds;
        let (low, high) = match stage {
            Stage::Brightness => (t.brightness_low_pct, t.brightness_high_pct),
            _ => (t.blur_low_pct, if t.blur_prune_top { t.blur_high_pct } else { 0.0 }),
        };
        let (kept, stat) = percentile_prune(&values, stage, low, high);
        for id in pending {
            let v = values[&id];
            let keep = kept.contains(&id);
            let threshold = if v < stat.low_cut { stat.low_cut } else { stat.high_cut };
            let reason = format!("value {v:.4}, cuts [{:.4}, {:.4}]", stat.low_cut, stat.high_cut);
            self.manifest
                .append_verdict(&id, CurationVerdict::gate(stage, keep, v, threshold, reason))?;
        }
        Ok(Some(stat))
    }

    fn shot_split(&self, errors: &mut Vec<StageError>) -> Result<()> {
        let todo = self.pending(Stage::ShotSplit);
        self.chunked(
            &todo,
            |clip| self.split_one(clip),
            |clip, r| match r {
                Ok(SplitOutcome::Keep(v)) => self.manifest.append_verdict(&clip.clip_id, v),
                Ok(SplitOutcome::Split(children, v)) => {
                    for child in children {
                        let exists = self.manifest.with_state(|s| s.get(&child.clip_id).is_some());
                        if !exists {
                            self.manifest.append_clip(child)?;
                        }
                    }
                    self.manifest.append_verdict(&clip.clip_id, v)
                }
                Err(e) => {
                    push_error(errors, clip, Stage::ShotSplit, &e);
                    Ok(())
                }
            },
        )
    }

    fn split_one(&self, clip: &ClipRecord) -> Result<SplitOutcome> {
        let t = &self.thresholds;
        let frames = self
            .decoder
            .decode(&FrameSource::from_clip(clip), &FramePlan::all(clip.frame_count)?)?;
        let scores = shot_boundary_scores(&frames);
        let mut segments = split_at_boundaries(&clip.clip_id, &scores, t.theta_cut);
        if segments.len() > 1 {
            let boundary_frames: Vec<_> = segments
                .windows(2)
                .flat_map(|w| [frames[w[0].end_frame].clone(), frames[w[1].start_frame].clone()])
                .collect();
            let embs = self.provider.embed(EmbeddingKind::Global, &boundary_frames)?;
            crate::providers::validate_embeddings(EmbeddingKind::Global, None, boundary_frames.len(), &embs)?;
            let pairs: Vec<_> = embs.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect();
            segments = stitch_segments(&segments, &pairs, t.theta_stitch)?;
        }
        let n = segments.len();
        if n == 1 {
            return Ok(SplitOutcome::Keep(
                CurationVerdict::keep(Stage::ShotSplit, "single shot").with_measurement(1.0, Some(t.theta_cut)),
            ));
        }
        let parent_key = Md5Hex::try_from(clip.clip_id.clone())?;
        let inherited: Vec<CurationVerdict> = clip
            .stage_verdicts
            .iter()
            .filter(|v| v.stage != Stage::DurationResolution)
            .cloned()
            .collect();
        let children = segments
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                let range = FrameRange {
                    start: clip.frame_range.start + seg.start_frame,
                    end: clip.frame_range.start + seg.end_frame,
                };
                let duration = gate_duration_resolution(seg.len(), clip.width, clip.height, t.min_frames, t.min_side);
                let mut verdicts: Vec<CurationVerdict> = inherited.iter().filter(|v| v.stage < Stage::DurationResolution).cloned().collect();
                let keep = duration.is_keep();
                verdicts.push(duration);
                if keep {
                    verdicts.extend(inherited.iter().filter(|v| v.stage > Stage::DurationResolution).cloned());
                    verdicts.push(
                        CurationVerdict::keep(Stage::ShotSplit, format!("segment {} of {n}", i + 1))
                            .with_measurement(1.0, Some(t.theta_cut)),
                    );
                }
                ClipRecord {
                    clip_id: ClipRecord::derive_id(&parent_key, range),
                    frame_range: range,
                    frame_count: seg.len(),
                    parent_clip_id: Some(clip.clip_id.clone()),
                    stage_verdicts: verdicts,
                    captions: None,
                    tags: None,
                    scores: None,
                    ..clip.clone()
                }
            })
            .collect();
        let verdict = CurationVerdict {
            stage: Stage::ShotSplit,
            decision: Decision::Split,
            measured_value: Some(n as f64),
            threshold_used: Some(t.theta_cut),
            reason: format!("{n} shots"),
        };
        Ok(SplitOutcome::Split(children, verdict))
    }

    fn aesthetics(&self, errors: &mut Vec<StageError>) -> Result<()> {
        let todo = self.pending(Stage::Aesthetics);
        let t = &self.thresholds;
        self.chunked(
            &todo,
            |clip| -> Result<CurationVerdict> {
                let plan = FramePlan::uniform(clip.frame_count, t.aesthetic_frames.min(clip.frame_count))?;
                let frames = self.decoder.decode(&FrameSource::from_clip(clip), &plan)?;
                let scores = self.provider.aesthetics(&frames)?;
                crate::providers::wire::check_scores(&scores, frames.len())?;
                aesthetic_gate(&scores, plan.len(), t.aesthetic_min)
            },
            |clip, r| match r {
                Ok(v) => self.manifest.append_verdict(&clip.clip_id, v),
                Err(e) => {
                    push_error(errors, clip, Stage::Aesthetics, &e);
                    Ok(())
                }
            },
        )
    }

    /// First occurrence by manifest order wins.
    fn dedup(&self) -> Result<()> {
        let (population, pending): (Vec<ClipRecord>, BTreeSet<String>) = self.manifest.with_state(|s| {
            let pop = s
                .clips()
                .iter()
                .filter(|c| c.media_kind == MediaKind::Image && c.verdict(Stage::Validity).is_some_and(|v| v.is_keep()))
                .cloned()
                .collect();
            let pending = s.pending(Stage::Dedup).iter().map(|c| c.clip_id.clone()).collect();
            (pop, pending)
        });
        let checksums: Vec<Md5Hex> = population.iter().map(|c| c.checksum_md5.clone()).collect();
        let kept: BTreeSet<usize> = dedup_md5(&checksums).into_iter().collect();
        for (i, clip) in population.iter().enumerate() {
            if !pending.contains(&clip.clip_id) {
                continue;
            }
            let v = if kept.contains(&i) {
                CurationVerdict::keep(Stage::Dedup, "first occurrence")
            } else {
                let first = population.iter().find(|c| c.checksum_md5 == clip.checksum_md5).expect("self matches");
                CurationVerdict::reject(Stage::Dedup, format!("md5 duplicate of {}", first.clip_id))
            };
            self.manifest.append_verdict(&clip.clip_id, v)?;
        }
        Ok(())
    }

    fn ocr(&self, errors: &mut Vec<StageError>) -> Result<()> {
        let todo = self.pending(Stage::Ocr);
        let max = self.thresholds.ocr_max_chars;
        self.chunked(
            &todo,
            |clip| -> Result<CurationVerdict> {
                let frames = self.decoder.decode(&FrameSource::from_clip(clip), &FramePlan::all(1)?)?;
                Ok(ocr_gate(self.provider.ocr(&frames[0])?.char_count, max))
            },
            |clip, r| match r {
                Ok(v) => self.manifest.append_verdict(&clip.clip_id, v),
                Err(e) => {
                    push_error(errors, clip, Stage::Ocr, &e);
                    Ok(())
                }
            },
        )
    }

    /// Gallery gate, then dominant-cluster retention within each item
    /// (images sharing a parent directory). Embeddings are persisted as
    /// blobs so a resumed run never embeds an image twice.
    fn outlier(&self, errors: &mut Vec<StageError>) -> Result<()> {
        let pending: BTreeSet<String> = self
            .pending(Stage::Outlier)
            .into_iter()
            .map(|c| c.clip_id)
            .collect();
        if pending.is_empty() {
            return Ok(());
        }
        let items: BTreeMap<PathBuf, Vec<ClipRecord>> = self.manifest.with_state(|s| {
            let mut items: BTreeMap<PathBuf, Vec<ClipRecord>> = BTreeMap::new();
            for c in s.clips().iter().filter(|c| reached(c, Stage::Ocr) && c.media_kind == MediaKind::Image) {
                let item = c.source_path.parent().unwrap_or(Path::new("")).to_path_buf();
                items.entry(item).or_default().push(c.clone());
            }
            items
        });
        let active: Vec<ClipRecord> = items
            .values()
            .filter(|members| members.iter().any(|c| pending.contains(&c.clip_id)))
            .flatten()
            .cloned()
            .collect();
        let blobs = self.blobs();
        let missing: Vec<ClipRecord> = active
            .iter()
            .filter(|c| self.manifest.with_state(|s| s.blob(&c.clip_id, EMBEDDING_BLOB).is_none()))
            .cloned()
            .collect();
        self.chunked(
            &missing,
            |clip| -> Result<EmbeddingVector> {
                let frames = self.decoder.decode(&FrameSource::from_clip(clip), &FramePlan::all(1)?)?;
                let e = self.provider.embed(EmbeddingKind::Global, &frames)?;
                crate::providers::validate_embeddings(EmbeddingKind::Global, None, 1, &e)?;
                Ok(e.into_iter().next().expect("one embedding"))
            },
            |clip, r| match r {
                Ok(e) => {
                    let hash = blobs.put(&encode_embedding(&e))?;
                    self.manifest.append_blob_ref(&clip.clip_id, EMBEDDING_BLOB, &hash)
                }
                Err(e) => {
                    push_error(errors, clip, Stage::Outlier, &e);
                    Ok(())
                }
            },
        )?;
        let gallery = match self.gallery_embeddings() {
            Ok(g) => g,
            Err(e) => {
                for id in &pending {
                    errors.push(StageError {
                        clip_id: id.clone(),
                        stage: Stage::Outlier,
                        code: e.code().into(),
                        message: format!("outlier gallery: {e}"),
                    });
                }
                return Ok(());
            }
        };
        let t = &self.thresholds;
        for members in items.values() {
            if !members.iter().any(|c| pending.contains(&c.clip_id)) {
                continue;
            }
            let mut embs = Vec::new();
            for c in members {
                match self.manifest.with_state(|s| s.blob(&c.clip_id, EMBEDDING_BLOB).map(str::to_string)) {
                    Some(h) => embs.push(decode_embedding(&blobs.get(&h)?)?),
                    None => break,
                }
            }
            if embs.len() != members.len() {
                continue;
            }
            let gate: Vec<CurationVerdict> = embs
                .iter()
                .map(|e| outlier_gallery_gate(e, &gallery, t.outlier_theta))
                .collect();
            let survivors: Vec<usize> = (0..members.len()).filter(|&i| gate[i].is_keep()).collect();
            let labels = if survivors.is_empty() {
                Vec::new()
            } else {
                let pts: Vec<EmbeddingVector> = survivors.iter().map(|&i| embs[i].clone()).collect();
                dbscan_cluster(&pts, t.dbscan_eps, t.dbscan_min_pts)
            };
            let (retained, _) = dominant_cluster_retain(&labels);
            let retained: BTreeSet<usize> = retained.into_iter().map(|k| survivors[k]).collect();
            for (i, clip) in members.iter().enumerate() {
                if !pending.contains(&clip.clip_id) {
                    continue;
                }
                let v = if !gate[i].is_keep() {
                    gate[i].clone()
                } else {
                    let label = labels[survivors.iter().position(|&s| s == i).expect("survivor")];
                    let keep = retained.contains(&i);
                    let reason = if keep {
                        format!("dominant cluster (label {label})")
                    } else {
                        format!("outside the dominant cluster (label {label})")
                    };
                    CurationVerdict {
                        stage: Stage::Outlier,
                        decision: if keep { Decision::Keep } else { Decision::Reject },
                        measured_value: gate[i].measured_value,
                        threshold_used: gate[i].threshold_used,
                        reason,
                    }
                };
                self.manifest.append_verdict(&clip.clip_id, v)?;
            }
        }
        Ok(())
    }

    /// Embeddings of the gallery images, cached beside the manifest.
    fn gallery_embeddings(&self) -> Result<Vec<EmbeddingVector>> {
        let Some(dir) = &self.outlier_gallery else {
            return Ok(Vec::new());
        };
        let cache = self.work_dir().join("cache").join("gallery");
        let mut out = Vec::new();
        for path in discover_assets(dir)?.into_iter().filter(|p| p.is_file()) {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let key = cache.join(format!("{}.emb", Md5Hex::of_bytes(&bytes)));
            if let Ok(b) = std::fs::read(&key) {
                out.push(decode_embedding(&b)?);
                continue;
            }
            let frames = self.decoder.decode_indices(&path, MediaKind::Image, &[0])?;
            let e = self.provider.embed(EmbeddingKind::Global, &frames)?;
            let e = e.into_iter().next().ok_or_else(|| Error::Malformed("no gallery embedding".into()))?;
            std::fs::create_dir_all(&cache).map_err(|err| Error::io(&cache, err))?;
            std::fs::write(&key, encode_embedding(&e)).map_err(|err| Error::io(&key, err))?;
            out.push(e);
        }
        Ok(out)
    }
}

/// Kept at `stage` and every stage before it.
fn reached(clip: &ClipRecord, stage: Stage) -> bool {
    let track = Stage::track(clip.media_kind);
    match track.iter().position(|s| *s == stage) {
        Some(pos) => track[..=pos].iter().all(|s| clip.verdict(*s).is_some_and(|v| v.is_keep())),
        None => false,
    }
}

fn push_error(errors: &mut Vec<StageError>, clip: &ClipRecord, stage: Stage, e: &Error) {
    tracing::warn!(clip = %clip.clip_id, %stage, "{e}");
    errors.push(StageError {
        clip_id: clip.clip_id.clone(),
        stage,
        code: e.code().into(),
        message: e.to_string(),
    });
}
