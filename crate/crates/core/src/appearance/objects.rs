use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FrameImage;
use crate::model::{EmbeddingKind, EmbeddingVector};
use crate::providers::{BoundingBox, Detection, ModelProvider, RleMask};

/// IoU at or above which two same-label detections are one instance.
pub const MERGE_IOU: f64 = 0.9;
/// Keyframes sampled from the generated video.
pub const KEYFRAMES: usize = 5;
/// Share of ERROR cells above which the whole metric is ERROR.
pub const MAX_ERROR_SHARE: f64 = 0.2;
const MASK_FILL: [u8; 3] = [128, 128, 128];

/// A detected, segmented and embedded object in one keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub frame_index: usize,
    pub label: String,
    pub bbox: BoundingBox,
    pub mask: RleMask,
    pub embedding: EmbeddingVector,
}

pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Merges same-label detections with IoU ≥ 0.9, keeping the higher score.
/// Survivors stay in input order.
pub fn dedup_instances(detections: &[Detection]) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    // Highest score first; earlier input wins ties.
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    let labels: Vec<String> = detections.iter().map(|d| normalize_label(&d.label)).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let dup = kept
            .iter()
            .any(|&k| labels[k] == labels[i] && detections[k].bbox.iou(&detections[i].bbox) >= MERGE_IOU);
        if !dup {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept.into_iter()
        .map(|i| Detection {
            label: labels[i].clone(),
            ..detections[i].clone()
        })
        .collect()
}

/// The box cropped out of `image` with every pixel outside `mask` set to mid-gray.
pub fn masked_crop(image: &FrameImage, bbox: &BoundingBox, mask: &RleMask) -> Result<FrameImage> {
    if (mask.width, mask.height) != (image.width(), image.height()) {
        return Err(Error::DimensionMismatch {
            expected: (image.width() * image.height()) as usize,
            actual: (mask.width * mask.height) as usize,
        });
    }
    let bits = mask.to_bits()?;
    let w = image.width();
    Ok(FrameImage::from_fn(bbox.x1 - bbox.x0, bbox.y1 - bbox.y0, |x, y| {
        let (gx, gy) = (x + bbox.x0, y + bbox.y0);
        if bits[(gy * w + gx) as usize] {
            image.pixel(gx, gy)
        } else {
            MASK_FILL
        }
    }))
}

/// Detect, pick the best box, segment and embed one tag in one image.
/// `Ok(None)` when the tag is not found.
pub fn locate_instance(
    provider: &dyn ModelProvider,
    image: &FrameImage,
    frame_index: usize,
    tag: &str,
    detections: &[Detection],
) -> Result<Option<ObjectInstance>> {
    let tag = normalize_label(tag);
    let best = detections
        .iter()
        .filter(|d| normalize_label(&d.label) == tag && d.bbox.is_valid_in(image.width(), image.height()))
        .max_by(|a, b| a.score.total_cmp(&b.score));
    let Some(best) = best else { return Ok(None) };
    let mask = provider.segment(image, &best.bbox)?;
    if mask.area() == 0 {
        return Ok(None);
    }
    let crop = masked_crop(image, &best.bbox, &mask)?;
    let embedding = provider
        .embed(EmbeddingKind::PatchObject, &[crop])?
        .pop()
        .ok_or_else(|| Error::Malformed("no embedding returned".into()))?;
    Ok(Some(ObjectInstance {
        frame_index,
        label: tag,
        bbox: best.bbox,
        mask,
        embedding,
    }))
}

/// Reference embeddings per tag from the reference frames (and image).
pub fn reference_embeddings(
    provider: &dyn ModelProvider,
    frames: &[FrameImage],
    tags: &[String],
) -> Result<BTreeMap<String, Vec<EmbeddingVector>>> {
    let mut out: BTreeMap<String, Vec<EmbeddingVector>> = tags.iter().map(|t| (normalize_label(t), Vec::new())).collect();
    for (fi, frame) in frames.iter().enumerate() {
        let detections = dedup_instances(&provider.detect(frame, tags)?);
        for tag in tags {
            if let Some(inst) = locate_instance(provider, frame, fi, tag, &detections)? {
                out.get_mut(&inst.label).expect("tag present").push(inst.embedding);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceAggregate {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CellOutcome {
    Found { score: f64 },
    Miss,
    Error { code: String, message: String },
}

/// One (keyframe, tag) cell, exportable as a debug table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectCell {
    pub frame: usize,
    pub tag: String,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectSimilarity {
    /// `None` when more than 20% of cells failed or no tag had references.
    pub score: Option<f64>,
    pub cells: Vec<ObjectCell>,
    /// Tags left out because the reference had no instance of them.
    pub unreferenced: Vec<String>,
}

impl ObjectSimilarity {
    /// Recomputes the score for another penalty from the recorded cells.
    pub fn rescore(&self, penalty: f64) -> Option<f64> {
        score_cells(&self.cells, penalty)
    }

    pub fn misses(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome == CellOutcome::Miss).count()
    }
}

/// `100 · (Σ found + misses · penalty) / cells`, over non-error cells.
pub fn score_cells(cells: &[ObjectCell], penalty: f64) -> Option<f64> {
    let errors = cells.iter().filter(|c| matches!(c.outcome, CellOutcome::Error { .. })).count();
    let n = cells.len() - errors;
    if cells.is_empty() || n == 0 || errors as f64 > MAX_ERROR_SHARE * cells.len() as f64 {
        return None;
    }
    let (mut found, mut sum) = (0usize, 0.0);
    for c in cells {
        if let CellOutcome::Found { score } = c.outcome {
            found += 1;
            sum += score;
        }
    }
    let mean = if found == 0 { penalty } else { (sum + (n - found) as f64 * penalty) / n as f64 };
    Some(100.0 * mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectSimilarityParams {
    pub penalty: f64,
    pub keyframes: usize,
    pub aggregate: ReferenceAggregate,
}

impl Default for ObjectSimilarityParams {
    fn default() -> Self {
        ObjectSimilarityParams {
            penalty: 0.1,
            keyframes: KEYFRAMES,
            aggregate: ReferenceAggregate::Max,
        }
    }
}

impl ObjectSimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0 && self.penalty < 1.0) {
            return Err(Error::Config(format!("penalty {} must lie in (0, 1)", self.penalty)));
        }
        if self.keyframes == 0 {
            return Err(Error::Config("object keyframes must be >= 1".into()));
        }
        Ok(())
    }
}

fn error_cell(frame: usize, tag: &str, e: &Error) -> ObjectCell {
    ObjectCell {
        frame,
        tag: tag.to_string(),
        outcome: CellOutcome::Error {
            code: e.code().into(),
            message: e.to_string(),
        },
    }
}

/// Scores the generated keyframes against per-tag reference embeddings.
pub fn object_similarity(
    provider: &dyn ModelProvider,
    references: &BTreeMap<String, Vec<EmbeddingVector>>,
    keyframes: &[(usize, FrameImage)],
    tags: &[String],
    params: &ObjectSimilarityParams,
) -> Result<ObjectSimilarity> {
    params.validate()?;
    if tags.is_empty() {
        return Err(Error::PreconditionFailed("object similarity needs at least one tag".into()));
    }
    let mut used: Vec<String> = Vec::new();
    let mut unreferenced = Vec::new();
    for t in tags {
        let t = normalize_label(t);
        if used.contains(&t) || unreferenced.contains(&t) {
            continue;
        }
        if references.get(&t).is_some_and(|r| !r.is_empty()) {
            used.push(t);
        } else {
            unreferenced.push(t);
        }
    }
    let mut cells = Vec::with_capacity(keyframes.len() * used.len());
    for (fi, frame) in keyframes {
        let detections = match provider.detect(frame, &used) {
            Ok(d) => dedup_instances(&d),
            Err(e) => {
                cells.extend(used.iter().map(|t| error_cell(*fi, t, &e)));
                continue;
            }
        };
        for tag in &used {
            let outcome = match locate_instance(provider, frame, *fi, tag, &detections) {
                Ok(None) => CellOutcome::Miss,
                Ok(Some(inst)) => {
                    let refs = &references[tag];
                    let sims: Result<Vec<f64>> = refs.iter().map(|r| super::cosine(&inst.embedding, r)).collect();
                    match sims {
                        Ok(s) => CellOutcome::Found {
                            score: match params.aggregate {
                                ReferenceAggregate::Max => s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                                ReferenceAggregate::Mean => s.iter().sum::<f64>() / s.len() as f64,
                            },
                        },
                        Err(e) => error_cell(*fi, tag, &e).outcome,
                    }
                }
                Err(e) => error_cell(*fi, tag, &e).outcome,
            };
            cells.push(ObjectCell {
                frame: *fi,
                tag: tag.clone(),
                outcome,
            });
        }
    }
    Ok(ObjectSimilarity {
        score: score_cells(&cells, params.penalty),
        cells,
        unreferenced,
    })
}
