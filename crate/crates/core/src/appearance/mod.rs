//! Embedding-based identity metrics: the VBench-style suite, multi-view
//! Video Similarity and penalty-based Object Similarity.

mod objects;

pub use objects::*;

use crate::error::{Error, Result};
use crate::ingest::FrameImage;
use crate::model::{EmbeddingKind, EmbeddingVector, MetricName, MetricValue};
use crate::providers::ModelProvider;

/// Cosine of two embeddings of the same kind and dimension.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.kind() != v.kind() {
        return Err(Error::Malformed(format!("cosine between {:?} and {:?} embeddings", u.kind(), v.kind())));
    }
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    Ok(u.cosine(v))
}

fn percent_mean(values: impl IntoIterator<Item = Result<f64>>) -> Result<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values {
        sum += v?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::PreconditionFailed("nothing to average".into()));
    }
    Ok(100.0 * sum / n as f64)
}

/// `100 · mean_i cos(reference, others[i])`.
pub fn mean_cosine_to(reference: &EmbeddingVector, others: &[EmbeddingVector]) -> Result<f64> {
    percent_mean(others.iter().map(|o| cosine(reference, o)))
}

/// `100 · mean_i cos(e[i], e[i+1])`.
pub fn consecutive_mean_cosine(embeddings: &[EmbeddingVector]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::PreconditionFailed(format!("need at least 2 frames, got {}", embeddings.len())));
    }
    percent_mean(embeddings.windows(2).map(|w| cosine(&w[0], &w[1])))
}

/// `100 · mean_k cos(a[k], b[k])`.
pub fn paired_mean_cosine(a: &[EmbeddingVector], b: &[EmbeddingVector]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    percent_mean(a.iter().zip(b).map(|(x, y)| cosine(x, y)))
}

fn embed_with_reference(provider: &dyn ModelProvider, kind: EmbeddingKind, reference: &FrameImage, frames: &[FrameImage]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::PreconditionFailed("no frames".into()));
    }
    let mut batch = Vec::with_capacity(frames.len() + 1);
    batch.push(reference.clone());
    batch.extend_from_slice(frames);
    let e = provider.embed(kind, &batch)?;
    mean_cosine_to(&e[0], &e[1..])
}

/// Reference image against every frame, patch-object features.
pub fn i2v_subject(provider: &dyn ModelProvider, reference: &FrameImage, frames: &[FrameImage]) -> Result<f64> {
    embed_with_reference(provider, EmbeddingKind::PatchObject, reference, frames)
}

/// Reference image against every frame, perceptual features.
pub fn i2v_background(provider: &dyn ModelProvider, reference: &FrameImage, frames: &[FrameImage]) -> Result<f64> {
    embed_with_reference(provider, EmbeddingKind::Perceptual, reference, frames)
}

pub fn subject_consistency(provider: &dyn ModelProvider, frames: &[FrameImage]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::PreconditionFailed(format!("need at least 2 frames, got {}", frames.len())));
    }
    consecutive_mean_cosine(&provider.embed(EmbeddingKind::PatchObject, frames)?)
}

pub fn background_consistency(provider: &dyn ModelProvider, frames: &[FrameImage]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::PreconditionFailed(format!("need at least 2 frames, got {}", frames.len())));
    }
    consecutive_mean_cosine(&provider.embed(EmbeddingKind::Global, frames)?)
}

/// `100 · mean over consecutive pairs of (1 − MAE/255)`.
pub fn temporal_flickering(frames: &[FrameImage]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::PreconditionFailed(format!("need at least 2 frames, got {}", frames.len())));
    }
    let mut total = 0.0;
    for w in frames.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.width(), a.height()) != (b.width(), b.height()) {
            return Err(Error::DimensionMismatch {
                expected: a.pixels().len(),
                actual: b.pixels().len(),
            });
        }
        let diff: u64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| x.abs_diff(*y) as u64).sum();
        let mae = diff as f64 / a.pixels().len() as f64;
        total += 1.0 - mae / 255.0;
    }
    Ok(100.0 * total / (frames.len() - 1) as f64)
}

/// Index-paired global-feature similarity between reference and generated samples.
pub fn video_similarity(provider: &dyn ModelProvider, reference: &[FrameImage], generated: &[FrameImage]) -> Result<f64> {
    if reference.len() != generated.len() || reference.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: generated.len(),
        });
    }
    let r = provider.embed(EmbeddingKind::Global, reference)?;
    let g = provider.embed(EmbeddingKind::Global, generated)?;
    paired_mean_cosine(&r, &g)
}

/// Converts a metric computation into a report value. Missing capabilities
/// are SKIPPED, other failures ERROR. Cosine percentages below 0 are
/// reported as 0.
pub fn to_metric(metric: MetricName, result: Result<f64>) -> MetricValue {
    match result {
        Ok(v) => {
            let v = if metric.range() == crate::model::MetricRange::Percentage { v.clamp(0.0, 100.0) } else { v };
            MetricValue::ok(metric, v).unwrap_or_else(|e| MetricValue::error(e.to_string()))
        }
        Err(Error::Unsupported(c)) => MetricValue::skipped(format!("provider lacks {c}")),
        Err(e) => MetricValue::error(format!("{}: {e}", e.code())),
    }
}
