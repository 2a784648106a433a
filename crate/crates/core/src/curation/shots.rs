use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{gray_thumbnail, FrameImage};
use crate::model::EmbeddingVector;

pub const THUMBNAIL_SIZE: usize = 32;

/// A contiguous run of frames `[start_frame, end_frame]` of one clip.
///
/// `boundary_scores[k]` is the score of the transition from frame
/// `start_frame + k` to the next one; the last segment of a clip has no
/// outgoing transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub clip_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub boundary_scores: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Mean absolute difference of 32×32 grayscale thumbnails for every pair
/// of consecutive frames.
pub fn shot_boundary_scores(frames: &[FrameImage]) -> Vec<f64> {
    let thumbs: Vec<Vec<f64>> = frames.iter().map(|f| gray_thumbnail(f, THUMBNAIL_SIZE)).collect();
    thumbs
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).sum::<f64>() / w[0].len() as f64)
        .collect()
}

/// Transitions that start a new shot. Every maximal run of consecutive
/// scores above `theta_cut` contributes one boundary, at its (first)
/// maximum; an isolated spike is a run of one.
pub fn boundary_transitions(scores: &[f64], theta_cut: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < scores.len() {
        if scores[t] > theta_cut {
            let mut best = t;
            let mut end = t;
            while end < scores.len() && scores[end] > theta_cut {
                if scores[end] > scores[best] {
                    best = end;
                }
                end += 1;
            }
            out.push(best);
            t = end;
        } else {
            t += 1;
        }
    }
    out
}

/// Partitions a clip of `scores.len() + 1` frames at its boundaries.
pub fn split_at_boundaries(clip_id: &str, scores: &[f64], theta_cut: f64) -> Vec<Segment> {
    let frames = scores.len() + 1;
    let mut segments = Vec::new();
    let mut start = 0;
    let cuts = boundary_transitions(scores, theta_cut);
    for end in cuts.into_iter().chain([frames - 1]) {
        let outgoing = (end + 1).min(scores.len());
        segments.push(Segment {
            clip_id: clip_id.to_string(),
            start_frame: start,
            end_frame: end,
            boundary_scores: scores[start..outgoing].to_vec(),
        });
        start = end + 1;
    }
    segments
}

/// Merges adjacent segments left to right while the embeddings across
/// their shared boundary have cosine `>= theta_stitch`.
///
/// `boundary_pairs[i]` holds the embeddings of the last frame of segment
/// `i` and the first frame of segment `i + 1`.
pub fn stitch_segments(
    segments: &[Segment],
    boundary_pairs: &[(EmbeddingVector, EmbeddingVector)],
    theta_stitch: f64,
) -> Result<Vec<Segment>> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    if boundary_pairs.len() + 1 != segments.len() {
        return Err(Error::PreconditionFailed(format!(
            "{} boundary embedding pairs for {} segments",
            boundary_pairs.len(),
            segments.len()
        )));
    }
    let mut out = vec![segments[0].clone()];
    for (next, (a, b)) in segments[1..].iter().zip(boundary_pairs) {
        let current = out.last_mut().expect("non-empty");
        if a.cosine(b) >= theta_stitch {
            current.end_frame = next.end_frame;
            current.boundary_scores.extend_from_slice(&next.boundary_scores);
        } else {
            out.push(next.clone());
        }
    }
    Ok(out)
}
