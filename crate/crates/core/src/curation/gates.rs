use crate::error::{Error, Result};
use crate::model::{CurationVerdict, EmbeddingVector, Md5Hex, Stage};

/// KEEP iff `frame_count >= min_frames` and the short side is at least `min_side`.
pub fn gate_duration_resolution(frame_count: usize, width: u32, height: u32, min_frames: usize, min_side: u32) -> CurationVerdict {
    let side = width.min(height);
    let keep = frame_count >= min_frames && side >= min_side;
    let reason = if keep {
        format!("{frame_count} frames, {width}x{height}")
    } else if frame_count < min_frames {
        format!("{frame_count} frames < {min_frames}")
    } else {
        format!("short side {side} < {min_side}")
    };
    let (measured, threshold) = if frame_count < min_frames {
        (frame_count as f64, min_frames as f64)
    } else {
        (side as f64, min_side as f64)
    };
    CurationVerdict::gate(Stage::DurationResolution, keep, measured, threshold, reason)
}

/// KEEP iff the mean frame score is at least `min_mean`.
pub fn aesthetic_gate(frame_scores: &[f64], expected_frames: usize, min_mean: f64) -> Result<CurationVerdict> {
    if frame_scores.len() != expected_frames {
        return Err(Error::DimensionMismatch {
            expected: expected_frames,
            actual: frame_scores.len(),
        });
    }
    let mean = frame_scores.iter().sum::<f64>() / frame_scores.len() as f64;
    Ok(CurationVerdict::gate(
        Stage::Aesthetics,
        mean >= min_mean,
        mean,
        min_mean,
        format!("mean aesthetic score {mean:.4}"),
    ))
}

/// KEEP iff at most `max_chars` characters were detected.
pub fn ocr_gate(char_count: u32, max_chars: u32) -> CurationVerdict {
    CurationVerdict::gate(
        Stage::Ocr,
        char_count <= max_chars,
        char_count as f64,
        max_chars as f64,
        format!("{char_count} characters detected"),
    )
}

/// REJECT iff the image matches any gallery entry with cosine `>= theta`.
pub fn outlier_gallery_gate(embedding: &EmbeddingVector, gallery: &[EmbeddingVector], theta: f64) -> CurationVerdict {
    if gallery.is_empty() {
        tracing::warn!("outlier gallery is empty; keeping image");
        return CurationVerdict::keep(Stage::Outlier, "empty outlier gallery");
    }
    let best = gallery.iter().map(|g| embedding.cosine(g)).fold(f64::NEG_INFINITY, f64::max);
    let keep = best < theta;
    CurationVerdict::gate(Stage::Outlier, keep, best, theta, format!("max gallery cosine {best:.4}"))
}

/// Indices of the first occurrence of every checksum, in input order.
pub fn dedup_md5(checksums: &[Md5Hex]) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    (0..checksums.len()).filter(|&i| seen.insert(&checksums[i])).collect()
}
