use crate::error::{Error, Result};
use crate::ingest::FrameImage;
use crate::model::cosine;
use crate::providers::{Capability, FeatureMap, GeometryResult, ModelProvider};

/// Minimum share of view-b pixels that must receive a warped feature.
pub const MIN_COVERAGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairScore {
    Scored { score: f64, coverage: f64 },
    Skipped { coverage: f64 },
}

impl PairScore {
    pub fn score(&self) -> Option<f64> {
        match self {
            PairScore::Scored { score, .. } => Some(*score),
            PairScore::Skipped { .. } => None,
        }
    }
}

fn contract(reason: String) -> Error {
    Error::ProviderContract {
        capability: Capability::Geometry,
        reason,
    }
}

/// Warps view-a features into view b through the pair geometry (pointmaps
/// in view-a's frame) with a nearest-depth z-buffer, then scores
/// `1 − mean cosine` over the covered pixels of view b.
pub fn met3r_pair_score(geometry: &GeometryResult, feat_a: &FeatureMap, feat_b: &FeatureMap) -> Result<PairScore> {
    geometry.validate()?;
    let [a, b] = geometry.views.as_slice() else {
        return Err(contract(format!("pair geometry has {} views", geometry.views.len())));
    };
    for (f, v) in [(feat_a, a), (feat_b, b)] {
        if (f.width, f.height) != (v.width, v.height) {
            return Err(Error::DimensionMismatch {
                expected: v.width * v.height,
                actual: f.width * f.height,
            });
        }
    }
    if feat_a.dim != feat_b.dim {
        return Err(Error::DimensionMismatch {
            expected: feat_a.dim,
            actual: feat_b.dim,
        });
    }
    let k = &b.intrinsics;
    let (w, h) = (b.width, b.height);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut source = vec![usize::MAX; w * h];
    for (i, p) in a.pointmap.iter().enumerate() {
        if !p.coords.iter().all(|c| c.is_finite()) || a.confidence[i] <= 0.0 {
            continue;
        }
        let q = b.pose.apply(p);
        if q.z <= 1e-12 {
            continue;
        }
        let u = k[(0, 0)] * q.x / q.z + k[(0, 1)] * q.y / q.z + k[(0, 2)];
        let v = k[(1, 1)] * q.y / q.z + k[(1, 2)];
        if !(u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64) {
            continue;
        }
        let j = v as usize * w + u as usize;
        if q.z < depth[j] {
            depth[j] = q.z;
            source[j] = i;
        }
    }
    let (ax, bx) = (a.width, w);
    let mut sum = 0.0;
    let mut covered = 0usize;
    for (j, &i) in source.iter().enumerate() {
        if i == usize::MAX {
            continue;
        }
        sum += cosine(feat_a.at(i % ax, i / ax), feat_b.at(j % bx, j / bx));
        covered += 1;
    }
    let coverage = covered as f64 / (w * h) as f64;
    if coverage < MIN_COVERAGE {
        return Ok(PairScore::Skipped { coverage });
    }
    Ok(PairScore::Scored {
        score: (1.0 - sum / covered as f64).clamp(0.0, 1.0),
        coverage,
    })
}

/// Features for both frames, bilinearly resized to image resolution.
pub fn pair_features(provider: &dyn ModelProvider, a: &FrameImage, b: &FrameImage) -> Result<(FeatureMap, FeatureMap)> {
    let maps = provider.embed_dense(&[a.clone(), b.clone()])?;
    let [fa, fb] = maps.as_slice() else {
        return Err(Error::ProviderContract {
            capability: Capability::EmbedPatchObject,
            reason: format!("{} feature maps for 2 images", maps.len()),
        });
    };
    Ok((
        fa.upsample(a.width() as usize, a.height() as usize),
        fb.upsample(b.width() as usize, b.height() as usize),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMet3r {
    /// `None` when every pair was skipped.
    pub score: Option<f64>,
    pub pairs: Vec<PairScore>,
}

/// Mean pair score over consecutive sampled frames.
pub fn video_met3r(provider: &dyn ModelProvider, frames: &[FrameImage]) -> Result<VideoMet3r> {
    if frames.len() < 2 {
        return Err(Error::PreconditionFailed(format!("MEt3R needs at least 2 frames, got {}", frames.len())));
    }
    let mut pairs = Vec::with_capacity(frames.len() - 1);
    for w in frames.windows(2) {
        let g = provider.geometry(w)?;
        let (fa, fb) = pair_features(provider, &w[0], &w[1])?;
        pairs.push(met3r_pair_score(&g, &fa, &fb)?);
    }
    let scored: Vec<f64> = pairs.iter().filter_map(|p| p.score()).collect();
    let score = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    Ok(VideoMet3r { score, pairs })
}
