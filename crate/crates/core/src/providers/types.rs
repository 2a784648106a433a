use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3};
use serde::{Deserialize, Serialize};

use super::Capability;
use crate::error::{Error, Result};
use crate::ingest::FrameImage;
use crate::model::RigidTransform;

/// Result of a health probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub capabilities: Vec<Capability>,
    #[serde(default)]
    pub versions: BTreeMap<String, String>,
}

impl Health {
    pub fn supports(&self, capability: Capability) -> bool {
        self.capabilities.contains(&capability)
    }
}

/// How to reach one capability of a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub capability: Capability,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_dim: Option<usize>,
    pub version: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl ProviderDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.capability.embedding_kind().is_some() && self.declared_dim.is_none() {
            return Err(Error::Config(format!("{} requires declared_dim", self.capability)));
        }
        if self.declared_dim == Some(0) {
            return Err(Error::Config(format!("{} declared_dim must be >= 1", self.capability)));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config(format!("{} timeout_ms must be > 0", self.capability)));
        }
        Ok(())
    }
}

/// A dense per-pixel feature map, row-major, `dim` values per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || dim == 0 {
            return Err(Error::Malformed("feature map dimensions must be positive".into()));
        }
        if data.len() != width * height * dim {
            return Err(Error::DimensionMismatch {
                expected: width * height * dim,
                actual: data.len(),
            });
        }
        Ok(FeatureMap { width, height, dim, data })
    }

    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.dim;
        &self.data[i..i + self.dim]
    }

    /// Bilinear resampling to `width × height`, aligning pixel centres.
    pub fn upsample(&self, width: usize, height: usize) -> FeatureMap {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut data = Vec::with_capacity(width * height * self.dim);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let (a, b, c, d) = (self.at(x0, y0), self.at(x1, y0), self.at(x0, y1), self.at(x1, y1));
                for k in 0..self.dim {
                    let top = a[k] * (1.0 - wx) + b[k] * wx;
                    let bottom = c[k] * (1.0 - wx) + d[k] * wx;
                    data.push(top * (1.0 - wy) + bottom * wy);
                }
            }
        }
        FeatureMap {
            width,
            height,
            dim: self.dim,
            data,
        }
    }
}

/// Reconstruction of one view: a pointmap in the first view's camera
/// frame, per-pixel confidence, intrinsics, and the pose taking first-view
/// coordinates into this view's camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGeometry {
    pub width: usize,
    pub height: usize,
    /// Row-major; misses are non-finite.
    pub pointmap: Vec<Point3<f64>>,
    pub confidence: Vec<f64>,
    pub intrinsics: Matrix3<f64>,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryResult {
    pub views: Vec<ViewGeometry>,
}

impl GeometryResult {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::ProviderContract {
                capability: Capability::Geometry,
                reason,
            })
        };
        if self.views.is_empty() {
            return fail("geometry result has no views".into());
        }
        for (i, v) in self.views.iter().enumerate() {
            let n = v.width * v.height;
            if n == 0 || v.pointmap.len() != n || v.confidence.len() != n {
                return fail(format!("view {i}: pointmap/confidence shapes disagree with {}x{}", v.width, v.height));
            }
            if v.confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return fail(format!("view {i}: confidence outside [0, 1]"));
            }
            let k = &v.intrinsics;
            let upper = k[(1, 0)] == 0.0 && k[(2, 0)] == 0.0 && k[(2, 1)] == 0.0;
            if !upper || !(k[(0, 0)] > 0.0) || !(k[(1, 1)] > 0.0) || k.iter().any(|x| !x.is_finite()) {
                return fail(format!("view {i}: intrinsics must be upper-triangular with positive focal entries"));
            }
            if !v.pose.is_valid(1e-6) {
                return fail(format!("view {i}: pose is not a proper rigid transform"));
            }
        }
        Ok(())
    }
}

/// Axis-aligned box with exclusive right/bottom edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn area(&self) -> u64 {
        (self.x1.saturating_sub(self.x0)) as u64 * (self.y1.saturating_sub(self.y0)) as u64
    }

    pub fn is_valid_in(&self, width: u32, height: u32) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0)) as u64;
        let iy = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0)) as u64;
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Binary mask as row-major run lengths, alternating background and
/// foreground and starting with background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn from_bits(width: u32, height: u32, bits: &[bool]) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in bits {
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        counts.push(run);
        RleMask { width, height, counts }
    }

    pub fn to_bits(&self) -> Result<Vec<bool>> {
        let n = self.width as usize * self.height as usize;
        let mut bits = Vec::with_capacity(n);
        for (i, &c) in self.counts.iter().enumerate() {
            bits.extend(std::iter::repeat(i % 2 == 1).take(c as usize));
        }
        if bits.len() != n {
            return Err(Error::Malformed(format!("mask runs cover {} of {n} pixels", bits.len())));
        }
        Ok(bits)
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn contained_in(&self, bbox: &BoundingBox) -> Result<bool> {
        let bits = self.to_bits()?;
        Ok(bits.iter().enumerate().all(|(i, &b)| {
            let (x, y) = ((i % self.width as usize) as u32, (i / self.width as usize) as u32);
            !b || (x >= bbox.x0 && x < bbox.x1 && y >= bbox.y0 && y < bbox.y1)
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub images: Vec<FrameImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrResult {
    pub char_count: u32,
    pub text: String,
}

/// Declared output dimension per embedding kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingDims {
    pub global: usize,
    pub patch_object: usize,
    pub perceptual: usize,
}

impl Default for EmbeddingDims {
    fn default() -> Self {
        EmbeddingDims {
            global: 512,
            patch_object: 384,
            perceptual: 256,
        }
    }
}

impl EmbeddingDims {
    pub fn get(&self, kind: crate::model::EmbeddingKind) -> usize {
        use crate::model::EmbeddingKind::*;
        match kind {
            Global => self.global,
            PatchObject => self.patch_object,
            Perceptual => self.perceptual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_mask_roundtrip() {
        let bits = [true, true, false, false, false, true, false, true, true];
        let m = RleMask::from_bits(3, 3, &bits);
        assert_eq!(m.counts, vec![0, 2, 3, 1, 1, 2]);
        assert_eq!(m.to_bits().unwrap(), bits);
        assert_eq!(m.area(), 5);
    }

    #[test]
    fn iou_of_boxes() {
        let a = BoundingBox { x0: 0, y0: 0, x1: 10, y1: 10 };
        let b = BoundingBox { x0: 5, y0: 0, x1: 15, y1: 10 };
        assert_eq!(a.iou(&a), 1.0);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn upsample_constant_and_identity() {
        let f = FeatureMap::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.upsample(2, 2), f);
        let up = f.upsample(4, 4);
        assert_eq!(up.at(0, 0), &[1.0]);
        assert_eq!(up.at(3, 3), &[4.0]);
        assert!((up.at(1, 0)[0] - 1.25).abs() < 1e-12);
    }
}
