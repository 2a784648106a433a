//! JSON bodies of the provider wire protocol and the response checks shared
//! by the HTTP client and the conformance suite.
//!
//! Images travel as base64 PNG (RGB24). Dense tensors travel as
//! `{shape, data}` where `data` is base64 little-endian `f32`.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::types::*;
use super::Capability;
use crate::error::{Error, Result};
use crate::ingest::FrameImage;
use crate::model::{EmbeddingKind, RigidTransform};

fn contract(capability: Capability, reason: impl Into<String>) -> Error {
    Error::ProviderContract {
        capability,
        reason: reason.into(),
    }
}

pub fn encode_image(frame: &FrameImage) -> Result<String> {
    let mut png = Vec::new();
    image::codecs::png::PngEncoder::new(&mut png)
        .write_image(frame.pixels(), frame.width(), frame.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::Malformed(format!("png encode: {e}")))?;
    Ok(B64.encode(png))
}

pub fn decode_image(data: &str) -> Result<FrameImage> {
    let bytes = B64.decode(data).map_err(|e| Error::Malformed(format!("image base64: {e}")))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Malformed(format!("image png: {e}")))?
        .to_rgb8();
    FrameImage::new(img.width(), img.height(), img.into_raw())
}

use image::ImageEncoder as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: String,
}

impl Tensor {
    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Tensor {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        Tensor {
            shape,
            data: B64.encode(bytes),
        }
    }

    /// Decodes the payload, checking it holds exactly `product(shape)` floats.
    pub fn to_f64(&self) -> Result<Vec<f64>> {
        let bytes = B64.decode(&self.data).map_err(|e| Error::Malformed(format!("tensor base64: {e}")))?;
        let n: usize = self.shape.iter().product();
        if bytes.len() != n * 4 {
            return Err(Error::DimensionMismatch {
                expected: n * 4,
                actual: bytes.len(),
            });
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub images: Vec<String>,
    pub kind: EmbeddingKind,
    /// Ask for per-pixel feature maps instead of one vector per image.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dense: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseMap {
    pub features: Tensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    #[serde(default)]
    pub embeddings: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub maps: Vec<DenseMap>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImagesRequest {
    pub images: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryResponse {
    pub pointmaps: Tensor,
    pub confidences: Tensor,
    pub intrinsics: Tensor,
    pub poses: Tensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectResponse {
    pub boxes: Vec<Detection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub rle_mask: RleMask,
    pub area: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub system: String,
    pub user: String,
    #[serde(default)]
    pub images: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcrRequest {
    pub image: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AestheticsResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub error: String,
}

pub fn geometry_to_wire(g: &GeometryResult) -> Result<GeometryResponse> {
    let first = g.views.first().ok_or_else(|| Error::Malformed("geometry without views".into()))?;
    let (w, h, v) = (first.width, first.height, g.views.len());
    if g.views.iter().any(|x| x.width != w || x.height != h) {
        return Err(Error::Malformed("all views of a geometry request must share a size".into()));
    }
    let mut pts = Vec::with_capacity(v * w * h * 3);
    let mut conf = Vec::with_capacity(v * w * h);
    let mut k = Vec::with_capacity(v * 9);
    let mut poses = Vec::with_capacity(v * 12);
    for view in &g.views {
        pts.extend(view.pointmap.iter().flat_map(|p| [p.x, p.y, p.z]));
        conf.extend_from_slice(&view.confidence);
        for r in 0..3 {
            for c in 0..3 {
                k.push(view.intrinsics[(r, c)]);
            }
        }
        for r in 0..3 {
            for c in 0..3 {
                poses.push(view.pose.rotation[(r, c)]);
            }
            poses.push(view.pose.translation[r]);
        }
    }
    Ok(GeometryResponse {
        pointmaps: Tensor::from_f64(vec![v, h, w, 3], &pts),
        confidences: Tensor::from_f64(vec![v, h, w], &conf),
        intrinsics: Tensor::from_f64(vec![v, 3, 3], &k),
        poses: Tensor::from_f64(vec![v, 3, 4], &poses),
    })
}

pub fn geometry_from_wire(resp: &GeometryResponse, expected_views: usize) -> Result<GeometryResult> {
    let cap = Capability::Geometry;
    let shape = &resp.pointmaps.shape;
    if shape.len() != 4 || shape[3] != 3 || shape[0] != expected_views {
        return Err(contract(cap, format!("pointmaps shape {shape:?} for {expected_views} views")));
    }
    let (v, h, w) = (shape[0], shape[1], shape[2]);
    let check = |t: &Tensor, want: Vec<usize>, name: &str| {
        if t.shape != want {
            Err(contract(cap, format!("{name} shape {:?}, expected {want:?}", t.shape)))
        } else {
            t.to_f64().map_err(|e| contract(cap, format!("{name}: {e}")))
        }
    };
    let pts = check(&resp.pointmaps, vec![v, h, w, 3], "pointmaps")?;
    let conf = check(&resp.confidences, vec![v, h, w], "confidences")?;
    let k = check(&resp.intrinsics, vec![v, 3, 3], "intrinsics")?;
    let poses = check(&resp.poses, vec![v, 3, 4], "poses")?;
    let n = w * h;
    let views = (0..v)
        .map(|i| {
            let pointmap = pts[i * n * 3..(i + 1) * n * 3]
                .chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect();
            let p = &poses[i * 12..(i + 1) * 12];
            ViewGeometry {
                width: w,
                height: h,
                pointmap,
                confidence: conf[i * n..(i + 1) * n].to_vec(),
                intrinsics: Matrix3::from_row_slice(&k[i * 9..(i + 1) * 9]),
                pose: RigidTransform::new(
                    Matrix3::new(p[0], p[1], p[2], p[4], p[5], p[6], p[8], p[9], p[10]),
                    Vector3::new(p[3], p[7], p[11]),
                ),
            }
        })
        .collect();
    let g = GeometryResult { views };
    g.validate()?;
    Ok(g)
}

pub fn dense_to_wire(map: &FeatureMap) -> DenseMap {
    DenseMap {
        features: Tensor::from_f64(vec![map.height, map.width, map.dim], &map.data),
    }
}

pub fn dense_from_wire(map: &DenseMap) -> Result<FeatureMap> {
    let cap = Capability::EmbedPatchObject;
    let s = &map.features.shape;
    if s.len() != 3 {
        return Err(contract(cap, format!("feature map shape {s:?} is not [h, w, dim]")));
    }
    let data = map.features.to_f64().map_err(|e| contract(cap, e.to_string()))?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(contract(cap, "feature map contains non-finite values"));
    }
    FeatureMap::new(s[1], s[0], s[2], data).map_err(|e| contract(cap, e.to_string()))
}

pub fn check_dense(maps: &[FeatureMap], images: &[FrameImage]) -> Result<()> {
    let cap = Capability::EmbedPatchObject;
    if maps.len() != images.len() {
        return Err(contract(cap, format!("{} feature maps for {} images", maps.len(), images.len())));
    }
    if maps.windows(2).any(|w| w[0].dim != w[1].dim) {
        return Err(contract(cap, "feature maps disagree on dim"));
    }
    Ok(())
}

pub fn check_detections(dets: &[Detection], image: &FrameImage, labels: &[String]) -> Result<()> {
    let cap = Capability::Detect;
    for d in dets {
        if !d.bbox.is_valid_in(image.width(), image.height()) {
            return Err(contract(cap, format!("box {:?} outside {}x{} image", d.bbox, image.width(), image.height())));
        }
        if !labels.contains(&d.label) {
            return Err(contract(cap, format!("label {:?} was not requested", d.label)));
        }
        if !(0.0..=1.0).contains(&d.score) {
            return Err(contract(cap, format!("score {} outside [0, 1]", d.score)));
        }
    }
    Ok(())
}

pub fn check_mask(mask: &RleMask, image: &FrameImage, bbox: &BoundingBox) -> Result<()> {
    let cap = Capability::Segment;
    if mask.width != image.width() || mask.height != image.height() {
        return Err(contract(cap, "mask size differs from the image"));
    }
    if mask.area() == 0 {
        return Err(contract(cap, "mask is empty"));
    }
    if !mask.contained_in(bbox).map_err(|e| contract(cap, e.to_string()))? {
        return Err(contract(cap, "mask extends outside its box"));
    }
    Ok(())
}

pub fn check_scores(scores: &[f64], expected: usize) -> Result<()> {
    if scores.len() != expected || scores.iter().any(|s| !s.is_finite()) {
        return Err(contract(
            Capability::Aesthetics,
            format!("{} scores for {expected} images", scores.len()),
        ));
    }
    Ok(())
}
