use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase 32-character MD5 hex digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Md5Hex(String);

impl Md5Hex {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        use md5::{Digest, Md5};
        Md5Hex(hex::encode(Md5::digest(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Md5Hex {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let ok = s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if ok {
            Ok(Md5Hex(s))
        } else {
            Err(Error::Malformed(format!("not a lowercase md5 digest: {s:?}")))
        }
    }
}

impl From<Md5Hex> for String {
    fn from(h: Md5Hex) -> String {
        h.0
    }
}

impl fmt::Display for Md5Hex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Video,
    Image,
    ImageSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaAsset {
    pub asset_id: String,
    pub source_path: PathBuf,
    pub kind: MediaKind,
    pub bytes: u64,
    pub checksum_md5: Md5Hex,
}

/// Curation stages in pipeline order. The derived `Ord` is the order in
/// which verdicts may be appended to a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validity,
    DurationResolution,
    Brightness,
    Blur,
    ShotSplit,
    Aesthetics,
    Dedup,
    Ocr,
    Outlier,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Validity,
        Stage::DurationResolution,
        Stage::Brightness,
        Stage::Blur,
        Stage::ShotSplit,
        Stage::Aesthetics,
        Stage::Dedup,
        Stage::Ocr,
        Stage::Outlier,
    ];

    pub const VIDEO_TRACK: [Stage; 6] = [
        Stage::Validity,
        Stage::DurationResolution,
        Stage::Brightness,
        Stage::Blur,
        Stage::ShotSplit,
        Stage::Aesthetics,
    ];

    pub const IMAGE_TRACK: [Stage; 4] = [Stage::Validity, Stage::Dedup, Stage::Ocr, Stage::Outlier];

    /// The stages a clip of `kind` passes through, in order.
    pub fn track(kind: MediaKind) -> &'static [Stage] {
        match kind {
            MediaKind::Video | MediaKind::ImageSequence => &Self::VIDEO_TRACK,
            MediaKind::Image => &Self::IMAGE_TRACK,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validity => "validity",
            Stage::DurationResolution => "duration_resolution",
            Stage::Brightness => "brightness",
            Stage::Blur => "blur",
            Stage::ShotSplit => "shot_split",
            Stage::Aesthetics => "aesthetics",
            Stage::Dedup => "dedup",
            Stage::Ocr => "ocr",
            Stage::Outlier => "outlier",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Keep,
    Reject,
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationVerdict {
    pub stage: Stage,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_used: Option<f64>,
    pub reason: String,
}

impl CurationVerdict {
    pub fn keep(stage: Stage, reason: impl Into<String>) -> Self {
        CurationVerdict {
            stage,
            decision: Decision::Keep,
            measured_value: None,
            threshold_used: None,
            reason: reason.into(),
        }
    }

    pub fn reject(stage: Stage, reason: impl Into<String>) -> Self {
        CurationVerdict {
            decision: Decision::Reject,
            ..Self::keep(stage, reason)
        }
    }

    /// Builds a KEEP/REJECT verdict from a boolean test on a scalar.
    pub fn gate(stage: Stage, keep: bool, measured: f64, threshold: f64, reason: impl Into<String>) -> Self {
        CurationVerdict {
            stage,
            decision: if keep { Decision::Keep } else { Decision::Reject },
            measured_value: Some(measured),
            threshold_used: Some(threshold),
            reason: reason.into(),
        }
    }

    pub fn with_measurement(mut self, measured: f64, threshold: Option<f64>) -> Self {
        self.measured_value = Some(measured);
        self.threshold_used = threshold;
        self
    }

    pub fn is_keep(&self) -> bool {
        self.decision == Decision::Keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Global,
    PatchObject,
    Perceptual,
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Global => "global",
            EmbeddingKind::PatchObject => "patch_object",
            EmbeddingKind::Perceptual => "perceptual",
        }
    }
}

/// `dot(a, b) / sqrt(dot(a, a) · dot(b, b))`, clamped to [-1, 1].
///
/// Written so identical inputs give exactly 1. Zero vectors give 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

/// A unit-normalized embedding of a declared kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmbedding", into = "RawEmbedding")]
pub struct EmbeddingVector {
    kind: EmbeddingKind,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawEmbedding {
    kind: EmbeddingKind,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm.
    pub fn normalized(kind: EmbeddingKind, mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Malformed("embedding must have dim >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("embedding contains non-finite values".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Malformed("cannot normalize a zero embedding".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector { kind, values })
    }

    /// Wraps values that must already have unit norm (within 1e-6).
    pub fn from_unit(kind: EmbeddingKind, values: Vec<f64>) -> Result<Self> {
        let dim = values.len();
        EmbeddingVector::try_from(RawEmbedding { kind, dim, values })
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        cosine(&self.values, &other.values)
    }
}

impl TryFrom<RawEmbedding> for EmbeddingVector {
    type Error = Error;

    fn try_from(raw: RawEmbedding) -> Result<Self> {
        if raw.dim != raw.values.len() {
            return Err(Error::DimensionMismatch {
                expected: raw.dim,
                actual: raw.values.len(),
            });
        }
        if raw.values.is_empty() || raw.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Malformed("embedding must be non-empty and finite".into()));
        }
        let v = EmbeddingVector {
            kind: raw.kind,
            values: raw.values,
        };
        if (v.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Malformed(format!("embedding is not unit norm ({})", v.norm())));
        }
        Ok(v)
    }
}

impl From<EmbeddingVector> for RawEmbedding {
    fn from(v: EmbeddingVector) -> Self {
        RawEmbedding {
            kind: v.kind,
            dim: v.values.len(),
            values: v.values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaptionFlag {
    AppearanceTooLong,
    TemporalTooLong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub appearance_caption: String,
    pub temporal_caption: String,
    pub appearance_frame_indices: Vec<usize>,
    pub temporal_frame_indices: Vec<usize>,
    #[serde(default)]
    pub constraint_flags: std::collections::BTreeSet<CaptionFlag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagProvenance {
    #[default]
    AppearanceCaption,
    TemporalCaption,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectTagSet {
    pub tags: Vec<String>,
    #[serde(default)]
    pub provenance: TagProvenance,
}

/// Inclusive frame range of a clip within its source asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FrameRange {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub asset_id: String,
    pub checksum_md5: Md5Hex,
    pub source_path: PathBuf,
    pub media_kind: MediaKind,
    pub frame_range: FrameRange,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_clip_id: Option<String>,
    #[serde(default)]
    pub stage_verdicts: Vec<CurationVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<CaptionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<ObjectTagSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<MetricReport>,
}

impl ClipRecord {
    /// Stable clip identity: MD5 of the asset checksum and the frame range.
    pub fn derive_id(checksum: &Md5Hex, range: FrameRange) -> String {
        Md5Hex::of_bytes(format!("{checksum}:{}-{}", range.start, range.end).as_bytes()).0
    }

    pub fn verdict(&self, stage: Stage) -> Option<&CurationVerdict> {
        self.stage_verdicts.iter().find(|v| v.stage == stage)
    }

    /// True once a REJECT or SPLIT verdict closes the clip's history.
    pub fn is_closed(&self) -> bool {
        self.stage_verdicts
            .iter()
            .any(|v| matches!(v.decision, Decision::Reject | Decision::Split))
    }

    /// Kept at every stage of its track.
    pub fn is_fully_kept(&self) -> bool {
        Stage::track(self.media_kind)
            .iter()
            .all(|s| self.verdict(*s).is_some_and(CurationVerdict::is_keep))
    }

    /// Checks that `verdict` may be appended after the existing history.
    pub fn check_next_verdict(&self, verdict: &CurationVerdict) -> std::result::Result<(), String> {
        if verdict.decision == Decision::Split && verdict.stage != Stage::ShotSplit {
            return Err(format!("SPLIT is only valid for shot_split, got {}", verdict.stage));
        }
        if self.is_closed() {
            return Err("history already closed by a REJECT or SPLIT verdict".into());
        }
        if let Some(last) = self.stage_verdicts.last() {
            if verdict.stage <= last.stage {
                return Err(format!("stage {} does not follow {}", verdict.stage, last.stage));
            }
        }
        Ok(())
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if self.frame_count < 1 {
            return Err("frame_count must be >= 1".into());
        }
        if self.frame_range.end < self.frame_range.start || self.frame_range.len() != self.frame_count {
            return Err("frame_range does not match frame_count".into());
        }
        if !(self.fps > 0.0) {
            return Err("fps must be positive".into());
        }
        let mut probe = ClipRecord {
            stage_verdicts: Vec::new(),
            ..self.clone()
        };
        for v in &self.stage_verdicts {
            probe.check_next_verdict(v)?;
            probe.stage_verdicts.push(v.clone());
        }
        Ok(())
    }
}

/// A set of 3D points, optionally with per-point confidence and the view
/// each point was reconstructed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidences: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_origin: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        PointCloud {
            points,
            confidences: None,
            frame_origin: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if self.points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::Malformed("point cloud contains non-finite coordinates".into()));
        }
        if let Some(c) = &self.confidences {
            if c.len() != self.points.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.points.len(),
                    actual: c.len(),
                });
            }
        }
        Ok(())
    }

    /// Applies `transform` to every point.
    pub fn transformed(&self, transform: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| transform.apply(p)).collect(),
            ..self.clone()
        }
    }

    /// Keeps the points at `indices`, carrying along the per-point fields.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            confidences: self.confidences.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            frame_origin: self.frame_origin.as_ref().map(|f| indices.iter().map(|&i| f[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }
}

/// `p ↦ scale · rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max() <= tol;
        ortho && (self.rotation.determinant() - 1.0).abs() <= tol && self.scale > 0.0
    }

    /// Geodesic angle (radians) between the rotations of two transforms.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        (((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    I2vSubject,
    I2vBackground,
    SubjectConsistency,
    BackgroundConsistency,
    MotionSmoothness,
    TemporalFlickering,
    VideoSimilarity,
    ObjectSimilarity,
    ChamferDistance,
    Met3r,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricRange {
    Percentage,
    NonNegative,
    UnitInterval,
}

impl MetricName {
    /// Column order of the leaderboard table.
    pub const ALL: [MetricName; 10] = [
        MetricName::I2vSubject,
        MetricName::I2vBackground,
        MetricName::SubjectConsistency,
        MetricName::BackgroundConsistency,
        MetricName::MotionSmoothness,
        MetricName::TemporalFlickering,
        MetricName::VideoSimilarity,
        MetricName::ObjectSimilarity,
        MetricName::ChamferDistance,
        MetricName::Met3r,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MetricName::I2vSubject => "i2v_subject",
            MetricName::I2vBackground => "i2v_background",
            MetricName::SubjectConsistency => "subject_consistency",
            MetricName::BackgroundConsistency => "background_consistency",
            MetricName::MotionSmoothness => "motion_smoothness",
            MetricName::TemporalFlickering => "temporal_flickering",
            MetricName::VideoSimilarity => "video_similarity",
            MetricName::ObjectSimilarity => "object_similarity",
            MetricName::ChamferDistance => "chamfer_distance",
            MetricName::Met3r => "met3r",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MetricName::I2vSubject => "I2V Subject",
            MetricName::I2vBackground => "I2V Background",
            MetricName::SubjectConsistency => "Subject Consistency",
            MetricName::BackgroundConsistency => "Background Consistency",
            MetricName::MotionSmoothness => "Motion Smoothness",
            MetricName::TemporalFlickering => "Temporal Flickering",
            MetricName::VideoSimilarity => "Video Similarity",
            MetricName::ObjectSimilarity => "Object Similarity",
            MetricName::ChamferDistance => "Chamfer Distance",
            MetricName::Met3r => "MEt3R",
        }
    }

    pub fn range(self) -> MetricRange {
        match self {
            MetricName::ChamferDistance => MetricRange::NonNegative,
            MetricName::Met3r => MetricRange::UnitInterval,
            _ => MetricRange::Percentage,
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, MetricName::ChamferDistance | MetricName::Met3r)
    }
}

impl std::str::FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricStatus {
    Ok,
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub status: MetricStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl MetricValue {
    /// An OK value, checked against the metric's declared range.
    pub fn ok(metric: MetricName, value: f64) -> Result<Self> {
        let in_range = match metric.range() {
            MetricRange::Percentage => (0.0..=100.0).contains(&value),
            MetricRange::NonNegative => value >= 0.0 && value.is_finite(),
            MetricRange::UnitInterval => (0.0..=1.0).contains(&value),
        };
        if !in_range {
            return Err(Error::Malformed(format!("{} value {value} out of range", metric.key())));
        }
        Ok(MetricValue {
            value: Some(value),
            status: MetricStatus::Ok,
            detail: None,
        })
    }

    pub fn skipped(detail: impl Into<String>) -> Self {
        MetricValue {
            value: None,
            status: MetricStatus::Skipped,
            detail: Some(detail.into()),
        }
    }

    pub fn error(detail: impl Into<String>) -> Self {
        MetricValue {
            value: None,
            status: MetricStatus::Error,
            detail: Some(detail.into()),
        }
    }

    pub fn ok_value(&self) -> Option<f64> {
        match self.status {
            MetricStatus::Ok => self.value,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<MetricName, MetricValue>,
    #[serde(default)]
    pub run_config_hash: String,
    #[serde(default)]
    pub provider_versions: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn get(&self, metric: MetricName) -> Option<&MetricValue> {
        self.metrics.get(&metric)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in &self.metrics {
            match v.status {
                MetricStatus::Ok => {
                    let value = v.value.ok_or_else(|| Error::Malformed(format!("{} OK without value", name.key())))?;
                    MetricValue::ok(*name, value)?;
                }
                MetricStatus::Skipped | MetricStatus::Error if v.value.is_some() => {
                    return Err(Error::Malformed(format!("{} carries a value while not OK", name.key())));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
