//! Capability contracts for external model services.
//!
//! [`ModelProvider`] is the single seam between the engine and any model.
//! [`MockProvider`] answers every capability deterministically offline;
//! [`HttpProvider`] speaks the JSON wire protocol to a sidecar, and
//! [`MockServer`] serves any provider over that same protocol.

mod conformance;
mod http;
mod mock;
pub mod scene;
mod server;
mod types;
pub mod wire;
mod wrappers;

pub use conformance::{run_conformance, ConformanceCheck, ConformanceExpectations};
pub use http::{HttpProvider, HttpSettings};
pub use mock::{label_color, MockConfig, MockProvider, VOCABULARY};
pub use scene::{Camera, SceneRegistry, SceneSpec, Texture};
pub use server::MockServer;
pub use types::*;
pub use wrappers::{CountingProvider, FailAfter, Limited};

use crate::error::{Error, Result};
use crate::ingest::FrameImage;
use crate::model::{EmbeddingKind, EmbeddingVector};

/// A model service capability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    EmbedGlobal,
    EmbedPatchObject,
    EmbedPerceptual,
    Geometry,
    Detect,
    Segment,
    TextComplete,
    Ocr,
    Aesthetics,
}

impl Capability {
    pub const ALL: [Capability; 9] = [
        Capability::EmbedGlobal,
        Capability::EmbedPatchObject,
        Capability::EmbedPerceptual,
        Capability::Geometry,
        Capability::Detect,
        Capability::Segment,
        Capability::TextComplete,
        Capability::Ocr,
        Capability::Aesthetics,
    ];

    pub fn for_kind(kind: EmbeddingKind) -> Capability {
        match kind {
            EmbeddingKind::Global => Capability::EmbedGlobal,
            EmbeddingKind::PatchObject => Capability::EmbedPatchObject,
            EmbeddingKind::Perceptual => Capability::EmbedPerceptual,
        }
    }

    pub fn embedding_kind(self) -> Option<EmbeddingKind> {
        match self {
            Capability::EmbedGlobal => Some(EmbeddingKind::Global),
            Capability::EmbedPatchObject => Some(EmbeddingKind::PatchObject),
            Capability::EmbedPerceptual => Some(EmbeddingKind::Perceptual),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Capability::EmbedGlobal => "embed_global",
            Capability::EmbedPatchObject => "embed_patch_object",
            Capability::EmbedPerceptual => "embed_perceptual",
            Capability::Geometry => "geometry",
            Capability::Detect => "detect",
            Capability::Segment => "segment",
            Capability::TextComplete => "text_complete",
            Capability::Ocr => "ocr",
            Capability::Aesthetics => "aesthetics",
        }
    }
}

impl std::fmt::Display for Capability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One model service. Every method defaults to [`Error::Unsupported`].
///
/// Dense patch features share the `embed_patch_object` capability.
pub trait ModelProvider: Send + Sync {
    fn health(&self) -> Result<Health>;

    fn embed(&self, kind: EmbeddingKind, images: &[FrameImage]) -> Result<Vec<EmbeddingVector>> {
        let _ = images;
        Err(Error::Unsupported(Capability::for_kind(kind)))
    }

    fn embed_dense(&self, images: &[FrameImage]) -> Result<Vec<FeatureMap>> {
        let _ = images;
        Err(Error::Unsupported(Capability::EmbedPatchObject))
    }

    fn geometry(&self, images: &[FrameImage]) -> Result<GeometryResult> {
        let _ = images;
        Err(Error::Unsupported(Capability::Geometry))
    }

    fn detect(&self, image: &FrameImage, labels: &[String]) -> Result<Vec<Detection>> {
        let _ = (image, labels);
        Err(Error::Unsupported(Capability::Detect))
    }

    fn segment(&self, image: &FrameImage, bbox: &BoundingBox) -> Result<RleMask> {
        let _ = (image, bbox);
        Err(Error::Unsupported(Capability::Segment))
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let _ = request;
        Err(Error::Unsupported(Capability::TextComplete))
    }

    fn ocr(&self, image: &FrameImage) -> Result<OcrResult> {
        let _ = image;
        Err(Error::Unsupported(Capability::Ocr))
    }

    fn aesthetics(&self, images: &[FrameImage]) -> Result<Vec<f64>> {
        let _ = images;
        Err(Error::Unsupported(Capability::Aesthetics))
    }
}

macro_rules! forward_provider {
    ($($ty:ty),*) => {$(
impl<P: ModelProvider + ?Sized> ModelProvider for $ty {
    fn health(&self) -> Result<Health> {
        (**self).health()
    }
    fn embed(&self, kind: EmbeddingKind, images: &[FrameImage]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed(kind, images)
    }
    fn embed_dense(&self, images: &[FrameImage]) -> Result<Vec<FeatureMap>> {
        (**self).embed_dense(images)
    }
    fn geometry(&self, images: &[FrameImage]) -> Result<GeometryResult> {
        (**self).geometry(images)
    }
    fn detect(&self, image: &FrameImage, labels: &[String]) -> Result<Vec<Detection>> {
        (**self).detect(image, labels)
    }
    fn segment(&self, image: &FrameImage, bbox: &BoundingBox) -> Result<RleMask> {
        (**self).segment(image, bbox)
    }
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        (**self).complete(request)
    }
    fn ocr(&self, image: &FrameImage) -> Result<OcrResult> {
        (**self).ocr(image)
    }
    fn aesthetics(&self, images: &[FrameImage]) -> Result<Vec<f64>> {
        (**self).aesthetics(images)
    }
}
    )*};
}

forward_provider!(std::sync::Arc<P>, &P, Box<P>);

/// Checks a batch of embeddings against the declared contract.
pub fn validate_embeddings(
    kind: EmbeddingKind,
    declared_dim: Option<usize>,
    expected_count: usize,
    embeddings: &[EmbeddingVector],
) -> Result<()> {
    let capability = Capability::for_kind(kind);
    let fail = |reason: String| Err(Error::ProviderContract { capability, reason });
    if embeddings.len() != expected_count {
        return fail(format!("{} embeddings for {expected_count} images", embeddings.len()));
    }
    for e in embeddings {
        if e.kind() != kind {
            return fail(format!("embedding kind {:?}, requested {kind:?}", e.kind()));
        }
        if let Some(d) = declared_dim {
            if e.dim() != d {
                return fail(format!("embedding dim {} but {d} declared", e.dim()));
            }
        }
        if (e.norm() - 1.0).abs() > 1e-6 {
            return fail(format!("embedding norm {} is not 1", e.norm()));
        }
    }
    Ok(())
}
