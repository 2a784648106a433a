//! Deterministic offline provider.
//!
//! Every output is a pure function of the input pixels, the seed and the
//! configuration. Detection looks for the exact colour assigned to a label
//! by [`label_color`], so synthetic scenes carry their own ground truth.

use std::collections::{BTreeSet, HashMap};

use md5::{Digest as _, Md5};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::Sha256;

use super::scene::{analytic_geometry, SceneRegistry, BACKGROUND};
use super::types::*;
use super::{Capability, ModelProvider};
use crate::error::{Error, Result};
use crate::ingest::{luminance_mean, FrameImage};
use crate::model::{EmbeddingKind, EmbeddingVector, RigidTransform};

/// Object nouns the mock captioner recognizes.
pub const VOCABULARY: [&str; 12] = [
    "ring",
    "gemstone",
    "watch",
    "bottle",
    "mug",
    "sneaker",
    "handbag",
    "lamp",
    "headphones",
    "camera",
    "vase",
    "wallet",
];

/// The exact RGB colour the mock detector associates with `label`.
/// Channels stay within `16..240`, so labels never collide with pure black,
/// pure white or the mid-gray background.
pub fn label_color(label: &str) -> [u8; 3] {
    let norm = label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let d = Md5::digest(norm.as_bytes());
    [16 + d[0] % 224, 16 + d[1] % 224, 16 + d[2] % 224]
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub seed: u64,
    pub dims: EmbeddingDims,
    /// Embed by dominant colour plus small per-image noise instead of by
    /// raw pixel hash.
    pub identity_mode: bool,
    pub identity_noise: f64,
    pub dense_dim: usize,
    pub disabled: BTreeSet<Capability>,
    pub version: String,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            seed: 0,
            dims: EmbeddingDims::default(),
            identity_mode: true,
            identity_noise: 0.05,
            dense_dim: 32,
            disabled: BTreeSet::new(),
            version: "mock-1".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    pub config: MockConfig,
    pub registry: SceneRegistry,
}

fn rng_for(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Most frequent non-background colour; ties go to the smallest colour.
pub fn dominant_color(frame: &FrameImage) -> Option<[u8; 3]> {
    let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
    for px in frame.pixels().chunks_exact(3) {
        let c = [px[0], px[1], px[2]];
        if c != BACKGROUND {
            *counts.entry(c).or_insert(0) += 1;
        }
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(c, _)| c)
}

/// Random Fourier features over a small input vector.
struct Rff {
    weights: Vec<Vec<f64>>,
    phases: Vec<f64>,
}

impl Rff {
    fn new(seed: u64, tag: &str, inputs: usize, dim: usize, scale: f64) -> Self {
        let mut rng = rng_for(&[b"rff", tag.as_bytes(), &seed.to_le_bytes()]);
        let weights = (0..dim).map(|_| gaussian(&mut rng, inputs).iter().map(|w| w * scale).collect()).collect();
        let phases = (0..dim).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
        Rff { weights, phases }
    }

    fn eval(&self, x: &[f64], out: &mut Vec<f64>) {
        let start = out.len();
        for (w, b) in self.weights.iter().zip(&self.phases) {
            out.push((w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b).cos());
        }
        let n = out[start..].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        out[start..].iter_mut().for_each(|v| *v /= n);
    }
}

fn luma_std(frame: &FrameImage) -> f64 {
    let mean = luminance_mean(frame);
    let l = frame.luma();
    (l.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / l.len() as f64).sqrt()
}

impl MockProvider {
    pub fn new(config: MockConfig) -> Self {
        MockProvider {
            config,
            registry: SceneRegistry::new(),
        }
    }

    pub fn with_registry(mut self, registry: SceneRegistry) -> Self {
        self.registry = registry;
        self
    }

    fn enabled(&self, capability: Capability) -> Result<()> {
        if self.config.disabled.contains(&capability) {
            Err(Error::Unsupported(capability))
        } else {
            Ok(())
        }
    }

    /// The embedding of one image.
    pub fn embed_one(&self, kind: EmbeddingKind, image: &FrameImage) -> EmbeddingVector {
        let dim = self.config.dims.get(kind);
        let seed = self.config.seed.to_le_bytes();
        let kind_tag = kind.name().as_bytes();
        let dims = [image.width().to_le_bytes(), image.height().to_le_bytes()].concat();
        let pixel_vec = |tag: &[u8]| unit(gaussian(&mut rng_for(&[tag, kind_tag, &seed, &dims, image.pixels()]), dim));
        let values = match self.config.identity_mode.then(|| dominant_color(image)).flatten() {
            Some(key) => {
                let base = unit(gaussian(&mut rng_for(&[b"identity", kind_tag, &seed, &key]), dim));
                if self.config.identity_noise == 0.0 {
                    base
                } else {
                    let noise = pixel_vec(b"noise");
                    base.iter().zip(&noise).map(|(b, n)| b + self.config.identity_noise * n).collect()
                }
            }
            None => pixel_vec(b"pixels"),
        };
        EmbeddingVector::normalized(kind, values).expect("gaussian vectors are non-zero")
    }

    fn dense_one(&self, image: &FrameImage) -> FeatureMap {
        let dim = self.config.dense_dim;
        let spatial = Rff::new(self.config.seed, "dense-world", 6, dim, 3.0);
        let color = Rff::new(self.config.seed, "dense-color", 3, dim, 4.0);
        let hits = self.registry.lookup(image).map(|v| v.hits());
        let (w, h) = (image.width() as usize, image.height() as usize);
        let mut data = Vec::with_capacity(w * h * dim);
        for y in 0..h {
            for x in 0..w {
                let px = image.pixel(x as u32, y as u32);
                let rgb = [px[0] as f64 / 255.0, px[1] as f64 / 255.0, px[2] as f64 / 255.0];
                match hits.as_ref().and_then(|hs| hs[y * w + x]) {
                    Some(p) => spatial.eval(&[p.x, p.y, p.z, rgb[0], rgb[1], rgb[2]], &mut data),
                    None => color.eval(&rgb, &mut data),
                }
            }
        }
        FeatureMap::new(w, h, dim, data).expect("dense map shape")
    }

    /// Geometry for images that are not registered scene renders: each view
    /// is a luma relief at depth `1 + luma/255` seen by a fixed camera.
    fn relief_geometry(images: &[FrameImage]) -> GeometryResult {
        let views = images
            .iter()
            .map(|img| {
                let (w, h) = (img.width() as usize, img.height() as usize);
                let f = w.max(h) as f64;
                let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
                let luma = img.luma();
                let pointmap = (0..w * h)
                    .map(|i| {
                        let (x, y) = ((i % w) as f64, (i / w) as f64);
                        let z = 1.0 + luma[i] / 255.0;
                        Point3::new((x + 0.5 - cx) / f * z, (y + 0.5 - cy) / f * z, z)
                    })
                    .collect();
                ViewGeometry {
                    width: w,
                    height: h,
                    pointmap,
                    confidence: vec![1.0; w * h],
                    intrinsics: nalgebra::Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0),
                    pose: RigidTransform::identity(),
                }
            })
            .collect();
        GeometryResult { views }
    }

    fn caption_for(&self, images: &[FrameImage]) -> String {
        let mut found: Vec<(usize, &str)> = VOCABULARY
            .iter()
            .map(|word| {
                let c = label_color(word);
                let n = images
                    .iter()
                    .map(|img| img.pixels().chunks_exact(3).filter(|p| *p == c).count())
                    .sum();
                (n, *word)
            })
            .filter(|(n, _)| *n > 0)
            .collect();
        found.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        match found.as_slice() {
            [] => "A plain textured object with a matte finish rests on a flat surface.".into(),
            [(_, one)] => format!("A {one} with a smooth glossy finish rests upright on a flat surface."),
            [(_, a), (_, b), ..] => format!("A {a} with a smooth glossy finish rests beside a {b} on a flat surface."),
        }
    }
}

impl ModelProvider for MockProvider {
    fn health(&self) -> Result<Health> {
        let capabilities = Capability::ALL
            .into_iter()
            .filter(|c| !self.config.disabled.contains(c))
            .collect();
        let versions = [("mock".to_string(), self.config.version.clone())].into();
        Ok(Health { capabilities, versions })
    }

    fn embed(&self, kind: EmbeddingKind, images: &[FrameImage]) -> Result<Vec<EmbeddingVector>> {
        self.enabled(Capability::for_kind(kind))?;
        Ok(images.iter().map(|img| self.embed_one(kind, img)).collect())
    }

    fn embed_dense(&self, images: &[FrameImage]) -> Result<Vec<FeatureMap>> {
        self.enabled(Capability::EmbedPatchObject)?;
        Ok(images.iter().map(|img| self.dense_one(img)).collect())
    }

    fn geometry(&self, images: &[FrameImage]) -> Result<GeometryResult> {
        self.enabled(Capability::Geometry)?;
        if images.is_empty() {
            return Err(Error::Malformed("geometry needs at least one view".into()));
        }
        let views: Vec<_> = images.iter().map(|img| self.registry.lookup(img)).collect();
        match views.iter().filter(|v| v.is_some()).count() {
            0 => Ok(Self::relief_geometry(images)),
            n if n == views.len() => Ok(analytic_geometry(&views.into_iter().flatten().collect::<Vec<_>>())),
            _ => Err(Error::Malformed(
                "geometry request mixes registered scene views with unknown views".into(),
            )),
        }
    }

    fn detect(&self, image: &FrameImage, labels: &[String]) -> Result<Vec<Detection>> {
        self.enabled(Capability::Detect)?;
        let mut out = Vec::new();
        for label in labels {
            let c = label_color(label);
            let (mut x0, mut y0, mut x1, mut y1, mut n) = (u32::MAX, u32::MAX, 0, 0, 0u64);
            for y in 0..image.height() {
                for x in 0..image.width() {
                    if image.pixel(x, y) == c {
                        x0 = x0.min(x);
                        y0 = y0.min(y);
                        x1 = x1.max(x + 1);
                        y1 = y1.max(y + 1);
                        n += 1;
                    }
                }
            }
            if n > 0 {
                let bbox = BoundingBox { x0, y0, x1, y1 };
                out.push(Detection {
                    label: label.clone(),
                    score: n as f64 / bbox.area() as f64,
                    bbox,
                });
            }
        }
        Ok(out)
    }

    fn segment(&self, image: &FrameImage, bbox: &BoundingBox) -> Result<RleMask> {
        self.enabled(Capability::Segment)?;
        if !bbox.is_valid_in(image.width(), image.height()) {
            return Err(Error::Malformed(format!("box {bbox:?} outside the image")));
        }
        let crop = image.crop(bbox.x0, bbox.y0, bbox.x1, bbox.y1)?;
        let key = dominant_color(&crop).ok_or_else(|| Error::Malformed("nothing to segment in box".into()))?;
        let bits: Vec<bool> = (0..image.height())
            .flat_map(|y| (0..image.width()).map(move |x| (x, y)))
            .map(|(x, y)| x >= bbox.x0 && x < bbox.x1 && y >= bbox.y0 && y < bbox.y1 && image.pixel(x, y) == key)
            .collect();
        Ok(RleMask::from_bits(image.width(), image.height(), &bits))
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        self.enabled(Capability::TextComplete)?;
        if request.system.contains("object tags") {
            let caption = request.user.to_lowercase();
            let mut words: Vec<(usize, &str)> = VOCABULARY
                .iter()
                .filter_map(|w| caption.find(w).map(|at| (at, *w)))
                .collect();
            words.sort();
            if words.is_empty() {
                return Ok("object".into());
            }
            return Ok(words.iter().map(|(_, w)| *w).collect::<Vec<_>>().join("\n"));
        }
        let appearance = self.caption_for(&request.images);
        if let Some(rest) = request.user.split("appearance is:").nth(1) {
            let described = rest.lines().next().unwrap_or("").trim().trim_end_matches('.');
            let described = if described.is_empty() { appearance.trim_end_matches('.') } else { described };
            let mut chars = described.chars();
            let lowered: String = chars.next().map(|c| c.to_lowercase().chain(chars).collect()).unwrap_or_default();
            return Ok(format!(
                "The camera slowly orbits {lowered} while a hand keeps it centered in frame. The lighting stays even throughout."
            ));
        }
        Ok(appearance)
    }

    fn ocr(&self, image: &FrameImage) -> Result<OcrResult> {
        self.enabled(Capability::Ocr)?;
        let black = image.pixels().chunks_exact(3).filter(|p| *p == [0, 0, 0]).count();
        let char_count = (black / 16) as u32;
        Ok(OcrResult {
            char_count,
            text: "#".repeat(char_count.min(256) as usize),
        })
    }

    fn aesthetics(&self, images: &[FrameImage]) -> Result<Vec<f64>> {
        self.enabled(Capability::Aesthetics)?;
        Ok(images.iter().map(|img| (2.0 + luma_std(img) / 16.0).clamp(0.0, 10.0)).collect())
    }
}
