use std::collections::BTreeSet;

use serde::Serialize;

use super::wire::{check_dense, check_detections, check_mask, check_scores};
use super::*;

/// What a provider under test is expected to offer.
#[derive(Debug, Clone)]
pub struct ConformanceExpectations {
    pub dims: EmbeddingDims,
    pub required: BTreeSet<Capability>,
}

impl Default for ConformanceExpectations {
    fn default() -> Self {
        ConformanceExpectations {
            dims: EmbeddingDims::default(),
            required: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn probe_image(label: &str, shift: u32) -> FrameImage {
    let c = mock::label_color(label);
    FrameImage::from_fn(64, 48, |x, y| {
        if (16 + shift..40 + shift).contains(&x) && (12..36).contains(&y) {
            c
        } else {
            let v = 100 + ((x / 8 + y / 8) % 2) as u8 * 40;
            [v, v, v]
        }
    })
}

/// Exercises every capability the provider advertises and checks each
/// response against the protocol contract.
pub fn run_conformance(provider: &dyn ModelProvider, expect: &ConformanceExpectations) -> Vec<ConformanceCheck> {
    let mut out = Vec::new();
    let mut record = |name: &str, r: Result<String>| {
        let (passed, detail) = match r {
            Ok(d) => (true, d),
            Err(e) => (false, format!("{}: {e}", e.code())),
        };
        out.push(ConformanceCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    };

    let health = match provider.health() {
        Ok(h) => h,
        Err(e) => {
            record("health", Err(e));
            return out;
        }
    };
    let listed: Vec<&str> = health.capabilities.iter().map(|c| c.name()).collect();
    record("health", Ok(listed.join(",")));
    let missing: Vec<&str> = expect
        .required
        .iter()
        .filter(|c| !health.supports(**c))
        .map(|c| c.name())
        .collect();
    record(
        "required_capabilities",
        if missing.is_empty() {
            Ok("all advertised".into())
        } else {
            Err(Error::PreconditionFailed(format!("missing {}", missing.join(","))))
        },
    );

    let images = [probe_image("mug", 0), probe_image("mug", 4)];
    let mug = vec!["mug".to_string()];

    for cap in Capability::ALL {
        let name = cap.name();
        if !health.supports(cap) {
            let r = match unsupported_call(provider, cap, &images[0]) {
                Err(Error::Unsupported(_)) => Ok("absent and reported as unsupported".into()),
                Err(e) => Err(e),
                Ok(()) => Err(Error::PreconditionFailed(format!("{name} answered although not advertised"))),
            };
            record(&format!("{name}.unsupported"), r);
            continue;
        }
        let r = match cap {
            Capability::EmbedGlobal | Capability::EmbedPatchObject | Capability::EmbedPerceptual => {
                let kind = cap.embedding_kind().unwrap();
                (|| {
                    let a = provider.embed(kind, &images)?;
                    validate_embeddings(kind, Some(expect.dims.get(kind)), images.len(), &a)?;
                    let b = provider.embed(kind, &images)?;
                    if a != b {
                        return Err(Error::ProviderContract {
                            capability: cap,
                            reason: "repeated request gave different embeddings".into(),
                        });
                    }
                    Ok(format!("dim {}", a[0].dim()))
                })()
            }
            Capability::Geometry => provider.geometry(&images).and_then(|g| {
                g.validate()?;
                if g.views.len() != images.len() {
                    return Err(Error::ProviderContract {
                        capability: cap,
                        reason: format!("{} views for {} images", g.views.len(), images.len()),
                    });
                }
                Ok(format!("{} views", g.views.len()))
            }),
            Capability::Detect => provider.detect(&images[0], &mug).and_then(|d| {
                check_detections(&d, &images[0], &mug)?;
                Ok(format!("{} boxes", d.len()))
            }),
            Capability::Segment => {
                let bbox = BoundingBox {
                    x0: 12,
                    y0: 8,
                    x1: 44,
                    y1: 40,
                };
                provider.segment(&images[0], &bbox).and_then(|m| {
                    check_mask(&m, &images[0], &bbox)?;
                    Ok(format!("area {}", m.area()))
                })
            }
            Capability::TextComplete => provider
                .complete(&CompletionRequest {
                    system: "Describe the object.".into(),
                    user: "Describe it.".into(),
                    images: images.to_vec(),
                })
                .and_then(|t| {
                    if t.trim().is_empty() {
                        Err(Error::ProviderContract {
                            capability: cap,
                            reason: "empty completion".into(),
                        })
                    } else {
                        Ok(format!("{} chars", t.len()))
                    }
                }),
            Capability::Ocr => provider.ocr(&images[0]).map(|o| format!("{} chars", o.char_count)),
            Capability::Aesthetics => provider.aesthetics(&images).and_then(|s| {
                check_scores(&s, images.len())?;
                Ok(format!("{s:?}"))
            }),
        };
        record(name, r);
        if cap == Capability::EmbedPatchObject {
            let r = match provider.embed_dense(&images) {
                Ok(maps) => check_dense(&maps, &images).map(|_| format!("dim {}", maps[0].dim)),
                Err(Error::Unsupported(_)) => Ok("dense features not offered".into()),
                Err(e) => Err(e),
            };
            record("embed_patch_object.dense", r);
        }
    }
    out
}

fn unsupported_call(p: &dyn ModelProvider, cap: Capability, image: &FrameImage) -> Result<()> {
    let one = std::slice::from_ref(image);
    match cap {
        Capability::EmbedGlobal | Capability::EmbedPatchObject | Capability::EmbedPerceptual => {
            p.embed(cap.embedding_kind().unwrap(), one).map(|_| ())
        }
        Capability::Geometry => p.geometry(one).map(|_| ()),
        Capability::Detect => p.detect(image, &["mug".into()]).map(|_| ()),
        Capability::Segment => p
            .segment(
                image,
                &BoundingBox {
                    x0: 0,
                    y0: 0,
                    x1: 8,
                    y1: 8,
                },
            )
            .map(|_| ()),
        Capability::TextComplete => p
            .complete(&CompletionRequest {
                system: String::new(),
                user: "x".into(),
                images: Vec::new(),
            })
            .map(|_| ()),
        Capability::Ocr => p.ocr(image).map(|_| ()),
        Capability::Aesthetics => p.aesthetics(one).map(|_| ()),
    }
}
