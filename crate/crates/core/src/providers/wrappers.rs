use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};

use super::*;

/// Implements [`ModelProvider`] for a wrapper by routing every capability
/// call through `self.around(capability, || inner call)`.
macro_rules! delegate_provider {
    ($ty:ident) => {
        impl<P: ModelProvider> ModelProvider for $ty<P> {
            fn health(&self) -> Result<Health> {
                self.inner.health()
            }
            fn embed(&self, kind: EmbeddingKind, images: &[FrameImage]) -> Result<Vec<EmbeddingVector>> {
                self.around(Capability::for_kind(kind), || self.inner.embed(kind, images))
            }
            fn embed_dense(&self, images: &[FrameImage]) -> Result<Vec<FeatureMap>> {
                self.around(Capability::EmbedPatchObject, || self.inner.embed_dense(images))
            }
            fn geometry(&self, images: &[FrameImage]) -> Result<GeometryResult> {
                self.around(Capability::Geometry, || self.inner.geometry(images))
            }
            fn detect(&self, image: &FrameImage, labels: &[String]) -> Result<Vec<Detection>> {
                self.around(Capability::Detect, || self.inner.detect(image, labels))
            }
            fn segment(&self, image: &FrameImage, bbox: &BoundingBox) -> Result<RleMask> {
                self.around(Capability::Segment, || self.inner.segment(image, bbox))
            }
            fn complete(&self, request: &CompletionRequest) -> Result<String> {
                self.around(Capability::TextComplete, || self.inner.complete(request))
            }
            fn ocr(&self, image: &FrameImage) -> Result<OcrResult> {
                self.around(Capability::Ocr, || self.inner.ocr(image))
            }
            fn aesthetics(&self, images: &[FrameImage]) -> Result<Vec<f64>> {
                self.around(Capability::Aesthetics, || self.inner.aesthetics(images))
            }
        }
    };
}

/// Counts successful calls per capability.
pub struct CountingProvider<P> {
    inner: P,
    counts: Mutex<BTreeMap<Capability, usize>>,
}

impl<P: ModelProvider> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        CountingProvider {
            inner,
            counts: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn count(&self, capability: Capability) -> usize {
        self.counts.lock().unwrap().get(&capability).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> BTreeMap<Capability, usize> {
        self.counts.lock().unwrap().clone()
    }

    pub fn total(&self) -> usize {
        self.counts.lock().unwrap().values().sum()
    }

    fn around<T>(&self, capability: Capability, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let out = f()?;
        *self.counts.lock().unwrap().entry(capability).or_default() += 1;
        Ok(out)
    }
}

delegate_provider!(CountingProvider);

/// Lets `budget` capability calls through, then fails every later call
/// with a retryable `ProviderUnavailable`. Simulates a crash mid-run.
pub struct FailAfter<P> {
    inner: P,
    remaining: AtomicUsize,
}

impl<P: ModelProvider> FailAfter<P> {
    pub fn new(inner: P, budget: usize) -> Self {
        FailAfter {
            inner,
            remaining: AtomicUsize::new(budget),
        }
    }

    fn around<T>(&self, capability: Capability, f: impl FnOnce() -> Result<T>) -> Result<T> {
        match self.remaining.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)) {
            Ok(_) => f(),
            Err(_) => Err(Error::ProviderUnavailable {
                capability,
                reason: "call budget exhausted".into(),
            }),
        }
    }
}

delegate_provider!(FailAfter);

/// Bounds the number of in-flight calls.
pub struct Limited<P> {
    inner: P,
    max: usize,
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

impl<P: ModelProvider> Limited<P> {
    pub fn new(inner: P, max_in_flight: usize) -> Self {
        Limited {
            inner,
            max: max_in_flight.max(1),
            state: Mutex::new((0, 0)),
            freed: Condvar::new(),
        }
    }

    /// Highest number of calls observed in flight at once.
    pub fn peak(&self) -> usize {
        self.state.lock().unwrap().1
    }

    fn around<T>(&self, _capability: Capability, f: impl FnOnce() -> Result<T>) -> Result<T> {
        {
            let mut s = self.state.lock().unwrap();
            while s.0 >= self.max {
                s = self.freed.wait(s).unwrap();
            }
            s.0 += 1;
            s.1 = s.1.max(s.0);
        }
        let out = f();
        self.state.lock().unwrap().0 -= 1;
        self.freed.notify_one();
        out
    }
}

delegate_provider!(Limited);
