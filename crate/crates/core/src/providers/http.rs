use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::*;
use super::*;

/// Connection settings of an [`HttpProvider`].
///
/// `overrides` routes single capabilities to their own endpoint, timeout,
/// retry budget and declared dimension.
#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub dims: EmbeddingDims,
    pub overrides: BTreeMap<Capability, ProviderDescriptor>,
}

impl HttpSettings {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpSettings {
            endpoint: endpoint.into(),
            token: std::env::var("CONSID_PROVIDER_TOKEN").ok().filter(|t| !t.is_empty()),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_ms: 50,
            dims: EmbeddingDims::default(),
            overrides: BTreeMap::new(),
        }
    }

    fn route(&self, capability: Capability) -> Route {
        match self.overrides.get(&capability) {
            Some(d) => Route {
                endpoint: d.endpoint.trim_end_matches('/').to_string(),
                timeout_ms: d.timeout_ms,
                max_retries: d.max_retries,
                declared_dim: d.declared_dim,
            },
            None => Route {
                endpoint: self.endpoint.trim_end_matches('/').to_string(),
                timeout_ms: self.timeout_ms,
                max_retries: self.max_retries,
                declared_dim: capability.embedding_kind().map(|k| self.dims.get(k)),
            },
        }
    }
}

struct Route {
    endpoint: String,
    timeout_ms: u64,
    max_retries: u32,
    declared_dim: Option<usize>,
}

/// Client of the provider wire protocol.
///
/// Transport failures, timeouts and 5xx answers are retried with
/// exponential backoff up to `max_retries` times; 501 maps to
/// `Unsupported`, other 4xx answers and malformed bodies to a
/// non-retryable contract error.
pub struct HttpProvider {
    settings: HttpSettings,
    client: reqwest::blocking::Client,
    health: RwLock<BTreeMap<String, Health>>,
    attempts: AtomicUsize,
}

impl HttpProvider {
    pub fn new(settings: HttpSettings) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpProvider {
            settings,
            client,
            health: RwLock::new(BTreeMap::new()),
            attempts: AtomicUsize::new(0),
        })
    }

    pub fn settings(&self) -> &HttpSettings {
        &self.settings
    }

    /// HTTP requests sent so far, retries included.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    fn send<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        capability: Capability,
        route: &Route,
        path: &str,
        body: Option<&Req>,
    ) -> Result<Resp> {
        let url = format!("{}{path}", route.endpoint);
        let payload = body.map(serde_json::to_vec).transpose()?;
        let unavailable = |reason: String| Error::ProviderUnavailable { capability, reason };
        let mut last = unavailable("no attempt made".into());
        for attempt in 0..=route.max_retries {
            if attempt > 0 {
                let wait = self.settings.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            self.attempts.fetch_add(1, Ordering::SeqCst);
            let mut req = match &payload {
                Some(p) => self
                    .client
                    .post(&url)
                    .header("Content-Type", "application/json")
                    .body(p.clone()),
                None => self.client.get(&url),
            };
            req = req.timeout(Duration::from_millis(route.timeout_ms));
            if let Some(t) = &self.settings.token {
                req = req.bearer_auth(t);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last = unavailable(format!("{url}: {e}"));
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let bytes = match resp.bytes() {
                Ok(b) => b,
                Err(e) => {
                    last = unavailable(format!("{url}: reading body: {e}"));
                    continue;
                }
            };
            let message = || {
                serde_json::from_slice::<ErrorBody>(&bytes)
                    .map(|b| format!("{}: {}", b.code, b.error))
                    .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned())
            };
            match status {
                200..=299 => {
                    return serde_json::from_slice(&bytes).map_err(|e| Error::ProviderContract {
                        capability,
                        reason: format!("{path}: response does not match schema: {e}"),
                    })
                }
                501 => return Err(Error::Unsupported(capability)),
                429 | 500..=599 => last = unavailable(format!("{path}: status {status}: {}", message())),
                _ => {
                    return Err(Error::ProviderContract {
                        capability,
                        reason: format!("{path}: status {status}: {}", message()),
                    })
                }
            }
        }
        Err(last)
    }

    fn fetch_health(&self, capability: Capability, route: &Route) -> Result<Health> {
        if let Some(h) = self.health.read().unwrap().get(&route.endpoint) {
            return Ok(h.clone());
        }
        let h: Health = self.send::<(), _>(capability, route, "/v1/health", None)?;
        self.health.write().unwrap().insert(route.endpoint.clone(), h.clone());
        Ok(h)
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, capability: Capability, path: &str, body: &Req) -> Result<(Resp, Route)> {
        let route = self.settings.route(capability);
        let health = self.fetch_health(capability, &route)?;
        if !health.supports(capability) {
            return Err(Error::Unsupported(capability));
        }
        match self.send(capability, &route, path, Some(body)) {
            Err(e @ Error::ProviderUnavailable { .. }) => {
                // Force a fresh health probe before the next call.
                self.health.write().unwrap().remove(&route.endpoint);
                Err(e)
            }
            r => r.map(|resp| (resp, route)),
        }
    }
}

fn encode_all(images: &[FrameImage]) -> Result<Vec<String>> {
    images.iter().map(encode_image).collect()
}

impl ModelProvider for HttpProvider {
    fn health(&self) -> Result<Health> {
        let route = Route {
            endpoint: self.settings.endpoint.trim_end_matches('/').to_string(),
            timeout_ms: self.settings.timeout_ms,
            max_retries: self.settings.max_retries,
            declared_dim: None,
        };
        self.health.write().unwrap().remove(&route.endpoint);
        self.fetch_health(Capability::EmbedGlobal, &route)
    }

    fn embed(&self, kind: EmbeddingKind, images: &[FrameImage]) -> Result<Vec<EmbeddingVector>> {
        let capability = Capability::for_kind(kind);
        let req = EmbedRequest {
            images: encode_all(images)?,
            kind,
            dense: false,
        };
        let (resp, route): (EmbedResponse, _) = self.call(capability, "/v1/embed", &req)?;
        let contract = |reason: String| Error::ProviderContract { capability, reason };
        if let Some(d) = route.declared_dim {
            if resp.dim != d {
                return Err(contract(format!("response dim {} but {d} declared", resp.dim)));
            }
        }
        if resp.embeddings.iter().any(|v| v.len() != resp.dim) {
            return Err(contract("embedding length differs from response dim".into()));
        }
        let vectors = resp
            .embeddings
            .into_iter()
            .map(|v| EmbeddingVector::from_unit(kind, v).map_err(|e| contract(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        validate_embeddings(kind, route.declared_dim, images.len(), &vectors)?;
        Ok(vectors)
    }

    fn embed_dense(&self, images: &[FrameImage]) -> Result<Vec<FeatureMap>> {
        let req = EmbedRequest {
            images: encode_all(images)?,
            kind: EmbeddingKind::PatchObject,
            dense: true,
        };
        let (resp, _): (EmbedResponse, _) = self.call(Capability::EmbedPatchObject, "/v1/embed", &req)?;
        let maps = resp.maps.iter().map(dense_from_wire).collect::<Result<Vec<_>>>()?;
        check_dense(&maps, images)?;
        Ok(maps)
    }

    fn geometry(&self, images: &[FrameImage]) -> Result<GeometryResult> {
        let req = ImagesRequest {
            images: encode_all(images)?,
        };
        let (resp, _): (GeometryResponse, _) = self.call(Capability::Geometry, "/v1/geometry", &req)?;
        geometry_from_wire(&resp, images.len())
    }

    fn detect(&self, image: &FrameImage, labels: &[String]) -> Result<Vec<Detection>> {
        let req = DetectRequest {
            image: encode_image(image)?,
            labels: labels.to_vec(),
        };
        let (resp, _): (DetectResponse, _) = self.call(Capability::Detect, "/v1/detect", &req)?;
        check_detections(&resp.boxes, image, labels)?;
        Ok(resp.boxes)
    }

    fn segment(&self, image: &FrameImage, bbox: &BoundingBox) -> Result<RleMask> {
        let req = SegmentRequest {
            image: encode_image(image)?,
            bbox: *bbox,
        };
        let (resp, _): (SegmentResponse, _) = self.call(Capability::Segment, "/v1/segment", &req)?;
        if resp.area != resp.rle_mask.area() {
            return Err(Error::ProviderContract {
                capability: Capability::Segment,
                reason: format!("declared area {} but mask covers {}", resp.area, resp.rle_mask.area()),
            });
        }
        check_mask(&resp.rle_mask, image, bbox)?;
        Ok(resp.rle_mask)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let req = CompleteRequest {
            system: request.system.clone(),
            user: request.user.clone(),
            images: encode_all(&request.images)?,
        };
        let (resp, _): (CompleteResponse, _) = self.call(Capability::TextComplete, "/v1/complete", &req)?;
        Ok(resp.text)
    }

    fn ocr(&self, image: &FrameImage) -> Result<OcrResult> {
        let req = OcrRequest {
            image: encode_image(image)?,
        };
        Ok(self.call(Capability::Ocr, "/v1/ocr", &req)?.0)
    }

    fn aesthetics(&self, images: &[FrameImage]) -> Result<Vec<f64>> {
        let req = ImagesRequest {
            images: encode_all(images)?,
        };
        let (resp, _): (AestheticsResponse, _) = self.call(Capability::Aesthetics, "/v1/aesthetics", &req)?;
        check_scores(&resp.scores, images.len())?;
        Ok(resp.scores)
    }
}
