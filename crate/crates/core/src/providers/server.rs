use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tiny_http::{Header, Response, Server};

use super::wire::*;
use super::{CompletionRequest, ModelProvider};
use crate::error::{Error, Result};
use crate::ingest::FrameImage;

struct Shared {
    provider: Arc<dyn ModelProvider>,
    token: Option<String>,
    fail_next: AtomicUsize,
    requests: AtomicUsize,
}

/// Serves a [`ModelProvider`] over the wire protocol on a loopback port.
///
/// Each request is handled on its own thread.
pub struct MockServer {
    addr: SocketAddr,
    server: Arc<Server>,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(provider: Arc<dyn ModelProvider>) -> Result<MockServer> {
        Self::start_with_token(provider, None)
    }

    /// Requests must carry `Authorization: Bearer <token>` when set.
    pub fn start_with_token(provider: Arc<dyn ModelProvider>, token: Option<String>) -> Result<MockServer> {
        let server = Server::http("127.0.0.1:0").map_err(|e| Error::io("127.0.0.1:0", std::io::Error::other(e.to_string())))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::io("127.0.0.1:0", std::io::Error::other("not an IP listener")))?;
        let server = Arc::new(server);
        let shared = Arc::new(Shared {
            provider,
            token,
            fail_next: AtomicUsize::new(0),
            requests: AtomicUsize::new(0),
        });
        let (srv, accept) = (server.clone(), shared.clone());
        let handle = std::thread::spawn(move || {
            for request in srv.incoming_requests() {
                let s = accept.clone();
                std::thread::spawn(move || serve(&s, request));
            }
        });
        Ok(MockServer {
            addr,
            server,
            shared,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// The next `n` requests are answered with 503.
    pub fn inject_failures(&self, n: usize) {
        self.shared.fail_next.store(n, Ordering::SeqCst);
    }

    pub fn request_count(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

struct Request {
    method: String,
    path: String,
    body: Vec<u8>,
}

fn serve(shared: &Shared, mut request: tiny_http::Request) {
    shared.requests.fetch_add(1, Ordering::SeqCst);
    let mut body = Vec::new();
    let read = request.as_reader().read_to_end(&mut body);
    let authorization = request
        .headers()
        .iter()
        .find(|h| h.field.equiv("Authorization"))
        .map(|h| h.value.as_str().to_string());
    let req = Request {
        method: request.method().as_str().to_string(),
        path: request.url().to_string(),
        body,
    };
    let injected = shared
        .fail_next
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    let (status, body) = if injected {
        error_body(503, "PROVIDER_UNAVAILABLE", "injected failure")
    } else if let Err(e) = read {
        error_body(400, "MALFORMED", &format!("request body: {e}"))
    } else if shared
        .token
        .as_ref()
        .is_some_and(|t| authorization.as_deref() != Some(&format!("Bearer {t}")))
    {
        error_body(401, "UNAUTHORIZED", "missing or wrong bearer token")
    } else {
        match route(shared.provider.as_ref(), &req) {
            Ok(body) => (200, body),
            Err(e) => {
                let status = match &e {
                    Error::Unsupported(_) => 501,
                    Error::ProviderUnavailable { .. } => 503,
                    Error::Malformed(_) | Error::Json(_) | Error::DimensionMismatch { .. } => 400,
                    Error::PreconditionFailed(_) => 404,
                    _ => 500,
                };
                error_body(status, e.code(), &e.to_string())
            }
        }
    };
    let content_type = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let _ = request.respond(Response::from_data(body).with_status_code(status).with_header(content_type));
}

fn error_body(status: u16, code: &str, message: &str) -> (u16, Vec<u8>) {
    let body = ErrorBody {
        code: code.to_string(),
        error: message.to_string(),
    };
    (status, serde_json::to_vec(&body).unwrap_or_default())
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::Malformed(format!("request body: {e}")))
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(value)?)
}

fn images(list: &[String]) -> Result<Vec<FrameImage>> {
    list.iter().map(|s| decode_image(s)).collect()
}

fn route(p: &dyn ModelProvider, req: &Request) -> Result<Vec<u8>> {
    match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/v1/health") => json(&p.health()?),
        ("POST", "/v1/embed") => {
            let r: EmbedRequest = parse(&req.body)?;
            let imgs = images(&r.images)?;
            if r.dense {
                let maps = p.embed_dense(&imgs)?;
                json(&EmbedResponse {
                    dim: maps.first().map_or(0, |m| m.dim),
                    embeddings: Vec::new(),
                    maps: maps.iter().map(dense_to_wire).collect(),
                })
            } else {
                let embs = p.embed(r.kind, &imgs)?;
                json(&EmbedResponse {
                    dim: embs.first().map_or(0, |e| e.dim()),
                    embeddings: embs.iter().map(|e| e.values().to_vec()).collect(),
                    maps: Vec::new(),
                })
            }
        }
        ("POST", "/v1/geometry") => {
            let r: ImagesRequest = parse(&req.body)?;
            json(&geometry_to_wire(&p.geometry(&images(&r.images)?)?)?)
        }
        ("POST", "/v1/detect") => {
            let r: DetectRequest = parse(&req.body)?;
            json(&DetectResponse {
                boxes: p.detect(&decode_image(&r.image)?, &r.labels)?,
            })
        }
        ("POST", "/v1/segment") => {
            let r: SegmentRequest = parse(&req.body)?;
            let mask = p.segment(&decode_image(&r.image)?, &r.bbox)?;
            json(&SegmentResponse {
                area: mask.area(),
                rle_mask: mask,
            })
        }
        ("POST", "/v1/complete") => {
            let r: CompleteRequest = parse(&req.body)?;
            let text = p.complete(&CompletionRequest {
                system: r.system,
                user: r.user,
                images: images(&r.images)?,
            })?;
            json(&CompleteResponse { text })
        }
        ("POST", "/v1/ocr") => {
            let r: OcrRequest = parse(&req.body)?;
            json(&p.ocr(&decode_image(&r.image)?)?)
        }
        ("POST", "/v1/aesthetics") => {
            let r: ImagesRequest = parse(&req.body)?;
            json(&AestheticsResponse {
                scores: p.aesthetics(&images(&r.images)?)?,
            })
        }
        (m, path) => Err(Error::PreconditionFailed(format!("no route {m} {path}"))),
    }
}
