use std::sync::Arc;

use idvid::ingest::FrameImage;
use idvid::model::EmbeddingKind;
use idvid::providers::*;
use rayon::prelude::*;

fn scene_image(label: &str, shift: u32) -> FrameImage {
    let c = label_color(label);
    FrameImage::from_fn(48, 40, |x, y| {
        if (8 + shift..28 + shift).contains(&x) && (10..30).contains(&y) {
            c
        } else {
            let v = 90 + ((x / 6 + y / 6) % 2) as u8 * 50;
            [v, v, v]
        }
    })
}

fn client(url: String, retries: u32) -> HttpProvider {
    let mut s = HttpSettings::new(url);
    s.token = None;
    s.max_retries = retries;
    s.backoff_ms = 1;
    s.timeout_ms = 5_000;
    HttpProvider::new(s).unwrap()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6)
}

#[test]
fn wire_round_trip_matches_direct_calls() {
    let mock = Arc::new(MockProvider::default());
    let server = MockServer::start(mock.clone()).unwrap();
    let http = client(server.url(), 0);
    let imgs = [scene_image("mug", 0), scene_image("mug", 3)];
    assert_eq!(http.health().unwrap(), mock.health().unwrap());
    for kind in [EmbeddingKind::Global, EmbeddingKind::PatchObject, EmbeddingKind::Perceptual] {
        let (a, b) = (http.embed(kind, &imgs).unwrap(), mock.embed(kind, &imgs).unwrap());
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.kind(), kind);
            assert!(close(x.values(), y.values()));
        }
    }
    let (a, b) = (http.embed_dense(&imgs).unwrap(), mock.embed_dense(&imgs).unwrap());
    assert_eq!((a[0].width, a[0].height, a[0].dim), (b[0].width, b[0].height, b[0].dim));
    assert!(close(&a[1].data, &b[1].data));
    let (a, b) = (http.geometry(&imgs).unwrap(), mock.geometry(&imgs).unwrap());
    a.validate().unwrap();
    assert_eq!(a.views.len(), 2);
    let flat = |g: &GeometryResult| g.views.iter().flat_map(|v| v.pointmap.iter().flat_map(|p| [p.x, p.y, p.z])).collect::<Vec<_>>();
    assert!(close(&flat(&a), &flat(&b)));
    let labels = vec!["mug".to_string(), "lamp".to_string()];
    let d = http.detect(&imgs[0], &labels).unwrap();
    assert_eq!(d, mock.detect(&imgs[0], &labels).unwrap());
    assert_eq!(http.segment(&imgs[0], &d[0].bbox).unwrap(), mock.segment(&imgs[0], &d[0].bbox).unwrap());
    let req = CompletionRequest {
        system: "describe".into(),
        user: "what is shown".into(),
        images: imgs.to_vec(),
    };
    assert_eq!(http.complete(&req).unwrap(), mock.complete(&req).unwrap());
    assert_eq!(http.ocr(&imgs[0]).unwrap(), mock.ocr(&imgs[0]).unwrap());
    assert!(close(&http.aesthetics(&imgs).unwrap(), &mock.aesthetics(&imgs).unwrap()));
}

#[test]
fn conformance_passes_directly_and_over_http() {
    let mock = Arc::new(MockProvider::default());
    let expect = ConformanceExpectations {
        required: Capability::ALL.into_iter().collect(),
        ..ConformanceExpectations::default()
    };
    let direct = run_conformance(mock.as_ref(), &expect);
    assert!(direct.iter().all(|c| c.passed), "{direct:#?}");
    let server = MockServer::start(mock).unwrap();
    let remote = run_conformance(&client(server.url(), 0), &expect);
    assert!(remote.iter().all(|c| c.passed), "{remote:#?}");
    assert_eq!(
        direct.iter().map(|c| &c.name).collect::<Vec<_>>(),
        remote.iter().map(|c| &c.name).collect::<Vec<_>>()
    );
}

#[test]
fn withheld_capabilities_are_unsupported_end_to_end() {
    let mock = Arc::new(MockProvider::new(MockConfig {
        disabled: [Capability::Geometry, Capability::EmbedPerceptual].into(),
        ..MockConfig::default()
    }));
    let server = MockServer::start(mock.clone()).unwrap();
    let http = client(server.url(), 2);
    let e = http.geometry(&[scene_image("mug", 0)]).unwrap_err();
    assert_eq!(e.code(), "UNSUPPORTED_CAPABILITY");
    let before = server.request_count();
    assert_eq!(http.embed(EmbeddingKind::Perceptual, &[scene_image("mug", 0)]).unwrap_err().code(), "UNSUPPORTED_CAPABILITY");
    assert!(server.request_count() - before <= 1, "501 is never retried");
    let checks = run_conformance(&http, &ConformanceExpectations::default());
    assert!(checks.iter().all(|c| c.passed), "{checks:#?}");
    let strict = ConformanceExpectations {
        required: [Capability::Geometry].into(),
        ..ConformanceExpectations::default()
    };
    assert!(run_conformance(mock.as_ref(), &strict).iter().any(|c| !c.passed));
}

#[test]
fn transient_failures_are_retried_with_a_budget() {
    let server = MockServer::start(Arc::new(MockProvider::default())).unwrap();
    let http = client(server.url(), 2);
    http.health().unwrap();
    let start = http.attempts();
    server.inject_failures(2);
    assert_eq!(http.ocr(&scene_image("mug", 0)).unwrap().char_count, 0);
    assert_eq!(http.attempts() - start, 3);
    server.inject_failures(3);
    let e = http.ocr(&scene_image("mug", 0)).unwrap_err();
    assert_eq!(e.code(), "PROVIDER_UNAVAILABLE");
    assert_eq!(http.attempts() - start, 6);
}

#[test]
fn bearer_token_is_enforced() {
    let server = MockServer::start_with_token(Arc::new(MockProvider::default()), Some("s3cret".into())).unwrap();
    let anonymous = client(server.url(), 0);
    assert!(anonymous.ocr(&scene_image("mug", 0)).is_err());
    let mut s = HttpSettings::new(server.url());
    s.token = Some("s3cret".into());
    let authed = HttpProvider::new(s).unwrap();
    authed.ocr(&scene_image("mug", 0)).unwrap();
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let http = client(format!("http://{dead}"), 1);
    let e = http.aesthetics(&[scene_image("mug", 0)]).unwrap_err();
    assert_eq!(e.code(), "PROVIDER_UNAVAILABLE");
    assert_eq!(http.attempts(), 2);
}

#[test]
fn per_capability_overrides_route_elsewhere() {
    let main = MockServer::start(Arc::new(MockProvider::default())).unwrap();
    let ocr = MockServer::start(Arc::new(MockProvider::default())).unwrap();
    let mut s = HttpSettings::new(main.url());
    s.backoff_ms = 1;
    s.overrides.insert(
        Capability::Ocr,
        ProviderDescriptor {
            capability: Capability::Ocr,
            endpoint: ocr.url(),
            declared_dim: None,
            version: "ocr-x".into(),
            timeout_ms: 5_000,
            max_retries: 0,
        },
    );
    let http = HttpProvider::new(s).unwrap();
    let before = main.request_count();
    http.ocr(&scene_image("mug", 0)).unwrap();
    assert!(ocr.request_count() >= 1);
    assert_eq!(main.request_count(), before);
}

#[test]
fn wrappers_count_fail_and_limit() {
    let counting = CountingProvider::new(MockProvider::default());
    let img = scene_image("vase", 0);
    counting.embed(EmbeddingKind::Global, &[img.clone(), img.clone()]).unwrap();
    counting.ocr(&img).unwrap();
    counting.ocr(&img).unwrap();
    assert_eq!(counting.count(Capability::Ocr), 2);
    assert_eq!(counting.count(Capability::EmbedGlobal), 1);
    assert_eq!(counting.total(), 3);

    let failing = FailAfter::new(&counting, 2);
    failing.ocr(&img).unwrap();
    failing.aesthetics(&[img.clone()]).unwrap();
    let e = failing.ocr(&img).unwrap_err();
    assert_eq!(e.code(), "PROVIDER_UNAVAILABLE");
    assert_eq!(counting.total(), 5);

    let limited = Limited::new(MockProvider::default(), 2);
    (0..32).into_par_iter().for_each(|i| {
        limited.embed(EmbeddingKind::Global, &[scene_image("mug", i % 8)]).unwrap();
    });
    assert!(limited.peak() <= 2 && limited.peak() >= 1);
}

#[test]
fn registry_survives_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let reg = SceneRegistry::new();
    let tex = Texture {
        primary: label_color("ring"),
        secondary: [20, 20, 20],
        cell: 0.3,
    };
    let frame = reg.register(
        SceneSpec::Sphere {
            center: [0.0; 3],
            radius: 1.0,
            texture: tex,
        },
        Camera::new(32, 24, 30.0).orbit(nalgebra::Point3::origin(), 3.0, 0.3),
    );
    let path = dir.path().join("scenes.json");
    reg.save(&path).unwrap();
    let loaded = SceneRegistry::new();
    loaded.load(&path).unwrap();
    assert_eq!(loaded.len(), 1);
    let m = MockProvider::default().with_registry(loaded);
    let g = m.geometry(&[frame.clone(), frame]).unwrap();
    g.validate().unwrap();
    assert!(g.views[0].confidence.iter().any(|c| *c == 1.0));
    assert!(g.views[0].pointmap.iter().filter(|p| p.x.is_finite()).all(|p| ((p.coords.norm_squared()) - 0.0).is_finite()));
}
