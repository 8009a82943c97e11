//! HTTP backends against in-process stub services.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};

use gencolor_core::corpus::{generate_corpus, CorpusError, GenerateOptions};
use gencolor_core::prompt::GenerationRequest;
use gencolor_core::segmentation::{segment_concept, SegmentParams};
use gencolor_core::{ciede2000, sample_requests, build_prompts, ConceptSpec, ImageBackend, Rgb8, RgbImage, SegmentMask};
use gencolor_service::remote::*;
use gencolor_service::runner::{run, GenerationConfig, RunConfig, RunRequest, SegmentationConfig};

use common::{dead_url, spawn_server};

const RED: Rgb8 = Rgb8::new(200, 40, 40);
const BLUE: Rgb8 = Rgb8::new(30, 60, 200);
const SIZE: u32 = 64;

/// Left 40% red, rest blue.
fn scene() -> RgbImage {
    RgbImage::from_fn(SIZE, SIZE, |x, _| if in_left(x) { RED } else { BLUE })
}

fn in_left(x: u32) -> bool {
    f64::from(x) + 0.5 < f64::from(SIZE) * 0.4
}

#[derive(Default)]
struct Stub {
    calls: AtomicUsize,
    /// The first `fail_first` generation calls answer 503.
    fail_first: usize,
}

async fn generate(
    State(stub): State<Arc<Stub>>,
    headers: HeaderMap,
    Json(req): Json<GenerationRequest>,
) -> Result<Json<GenerateResponse>, StatusCode> {
    if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some("Bearer sekrit") {
        return Err(StatusCode::UNAUTHORIZED);
    }
    assert!((3.0..=6.0).contains(&req.guidance_scale));
    if stub.calls.fetch_add(1, Ordering::SeqCst) < stub.fail_first {
        return Err(StatusCode::SERVICE_UNAVAILABLE);
    }
    let mut image = scene();
    if req.width != SIZE {
        image = RgbImage::filled(req.width, req.height, RED);
    }
    Ok(Json(GenerateResponse { image: encode_image(&image) }))
}

async fn detect(Json(req): Json<DetectRequest>) -> Json<DetectResponse> {
    let image = decode_image(&req.image).unwrap();
    assert_eq!(req.text, "apple");
    let w = f64::from(image.width());
    let h = f64::from(image.height());
    Json(DetectResponse {
        detections: vec![
            WireDetection { bbox: [0.0, 0.0, w * 0.4, h], confidence: 0.9, phrase: "apple".into() },
            // Overlaps the first; suppressed by NMS.
            WireDetection { bbox: [0.0, 0.0, w * 0.38, h], confidence: 0.8, phrase: "apple".into() },
            // Below the box threshold.
            WireDetection { bbox: [w * 0.5, 0.0, w, h], confidence: 0.1, phrase: "apple".into() },
        ],
    })
}

async fn mask(Json(req): Json<MaskRequest>) -> Json<MaskResponse> {
    let image = decode_image(&req.image).unwrap();
    let [x0, y0, x1, y1] = req.bbox;
    let m = SegmentMask::from_fn(image.width(), image.height(), |x, y| {
        let (x, y) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        x >= x0 && x < x1 && y >= y0 && y < y1
    });
    Json(MaskResponse { width: m.width(), height: m.height(), rle: m.to_rle() })
}

fn stub_server(fail_first: usize) -> (String, Arc<Stub>) {
    let stub = Arc::new(Stub { fail_first, ..Stub::default() });
    let router = Router::new()
        .route("/generate", post(generate))
        .route("/detect", post(detect))
        .route("/mask", post(mask))
        .with_state(Arc::clone(&stub));
    (spawn_server(router), stub)
}

fn endpoint(url: String) -> HttpEndpoint {
    HttpEndpoint::new(url, Some("sekrit".into()), Duration::from_secs(10))
}

fn requests(n: u32) -> (ConceptSpec, Vec<GenerationRequest>) {
    let mut spec = ConceptSpec::new("apple");
    spec.image_count = n;
    spec.resolution = SIZE;
    let prompts = build_prompts(&spec).unwrap();
    let reqs = sample_requests(&spec, &prompts, 7).unwrap();
    (spec, reqs)
}

#[test]
fn generation_round_trip() {
    let (base, _) = stub_server(0);
    let backend = HttpImageBackend { endpoint: endpoint(format!("{base}/generate")) };
    let (_, reqs) = requests(1);
    assert_eq!(backend.generate(0, &reqs[0]).unwrap(), scene());
}

#[test]
fn transient_failures_are_retried() {
    let (base, stub) = stub_server(2);
    let backend = HttpImageBackend { endpoint: endpoint(format!("{base}/generate")) };
    let (spec, reqs) = requests(3);
    let options = GenerateOptions {
        initial_backoff: Duration::from_millis(1),
        parallelism: 1,
        ..GenerateOptions::default()
    };
    let corpus = generate_corpus(&spec, &reqs, &backend, &options).unwrap();
    assert_eq!(corpus.len(), 3);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 5);
}

#[test]
fn bad_token_and_dead_host_are_unavailable() {
    let (base, _) = stub_server(0);
    let (_, reqs) = requests(1);
    let wrong = HttpImageBackend {
        endpoint: HttpEndpoint::new(format!("{base}/generate"), Some("nope".into()), Duration::from_secs(5)),
    };
    assert!(matches!(wrong.generate(0, &reqs[0]), Err(CorpusError::BackendUnavailable(_))));
    let dead = HttpImageBackend { endpoint: endpoint(dead_url()) };
    assert!(matches!(dead.generate(0, &reqs[0]), Err(CorpusError::BackendUnavailable(_))));
}

#[test]
fn detect_then_mask() {
    let (base, _) = stub_server(0);
    let detector = HttpDetector { endpoint: endpoint(format!("{base}/detect")) };
    let masker = HttpMasker { endpoint: endpoint(format!("{base}/mask")) };
    let image = scene();
    let m = segment_concept(&image, "apple", &detector, &masker, &SegmentParams::default()).unwrap();
    let expected = SegmentMask::from_fn(SIZE, SIZE, |x, _| in_left(x));
    assert_eq!(m, expected);
}

#[test]
fn full_run_over_http_masks_the_concept() {
    let (base, _) = stub_server(0);
    let mut config = RunConfig::new(
        GenerationConfig::Http { url: format!("{base}/generate"), token: Some("sekrit".into()) },
        SegmentationConfig::Http {
            detector_url: format!("{base}/detect"),
            masker_url: format!("{base}/mask"),
            token: Some("sekrit".into()),
            params: SegmentParams::default(),
        },
    );
    let out_dir = tempfile::tempdir().unwrap();
    config.corpus_out = Some(out_dir.path().to_owned());
    let (spec, _) = requests(6);
    let out = run(&RunRequest::new(spec), &config, &|_, _| {}).unwrap();
    let top = out.palettes.top().unwrap();
    assert!(ciede2000(top.primary.to_lab(), RED.to_lab()) < 1.0, "{}", top.primary);
    assert_eq!(out.entry.tag, "G");
    // The generated corpus is kept on disk as PNG + request sidecar.
    let saved = out_dir.path().join(&out.entry.id);
    assert_eq!(std::fs::read_dir(&saved).unwrap().count(), 12);
    assert_eq!(out.entry.thumbnails.len(), 4);
}
