//! Blocking HTTP clients for the generation, detection and masking services.
//!
//! All three speak JSON. Images travel as base64-encoded PNG.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use gencolor_core::corpus::CorpusError;
use gencolor_core::prompt::GenerationRequest;
use gencolor_core::segmentation::{Detector, Masker, SegmentError};
use gencolor_core::{DetectionBox, ImageBackend, RgbImage, SampleSource, SegmentMask};

pub const GENERATION_TOKEN_VAR: &str = "GENCOLOR_BACKEND_TOKEN";
pub const SEGMENTATION_TOKEN_VAR: &str = "GENCOLOR_SEG_TOKEN";

const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    /// Base64 PNG.
    pub image: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub confidence: f64,
    #[serde(default)]
    pub phrase: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<WireDetection>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskRequest {
    pub image: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

/// Run lengths over row-major pixels, starting with an unset run.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaskResponse {
    pub width: u32,
    pub height: u32,
    pub rle: Vec<u32>,
}

pub fn encode_image(image: &RgbImage) -> String {
    B64.encode(image.encode_png())
}

pub fn decode_image(data: &str) -> Result<RgbImage, String> {
    let bytes = B64.decode(data.trim()).map_err(|e| format!("bad base64: {e}"))?;
    RgbImage::decode(&bytes)
}

#[derive(Debug)]
enum CallError {
    /// Misconfiguration or unreachable service; retrying will not help.
    Unavailable(String),
    Failed(String),
}

/// Shared JSON-over-POST plumbing.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub url: String,
    pub token: Option<String>,
    agent: ureq::Agent,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            token: token.filter(|t| !t.is_empty()),
            agent,
        }
    }

    /// Reads the bearer token from `token_var`.
    pub fn from_env(url: impl Into<String>, token_var: &str, timeout: Duration) -> Self {
        Self::new(url, std::env::var(token_var).ok(), timeout)
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, CallError> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::BadUri(_) => {
                CallError::Unavailable(format!("{}: {e}", self.url))
            }
            ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::ConnectionRefused => {
                CallError::Unavailable(format!("{}: {e}", self.url))
            }
            other => CallError::Failed(format!("{}: {other}", self.url)),
        })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 | 404 => {
                return Err(CallError::Unavailable(format!("{}: HTTP {status}", self.url)));
            }
            _ => return Err(CallError::Failed(format!("{}: HTTP {status}", self.url))),
        }
        resp.body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_json()
            .map_err(|e| CallError::Failed(format!("{}: bad response: {e}", self.url)))
    }
}

/// Text-to-image service: POSTs the [`GenerationRequest`] as JSON and
/// expects `{"image": "<base64 png>"}`.
#[derive(Debug, Clone)]
pub struct HttpImageBackend {
    pub endpoint: HttpEndpoint,
}

impl ImageBackend for HttpImageBackend {
    fn generate(&self, _slot: usize, request: &GenerationRequest) -> Result<RgbImage, CorpusError> {
        let resp: GenerateResponse = self.endpoint.post(request).map_err(|e| match e {
            CallError::Unavailable(m) => CorpusError::BackendUnavailable(m),
            CallError::Failed(m) => CorpusError::RequestFailed(m),
        })?;
        decode_image(&resp.image).map_err(CorpusError::InvalidImage)
    }

    fn source(&self) -> SampleSource {
        SampleSource::Generated
    }
}

fn seg_error(e: CallError) -> SegmentError {
    match e {
        CallError::Unavailable(m) | CallError::Failed(m) => SegmentError::BackendUnavailable(m),
    }
}

#[derive(Debug, Clone)]
pub struct HttpDetector {
    pub endpoint: HttpEndpoint,
}

impl Detector for HttpDetector {
    fn detect(&self, image: &RgbImage, text: &str) -> Result<Vec<DetectionBox>, SegmentError> {
        let body = DetectRequest {
            image: encode_image(image),
            text: text.to_owned(),
        };
        let resp: DetectResponse = self.endpoint.post(&body).map_err(seg_error)?;
        Ok(resp
            .detections
            .into_iter()
            .enumerate()
            .map(|(i, d)| DetectionBox {
                phrase: d.phrase,
                ..DetectionBox::new(i as u32, d.bbox, d.confidence)
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct HttpMasker {
    pub endpoint: HttpEndpoint,
}

impl Masker for HttpMasker {
    fn mask(&self, image: &RgbImage, prompt: &DetectionBox) -> Result<SegmentMask, SegmentError> {
        let body = MaskRequest {
            image: encode_image(image),
            bbox: [prompt.x0, prompt.y0, prompt.x1, prompt.y1],
        };
        let resp: MaskResponse = self.endpoint.post(&body).map_err(seg_error)?;
        if (resp.width, resp.height) != (image.width(), image.height()) {
            return Err(SegmentError::InvalidMask(format!(
                "masker returned {}x{} for a {}x{} image",
                resp.width,
                resp.height,
                image.width(),
                image.height()
            )));
        }
        SegmentMask::from_rle(resp.width, resp.height, &resp.rle)
    }
}
