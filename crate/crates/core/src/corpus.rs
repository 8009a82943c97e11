//! Image samples, corpora, and the backends that produce them.
//!
//! Remote text-to-image services implement [`ImageBackend`] outside this
//! crate; [`FixtureBackend`] serves images from a local directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::color_space::Rgb8;
use crate::prompt::{ConceptSpec, GenerationRequest};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("request failed: {0}")]
    RequestFailed(String),
    #[error("no generation requests given")]
    NoRequests,
    #[error("only {succeeded} of {requested} images were produced (minimum {minimum})")]
    PartialCorpus {
        succeeded: usize,
        requested: usize,
        minimum: usize,
    },
    #[error("no decodable images found in {0}")]
    NoImagesFound(PathBuf),
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A row-major grid of sRGB pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgb8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb8>) -> Result<Self, CorpusError> {
        if width == 0 || height == 0 {
            return Err(CorpusError::InvalidImage("zero-sized image".into()));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(CorpusError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, color: Rgb8) -> Self {
        Self::from_fn(width, height, |_, _| color)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgb8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    /// Builds an image from tightly packed RGBA bytes, dropping alpha.
    pub fn from_rgba(width: u32, height: u32, rgba: &[u8]) -> Result<Self, CorpusError> {
        if rgba.len() != width as usize * height as usize * 4 {
            return Err(CorpusError::InvalidImage("RGBA buffer length mismatch".into()));
        }
        let pixels = rgba.chunks_exact(4).map(|p| Rgb8::new(p[0], p[1], p[2])).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?.into_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| Rgb8::new(p[0], p[1], p[2])).collect();
        Self::new(w, h, pixels).map_err(|e| e.to_string())
    }

    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes).map_err(|reason| CorpusError::Decode {
            path: path.to_owned(),
            reason,
        })
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let raw: Vec<u8> = self.pixels.iter().flat_map(|p| p.channels()).collect();
        let buf = image::RgbImage::from_raw(self.width, self.height, raw)
            .expect("buffer length matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding cannot fail");
        out.into_inner()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Generated,
    Queried,
    Fixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub source: SampleSource,
    pub image: RgbImage,
    pub request: Option<GenerationRequest>,
}

/// The images collected for one concept, ordered by identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCorpus {
    pub spec: ConceptSpec,
    samples: Vec<ImageSample>,
}

impl ImageCorpus {
    pub fn new(spec: ConceptSpec, mut samples: Vec<ImageSample>) -> Result<Self, CorpusError> {
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = samples.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(CorpusError::InvalidImage(format!("duplicate sample id {}", w[0].id)));
        }
        Ok(Self { spec, samples })
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Something that turns a generation request into an image. `slot` is the
/// request's position in the batch.
pub trait ImageBackend: Send + Sync {
    fn generate(&self, slot: usize, request: &GenerationRequest) -> Result<RgbImage, CorpusError>;

    fn source(&self) -> SampleSource {
        SampleSource::Generated
    }

    /// Corpus id for the image produced in `slot`.
    fn sample_id(&self, slot: usize, request: &GenerationRequest) -> String {
        sample_id(slot, request)
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    /// Retries after the first failed attempt.
    pub retries: u32,
    pub initial_backoff: Duration,
    /// Fraction of requests that must succeed.
    pub min_success_fraction: f64,
    pub parallelism: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            retries: 2,
            initial_backoff: Duration::from_millis(500),
            min_success_fraction: 0.8,
            parallelism: 4,
        }
    }
}

pub fn sample_id(slot: usize, request: &GenerationRequest) -> String {
    format!("{slot:04}-{:016x}", request.seed)
}

fn generate_one(
    backend: &dyn ImageBackend,
    slot: usize,
    request: &GenerationRequest,
    options: &GenerateOptions,
) -> Result<RgbImage, CorpusError> {
    let mut backoff = options.initial_backoff;
    let mut attempt = 0;
    loop {
        match backend.generate(slot, request) {
            Ok(img) => return Ok(img),
            Err(e @ CorpusError::BackendUnavailable(_)) => return Err(e),
            Err(e) if attempt >= options.retries => return Err(e),
            Err(e) => {
                log::debug!("slot {slot}: attempt {} failed: {e}", attempt + 1);
                if !backoff.is_zero() {
                    std::thread::sleep(backoff);
                }
                backoff *= 2;
                attempt += 1;
            }
        }
    }
}

/// Runs every request against `backend`, up to `options.parallelism` at a
/// time, and assembles the successful images into a corpus.
pub fn generate_corpus(
    spec: &ConceptSpec,
    requests: &[GenerationRequest],
    backend: &dyn ImageBackend,
    options: &GenerateOptions,
) -> Result<ImageCorpus, CorpusError> {
    if requests.is_empty() {
        return Err(CorpusError::NoRequests);
    }
    let results: Vec<Mutex<Option<Result<RgbImage, CorpusError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = options.parallelism.clamp(1, requests.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = next.fetch_add(1, Ordering::Relaxed);
                let Some(request) = requests.get(slot) else { break };
                let r = generate_one(backend, slot, request, options);
                *results[slot].lock().unwrap() = Some(r);
            });
        }
    });

    let mut samples = Vec::with_capacity(requests.len());
    let mut first_unavailable = None;
    for (slot, (cell, request)) in results.into_iter().zip(requests).enumerate() {
        match cell.into_inner().unwrap().expect("every slot is processed") {
            Ok(image) => samples.push(ImageSample {
                id: backend.sample_id(slot, request),
                source: backend.source(),
                image,
                request: Some(request.clone()),
            }),
            Err(e) => {
                log::warn!("slot {slot} (seed {}) failed: {e}", request.seed);
                if first_unavailable.is_none() && matches!(e, CorpusError::BackendUnavailable(_)) {
                    first_unavailable = Some(e);
                }
            }
        }
    }
    if samples.is_empty() {
        if let Some(e) = first_unavailable {
            return Err(e);
        }
    }
    let minimum = (options.min_success_fraction * requests.len() as f64).ceil() as usize;
    if samples.len() < minimum.max(1) {
        return Err(CorpusError::PartialCorpus {
            succeeded: samples.len(),
            requested: requests.len(),
            minimum,
        });
    }
    ImageCorpus::new(spec.clone(), samples)
}

fn is_mask_file(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".mask.png"))
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .filter(|p| !is_mask_file(p))
        .collect();
    paths.sort();
    Ok(paths)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_owned()
}

/// Loads every image in `dir`, sorted by file name. Undecodable files are
/// skipped with a warning. `<id>.json` sidecars, when present, supply the
/// generation request.
pub fn load_fixture_corpus(
    dir: &Path,
    spec: &ConceptSpec,
    source: SampleSource,
) -> Result<ImageCorpus, CorpusError> {
    let mut samples = Vec::new();
    for path in list_images(dir)? {
        let image = match RgbImage::open(&path) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let id = stem(&path);
        let sidecar = dir.join(format!("{id}.json"));
        let request = match fs::read(&sidecar) {
            Ok(bytes) => Some(serde_json::from_slice(&bytes)?),
            Err(_) => None,
        };
        samples.push(ImageSample { id, source, image, request });
    }
    if samples.is_empty() {
        return Err(CorpusError::NoImagesFound(dir.to_owned()));
    }
    ImageCorpus::new(spec.clone(), samples)
}

/// Writes `<id>.png` plus a `<id>.json` request sidecar for each sample.
pub fn save_corpus(corpus: &ImageCorpus, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    for s in corpus.samples() {
        fs::write(dir.join(format!("{}.png", s.id)), s.image.encode_png())?;
        if let Some(req) = &s.request {
            fs::write(dir.join(format!("{}.json", s.id)), serde_json::to_vec_pretty(req)?)?;
        }
    }
    Ok(())
}

/// Serves images from a directory: slot `i` gets the `i`-th file in name
/// order.
#[derive(Debug)]
pub struct FixtureBackend {
    paths: Vec<PathBuf>,
    source: SampleSource,
}

impl FixtureBackend {
    pub fn open(dir: &Path, source: SampleSource) -> Result<Self, CorpusError> {
        if !dir.is_dir() {
            return Err(CorpusError::BackendUnavailable(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        let paths = list_images(dir)?;
        if paths.is_empty() {
            return Err(CorpusError::NoImagesFound(dir.to_owned()));
        }
        Ok(Self { paths, source })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

impl ImageBackend for FixtureBackend {
    fn generate(&self, slot: usize, _request: &GenerationRequest) -> Result<RgbImage, CorpusError> {
        let path = self.paths.get(slot).ok_or_else(|| {
            CorpusError::RequestFailed(format!("no fixture image for slot {slot}"))
        })?;
        RgbImage::open(path)
    }

    fn source(&self) -> SampleSource {
        self.source
    }

    /// Keeps the file stem so fixture masks and sidecars line up.
    fn sample_id(&self, slot: usize, request: &GenerationRequest) -> String {
        match self.paths.get(slot) {
            Some(path) => stem(path),
            None => sample_id(slot, request),
        }
    }
}
