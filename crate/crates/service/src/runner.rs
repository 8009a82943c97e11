//! End-to-end run for one concept: prompts, corpus, masks, palettes, entry.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use gencolor_core::corpus::{generate_corpus, save_corpus, CorpusError, FixtureBackend, GenerateOptions};
use gencolor_core::evaluation::{Category, Condition};
use gencolor_core::pipeline::{extract_palettes_with_progress, PipelineError};
use gencolor_core::prompt::{
    build_prompts_with, enhance_context, ContextEnhancementTable, NegativePrompts, PromptError,
};
use gencolor_core::segmentation::{DetectAndMask, FixtureMaskSegmenter, SegmentParams, WholeImageSegmenter};
use gencolor_core::{
    fingerprint, sample_requests, ConceptSpec, ImageBackend, ImageCorpus, PaletteSet, PipelineParams,
    SampleSource, Segmenter, Style,
};

use crate::remote::{
    HttpDetector, HttpEndpoint, HttpImageBackend, HttpMasker, GENERATION_TOKEN_VAR,
    SEGMENTATION_TOKEN_VAR,
};
use crate::store::GalleryEntry;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);
const THUMBNAILS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenerationConfig {
    Http {
        url: String,
        #[serde(skip)]
        token: Option<String>,
    },
    /// Images read from a directory, e.g. a queried corpus.
    Fixture { dir: PathBuf, source: SampleSource },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentationConfig {
    Whole,
    /// `<id>.mask.png` files; `None` looks next to the corpus images.
    Fixture { dir: Option<PathBuf> },
    Http {
        detector_url: String,
        masker_url: String,
        #[serde(skip)]
        token: Option<String>,
        params: SegmentParams,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub generation: GenerationConfig,
    pub segmentation: SegmentationConfig,
    pub enhancements: ContextEnhancementTable,
    pub negatives: NegativePrompts,
    pub pipeline: PipelineParams,
    pub generate: GenerateOptions,
    /// Generated corpora are saved under `<corpus_out>/<entry id>/`.
    pub corpus_out: Option<PathBuf>,
    pub timeout: Duration,
}

impl RunConfig {
    pub fn new(generation: GenerationConfig, segmentation: SegmentationConfig) -> Self {
        Self {
            generation,
            segmentation,
            enhancements: ContextEnhancementTable::default(),
            negatives: NegativePrompts::default(),
            pipeline: PipelineParams::default(),
            generate: GenerateOptions::default(),
            corpus_out: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

/// What a caller asks for; everything else comes from [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub spec: ConceptSpec,
    /// Seeds guidance-scale and generation-seed sampling.
    #[serde(default)]
    pub prompt_seed: u64,
    /// Defaults to the evaluation condition implied by source and style.
    #[serde(default)]
    pub tag: Option<String>,
    #[serde(default)]
    pub category: Option<Category>,
}

impl RunRequest {
    pub fn new(spec: ConceptSpec) -> Self {
        Self {
            spec,
            prompt_seed: 0,
            tag: None,
            category: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Prompting,
    Generating,
    Segmenting,
    Associating,
    Storing,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub palettes: PaletteSet,
    pub entry: GalleryEntry,
}

/// Q, QC, G or GC when the source and style pin one down.
pub fn default_tag(source: SampleSource, style: &Style) -> String {
    let condition = match (source, style) {
        (SampleSource::Queried, Style::RealisticPhoto) => Some(Condition::Q),
        (SampleSource::Queried, Style::FlatDesign) => Some(Condition::QC),
        (SampleSource::Generated, Style::RealisticPhoto) => Some(Condition::G),
        (SampleSource::Generated, Style::FlatDesign) => Some(Condition::GC),
        _ => None,
    };
    condition.map_or_else(|| style.name().to_owned(), |c| c.name().to_owned())
}

fn build_backend(config: &RunConfig) -> Result<Box<dyn ImageBackend>, RunError> {
    Ok(match &config.generation {
        GenerationConfig::Http { url, token } => Box::new(HttpImageBackend {
            endpoint: match token {
                Some(t) => HttpEndpoint::new(url, Some(t.clone()), config.timeout),
                None => HttpEndpoint::from_env(url, GENERATION_TOKEN_VAR, config.timeout),
            },
        }),
        GenerationConfig::Fixture { dir, source } => Box::new(FixtureBackend::open(dir, *source)?),
    })
}

fn build_segmenter(config: &RunConfig, corpus_dir: Option<&Path>) -> Result<Box<dyn Segmenter>, RunError> {
    Ok(match &config.segmentation {
        SegmentationConfig::Whole => Box::new(WholeImageSegmenter),
        SegmentationConfig::Fixture { dir } => {
            let dir = dir.as_deref().or(corpus_dir).ok_or_else(|| {
                RunError::Config("fixture masks need a mask directory".to_owned())
            })?;
            Box::new(FixtureMaskSegmenter::new(dir))
        }
        SegmentationConfig::Http {
            detector_url,
            masker_url,
            token,
            params,
        } => {
            let endpoint = |url: &str| match token {
                Some(t) => HttpEndpoint::new(url, Some(t.clone()), config.timeout),
                None => HttpEndpoint::from_env(url, SEGMENTATION_TOKEN_VAR, config.timeout),
            };
            Box::new(DetectAndMask {
                detector: HttpDetector { endpoint: endpoint(detector_url) },
                masker: HttpMasker { endpoint: endpoint(masker_url) },
                params: *params,
            })
        }
    })
}

/// Everything that changes the output besides the spec itself.
fn param_fingerprint(request: &RunRequest, tag: &str, config: &RunConfig) -> String {
    let generation = match &config.generation {
        GenerationConfig::Http { url, .. } => format!("http:{url}"),
        GenerationConfig::Fixture { dir, source } => format!("fixture:{}:{source:?}", dir.display()),
    };
    fingerprint(&(
        &config.pipeline.association,
        config.pipeline.no_detection,
        request.prompt_seed,
        tag,
        generation,
        &config.segmentation,
        &config.enhancements,
        &config.negatives,
    ))
}

/// Runs the whole pipeline for `request`. `progress` receives the stage and
/// a fraction in [0, 1] within that stage.
pub fn run(
    request: &RunRequest,
    config: &RunConfig,
    progress: &(dyn Fn(Stage, f64) + Sync),
) -> Result<RunOutput, RunError> {
    let spec = &request.spec;
    progress(Stage::Prompting, 0.0);
    let enhanced = enhance_context(spec, &config.enhancements);
    let prompts = build_prompts_with(&enhanced, &config.negatives)?;
    let requests = sample_requests(spec, &prompts, request.prompt_seed)?;

    progress(Stage::Generating, 0.0);
    let backend = build_backend(config)?;
    let tag = request
        .tag
        .clone()
        .unwrap_or_else(|| default_tag(backend.source(), &spec.style));
    let param_fp = param_fingerprint(request, &tag, config);
    let mut entry = GalleryEntry::new(spec.clone(), Vec::new(), tag, param_fp);
    entry.category = request.category;

    let corpus: ImageCorpus = generate_corpus(spec, &requests, backend.as_ref(), &config.generate)?;
    let corpus_dir = match (&config.generation, &config.corpus_out) {
        (GenerationConfig::Fixture { dir, .. }, _) => Some(dir.clone()),
        (GenerationConfig::Http { .. }, Some(out)) => {
            let dir = out.join(&entry.id);
            save_corpus(&corpus, &dir)?;
            Some(dir)
        }
        (GenerationConfig::Http { .. }, None) => None,
    };
    if let Some(dir) = &corpus_dir {
        entry.thumbnails = corpus
            .samples()
            .iter()
            .map(|s| dir.join(format!("{}.png", s.id)))
            .filter(|p| p.exists())
            .take(THUMBNAILS)
            .map(|p| p.display().to_string())
            .collect();
    }

    progress(Stage::Segmenting, 0.0);
    let segmenter = build_segmenter(config, corpus_dir.as_deref())?;
    let seg_progress = |done: usize, total: usize| {
        progress(Stage::Segmenting, done as f64 / total.max(1) as f64);
        if done == total {
            progress(Stage::Associating, 0.0);
        }
    };
    let palettes = extract_palettes_with_progress(&corpus, segmenter.as_ref(), &config.pipeline, &seg_progress)?;
    progress(Stage::Associating, 1.0);

    entry.palettes = palettes.palettes.clone();
    Ok(RunOutput { palettes, entry })
}
