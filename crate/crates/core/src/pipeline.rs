//! Segmentation and colour association over a whole corpus.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::association::{
    compose_palettes, AssociationError, AssociationParams, ImageColorSummary, PaletteComposition,
};
use crate::corpus::ImageCorpus;
use crate::prompt::ConceptSpec;
use crate::segmentation::{segment_with_policy, NoDetectionPolicy, SegmentError, Segmenter};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("segmentation failed for {id}: {source}")]
    Segment {
        id: String,
        #[source]
        source: SegmentError,
    },
    #[error(transparent)]
    Association(#[from] AssociationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub association: AssociationParams,
    pub no_detection: NoDetectionPolicy,
    pub parallelism: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            association: AssociationParams::default(),
            no_detection: NoDetectionPolicy::default(),
            parallelism: 4,
        }
    }
}

/// The serialised product for one concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteSet {
    pub spec: ConceptSpec,
    pub palettes: Vec<PaletteComposition>,
    /// Images left out, with the reason.
    #[serde(default)]
    pub skipped: Vec<(String, String)>,
}

impl PaletteSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("palette set serialises")
    }

    pub fn top(&self) -> Option<&PaletteComposition> {
        self.palettes.first()
    }
}

type SummaryResult = Result<Option<ImageColorSummary>, (String, String)>;

/// Masks and bins every image. Images the segmenter skips, or whose mask
/// selects no pixels, are reported in the second return value.
pub fn summarize_corpus(
    corpus: &ImageCorpus,
    segmenter: &dyn Segmenter,
    params: &PipelineParams,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<(Vec<ImageColorSummary>, Vec<(String, String)>), PipelineError> {
    let samples = corpus.samples();
    let concept = corpus.spec.concept.as_str();
    let results: Vec<Mutex<Option<Result<SummaryResult, PipelineError>>>> =
        samples.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let workers = params.parallelism.clamp(1, samples.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sample) = samples.get(i) else { break };
                let r = match segment_with_policy(segmenter, sample, concept, params.no_detection) {
                    Ok(None) => Ok(Err((sample.id.clone(), "no detections".to_owned()))),
                    Ok(Some(mask)) => Ok(match ImageColorSummary::from_image(
                        sample.id.clone(),
                        &sample.image,
                        &mask,
                        params.association.stride,
                    ) {
                        Ok(s) => Ok(Some(s)),
                        Err(AssociationError::EmptyMask) => {
                            Err((sample.id.clone(), "empty mask".to_owned()))
                        }
                        Err(e) => Err((sample.id.clone(), e.to_string())),
                    }),
                    Err(source) => Err(PipelineError::Segment {
                        id: sample.id.clone(),
                        source,
                    }),
                };
                *results[i].lock().unwrap() = Some(r);
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, samples.len());
            });
        }
    });

    let mut summaries = Vec::with_capacity(samples.len());
    let mut skipped = Vec::new();
    for cell in results {
        match cell.into_inner().unwrap().expect("every sample is processed")? {
            Ok(Some(s)) => summaries.push(s),
            Ok(None) => {}
            Err(skip) => skipped.push(skip),
        }
    }
    Ok((summaries, skipped))
}

/// Corpus -> ranked palettes.
pub fn extract_palettes(
    corpus: &ImageCorpus,
    segmenter: &dyn Segmenter,
    params: &PipelineParams,
) -> Result<PaletteSet, PipelineError> {
    extract_palettes_with_progress(corpus, segmenter, params, &|_, _| {})
}

pub fn extract_palettes_with_progress(
    corpus: &ImageCorpus,
    segmenter: &dyn Segmenter,
    params: &PipelineParams,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<PaletteSet, PipelineError> {
    let (summaries, skipped) = summarize_corpus(corpus, segmenter, params, progress)?;
    let palettes = compose_palettes(&corpus.spec.label(), &summaries, &params.association)?;
    Ok(PaletteSet {
        spec: corpus.spec.clone(),
        palettes,
        skipped,
    })
}
