//! Concept specifications, prompt assembly and sampler parameter draws.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_IMAGE_COUNT: u32 = 50;
pub const DEFAULT_RESOLUTION: u32 = 1024;
pub const MIN_RESOLUTION: u32 = 64;
pub const DEFAULT_LIGHTING: &str = "natural light";
pub const GUIDANCE_SCALE_MIN: f64 = 3.0;
pub const GUIDANCE_SCALE_MAX: f64 = 6.0;

/// The eleven basic colour terms. The builder never injects any of these.
pub const BASIC_COLOR_TERMS: [&str; 11] = [
    "black", "white", "red", "green", "yellow", "blue", "brown", "purple", "pink", "orange",
    "gray",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("concept must not be empty")]
    EmptyConcept,
    #[error("image count must be at least 1")]
    NoImages,
    #[error("resolution {0} is below the minimum of {MIN_RESOLUTION}")]
    ResolutionTooSmall(u32),
    #[error("enhancement table line {line}: {reason}")]
    Table { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    #[default]
    RealisticPhoto,
    FlatDesign,
    /// Free-text style phrase used verbatim.
    Custom(String),
}

impl Style {
    pub fn phrase(&self) -> &str {
        match self {
            Style::RealisticPhoto => "realistic photo",
            Style::FlatDesign => "colored flat design",
            Style::Custom(s) => s.trim(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Style::RealisticPhoto => "realistic_photo",
            Style::FlatDesign => "flat_design",
            Style::Custom(s) => s.trim(),
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Style {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "realistic_photo" | "photo" | "realistic" => Style::RealisticPhoto,
            "flat_design" | "flat" | "clipart" => Style::FlatDesign,
            _ => Style::Custom(s.trim().to_owned()),
        })
    }
}

fn default_lighting() -> String {
    DEFAULT_LIGHTING.to_owned()
}
fn default_image_count() -> u32 {
    DEFAULT_IMAGE_COUNT
}
fn default_resolution() -> u32 {
    DEFAULT_RESOLUTION
}

/// Structured input to the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub concept: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default)]
    pub style: Style,
    #[serde(default = "default_lighting")]
    pub lighting: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audience: Option<String>,
    #[serde(default = "default_image_count")]
    pub image_count: u32,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
}

impl ConceptSpec {
    pub fn new(concept: impl Into<String>) -> Self {
        Self {
            concept: concept.into(),
            context: None,
            style: Style::default(),
            lighting: default_lighting(),
            audience: None,
            image_count: DEFAULT_IMAGE_COUNT,
            resolution: DEFAULT_RESOLUTION,
        }
    }

    pub fn with_context(mut self, context: impl Into<String>) -> Self {
        self.context = Some(context.into());
        self
    }

    pub fn with_style(mut self, style: Style) -> Self {
        self.style = style;
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.concept.trim().is_empty() {
            return Err(PromptError::EmptyConcept);
        }
        if self.image_count == 0 {
            return Err(PromptError::NoImages);
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(PromptError::ResolutionTooSmall(self.resolution));
        }
        Ok(())
    }

    /// Context followed by concept, e.g. "polluted sky".
    pub fn label(&self) -> String {
        match self.context.as_deref().map(str::trim) {
            Some(ctx) if !ctx.is_empty() => format!("{} {}", ctx, self.concept.trim()),
            _ => self.concept.trim().to_owned(),
        }
    }
}

/// Ordered trigger -> enhancement phrase rules applied to the context text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEnhancementTable {
    entries: Vec<(String, String)>,
}

impl Default for ContextEnhancementTable {
    fn default() -> Self {
        Self {
            entries: vec![
                ("quiet".into(), "evoking feelings of silence and lonely".into()),
                ("lively".into(), "evoking feelings of vibrance and hope".into()),
                ("polluted".into(), "exuding a sense of depression and heaviness".into()),
            ],
        }
    }
}

impl ContextEnhancementTable {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Adds or replaces the rule for `trigger`.
    pub fn insert(&mut self, trigger: &str, phrase: &str) {
        let key = trigger.trim().to_lowercase();
        let phrase = phrase.trim().to_owned();
        match self.entries.iter_mut().find(|(t, _)| *t == key) {
            Some(entry) => entry.1 = phrase,
            None => self.entries.push((key, phrase)),
        }
    }

    /// Parses `trigger => phrase` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut table = Self::empty();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| PromptError::Table {
                line: idx + 1,
                reason: reason.to_owned(),
            };
            let (trigger, phrase) = line.split_once("=>").ok_or_else(|| err("missing `=>`"))?;
            let trigger = trigger.trim().to_lowercase();
            if trigger.is_empty() || phrase.trim().is_empty() {
                return Err(err("empty trigger or phrase"));
            }
            if !seen.insert(trigger.clone()) {
                return Err(err("duplicate trigger"));
            }
            table.entries.push((trigger, phrase.trim().to_owned()));
        }
        Ok(table)
    }

    /// Merges `other` over `self`, later rules replacing earlier ones.
    pub fn extend(&mut self, other: &ContextEnhancementTable) {
        for (t, p) in &other.entries {
            self.insert(t, p);
        }
    }
}

/// Appends the enhancement phrase of every matching trigger to the context.
/// Phrases already present are not added again.
pub fn enhance_context(spec: &ConceptSpec, table: &ContextEnhancementTable) -> ConceptSpec {
    let mut out = spec.clone();
    let Some(context) = spec.context.as_deref() else {
        return out;
    };
    let mut enhanced = context.trim().to_owned();
    for (trigger, phrase) in &table.entries {
        let lower = enhanced.to_lowercase();
        if lower.contains(trigger.as_str()) && !lower.contains(&phrase.to_lowercase()) {
            enhanced.push_str(", ");
            enhanced.push_str(phrase);
        }
    }
    out.context = Some(enhanced);
    out
}

/// Negative prompt fragments. Defaults can be overridden from configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativePrompts {
    pub realistic_photo: String,
    pub flat_design: String,
    pub framing: String,
}

impl Default for NegativePrompts {
    fn default() -> Self {
        Self {
            realistic_photo: "cartoon, 3D render, illustration, painting".into(),
            flat_design: "realistic 3D rendering, photorealistic, photo".into(),
            framing: "cropped, out of frame, cut off, partial view, blurry, watermark, text"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompts {
    pub positive: String,
    pub negative: String,
}

pub fn build_prompts(spec: &ConceptSpec) -> Result<Prompts, PromptError> {
    build_prompts_with(spec, &NegativePrompts::default())
}

pub fn build_prompts_with(
    spec: &ConceptSpec,
    negatives: &NegativePrompts,
) -> Result<Prompts, PromptError> {
    spec.validate()?;
    let mut parts: Vec<String> = vec![spec.style.phrase().to_owned(), spec.concept.trim().to_owned()];
    if let Some(ctx) = spec.context.as_deref().map(str::trim).filter(|c| !c.is_empty()) {
        parts.push(ctx.to_owned());
    }
    let lighting = spec.lighting.trim();
    if !lighting.is_empty() {
        parts.push(lighting.to_owned());
    }
    if let Some(aud) = spec.audience.as_deref().map(str::trim).filter(|a| !a.is_empty()) {
        parts.push(format!("for {aud}"));
    }
    parts.retain(|p| !p.is_empty());

    let style_negative = match spec.style {
        Style::RealisticPhoto => Some(negatives.realistic_photo.as_str()),
        Style::FlatDesign => Some(negatives.flat_design.as_str()),
        Style::Custom(_) => None,
    };
    let negative = style_negative
        .into_iter()
        .chain(std::iter::once(negatives.framing.as_str()))
        .filter(|s| !s.trim().is_empty())
        .collect::<Vec<_>>()
        .join(", ");

    Ok(Prompts {
        positive: parts.join(", "),
        negative,
    })
}

/// One text-to-image call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub negative_prompt: String,
    pub guidance_scale: f64,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

/// Draws one request per image with an independent guidance scale in
/// [3, 6] and pairwise-distinct generation seeds. Deterministic in `rng_seed`.
pub fn sample_requests(
    spec: &ConceptSpec,
    prompts: &Prompts,
    rng_seed: u64,
) -> Result<Vec<GenerationRequest>, PromptError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seen = HashSet::with_capacity(spec.image_count as usize);
    let mut out = Vec::with_capacity(spec.image_count as usize);
    while out.len() < spec.image_count as usize {
        let guidance_scale = rng.gen_range(GUIDANCE_SCALE_MIN..=GUIDANCE_SCALE_MAX);
        let mut seed = rng.gen::<u64>();
        while !seen.insert(seed) {
            seed = rng.gen::<u64>();
        }
        out.push(GenerationRequest {
            prompt: prompts.positive.clone(),
            negative_prompt: prompts.negative.clone(),
            guidance_scale,
            seed,
            width: spec.resolution,
            height: spec.resolution,
        });
    }
    Ok(out)
}
