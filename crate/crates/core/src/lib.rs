//! Mining primary-accent colour compositions for concepts from image corpora.
//!
//! The pipeline has three stages: build prompts and sampler parameters for a
//! concept ([`prompt`]), obtain images and concept masks ([`corpus`],
//! [`segmentation`]), and reduce the masked pixels to ranked palettes
//! ([`association`]). Palettes render as radial glyphs ([`glyph`]) and can be
//! scored against designer colourings ([`evaluation`]).

pub mod association;
pub mod color_space;
pub mod corpus;
pub mod evaluation;
pub mod glyph;
pub mod kmeans;
pub mod pipeline;
pub mod prompt;
pub mod segmentation;
pub mod synthetic;

pub use association::{
    accent_colors, compose_palettes, fingerprint, discretize, group_images, group_primary, image_dominant,
    Accent, AssociationError, AssociationParams, BinHistogram, BinIndex, ColorGroup,
    ImageColorSummary, PaletteComposition,
};
pub use color_space::{ciede2000, lab_to_srgb, srgb_to_lab, Lab, Rgb8};
pub use corpus::{ImageBackend, ImageCorpus, ImageSample, RgbImage, SampleSource};
pub use glyph::{layout_glyph, render_svg, GlyphConfig, GlyphLayout};
pub use pipeline::{extract_palettes, PaletteSet, PipelineParams};
pub use prompt::{build_prompts, enhance_context, sample_requests, ConceptSpec, Style};
pub use segmentation::{nms, DetectionBox, SegmentMask, Segmenter};
