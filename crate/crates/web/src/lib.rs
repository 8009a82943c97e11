//! Browser bindings for the colour pipeline: a CIEDE2000 pair explorer,
//! palette extraction from canvas pixels, and glyph previews.
//!
//! Everything crosses the boundary as strings (hex colours, JSON, SVG) so
//! the page needs no generated TypeScript types.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use gencolor_core::glyph::layout_from_parts;
use gencolor_core::{
    ciede2000, compose_palettes, render_svg, AssociationParams, GlyphConfig, ImageColorSummary,
    Rgb8, RgbImage, SegmentMask,
};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_hex(s: &str) -> Result<Rgb8, JsValue> {
    s.trim().parse::<Rgb8>().map_err(|e| js_err(format!("{s:?}: {e}")))
}

#[derive(Serialize)]
struct PairReport {
    a: ColorReport,
    b: ColorReport,
    delta_e: f64,
    /// Euclidean distance in Lab, for comparison.
    delta_e76: f64,
}

#[derive(Serialize)]
struct ColorReport {
    hex: String,
    lab: [f64; 3],
}

impl ColorReport {
    fn of(c: Rgb8) -> Self {
        let lab = c.to_lab();
        Self { hex: c.to_hex(), lab: [lab.l, lab.a, lab.b] }
    }
}

/// ΔE00 between two `#rrggbb` colours, with their Lab coordinates, as JSON.
#[wasm_bindgen]
pub fn compare_colors(a: &str, b: &str) -> Result<String, JsValue> {
    let (a, b) = (parse_hex(a)?, parse_hex(b)?);
    let report = PairReport {
        delta_e: ciede2000(a.to_lab(), b.to_lab()),
        delta_e76: a.to_lab().distance(b.to_lab()),
        a: ColorReport::of(a),
        b: ColorReport::of(b),
    };
    serde_json::to_string(&report).map_err(js_err)
}

/// Collects canvas images, then mines palettes across them.
#[wasm_bindgen]
pub struct PaletteExtractor {
    summaries: Vec<ImageColorSummary>,
    params: AssociationParams,
}

#[wasm_bindgen]
impl PaletteExtractor {
    /// `min_group_size` is the number of images a colour group needs; with
    /// only one or two images loaded, lower it to 1.
    #[wasm_bindgen(constructor)]
    pub fn new(stride: u32, min_group_size: usize) -> PaletteExtractor {
        PaletteExtractor {
            summaries: Vec::new(),
            params: AssociationParams {
                stride: stride.max(1),
                min_group_size: min_group_size.max(1),
                ..AssociationParams::default()
            },
        }
    }

    /// Adds one image from `ImageData.data`. Alpha is ignored; the whole
    /// frame counts as the concept.
    pub fn add_image(&mut self, rgba: &[u8], width: u32, height: u32) -> Result<(), JsValue> {
        let image = RgbImage::from_rgba(width, height, rgba).map_err(js_err)?;
        let mask = SegmentMask::full(width, height);
        let id = format!("image-{:03}", self.summaries.len());
        let summary =
            ImageColorSummary::from_image(id, &image, &mask, self.params.stride).map_err(js_err)?;
        self.summaries.push(summary);
        Ok(())
    }

    #[wasm_bindgen(getter)]
    pub fn count(&self) -> usize {
        self.summaries.len()
    }

    pub fn clear(&mut self) {
        self.summaries.clear();
    }

    /// Ranked palettes as a JSON array.
    pub fn extract(&self) -> Result<String, JsValue> {
        let palettes = compose_palettes("browser", &self.summaries, &self.params).map_err(js_err)?;
        serde_json::to_string(&palettes).map_err(js_err)
    }

    /// Glyph for the palette at `rank` (1-based).
    pub fn glyph(&self, rank: usize, size: u32) -> Result<String, JsValue> {
        let palettes = compose_palettes("browser", &self.summaries, &self.params).map_err(js_err)?;
        let p = palettes
            .iter()
            .find(|p| p.group_rank == rank)
            .ok_or_else(|| js_err(format!("no palette at rank {rank}")))?;
        let pairs: Vec<(Rgb8, f64)> = p.accents.iter().map(|a| (a.color, a.proportion)).collect();
        glyph_parts(p.primary, &pairs, size)
    }
}

fn glyph_parts(primary: Rgb8, accents: &[(Rgb8, f64)], size: u32) -> Result<String, JsValue> {
    let config = GlyphConfig { size, ..GlyphConfig::default() };
    let layout = layout_from_parts(primary, accents, &config).map_err(js_err)?;
    Ok(render_svg(&layout))
}

/// Glyph SVG from a primary and parallel accent colour/weight lists.
#[wasm_bindgen]
pub fn glyph_preview(
    primary: &str,
    accents: Vec<String>,
    weights: Vec<f64>,
    size: u32,
) -> Result<String, JsValue> {
    if accents.len() != weights.len() {
        return Err(js_err("accents and weights differ in length"));
    }
    let pairs = accents
        .iter()
        .zip(weights)
        .map(|(c, w)| parse_hex(c).map(|c| (c, w)))
        .collect::<Result<Vec<_>, _>>()?;
    glyph_parts(parse_hex(primary)?, &pairs, size)
}
