//! Radial palette glyph: the primary colour fills a centre disc and the
//! accents share an outer ring, each sector's angle proportional to its
//! weight.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::association::PaletteComposition;
use crate::color_space::Rgb8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphConfig {
    pub size: u32,
    /// Radii as fractions of half the canvas.
    pub center_radius: f64,
    pub ring_inner: f64,
    pub ring_outer: f64,
    /// Degrees, counter-clockwise from 3 o'clock; 90 is 12 o'clock.
    pub start_angle: f64,
}

impl Default for GlyphConfig {
    fn default() -> Self {
        Self {
            size: 256,
            center_radius: 0.45,
            ring_inner: 0.55,
            ring_outer: 0.95,
            start_angle: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GlyphError {
    #[error("radius fractions must satisfy 0 < centre and 0 < inner < outer < 1")]
    BadRadii,
    #[error("palette has no accents")]
    NoAccents,
    #[error("accent proportions must be positive and finite")]
    BadProportion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub color: Rgb8,
    /// Where the sector begins, in the same convention as `start_angle`.
    pub start: f64,
    /// Clockwise extent in degrees.
    pub span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphLayout {
    pub config: GlyphConfig,
    pub primary: Rgb8,
    pub sectors: Vec<Sector>,
}

impl GlyphLayout {
    pub fn total_span(&self) -> f64 {
        self.sectors.iter().map(|s| s.span).sum()
    }
}

/// Lays out accents clockwise from the start angle, largest first.
pub fn layout_glyph(
    palette: &PaletteComposition,
    config: &GlyphConfig,
) -> Result<GlyphLayout, GlyphError> {
    let pairs: Vec<(Rgb8, f64)> = palette.accents.iter().map(|a| (a.color, a.proportion)).collect();
    layout_from_parts(palette.primary, &pairs, config)
}

pub fn layout_from_parts(
    primary: Rgb8,
    accents: &[(Rgb8, f64)],
    config: &GlyphConfig,
) -> Result<GlyphLayout, GlyphError> {
    let c = config;
    if !(c.center_radius > 0.0
        && c.center_radius < 1.0
        && c.ring_inner > 0.0
        && c.ring_inner < c.ring_outer
        && c.ring_outer < 1.0)
    {
        return Err(GlyphError::BadRadii);
    }
    if accents.is_empty() {
        return Err(GlyphError::NoAccents);
    }
    if accents.iter().any(|(_, p)| !(p.is_finite() && *p > 0.0)) {
        return Err(GlyphError::BadProportion);
    }
    let mut ordered: Vec<(Rgb8, f64)> = accents.to_vec();
    // Stable sort keeps the input order among equal proportions.
    ordered.sort_by(|a, b| b.1.total_cmp(&a.1));
    let total: f64 = ordered.iter().map(|(_, p)| p).sum();
    let n = ordered.len();
    let mut sectors = Vec::with_capacity(n);
    let mut used = 0.0;
    for (i, (color, p)) in ordered.into_iter().enumerate() {
        // The last sector closes the circle exactly.
        let span = if i + 1 == n { 360.0 - used } else { 360.0 * p / total };
        sectors.push(Sector {
            color,
            start: config.start_angle - used,
            span,
        });
        used += span;
    }
    Ok(GlyphLayout {
        config: *config,
        primary,
        sectors,
    })
}

fn point(cx: f64, cy: f64, r: f64, degrees: f64) -> (f64, f64) {
    let t = degrees.to_radians();
    (cx + r * t.cos(), cy - r * t.sin())
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    // Avoid "-0.000".
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".to_owned()
    } else {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

fn ring_path(cx: f64, cy: f64, r_in: f64, r_out: f64) -> String {
    let mut d = String::new();
    for r in [r_out, r_in] {
        let (x0, y0) = (cx + r, cy);
        let (x1, y1) = (cx - r, cy);
        let _ = write!(
            d,
            "M{} {}A{r} {r} 0 1 1 {} {}A{r} {r} 0 1 1 {} {}Z",
            num(x0),
            num(y0),
            num(x1),
            num(y1),
            num(x0),
            num(y0),
            r = num(r)
        );
    }
    d
}

fn sector_path(cx: f64, cy: f64, r_in: f64, r_out: f64, start: f64, span: f64) -> String {
    let end = start - span;
    let large = if span > 180.0 { 1 } else { 0 };
    let (ox0, oy0) = point(cx, cy, r_out, start);
    let (ox1, oy1) = point(cx, cy, r_out, end);
    let (ix1, iy1) = point(cx, cy, r_in, end);
    let (ix0, iy0) = point(cx, cy, r_in, start);
    // Screen y points down, so clockwise on screen is sweep-flag 1.
    format!(
        "M{} {}A{ro} {ro} 0 {large} 1 {} {}L{} {}A{ri} {ri} 0 {large} 0 {} {}Z",
        num(ox0),
        num(oy0),
        num(ox1),
        num(oy1),
        num(ix1),
        num(iy1),
        num(ix0),
        num(iy0),
        ro = num(r_out),
        ri = num(r_in),
    )
}

/// SVG 1.1 document for a layout. Output is byte-stable for equal input.
pub fn render_svg(layout: &GlyphLayout) -> String {
    let c = &layout.config;
    let half = f64::from(c.size) / 2.0;
    let (cx, cy) = (half, half);
    let r_in = c.ring_inner * half;
    let r_out = c.ring_outer * half;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = c.size
    );
    for sector in &layout.sectors {
        let d = if sector.span >= 360.0 - 1e-9 {
            ring_path(cx, cy, r_in, r_out)
        } else {
            sector_path(cx, cy, r_in, r_out, sector.start, sector.span)
        };
        let _ = writeln!(
            svg,
            r#"  <path d="{d}" fill="{}" fill-rule="evenodd"><title>{} {}%</title></path>"#,
            sector.color.to_hex(),
            sector.color.to_hex(),
            num(sector.span / 3.6)
        );
    }
    let _ = writeln!(
        svg,
        r#"  <circle cx="{}" cy="{}" r="{}" fill="{}"><title>primary {}</title></circle>"#,
        num(cx),
        num(cy),
        num(c.center_radius * half),
        layout.primary.to_hex(),
        layout.primary.to_hex()
    );
    svg.push_str("</svg>\n");
    svg
}
