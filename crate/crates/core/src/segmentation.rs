//! Concept masks: open-set detection boxes are filtered, suppressed with
//! greedy NMS, turned into per-box masks by a promptable masker, and unioned.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{ImageSample, RgbImage};

pub const DEFAULT_BOX_THRESHOLD: f64 = 0.35;
pub const DEFAULT_NMS_IOU: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("no detection above the confidence threshold for {0:?}")]
    NoDetections(String),
    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("concept text must not be empty")]
    EmptyConcept,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    /// Position in the detector's output; breaks confidence ties.
    #[serde(default)]
    pub id: u32,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub confidence: f64,
    #[serde(default)]
    pub phrase: String,
}

impl DetectionBox {
    pub fn new(id: u32, coords: [f64; 4], confidence: f64) -> Self {
        Self {
            id,
            x0: coords[0],
            y0: coords[1],
            x1: coords[2],
            y1: coords[3],
            confidence,
            phrase: String::new(),
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn iou(&self, other: &DetectionBox) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clamps to the image; `None` if nothing of positive area remains.
    pub fn clamped(&self, width: u32, height: u32) -> Option<DetectionBox> {
        let mut b = self.clone();
        b.x0 = b.x0.clamp(0.0, f64::from(width));
        b.x1 = b.x1.clamp(0.0, f64::from(width));
        b.y0 = b.y0.clamp(0.0, f64::from(height));
        b.y1 = b.y1.clamp(0.0, f64::from(height));
        (b.x0 < b.x1 && b.y0 < b.y1).then_some(b)
    }
}

fn by_confidence(a: &DetectionBox, b: &DetectionBox) -> Ordering {
    b.confidence.total_cmp(&a.confidence).then(a.id.cmp(&b.id))
}

/// Greedy non-maximum suppression. Output is ordered by confidence
/// descending, ties by box id.
pub fn nms(boxes: &[DetectionBox], iou_threshold: f64) -> Vec<DetectionBox> {
    let mut sorted: Vec<&DetectionBox> = boxes.iter().collect();
    sorted.sort_by(|a, b| by_confidence(a, b));
    let mut kept: Vec<DetectionBox> = Vec::new();
    for candidate in sorted {
        if kept.iter().all(|k| k.iou(candidate) < iou_threshold) {
            kept.push(candidate.clone());
        }
    }
    kept
}

/// A per-pixel concept mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl SegmentMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, SegmentError> {
        if bits.len() != width as usize * height as usize {
            return Err(SegmentError::InvalidMask(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    /// Rectangle covering the pixels whose centres fall inside `b`.
    pub fn from_box(width: u32, height: u32, b: &DetectionBox) -> Self {
        Self::from_fn(width, height, |x, y| {
            let (cx, cy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            cx >= b.x0 && cx < b.x1 && cy >= b.y0 && cy < b.y1
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn union_with(&mut self, other: &SegmentMask) -> Result<(), SegmentError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(SegmentError::InvalidMask(format!(
                "cannot union {}x{} with {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    /// Row-major run lengths, starting with a (possibly empty) run of unset
    /// pixels and alternating thereafter.
    pub fn to_rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(width: u32, height: u32, runs: &[u32]) -> Result<Self, SegmentError> {
        let total = width as usize * height as usize;
        let mut bits = Vec::with_capacity(total);
        let mut value = false;
        for &run in runs {
            if bits.len() + run as usize > total {
                return Err(SegmentError::InvalidMask("run lengths exceed mask size".into()));
            }
            bits.extend(std::iter::repeat(value).take(run as usize));
            value = !value;
        }
        if bits.len() != total {
            return Err(SegmentError::InvalidMask(format!(
                "run lengths cover {} of {total} pixels",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    /// Nonzero pixels (any channel) are set.
    pub fn from_image(image: &RgbImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            bits: image.pixels().iter().map(|p| p.r | p.g | p.b != 0).collect(),
        }
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            let v = if self.get(x, y) { 255 } else { 0 };
            crate::Rgb8::new(v, v, v)
        })
    }
}

pub fn whole_image_mask(sample: &ImageSample) -> SegmentMask {
    SegmentMask::full(sample.image.width(), sample.image.height())
}

/// Open-set detector: text-prompted boxes.
pub trait Detector: Send + Sync {
    fn detect(&self, image: &RgbImage, text: &str) -> Result<Vec<DetectionBox>, SegmentError>;
}

/// Promptable segmenter: one mask per box prompt.
pub trait Masker: Send + Sync {
    fn mask(&self, image: &RgbImage, prompt: &DetectionBox) -> Result<SegmentMask, SegmentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub box_threshold: f64,
    pub iou_threshold: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            box_threshold: DEFAULT_BOX_THRESHOLD,
            iou_threshold: DEFAULT_NMS_IOU,
        }
    }
}

/// Detector -> confidence filter -> NMS -> box-prompted masks -> union.
pub fn segment_concept(
    image: &RgbImage,
    concept: &str,
    detector: &dyn Detector,
    masker: &dyn Masker,
    params: &SegmentParams,
) -> Result<SegmentMask, SegmentError> {
    let concept = concept.trim();
    if concept.is_empty() {
        return Err(SegmentError::EmptyConcept);
    }
    let boxes: Vec<DetectionBox> = detector
        .detect(image, concept)?
        .into_iter()
        .filter(|b| b.confidence >= params.box_threshold)
        .filter_map(|b| b.clamped(image.width(), image.height()))
        .collect();
    let kept = nms(&boxes, params.iou_threshold);
    if kept.is_empty() {
        return Err(SegmentError::NoDetections(concept.to_owned()));
    }
    let mut merged = SegmentMask::empty(image.width(), image.height());
    for b in &kept {
        merged.union_with(&masker.mask(image, b)?)?;
    }
    Ok(merged)
}

/// What to do when a detector finds nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoDetectionPolicy {
    #[default]
    SkipImage,
    WholeImage,
}

/// Produces the concept mask for one corpus sample.
pub trait Segmenter: Send + Sync {
    fn segment(&self, sample: &ImageSample, concept: &str) -> Result<SegmentMask, SegmentError>;
}

/// Every pixel counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct WholeImageSegmenter;

impl Segmenter for WholeImageSegmenter {
    fn segment(&self, sample: &ImageSample, _concept: &str) -> Result<SegmentMask, SegmentError> {
        Ok(whole_image_mask(sample))
    }
}

/// Reads precomputed `<dir>/<id>.mask.png` files.
#[derive(Debug, Clone)]
pub struct FixtureMaskSegmenter {
    pub dir: PathBuf,
}

impl FixtureMaskSegmenter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn mask_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.mask.png"))
    }
}

pub fn load_mask(path: &Path) -> Result<SegmentMask, SegmentError> {
    let image = RgbImage::open(path).map_err(|e| SegmentError::InvalidMask(e.to_string()))?;
    Ok(SegmentMask::from_image(&image))
}

impl Segmenter for FixtureMaskSegmenter {
    fn segment(&self, sample: &ImageSample, _concept: &str) -> Result<SegmentMask, SegmentError> {
        let path = self.mask_path(&sample.id);
        if !path.exists() {
            return Err(SegmentError::NoDetections(format!("no fixture mask for {}", sample.id)));
        }
        let mask = load_mask(&path)?;
        if (mask.width(), mask.height()) != (sample.image.width(), sample.image.height()) {
            return Err(SegmentError::InvalidMask(format!(
                "mask for {} does not match image size",
                sample.id
            )));
        }
        Ok(mask)
    }
}

/// Detector + masker pair.
pub struct DetectAndMask<D, M> {
    pub detector: D,
    pub masker: M,
    pub params: SegmentParams,
}

impl<D: Detector, M: Masker> Segmenter for DetectAndMask<D, M> {
    fn segment(&self, sample: &ImageSample, concept: &str) -> Result<SegmentMask, SegmentError> {
        segment_concept(&sample.image, concept, &self.detector, &self.masker, &self.params)
    }
}

/// Applies a [`NoDetectionPolicy`]: `Ok(None)` means skip the image.
pub fn segment_with_policy(
    segmenter: &dyn Segmenter,
    sample: &ImageSample,
    concept: &str,
    policy: NoDetectionPolicy,
) -> Result<Option<SegmentMask>, SegmentError> {
    match segmenter.segment(sample, concept) {
        Ok(mask) => Ok(Some(mask)),
        Err(SegmentError::NoDetections(reason)) => match policy {
            NoDetectionPolicy::SkipImage => {
                log::warn!("skipping {}: {reason}", sample.id);
                Ok(None)
            }
            NoDetectionPolicy::WholeImage => Ok(Some(whole_image_mask(sample))),
        },
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rgb8;

    struct FixedDetector(Vec<DetectionBox>);

    impl Detector for FixedDetector {
        fn detect(&self, _: &RgbImage, _: &str) -> Result<Vec<DetectionBox>, SegmentError> {
            Ok(self.0.clone())
        }
    }

    struct BoxMasker;

    impl Masker for BoxMasker {
        fn mask(&self, image: &RgbImage, b: &DetectionBox) -> Result<SegmentMask, SegmentError> {
            Ok(SegmentMask::from_box(image.width(), image.height(), b))
        }
    }

    #[test]
    fn identical_boxes_keep_most_confident() {
        let a = DetectionBox::new(0, [0.0, 0.0, 10.0, 10.0], 0.8);
        let b = DetectionBox::new(1, [0.0, 0.0, 10.0, 10.0], 0.9);
        let kept = nms(&[a, b.clone()], 0.5);
        assert_eq!(kept, vec![b]);
    }

    #[test]
    fn disjoint_boxes_all_kept() {
        let boxes: Vec<_> = (0..4)
            .map(|i| {
                let x = f64::from(i) * 20.0;
                DetectionBox::new(i, [x, 0.0, x + 10.0, 10.0], 0.5 + f64::from(i) * 0.1)
            })
            .collect();
        let kept = nms(&boxes, 0.5);
        assert_eq!(kept.len(), 4);
        assert_eq!(kept.iter().map(|b| b.id).collect::<Vec<_>>(), vec![3, 2, 1, 0]);
    }

    #[test]
    fn full_image_box_gives_masker_output() {
        let image = RgbImage::filled(8, 6, Rgb8::new(1, 2, 3));
        let det = FixedDetector(vec![DetectionBox::new(0, [0.0, 0.0, 8.0, 6.0], 0.9)]);
        let mask = segment_concept(&image, "fox", &det, &BoxMasker, &SegmentParams::default())
            .unwrap();
        assert_eq!(mask, SegmentMask::full(8, 6));
        assert_eq!(mask.coverage(), 1.0);
    }

    #[test]
    fn no_boxes_is_an_error() {
        let image = RgbImage::filled(4, 4, Rgb8::default());
        let low = FixedDetector(vec![DetectionBox::new(0, [0.0, 0.0, 4.0, 4.0], 0.1)]);
        for det in [FixedDetector(vec![]), low] {
            let err =
                segment_concept(&image, "fox", &det, &BoxMasker, &SegmentParams::default());
            assert!(matches!(err, Err(SegmentError::NoDetections(_))));
        }
        assert!(matches!(
            segment_concept(&image, " ", &FixedDetector(vec![]), &BoxMasker, &SegmentParams::default()),
            Err(SegmentError::EmptyConcept)
        ));
    }

    #[test]
    fn overlapping_boxes_union() {
        let image = RgbImage::filled(20, 20, Rgb8::default());
        // IoU = 25 / (100 + 100 - 25) < 0.5, so both survive.
        let det = FixedDetector(vec![
            DetectionBox::new(0, [0.0, 0.0, 10.0, 10.0], 0.9),
            DetectionBox::new(1, [5.0, 5.0, 15.0, 15.0], 0.8),
        ]);
        let mask = segment_concept(&image, "x", &det, &BoxMasker, &SegmentParams::default())
            .unwrap();
        let oracle = (0..20)
            .flat_map(|y| (0..20).map(move |x| (x, y)))
            .filter(|&(x, y)| (x < 10 && y < 10) || ((5..15).contains(&x) && (5..15).contains(&y)))
            .count();
        assert_eq!(mask.count(), oracle);
        assert_eq!(oracle, 175);
    }

    #[test]
    fn union_is_idempotent() {
        let m = SegmentMask::from_fn(5, 5, |x, y| (x + y) % 3 == 0);
        let mut u = m.clone();
        u.union_with(&m).unwrap();
        assert_eq!(u, m);
        assert!(u.union_with(&SegmentMask::empty(4, 5)).is_err());
    }

    #[test]
    fn rle_round_trip() {
        let m = SegmentMask::from_fn(7, 3, |x, y| x > y);
        let runs = m.to_rle();
        assert_eq!(SegmentMask::from_rle(7, 3, &runs).unwrap(), m);
        assert_eq!(SegmentMask::full(2, 2).to_rle(), vec![0, 4]);
        assert!(SegmentMask::from_rle(2, 2, &[1, 1]).is_err());
        assert!(SegmentMask::from_rle(2, 2, &[5]).is_err());
    }

    #[test]
    fn boxes_are_clamped() {
        let b = DetectionBox::new(0, [-5.0, 2.0, 50.0, 3.0], 1.0);
        let c = b.clamped(10, 10).unwrap();
        assert_eq!((c.x0, c.x1), (0.0, 10.0));
        assert!(DetectionBox::new(0, [12.0, 0.0, 20.0, 5.0], 1.0).clamped(10, 10).is_none());
    }
}
