//! From masked images to primary-accent palettes.
//!
//! Each image's masked pixels are binned into a 16x16x16 RGB grid and the
//! fullest bin gives the image's dominant colour. Images are leader-clustered
//! on their dominants (CIEDE2000 < 12), the five largest groups with at least
//! three images survive, and each group's primary is the Lab centroid of the
//! bins within CIEDE2000 7 of the group's own dominant bin. Accents come from
//! k-means (k = 5) over every image's bins.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::color_space::{ciede2000, Lab, Rgb8};
use crate::corpus::RgbImage;
use crate::kmeans::{self, WeightedPoint};
use crate::segmentation::SegmentMask;

pub const BINS_PER_CHANNEL: usize = 16;
pub const BIN_COUNT: usize = BINS_PER_CHANNEL * BINS_PER_CHANNEL * BINS_PER_CHANNEL;
pub const DEFAULT_GROUP_THRESHOLD: f64 = 12.0;
pub const DEFAULT_TOP_COLOR_BAND: f64 = 7.0;
pub const DEFAULT_MIN_GROUP_SIZE: usize = 3;
pub const DEFAULT_MAX_GROUPS: usize = 5;
pub const DEFAULT_ACCENT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssociationError {
    #[error("mask is {mask:?} but image is {image:?}")]
    MaskMismatch { image: (u32, u32), mask: (u32, u32) },
    #[error("stride must be at least 1")]
    InvalidStride,
    #[error("no masked pixel was sampled")]
    EmptyMask,
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("no colour group has at least {min_size} images")]
    NoValidGroups { min_size: usize },
    #[error("no image summaries to cluster")]
    EmptyInput,
}

/// Index of one cell of the quantised RGB cube, ordered by r, then g, then b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinIndex(u16);

impl BinIndex {
    pub fn of(c: Rgb8) -> Self {
        Self(((c.r as u16 >> 4) << 8) | ((c.g as u16 >> 4) << 4) | (c.b as u16 >> 4))
    }

    pub fn from_coords(r: u8, g: u8, b: u8) -> Self {
        assert!(r < 16 && g < 16 && b < 16, "bin coordinate out of range");
        Self((r as u16) << 8 | (g as u16) << 4 | b as u16)
    }

    pub fn coords(self) -> (u8, u8, u8) {
        ((self.0 >> 8) as u8, ((self.0 >> 4) & 0xf) as u8, (self.0 & 0xf) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn from_index(i: usize) -> Self {
        debug_assert!(i < BIN_COUNT);
        Self(i as u16)
    }
}

/// Pixel counts over the quantised cube, with per-bin channel sums so each
/// bin can be represented by the mean of its member pixels.
#[derive(Clone, PartialEq, Eq)]
pub struct BinHistogram {
    counts: Vec<u64>,
    sums: Vec<[u64; 3]>,
    total: u64,
}

impl std::fmt::Debug for BinHistogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinHistogram")
            .field("total", &self.total)
            .field("occupied", &self.occupied().count())
            .finish()
    }
}

impl Default for BinHistogram {
    fn default() -> Self {
        Self::new()
    }
}

impl BinHistogram {
    pub fn new() -> Self {
        Self {
            counts: vec![0; BIN_COUNT],
            sums: vec![[0; 3]; BIN_COUNT],
            total: 0,
        }
    }

    pub fn add(&mut self, c: Rgb8) {
        self.add_weighted(c, 1);
    }

    pub fn add_weighted(&mut self, c: Rgb8, n: u64) {
        let i = BinIndex::of(c).index();
        self.counts[i] += n;
        self.sums[i][0] += u64::from(c.r) * n;
        self.sums[i][1] += u64::from(c.g) * n;
        self.sums[i][2] += u64::from(c.b) * n;
        self.total += n;
    }

    /// Bin-wise sum.
    pub fn merge(&mut self, other: &BinHistogram) {
        for i in 0..BIN_COUNT {
            self.counts[i] += other.counts[i];
            for c in 0..3 {
                self.sums[i][c] += other.sums[i][c];
            }
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, bin: BinIndex) -> u64 {
        self.counts[bin.index()]
    }

    /// Rounded mean of the bin's member pixels.
    pub fn representative(&self, bin: BinIndex) -> Option<Rgb8> {
        let n = self.counts[bin.index()];
        if n == 0 {
            return None;
        }
        let s = self.sums[bin.index()];
        let mean = |v: u64| ((v + n / 2) / n) as u8;
        Some(Rgb8::new(mean(s[0]), mean(s[1]), mean(s[2])))
    }

    /// Non-empty bins in index order.
    pub fn occupied(&self) -> impl Iterator<Item = (BinIndex, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, &n)| (BinIndex::from_index(i), n))
    }

    /// Fullest bin; ties go to the lowest index.
    pub fn argmax(&self) -> Option<BinIndex> {
        let mut best: Option<(usize, u64)> = None;
        for (i, &n) in self.counts.iter().enumerate() {
            if n > 0 && best.is_none_or(|(_, m)| n > m) {
                best = Some((i, n));
            }
        }
        best.map(|(i, _)| BinIndex::from_index(i))
    }
}

/// Bins the masked pixels of `image`, visiting every `stride`-th row and
/// column.
pub fn discretize(
    image: &RgbImage,
    mask: &SegmentMask,
    stride: u32,
) -> Result<BinHistogram, AssociationError> {
    if (image.width(), image.height()) != (mask.width(), mask.height()) {
        return Err(AssociationError::MaskMismatch {
            image: (image.width(), image.height()),
            mask: (mask.width(), mask.height()),
        });
    }
    if stride == 0 {
        return Err(AssociationError::InvalidStride);
    }
    let mut hist = BinHistogram::new();
    let w = image.width() as usize;
    let bits = mask.bits();
    let pixels = image.pixels();
    for y in (0..image.height() as usize).step_by(stride as usize) {
        let row = y * w;
        for x in (0..w).step_by(stride as usize) {
            if bits[row + x] {
                hist.add(pixels[row + x]);
            }
        }
    }
    if hist.total() == 0 {
        return Err(AssociationError::EmptyMask);
    }
    Ok(hist)
}

/// Representative colour of the fullest bin.
pub fn image_dominant(hist: &BinHistogram) -> Result<Rgb8, AssociationError> {
    hist.argmax()
        .and_then(|b| hist.representative(b))
        .ok_or(AssociationError::EmptyHistogram)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageColorSummary {
    pub id: String,
    pub histogram: BinHistogram,
    pub dominant: Rgb8,
}

impl ImageColorSummary {
    pub fn new(id: impl Into<String>, histogram: BinHistogram) -> Result<Self, AssociationError> {
        let dominant = image_dominant(&histogram)?;
        Ok(Self {
            id: id.into(),
            histogram,
            dominant,
        })
    }

    pub fn from_image(
        id: impl Into<String>,
        image: &RgbImage,
        mask: &SegmentMask,
        stride: u32,
    ) -> Result<Self, AssociationError> {
        Self::new(id, discretize(image, mask, stride)?)
    }
}

/// Result of leader clustering: indices into the input, leader first.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderCluster {
    pub leader: Lab,
    pub members: Vec<usize>,
}

/// Single pass in input order: each point joins the first cluster whose
/// leader is within `threshold` (strictly), otherwise it leads a new one.
pub fn leader_cluster(points: &[Lab], threshold: f64) -> Vec<LeaderCluster> {
    let mut clusters: Vec<LeaderCluster> = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        match clusters.iter_mut().find(|c| ciede2000(c.leader, p) < threshold) {
            Some(c) => c.members.push(i),
            None => clusters.push(LeaderCluster { leader: p, members: vec![i] }),
        }
    }
    clusters
}

/// Larger clusters first; equal sizes ordered by leader (L, a, b).
pub fn rank_clusters(clusters: &mut [LeaderCluster]) {
    clusters.sort_by(|x, y| {
        y.members
            .len()
            .cmp(&x.members.len())
            .then_with(|| x.leader.total_cmp(&y.leader))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingParams {
    pub threshold: f64,
    pub min_size: usize,
    pub max_groups: usize,
}

impl Default for GroupingParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_GROUP_THRESHOLD,
            min_size: DEFAULT_MIN_GROUP_SIZE,
            max_groups: DEFAULT_MAX_GROUPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorGroup {
    /// Member image ids in canonical (id) order.
    pub members: Vec<String>,
    pub leader: Lab,
    pub histogram: BinHistogram,
}

/// Groups images by dominant colour. Input order does not matter: images
/// are visited in identifier order.
pub fn group_images(
    summaries: &[ImageColorSummary],
    params: &GroupingParams,
) -> Result<Vec<ColorGroup>, AssociationError> {
    if summaries.is_empty() {
        return Err(AssociationError::EmptyInput);
    }
    let mut ordered: Vec<&ImageColorSummary> = summaries.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let dominants: Vec<Lab> = ordered.iter().map(|s| s.dominant.to_lab()).collect();
    let mut clusters = leader_cluster(&dominants, params.threshold);
    rank_clusters(&mut clusters);
    let groups: Vec<ColorGroup> = clusters
        .into_iter()
        .filter(|c| c.members.len() >= params.min_size)
        .take(params.max_groups)
        .map(|c| {
            let mut histogram = BinHistogram::new();
            for &i in &c.members {
                histogram.merge(&ordered[i].histogram);
            }
            ColorGroup {
                members: c.members.iter().map(|&i| ordered[i].id.clone()).collect(),
                leader: c.leader,
                histogram,
            }
        })
        .collect();
    if groups.is_empty() {
        return Err(AssociationError::NoValidGroups { min_size: params.min_size });
    }
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPrimary {
    pub group_dominant: Rgb8,
    /// Bin representatives within the band, with their counts, in bin order.
    pub top_colors: Vec<(Rgb8, u64)>,
    pub primary_lab: Lab,
    pub primary: Rgb8,
}

/// Count-weighted Lab centroid.
pub fn weighted_lab_centroid(colors: &[(Rgb8, u64)]) -> Option<Lab> {
    let total: u64 = colors.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return None;
    }
    let mut acc = [0.0f64; 3];
    for &(c, n) in colors {
        let lab = c.to_lab();
        let w = n as f64;
        acc[0] += w * lab.l;
        acc[1] += w * lab.a;
        acc[2] += w * lab.b;
    }
    let t = total as f64;
    Some(Lab::new(acc[0] / t, acc[1] / t, acc[2] / t))
}

pub fn group_primary(
    histogram: &BinHistogram,
    band: f64,
) -> Result<GroupPrimary, AssociationError> {
    let group_dominant = image_dominant(histogram)?;
    let dominant_lab = group_dominant.to_lab();
    let top_colors: Vec<(Rgb8, u64)> = histogram
        .occupied()
        .filter_map(|(bin, n)| {
            let rep = histogram.representative(bin)?;
            (ciede2000(rep.to_lab(), dominant_lab) <= band).then_some((rep, n))
        })
        .collect();
    let primary_lab = weighted_lab_centroid(&top_colors).ok_or(AssociationError::EmptyHistogram)?;
    Ok(GroupPrimary {
        group_dominant,
        top_colors,
        primary_lab,
        primary: primary_lab.to_rgb8(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accent {
    pub color: Rgb8,
    pub proportion: f64,
}

/// Weighted k-means over the pooled bins of every image.
pub fn accent_colors(
    summaries: &[ImageColorSummary],
    k: usize,
    seed: u64,
) -> Result<Vec<Accent>, AssociationError> {
    let mut ordered: Vec<&ImageColorSummary> = summaries.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let mut pooled = BinHistogram::new();
    for s in ordered {
        pooled.merge(&s.histogram);
    }
    accent_colors_from_histogram(&pooled, k, seed)
}

pub fn accent_points(histogram: &BinHistogram) -> Vec<WeightedPoint> {
    histogram
        .occupied()
        .filter_map(|(bin, n)| {
            histogram.representative(bin).map(|c| WeightedPoint {
                lab: c.to_lab(),
                weight: n as f64,
            })
        })
        .collect()
}

pub fn accent_colors_from_histogram(
    histogram: &BinHistogram,
    k: usize,
    seed: u64,
) -> Result<Vec<Accent>, AssociationError> {
    let points = accent_points(histogram);
    if points.is_empty() || k == 0 {
        return Err(AssociationError::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clustering = kmeans::kmeans(&points, k, &mut rng);
    Ok(accents_from_clustering(&clustering.centers, &clustering.weights))
}

/// Drops empty clusters, normalises weights, and orders by proportion
/// descending (ties by Lab).
pub fn accents_from_clustering(centers: &[Lab], weights: &[f64]) -> Vec<Accent> {
    let total: f64 = weights.iter().sum();
    let mut pairs: Vec<(Lab, f64)> = centers
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .filter(|(_, w)| *w > 0.0)
        .collect();
    pairs.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.total_cmp(&y.0)));
    pairs
        .into_iter()
        .map(|(lab, w)| Accent {
            color: lab.to_rgb8(),
            proportion: w / total,
        })
        .collect()
}

/// Every tunable of the association stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    pub bins_per_channel: usize,
    pub stride: u32,
    pub group_threshold: f64,
    pub min_group_size: usize,
    pub max_groups: usize,
    pub top_color_band: f64,
    pub accent_k: usize,
    pub seed: u64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            bins_per_channel: BINS_PER_CHANNEL,
            stride: 1,
            group_threshold: DEFAULT_GROUP_THRESHOLD,
            min_group_size: DEFAULT_MIN_GROUP_SIZE,
            max_groups: DEFAULT_MAX_GROUPS,
            top_color_band: DEFAULT_TOP_COLOR_BAND,
            accent_k: DEFAULT_ACCENT_K,
            seed: 0,
        }
    }
}

impl AssociationParams {
    pub fn grouping(&self) -> GroupingParams {
        GroupingParams {
            threshold: self.group_threshold,
            min_size: self.min_group_size,
            max_groups: self.max_groups,
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

/// First 16 hex digits of the SHA-256 of `value`'s JSON form.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serialises");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Human-readable corpus label, e.g. the concept text.
    pub corpus: String,
    pub image_count: usize,
    pub params: AssociationParams,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteComposition {
    pub primary: Rgb8,
    pub accents: Vec<Accent>,
    /// 1 for the largest surviving group.
    pub group_rank: usize,
    pub group_size: usize,
    pub top_colors: Vec<Rgb8>,
    pub provenance: Provenance,
}

impl PaletteComposition {
    pub fn accent_total(&self) -> f64 {
        self.accents.iter().map(|a| a.proportion).sum()
    }
}

/// One palette per surviving colour group, best first. Accents are computed
/// once over all images and shared.
pub fn compose_palettes(
    corpus_label: &str,
    summaries: &[ImageColorSummary],
    params: &AssociationParams,
) -> Result<Vec<PaletteComposition>, AssociationError> {
    let groups = group_images(summaries, &params.grouping())?;
    let accents = accent_colors(summaries, params.accent_k, params.seed)?;
    let provenance = Provenance {
        corpus: corpus_label.to_owned(),
        image_count: summaries.len(),
        params: *params,
        fingerprint: params.fingerprint(),
    };
    groups
        .iter()
        .enumerate()
        .map(|(rank, g)| {
            let p = group_primary(&g.histogram, params.top_color_band)?;
            Ok(PaletteComposition {
                primary: p.primary,
                accents: accents.clone(),
                group_rank: rank + 1,
                group_size: g.members.len(),
                top_colors: p.top_colors.iter().map(|(c, _)| *c).collect(),
                provenance: provenance.clone(),
            })
        })
        .collect()
}
