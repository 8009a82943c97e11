//! Synthetic scenes with known colour statistics, for tests and demos.
//!
//! A scene is a mixture of Lab Gaussians with fixed pixel shares. Rendering
//! assigns exactly `round(share * pixels)` pixels to each component, so the
//! true proportions are known up to one pixel.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::color_space::{Lab, Rgb8};
use crate::corpus::{ImageSample, RgbImage, SampleSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub mean: Lab,
    /// Per-axis standard deviation in Lab units.
    pub sigma: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub blobs: Vec<Blob>,
}

impl Scene {
    /// Pixel counts per blob for an image of `n` pixels; the last blob takes
    /// the remainder.
    pub fn allocation(&self, n: usize) -> Vec<usize> {
        let total: f64 = self.blobs.iter().map(|b| b.share).sum();
        let mut counts: Vec<usize> = self
            .blobs
            .iter()
            .map(|b| ((b.share / total) * n as f64).round() as usize)
            .collect();
        let assigned: usize = counts[..counts.len() - 1].iter().sum();
        let last = counts.len() - 1;
        counts[last] = n.saturating_sub(assigned);
        counts
    }

    pub fn render(&self, width: u32, height: u32, seed: u64) -> RgbImage {
        let n = width as usize * height as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = self
            .allocation(n)
            .into_iter()
            .enumerate()
            .flat_map(|(i, c)| std::iter::repeat(i).take(c))
            .collect();
        labels.shuffle(&mut rng);
        let pixels = labels
            .into_iter()
            .map(|i| sample_blob(&self.blobs[i], &mut rng))
            .collect();
        RgbImage::new(width, height, pixels).expect("allocation covers every pixel")
    }

    pub fn corpus_samples(&self, count: usize, size: u32, seed: u64) -> Vec<ImageSample> {
        (0..count)
            .map(|i| ImageSample {
                id: format!("synthetic-{i:04}"),
                source: SampleSource::Fixture,
                image: self.render(size, size, seed.wrapping_add(i as u64)),
                request: None,
            })
            .collect()
    }
}

pub fn sample_blob(blob: &Blob, rng: &mut ChaCha8Rng) -> Rgb8 {
    if blob.sigma <= 0.0 {
        return blob.mean.to_rgb8();
    }
    let noise = Normal::new(0.0, blob.sigma).expect("positive sigma");
    Lab::new(
        blob.mean.l + noise.sample(rng),
        blob.mean.a + noise.sample(rng),
        blob.mean.b + noise.sample(rng),
    )
    .to_rgb8()
}
