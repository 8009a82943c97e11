//! Reference implementations and frozen values shared by test targets.
#![allow(dead_code)]

use gencolor_core::color_space::{ciede2000, Lab, Rgb8};
use gencolor_core::kmeans::WeightedPoint;
use gencolor_core::segmentation::DetectionBox;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// The first twenty pairs of the Sharma–Wu–Dalal CIEDE2000 test set.
pub const CIEDE2000_GOLDEN: [([f64; 3], [f64; 3], f64); 20] = [
    ([50.0000, 2.6772, -79.7751], [50.0000, 0.0000, -82.7485], 2.042460),
    ([50.0000, 3.1571, -77.2803], [50.0000, 0.0000, -82.7485], 2.861510),
    ([50.0000, 2.8361, -74.0200], [50.0000, 0.0000, -82.7485], 3.441191),
    ([50.0000, -1.3802, -84.2814], [50.0000, 0.0000, -82.7485], 0.999999),
    ([50.0000, -1.1848, -84.8006], [50.0000, 0.0000, -82.7485], 1.000005),
    ([50.0000, -0.9009, -85.5211], [50.0000, 0.0000, -82.7485], 1.000013),
    ([50.0000, 0.0000, 0.0000], [50.0000, -1.0000, 2.0000], 2.366859),
    ([50.0000, -1.0000, 2.0000], [50.0000, 0.0000, 0.0000], 2.366859),
    ([50.0000, 2.4900, -0.0010], [50.0000, -2.4900, 0.0009], 7.179172),
    ([50.0000, 2.4900, -0.0010], [50.0000, -2.4900, 0.0010], 7.179163),
    ([50.0000, 2.4900, -0.0010], [50.0000, -2.4900, 0.0011], 7.219472),
    ([50.0000, 2.4900, -0.0010], [50.0000, -2.4900, 0.0012], 7.219474),
    ([50.0000, -0.0010, 2.4900], [50.0000, 0.0009, -2.4900], 4.804522),
    ([50.0000, -0.0010, 2.4900], [50.0000, 0.0011, -2.4900], 4.746071),
    ([50.0000, 2.5000, 0.0000], [50.0000, 0.0000, -2.5000], 4.306482),
    ([50.0000, 2.5000, 0.0000], [73.0000, 25.0000, -18.0000], 27.149231),
    ([50.0000, 2.5000, 0.0000], [61.0000, -5.0000, 29.0000], 22.897692),
    ([50.0000, 2.5000, 0.0000], [56.0000, -27.0000, -3.0000], 31.903005),
    ([50.0000, 2.5000, 0.0000], [58.0000, 24.0000, 15.0000], 19.453521),
    ([60.2574, -34.0099, 36.2677], [60.4626, -34.1751, 39.4387], 1.264420),
];

/// scikit-image `rgb2lab` output, from `data/gen_golden.py`.
pub const LAB_GOLDEN: [([u8; 3], [f64; 3]); 4] = [
    ([255, 0, 0], [53.240588, 80.092308, 67.202751]),
    ([0, 255, 0], [87.735099, -86.183030, 83.179703]),
    ([0, 0, 255], [32.295673, 79.185591, -107.857300]),
    ([200, 40, 40], [44.167027, 60.865013, 40.843409]),
];

/// Reference leader clustering written directly from the definition: an
/// image is a leader iff it is at least `t` from every earlier leader, and
/// a non-leader belongs to the earliest leader within `t`.
pub fn leader_oracle(colors: &[Rgb8], t: f64) -> Vec<Vec<usize>> {
    let labs: Vec<Lab> = colors.iter().map(|c| c.to_lab()).collect();
    let n = labs.len();
    let mut is_leader = vec![false; n];
    for i in 0..n {
        is_leader[i] = (0..i).all(|j| !is_leader[j] || ciede2000(labs[j], labs[i]) >= t);
    }
    let mut groups: Vec<(usize, Vec<usize>)> =
        (0..n).filter(|&i| is_leader[i]).map(|i| (i, vec![])).collect();
    for i in 0..n {
        let g = groups
            .iter_mut()
            .find(|(l, _)| ciede2000(labs[*l], labs[i]) < t)
            .expect("every image is near its own leader");
        g.1.push(i);
    }
    let mut out: Vec<(Lab, Vec<usize>)> = groups.into_iter().map(|(l, m)| (labs[l], m)).collect();
    out.sort_by(|x, y| y.1.len().cmp(&x.1.len()).then(x.0.total_cmp(&y.0)));
    out.into_iter()
        .map(|(_, m)| m)
        .filter(|m| m.len() >= 3)
        .take(5)
        .collect()
}

/// Quadratic reference: walk boxes best-first and drop any that overlaps an
/// already accepted box at or above the threshold.
pub fn brute_force_nms(boxes: &[DetectionBox], threshold: f64) -> Vec<u32> {
    let n = boxes.len();
    let better = |i: usize, j: usize| {
        boxes[i].confidence > boxes[j].confidence
            || (boxes[i].confidence == boxes[j].confidence && boxes[i].id < boxes[j].id)
    };
    let mut rank: Vec<usize> = (0..n).collect();
    // Selection by counting how many boxes beat each one.
    rank.sort_by_key(|&i| (0..n).filter(|&j| better(j, i)).count());
    let mut keep = vec![false; n];
    for (pos, &i) in rank.iter().enumerate() {
        let suppressed = rank[..pos].iter().any(|&j| {
            if !keep[j] {
                return false;
            }
            let (a, b) = (&boxes[i], &boxes[j]);
            let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
            let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
            let inter = iw * ih;
            let union = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
            union > 0.0 && inter / union >= threshold
        });
        keep[i] = !suppressed;
    }
    rank.into_iter().filter(|&i| keep[i]).map(|i| boxes[i].id).collect()
}

/// Textbook weighted Lloyd iteration, kept separate from the crate's.
pub fn reference_lloyd(points: &[WeightedPoint], mut centers: Vec<[f64; 3]>) -> (Vec<[f64; 3]>, Vec<f64>) {
    let assign = |centers: &[[f64; 3]], p: &WeightedPoint| {
        let v = [p.lab.l, p.lab.a, p.lab.b];
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in centers.iter().enumerate() {
            let d: f64 = (0..3).map(|k| (v[k] - c[k]).powi(2)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    };
    for _ in 0..100 {
        let mut sums = vec![[0.0; 3]; centers.len()];
        let mut w = vec![0.0; centers.len()];
        for p in points {
            let i = assign(&centers, p);
            w[i] += p.weight;
            sums[i][0] += p.weight * p.lab.l;
            sums[i][1] += p.weight * p.lab.a;
            sums[i][2] += p.weight * p.lab.b;
        }
        let mut shift: f64 = 0.0;
        for i in 0..centers.len() {
            if w[i] > 0.0 {
                let next = [sums[i][0] / w[i], sums[i][1] / w[i], sums[i][2] / w[i]];
                let d: f64 = (0..3).map(|k| (next[k] - centers[i][k]).powi(2)).sum::<f64>().sqrt();
                shift = shift.max(d);
                centers[i] = next;
            }
        }
        if shift < 0.1 {
            break;
        }
    }
    let mut w = vec![0.0; centers.len()];
    for p in points {
        w[assign(&centers, p)] += p.weight;
    }
    (centers, w)
}

/// sum / sum-of-squares form, independent of the two-pass formula.
pub fn stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let s: f64 = values.iter().sum();
    let ss: f64 = values.iter().map(|v| v * v).sum();
    let mean = s / n;
    let var = if values.len() > 1 { (ss - n * mean * mean) / (n - 1.0) } else { 0.0 };
    (mean, var.max(0.0).sqrt())
}

pub trait ShuffleWith {
    fn shuffle_with(&mut self, rng: &mut ChaCha8Rng);
}

impl<T> ShuffleWith for Vec<T> {
    fn shuffle_with(&mut self, rng: &mut ChaCha8Rng) {
        for i in (1..self.len()).rev() {
            let j = rng.gen_range(0..=i);
            self.swap(i, j);
        }
    }
}
