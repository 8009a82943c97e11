//! Count-weighted k-means in CIELAB with k-means++ seeding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::color_space::Lab;

pub const MAX_ITERATIONS: usize = 100;
/// Stop once no centre moves further than this (Euclidean Lab distance).
pub const CONVERGENCE_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub lab: Lab,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centers: Vec<Lab>,
    /// Total weight assigned to each centre.
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Weighted sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = Some(i);
        if target < acc {
            return Some(i);
        }
    }
    last_positive
}

/// k-means++ seeding: the first centre is drawn in proportion to weight,
/// each further one in proportion to weight times squared distance to the
/// nearest chosen centre. Returns fewer than `k` centres when the points
/// run out of distinct positions.
pub fn seed_centers(points: &[WeightedPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<Lab> {
    let mut centers = Vec::with_capacity(k);
    if k == 0 {
        return centers;
    }
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let Some(first) = pick(rng, &weights) else {
        return centers;
    };
    centers.push(points[first].lab);
    let mut nearest: Vec<f64> = points.iter().map(|p| p.lab.distance_sq(centers[0])).collect();
    while centers.len() < k {
        let scores: Vec<f64> = points.iter().zip(&nearest).map(|(p, d)| p.weight * d).collect();
        let Some(next) = pick(rng, &scores) else { break };
        let c = points[next].lab;
        centers.push(c);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(p.lab.distance_sq(c));
        }
    }
    centers
}

fn nearest_center(centers: &[Lab], lab: Lab) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = lab.distance_sq(*c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd iterations from the given centres. Empty clusters keep their centre
/// and end with zero weight.
pub fn lloyd(points: &[WeightedPoint], initial: Vec<Lab>) -> Clustering {
    let mut centers = initial;
    let k = centers.len();
    let mut objective = Vec::new();
    let mut weights = vec![0.0; k];
    let mut iterations = 0;
    if k == 0 {
        return Clustering { centers, weights, iterations, objective };
    }
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![[0.0f64; 3]; k];
        weights = vec![0.0; k];
        let mut cost = 0.0;
        for p in points {
            let (i, d) = nearest_center(&centers, p.lab);
            cost += p.weight * d;
            weights[i] += p.weight;
            sums[i][0] += p.weight * p.lab.l;
            sums[i][1] += p.weight * p.lab.a;
            sums[i][2] += p.weight * p.lab.b;
        }
        objective.push(cost);
        let mut max_shift = 0.0f64;
        for i in 0..k {
            if weights[i] > 0.0 {
                let w = weights[i];
                let next = Lab::new(sums[i][0] / w, sums[i][1] / w, sums[i][2] / w);
                max_shift = max_shift.max(next.distance(centers[i]));
                centers[i] = next;
            }
        }
        if max_shift < CONVERGENCE_TOLERANCE {
            break;
        }
    }
    // Final assignment so weights match the returned centres.
    weights = vec![0.0; k];
    for p in points {
        weights[nearest_center(&centers, p.lab).0] += p.weight;
    }
    Clustering { centers, weights, iterations, objective }
}

pub fn kmeans(points: &[WeightedPoint], k: usize, rng: &mut ChaCha8Rng) -> Clustering {
    let centers = seed_centers(points, k, rng);
    lloyd(points, centers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pt(l: f64, a: f64, b: f64, w: f64) -> WeightedPoint {
        WeightedPoint { lab: Lab::new(l, a, b), weight: w }
    }

    #[test]
    fn seeding_stops_at_distinct_points() {
        let points = [pt(10.0, 0.0, 0.0, 3.0), pt(80.0, 0.0, 0.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = seed_centers(&points, 5, &mut rng);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn two_points_split_by_weight() {
        let points = [pt(10.0, 0.0, 0.0, 3.0), pt(80.0, 0.0, 0.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = kmeans(&points, 2, &mut rng);
        let mut w = c.weights.clone();
        w.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(w, vec![3.0, 1.0]);
    }

    #[test]
    fn empty_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = kmeans(&[], 5, &mut rng);
        assert!(c.centers.is_empty());
        let zero = [pt(1.0, 1.0, 1.0, 0.0)];
        assert!(kmeans(&zero, 2, &mut rng).centers.is_empty());
    }
}
