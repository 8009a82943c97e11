//! Colour association checked against naive reference computations.

use std::collections::HashMap;

use gencolor_core::association::{
    accent_colors_from_histogram, accent_points, accents_from_clustering, discretize,
    group_images, group_primary, image_dominant, BinHistogram, BinIndex, GroupingParams,
    ImageColorSummary,
};
use gencolor_core::color_space::{ciede2000, Lab, Rgb8};
use gencolor_core::corpus::RgbImage;
use gencolor_core::kmeans;
use gencolor_core::segmentation::SegmentMask;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod support;
use support::{leader_oracle, reference_lloyd, ShuffleWith};

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| Rgb8::new(rng.gen(), rng.gen(), rng.gen()))
}

#[test]
fn discretize_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for stride in [1u32, 2, 3] {
        let img = random_image(&mut rng, 37, 23);
        let mask = SegmentMask::from_fn(37, 23, |x, y| (x * 7 + y * 3) % 5 != 0);
        let hist = discretize(&img, &mask, stride).unwrap();

        let mut counts: HashMap<(u8, u8, u8), (u64, [u64; 3])> = HashMap::new();
        let mut sampled = 0u64;
        for y in 0..23 {
            for x in 0..37 {
                if x % stride != 0 || y % stride != 0 || !mask.get(x, y) {
                    continue;
                }
                let p = img.get(x, y);
                let e = counts.entry((p.r / 16, p.g / 16, p.b / 16)).or_default();
                e.0 += 1;
                e.1[0] += u64::from(p.r);
                e.1[1] += u64::from(p.g);
                e.1[2] += u64::from(p.b);
                sampled += 1;
            }
        }
        assert_eq!(hist.total(), sampled);
        assert_eq!(hist.occupied().count(), counts.len());
        for ((r, g, b), (n, sums)) in counts {
            let bin = BinIndex::from_coords(r, g, b);
            assert_eq!(hist.count(bin), n);
            let mean = |s: u64| ((s as f64) / (n as f64)).round() as u8;
            let rep = hist.representative(bin).unwrap();
            // Integer rounding of the mean vs float rounding: identical except at .5 ties.
            for (got, want) in rep.channels().iter().zip([mean(sums[0]), mean(sums[1]), mean(sums[2])]) {
                assert!((i16::from(*got) - i16::from(want)).abs() <= 1);
            }
            // Representative stays inside its bin.
            assert_eq!(BinIndex::of(rep), bin);
        }
    }
}

#[test]
fn dominant_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let mut hist = BinHistogram::new();
        let mut counts = vec![0u64; 4096];
        for _ in 0..rng.gen_range(1..40) {
            let c = Rgb8::new(rng.gen_range(0..64), rng.gen_range(0..64), rng.gen());
            let n = rng.gen_range(1..4);
            hist.add_weighted(c, n);
            counts[BinIndex::of(c).index()] += n;
        }
        let max = *counts.iter().max().unwrap();
        let first = counts.iter().position(|&n| n == max).unwrap();
        let (r, g, b) = ((first >> 8) as u8, ((first >> 4) & 15) as u8, (first & 15) as u8);
        let want = hist.representative(BinIndex::from_coords(r, g, b)).unwrap();
        assert_eq!(image_dominant(&hist).unwrap(), want);
    }
}

#[test]
fn tied_bins_prefer_lower_index() {
    let mut hist = BinHistogram::new();
    hist.add_weighted(Rgb8::new(100, 0, 0), 10);
    hist.add_weighted(Rgb8::new(0, 100, 0), 10);
    assert_eq!(image_dominant(&hist).unwrap(), Rgb8::new(0, 100, 0));
}

fn summary(id: String, c: Rgb8) -> ImageColorSummary {
    let mut h = BinHistogram::new();
    h.add_weighted(c, 4);
    ImageColorSummary::new(id, h).unwrap()
}

fn cluster_centers() -> Vec<Lab> {
    [
        Rgb8::new(230, 80, 170),
        Rgb8::new(80, 230, 80),
        Rgb8::new(20, 20, 110),
        Rgb8::new(110, 50, 20),
        Rgb8::new(20, 80, 20),
        Rgb8::new(50, 140, 200),
        Rgb8::new(230, 170, 110),
    ]
    .iter()
    .map(|c| c.to_lab())
    .collect()
}

#[test]
fn seeded_clusters_recovered() {
    let centers = cluster_centers();
    for (i, a) in centers.iter().enumerate() {
        for b in &centers[i + 1..] {
            assert!(ciede2000(*a, *b) > 40.0);
        }
    }
    let sizes = [9usize, 7, 6, 5, 4, 2, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut colors = Vec::new();
    let mut truth = Vec::new();
    for (k, (&c, &n)) in centers.iter().zip(&sizes).enumerate() {
        for _ in 0..n {
            // Jitter until the colour is within 3 of its centre, so every
            // intra-cluster pair is within 6.
            let col = loop {
                let p = Lab::new(
                    c.l + rng.gen_range(-2.0..2.0),
                    c.a + rng.gen_range(-2.0..2.0),
                    c.b + rng.gen_range(-2.0..2.0),
                )
                .to_rgb8();
                if ciede2000(p.to_lab(), c) < 3.0 {
                    break p;
                }
            };
            colors.push(col);
            truth.push(k);
        }
    }
    for i in 0..colors.len() {
        for j in 0..colors.len() {
            let d = ciede2000(colors[i].to_lab(), colors[j].to_lab());
            if truth[i] == truth[j] {
                assert!(d < 6.0);
            } else {
                assert!(d > 30.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..colors.len()).collect();
    order.shuffle_with(&mut rng);
    let summaries: Vec<_> = order
        .iter()
        .map(|&i| summary(format!("img-{i:03}"), colors[i]))
        .collect();
    let groups = group_images(&summaries, &GroupingParams::default()).unwrap();
    // Seven clusters, five with >= 3 members.
    assert_eq!(groups.len(), 5);

    // Brute-force connected components agree with the groups.
    let oracle = leader_oracle(&colors, 12.0);
    assert_eq!(oracle.len(), 5);
    for (g, want) in groups.iter().zip(&oracle) {
        let want_ids: Vec<String> = want.iter().map(|i| format!("img-{i:03}")).collect();
        assert_eq!(g.members, want_ids);
        let k = truth[want[0]];
        assert!(want.iter().all(|&i| truth[i] == k));
        assert_eq!(want.len(), sizes[k]);
    }
}

fn colors_near_centers() -> impl Strategy<Value = Vec<Rgb8>> {
    prop::collection::vec((0usize..4, -12.0..12.0f64, -12.0..12.0f64, -12.0..12.0f64), 1..30)
        .prop_map(|v| {
            let centers = [
                Lab::new(50.0, 40.0, 30.0),
                Lab::new(55.0, 30.0, 40.0),
                Lab::new(40.0, -30.0, 20.0),
                Lab::new(70.0, 0.0, -40.0),
            ];
            v.into_iter()
                .map(|(k, dl, da, db)| {
                    let c = centers[k];
                    Lab::new(c.l + dl, c.a + da, c.b + db).to_rgb8()
                })
                .collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn grouping_matches_oracle(colors in colors_near_centers(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..colors.len()).collect();
        order.shuffle_with(&mut rng);
        let summaries: Vec<_> = order.iter().map(|&i| summary(format!("{i:03}"), colors[i])).collect();
        // Dominant equals the input colour (single bin).
        let oracle = leader_oracle(&colors, 12.0);
        match group_images(&summaries, &GroupingParams::default()) {
            Ok(groups) => {
                prop_assert_eq!(groups.len(), oracle.len());
                for (g, want) in groups.iter().zip(&oracle) {
                    let ids: Vec<String> = want.iter().map(|i| format!("{i:03}")).collect();
                    prop_assert_eq!(&g.members, &ids);
                    prop_assert_eq!(g.histogram.total(), 4 * want.len() as u64);
                }
                // Leaders pairwise at least the threshold apart.
                for (i, a) in groups.iter().enumerate() {
                    for b in &groups[i + 1..] {
                        prop_assert!(ciede2000(a.leader, b.leader) >= 12.0);
                    }
                }
            }
            Err(_) => prop_assert!(oracle.is_empty()),
        }
    }
}

#[test]
fn group_primary_band_and_centroid() {
    // Build bins at chosen distances from a dominant colour by walking
    // lightness until CIEDE2000 hits the target; keep each in its own bin.
    let dominant = Rgb8::new(56, 120, 200);
    let dl = dominant.to_lab();
    let targets = [2.0, 5.0, 6.9, 7.5, 20.0];
    let mut hist = BinHistogram::new();
    hist.add_weighted(dominant, 100);
    let mut placed = Vec::new();
    // Scan nearby sRGB colours for one at each target distance, each in a
    // fresh bin and clear of the band edge.
    let mut candidates = Vec::new();
    for dr in (-60i16..=60).step_by(3) {
        for dg in (-60i16..=60).step_by(3) {
            for db in (-60i16..=54).step_by(3) {
                let ch = |v: u8, d: i16| (i16::from(v) + d).clamp(0, 255) as u8;
                candidates.push(Rgb8::new(ch(dominant.r, dr), ch(dominant.g, dg), ch(dominant.b, db)));
            }
        }
    }
    for &t in &targets {
        let best = candidates
            .iter()
            .copied()
            .filter(|c| hist.count(BinIndex::of(*c)) == 0)
            .min_by(|x, y| {
                let dx = (ciede2000(x.to_lab(), dl) - t).abs();
                let dy = (ciede2000(y.to_lab(), dl) - t).abs();
                dx.total_cmp(&dy)
            })
            .unwrap();
        let d = ciede2000(best.to_lab(), dl);
        assert!((d - t).abs() < 0.1, "target {t} got {d}");
        hist.add_weighted(best, 10);
        placed.push((best, d));
    }
    let gp = group_primary(&hist, 7.0).unwrap();
    assert_eq!(gp.group_dominant, dominant);
    let mut in_band: Vec<(Rgb8, u64)> = vec![(dominant, 100)];
    in_band.extend(placed.iter().filter(|(_, d)| *d <= 7.0).map(|(c, _)| (*c, 10)));
    assert_eq!(gp.top_colors.len(), 4);
    let mut got_set = gp.top_colors.clone();
    got_set.sort();
    let mut want_set = in_band.clone();
    want_set.sort();
    assert_eq!(got_set, want_set);

    // Independent weighted mean.
    let w: f64 = in_band.iter().map(|(_, n)| *n as f64).sum();
    let mean = in_band.iter().fold([0.0; 3], |acc, (c, n)| {
        let l = c.to_lab();
        let n = *n as f64;
        [acc[0] + n * l.l, acc[1] + n * l.a, acc[2] + n * l.b]
    });
    let oracle = Lab::new(mean[0] / w, mean[1] / w, mean[2] / w).to_rgb8();
    for (a, b) in gp.primary.channels().iter().zip(oracle.channels()) {
        assert!((i16::from(*a) - i16::from(b)).abs() <= 1);
    }
}

#[test]
fn equal_bins_give_lab_midpoint() {
    let a = Rgb8::new(200, 40, 40);
    // Find a colour ~3 away in a different bin.
    let la = a.to_lab();
    let b = (1..200)
        .map(|i| Lab::new(la.l + f64::from(i) * 0.05, la.a, la.b).to_rgb8())
        .find(|c| BinIndex::of(*c) != BinIndex::of(a) && ciede2000(c.to_lab(), la) >= 3.0)
        .unwrap();
    let mut hist = BinHistogram::new();
    hist.add_weighted(a, 5);
    hist.add_weighted(b, 5);
    let gp = group_primary(&hist, 7.0).unwrap();
    let lb = b.to_lab();
    let mid = Lab::new((la.l + lb.l) / 2.0, (la.a + lb.a) / 2.0, (la.b + lb.b) / 2.0);
    assert!((gp.primary_lab.l - mid.l).abs() < 1e-9);
    assert!((gp.primary_lab.a - mid.a).abs() < 1e-9);
    assert!((gp.primary_lab.b - mid.b).abs() < 1e-9);
    assert_eq!(gp.primary, mid.to_rgb8());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn primary_stays_near_dominant(pixels in prop::collection::vec((any::<u8>(), any::<u8>(), any::<u8>(), 1u64..20), 1..60)) {
        let mut hist = BinHistogram::new();
        for (r, g, b, n) in &pixels {
            hist.add_weighted(Rgb8::new(*r, *g, *b), *n);
        }
        let gp = group_primary(&hist, 7.0).unwrap();
        let dom = gp.group_dominant.to_lab();
        let labs: Vec<Lab> = gp.top_colors.iter().map(|(c, _)| c.to_lab()).collect();
        let (lo, hi) = labs.iter().fold(
            ([f64::MAX; 3], [f64::MIN; 3]),
            |(lo, hi), l| (
                [lo[0].min(l.l), lo[1].min(l.a), lo[2].min(l.b)],
                [hi[0].max(l.l), hi[1].max(l.a), hi[2].max(l.b)],
            ),
        );
        let p = gp.primary_lab;
        let eps = 1e-9;
        prop_assert!(p.l >= lo[0] - eps && p.l <= hi[0] + eps);
        prop_assert!(p.a >= lo[1] - eps && p.a <= hi[1] + eps);
        prop_assert!(p.b >= lo[2] - eps && p.b <= hi[2] + eps);
        let max_top = labs.iter().map(|l| ciede2000(*l, dom)).fold(0.0, f64::max);
        prop_assert!(ciede2000(gp.primary.to_lab(), dom) <= max_top + 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn accents_match_reference_lloyd(
        pixels in prop::collection::vec((any::<u8>(), any::<u8>(), any::<u8>(), 1u64..50), 1..80),
        k in 1usize..7,
        seed in any::<u64>(),
    ) {
        let mut hist = BinHistogram::new();
        for (r, g, b, n) in &pixels {
            hist.add_weighted(Rgb8::new(*r, *g, *b), *n);
        }
        let points = accent_points(&hist);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds = kmeans::seed_centers(&points, k, &mut rng);
        prop_assert_eq!(seeds.len(), k.min(points.len()));
        let (centers, weights) = reference_lloyd(&points, seeds.iter().map(|c| [c.l, c.a, c.b]).collect());

        let got = kmeans::lloyd(&points, seeds);
        for (g, w) in got.centers.iter().zip(&centers) {
            prop_assert!((g.l - w[0]).abs() < 1e-9 && (g.a - w[1]).abs() < 1e-9 && (g.b - w[2]).abs() < 1e-9);
        }
        prop_assert_eq!(&got.weights, &weights);
        // Objective never increases.
        for pair in got.objective.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-6 * pair[0].max(1.0));
        }

        let accents = accent_colors_from_histogram(&hist, k, seed).unwrap();
        let labs: Vec<Lab> = centers.iter().map(|c| Lab::new(c[0], c[1], c[2])).collect();
        prop_assert_eq!(&accents, &accents_from_clustering(&labs, &weights));
        let total: f64 = accents.iter().map(|a| a.proportion).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(accents.len() <= k);
        prop_assert!(accents.windows(2).all(|w| w[0].proportion >= w[1].proportion));
    }
}

#[test]
fn well_separated_blobs_recovered() {
    let means = [
        Lab::new(50.0, 60.0, 45.0),
        Lab::new(70.0, -55.0, 50.0),
        Lab::new(35.0, 25.0, -65.0),
        Lab::new(90.0, -5.0, 70.0),
        Lab::new(20.0, 0.0, 0.0),
    ];
    let weights = [400u64, 300, 200, 150, 100];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hist = BinHistogram::new();
    let mut blob_pixels: Vec<Vec<Rgb8>> = vec![Vec::new(); 5];
    for (i, (&m, &n)) in means.iter().zip(&weights).enumerate() {
        for _ in 0..n {
            let c = Lab::new(
                m.l + rng.gen_range(-3.0..3.0),
                m.a + rng.gen_range(-3.0..3.0),
                m.b + rng.gen_range(-3.0..3.0),
            )
            .to_rgb8();
            hist.add(c);
            blob_pixels[i].push(c);
        }
    }
    let accents = accent_colors_from_histogram(&hist, 5, 42).unwrap();
    assert_eq!(accents.len(), 5);
    for (i, px) in blob_pixels.iter().enumerate() {
        // The bin-level mean of the blob, the quantity k-means sees.
        let mut bh = BinHistogram::new();
        px.iter().for_each(|c| bh.add(*c));
        let pts = accent_points(&bh);
        let w: f64 = pts.iter().map(|p| p.weight).sum();
        let mean = pts.iter().fold([0.0; 3], |a, p| {
            [a[0] + p.weight * p.lab.l, a[1] + p.weight * p.lab.a, a[2] + p.weight * p.lab.b]
        });
        let blob_mean = Lab::new(mean[0] / w, mean[1] / w, mean[2] / w);
        let nearest = accents
            .iter()
            .map(|a| ciede2000(a.color.to_lab(), blob_mean))
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= 2.0, "blob {i}: {nearest}");
        let want = weights[i] as f64 / 1150.0;
        assert!(accents.iter().any(|a| (a.proportion - want).abs() < 1e-12));
    }
}
