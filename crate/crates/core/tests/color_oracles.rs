//! Colour conversion and CIEDE2000 against frozen reference values.
//!
//! Values come from `data/gen_golden.py` (scikit-image); the CIEDE2000 pairs
//! are the first twenty of the Sharma–Wu–Dalal test set.

use gencolor_core::color_space::{ciede2000, lab_to_srgb, srgb_to_lab, Lab, Rgb8};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod support;
use support::{CIEDE2000_GOLDEN, LAB_GOLDEN};

fn lab(v: [f64; 3]) -> Lab {
    Lab::new(v[0], v[1], v[2])
}

#[test]
fn ciede2000_matches_reference_pairs() {
    for (x, y, want) in CIEDE2000_GOLDEN {
        let got = ciede2000(lab(x), lab(y));
        // Golden values carry six decimals.
        assert!((got - want).abs() < 1e-4, "{x:?} {y:?}: {got} vs {want}");
    }
}

#[test]
fn srgb_to_lab_matches_reference() {
    for (rgb, want) in LAB_GOLDEN {
        let got = srgb_to_lab(Rgb8::from(rgb));
        // Reference uses slightly different matrix rounding.
        assert!((got.l - want[0]).abs() < 0.02, "{rgb:?} L {}", got.l);
        assert!((got.a - want[1]).abs() < 0.05, "{rgb:?} a {}", got.a);
        assert!((got.b - want[2]).abs() < 0.05, "{rgb:?} b {}", got.b);
    }
}

#[test]
fn round_trip_ten_thousand_colors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0i32;
    for _ in 0..10_000 {
        let c = Rgb8::new(rng.gen(), rng.gen(), rng.gen());
        let back = lab_to_srgb(srgb_to_lab(c));
        for (a, b) in c.channels().iter().zip(back.channels()) {
            worst = worst.max((i32::from(*a) - i32::from(b)).abs());
        }
    }
    assert!(worst <= 1, "max channel error {worst}");
}

#[test]
fn round_trip_full_gray_ramp_is_exact() {
    for v in 0..=255u8 {
        let c = Rgb8::new(v, v, v);
        assert_eq!(lab_to_srgb(srgb_to_lab(c)), c);
    }
}

fn any_lab() -> impl Strategy<Value = Lab> {
    (0.0..100.0f64, -128.0..128.0f64, -128.0..128.0f64).prop_map(|(l, a, b)| Lab::new(l, a, b))
}

fn gray_lab() -> impl Strategy<Value = Lab> {
    (0.0..100.0f64).prop_map(|l| Lab::new(l, 0.0, 0.0))
}

proptest! {
    #[test]
    fn ciede2000_symmetric(x in any_lab(), y in any_lab()) {
        let d1 = ciede2000(x, y);
        let d2 = ciede2000(y, x);
        prop_assert!((d1 - d2).abs() < 1e-9);
    }

    #[test]
    fn ciede2000_identity(x in any_lab()) {
        prop_assert_eq!(ciede2000(x, x), 0.0);
    }

    #[test]
    fn ciede2000_finite_nonnegative(x in prop_oneof![any_lab(), gray_lab()], y in prop_oneof![any_lab(), gray_lab()]) {
        let d = ciede2000(x, y);
        prop_assert!(d.is_finite() && d >= 0.0);
        if x != y {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn lab_from_srgb_in_range(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
        let l = srgb_to_lab(Rgb8::new(r, g, b));
        prop_assert!(l.is_finite());
        prop_assert!((-1e-9..=100.0 + 1e-9).contains(&l.l));
    }

    #[test]
    fn lab_to_srgb_total(x in (-50.0..150.0f64, -300.0..300.0f64, -300.0..300.0f64)) {
        // Any finite input yields a valid (clamped) colour without panicking.
        let _ = lab_to_srgb(Lab::new(x.0, x.1, x.2));
    }
}
