use capsight_ingest::{compute_target_dimensions, ResizeRule};
use proptest::prelude::*;

const RULE: ResizeRule = ResizeRule {
    max_long_side: 1024,
    max_short_side: 768,
};

/// Independent oracle in floating point: scale, then round half up. Returns the
/// side and whether it sits so close to a .5 tie that f64 cannot decide it.
fn oracle_side(x: u32, w: u32, h: u32) -> (u32, bool) {
    let (long, short) = (w.max(h) as f64, w.min(h) as f64);
    let s = 1f64.min(1024.0 / long).min(768.0 / short);
    let exact = x as f64 * s;
    let near_tie = (exact.fract() - 0.5).abs() < 1e-9;
    (((exact + 0.5).floor() as u32).max(1), near_tie)
}

#[test]
fn worked_examples() {
    assert_eq!(compute_target_dimensions(800, 600, RULE), (800, 600));
    assert_eq!(compute_target_dimensions(2048, 1536, RULE), (1024, 768));
    assert_eq!(compute_target_dimensions(4000, 1000, RULE), (1024, 256));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn bounds_aspect_idempotence(w in 1u32..=20_000, h in 1u32..=20_000) {
        let (tw, th) = compute_target_dimensions(w, h, RULE);
        prop_assert!(tw.max(th) <= 1024);
        prop_assert!(tw.min(th) <= 768);
        prop_assert!(tw <= w && th <= h, "upscaled");
        prop_assert!(tw >= 1 && th >= 1);

        // Aspect: each side within 1 px of exact scaling by the other's factor.
        let s = 1f64.min(1024.0 / w.max(h) as f64).min(768.0 / w.min(h) as f64);
        prop_assert!((tw as f64 - w as f64 * s).abs() <= 1.0);
        prop_assert!((th as f64 - h as f64 * s).abs() <= 1.0);

        prop_assert_eq!(compute_target_dimensions(tw, th, RULE), (tw, th));
        for (got, x) in [(tw, w), (th, h)] {
            let (want, near_tie) = oracle_side(x, w, h);
            if near_tie {
                prop_assert!(got.abs_diff(want) <= 1);
            } else {
                prop_assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn within_bounds_is_identity(w in 1u32..=1024, h in 1u32..=768) {
        prop_assert_eq!(compute_target_dimensions(w, h, RULE), (w, h));
    }
}
