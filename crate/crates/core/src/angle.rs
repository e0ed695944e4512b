//! Mod-π arithmetic for phase angles.

use std::f64::consts::{FRAC_PI_2, PI};

/// Folds an angle into `[0, π)`.
pub fn canonical(angle: f64) -> f64 {
    let r = angle.rem_euclid(PI);
    // rem_euclid of a tiny negative value rounds up to exactly π
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Distance between two phase angles modulo π, in `[0, π/2]`.
pub fn distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(PI);
    d.min(PI - d)
}

/// Signed difference `a - b` modulo π, mapped into `(-π/2, π/2]`.
pub fn signed_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    if d > FRAC_PI_2 {
        d - PI
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_range() {
        assert_eq!(canonical(0.0), 0.0);
        assert!((canonical(-FRAC_PI_2) - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(canonical(-1e-18), 0.0);
        assert!((canonical(3.0 * PI + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn distance_wraps() {
        assert!((distance(0.01, PI - 0.01) - 0.02).abs() < 1e-12);
        assert!((distance(0.0, FRAC_PI_2) - FRAC_PI_2).abs() < 1e-15);
        assert!((signed_difference(0.01, PI - 0.01) - 0.02).abs() < 1e-12);
        assert!((signed_difference(PI - 0.01, 0.01) + 0.02).abs() < 1e-12);
        assert!((signed_difference(FRAC_PI_2, 0.0) - FRAC_PI_2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn canonical_is_in_range(a in -100.0f64..100.0) {
            let c = canonical(a);
            prop_assert!((0.0..PI).contains(&c));
            prop_assert!(distance(a, c) < 1e-12);
        }

        #[test]
        fn distance_matches_signed(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            prop_assert!((distance(a, b) - signed_difference(a, b).abs()).abs() < 1e-12);
        }
    }
}
