//! Clock model and clock-parameter algebra.
//!
//! A node's local clock maps reference time `t` to `skew * t + offset`.
//! Skew is carried as the dimensionless rate ratio (close to 1); parts-per-
//! million only appear at reporting boundaries as `(skew - 1) * 1e6`. All
//! times are double-precision nanoseconds of simulated time.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};

/// True (or estimated) clock parameters of a node: rate ratio `skew` and
/// additive `offset` in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockParams {
    /// Dimensionless rate ratio relative to reference time. Must be > 0.
    pub skew: f64,
    /// Offset in nanoseconds at reference time zero.
    pub offset: f64,
}

impl ClockParams {
    /// Builds clock parameters, rejecting non-positive or non-finite skew.
    pub fn new(skew: f64, offset: f64) -> Result<Self> {
        if !(skew > 0.0) || !skew.is_finite() || !offset.is_finite() {
            return Err(SyncError::NonPositiveSkew(skew));
        }
        Ok(ClockParams { skew, offset })
    }

    /// The identity clock (skew 1, offset 0): reads reference time exactly.
    pub fn reference() -> Self {
        ClockParams {
            skew: 1.0,
            offset: 0.0,
        }
    }

    /// Reads this clock at reference time `t` (ns): `skew * t + offset`.
    pub fn read(&self, t: f64) -> f64 {
        self.skew * t + self.offset
    }

    /// Inverts the clock map: reference time at which this clock shows
    /// `local` nanoseconds.
    pub fn invert(&self, local: f64) -> f64 {
        (local - self.offset) / self.skew
    }

    /// Skew expressed in parts per million, `(skew - 1) * 1e6`.
    pub fn skew_ppm(&self) -> f64 {
        (self.skew - 1.0) * 1e6
    }
}

/// Parameters of `child`'s clock expressed against `parent`'s clock instead
/// of reference time, so that for all `t`:
/// `child.read(t) == relative.read(parent.read(t))`.
///
/// Relative skew is `child.skew / parent.skew` and relative offset is
/// `child.offset - relative_skew * parent.offset`.
pub fn relative_params(child: &ClockParams, parent: &ClockParams) -> Result<ClockParams> {
    if !(parent.skew > 0.0) {
        return Err(SyncError::NonPositiveSkew(parent.skew));
    }
    let skew = child.skew / parent.skew;
    let offset = child.offset - skew * parent.offset;
    ClockParams::new(skew, offset)
}

/// Inverse of [`relative_params`]: composes a child-vs-parent relative
/// estimate with the parent's absolute estimate into the child's absolute
/// estimate.
///
/// `skew = relative.skew * parent.skew`,
/// `offset = relative.offset + relative.skew * parent.offset`.
pub fn compose_estimates(relative: &ClockParams, parent: &ClockParams) -> Result<ClockParams> {
    if !(relative.skew > 0.0) {
        return Err(SyncError::NonPositiveSkew(relative.skew));
    }
    if !(parent.skew > 0.0) {
        return Err(SyncError::NonPositiveSkew(parent.skew));
    }
    ClockParams::new(
        relative.skew * parent.skew,
        relative.offset + relative.skew * parent.offset,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn read_identity_clock() {
        let c = ClockParams::reference();
        assert_eq!(c.read(5000.0), 5000.0);
    }

    #[test]
    fn read_offset_only() {
        let c = ClockParams::new(1.0, -1000.0).unwrap();
        assert_eq!(c.read(0.0), -1000.0);
    }

    #[test]
    fn read_skew_and_offset() {
        let c = ClockParams::new(1.01, 250.0).unwrap();
        assert_eq!(c.read(1e6), 1.01 * 1e6 + 250.0);
    }

    #[test]
    fn invert_round_trip() {
        let c = ClockParams::new(1.003, -412.5).unwrap();
        let t = 7.25e6;
        assert_relative_eq!(c.invert(c.read(t)), t, max_relative = 1e-12);
    }

    #[test]
    fn relative_to_reference_parent_is_child() {
        let child = ClockParams::new(1.0, 100.0).unwrap();
        let rel = relative_params(&child, &ClockParams::reference()).unwrap();
        assert_eq!(rel, child);
    }

    #[test]
    fn self_relative_is_identity() {
        let c = ClockParams::new(1.02, 314.0).unwrap();
        let rel = relative_params(&c, &c).unwrap();
        assert_relative_eq!(rel.skew, 1.0, max_relative = 1e-15);
        assert_relative_eq!(rel.offset, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn relative_satisfies_composition_identity() {
        let child = ClockParams::new(1.02, 500.0).unwrap();
        let parent = ClockParams::new(1.01, 200.0).unwrap();
        let rel = relative_params(&child, &parent).unwrap();
        // child.read(t) == rel.read(parent.read(t)) at a spread of times
        for i in 0..10 {
            let t = -3e6 + 0.7e6 * i as f64;
            let direct = child.read(t);
            let via_parent = rel.read(parent.read(t));
            assert_relative_eq!(direct, via_parent, max_relative = 1e-9);
        }
    }

    #[test]
    fn compose_with_identity_relative() {
        let parent = ClockParams::new(1.005, 40.0).unwrap();
        let rel = ClockParams::reference();
        let c = compose_estimates(&rel, &parent).unwrap();
        assert_eq!(c, parent);
    }

    #[test]
    fn compose_with_reference_parent() {
        let rel = ClockParams::new(1.001, 10.0).unwrap();
        let c = compose_estimates(&rel, &ClockParams::reference()).unwrap();
        assert_eq!(c, rel);
    }

    #[test]
    fn non_positive_parent_skew_rejected() {
        let child = ClockParams::new(1.0, 0.0).unwrap();
        let bad = ClockParams {
            skew: 0.0,
            offset: 0.0,
        };
        assert!(relative_params(&child, &bad).is_err());
        assert!(compose_estimates(&child, &bad).is_err());
    }

    proptest! {
        #[test]
        fn read_is_affine(
            skew in 0.9f64..1.1,
            offset in -1000.0f64..1000.0,
            t1 in -1e7f64..1e7,
            t2 in -1e7f64..1e7,
            alpha in 0.0f64..1.0,
        ) {
            let c = ClockParams::new(skew, offset).unwrap();
            let blend = alpha * t1 + (1.0 - alpha) * t2;
            let lhs = c.read(blend);
            let rhs = alpha * c.read(t1) + (1.0 - alpha) * c.read(t2);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }

        #[test]
        fn relative_then_compose_is_identity(
            cs in 0.9f64..1.1,
            co in -1000.0f64..1000.0,
            ps in 0.9f64..1.1,
            po in -1000.0f64..1000.0,
        ) {
            let child = ClockParams::new(cs, co).unwrap();
            let parent = ClockParams::new(ps, po).unwrap();
            let rel = relative_params(&child, &parent).unwrap();
            let back = compose_estimates(&rel, &parent).unwrap();
            prop_assert!((back.skew - child.skew).abs() <= 1e-9 * child.skew);
            prop_assert!(
                (back.offset - child.offset).abs()
                    <= 1e-9 * child.offset.abs().max(1.0)
            );
        }
    }
}
