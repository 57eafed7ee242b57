//! Angles on the circle and the 24-hour clock mapping.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

/// An angle in radians, stored as its representative in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Wraps any real value into `[0, 2π)`.
    pub fn new(radians: f64) -> Self {
        Angle(wrap(radians))
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    /// Maps decimal hours on a 24h clock to an angle (`θ = 2π·t/24`).
    pub fn from_hours(hours: f64) -> Self {
        Angle::new(TAU * hours / 24.0)
    }

    pub fn to_hours(self) -> f64 {
        self.0 * 24.0 / TAU
    }

    /// Renders as `HH:MM`, rounded to the nearest minute.
    pub fn to_clock(self) -> String {
        let minutes = (self.to_hours() * 60.0).round() as i64 % (24 * 60);
        format!("{:02}:{:02}", minutes / 60, minutes % 60)
    }

    /// Renders as `HH:MM:SS`, rounded to the nearest second.
    pub fn to_clock_seconds(self) -> String {
        let secs = (self.to_hours() * 3600.0).round() as i64 % (24 * 3600);
        format!(
            "{:02}:{:02}:{:02}",
            secs / 3600,
            (secs / 60) % 60,
            secs % 60
        )
    }

    /// Signed difference `self − other` wrapped to `(−π, π]`.
    pub fn signed_diff(self, other: Angle) -> f64 {
        wrap_signed(self.0 - other.0)
    }
}

impl From<f64> for Angle {
    fn from(v: f64) -> Self {
        Angle::new(v)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> Self {
        a.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Reduces `x` modulo 2π into `[0, 2π)`.
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduces `x` modulo 2π into `(−π, π]`.
pub fn wrap_signed(x: f64) -> f64 {
    let r = wrap(x);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wraps_into_canonical_interval() {
        assert_eq!(Angle::new(0.0).radians(), 0.0);
        assert_eq!(Angle::new(TAU).radians(), 0.0);
        assert!((Angle::new(-PI / 2.0).radians() - 1.5 * PI).abs() < 1e-15);
        assert_eq!(Angle::new(-1e-300).radians(), 0.0);
    }

    #[test]
    fn clock_rendering() {
        assert_eq!(Angle::new(2.7572).to_clock(), "10:32");
        assert_eq!(Angle::new(PI).to_clock(), "12:00");
        assert_eq!(Angle::new(0.0).to_clock(), "00:00");
        assert_eq!(Angle::from_hours(23.9999).to_clock(), "00:00");
        assert_eq!(
            Angle::from_hours(7.0 + 28.0 / 60.0 + 13.0 / 3600.0).to_clock_seconds(),
            "07:28:13"
        );
    }

    #[test]
    fn signed_diff_is_short_way_round() {
        let d = Angle::new(0.1).signed_diff(Angle::new(TAU - 0.1));
        assert!((d - 0.2).abs() < 1e-12);
        assert_eq!(wrap_signed(PI), PI);
        assert_eq!(wrap_signed(-PI), PI);
    }

    proptest! {
        #[test]
        fn wrap_is_periodic(v in -100.0f64..100.0, k in -20i32..20) {
            let a = wrap(v);
            let b = wrap(v + TAU * k as f64);
            prop_assert!((0.0..TAU).contains(&a));
            // periodicity up to the rounding of v + 2πk
            prop_assert!(wrap_signed(a - b).abs() < 1e-12);
        }

        #[test]
        fn signed_wrap_bounded(v in -1e3f64..1e3) {
            let s = wrap_signed(v);
            prop_assert!(s > -PI && s <= PI);
        }
    }
}
