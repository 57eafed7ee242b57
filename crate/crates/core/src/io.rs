//! Reading and writing angle samples as clock times, decimal hours, or radians.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFormat {
    /// `HH:MM`
    Hhmm,
    /// `HH:MM:SS`
    Hhmmss,
    /// Decimal hours in `[0, 24)`.
    Hours,
    Radians,
}

impl FromStr for TimeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hhmm" => Ok(TimeFormat::Hhmm),
            "hhmmss" => Ok(TimeFormat::Hhmmss),
            "hours" => Ok(TimeFormat::Hours),
            "radians" => Ok(TimeFormat::Radians),
            other => Err(Error::Config(format!(
                "unknown format '{other}' (hhmm, hhmmss, hours, radians)"
            ))),
        }
    }
}

impl fmt::Display for TimeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeFormat::Hhmm => "hhmm",
            TimeFormat::Hhmmss => "hhmmss",
            TimeFormat::Hours => "hours",
            TimeFormat::Radians => "radians",
        })
    }
}

/// One parsed input line.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampRecord {
    pub raw: String,
    /// `None` for radian input.
    pub hours: Option<f64>,
    pub angle: Angle,
}

fn check_hours(h: f64) -> std::result::Result<f64, String> {
    if !(0.0..24.0).contains(&h) {
        return Err(format!("hour value {h} outside [0, 24)"));
    }
    Ok(h)
}

fn parse_clock(s: &str, with_seconds: bool) -> std::result::Result<f64, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let expected = if with_seconds { 3 } else { 2 };
    if parts.len() != expected {
        return Err(format!(
            "expected {} but got '{s}'",
            if with_seconds { "HH:MM:SS" } else { "HH:MM" }
        ));
    }
    let nums = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .map_err(|_| format!("'{p}' is not a non-negative integer in '{s}'"))
        })
        .collect::<std::result::Result<Vec<u32>, String>>()?;
    if nums[1] >= 60 || (with_seconds && nums[2] >= 60) {
        return Err(format!("minutes and seconds must be below 60 in '{s}'"));
    }
    let secs = nums.get(2).copied().unwrap_or(0);
    check_hours(nums[0] as f64 + nums[1] as f64 / 60.0 + secs as f64 / 3600.0)
}

/// Parses one value; the error message carries no line information.
pub fn parse_value(s: &str, format: TimeFormat) -> std::result::Result<TimestampRecord, String> {
    let t = s.trim();
    let hours = match format {
        TimeFormat::Hhmm => Some(parse_clock(t, false)?),
        TimeFormat::Hhmmss => Some(parse_clock(t, true)?),
        TimeFormat::Hours => Some(check_hours(
            t.parse::<f64>()
                .map_err(|_| format!("'{t}' is not a number"))?,
        )?),
        TimeFormat::Radians => None,
    };
    let angle = match hours {
        Some(h) => Angle::from_hours(h),
        None => {
            let v: f64 = t.parse().map_err(|_| format!("'{t}' is not a number"))?;
            if !v.is_finite() {
                return Err(format!("'{t}' is not finite"));
            }
            Angle::new(v)
        }
    };
    Ok(TimestampRecord {
        raw: s.to_string(),
        hours,
        angle,
    })
}

/// Parses text with one value per line; blank lines and `#` comments are skipped.
pub fn parse_lines(text: &str, format: TimeFormat) -> Result<Vec<TimestampRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        out.push(
            parse_value(content, format).map_err(|message| Error::Parse {
                line: i + 1,
                message,
            })?,
        );
    }
    Ok(out)
}

pub fn ingest(path: &Path, format: TimeFormat) -> Result<Vec<Angle>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let angles: Vec<Angle> = parse_lines(&text, format)?
        .into_iter()
        .map(|r| r.angle)
        .collect();
    if angles.is_empty() {
        return Err(Error::EmptySample);
    }
    log::info!("read {} observations from {}", angles.len(), path.display());
    Ok(angles)
}

pub fn format_value(a: Angle, format: TimeFormat) -> String {
    match format {
        TimeFormat::Hhmm => a.to_clock(),
        TimeFormat::Hhmmss => a.to_clock_seconds(),
        TimeFormat::Hours => format!("{:.16e}", a.to_hours()),
        TimeFormat::Radians => format!("{:.16e}", a.radians()),
    }
}

pub fn write_angles<W: Write>(
    angles: &[Angle],
    format: TimeFormat,
    mut out: W,
) -> std::io::Result<()> {
    for a in angles {
        writeln!(out, "{}", format_value(*a, format))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn clock_examples() {
        let a = parse_value("07:28", TimeFormat::Hhmm).unwrap().angle;
        assert!((a.radians() - TAU * (7.0 + 28.0 / 60.0) / 24.0).abs() < 1e-15);
        assert!((a.radians() - 1.9548).abs() < 1e-4);
        assert!(
            (parse_value("12:00", TimeFormat::Hhmm)
                .unwrap()
                .angle
                .radians()
                - PI)
                .abs()
                < 1e-15
        );
        assert_eq!(
            parse_value("00:00", TimeFormat::Hhmm)
                .unwrap()
                .angle
                .radians(),
            0.0
        );
        let s = parse_value("06:00:36", TimeFormat::Hhmmss).unwrap();
        assert!((s.hours.unwrap() - 6.01).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_and_garbage() {
        for (s, f) in [
            ("24:00", TimeFormat::Hhmm),
            ("-1", TimeFormat::Hours),
            ("24", TimeFormat::Hours),
            ("10:60", TimeFormat::Hhmm),
            ("10:00", TimeFormat::Hhmmss),
            ("ab:cd", TimeFormat::Hhmm),
            ("nan", TimeFormat::Radians),
        ] {
            assert!(parse_value(s, f).is_err(), "{s}");
        }
    }

    #[test]
    fn line_numbers_and_comments() {
        let text = "# header\n07:00\n\n08:15 # note\nbad\n";
        match parse_lines(text, TimeFormat::Hhmm) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        let ok = parse_lines("# header\n07:00\n\n08:15 # note\n", TimeFormat::Hhmm).unwrap();
        assert_eq!(ok.len(), 2);
    }

    #[test]
    fn radians_wrap() {
        let r = parse_value("7.0", TimeFormat::Radians).unwrap();
        assert!((r.angle.radians() - (7.0 - TAU)).abs() < 1e-15);
    }

    #[test]
    fn format_names() {
        for f in [
            TimeFormat::Hhmm,
            TimeFormat::Hhmmss,
            TimeFormat::Hours,
            TimeFormat::Radians,
        ] {
            assert_eq!(f.to_string().parse::<TimeFormat>().unwrap(), f);
        }
        assert!("minutes".parse::<TimeFormat>().is_err());
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(x in 0.0..TAU) {
            let a = Angle::new(x);
            let back = parse_value(&format_value(a, TimeFormat::Radians), TimeFormat::Radians).unwrap().angle;
            prop_assert_eq!(back, a);
            let h = parse_value(&format_value(a, TimeFormat::Hours), TimeFormat::Hours).unwrap().angle;
            prop_assert!(h.signed_diff(a).abs() < 1e-14);
            // clock strings are stable under a second pass
            for f in [TimeFormat::Hhmm, TimeFormat::Hhmmss] {
                let once = format_value(a, f);
                if let Ok(r) = parse_value(&once, f) {
                    prop_assert_eq!(format_value(r.angle, f), once);
                }
            }
        }
    }
}
