//! Quantities with explicit unit strings, converted to SI once at load time.

use crate::error::{Error, Result};
use crate::model::TWO_PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Rabi frequencies, detunings, coherence decays. Cyclic units (`MHz`)
    /// mean `Ω/2π`; `rad/s` is taken as is.
    AngularFrequency,
    /// Plain frequencies and rates in s⁻¹ (`Hz`, `1/s`); never scaled by 2π.
    Rate,
    Time,
    Length,
    Velocity,
}

impl Dimension {
    pub fn canonical_unit(self) -> &'static str {
        match self {
            Dimension::AngularFrequency => "rad/s",
            Dimension::Rate => "1/s",
            Dimension::Time => "s",
            Dimension::Length => "m",
            Dimension::Velocity => "m/s",
        }
    }
}

fn prefix(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        _ => return None,
    })
}

fn time_unit(u: &str) -> Option<f64> {
    Some(match u {
        "s" => 1.0,
        "ms" => 1e-3,
        "us" | "μs" | "µs" => 1e-6,
        "ns" => 1e-9,
        "ps" => 1e-12,
        _ => return None,
    })
}

/// Scale of `unit` into SI for `dim`. `angular` marks cyclic frequency
/// units as already angular.
fn unit_scale(unit: &str, dim: Dimension, angular: bool) -> Option<f64> {
    match dim {
        Dimension::AngularFrequency => {
            if let Some(p) = unit.strip_suffix("rad/s") {
                return prefix(p);
            }
            let p = unit.strip_suffix("Hz")?;
            prefix(p).map(|s| if angular { s } else { TWO_PI * s })
        }
        Dimension::Rate => {
            if let Some(p) = unit.strip_suffix("Hz") {
                return prefix(p);
            }
            let t = unit.strip_prefix("1/").or_else(|| unit.strip_prefix('/'))?;
            time_unit(t).map(|s| 1.0 / s)
        }
        Dimension::Time => time_unit(unit),
        Dimension::Length => Some(match unit {
            "m" => 1.0,
            "cm" => 1e-2,
            "mm" => 1e-3,
            "um" | "μm" | "µm" => 1e-6,
            _ => return None,
        }),
        Dimension::Velocity => (unit == "m/s").then_some(1.0),
    }
}

/// Parses `"<number> <unit>"` into SI.
pub fn parse_quantity(field: &str, text: &str, dim: Dimension, angular: bool) -> Result<f64> {
    let text = text.trim();
    let split = text
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let (num, unit) = (num.trim(), unit.trim());
    let value: f64 = num.parse().map_err(|_| Error::Parse {
        line: None,
        message: format!("{field}: cannot read a number from {text:?}"),
    })?;
    if unit.is_empty() {
        return Err(Error::MissingUnit {
            field: field.to_string(),
            value: text.to_string(),
        });
    }
    let scale = unit_scale(unit, dim, angular).ok_or_else(|| Error::UnknownUnit {
        field: field.to_string(),
        unit: unit.to_string(),
    })?;
    Ok(value * scale)
}

/// Canonical text for an SI value, exact under [`parse_quantity`].
pub fn format_quantity(value: f64, dim: Dimension) -> String {
    format!("{value:?} {}", dim.canonical_unit())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn megahertz_is_cyclic() {
        let w = parse_quantity("rabi", "25.1 MHz", Dimension::AngularFrequency, false).unwrap();
        assert_eq!(w, TWO_PI * 25.1e6);
        let a = parse_quantity("rabi", "25.1 MHz", Dimension::AngularFrequency, true).unwrap();
        assert_eq!(a, 25.1e6);
        assert_eq!(
            parse_quantity("x", "3 rad/s", Dimension::AngularFrequency, false).unwrap(),
            3.0
        );
    }

    #[test]
    fn times_lengths_rates() {
        assert_eq!(
            parse_quantity("t", "1.27 us", Dimension::Time, false).unwrap(),
            1.27e-6
        );
        assert_eq!(
            parse_quantity("t", "53 μs", Dimension::Time, false).unwrap(),
            53e-6
        );
        assert_eq!(
            parse_quantity("t", "-2e-3 s", Dimension::Time, false).unwrap(),
            -2e-3
        );
        assert_eq!(
            parse_quantity("l", "3 mm", Dimension::Length, false).unwrap(),
            3e-3
        );
        assert_eq!(
            parse_quantity("r", "130 Hz", Dimension::Rate, false).unwrap(),
            130.0
        );
        assert_eq!(
            parse_quantity("r", "2 1/ms", Dimension::Rate, false).unwrap(),
            2000.0
        );
    }

    #[test]
    fn bare_and_unknown_units_are_rejected() {
        assert!(matches!(
            parse_quantity("fwhm", "15", Dimension::Time, false),
            Err(Error::MissingUnit { .. })
        ));
        assert!(matches!(
            parse_quantity("fwhm", "15 fortnights", Dimension::Time, false),
            Err(Error::UnknownUnit { .. })
        ));
        assert!(matches!(
            parse_quantity("fwhm", "15 MHz", Dimension::Time, false),
            Err(Error::UnknownUnit { .. })
        ));
    }

    #[test]
    fn canonical_text_round_trips() {
        for v in [TWO_PI * 12.55e6, 1.27e-6, 0.1 + 0.2, -3.0e-300] {
            let s = format_quantity(v, Dimension::Time);
            assert_eq!(parse_quantity("x", &s, Dimension::Time, false).unwrap(), v);
        }
    }
}
