//! Physical constants and unit-suffixed quantity parsing.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Superconducting flux quantum h/2e in webers.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

pub const GHZ: f64 = 1e9;
pub const MHZ: f64 = 1e6;
pub const NS: f64 = 1e-9;
pub const US: f64 = 1e-6;

#[inline]
pub fn angular(f: f64) -> f64 {
    2.0 * PI * f
}

#[inline]
pub fn ordinary(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Total capacitance of a transmon whose charging energy E_C/h is `ec` (Hz).
pub fn capacitance_from_charging_energy(ec: f64) -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * PLANCK * ec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Time,
    Capacitance,
    Inductance,
    Current,
    InductancePerLength,
    CapacitancePerLength,
    Resistance,
    Angle,
    Dimensionless,
}

impl Dimension {
    fn symbols(self) -> &'static [&'static str] {
        match self {
            Dimension::Frequency => &["Hz"],
            Dimension::Time => &["s"],
            Dimension::Capacitance => &["F"],
            Dimension::Inductance => &["H"],
            Dimension::Current => &["A"],
            Dimension::InductancePerLength => &["H/m"],
            Dimension::CapacitancePerLength => &["F/m"],
            Dimension::Resistance => &["Ohm", "ohm", "Ω"],
            Dimension::Angle => &["rad"],
            Dimension::Dimensionless => &[""],
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.symbols()[0];
        if s.is_empty() {
            write!(f, "dimensionless")
        } else {
            write!(f, "{s}")
        }
    }
}

/// A config value: either a bare number in base units or a string such as
/// `"4.83 GHz"`, `"35.6 us"` or `"464 nH/m"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

fn prefix_scale(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "T" => 1e12,
        "G" => 1e9,
        "M" => 1e6,
        "k" => 1e3,
        "m" => 1e-3,
        "u" | "µ" | "μ" => 1e-6,
        "n" => 1e-9,
        "p" => 1e-12,
        "f" => 1e-15,
        "a" => 1e-18,
        _ => return None,
    })
}

impl Quantity {
    /// Converts to base SI units, checking the unit symbol against `dim`.
    pub fn to_base(&self, dim: Dimension) -> Result<f64, String> {
        match self {
            Quantity::Number(v) => Ok(*v),
            Quantity::Text(s) => parse_with_unit(s, dim),
        }
    }
}

pub fn parse_with_unit(text: &str, dim: Dimension) -> Result<f64, String> {
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && t[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse number in {text:?}"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(value);
    }
    for sym in dim.symbols() {
        if let Some(prefix) = unit.strip_suffix(sym) {
            if sym.is_empty() && !prefix.is_empty() {
                continue;
            }
            if let Some(scale) = prefix_scale(prefix) {
                return Ok(value * scale);
            }
        }
    }
    Err(format!("unit {unit:?} in {text:?} is not a {dim} unit"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_prefixed_units() {
        let f = parse_with_unit("4.83 GHz", Dimension::Frequency).unwrap();
        assert!((f - 4.83e9).abs() < 1e-3);
        let t = parse_with_unit("35.6us", Dimension::Time).unwrap();
        assert!((t - 35.6e-6).abs() < 1e-18);
        let l = parse_with_unit("464 nH/m", Dimension::InductancePerLength).unwrap();
        assert!((l - 464e-9).abs() < 1e-20);
        let c = parse_with_unit("15.7 fF", Dimension::Capacitance).unwrap();
        assert!((c - 15.7e-15).abs() < 1e-27);
        assert_eq!(parse_with_unit("50 Ohm", Dimension::Resistance).unwrap(), 50.0);
        assert_eq!(parse_with_unit("1e-3", Dimension::Dimensionless).unwrap(), 1e-3);
        assert_eq!(parse_with_unit("-2.5e6", Dimension::Frequency).unwrap(), -2.5e6);
        assert_eq!(parse_with_unit("-2.5e2 MHz", Dimension::Frequency).unwrap(), -2.5e8);
    }

    #[test]
    fn rejects_wrong_dimension() {
        assert!(parse_with_unit("4 GHz", Dimension::Time).is_err());
        assert!(parse_with_unit("4 Xs", Dimension::Time).is_err());
        assert!(parse_with_unit("abc", Dimension::Time).is_err());
    }

    #[test]
    fn flux_quantum_value() {
        assert!((FLUX_QUANTUM - 2.067_833_848e-15).abs() < 1e-23);
    }
}
