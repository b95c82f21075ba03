//! Unit-suffixed quantities in configuration files.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub trait Dimension {
    const NAME: &'static str;
    /// Accepted suffixes with their factor to the canonical unit.
    const UNITS: &'static [(&'static str, f64)];
    const CANONICAL: &'static str;
}

macro_rules! dimension {
    ($name:ident, $label:literal, $canonical:literal, [$(($u:literal, $f:expr)),* $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name;
        impl Dimension for $name {
            const NAME: &'static str = $label;
            const UNITS: &'static [(&'static str, f64)] = &[$(($u, $f)),*];
            const CANONICAL: &'static str = $canonical;
        }
    };
}

dimension!(Time, "time", "s", [("ns", 1e-9), ("us", 1e-6), ("µs", 1e-6), ("ms", 1e-3), ("s", 1.0)]);
dimension!(Length, "length", "m", [("m", 1.0), ("km", 1e3)]);
dimension!(Rate, "rate", "/s", [("/s", 1.0), ("1/s", 1.0), ("Hz", 1.0)]);
dimension!(Speed, "speed", "m/s", [("m/s", 1.0), ("km/s", 1e3)]);
dimension!(Attenuation, "attenuation", "dB/km", [("dB/km", 1.0)]);

fn accepted<D: Dimension>() -> String {
    D::UNITS.iter().map(|(u, _)| *u).collect::<Vec<_>>().join(", ")
}

/// Parses `"<number> <unit>"` (the space is optional) into canonical units.
pub fn parse_quantity<D: Dimension>(text: &str) -> Result<f64> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && text[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let unit = unit.trim();
    if unit.is_empty() {
        return Err(Error::Config(format!(
            "{} '{text}' needs a unit suffix (accepted: {})",
            D::NAME,
            accepted::<D>()
        )));
    }
    let factor = D::UNITS
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown {} unit '{unit}' (accepted: {})",
                D::NAME,
                accepted::<D>()
            ))
        })?;
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot read a number from '{text}'")))?;
    if !value.is_finite() {
        return Err(Error::Config(format!("{} '{text}' is not finite", D::NAME)));
    }
    Ok(value * factor)
}

/// Canonical text form; reparses to the identical value.
pub fn format_quantity<D: Dimension>(value: f64) -> String {
    format!("{value:?} {}", D::CANONICAL)
}

/// A physical quantity held in canonical units.
pub struct Quantity<D>(pub f64, PhantomData<D>);

impl<D> Quantity<D> {
    pub fn new(value: f64) -> Self {
        Self(value, PhantomData)
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl<D> Clone for Quantity<D> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<D> Copy for Quantity<D> {}

impl<D> PartialEq for Quantity<D> {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl<D: Dimension> fmt::Debug for Quantity<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_quantity::<D>(self.0))
    }
}

impl<D: Dimension> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_quantity::<D>(self.0))
    }
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> std::result::Result<Self, De::Error> {
        struct V<D>(PhantomData<D>);
        impl<D: Dimension> Visitor<'_> for V<D> {
            type Value = Quantity<D>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a {} with a unit ({})", D::NAME, accepted::<D>())
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                parse_quantity::<D>(v)
                    .map(Quantity::new)
                    .map_err(|e| E::custom(e.to_string().trim_start_matches("configuration error: ").to_string()))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                Err(E::custom(format!(
                    "{} {v} needs a unit suffix (accepted: {})",
                    D::NAME,
                    accepted::<D>()
                )))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                self.visit_i64(v as i64)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                Err(E::custom(format!(
                    "{} {v} needs a unit suffix (accepted: {})",
                    D::NAME,
                    accepted::<D>()
                )))
            }
        }
        d.deserialize_any(V(PhantomData))
    }
}
