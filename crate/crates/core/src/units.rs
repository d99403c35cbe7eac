//! Frequency units. Everything inside the crate is angular frequency in
//! rad/s; configs and reports speak GHz/MHz meaning `f` in `ω = 2π f`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn ghz(f: f64) -> f64 {
    TAU * f * 1e9
}

pub fn mhz(f: f64) -> f64 {
    TAU * f * 1e6
}

pub fn to_ghz(omega: f64) -> f64 {
    omega / (TAU * 1e9)
}

pub fn to_mhz(omega: f64) -> f64 {
    omega / (TAU * 1e6)
}

/// A frequency as written in a config file: `{"GHz": 6.8}`, `{"MHz": 10}`
/// or `{"rad_per_s": 4.27e10}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Frequency {
    #[serde(rename = "GHz")]
    GHz(f64),
    #[serde(rename = "MHz")]
    MHz(f64),
    #[serde(rename = "rad_per_s")]
    RadPerSec(f64),
}

impl Frequency {
    pub fn rad_per_sec(self) -> f64 {
        match self {
            Frequency::GHz(f) => ghz(f),
            Frequency::MHz(f) => mhz(f),
            Frequency::RadPerSec(w) => w,
        }
    }
}

impl From<Frequency> for f64 {
    fn from(f: Frequency) -> f64 {
        f.rad_per_sec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    GHz,
    MHz,
    RadPerSec,
}

impl Unit {
    pub fn to_rad_per_sec(self, value: f64) -> f64 {
        match self {
            Unit::GHz => ghz(value),
            Unit::MHz => mhz(value),
            Unit::RadPerSec => value,
        }
    }
}

/// Parses `start:stop:count[unit]`, e.g. `6.0:7.5:151` or `1:40:40MHz`,
/// into an ascending list of angular frequencies. A bare number is a
/// one-point grid; `start:stop:count:log` spaces the points
/// geometrically.
pub fn parse_grid(text: &str, default_unit: Unit) -> Result<Vec<f64>> {
    let text = text.trim();
    let (body, unit) = if let Some(b) = text.strip_suffix("GHz") {
        (b, Unit::GHz)
    } else if let Some(b) = text.strip_suffix("MHz") {
        (b, Unit::MHz)
    } else if let Some(b) = text.strip_suffix("rad/s") {
        (b, Unit::RadPerSec)
    } else {
        (text, default_unit)
    };
    let bad = || Error::Domain(format!("malformed grid `{text}`, expected start:stop:count[:log][GHz|MHz]"));
    let mut parts: Vec<&str> = body.split(':').collect();
    let log = parts.len() == 4 && parts[3].trim() == "log";
    if log {
        parts.pop();
    }
    let values = match parts.as_slice() {
        [single] => vec![single.trim().parse::<f64>().map_err(|_| bad())?],
        [start, stop, count] => {
            let start: f64 = start.trim().parse().map_err(|_| bad())?;
            let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
            let count: usize = count.trim().parse().map_err(|_| bad())?;
            if count == 0 || stop < start || (log && !(start > 0.0)) {
                return Err(bad());
            }
            if count == 1 {
                vec![start]
            } else if log {
                let ratio = (stop / start).ln();
                (0..count)
                    .map(|i| start * (ratio * i as f64 / (count - 1) as f64).exp())
                    .collect()
            } else {
                (0..count)
                    .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                    .collect()
            }
        }
        _ => return Err(bad()),
    };
    Ok(values.into_iter().map(|v| unit.to_rad_per_sec(v)).collect())
}
