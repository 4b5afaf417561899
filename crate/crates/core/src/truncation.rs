//! Truncation operators applied nodewise to grid functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A truncation height `k > 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Level(f64);

impl Level {
    pub fn new(k: f64) -> Result<Level> {
        if k > 0.0 && !k.is_nan() {
            Ok(Level(k))
        } else {
            Err(Error::InvalidParameter(format!("truncation level {k} must be positive")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Level {
    type Error = Error;
    fn try_from(k: f64) -> Result<Level> {
        Level::new(k)
    }
}

impl From<Level> for f64 {
    fn from(k: Level) -> f64 {
        k.0
    }
}

/// Clamp `s` to `[-k, k]`.
pub fn truncate(k: Level, s: f64) -> f64 {
    s.min(k.0).max(-k.0)
}

/// The part of `s` beyond the band `[-k, k]`, so that
/// `truncate(k, s) + excess(k, s) == s` up to one rounding.
pub fn excess(k: Level, s: f64) -> f64 {
    if s > k.0 {
        s - k.0
    } else if s < -k.0 {
        s + k.0
    } else {
        0.0
    }
}

/// `truncate(k, s)^gamma` for nonnegative `s`.
pub fn power_truncate(k: Level, gamma: f64, s: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("power {gamma} must be positive")));
    }
    if s < 0.0 || s.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "power truncation needs a nonnegative argument, got {s}"
        )));
    }
    Ok(truncate(k, s).powf(gamma))
}

pub fn truncate_field(k: Level, u: &[f64]) -> Vec<f64> {
    u.iter().map(|&s| truncate(k, s)).collect()
}

pub fn excess_field(k: Level, u: &[f64]) -> Vec<f64> {
    u.iter().map(|&s| excess(k, s)).collect()
}

pub fn power_truncate_field(k: Level, gamma: f64, u: &[f64]) -> Result<Vec<f64>> {
    u.iter().map(|&s| power_truncate(k, gamma, s)).collect()
}
