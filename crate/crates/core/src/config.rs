//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::claims::ClaimSpec;
use crate::error::{Error, Result};
use crate::estimates::NormConfig;
use crate::exponent::ExponentField;
use crate::grid::{DomainSpec, Grid};
use crate::measure::{MeasureData, Mollifier};
use crate::operator::{AssemblyOptions, CoefficientSpec, KernelSpec};
use crate::singular::{FixedPointOptions, DEFAULT_PROBES};

pub const SCHEMA_VERSION: u32 = 1;

fn default_probes() -> Vec<f64> {
    DEFAULT_PROBES.to_vec()
}

fn default_gap() -> f64 {
    1e-3
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub domain: DomainSpec,
    /// Grid spacing for `solve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Grid spacings for `sweep`, coarsest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h_list: Vec<f64>,
    /// Local part; omitted for a purely nonlocal operator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<CoefficientSpec>,
    /// Nonlocal part; omitted for a purely local operator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub assembly: AssemblyOptions,
    pub delta: ExponentField,
    /// Width of the boundary strip for `delta_*`; a quarter of the inradius
    /// when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_eps: Option<f64>,
    /// Measure in the singular term.
    #[serde(default)]
    pub nu: MeasureData,
    /// Source measure.
    #[serde(default)]
    pub mu: MeasureData,
    #[serde(default)]
    pub mollifier: Mollifier,
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub fixed_point: FixedPointOptions,
    #[serde(default)]
    pub norms: NormConfig,
    #[serde(default)]
    pub claims: Vec<ClaimSpec>,
    #[serde(default = "default_probes")]
    pub probes: Vec<f64>,
    #[serde(default = "default_gap")]
    pub gap_threshold: f64,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parse and validate. Syntax and schema errors carry line and column.
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        self.domain.validate()?;
        if self.h.is_none() && self.h_list.is_empty() {
            return Err(Error::Config("either `h` or `h_list` is required".into()));
        }
        for h in self.h.iter().chain(&self.h_list) {
            if !(*h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("grid spacing {h} must be positive")));
            }
        }
        if self.h_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("`h_list` must be strictly decreasing".into()));
        }
        if self.coefficient.is_none() && self.kernel.is_none() {
            return Err(Error::Config("set `coefficient`, `kernel`, or both".into()));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("`n_list` must be nonempty, positive and strictly increasing".into()));
        }
        if let Some(e) = self.strip_eps {
            if !(e > 0.0) {
                return Err(Error::Config(format!("strip_eps {e} must be positive")));
            }
        }
        if self.probes.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
            return Err(Error::Config("probe scales must lie in (0, 1)".into()));
        }
        if self.mu.h_part.is_some() || self.mu.div_part.is_some() {
            return Err(Error::Config("`mu` takes only a density and atoms".into()));
        }
        self.fixed_point.validate().map_err(|e| Error::Config(format!("fixed_point: {e}")))?;
        for c in &self.claims {
            c.validate()?;
        }
        Ok(())
    }

    /// Spacing used by `solve`: `h`, or the finest entry of `h_list`.
    pub fn solve_h(&self) -> f64 {
        self.h.unwrap_or_else(|| *self.h_list.last().expect("validated"))
    }

    /// Spacings used by `sweep`: `h_list`, or `h` alone.
    pub fn sweep_hs(&self) -> Vec<f64> {
        if self.h_list.is_empty() {
            vec![self.solve_h()]
        } else {
            self.h_list.clone()
        }
    }

    pub fn strip_eps(&self) -> f64 {
        self.strip_eps.unwrap_or(self.domain.inradius() / 4.0)
    }

    /// Configuration flags that the existence theory does not cover.
    pub fn flags(&self, grid: &Grid) -> Vec<String> {
        let mut out = Vec::new();
        if self.nu.is_zero() {
            out.push("nu is zero: the barrier vanishes and gives no interior positivity".to_string());
        }
        if !self.nu.atoms.is_empty() {
            out.push("nu carries atoms; the singular term expects an absolutely continuous measure".to_string());
        }
        if grid.dim() == 1 {
            out.push("one-dimensional domain: the estimates are stated for N >= 2".to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "domain": {"shape": "rectangle", "x": [0, 1], "y": [0, 1]},
        "h": 0.125,
        "coefficient": {"preset": "identity"},
        "kernel": {"preset": "fractional", "s": 0.5},
        "delta": {"delta": 1.0},
        "nu": {"density": 1.0},
        "n_list": [1, 2, 4]
    }"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.solve_h(), 0.125);
        assert_eq!(cfg.probes, DEFAULT_PROBES.to_vec());
        assert!(cfg.claims.is_empty());
        let again: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = MINIMAL.replace("\"h\": 0.125", "\"hh\": 0.125");
        let msg = ExperimentConfig::from_json(&bad).unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
        let broken = MINIMAL.replace("\"n_list\": [1, 2, 4]", "\"n_list\": [1, 2, 4");
        assert!(ExperimentConfig::from_json(&broken).unwrap_err().to_string().contains("line"));
    }

    #[test]
    fn semantic_checks() {
        let cases = [
            MINIMAL.replace("\"version\": 1", "\"version\": 2"),
            MINIMAL.replace("[1, 2, 4]", "[2, 1]"),
            MINIMAL.replace("\"h\": 0.125", "\"h_list\": [0.1, 0.2]"),
        ];
        for c in cases {
            assert!(ExperimentConfig::from_json(&c).is_err(), "{c}");
        }
    }
}
