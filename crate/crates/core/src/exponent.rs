//! The singular exponent field, its boundary-strip majorant and the table of
//! predicted integrability exponents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentField {
    pub delta: ScalarField,
    /// Lipschitz bound on interior subsets, asserted by the user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl ExponentField {
    pub fn constant(delta: f64) -> Result<ExponentField> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("exponent {delta} must be positive")));
        }
        Ok(ExponentField {
            delta: ScalarField::Constant(delta),
            lipschitz: None,
        })
    }

    pub fn formula(source: &str) -> Result<ExponentField> {
        Ok(ExponentField {
            delta: ScalarField::parse(source)?,
            lipschitz: None,
        })
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.delta.as_constant()
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.delta.eval(p)
    }

    /// Nodal values at the degrees of freedom; every value must be positive.
    pub fn nodal(&self, grid: &Grid) -> Result<Vec<f64>> {
        let values = grid.sample(|p| self.eval(p));
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            let p = grid.dof_point(k);
            return Err(Error::InvalidParameter(format!(
                "exponent {v} at node ({}, {}) is not strictly positive",
                p[0], p[1]
            )));
        }
        Ok(values)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PCondition {
    pub eps: f64,
    pub delta_star: f64,
    pub strip_nodes: usize,
    /// Largest exponent value found in the strip, before the max with 1.
    pub strip_max: f64,
}

/// `delta_star = max(1, max of the exponent over interior nodes within
/// distance eps of the boundary)`.
pub fn compute_p_condition(field: &ExponentField, grid: &Grid, eps: f64) -> Result<PCondition> {
    let strip = grid.boundary_strip(eps)?;
    if strip.count == 0 {
        return Err(Error::EmptyStrip { eps });
    }
    let values = field.nodal(grid)?;
    let strip_max = values
        .iter()
        .zip(&strip.mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PCondition {
        eps,
        delta_star: strip_max.max(1.0),
        strip_nodes: strip.count,
        strip_max,
    })
}

/// Which regularity table applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Constant exponent, at least one.
    ConstantAtLeastOne,
    /// Constant exponent in (0, 1).
    ConstantBelowOne,
    /// Variable exponent bounded near the boundary by `delta_star >= 1`.
    Variable,
}

impl Regime {
    fn id(self) -> &'static str {
        match self {
            Regime::ConstantAtLeastOne => "T4",
            Regime::ConstantBelowOne => "T6",
            Regime::Variable => "T7",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Bounded,
    Lebesgue(f64),
    NoPrediction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    /// Case identifier such as `"T4.ii"`, or `None` when no case applies.
    pub case: Option<String>,
    pub target: Target,
    pub label: String,
    pub n_dim: usize,
    pub delta: f64,
    pub r: f64,
    pub m: f64,
    /// Lower bound on `r` required by cases (iii) and (iv).
    pub r_lower: f64,
}

impl ExponentReport {
    pub fn exponent(&self) -> Option<f64> {
        match self.target {
            Target::Bounded => Some(f64::INFINITY),
            Target::Lebesgue(q) => Some(q),
            Target::NoPrediction => None,
        }
    }
}

/// Critical Sobolev exponent `2N/(N-2)`; infinite for `N <= 2`.
pub fn sobolev_conjugate(n_dim: usize) -> f64 {
    if n_dim <= 2 {
        f64::INFINITY
    } else {
        let n = n_dim as f64;
        2.0 * n / (n - 2.0)
    }
}

/// Hölder conjugate `p/(p-1)`, with `inf' = 1`.
pub fn holder_conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `Nm/(N-2m)` for `m < N/2`.
pub fn double_star(n_dim: usize, m: f64) -> f64 {
    let n = n_dim as f64;
    n * m / (n - 2.0 * m)
}

/// Lower bound on `r` for the cases with `r < N/2`.
pub fn r_lower_bound(regime: Regime, n_dim: usize, delta: f64) -> f64 {
    let n = n_dim as f64;
    match regime {
        Regime::ConstantAtLeastOne => 1.0,
        Regime::ConstantBelowOne => holder_conjugate(sobolev_conjugate(n_dim) / (1.0 - delta)),
        Regime::Variable => n * (delta + 1.0) / (n + 2.0 * delta),
    }
}

/// Predicted integrability of the solution from the integrability `r` of
/// the absolutely continuous datum and `m` of the source term.
pub fn regularity_exponents(regime: Regime, n_dim: usize, delta: f64, r: f64, m: f64) -> ExponentReport {
    let n = n_dim as f64;
    let half = n / 2.0;
    let r_lower = r_lower_bound(regime, n_dim, delta);
    let regime_ok = match regime {
        Regime::ConstantAtLeastOne | Regime::Variable => delta >= 1.0,
        Regime::ConstantBelowOne => delta > 0.0 && delta < 1.0,
    };
    let params_ok = n_dim >= 1 && r >= 1.0 && m >= 1.0 && r.is_finite() && m.is_finite();
    let report = |case: Option<&str>, target: Target| {
        let label = match (&target, case) {
            (Target::Bounded, Some(c)) => format!("{c}: L^inf"),
            (Target::Lebesgue(q), Some(c)) => format!("{c}: L^{}", (q * 1e6).round() / 1e6),
            _ => "no prediction".to_string(),
        };
        ExponentReport {
            case: case.map(|c| c.to_string()),
            target,
            label,
            n_dim,
            delta,
            r,
            m,
            r_lower,
        }
    };
    if !regime_ok || !params_ok {
        return report(None, Target::NoPrediction);
    }
    let id = regime.id();
    let r_high = r > half;
    let r_mid = r_lower <= r && r < half;
    let m_high = m > half;
    let m_mid = 1.0 < m && m < half;
    let from_r = || match regime {
        Regime::Variable => double_star(n_dim, r),
        _ => n * r * (delta + 1.0) / (n - 2.0 * r),
    };
    let (case, target) = if r_high && m_high {
        ("i", Target::Bounded)
    } else if r_high && m_mid {
        ("ii", Target::Lebesgue(double_star(n_dim, m)))
    } else if r_mid && m_high {
        ("iii", Target::Lebesgue(from_r()))
    } else if r_mid && m_mid {
        ("iv", Target::Lebesgue(double_star(n_dim, m).min(from_r())))
    } else {
        return report(None, Target::NoPrediction);
    };
    report(Some(&format!("{id}.{case}")), target)
}

/// Sobolev exponent of the existence result for a constant exponent, and
/// the Lebesgue exponent required of the source term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExistenceExponents {
    pub q: f64,
    pub source_exponent: f64,
    /// True when `q` is attained up to the boundary, false when only the
    /// power `u^((delta+1)/2)` has zero trace.
    pub global: bool,
}

pub fn existence_exponents(n_dim: usize, delta: f64) -> Result<ExistenceExponents> {
    if !(delta > 0.0 && delta.is_finite()) || n_dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "existence exponent needs delta > 0 and N >= 1, got delta = {delta}, N = {n_dim}"
        )));
    }
    let n = n_dim as f64;
    let q = if delta < 1.0 {
        n * (delta + 1.0) / (n + delta - 1.0)
    } else {
        2.0
    };
    Ok(ExistenceExponents {
        q,
        source_exponent: n * (delta + 1.0) / (n + 2.0 * delta),
        global: delta <= 1.0,
    })
}
