//! Kernels `K(x, y) = a(x) a(y) |x - y|^(-N-2s)` with a separable modulation
//! `a = sqrt(m)` and `m` bounded between `1/lambda` and `lambda`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::grid::Grid;

const PAIR_SAMPLES: usize = 256;
const SAMPLING_SEED: u64 = 0x6b65_726e;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelPreset {
    /// Pure radial kernel `|x - y|^(-N-2s)`.
    Fractional,
    /// Radial kernel times `sqrt(m(x) m(y))`.
    Perturbed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub preset: KernelPreset,
    pub s: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<ScalarField>,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn fractional(s: f64) -> Self {
        KernelSpec {
            preset: KernelPreset::Fractional,
            s,
            lambda: 1.0,
            modulation: None,
        }
    }

    pub fn perturbed(s: f64, lambda: f64, modulation: ScalarField) -> Self {
        KernelSpec {
            preset: KernelPreset::Perturbed,
            s,
            lambda,
            modulation: Some(modulation),
        }
    }

    /// True when the modulation is constant, so the exterior tail has a
    /// closed angular form.
    pub fn is_radial(&self) -> bool {
        match &self.modulation {
            None => true,
            Some(m) => m.as_constant().is_some(),
        }
    }

    /// Square root of the modulation at `p`.
    pub fn weight(&self, p: [f64; 2]) -> f64 {
        match &self.modulation {
            None => 1.0,
            Some(m) => m.eval(p).sqrt(),
        }
    }

    pub fn eval(&self, x: [f64; 2], y: [f64; 2], dim: usize) -> f64 {
        let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        self.weight(x) * self.weight(y) * r.powf(-(dim as f64) - 2.0 * self.s)
    }

    fn validate_shape(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Kernel(format!("order s = {} must lie in (0, 1)", self.s)));
        }
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return Err(Error::Kernel(format!("lambda = {} must be at least 1", self.lambda)));
        }
        match (self.preset, &self.modulation) {
            (KernelPreset::Fractional, Some(_)) => Err(Error::Kernel("fractional preset takes no modulation".into())),
            (KernelPreset::Perturbed, None) => Err(Error::Kernel("perturbed preset needs a modulation".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pairs: usize,
}

/// Check the two-sided bound and exact symmetry: the modulation at every
/// lattice node, and the kernel on random node pairs.
pub fn check_kernel(grid: &Grid, kernel: &KernelSpec) -> Result<KernelReport> {
    kernel.validate_shape()?;
    let lam = kernel.lambda;
    let (lo, hi) = (1.0 / lam * (1.0 - 1e-12), lam * (1.0 + 1e-12));
    let dim = grid.dim();
    if let Some(m) = &kernel.modulation {
        for &p in grid.points() {
            let v = m.eval(p);
            if !(v >= lo && v <= hi) {
                return Err(Error::Kernel(format!(
                    "modulation {v} at ({}, {}) is outside [1/lambda, lambda] = [{}, {lam}]",
                    p[0],
                    p[1],
                    1.0 / lam
                )));
            }
        }
    }
    let pts = grid.points();
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLING_SEED);
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut pairs = 0;
    for _ in 0..PAIR_SAMPLES {
        let i = rng.gen_range(0..pts.len());
        let j = rng.gen_range(0..pts.len());
        if i == j {
            continue;
        }
        let (x, y) = (pts[i], pts[j]);
        let kxy = kernel.eval(x, y, dim);
        let kyx = kernel.eval(y, x, dim);
        if kxy != kyx {
            return Err(Error::Kernel(format!("kernel is not symmetric at {x:?}, {y:?}")));
        }
        let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        let ratio = kxy / r.powf(-(dim as f64) - 2.0 * kernel.s);
        if !(ratio >= lo && ratio <= hi) {
            return Err(Error::Kernel(format!("kernel ratio {ratio} outside the bound at {x:?}, {y:?}")));
        }
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        pairs += 1;
    }
    Ok(KernelReport {
        min_ratio,
        max_ratio,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;

    fn grid() -> Grid {
        Grid::build(
            DomainSpec::Disc {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn accepts_valid_kernels() {
        let g = grid();
        let r = check_kernel(&g, &KernelSpec::fractional(0.5)).unwrap();
        assert_eq!((r.min_ratio, r.max_ratio), (1.0, 1.0));
        let k = KernelSpec::perturbed(0.3, 2.0, ScalarField::parse("1 + 0.5*sin(3*x)").unwrap());
        let r = check_kernel(&g, &k).unwrap();
        assert!(r.min_ratio >= 0.5 && r.max_ratio <= 2.0);
        assert!(!k.is_radial());
    }

    #[test]
    fn rejects_bad_kernels() {
        let g = grid();
        assert!(check_kernel(&g, &KernelSpec::fractional(1.0)).is_err());
        assert!(check_kernel(&g, &KernelSpec::fractional(0.0)).is_err());
        let k = KernelSpec::perturbed(0.5, 1.5, ScalarField::parse("1 + x").unwrap());
        assert!(matches!(check_kernel(&g, &k), Err(Error::Kernel(_))));
        let mut k = KernelSpec::fractional(0.5);
        k.lambda = 0.5;
        assert!(check_kernel(&g, &k).is_err());
    }
}
