//! Finite-volume stiffness for `-div(A grad u)` with coefficients sampled at
//! cell faces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::grid::Grid;
use crate::par::{self, Parallelism};

const DIRECTIONS_PER_NODE: usize = 8;
const SAMPLING_SEED: u64 = 0x5eed_a11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientPreset {
    Identity,
    Scaled,
    Diagonal,
    Expr,
}

/// Symmetric coefficient matrix field with optional claimed bounds
/// `alpha |xi|^2 <= xi.A xi` and `|A| <= beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub preset: CoefficientPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a11: Option<ScalarField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a12: Option<ScalarField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a22: Option<ScalarField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
}

impl CoefficientSpec {
    pub fn identity() -> Self {
        CoefficientSpec {
            preset: CoefficientPreset::Identity,
            factor: None,
            a11: None,
            a12: None,
            a22: None,
            bounds: None,
        }
    }

    pub fn scaled(factor: f64) -> Self {
        CoefficientSpec {
            preset: CoefficientPreset::Scaled,
            factor: Some(factor),
            ..CoefficientSpec::identity()
        }
    }

    pub fn diagonal(a11: ScalarField, a22: ScalarField) -> Self {
        CoefficientSpec {
            preset: CoefficientPreset::Diagonal,
            a11: Some(a11),
            a22: Some(a22),
            ..CoefficientSpec::identity()
        }
    }

    pub fn full(a11: ScalarField, a12: ScalarField, a22: ScalarField) -> Self {
        CoefficientSpec {
            preset: CoefficientPreset::Expr,
            a11: Some(a11),
            a12: Some(a12),
            a22: Some(a22),
            ..CoefficientSpec::identity()
        }
    }

    fn validate_shape(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Coefficient(m.to_string()));
        match self.preset {
            CoefficientPreset::Identity => {
                if self.factor.is_some() || self.a11.is_some() || self.a12.is_some() || self.a22.is_some() {
                    return bad("identity preset takes no entries");
                }
            }
            CoefficientPreset::Scaled => match self.factor {
                Some(c) if c > 0.0 && c.is_finite() => {}
                _ => return bad("scaled preset needs a positive `factor`"),
            },
            CoefficientPreset::Diagonal => {
                if self.a11.is_none() || self.a22.is_none() || self.a12.is_some() {
                    return bad("diagonal preset needs `a11` and `a22` only");
                }
            }
            CoefficientPreset::Expr => {
                if self.a11.is_none() || self.a22.is_none() {
                    return bad("expr preset needs `a11` and `a22` (and optionally `a12`)");
                }
            }
        }
        if let Some([a, b]) = self.bounds {
            if !(a > 0.0 && a <= b) {
                return bad("bounds must satisfy 0 < alpha <= beta");
            }
        }
        Ok(())
    }

    pub fn has_cross_term(&self) -> bool {
        self.a12.as_ref().is_some_and(|f| f.as_constant() != Some(0.0))
    }

    /// Matrix entries `[a11, a12, a22]` at `p`.
    pub fn at(&self, p: [f64; 2]) -> [f64; 3] {
        match self.preset {
            CoefficientPreset::Identity => [1.0, 0.0, 1.0],
            CoefficientPreset::Scaled => {
                let c = self.factor.unwrap_or(1.0);
                [c, 0.0, c]
            }
            _ => {
                let e = |f: &Option<ScalarField>| f.as_ref().map_or(0.0, |f| f.eval(p));
                [e(&self.a11), e(&self.a12), e(&self.a22)]
            }
        }
    }

    fn entry(&self, p: [f64; 2], axis: usize) -> f64 {
        self.at(p)[if axis == 0 { 0 } else { 2 }]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    /// Smallest sampled `xi.A xi / |xi|^2`.
    pub alpha_observed: f64,
    /// Largest sampled spectral norm of `A`.
    pub beta_observed: f64,
    pub samples: usize,
}

/// Check the bounds at every degree of freedom with eight random
/// directions each, plus the exact spectral norm.
pub fn check_ellipticity(grid: &Grid, coef: &CoefficientSpec) -> Result<EllipticityReport> {
    coef.validate_shape()?;
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLING_SEED);
    let dim = grid.dim();
    let mut alpha = f64::INFINITY;
    let mut beta: f64 = 0.0;
    let mut samples = 0;
    for p in grid.dof_points() {
        let [a11, a12, a22] = coef.at(p);
        let (a12, a22) = if dim == 1 { (0.0, a11) } else { (a12, a22) };
        if ![a11, a12, a22].iter().all(|v| v.is_finite()) {
            return Err(Error::Coefficient(format!("non-finite entry at ({}, {})", p[0], p[1])));
        }
        let norm = if dim == 1 {
            a11.abs()
        } else {
            let m = 0.5 * (a11 + a22);
            let r = (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
            (m + r).abs().max((m - r).abs())
        };
        beta = beta.max(norm);
        for _ in 0..DIRECTIONS_PER_NODE {
            let xi = if dim == 1 {
                [if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0]
            } else {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                [t.cos(), t.sin()]
            };
            let q = a11 * xi[0] * xi[0] + 2.0 * a12 * xi[0] * xi[1] + a22 * xi[1] * xi[1];
            alpha = alpha.min(q / (xi[0] * xi[0] + xi[1] * xi[1]));
            samples += 1;
        }
    }
    if !(alpha > 0.0) {
        return Err(Error::Coefficient(format!("not elliptic: sampled xi.A xi/|xi|^2 reaches {alpha}")));
    }
    if let Some([a, b]) = coef.bounds {
        let slack = 1e-12;
        if alpha < a * (1.0 - slack) {
            return Err(Error::Coefficient(format!("sampled ellipticity {alpha} is below the claimed alpha = {a}")));
        }
        if beta > b * (1.0 + slack) {
            return Err(Error::Coefficient(format!("sampled norm {beta} exceeds the claimed beta = {b}")));
        }
    }
    Ok(EllipticityReport {
        alpha_observed: alpha,
        beta_observed: beta,
        samples,
    })
}

/// Sparse stiffness in compressed-row form over the degrees of freedom.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    pub ellipticity: EllipticityReport,
}

impl LocalOperator {
    pub fn assemble(grid: &Grid, coef: &CoefficientSpec, par: Parallelism) -> Result<LocalOperator> {
        let ellipticity = check_ellipticity(grid, coef)?;
        let h = grid.h();
        let h2 = h * h;
        let dim = grid.dim();
        let points = grid.points();
        let cross = dim == 2 && coef.has_cross_term();
        let rows: Vec<Vec<(usize, f64)>> = par::map_range(par, grid.dof(), |k| {
            let l = grid.dof_nodes()[k];
            let p = points[l];
            let mut diag = 0.0;
            let mut row = Vec::with_capacity(9);
            for axis in 0..dim {
                for step in [-1isize, 1] {
                    let q = grid.neighbor(l, axis, step).expect("interior nodes have lattice neighbors");
                    let pq = points[q];
                    let c = coef.entry([0.5 * (p[0] + pq[0]), 0.5 * (p[1] + pq[1])], axis) / h2;
                    diag += c;
                    if let Some(kq) = grid.dof_of(q) {
                        row.push((kq, -c));
                    }
                }
            }
            if cross {
                let a12 = |q: usize| coef.at(points[q])[1];
                for sx in [-1isize, 1] {
                    for sy in [-1isize, 1] {
                        let qx = grid.neighbor(l, 0, sx).expect("lattice neighbor");
                        let qy = grid.neighbor(l, 1, sy).expect("lattice neighbor");
                        let q = grid.neighbor(qx, 1, sy).expect("lattice neighbor");
                        if let Some(kq) = grid.dof_of(q) {
                            let s = (sx * sy) as f64;
                            row.push((kq, -s * (a12(qx) + a12(qy)) / (4.0 * h2)));
                        }
                    }
                }
            }
            row.push((k, diag));
            row.sort_by_key(|e| e.0);
            row
        });
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::with_capacity(rows.len());
        row_ptr.push(0);
        for (k, row) in rows.into_iter().enumerate() {
            for (c, v) in row {
                if c == k {
                    diag.push(v);
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(LocalOperator {
            row_ptr,
            cols,
            vals,
            diag,
            ellipticity,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[k]..self.row_ptr[k + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A x`.
    pub fn apply_into(&self, par: Parallelism, x: &[f64], y: &mut [f64]) {
        par::for_each_mut(par, y, |k, out| {
            *out = self.row(k).map(|(c, v)| v * x[c]).sum();
        });
    }

    /// `y += A x`.
    pub fn apply_add(&self, par: Parallelism, x: &[f64], y: &mut [f64]) {
        par::for_each_mut(par, y, |k, out| {
            *out += self.row(k).map(|(c, v)| v * x[c]).sum::<f64>();
        });
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use std::f64::consts::PI;

    fn unit_square(h: f64) -> Grid {
        Grid::build(
            DomainSpec::Rectangle {
                x: [0.0, 1.0],
                y: [0.0, 1.0],
            },
            h,
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_laplacian_stencil() {
        let h = 0.125;
        let g = Grid::build(DomainSpec::Interval { bounds: [0.0, 1.0] }, h).unwrap();
        let a = LocalOperator::assemble(&g, &CoefficientSpec::identity(), Parallelism::Sequential).unwrap();
        let k = 3;
        let h2 = h * h;
        assert_eq!(a.entry(k, k - 1), -1.0 / h2);
        assert_eq!(a.entry(k, k), 2.0 / h2);
        assert_eq!(a.entry(k, k + 1), -1.0 / h2);
        assert_eq!(a.nnz(), 3 * g.dof() - 2);
    }

    #[test]
    fn scaling_is_linear() {
        let g = unit_square(0.1);
        let a = LocalOperator::assemble(&g, &CoefficientSpec::identity(), Parallelism::Sequential).unwrap();
        let b = LocalOperator::assemble(&g, &CoefficientSpec::scaled(2.0), Parallelism::Sequential).unwrap();
        for k in 0..g.dof() {
            for ((c1, v1), (c2, v2)) in a.row(k).zip(b.row(k)) {
                assert_eq!(c1, c2);
                assert_eq!(2.0 * v1, v2);
            }
        }
    }

    #[test]
    fn manufactured_diagonal_coefficient_is_second_order() {
        let coef = CoefficientSpec::diagonal(ScalarField::Constant(1.0), ScalarField::Constant(4.0));
        let mut errors = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let g = unit_square(h);
            let a = LocalOperator::assemble(&g, &coef, Parallelism::Sequential).unwrap();
            let u = g.sample(|p| (PI * p[0]).sin() * (PI * p[1]).sin());
            let mut y = vec![0.0; g.dof()];
            a.apply_into(Parallelism::Sequential, &u, &mut y);
            let err = y
                .iter()
                .zip(&u)
                .map(|(yi, ui)| (yi - 5.0 * PI * PI * ui).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.9, "rate {rate}, errors {errors:?}");
        }
    }

    #[test]
    fn variable_coefficient_and_cross_term_are_symmetric() {
        let g = Grid::build(
            DomainSpec::Disc {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.1,
        )
        .unwrap();
        let coef = CoefficientSpec::full(
            ScalarField::parse("2 + x").unwrap(),
            ScalarField::parse("0.3*y").unwrap(),
            ScalarField::parse("1.5 + x*y").unwrap(),
        );
        let a = LocalOperator::assemble(&g, &coef, Parallelism::Sequential).unwrap();
        for i in 0..g.dof() {
            for (j, v) in a.row(i) {
                assert_eq!(v, a.entry(j, i), "({i}, {j})");
            }
        }
        assert!(a.nnz() > 5 * g.dof());
    }

    #[test]
    fn manufactured_cross_term() {
        // -div(A grad u) with constant A = [[2, 0.5], [0.5, 1]] and
        // u = sin(pi x) sin(pi y).
        let coef = CoefficientSpec::full(ScalarField::Constant(2.0), ScalarField::Constant(0.5), ScalarField::Constant(1.0));
        let mut errors = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let g = unit_square(h);
            let a = LocalOperator::assemble(&g, &coef, Parallelism::Sequential).unwrap();
            let u = g.sample(|p| (PI * p[0]).sin() * (PI * p[1]).sin());
            let exact = g.sample(|p| {
                let (x, y) = (PI * p[0], PI * p[1]);
                PI * PI * (3.0 * x.sin() * y.sin() - 2.0 * 0.5 * x.cos() * y.cos())
            });
            let mut y = vec![0.0; g.dof()];
            a.apply_into(Parallelism::Sequential, &u, &mut y);
            errors.push(y.iter().zip(&exact).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        }
        assert!(errors[0] / errors[1] > 3.5, "{errors:?}");
    }

    #[test]
    fn rejects_non_elliptic_and_false_bounds() {
        let g = unit_square(0.1);
        let neg = CoefficientSpec::diagonal(ScalarField::Constant(1.0), ScalarField::parse("x - 0.5").unwrap());
        assert!(matches!(
            LocalOperator::assemble(&g, &neg, Parallelism::Sequential),
            Err(Error::Coefficient(_))
        ));
        let mut claimed = CoefficientSpec::scaled(3.0);
        claimed.bounds = Some([1.0, 2.0]);
        assert!(check_ellipticity(&g, &claimed).is_err());
        claimed.bounds = Some([3.0, 3.0]);
        let rep = check_ellipticity(&g, &claimed).unwrap();
        assert_eq!(rep.samples, 8 * g.dof());
        let indefinite = CoefficientSpec::full(ScalarField::Constant(1.0), ScalarField::Constant(2.0), ScalarField::Constant(1.0));
        assert!(check_ellipticity(&g, &indefinite).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let g = unit_square(1.0 / 40.0);
        let coef = CoefficientSpec::diagonal(ScalarField::parse("1 + x").unwrap(), ScalarField::Constant(4.0));
        let a = LocalOperator::assemble(&g, &coef, Parallelism::Rayon).unwrap();
        let u = g.sample(|p| p[0] * p[1]);
        let mut y1 = vec![0.0; g.dof()];
        let mut y2 = vec![0.0; g.dof()];
        a.apply_into(Parallelism::Sequential, &u, &mut y1);
        a.apply_into(Parallelism::Rayon, &u, &mut y2);
        assert_eq!(y1, y2);
    }
}
