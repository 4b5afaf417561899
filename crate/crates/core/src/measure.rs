//! Measure data (density, atoms, divergence-form part) and the regularized
//! sequences fed to the approximate problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::grid::Grid;
use crate::truncation::{truncate, Level};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub x: Vec<f64>,
    pub mass: f64,
}

impl Atom {
    pub fn point(&self) -> [f64; 2] {
        [self.x.first().copied().unwrap_or(0.0), self.x.get(1).copied().unwrap_or(0.0)]
    }
}

/// A nonnegative measure written as `density dx + sum of atoms + H - div G`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<ScalarField>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<Atom>,
    #[serde(default, rename = "H", skip_serializing_if = "Option::is_none")]
    pub h_part: Option<ScalarField>,
    #[serde(default, rename = "G", skip_serializing_if = "Option::is_none")]
    pub div_part: Option<Vec<ScalarField>>,
}

impl MeasureData {
    pub fn zero() -> Self {
        MeasureData::default()
    }

    pub fn from_density(f: ScalarField) -> Self {
        MeasureData {
            density: Some(f),
            ..MeasureData::default()
        }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        MeasureData {
            atoms,
            ..MeasureData::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        let zero_field = |f: &Option<ScalarField>| match f {
            None => true,
            Some(f) => f.as_constant() == Some(0.0),
        };
        zero_field(&self.density)
            && self.atoms.is_empty()
            && zero_field(&self.h_part)
            && self.div_part.as_ref().map_or(true, |g| g.iter().all(|c| c.as_constant() == Some(0.0)))
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for a in &self.atoms {
            if a.x.len() != grid.dim() {
                return Err(Error::DimensionMismatch {
                    expected: grid.dim(),
                    got: a.x.len(),
                });
            }
            if !(a.mass > 0.0 && a.mass.is_finite()) {
                return Err(Error::InvalidParameter(format!("atom mass {} must be positive", a.mass)));
            }
            if !grid.spec().contains(a.point()) {
                return Err(Error::InvalidParameter(format!("atom at {:?} is not strictly inside the domain", a.x)));
            }
        }
        if let Some(g) = &self.div_part {
            if g.len() != grid.dim() {
                return Err(Error::DimensionMismatch {
                    expected: grid.dim(),
                    got: g.len(),
                });
            }
        }
        Ok(())
    }

    /// Nodal density at the degrees of freedom, checked nonnegative.
    pub fn density_values(&self, grid: &Grid) -> Result<Vec<f64>> {
        nonnegative_field(self.density.as_ref(), grid, "density")
    }

    pub fn h_values(&self, grid: &Grid) -> Result<Vec<f64>> {
        nonnegative_field(self.h_part.as_ref(), grid, "H")
    }

    /// Vector field `G` at every lattice node, zero outside the domain.
    pub fn div_field(&self, grid: &Grid) -> Option<Vec<[f64; 2]>> {
        let g = self.div_part.as_ref()?;
        Some(
            grid.points()
                .iter()
                .zip(grid.interior_mask())
                .map(|(&p, &inside)| {
                    if !inside {
                        return [0.0, 0.0];
                    }
                    let mut v = [0.0; 2];
                    for (axis, c) in g.iter().enumerate().take(2) {
                        v[axis] = c.eval(p);
                    }
                    v
                })
                .collect(),
        )
    }

    /// Pairing with a continuous test function, with the density part by
    /// grid quadrature.
    pub fn integrate_against<F: Fn([f64; 2]) -> f64>(&self, grid: &Grid, phi: F) -> Result<f64> {
        let mut total: f64 = self.atoms.iter().map(|a| a.mass * phi(a.point())).sum();
        if self.density.is_some() {
            let f = self.density_values(grid)?;
            let cell = grid.cell_measure();
            total += grid.dof_points().zip(&f).map(|(p, &v)| phi(p) * v * cell).sum::<f64>();
        }
        Ok(total)
    }
}

fn nonnegative_field(field: Option<&ScalarField>, grid: &Grid, what: &str) -> Result<Vec<f64>> {
    let Some(field) = field else {
        return Ok(vec![0.0; grid.dof()]);
    };
    let values = grid.sample(|p| field.eval(p));
    for (k, &v) in values.iter().enumerate() {
        if !(v >= 0.0) || v.is_infinite() {
            let p = grid.dof_point(k);
            return Err(Error::InvalidParameter(format!(
                "{what} must be finite and nonnegative, got {v} at ({}, {})",
                p[0], p[1]
            )));
        }
    }
    Ok(values)
}

/// Width law `w_n = scale * n^(-1/N)` for the tent mollifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mollifier {
    /// Width at `n = 1`; defaults to a quarter of the inradius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl Mollifier {
    pub fn width(&self, grid: &Grid, n: usize) -> f64 {
        let c = self.scale.unwrap_or(grid.spec().inradius() / 4.0);
        c * (n as f64).powf(-1.0 / grid.dim() as f64)
    }

    pub fn checked_width(&self, grid: &Grid, n: usize) -> Result<f64> {
        let w = self.width(grid, n);
        if w < 2.0 * grid.h() {
            return Err(Error::UnderResolvedMollifier {
                width: w,
                two_h: 2.0 * grid.h(),
            });
        }
        Ok(w)
    }
}

/// Spread `mass` at `x0` with the radial tent kernel of width `w`.
///
/// The kernel is normalized so that its sum over the full (unbounded)
/// lattice equals `mass`; the part falling outside the domain is dropped,
/// and its size is returned as the second component.
pub fn mollify_atom(grid: &Grid, x0: [f64; 2], mass: f64, w: f64, out: &mut [f64]) -> f64 {
    let h = grid.h();
    let o = grid.origin();
    let dim = grid.dim();
    let reach = (w / h).ceil() as i64 + 1;
    let base = [((x0[0] - o[0]) / h).round() as i64, ((x0[1] - o[1]) / h).round() as i64];
    let tent = |p: [f64; 2]| {
        let r = ((p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2)).sqrt();
        (1.0 - r / w).max(0.0)
    };
    let js: Vec<i64> = if dim == 1 { vec![0] } else { (-reach..=reach).collect() };
    let mut total = 0.0;
    let mut kept = Vec::new();
    let [nx, ny] = grid.dims();
    for di in -reach..=reach {
        for &dj in &js {
            let (i, j) = (base[0] + di, if dim == 1 { 0 } else { base[1] + dj });
            let p = [o[0] + i as f64 * h, if dim == 1 { 0.0 } else { o[1] + j as f64 * h }];
            let v = tent(p);
            if v == 0.0 {
                continue;
            }
            total += v;
            if i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny {
                let l = grid.lattice_index(i as usize, j as usize);
                if let Some(k) = grid.dof_of(l) {
                    kept.push((k, v));
                }
            }
        }
    }
    let cell = grid.cell_measure();
    let scale = mass / (total * cell);
    let mut inside = 0.0;
    for (k, v) in kept {
        out[k] += scale * v;
        inside += v;
    }
    mass * (1.0 - inside / total)
}

/// Discrete `-div G` with face values averaged from the two adjacent nodes.
/// This is the exact adjoint of the forward-difference face gradient, so
/// `sum_i phi_i (-div G)_i h^N` equals the discrete `int G . grad phi`.
pub fn div_volumetric(grid: &Grid, g_lattice: &[[f64; 2]]) -> Vec<f64> {
    let h = grid.h();
    grid.dof_nodes()
        .iter()
        .map(|&l| {
            let mut acc = 0.0;
            for axis in 0..grid.dim() {
                let plus = grid.neighbor(l, axis, 1).map_or(0.0, |q| 0.5 * (g_lattice[l][axis] + g_lattice[q][axis]));
                let minus = grid.neighbor(l, axis, -1).map_or(0.0, |q| 0.5 * (g_lattice[l][axis] + g_lattice[q][axis]));
                acc -= (plus - minus) / h;
            }
            acc
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatumDiagnostics {
    /// Mass of each atom lost to truncation at the boundary.
    pub atom_mass_loss: Vec<f64>,
    /// Mass removed when clipping negative entries of `h_n`.
    pub clipped_mass: f64,
    /// The absolutely continuous datum carries atoms, which the existence
    /// theory does not cover.
    pub singular_nu: bool,
}

/// Regularized data of the `n`-th approximate problem, as nodal values at
/// the degrees of freedom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxDatum {
    pub n: usize,
    pub f_n: Vec<f64>,
    pub h_n: Vec<f64>,
    pub g_n: Vec<f64>,
    pub width: f64,
    pub diagnostics: DatumDiagnostics,
}

impl ApproxDatum {
    /// Coefficient of the singular term, `T_n(f) + h_n`.
    pub fn singular_weight(&self) -> Vec<f64> {
        self.f_n.iter().zip(&self.h_n).map(|(a, b)| a + b).collect()
    }
}

/// Build the `n`-th regularized data from `nu` (singular term) and `mu`
/// (source term).
pub fn regularize(nu: &MeasureData, mu: &MeasureData, n: usize, grid: &Grid, moll: &Mollifier) -> Result<ApproxDatum> {
    if n == 0 {
        return Err(Error::InvalidParameter("approximation index n must be at least 1".into()));
    }
    nu.validate(grid)?;
    mu.validate(grid)?;
    if mu.h_part.is_some() || mu.div_part.is_some() {
        return Err(Error::InvalidParameter("the source measure takes only a density and atoms".into()));
    }
    let level = Level::new(n as f64)?;
    let needs_width = !nu.atoms.is_empty() || !mu.atoms.is_empty();
    let width = if needs_width {
        moll.checked_width(grid, n)?
    } else {
        moll.width(grid, n)
    };

    let f_n: Vec<f64> = nu.density_values(grid)?.into_iter().map(|v| truncate(level, v)).collect();

    let mut diagnostics = DatumDiagnostics {
        singular_nu: !nu.atoms.is_empty(),
        ..DatumDiagnostics::default()
    };
    let mut h_n: Vec<f64> = nu.h_values(grid)?.into_iter().map(|v| truncate(level, v)).collect();
    if let Some(g) = nu.div_field(grid) {
        for (hv, d) in h_n.iter_mut().zip(div_volumetric(grid, &g)) {
            *hv += d;
        }
    }
    for a in &nu.atoms {
        diagnostics.atom_mass_loss.push(mollify_atom(grid, a.point(), a.mass, width, &mut h_n));
    }
    let cell = grid.cell_measure();
    for v in h_n.iter_mut() {
        if *v < 0.0 {
            diagnostics.clipped_mass += -*v * cell;
            *v = 0.0;
        }
    }

    let mut g_n: Vec<f64> = mu.density_values(grid)?.into_iter().map(|v| truncate(level, v)).collect();
    for a in &mu.atoms {
        diagnostics.atom_mass_loss.push(mollify_atom(grid, a.point(), a.mass, width, &mut g_n));
    }
    Ok(ApproxDatum {
        n,
        f_n,
        h_n,
        g_n,
        width,
        diagnostics,
    })
}

/// Tensor-product bump `prod psi((x_i - c_i)/radius)` with
/// `psi(t) = exp(1 - 1/(1 - t^2))` on `|t| < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub dim: usize,
}

impl Bump {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let psi = |t: f64| {
            if t.abs() >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - t * t)).exp()
            }
        };
        let mut v = psi((p[0] - self.center[0]) / self.radius);
        if self.dim == 2 {
            v *= psi((p[1] - self.center[1]) / self.radius);
        }
        v
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|p| self.eval(p))
    }

    /// Distance from the center beyond which the bump vanishes.
    pub fn support_radius(&self) -> f64 {
        if self.dim == 2 {
            self.radius * std::f64::consts::SQRT_2
        } else {
            self.radius
        }
    }
}

/// Five bumps of radius inradius/3 spread around the domain center.
pub fn default_tests(grid: &Grid) -> Vec<Bump> {
    let spec = grid.spec();
    let c = spec.center();
    let rho = spec.inradius() / 3.0;
    let dim = grid.dim();
    let centers: Vec<[f64; 2]> = if dim == 1 {
        (-2..=2).map(|k| [c[0] + k as f64 * rho / 2.0, 0.0]).collect()
    } else {
        vec![
            c,
            [c[0] + rho, c[1]],
            [c[0] - rho, c[1]],
            [c[0], c[1] + rho],
            [c[0], c[1] - rho],
        ]
    };
    centers.into_iter().map(|center| Bump { center, radius: rho, dim }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarrowGapReport {
    /// `(n, max over tests of |int phi g_n - int phi dmu|)`.
    pub gaps: Vec<(usize, f64)>,
    pub final_gap: f64,
    pub monotone: bool,
}

/// Narrow-convergence gap of a regularized sequence against the target
/// measure, over the given tests.
pub fn narrow_gap(grid: &Grid, sequence: &[(usize, Vec<f64>)], data: &MeasureData, tests: &[Bump]) -> Result<NarrowGapReport> {
    if tests.is_empty() {
        return Err(Error::InvalidParameter("narrow gap needs at least one test function".into()));
    }
    let cell = grid.cell_measure();
    let targets: Vec<f64> = tests
        .iter()
        .map(|t| data.integrate_against(grid, |p| t.eval(p)))
        .collect::<Result<_>>()?;
    let samples: Vec<Vec<f64>> = tests.iter().map(|t| t.sample(grid)).collect();
    let gaps: Vec<(usize, f64)> = sequence
        .iter()
        .map(|(n, g)| {
            let gap = samples
                .iter()
                .zip(&targets)
                .map(|(phi, &target)| {
                    let pairing: f64 = phi.iter().zip(g).map(|(a, b)| a * b * cell).sum();
                    (pairing - target).abs()
                })
                .fold(0.0, f64::max);
            (*n, gap)
        })
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(NarrowGapReport {
        final_gap: gaps.last().map_or(0.0, |g| g.1),
        gaps,
        monotone,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    /// `|int f_n g_n - int f g|` for each index.
    pub gaps: Vec<f64>,
    /// L1 distance between consecutive `g_n`, a proxy for a.e. convergence.
    pub g_steps: Vec<f64>,
    /// Set when `g_n` does not settle, so the limit pairing need not hold.
    pub hypothesis_violated: bool,
}

/// Track `int f_n g_n` against the limit pairing `int f g`.
pub fn pair_weak_limit_check(grid: &Grid, f_n: &[Vec<f64>], g_n: &[Vec<f64>], f: &[f64], g: &[f64]) -> Result<PairReport> {
    if f_n.len() != g_n.len() {
        return Err(Error::DimensionMismatch {
            expected: f_n.len(),
            got: g_n.len(),
        });
    }
    let cell = grid.cell_measure();
    let pair = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * cell;
    let limit = pair(f, g);
    let gaps = f_n.iter().zip(g_n).map(|(a, b)| (pair(a, b) - limit).abs()).collect();
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * cell;
    let g_steps: Vec<f64> = g_n.windows(2).map(|w| l1(&w[0], &w[1])).collect();
    let scale = g_n.last().map_or(0.0, |v| v.iter().map(|x| x.abs()).sum::<f64>() * cell);
    let hypothesis_violated = g_steps.last().is_some_and(|&s| s > 0.1 * scale.max(f64::MIN_POSITIVE));
    Ok(PairReport {
        gaps,
        g_steps,
        hypothesis_violated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use proptest::prelude::*;

    fn square(h: f64) -> Grid {
        Grid::build(
            DomainSpec::Rectangle {
                x: [0.0, 1.0],
                y: [0.0, 1.0],
            },
            h,
        )
        .unwrap()
    }

    fn l1(grid: &Grid, v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).sum::<f64>() * grid.cell_measure()
    }

    #[test]
    fn truncated_density() {
        let g = square(0.1);
        let nu = MeasureData::from_density(ScalarField::Constant(5.0));
        let d = regularize(&nu, &MeasureData::zero(), 3, &g, &Mollifier::default()).unwrap();
        assert!(d.f_n.iter().all(|&v| v == 3.0));
        assert!(d.h_n.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_data() {
        let g = square(0.1);
        let d = regularize(&MeasureData::zero(), &MeasureData::zero(), 4, &g, &Mollifier::default()).unwrap();
        assert!(d.f_n.iter().chain(&d.h_n).chain(&d.g_n).all(|&v| v == 0.0));
        assert!(MeasureData::zero().is_zero());
    }

    #[test]
    fn centered_atom_keeps_mass() {
        let g = square(1.0 / 64.0);
        let mu = MeasureData::from_atoms(vec![Atom {
            x: vec![0.5, 0.5],
            mass: 1.0,
        }]);
        for n in [1, 2, 4, 8] {
            let d = regularize(&MeasureData::zero(), &mu, n, &g, &Mollifier::default()).unwrap();
            assert!((l1(&g, &d.g_n) - 1.0).abs() < 0.01, "n = {n}");
            assert!(d.diagnostics.atom_mass_loss[0].abs() < 1e-12);
        }
    }

    #[test]
    fn off_lattice_atom_keeps_mass() {
        let g = square(1.0 / 50.0);
        let mu = MeasureData::from_atoms(vec![Atom {
            x: vec![0.4137, 0.5521],
            mass: 2.5,
        }]);
        let d = regularize(&MeasureData::zero(), &mu, 3, &g, &Mollifier::default()).unwrap();
        assert!((l1(&g, &d.g_n) - 2.5).abs() < 1e-3 * 2.5);
    }

    #[test]
    fn boundary_atom_loses_mass_without_renormalizing() {
        let g = square(1.0 / 64.0);
        let mu = MeasureData::from_atoms(vec![Atom {
            x: vec![0.05, 0.5],
            mass: 1.0,
        }]);
        let d = regularize(&MeasureData::zero(), &mu, 1, &g, &Mollifier::default()).unwrap();
        let loss = d.diagnostics.atom_mass_loss[0];
        assert!(loss > 0.01);
        assert!((l1(&g, &d.g_n) + loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn under_resolved_mollifier() {
        let g = square(0.1);
        let mu = MeasureData::from_atoms(vec![Atom {
            x: vec![0.5, 0.5],
            mass: 1.0,
        }]);
        let r = regularize(&MeasureData::zero(), &mu, 4, &g, &Mollifier::default());
        assert!(matches!(r, Err(Error::UnderResolvedMollifier { .. })));
    }

    #[test]
    fn rejects_exterior_atoms_and_negative_density() {
        let g = square(0.1);
        let mu = MeasureData::from_atoms(vec![Atom {
            x: vec![1.5, 0.5],
            mass: 1.0,
        }]);
        assert!(regularize(&MeasureData::zero(), &mu, 1, &g, &Mollifier::default()).is_err());
        let nu = MeasureData::from_density(ScalarField::parse("x - 0.5").unwrap());
        assert!(regularize(&nu, &MeasureData::zero(), 1, &g, &Mollifier::default()).is_err());
    }

    #[test]
    fn div_part_is_adjoint_of_face_gradient() {
        let g = square(1.0 / 16.0);
        let data = MeasureData {
            div_part: Some(vec![ScalarField::parse("sin(3*x) + y").unwrap(), ScalarField::parse("x*y").unwrap()]),
            ..MeasureData::default()
        };
        let field = data.div_field(&g).unwrap();
        let d = div_volumetric(&g, &field);
        let phi = g.sample(|p| (p[0] * 7.0).sin() * p[1] * (1.0 - p[1]));
        let lhs: f64 = d.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() * g.cell_measure();
        // Face pairing computed independently.
        let ext = g.extend(&phi);
        let h = g.h();
        let mut rhs = 0.0;
        for l in 0..g.lattice_len() {
            for axis in 0..2 {
                if let Some(q) = g.neighbor(l, axis, 1) {
                    let gf = 0.5 * (field[l][axis] + field[q][axis]);
                    rhs += gf * (ext[q] - ext[l]) / h * g.cell_measure();
                }
            }
        }
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn negative_h_is_clipped_and_reported() {
        let g = square(1.0 / 16.0);
        let nu = MeasureData {
            div_part: Some(vec![ScalarField::parse("x").unwrap(), ScalarField::Constant(0.0)]),
            ..MeasureData::default()
        };
        let d = regularize(&nu, &MeasureData::zero(), 1, &g, &Mollifier::default()).unwrap();
        assert!(d.h_n.iter().all(|&v| v >= 0.0));
        assert!(d.diagnostics.clipped_mass > 0.0);
    }

    #[test]
    fn atom_gap_is_second_order_in_width() {
        let g = square(1.0 / 256.0);
        let x0 = [0.5, 0.5];
        let mu = MeasureData::from_atoms(vec![Atom { x: x0.to_vec(), mass: 1.0 }]);
        let test = Bump {
            center: [0.55, 0.45],
            radius: 0.3,
            dim: 2,
        };
        // Taylor oracle: E[phi(x0 + Z)] - phi(x0) ~ 0.5 * laplacian * E[Z_1^2],
        // and for the radial tent E[Z_1^2] = 0.15 w^2.
        let e = 1e-4;
        let lap = (test.eval([x0[0] + e, x0[1]])
            + test.eval([x0[0] - e, x0[1]])
            + test.eval([x0[0], x0[1] + e])
            + test.eval([x0[0], x0[1] - e])
            - 4.0 * test.eval(x0))
            / (e * e);
        for n in [1, 4, 16] {
            let d = regularize(&MeasureData::zero(), &mu, n, &g, &Mollifier::default()).unwrap();
            let rep = narrow_gap(&g, &[(n, d.g_n.clone())], &mu, &[test]).unwrap();
            let taylor = (0.5 * lap * 0.15 * d.width * d.width).abs();
            assert!((rep.final_gap - taylor).abs() < 0.2 * taylor, "n {n}: {} vs {}", rep.final_gap, taylor);
        }
    }

    #[test]
    fn zero_measure_has_zero_gap() {
        let g = square(1.0 / 32.0);
        let tests = default_tests(&g);
        assert_eq!(tests.len(), 5);
        let d = regularize(&MeasureData::zero(), &MeasureData::zero(), 2, &g, &Mollifier::default()).unwrap();
        let rep = narrow_gap(&g, &[(2, d.g_n)], &MeasureData::zero(), &tests).unwrap();
        assert_eq!(rep.final_gap, 0.0);
    }

    #[test]
    fn inactive_truncation_gap_is_quadrature_only() {
        let g = square(1.0 / 32.0);
        let mu = MeasureData::from_density(ScalarField::parse("1 + x*y").unwrap());
        let d = regularize(&MeasureData::zero(), &mu, 4, &g, &Mollifier::default()).unwrap();
        let rep = narrow_gap(&g, &[(4, d.g_n)], &mu, &default_tests(&g)).unwrap();
        assert!(rep.final_gap < 1e-14);
    }

    #[test]
    fn pair_checks() {
        let g = square(1.0 / 16.0);
        let ones = vec![1.0; g.dof()];
        let c = vec![2.0; g.dof()];
        let r = pair_weak_limit_check(&g, &[c.clone(), c.clone()], &[ones.clone(), ones.clone()], &c, &ones).unwrap();
        assert!(r.gaps.iter().all(|&x| x == 0.0));
        assert!(!r.hypothesis_violated);

        // Unbounded f = |x - x0|^{-1}, truncated.
        let x0 = [0.5 + 1.0 / 32.0, 0.5 + 1.0 / 32.0];
        let f = g.sample(|p| 1.0 / ((p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2)).sqrt());
        let fns: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&n| f.iter().map(|&v| v.min(n)).collect())
            .collect();
        let gns = vec![ones.clone(); fns.len()];
        let r = pair_weak_limit_check(&g, &fns, &gns, &f, &ones).unwrap();
        for (k, fnv) in fns.iter().enumerate() {
            let direct: f64 = f.iter().zip(fnv).map(|(a, b)| a - b).sum::<f64>() * g.cell_measure();
            assert!((r.gaps[k] - direct).abs() < 1e-12);
        }
        assert!(r.gaps.windows(2).all(|w| w[1] <= w[0]));

        // Checkerboards at refining scales never settle.
        let boards: Vec<Vec<f64>> = [1usize, 2, 4, 8]
            .iter()
            .map(|&m| {
                g.sample(|p| {
                    let i = (p[0] * m as f64 * 2.0).floor() as i64 + (p[1] * m as f64 * 2.0).floor() as i64;
                    if i % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
            })
            .collect();
        let smooth = g.sample(|p| p[0]);
        let r = pair_weak_limit_check(&g, &vec![smooth.clone(); 4], &boards, &smooth, &vec![0.0; g.dof()]).unwrap();
        assert!(r.hypothesis_violated);
    }

    proptest! {
        #[test]
        fn truncated_l1_grows_with_n(n in 1usize..40, scale in 0.1f64..50.0) {
            let g = square(1.0 / 16.0);
            let f = ScalarField::parse(&format!("{scale} / (0.01 + (x-0.5)^2 + (y-0.5)^2)")).unwrap();
            let nu = MeasureData::from_density(f);
            let a = regularize(&nu, &MeasureData::zero(), n, &g, &Mollifier::default()).unwrap();
            let b = regularize(&nu, &MeasureData::zero(), n + 1, &g, &Mollifier::default()).unwrap();
            let full = l1(&g, &nu.density_values(&g).unwrap());
            prop_assert!(l1(&g, &a.f_n) <= l1(&g, &b.f_n));
            prop_assert!(l1(&g, &b.f_n) <= full * (1.0 + 1e-14));
        }

        #[test]
        fn regularization_is_monotone_in_data(n in 1usize..20, c1 in 0.0f64..10.0, dc in 0.0f64..10.0) {
            let g = square(1.0 / 16.0);
            let small = MeasureData::from_density(ScalarField::parse(&format!("{c1} * (1 + x)")).unwrap());
            let big = MeasureData::from_density(ScalarField::parse(&format!("{} * (1 + x)", c1 + dc)).unwrap());
            let a = regularize(&small, &small, n, &g, &Mollifier::default()).unwrap();
            let b = regularize(&big, &big, n, &g, &Mollifier::default()).unwrap();
            prop_assert!(a.f_n.iter().zip(&b.f_n).all(|(x, y)| x <= y));
            prop_assert!(a.g_n.iter().zip(&b.g_n).all(|(x, y)| x <= y));
        }

        #[test]
        fn interior_atoms_conserve_mass(x in 0.3f64..0.7, y in 0.3f64..0.7, n in 1usize..6, mass in 0.1f64..100.0) {
            let g = square(1.0 / 64.0);
            let mu = MeasureData::from_atoms(vec![Atom { x: vec![x, y], mass }]);
            let d = regularize(&MeasureData::zero(), &mu, n, &g, &Mollifier::default()).unwrap();
            prop_assert!(d.width < 0.3);
            prop_assert!((l1(&g, &d.g_n) - mass).abs() <= 1e-3 * mass);
        }
    }
}
