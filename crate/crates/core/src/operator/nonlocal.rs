//! Quadrature of `P.V. int (u(x) - u(y)) K(x, y) dy` with zero exterior data.
//!
//! Row `i` of the matrix is
//! `diag_i u_i - sum_{j interior, j != i} a_i a_j W(i - j) u_j` where
//! `W(d) = K0(h d) h^N` is the midpoint weight of the radial kernel `K0`.
//! The diagonal collects the same midpoint weights over interior cells,
//! exact cell integrals over exterior lattice cells, and the kernel mass
//! beyond the lattice box. Rows therefore sum to the exterior mass, which is
//! nonnegative. The singular self cell is dropped; for `s < 1` its
//! symmetric part cancels and what remains is bounded by the nearest
//! neighbor weight.
//!
//! Outside the lattice box a modulated kernel uses the modulation at the
//! nearest point of the box.

use serde::{Deserialize, Serialize};

use super::convolution::{self, Convolution};
use super::kernel::{check_kernel, KernelReport, KernelSpec};
use super::tail::{radial_tail, weighted_tail, Region, SinPower};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par::{self, Parallelism};
use crate::quadrature::{gauss_legendre, Tolerance};

/// Hard cap on the dense representation.
pub const DENSE_LIMIT: usize = 5000;
/// Above this many unknowns the automatic strategy switches to the FFT
/// apply, which is much faster well before the dense cap.
pub const AUTO_DENSE_LIMIT: usize = 1024;
/// Lattice size above which diagonal sums go through the FFT.
const DIRECT_SUM_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Auto,
    Dense,
    MatrixFree,
}

enum Repr {
    Dense(Vec<f64>),
    Fft(Convolution),
}

pub struct NonlocalOperator {
    dims: [usize; 2],
    dof_nodes: Vec<usize>,
    lattice_len: usize,
    weights: Vec<f64>,
    a: Vec<f64>,
    diag: Vec<f64>,
    exterior: Vec<f64>,
    repr: Repr,
    self_cell_bound: f64,
    kernel_report: KernelReport,
    s: f64,
}

impl std::fmt::Debug for NonlocalOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlocalOperator")
            .field("dims", &self.dims)
            .field("dof", &self.dof_nodes.len())
            .field("dense", &self.is_dense())
            .finish()
    }
}

/// `int` of `|z|^(-N-2s)` over the unit cell centered at the integer offset
/// `(dx, dy) != 0`.
pub fn unit_cell_integral(dx: usize, dy: usize, dim: usize, s: f64) -> f64 {
    let two_s = 2.0 * s;
    if dim == 1 {
        let d = dx as f64;
        return ((d - 0.5).powf(-two_s) - (d + 0.5).powf(-two_s)) / two_s;
    }
    let far = dx.max(dy);
    let (sub, order) = match far {
        0..=3 => (4, 8),
        4..=12 => (1, 6),
        _ => (1, 4),
    };
    let rule = gauss_legendre(order);
    let expo = -1.0 - s;
    let step = 1.0 / sub as f64;
    let mut total = 0.0;
    for a in 0..sub {
        let x0 = dx as f64 - 0.5 + a as f64 * step;
        for b in 0..sub {
            let y0 = dy as f64 - 0.5 + b as f64 * step;
            for (x, wx) in rule.mapped(x0, x0 + step) {
                for (y, wy) in rule.mapped(y0, y0 + step) {
                    total += wx * wy * (x * x + y * y).powf(expo);
                }
            }
        }
    }
    total
}

fn table<F: Fn(usize, usize) -> f64 + Sync>(dims: [usize; 2], par: Parallelism, f: F) -> Vec<f64> {
    par::map_range(par, dims[0] * dims[1], |l| f(l / dims[1], l % dims[1]))
}

fn lattice_sum(dims: [usize; 2], tab: &[f64], input: &[f64], par: Parallelism) -> Vec<f64> {
    let w = |dx: usize, dy: usize| tab[dx * dims[1] + dy];
    if dims[0] * dims[1] <= DIRECT_SUM_LIMIT {
        convolution::direct(dims, w, input, par)
    } else {
        Convolution::new(dims, w, par).apply(input, par)
    }
}

impl NonlocalOperator {
    pub fn assemble(grid: &Grid, kernel: &KernelSpec, strategy: Strategy, par: Parallelism) -> Result<NonlocalOperator> {
        let kernel_report = check_kernel(grid, kernel)?;
        let dims = grid.dims();
        let dim = grid.dim();
        let s = kernel.s;
        let h = grid.h();
        let n = dim as f64;
        let scale = h.powf(-2.0 * s);
        let weights = table(dims, par, |dx, dy| {
            if dx == 0 && dy == 0 {
                0.0
            } else {
                scale * ((dx * dx + dy * dy) as f64).sqrt().powf(-n - 2.0 * s)
            }
        });
        let cells = table(dims, par, |dx, dy| {
            if dx == 0 && dy == 0 {
                0.0
            } else {
                scale * unit_cell_integral(dx, dy, dim, s)
            }
        });
        let a_lattice: Vec<f64> = grid.points().iter().map(|&p| kernel.weight(p)).collect();
        let mask = grid.interior_mask();
        let a_int: Vec<f64> = a_lattice.iter().zip(mask).map(|(&a, &m)| if m { a } else { 0.0 }).collect();
        let a_ext: Vec<f64> = a_lattice.iter().zip(mask).map(|(&a, &m)| if m { 0.0 } else { a }).collect();
        let inner = lattice_sum(dims, &weights, &a_int, par);
        let outer = lattice_sum(dims, &cells, &a_ext, par);

        let (lo, hi) = grid.lattice_box();
        let region = Region { lo, hi, dim };
        let radial = kernel.is_radial();
        let m0 = kernel.weight(grid.spec().center()).powi(2);
        let dof_nodes = grid.dof_nodes().to_vec();
        let sin_power = SinPower::new(s);
        let tails: Vec<Result<f64>> = par::map_range(par, dof_nodes.len(), |k| {
            let x = grid.points()[dof_nodes[k]];
            let node_error = |e: Error| match e {
                Error::Quadrature { error, .. } => Error::TailQuadrature { node: k, x, error },
                other => other,
            };
            if radial {
                radial_tail(x, &region, s, Tolerance::relative(1e-10))
                    .map(|t| m0 * t)
                    .map_err(node_error)
            } else {
                let ax = a_lattice[dof_nodes[k]];
                weighted_tail(x, &region, s, &sin_power, |p| kernel.weight(p), Tolerance::relative(1e-8))
                    .map(|t| ax * t)
                    .map_err(node_error)
            }
        });
        let mut diag = Vec::with_capacity(dof_nodes.len());
        let mut exterior = Vec::with_capacity(dof_nodes.len());
        let mut a = Vec::with_capacity(dof_nodes.len());
        for (k, tail) in tails.into_iter().enumerate() {
            let l = dof_nodes[k];
            let ak = a_lattice[l];
            let ext = ak * outer[l] + tail?;
            exterior.push(ext);
            diag.push(ak * inner[l] + ext);
            a.push(ak);
        }
        let nearest = if dims[0] > 1 { weights[dims[1]] } else { weights[1] };
        let self_cell_bound = a.iter().fold(0.0_f64, |m, &x| m.max(x * x)) * nearest;

        let dof = dof_nodes.len();
        let dense = match strategy {
            Strategy::Dense => {
                if dof > DENSE_LIMIT {
                    return Err(Error::InvalidParameter(format!(
                        "dense nonlocal matrix requested for {dof} unknowns (limit {DENSE_LIMIT})"
                    )));
                }
                true
            }
            Strategy::MatrixFree => false,
            Strategy::Auto => dof <= AUTO_DENSE_LIMIT,
        };
        let repr = if dense {
            let coords: Vec<(usize, usize)> = dof_nodes.iter().map(|&l| grid.lattice_coords(l)).collect();
            let rows: Vec<Vec<f64>> = par::map_range(par, dof, |k| {
                let (i, j) = coords[k];
                (0..dof)
                    .map(|k2| {
                        if k2 == k {
                            diag[k]
                        } else {
                            let (i2, j2) = coords[k2];
                            -(a[k] * a[k2]) * weights[i.abs_diff(i2) * dims[1] + j.abs_diff(j2)]
                        }
                    })
                    .collect()
            });
            Repr::Dense(rows.concat())
        } else {
            let ny = dims[1];
            let w = &weights;
            Repr::Fft(Convolution::new(dims, |dx, dy| w[dx * ny + dy], par))
        };
        Ok(NonlocalOperator {
            dims,
            dof_nodes,
            lattice_len: grid.lattice_len(),
            weights,
            a,
            diag,
            exterior,
            repr,
            self_cell_bound,
            kernel_report,
            s,
        })
    }

    pub fn dim(&self) -> usize {
        self.dof_nodes.len()
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, Repr::Dense(_))
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Row sums: kernel mass over exterior cells and beyond the box.
    pub fn exterior_mass(&self) -> &[f64] {
        &self.exterior
    }

    /// Upper bound on the dropped self-cell contribution per unit of the
    /// local second difference.
    pub fn self_cell_bound(&self) -> f64 {
        self.self_cell_bound
    }

    pub fn kernel_report(&self) -> KernelReport {
        self.kernel_report
    }

    /// Matrix entry `(i, j)`, computed from the weight table.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let ny = self.dims[1];
        let (li, lj) = (self.dof_nodes[i], self.dof_nodes[j]);
        let d = (li / ny).abs_diff(lj / ny) * ny + (li % ny).abs_diff(lj % ny);
        -(self.a[i] * self.a[j]) * self.weights[d]
    }

    pub fn apply_into(&self, par: Parallelism, x: &[f64], y: &mut [f64]) {
        match &self.repr {
            Repr::Dense(m) => {
                let n = self.dim();
                par::for_each_mut(par, y, |k, out| {
                    let row = &m[k * n..(k + 1) * n];
                    *out = row.iter().zip(x).map(|(a, b)| a * b).sum();
                });
            }
            Repr::Fft(conv) => {
                let mut v = vec![0.0; self.lattice_len];
                for (k, &l) in self.dof_nodes.iter().enumerate() {
                    v[l] = self.a[k] * x[k];
                }
                let c = conv.apply(&v, par);
                par::for_each_mut(par, y, |k, out| {
                    *out = self.diag[k] * x[k] - self.a[k] * c[self.dof_nodes[k]];
                });
            }
        }
    }

    pub fn apply_add(&self, par: Parallelism, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; y.len()];
        self.apply_into(par, x, &mut tmp);
        for (a, b) in y.iter_mut().zip(tmp) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarField;
    use crate::grid::DomainSpec;
    use crate::quadrature::integrate;

    fn apply(op: &NonlocalOperator, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        op.apply_into(Parallelism::Sequential, x, &mut y);
        y
    }

    #[test]
    fn cell_integrals_match_adaptive_quadrature() {
        let s = 0.35;
        for (dx, dy) in [(1, 0), (1, 1), (2, 1), (5, 3), (20, 7)] {
            let fast = unit_cell_integral(dx, dy, 2, s);
            let slow = integrate(
                |x| {
                    integrate(
                        |y| (x * x + y * y).powf(-1.0 - s),
                        dy as f64 - 0.5,
                        dy as f64 + 0.5,
                        Tolerance::relative(1e-13),
                    )
                    .unwrap()
                    .value
                },
                dx as f64 - 0.5,
                dx as f64 + 0.5,
                Tolerance::relative(1e-12),
            )
            .unwrap()
            .value;
            assert!((fast - slow).abs() < 1e-10 * slow, "({dx}, {dy}): {fast} vs {slow}");
        }
    }

    #[test]
    fn zero_and_linearity() {
        let g = Grid::build(DomainSpec::Interval { bounds: [-1.0, 1.0] }, 1.0 / 32.0).unwrap();
        let op = NonlocalOperator::assemble(&g, &KernelSpec::fractional(0.5), Strategy::Auto, Parallelism::Sequential).unwrap();
        assert!(apply(&op, &vec![0.0; g.dof()]).iter().all(|&v| v == 0.0));
        let one = vec![1.0; g.dof()];
        let three = vec![3.0; g.dof()];
        let (a, b) = (apply(&op, &one), apply(&op, &three));
        for (x, y) in a.iter().zip(&b) {
            assert!((3.0 * x - y).abs() < 1e-12 * y.abs());
        }
    }

    #[test]
    fn structure_symmetric_m_matrix() {
        let g = Grid::build(
            DomainSpec::Disc {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.125,
        )
        .unwrap();
        let k = KernelSpec::perturbed(0.4, 2.0, ScalarField::parse("1 + 0.4*sin(2*x)*y").unwrap());
        let op = NonlocalOperator::assemble(&g, &k, Strategy::Dense, Parallelism::Sequential).unwrap();
        let n = g.dof();
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let e = op.entry(i, j);
                assert_eq!(e, op.entry(j, i));
                if i != j {
                    assert!(e <= 0.0);
                }
                row += e;
            }
            assert!(row >= 0.0);
            assert!((row - op.exterior_mass()[i]).abs() < 1e-9 * op.diagonal()[i]);
        }
    }

    #[test]
    fn dense_and_fft_agree() {
        let g = Grid::build(
            DomainSpec::Rectangle {
                x: [0.0, 1.0],
                y: [0.0, 0.5],
            },
            1.0 / 24.0,
        )
        .unwrap();
        let k = KernelSpec::fractional(0.6);
        let d = NonlocalOperator::assemble(&g, &k, Strategy::Dense, Parallelism::Sequential).unwrap();
        let f = NonlocalOperator::assemble(&g, &k, Strategy::MatrixFree, Parallelism::Sequential).unwrap();
        assert!(d.is_dense() && !f.is_dense());
        let x = g.sample(|p| (3.0 * p[0]).sin() + p[1] * p[1]);
        let (a, b) = (apply(&d, &x), apply(&f, &x));
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-11 * scale);
        }
    }

    #[test]
    fn modulated_constant_equals_scaled_radial() {
        let g = Grid::build(DomainSpec::Interval { bounds: [0.0, 1.0] }, 1.0 / 16.0).unwrap();
        let r = NonlocalOperator::assemble(&g, &KernelSpec::fractional(0.3), Strategy::Dense, Parallelism::Sequential).unwrap();
        let m = KernelSpec::perturbed(0.3, 2.0, ScalarField::parse("2 + 0*x").unwrap());
        let m = NonlocalOperator::assemble(&g, &m, Strategy::Dense, Parallelism::Sequential).unwrap();
        for i in 0..g.dof() {
            for j in 0..g.dof() {
                assert!((2.0 * r.entry(i, j) - m.entry(i, j)).abs() < 1e-7 * r.diagonal()[i]);
            }
        }
    }

    #[test]
    fn one_dimensional_profile_is_flat() {
        // (1 - x^2)_+^s has constant fractional Laplacian on (-1, 1).
        let s = 0.5;
        let g = Grid::build(DomainSpec::Interval { bounds: [-1.0, 1.0] }, 1.0 / 128.0).unwrap();
        let op = NonlocalOperator::assemble(&g, &KernelSpec::fractional(s), Strategy::Auto, Parallelism::Sequential).unwrap();
        let u = g.sample(|p| (1.0 - p[0] * p[0]).max(0.0).powf(s));
        let y = apply(&op, &u);
        let mid: Vec<f64> = g.dof_points().zip(&y).filter(|(p, _)| p[0].abs() <= 0.5).map(|(_, &v)| v).collect();
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        let sd = (mid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mid.len() as f64).sqrt();
        // Unnormalized kernel: the constant is pi for s = 1/2.
        assert!(sd / mean < 0.02, "cv {}", sd / mean);
        assert!((mean - std::f64::consts::PI).abs() < 0.05 * std::f64::consts::PI, "{mean}");
    }

    #[test]
    fn dense_cap_is_enforced() {
        let g = Grid::build(
            DomainSpec::Rectangle {
                x: [0.0, 1.0],
                y: [0.0, 1.0],
            },
            1.0 / 80.0,
        )
        .unwrap();
        assert!(g.dof() > DENSE_LIMIT);
        let r = NonlocalOperator::assemble(&g, &KernelSpec::fractional(0.5), Strategy::Dense, Parallelism::Sequential);
        assert!(r.is_err());
    }
}
