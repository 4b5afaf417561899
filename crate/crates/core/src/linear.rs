//! Linear Dirichlet solves `M w = rhs` by preconditioned conjugate gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measure::div_volumetric;
use crate::operator::LinearOperator;
use crate::par;

pub const DEFAULT_TOL: f64 = 1e-10;
/// Largest system the dense oracle will factor.
pub const DENSE_ORACLE_LIMIT: usize = 1500;
const MAX_RESTARTS: usize = 8;

/// Right-hand side `f + (-div G)`, with `f` at the degrees of freedom and
/// `G` at every lattice node (zero outside the domain).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RhsSpec {
    pub volumetric: Vec<f64>,
    pub div_part: Option<Vec<[f64; 2]>>,
}

impl RhsSpec {
    pub fn volumetric(f: Vec<f64>) -> RhsSpec {
        RhsSpec {
            volumetric: f,
            div_part: None,
        }
    }

    pub fn with_div(mut self, g: Vec<[f64; 2]>) -> RhsSpec {
        self.div_part = Some(g);
        self
    }

    /// Nodal load vector.
    pub fn assemble(&self, grid: &Grid) -> Result<Vec<f64>> {
        if self.volumetric.len() != grid.dof() {
            return Err(Error::DimensionMismatch {
                expected: grid.dof(),
                got: self.volumetric.len(),
            });
        }
        if let Some(i) = self.volumetric.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "right-hand side is not finite at dof {i} ({:?})",
                grid.dof_point(i)
            )));
        }
        let mut b = self.volumetric.clone();
        if let Some(g) = &self.div_part {
            if g.len() != grid.lattice_len() {
                return Err(Error::DimensionMismatch {
                    expected: grid.lattice_len(),
                    got: g.len(),
                });
            }
            for (v, d) in b.iter_mut().zip(div_volumetric(grid, g)) {
                *v += d;
            }
        }
        Ok(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveResult {
    pub w: Vec<f64>,
    /// Relative residual `|b - M w| / |b|`, recomputed from scratch.
    pub residual: f64,
    pub iterations: usize,
}

/// Solve `op w = rhs` to relative residual `tol`.
pub fn solve_linear<M: LinearOperator + ?Sized>(op: &M, grid: &Grid, rhs: &RhsSpec, tol: f64) -> Result<LinearSolveResult> {
    let b = rhs.assemble(grid)?;
    pcg(op, &b, None, tol)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 1e-14 && tol < 1e-4) {
        return Err(Error::InvalidParameter(format!("linear tolerance {tol:e} outside (1e-14, 1e-4)")));
    }
    Ok(())
}

/// Jacobi-preconditioned conjugate gradients from an optional warm start.
/// The iteration cap is ten times the system size.
pub fn pcg<M: LinearOperator + ?Sized>(op: &M, b: &[f64], x0: Option<&[f64]>, tol: f64) -> Result<LinearSolveResult> {
    check_tol(tol)?;
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let p_mode = op.parallelism();
    let b_norm = par::dot(p_mode, b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(LinearSolveResult {
            w: vec![0.0; n],
            residual: 0.0,
            iterations: 0,
        });
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        Some(x0) => return Err(Error::DimensionMismatch { expected: n, got: x0.len() }),
        None => vec![0.0; n],
    };
    let cap = 10 * n.max(1);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];

    // Restart from the true residual whenever the recursive one claims
    // convergence but the true one disagrees.
    for _restart in 0..=MAX_RESTARTS {
        op.apply_into(&x, &mut q);
        par::for_each_mut(p_mode, &mut r, |i, v| *v = b[i] - q[i]);
        let mut rel = par::dot(p_mode, &r, &r).sqrt() / b_norm;
        if rel <= tol {
            return Ok(LinearSolveResult {
                w: x,
                residual: rel,
                iterations,
            });
        }
        if iterations >= cap {
            break;
        }
        par::for_each_mut(p_mode, &mut z, |i, v| *v = inv_diag[i] * r[i]);
        p.copy_from_slice(&z);
        let mut rz = par::dot(p_mode, &r, &z);
        while rel > tol && iterations < cap {
            op.apply_into(&p, &mut q);
            let pq = par::dot(p_mode, &p, &q);
            if !(pq > 0.0) || !(rz > 0.0) {
                return Err(Error::LinearNonConvergence {
                    iterations,
                    residual: rel,
                    history,
                });
            }
            let alpha = rz / pq;
            par::for_each_mut(p_mode, &mut x, |i, v| *v += alpha * p[i]);
            par::for_each_mut(p_mode, &mut r, |i, v| *v -= alpha * q[i]);
            par::for_each_mut(p_mode, &mut z, |i, v| *v = inv_diag[i] * r[i]);
            let rz_new = par::dot(p_mode, &r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            par::for_each_mut(p_mode, &mut p, |i, v| *v = z[i] + beta * *v);
            iterations += 1;
            rel = par::dot(p_mode, &r, &r).sqrt() / b_norm;
            history.push(rel);
        }
    }
    op.apply_into(&x, &mut q);
    let residual = (0..n).map(|i| (b[i] - q[i]).powi(2)).sum::<f64>().sqrt() / b_norm;
    Err(Error::LinearNonConvergence {
        iterations,
        residual,
        history,
    })
}

/// Dense matrix of `op` by columns.
pub fn dense_matrix<M: LinearOperator + ?Sized>(op: &M) -> Result<DMatrix<f64>> {
    let n = op.dim();
    if n > DENSE_ORACLE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "dense oracle limited to {DENSE_ORACLE_LIMIT} dof, system has {n}"
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        e[j] = 0.0;
        m.column_mut(j).copy_from_slice(&col);
    }
    Ok(m)
}

/// Direct solve by Cholesky factorization.
pub fn solve_dense<M: LinearOperator + ?Sized>(op: &M, b: &[f64]) -> Result<Vec<f64>> {
    let m = dense_matrix(op)?;
    let sym = (&m + m.transpose()) * 0.5;
    let chol = sym
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("operator matrix is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

/// Discrete `int G . grad w` over faces, matching [`div_volumetric`].
pub fn face_pairing(grid: &Grid, g_lattice: &[[f64; 2]], w: &[f64]) -> f64 {
    let ext = grid.extend(w);
    let h = grid.h();
    let cell = grid.cell_measure();
    let mut total = 0.0;
    for l in 0..grid.lattice_len() {
        for axis in 0..grid.dim() {
            if let Some(q) = grid.neighbor(l, axis, 1) {
                let g = 0.5 * (g_lattice[l][axis] + g_lattice[q][axis]);
                total += g * (ext[q] - ext[l]) / h;
            }
        }
    }
    total * cell
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Whether `rhs1 <= rhs2` nodewise.
    pub ordered: bool,
    /// `max (w1 - w2)^+`.
    pub max_violation: f64,
    pub allowance: f64,
    /// `true` when the data are unordered or `w1 <= w2 + allowance`.
    pub holds: bool,
}

/// Check the comparison principle `rhs1 <= rhs2 => w1 <= w2`.
pub fn comparison_check(grid: &Grid, w1: &[f64], rhs1: &RhsSpec, w2: &[f64], rhs2: &RhsSpec, tol: f64) -> Result<ComparisonReport> {
    let b1 = rhs1.assemble(grid)?;
    let b2 = rhs2.assemble(grid)?;
    if w1.len() != b1.len() || w2.len() != b1.len() {
        return Err(Error::DimensionMismatch {
            expected: b1.len(),
            got: w1.len().min(w2.len()),
        });
    }
    let ordered = b1.iter().zip(&b2).all(|(a, b)| a <= b);
    let max_violation = w1.iter().zip(w2).map(|(a, b)| (a - b).max(0.0)).fold(0.0, f64::max);
    let scale = par::max_abs(w1).max(par::max_abs(w2)).max(1.0);
    let allowance = tol * scale;
    Ok(ComparisonReport {
        ordered,
        max_violation,
        allowance,
        holds: !ordered || max_violation <= allowance,
    })
}
