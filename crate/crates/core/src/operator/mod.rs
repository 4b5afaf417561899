//! Discrete mixed operator `-div(A grad u) + P.V. int (u(x) - u(y)) K dy`
//! acting on grid functions that vanish outside the domain.

pub mod convolution;
pub mod kernel;
pub mod local;
pub mod nonlocal;
pub mod tail;

use serde::{Deserialize, Serialize};

pub use kernel::{KernelPreset, KernelSpec};
pub use local::{CoefficientPreset, CoefficientSpec, LocalOperator};
pub use nonlocal::{NonlocalOperator, Strategy};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par::{self, Parallelism};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub parallelism: Parallelism,
}

/// Symmetric positive definite operator on the degrees of freedom.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
    fn parallelism(&self) -> Parallelism {
        Parallelism::default()
    }
}

#[derive(Debug)]
pub struct OperatorPair {
    dof: usize,
    cell: f64,
    local: Option<LocalOperator>,
    nonlocal: Option<NonlocalOperator>,
    diag: Vec<f64>,
    par: Parallelism,
}

impl OperatorPair {
    pub fn assemble(grid: &Grid, coef: Option<&CoefficientSpec>, kernel: Option<&KernelSpec>, opts: AssemblyOptions) -> Result<OperatorPair> {
        if coef.is_none() && kernel.is_none() {
            return Err(Error::InvalidParameter("operator needs a local part, a nonlocal part, or both".into()));
        }
        let par = opts.parallelism;
        let local = coef.map(|c| LocalOperator::assemble(grid, c, par)).transpose()?;
        let nonlocal = kernel
            .map(|k| NonlocalOperator::assemble(grid, k, opts.strategy, par))
            .transpose()?;
        let mut diag = vec![0.0; grid.dof()];
        if let Some(l) = &local {
            diag.iter_mut().zip(l.diagonal()).for_each(|(d, v)| *d += v);
        }
        if let Some(n) = &nonlocal {
            diag.iter_mut().zip(n.diagonal()).for_each(|(d, v)| *d += v);
        }
        Ok(OperatorPair {
            dof: grid.dof(),
            cell: grid.cell_measure(),
            local,
            nonlocal,
            diag,
            par,
        })
    }

    pub fn local(&self) -> Option<&LocalOperator> {
        self.local.as_ref()
    }

    pub fn nonlocal(&self) -> Option<&NonlocalOperator> {
        self.nonlocal.as_ref()
    }

    pub fn set_parallelism(&mut self, par: Parallelism) {
        self.par = par;
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dof {
            return Err(Error::DimensionMismatch {
                expected: self.dof,
                got: u.len(),
            });
        }
        let mut y = vec![0.0; self.dof];
        self.apply_into(u, &mut y);
        Ok(y)
    }

    /// `<M u, u>` with the cell measure as quadrature weight.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let y = self.apply(u).expect("length checked by caller");
        par::dot(self.par, &y, u) * self.cell
    }

    /// Nonlocal part of the energy alone.
    pub fn nonlocal_energy(&self, u: &[f64]) -> f64 {
        match &self.nonlocal {
            None => 0.0,
            Some(n) => {
                let mut y = vec![0.0; self.dof];
                n.apply_into(self.par, u, &mut y);
                par::dot(self.par, &y, u) * self.cell
            }
        }
    }
}

impl LinearOperator for OperatorPair {
    fn dim(&self) -> usize {
        self.dof
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match (&self.local, &self.nonlocal) {
            (Some(l), Some(n)) => {
                n.apply_into(self.par, x, y);
                l.apply_add(self.par, x, y);
            }
            (Some(l), None) => l.apply_into(self.par, x, y),
            (None, Some(n)) => n.apply_into(self.par, x, y),
            (None, None) => y.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }

    fn parallelism(&self) -> Parallelism {
        self.par
    }
}

/// `M + diag(shift)`.
pub struct ShiftedOperator<'a, M: LinearOperator> {
    pub base: &'a M,
    pub shift: &'a [f64],
}

impl<M: LinearOperator> LinearOperator for ShiftedOperator<'_, M> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply_into(x, y);
        for ((out, s), v) in y.iter_mut().zip(self.shift).zip(x) {
            *out += s * v;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.base.diagonal().iter().zip(self.shift).map(|(d, s)| d + s).collect()
    }

    fn parallelism(&self) -> Parallelism {
        self.base.parallelism()
    }
}

/// Face-based Dirichlet energy `sum over faces (u_q - u_p)^2 h^(N-2)`, with
/// `u = 0` outside the domain.
pub fn dirichlet_energy(grid: &Grid, u: &[f64]) -> f64 {
    let ext = grid.extend(u);
    let scale = grid.h().powi(grid.dim() as i32 - 2);
    let mut total = 0.0;
    for l in 0..grid.lattice_len() {
        for axis in 0..grid.dim() {
            if let Some(q) = grid.neighbor(l, axis, 1) {
                let d = ext[q] - ext[l];
                total += d * d;
            }
        }
    }
    total * scale
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub h: f64,
    /// Gagliardo form over Dirichlet energy per sample; `None` if skipped.
    pub ratios: Vec<Option<f64>>,
    pub constant: f64,
    pub skipped: usize,
}

/// Empirical constant in `[u]_s^2 <= C |grad u|_2^2` over the samples.
pub fn seminorm_domination_check(grid: &Grid, kernel: &KernelSpec, samples: &[Vec<f64>], par: Parallelism) -> Result<SeminormReport> {
    let op = OperatorPair::assemble(
        grid,
        None,
        Some(kernel),
        AssemblyOptions {
            strategy: Strategy::Auto,
            parallelism: par,
        },
    )?;
    let mut ratios = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    let mut constant: f64 = 0.0;
    for u in samples {
        let d = dirichlet_energy(grid, u);
        if d == 0.0 {
            skipped += 1;
            ratios.push(None);
            continue;
        }
        let r = op.energy(u) / d;
        if !r.is_finite() {
            return Err(Error::InvalidParameter("non-finite seminorm ratio".into()));
        }
        constant = constant.max(r);
        ratios.push(Some(r));
    }
    Ok(SeminormReport {
        h: grid.h(),
        ratios,
        constant,
        skipped,
    })
}

/// True when successive constants along a refinement differ by at most 20%.
pub fn seminorm_refinement_stable(reports: &[SeminormReport]) -> bool {
    reports.windows(2).all(|w| {
        let (a, b) = (w[0].constant, w[1].constant);
        a > 0.0 && b > 0.0 && (a / b).max(b / a) <= 1.2
    })
}
