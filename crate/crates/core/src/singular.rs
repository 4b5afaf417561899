//! Approximate singular problems
//! `M u = (T_n(f) + h_n) / (|u| + 1/n)^delta + g_n`, the positivity barrier
//! and the outer sweep over `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::grid::Grid;
use crate::linear::{pcg, DEFAULT_TOL};
use crate::measure::{regularize, ApproxDatum, Bump, MeasureData, Mollifier};
use crate::operator::{LinearOperator, OperatorPair, ShiftedOperator};
use crate::par::{self, max_abs};
use crate::truncation::{truncate, Level};

/// Default probe subdomains: concentric shrinkings of the domain.
pub const DEFAULT_PROBES: [f64; 2] = [0.5, 0.75];
const MIN_DAMPING: f64 = 1.0 / 1024.0;

/// One regularized problem on a fixed grid.
#[derive(Clone, Debug)]
pub struct ApproxProblem<'a> {
    pub grid: &'a Grid,
    pub op: &'a OperatorPair,
    /// Coefficient of the singular term.
    pub weight: Vec<f64>,
    pub source: Vec<f64>,
    pub delta: Vec<f64>,
    /// Shift in the denominator, `1/n` for the approximate problems.
    pub offset: f64,
    pub n: usize,
}

impl<'a> ApproxProblem<'a> {
    pub fn new(grid: &'a Grid, op: &'a OperatorPair, datum: &ApproxDatum, delta: &[f64]) -> Result<ApproxProblem<'a>> {
        let p = ApproxProblem {
            grid,
            op,
            weight: datum.singular_weight(),
            source: datum.g_n.clone(),
            delta: delta.to_vec(),
            offset: 1.0 / datum.n as f64,
            n: datum.n,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let dof = self.grid.dof();
        for (name, v) in [("weight", &self.weight), ("source", &self.source), ("delta", &self.delta)] {
            if v.len() != dof {
                return Err(Error::DimensionMismatch { expected: dof, got: v.len() });
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative")));
            }
        }
        if self.op.dim() != dof {
            return Err(Error::DimensionMismatch {
                expected: dof,
                got: self.op.dim(),
            });
        }
        if !(self.offset > 0.0) {
            return Err(Error::InvalidParameter("denominator offset must be positive".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_trivial(&self) -> bool {
        self.weight.iter().all(|&v| v == 0.0) && self.source.iter().all(|&v| v == 0.0)
    }

    /// Right-hand side of the linear problem frozen at `v`.
    pub fn frozen_rhs(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|i| self.weight[i] / (v[i].abs() + self.offset).powf(self.delta[i]) + self.source[i])
            .collect()
    }

    /// Upper bound `offset^-delta_max * max weight + max source` on the frozen
    /// right-hand side.
    pub fn rhs_bound(&self) -> f64 {
        let dmax = self.delta.iter().cloned().fold(0.0, f64::max);
        self.offset.powf(-dmax) * max_abs(&self.weight) + max_abs(&self.source)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Damped iteration of the frozen-coefficient map.
    #[default]
    Picard,
    /// Newton iteration; monotone from below for this nonlinearity.
    Newton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointOptions {
    pub method: Method,
    pub damping: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            method: Method::Picard,
            damping: 0.7,
            inner_tol: DEFAULT_TOL,
            outer_tol: 1e-8,
            max_iterations: 500,
        }
    }
}

impl FixedPointOptions {
    pub fn newton() -> Self {
        FixedPointOptions {
            method: Method::Newton,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping {} outside (0, 1]", self.damping)));
        }
        for (name, t) in [("inner", self.inner_tol), ("outer", self.outer_tol)] {
            if !(t > 1e-14 && t < 1e-2) {
                return Err(Error::InvalidParameter(format!("{name} tolerance {t:e} outside (1e-14, 1e-2)")));
            }
        }
        if self.inner_tol >= 1e-4 {
            return Err(Error::InvalidParameter("inner tolerance must be below 1e-4".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Starting point of the outer iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Init {
    /// `u0 = Theta(0)`.
    #[default]
    ThetaOfZero,
    Constant(f64),
    Given(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub u: Vec<f64>,
    pub iterations: usize,
    /// Last relative step `|u_{k+1} - u_k|_inf / |u_k|_inf`.
    pub last_step: f64,
    /// Damping in force at exit (Picard only).
    pub damping: f64,
    pub linear_iterations: usize,
    /// Largest iterate norm seen; the iteration is not confined to a ball,
    /// only monitored.
    pub max_norm: f64,
}

/// `Theta v`: solve `M w = weight / (|v| + offset)^delta + source`.
pub fn theta_map(prob: &ApproxProblem, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    theta_warm(prob, v, None, tol).map(|(w, _)| w)
}

fn theta_warm(prob: &ApproxProblem, v: &[f64], guess: Option<&[f64]>, tol: f64) -> Result<(Vec<f64>, usize)> {
    if v.len() != prob.grid.dof() {
        return Err(Error::DimensionMismatch {
            expected: prob.grid.dof(),
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("Theta applied to a non-finite grid function".into()));
    }
    let b = prob.frozen_rhs(v);
    let res = pcg(prob.op, &b, guess, tol)?;
    Ok((res.w, res.iterations))
}

fn rel_step(new: &[f64], old: &[f64]) -> f64 {
    let diff = new.iter().zip(old).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        return 0.0;
    }
    diff / max_abs(old).max(f64::MIN_POSITIVE)
}

/// Solve the approximate problem by the configured outer iteration.
pub fn solve_approximate(prob: &ApproxProblem, opts: &FixedPointOptions, init: &Init) -> Result<FixedPointResult> {
    opts.validate()?;
    prob.validate()?;
    let dof = prob.grid.dof();
    let mut linear_iterations = 0;
    let mut u = match init {
        Init::ThetaOfZero => {
            let (w, it) = theta_warm(prob, &vec![0.0; dof], None, opts.inner_tol)?;
            linear_iterations += it;
            w
        }
        Init::Constant(c) => vec![*c; dof],
        Init::Given(v) => {
            if v.len() != dof {
                return Err(Error::DimensionMismatch { expected: dof, got: v.len() });
            }
            v.clone()
        }
    };
    if prob.is_trivial() {
        return Ok(FixedPointResult {
            u: vec![0.0; dof],
            iterations: 1,
            last_step: 0.0,
            damping: opts.damping,
            linear_iterations,
            max_norm: 0.0,
        });
    }
    match opts.method {
        Method::Picard => picard(prob, opts, u, linear_iterations),
        Method::Newton => {
            u.iter_mut().for_each(|v| *v = v.max(0.0));
            newton(prob, opts, u, linear_iterations)
        }
    }
}

fn picard(prob: &ApproxProblem, opts: &FixedPointOptions, mut u: Vec<f64>, mut linear_iterations: usize) -> Result<FixedPointResult> {
    let mut theta = opts.damping;
    let mut guess: Option<Vec<f64>> = None;
    let mut prev_residual = f64::INFINITY;
    let mut last_step = f64::INFINITY;
    let mut max_norm = max_abs(&u);
    for k in 1..=opts.max_iterations {
        let (t, it) = theta_warm(prob, &u, guess.as_deref(), opts.inner_tol)?;
        linear_iterations += it;
        // Undamped residual |Theta u - u| bounds the damped step from above.
        let residual = rel_step(&t, &u);
        if residual > prev_residual && theta > MIN_DAMPING {
            theta = (theta * 0.5).max(MIN_DAMPING);
            log::debug!("fixed-point residual grew at iteration {k}; damping lowered to {theta}");
        }
        prev_residual = residual;
        let next: Vec<f64> = u.iter().zip(&t).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
        last_step = rel_step(&next, &u);
        max_norm = max_norm.max(max_abs(&next));
        guess = Some(t);
        u = next;
        if residual <= opts.outer_tol {
            return Ok(FixedPointResult {
                u,
                iterations: k,
                last_step,
                damping: theta,
                linear_iterations,
                max_norm,
            });
        }
    }
    Err(Error::FixedPointNonConvergence {
        iterations: opts.max_iterations,
        last_step,
        damping: theta,
    })
}

/// Newton on `M u - weight (u + c)^-delta - source = 0`. The Jacobian is
/// `M + diag(delta weight (u + c)^(-delta-1))`, still an M-matrix, and the
/// nonlinearity is convex, so from any nonnegative start the first step lands
/// below the solution and later steps increase monotonically.
fn newton(prob: &ApproxProblem, opts: &FixedPointOptions, mut u: Vec<f64>, mut linear_iterations: usize) -> Result<FixedPointResult> {
    let dof = u.len();
    let mut last_step = f64::INFINITY;
    let mut max_norm = max_abs(&u);
    let mut shift = vec![0.0; dof];
    let mut b = vec![0.0; dof];
    for k in 1..=opts.max_iterations {
        for i in 0..dof {
            let s = u[i] + prob.offset;
            let phi = prob.weight[i] * s.powf(-prob.delta[i]);
            shift[i] = prob.delta[i] * phi / s;
            b[i] = phi + shift[i] * u[i] + prob.source[i];
        }
        let jac = ShiftedOperator { base: prob.op, shift: &shift };
        let res = pcg(&jac, &b, Some(&u), opts.inner_tol)?;
        linear_iterations += res.iterations;
        let next: Vec<f64> = res.w.into_iter().map(|v| v.max(0.0)).collect();
        last_step = rel_step(&next, &u);
        max_norm = max_norm.max(max_abs(&next));
        u = next;
        if last_step <= opts.outer_tol {
            return Ok(FixedPointResult {
                u,
                iterations: k,
                last_step,
                damping: 1.0,
                linear_iterations,
                max_norm,
            });
        }
    }
    Err(Error::FixedPointNonConvergence {
        iterations: opts.max_iterations,
        last_step,
        damping: 1.0,
    })
}

/// Relative fixed-point residual `|Theta u - u|_inf / |u|_inf`.
pub fn fixed_point_residual(prob: &ApproxProblem, u: &[f64], tol: f64) -> Result<f64> {
    let t = theta_map(prob, u, tol)?;
    Ok(rel_step(&t, u))
}

/// Solve from `Theta(0)` and from the constant 1 and return the max-norm
/// distance between the two limits.
pub fn initialization_gap(prob: &ApproxProblem, opts: &FixedPointOptions) -> Result<f64> {
    let a = solve_approximate(prob, opts, &Init::ThetaOfZero)?;
    let b = solve_approximate(prob, opts, &Init::Constant(1.0))?;
    Ok(a.u.iter().zip(&b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeMinimum {
    pub scale: f64,
    /// Minimum of the barrier over the probe.
    pub barrier_min: f64,
    /// Minimum over the sweep of the minimum of `u_n` over the probe.
    pub sweep_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub w: Vec<f64>,
    /// Zero datum: the barrier vanishes and gives no positivity.
    pub degenerate: bool,
    /// `(probe scale, min of w over the probe)`.
    pub probe_minima: Vec<(f64, f64)>,
    pub result: Option<FixedPointResult>,
}

fn probe_min(grid: &Grid, u: &[f64], scale: f64) -> f64 {
    grid.probe_mask(scale)
        .iter()
        .zip(u)
        .filter(|(m, _)| **m)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min)
}

/// Solve `M w = T_1(f) / (w + 1)^delta`.
pub fn barrier(grid: &Grid, op: &OperatorPair, f: &[f64], delta: &[f64], opts: &FixedPointOptions, probes: &[f64]) -> Result<Barrier> {
    let one = Level::new(1.0)?;
    let weight: Vec<f64> = f.iter().map(|&v| truncate(one, v)).collect();
    let prob = ApproxProblem {
        grid,
        op,
        weight,
        source: vec![0.0; grid.dof()],
        delta: delta.to_vec(),
        offset: 1.0,
        n: 1,
    };
    prob.validate()?;
    if prob.is_trivial() {
        return Ok(Barrier {
            w: vec![0.0; grid.dof()],
            degenerate: true,
            probe_minima: probes.iter().map(|&s| (s, 0.0)).collect(),
            result: None,
        });
    }
    let res = solve_approximate(&prob, opts, &Init::ThetaOfZero)?;
    let probe_minima = probes.iter().map(|&s| (s, probe_min(grid, &res.u, s))).collect();
    Ok(Barrier {
        w: res.u.clone(),
        degenerate: false,
        probe_minima,
        result: Some(res),
    })
}

/// Problem data shared by every `n` of a sweep.
#[derive(Clone, Debug)]
pub struct ProblemFamily<'a> {
    pub grid: &'a Grid,
    pub op: &'a OperatorPair,
    /// Measure in the singular term.
    pub nu: MeasureData,
    /// Source measure.
    pub mu: MeasureData,
    pub delta: ExponentField,
    pub mollifier: Mollifier,
    pub probes: Vec<f64>,
    /// Cauchy-gap threshold for declaring numerical convergence.
    pub gap_threshold: f64,
    pub warm_start: bool,
}

impl<'a> ProblemFamily<'a> {
    pub fn new(grid: &'a Grid, op: &'a OperatorPair, nu: MeasureData, mu: MeasureData, delta: ExponentField) -> Self {
        ProblemFamily {
            grid,
            op,
            nu,
            mu,
            delta,
            mollifier: Mollifier::default(),
            probes: DEFAULT_PROBES.to_vec(),
            gap_threshold: 1e-3,
            warm_start: true,
        }
    }

    pub fn datum(&self, n: usize) -> Result<ApproxDatum> {
        regularize(&self.nu, &self.mu, n, self.grid, &self.mollifier)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub n: usize,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub last_step: f64,
    pub damping: f64,
    pub max_norm: f64,
    pub linf: f64,
    pub l1: f64,
    pub energy: f64,
    pub min: f64,
    /// `min (u_n - w)`, negative when the barrier is undercut.
    pub barrier_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceFailure {
    pub n: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub n_list: Vec<usize>,
    /// `(n, u_n)` for every solved `n`.
    pub solutions: Vec<(usize, Vec<f64>)>,
    pub barrier: Barrier,
    pub steps: Vec<StepSummary>,
    /// `|u_{n_{i+1}} - u_{n_i}|_{L^1}` between consecutive solved entries.
    pub gaps: Vec<f64>,
    pub probe_minima: Vec<ProbeMinimum>,
    /// Two consecutive gaps below the threshold.
    pub numerically_converged: bool,
    pub failure: Option<SequenceFailure>,
}

impl SolveReport {
    pub fn complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn last(&self) -> Option<&Vec<f64>> {
        self.solutions.last().map(|(_, u)| u)
    }
}

/// Solve every `n` in `n_list`. A failing `n` stops the sweep; the report
/// then holds everything solved before it.
pub fn solve_sequence(family: &ProblemFamily, n_list: &[usize], opts: &FixedPointOptions) -> Result<SolveReport> {
    opts.validate()?;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::InvalidParameter("n_list must be nonempty, positive and strictly increasing".into()));
    }
    let grid = family.grid;
    let delta = family.delta.nodal(grid)?;
    let f = family.nu.density_values(grid)?;
    let cell = grid.cell_measure();
    let mut report = SolveReport {
        n_list: n_list.to_vec(),
        solutions: Vec::new(),
        barrier: Barrier {
            w: Vec::new(),
            degenerate: true,
            probe_minima: Vec::new(),
            result: None,
        },
        steps: Vec::new(),
        gaps: Vec::new(),
        probe_minima: Vec::new(),
        numerically_converged: false,
        failure: None,
    };
    match barrier(grid, family.op, &f, &delta, opts, &family.probes) {
        Ok(b) => report.barrier = b,
        Err(e) => {
            report.failure = Some(SequenceFailure {
                n: 0,
                message: format!("barrier: {e}"),
            });
            return Ok(report);
        }
    }
    let mut prev: Option<Vec<f64>> = None;
    for &n in n_list {
        let attempt = family.datum(n).and_then(|datum| {
            let prob = ApproxProblem::new(grid, family.op, &datum, &delta)?;
            let init = match (&prev, family.warm_start) {
                (Some(u), true) => Init::Given(u.clone()),
                _ => Init::ThetaOfZero,
            };
            solve_approximate(&prob, opts, &init)
        });
        let res = match attempt {
            Ok(r) => r,
            Err(e) => {
                report.failure = Some(SequenceFailure { n, message: e.to_string() });
                break;
            }
        };
        let u = res.u;
        if let Some(p) = &prev {
            report.gaps.push(u.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() * cell);
        }
        let margin = u.iter().zip(&report.barrier.w).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
        report.steps.push(StepSummary {
            n,
            iterations: res.iterations,
            linear_iterations: res.linear_iterations,
            last_step: res.last_step,
            damping: res.damping,
            max_norm: res.max_norm,
            linf: max_abs(&u),
            l1: u.iter().map(|v| v.abs()).sum::<f64>() * cell,
            energy: family.op.energy(&u),
            min: u.iter().cloned().fold(f64::INFINITY, f64::min),
            barrier_margin: margin,
        });
        prev = Some(u.clone());
        report.solutions.push((n, u));
    }
    report.numerically_converged = report.gaps.windows(2).any(|w| w[0] < family.gap_threshold && w[1] < family.gap_threshold);
    report.probe_minima = family
        .probes
        .iter()
        .zip(&report.barrier.probe_minima)
        .map(|(&scale, &(_, bmin))| ProbeMinimum {
            scale,
            barrier_min: bmin,
            sweep_min: report
                .solutions
                .iter()
                .map(|(_, u)| probe_min(grid, u, scale))
                .fold(f64::INFINITY, f64::min),
        })
        .collect();
    Ok(report)
}

/// Data of the weak formulation being tested.
#[derive(Clone, Debug)]
pub struct WeakData<'a> {
    pub weight: &'a [f64],
    pub source: &'a [f64],
    pub delta: &'a [f64],
    /// Denominator shift; `1/n` for the `n`-th problem, 0 for the limit.
    pub offset: f64,
}

impl<'a> WeakData<'a> {
    pub fn of(prob: &'a ApproxProblem) -> WeakData<'a> {
        WeakData {
            weight: &prob.weight,
            source: &prob.source,
            delta: &prob.delta,
            offset: prob.offset,
        }
    }
}

/// `max over tests |<M u, phi> - int phi weight / (u + offset)^delta - int phi source|`
/// with grid quadrature. Each test must see `u > 0` on its support.
pub fn weak_residual(grid: &Grid, op: &OperatorPair, u: &[f64], data: &WeakData, tests: &[Bump]) -> Result<f64> {
    let mu = op.apply(u)?;
    let cell = grid.cell_measure();
    let mut worst: f64 = 0.0;
    for (t, bump) in tests.iter().enumerate() {
        let phi = bump.sample(grid);
        if let Some(i) = (0..u.len()).find(|&i| phi[i] > 0.0 && !(u[i] > 0.0)) {
            return Err(Error::Positivity(format!(
                "test {t} sees u = {} at {:?}",
                u[i],
                grid.dof_point(i)
            )));
        }
        let r = par::sum_range(op.parallelism(), u.len(), |i| {
            if phi[i] == 0.0 {
                return 0.0;
            }
            let singular = data.weight[i] / (u[i] + data.offset).powf(data.delta[i]);
            phi[i] * (mu[i] - singular - data.source[i])
        }) * cell;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Magnitude of the data side `max over tests of int phi (weight / u^delta + source)`,
/// for scaling [`weak_residual`].
pub fn weak_data_scale(grid: &Grid, u: &[f64], data: &WeakData, tests: &[Bump]) -> f64 {
    let cell = grid.cell_measure();
    tests
        .iter()
        .map(|b| {
            let phi = b.sample(grid);
            (0..u.len())
                .map(|i| phi[i] * (data.weight[i] / (u[i].max(0.0) + data.offset).powf(data.delta[i]) + data.source[i]))
                .sum::<f64>()
                * cell
        })
        .fold(0.0, f64::max)
}
