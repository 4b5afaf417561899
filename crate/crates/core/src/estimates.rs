//! Discrete norms and the diagnostics behind the uniform a priori bounds:
//! distribution functions, tail fits, level-set energies and the
//! Stampacchia ladder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::sobolev_conjugate;
use crate::grid::Grid;
use crate::operator::dirichlet_energy;
use crate::par::max_abs;
use crate::truncation::{power_truncate_field, truncate_field, Level};

fn in_mask(mask: Option<&[bool]>, i: usize) -> bool {
    mask.map_or(true, |m| m[i])
}

/// `(sum |u_i|^p h^N)^(1/p)` over the mask; `p = inf` gives the max.
pub fn lp_norm(grid: &Grid, u: &[f64], p: f64, mask: Option<&[bool]>) -> f64 {
    assert!(p >= 1.0, "lp_norm needs p >= 1");
    let vals = u.iter().enumerate().filter(|(i, _)| in_mask(mask, *i)).map(|(_, v)| v.abs());
    if p.is_infinite() {
        return vals.fold(0.0, f64::max);
    }
    let cell = grid.cell_measure();
    (vals.map(|v| v.powf(p)).sum::<f64>() * cell).powf(1.0 / p)
}

/// Nodal gradient magnitude. Central differences where both neighbours lie
/// in the mask, one-sided where only one does, zero for isolated nodes and
/// outside the mask.
pub fn gradient_magnitude(grid: &Grid, u: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let h = grid.h();
    let nodes = grid.dof_nodes();
    let value = |l: Option<usize>| -> Option<f64> {
        let k = grid.dof_of(l?)?;
        in_mask(mask, k).then(|| u[k])
    };
    (0..u.len())
        .map(|k| {
            if !in_mask(mask, k) {
                return 0.0;
            }
            let l = nodes[k];
            let mut sq = 0.0;
            for axis in 0..grid.dim() {
                let plus = value(grid.neighbor(l, axis, 1));
                let minus = value(grid.neighbor(l, axis, -1));
                let d = match (plus, minus) {
                    (Some(a), Some(b)) => (a - b) / (2.0 * h),
                    (Some(a), None) => (a - u[k]) / h,
                    (None, Some(b)) => (u[k] - b) / h,
                    (None, None) => 0.0,
                };
                sq += d * d;
            }
            sq.sqrt()
        })
        .collect()
}

/// `|grad_h u|_{L^q(mask)}`.
pub fn sobolev_norm(grid: &Grid, u: &[f64], q: f64, mask: Option<&[bool]>) -> f64 {
    let g = gradient_magnitude(grid, u, mask);
    lp_norm(grid, &g, q, mask)
}

/// `|{ v >= t }|` for nodal values with cell weights.
pub fn distribution(values: &[f64], cell: f64, t: f64) -> f64 {
    values.iter().filter(|&&v| v >= t).count() as f64 * cell
}

/// `|{ u >= k }|`.
pub fn level_measure(grid: &Grid, u: &[f64], k: f64) -> f64 {
    distribution(u, grid.cell_measure(), k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Constant `C` in `lambda(t) ~ C t^-p`.
    pub c: f64,
    pub p_hat: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
    pub window: [f64; 2],
}

impl TailFit {
    /// One-sided comparison: the tail decays at least as fast as `theory - slack`.
    pub fn meets(&self, theory: f64, slack: f64) -> bool {
        self.p_hat >= theory - slack
    }
}

/// Least-squares line `y = a + b x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Fit `lambda = C t^-p` through the positive samples.
pub fn fit_power_law(ts: &[f64], lambdas: &[f64]) -> Result<TailFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(lambdas)
        .filter(|(t, l)| **t > 0.0 && **l > 0.0)
        .map(|(t, l)| (t.ln(), l.ln()))
        .unzip();
    if xs.len() < 5 {
        return Err(Error::EmptyWindow(format!("{} usable points, need at least 5", xs.len())));
    }
    let (a, b) = fit_line(&xs, &ys);
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    Ok(TailFit {
        c: a.exp(),
        p_hat: -b,
        residual,
        points: xs.len(),
        window: [ts.iter().cloned().fold(f64::INFINITY, f64::min), ts.iter().cloned().fold(0.0, f64::max)],
    })
}

/// `samples` log-spaced points in `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..samples)
        .map(|i| (a + (b - a) * i as f64 / (samples - 1) as f64).exp())
        .collect()
}

/// Fit the distribution function of `values` over `window`, sampled at
/// `samples` log-spaced levels.
pub fn marcinkiewicz_fit(values: &[f64], cell: f64, window: [f64; 2], samples: usize) -> Result<TailFit> {
    let top = values.iter().cloned().fold(0.0, f64::max);
    let [lo, hi] = window;
    if !(lo > 0.0 && lo < hi && hi <= top) {
        return Err(Error::EmptyWindow(format!(
            "window [{lo:e}, {hi:e}] is not inside the observed range (0, {top:e}]"
        )));
    }
    let ts = log_space(lo, hi, samples.max(5));
    let lambdas: Vec<f64> = ts.iter().map(|&t| distribution(values, cell, t)).collect();
    let mut fit = fit_power_law(&ts, &lambdas)?;
    fit.window = window;
    Ok(fit)
}

/// Level window `[t_lo, t_hi]` on which the superlevel sets of `values`
/// have area between `areas[0]` and `areas[1]`.
pub fn area_window(values: &[f64], cell: f64, areas: [f64; 2]) -> Result<[f64; 2]> {
    let mut sorted: Vec<f64> = values.iter().cloned().filter(|v| *v > 0.0).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let rank = |a: f64| ((a / cell).ceil() as usize).max(1);
    let (r_hi, r_lo) = (rank(areas[0]), rank(areas[1]));
    if !(areas[0] > 0.0 && areas[0] < areas[1]) || r_lo > sorted.len() || r_hi >= r_lo {
        return Err(Error::EmptyWindow(format!(
            "area window {areas:?} needs between {r_hi} and {r_lo} positive nodes, have {}",
            sorted.len()
        )));
    }
    Ok([sorted[r_lo - 1], sorted[r_hi - 1]])
}

/// Critical weak-Lebesgue exponent `N/(N-1)` of the gradient; infinite in 1D.
pub fn gradient_tail_exponent(n_dim: usize) -> f64 {
    if n_dim <= 1 {
        f64::INFINITY
    } else {
        n_dim as f64 / (n_dim as f64 - 1.0)
    }
}

/// Smallest `C` with `|{v >= t}| <= C t^-p` for every `t`.
pub fn weak_constant(values: &[f64], cell: f64, p: f64) -> f64 {
    let mut sorted: Vec<f64> = values.iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted
        .iter()
        .enumerate()
        .map(|(j, v)| (j + 1) as f64 * cell * v.powf(p))
        .fold(0.0, f64::max)
}

/// `|v|_{L^r}^r <= area^(1 - r/p) C^(r/p) p/(p - r)` for `r < p` when
/// `|{|v| >= t}| <= min(area, C t^-p)`.
pub fn weak_to_strong_bound(c: f64, p: f64, r: f64, area: f64) -> f64 {
    (area.powf(1.0 - r / p) * c.powf(r / p) * p / (p - r)).powf(1.0 / r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCheck {
    pub r: f64,
    pub norm: f64,
    pub bound: f64,
    pub pass: bool,
}

/// The weak-`L^p` bound with exponent `p_hat` implies `L^{p_hat - eta}`
/// membership; compare the discrete norm with the analytic bound times 1.2.
pub fn embedding_check(grid: &Grid, values: &[f64], p_hat: f64, eta: f64) -> EmbeddingCheck {
    let cell = grid.cell_measure();
    let r = (p_hat - eta).max(1.0);
    let area = grid.discrete_measure();
    let c = weak_constant(values, cell, p_hat);
    let norm = lp_norm(grid, values, r, None);
    let bound = 1.2 * weak_to_strong_bound(c, p_hat, r, area);
    EmbeddingCheck {
        r,
        norm,
        bound,
        pass: norm.is_finite() && norm <= bound,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEnergy {
    pub levels: Vec<f64>,
    /// `E(l) = int |grad_h T_l(u)|^2`.
    pub energies: Vec<f64>,
    pub intercept: f64,
    pub slope: f64,
}

impl LevelEnergy {
    /// `E(l)/(l+1)` per level.
    pub fn ratios(&self) -> Vec<f64> {
        self.levels.iter().zip(&self.energies).map(|(l, e)| e / (l + 1.0)).collect()
    }
}

pub fn level_energy_growth(grid: &Grid, u: &[f64], levels: &[f64]) -> Result<LevelEnergy> {
    if levels.len() < 4 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("level list must be increasing with at least 4 values".into()));
    }
    let energies = levels
        .iter()
        .map(|&l| Ok(dirichlet_energy(grid, &truncate_field(Level::new(l)?, u))))
        .collect::<Result<Vec<f64>>>()?;
    let (intercept, slope) = fit_line(levels, &energies);
    Ok(LevelEnergy {
        levels: levels.to_vec(),
        energies,
        intercept,
        slope,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadCheck {
    pub median: f64,
    pub max: f64,
    pub last: f64,
    /// `max / median`.
    pub ratio: f64,
    pub factor: f64,
    pub pass: bool,
}

/// Uniform-in-`n` boundedness, read as `max <= factor * median` over the
/// sweep. All-zero sweeps pass trivially.
pub fn spread_check(values: &[f64], factor: f64) -> SpreadCheck {
    let med = median(values);
    let max = values.iter().cloned().fold(0.0, f64::max);
    let last = values.last().copied().unwrap_or(0.0);
    let finite = values.iter().all(|v| v.is_finite() && *v >= 0.0);
    let ratio = if max == 0.0 { 1.0 } else { max / med };
    SpreadCheck {
        median: med,
        max,
        last,
        ratio,
        factor,
        pass: finite && !values.is_empty() && ratio <= factor,
    }
}

/// Exponent used in place of `2*` in the level recursion: `2N/(N-2)` for
/// `N >= 3`; in 2D any finite exponent is admissible and
/// `max(6, 3m/(m-1))` keeps the recursion exponent at least 2; in 1D the
/// energy space embeds in `L^inf` directly.
pub fn ladder_sobolev_exponent(n_dim: usize, m: f64) -> f64 {
    match n_dim {
        1 => f64::INFINITY,
        2 => 6.0_f64.max(3.0 * m / (m - 1.0)),
        _ => sobolev_conjugate(n_dim),
    }
}

/// `alpha = p (1 - 1/m - 1/p)` with `p` from [`ladder_sobolev_exponent`].
pub fn stampacchia_alpha(n_dim: usize, m: f64) -> Result<f64> {
    if !(m > n_dim as f64 / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "level recursion needs m > N/2, got m = {m}, N = {n_dim}"
        )));
    }
    let p = ladder_sobolev_exponent(n_dim, m);
    if p.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(p * (1.0 - 1.0 / m - 1.0 / p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StampacchiaReport {
    pub alpha_theory: f64,
    /// Slope of `log|S(k_{i+1})|` against `log|S(k_i)|`; infinite when a
    /// nonempty level is followed by an empty one before two pairs exist.
    pub alpha_fit: f64,
    pub levels: Vec<f64>,
    pub measures: Vec<f64>,
    pub linf: f64,
    /// Every level set is empty.
    pub trivial: bool,
    pub pass: bool,
}

/// Level-set ladder on equally spaced levels, with strict superlevel sets
/// `{w > k}`.
pub fn stampacchia_certificate(grid: &Grid, w: &[f64], m: f64, levels: &[f64]) -> Result<StampacchiaReport> {
    let alpha_theory = stampacchia_alpha(grid.dim(), m)?;
    if levels.len() < 3 {
        return Err(Error::InvalidParameter("level ladder needs at least 3 levels".into()));
    }
    let step = levels[1] - levels[0];
    if !(step > 0.0) || levels.windows(2).any(|p| ((p[1] - p[0]) - step).abs() > 1e-9 * step.max(1.0)) {
        return Err(Error::InvalidParameter("level ladder must be equally spaced and increasing".into()));
    }
    let cell = grid.cell_measure();
    let measures: Vec<f64> = levels.iter().map(|&k| w.iter().filter(|&&v| v > k).count() as f64 * cell).collect();
    let linf = max_abs(w);
    let trivial = measures.iter().all(|&s| s == 0.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = measures
        .windows(2)
        .filter(|p| p[0] > 0.0 && p[1] > 0.0)
        .map(|p| (p[0].ln(), p[1].ln()))
        .unzip();
    let drops_to_empty = measures.windows(2).any(|p| p[0] > 0.0 && p[1] == 0.0);
    let alpha_fit = if trivial {
        f64::NAN
    } else if xs.len() >= 2 && xs.iter().any(|x| (x - xs[0]).abs() > 0.0) {
        fit_line(&xs, &ys).1
    } else if drops_to_empty {
        f64::INFINITY
    } else {
        f64::NAN
    };
    Ok(StampacchiaReport {
        alpha_theory,
        alpha_fit,
        levels: levels.to_vec(),
        measures,
        linf,
        trivial,
        pass: trivial || alpha_fit > 1.0,
    })
}

/// Norms computed for each `u_n` of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormConfig {
    #[serde(with = "crate::serde_ext::list")]
    pub p_list: Vec<f64>,
    pub q_list: Vec<f64>,
    #[serde(with = "crate::serde_ext::list")]
    pub k_list: Vec<f64>,
    /// Power applied to `T_k(u)` in the energy column; `(delta_* + 1)/2`
    /// when omitted. An infinite `k` leaves `u` untruncated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    pub probes: Vec<f64>,
    /// Levels at which gradient distribution functions are recorded.
    pub t_list: Vec<f64>,
    /// Levels at which superlevel-set measures are recorded.
    pub s_list: Vec<f64>,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            p_list: vec![1.0, 2.0, f64::INFINITY],
            q_list: vec![1.2, 2.0],
            k_list: vec![1.0, 2.0, 4.0, 8.0],
            power: None,
            probes: crate::singular::DEFAULT_PROBES.to_vec(),
            t_list: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            s_list: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub n: usize,
    /// `(p, |u|_{L^p})`.
    pub lp: Vec<(f64, f64)>,
    /// `(q, |grad u|_{L^q})` over the whole domain.
    pub grad: Vec<(f64, f64)>,
    /// `(probe scale, q, |grad u|_{L^q(probe)})`.
    pub grad_local: Vec<(f64, f64, f64)>,
    /// `(k, int |grad T_k(u)^power|^2)`.
    pub power_energy: Vec<(f64, f64)>,
    pub grad_distribution: Vec<(f64, f64)>,
    pub level_measures: Vec<(f64, f64)>,
}

pub fn norm_row(grid: &Grid, n: usize, u: &[f64], cfg: &NormConfig) -> Result<NormRow> {
    let grad_mag = gradient_magnitude(grid, u, None);
    let cell = grid.cell_measure();
    let mut grad_local = Vec::new();
    for &s in &cfg.probes {
        let mask = grid.probe_mask(s);
        let g = gradient_magnitude(grid, u, Some(&mask));
        for &q in &cfg.q_list {
            grad_local.push((s, q, lp_norm(grid, &g, q, Some(&mask))));
        }
    }
    let power_energy = cfg
        .k_list
        .iter()
        .map(|&k| {
            let v = power_truncate_field(Level::new(k)?, cfg.power.unwrap_or(1.0), &u.iter().map(|x| x.max(0.0)).collect::<Vec<_>>())?;
            Ok((k, dirichlet_energy(grid, &v)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormRow {
        n,
        lp: cfg.p_list.iter().map(|&p| (p, lp_norm(grid, u, p, None))).collect(),
        grad: cfg.q_list.iter().map(|&q| (q, lp_norm(grid, &grad_mag, q, None))).collect(),
        grad_local,
        power_energy,
        grad_distribution: cfg.t_list.iter().map(|&t| (t, distribution(&grad_mag, cell, t))).collect(),
        level_measures: cfg.s_list.iter().map(|&k| (k, level_measure(grid, u, k))).collect(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormTable {
    pub rows: Vec<NormRow>,
}

impl NormTable {
    pub fn compute(grid: &Grid, sweep: &[(usize, Vec<f64>)], cfg: &NormConfig) -> Result<NormTable> {
        Ok(NormTable {
            rows: sweep.iter().map(|(n, u)| norm_row(grid, *n, u, cfg)).collect::<Result<_>>()?,
        })
    }

    /// Per-`n` series of a column selected by `pick`.
    pub fn series<F: Fn(&NormRow) -> Option<f64>>(&self, what: &str, pick: F) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| pick(r).ok_or_else(|| Error::IncompleteTable(format!("{what} at n = {}", r.n))))
            .collect()
    }
}

pub fn lookup(pairs: &[(f64, f64)], key: f64) -> Option<f64> {
    pairs
        .iter()
        .find(|(k, _)| if key.is_finite() { (k - key).abs() <= 1e-12 * key.abs().max(1.0) } else { *k == key })
        .map(|(_, v)| *v)
}
