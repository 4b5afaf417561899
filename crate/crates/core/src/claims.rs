//! Claim selectors and the conformance rows they produce.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimates::{
    area_window, embedding_check, gradient_magnitude, gradient_tail_exponent, level_energy_growth, lookup, lp_norm, marcinkiewicz_fit, median,
    spread_check, stampacchia_certificate, NormConfig, NormRow, NormTable,
};
use crate::exponent::{compute_p_condition, regularity_exponents, Regime, Target};
use crate::grid::Grid;
use crate::linear::{solve_linear, RhsSpec};
use crate::measure::{default_tests, regularize};
use crate::operator::OperatorPair;
use crate::serde_ext;
use crate::singular::{solve_approximate, weak_data_scale, weak_residual, ApproxProblem, Init, WeakData};

const TAIL_SAMPLES: usize = 24;
const EMBEDDING_ETA: f64 = 0.1;
const LADDER_LEVELS: usize = 8;

/// One solved grid of a sweep.
#[derive(Debug)]
pub struct Run {
    pub h: f64,
    pub grid: Grid,
    pub op: OperatorPair,
    pub solutions: Vec<(usize, Vec<f64>)>,
    /// Barrier at the degrees of freedom; empty when it was not computed.
    pub barrier: Vec<f64>,
    pub norms: NormTable,
}

/// A column of the norm table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormSelector {
    Lp {
        #[serde(deserialize_with = "serde_ext::single", serialize_with = "serde_ext::serialize_single")]
        p: f64,
    },
    Grad { q: f64 },
    GradLocal { scale: f64, q: f64 },
    /// Energy of `T_k(u)^power`; `k = "inf"` drops the truncation.
    PowerEnergy {
        #[serde(deserialize_with = "serde_ext::single", serialize_with = "serde_ext::serialize_single")]
        k: f64,
    },
}

impl NormSelector {
    pub fn label(&self) -> String {
        match self {
            NormSelector::Lp { p } => format!("|u_n|_L^{}", fmt_exp(*p)),
            NormSelector::Grad { q } => format!("|grad u_n|_L^{q}"),
            NormSelector::GradLocal { scale, q } => format!("|grad u_n|_L^{q}(probe {scale})"),
            NormSelector::PowerEnergy { k } => format!("int |grad T_{}(u_n)^power|^2", fmt_exp(*k)),
        }
    }

    pub fn pick(&self, row: &NormRow) -> Option<f64> {
        match self {
            NormSelector::Lp { p } => lookup(&row.lp, *p),
            NormSelector::Grad { q } => lookup(&row.grad, *q),
            NormSelector::GradLocal { scale, q } => row
                .grad_local
                .iter()
                .find(|(s, qq, _)| (s - scale).abs() < 1e-12 && (qq - q).abs() < 1e-12)
                .map(|t| t.2),
            NormSelector::PowerEnergy { k } => lookup(&row.power_energy, *k),
        }
    }

    /// Extend `cfg` so that the table carries this column.
    pub fn require(&self, cfg: &mut NormConfig) {
        fn add(list: &mut Vec<f64>, v: f64) {
            if lookup(&list.iter().map(|x| (*x, 0.0)).collect::<Vec<_>>(), v).is_none() {
                list.push(v);
            }
        }
        match self {
            NormSelector::Lp { p } => add(&mut cfg.p_list, *p),
            NormSelector::Grad { q } => add(&mut cfg.q_list, *q),
            NormSelector::GradLocal { scale, q } => {
                add(&mut cfg.probes, *scale);
                add(&mut cfg.q_list, *q);
            }
            NormSelector::PowerEnergy { k } => add(&mut cfg.k_list, *k),
        }
    }
}

fn fmt_exp(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

/// Exponent regime of a configuration, with the constant exponent or the
/// boundary-strip majorant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeInfo {
    pub regime: Regime,
    pub delta: f64,
}

impl RegimeInfo {
    /// Power `(delta + 1)/2` whose energy stays bounded.
    pub fn energy_power(&self) -> f64 {
        (self.delta + 1.0) / 2.0
    }
}

pub fn regime_of(cfg: &ExperimentConfig, grid: &Grid) -> Result<RegimeInfo> {
    Ok(match cfg.delta.as_constant() {
        Some(d) if d >= 1.0 => RegimeInfo {
            regime: Regime::ConstantAtLeastOne,
            delta: d,
        },
        Some(d) => RegimeInfo {
            regime: Regime::ConstantBelowOne,
            delta: d,
        },
        None => RegimeInfo {
            regime: Regime::Variable,
            delta: compute_p_condition(&cfg.delta, grid, cfg.strip_eps())?.delta_star,
        },
    })
}

/// Norms whose uniform-in-`n` bound the estimates assert for this regime.
pub fn designated_norms(info: RegimeInfo, n_dim: usize) -> Vec<NormSelector> {
    let n = n_dim as f64;
    match info.regime {
        Regime::Variable if info.delta <= 1.0 => vec![NormSelector::Grad { q: 1.2 }],
        Regime::Variable => vec![NormSelector::GradLocal { scale: 0.5, q: 1.2 }, NormSelector::PowerEnergy { k: 1.0 }],
        Regime::ConstantBelowOne => vec![NormSelector::Grad {
            q: n * (info.delta + 1.0) / (n + info.delta - 1.0),
        }],
        Regime::ConstantAtLeastOne if info.delta == 1.0 => vec![NormSelector::Grad { q: 2.0 }],
        Regime::ConstantAtLeastOne => vec![
            NormSelector::PowerEnergy { k: f64::INFINITY },
            NormSelector::GradLocal { scale: 0.5, q: 2.0 },
        ],
    }
}

fn f1_5() -> f64 {
    1.5
}
fn two() -> f64 {
    2.0
}
fn tenth() -> f64 {
    0.1
}
fn half() -> f64 {
    0.5
}
fn tight() -> f64 {
    1e-8
}
fn loose() -> f64 {
    1e-6
}
fn tail_areas() -> [f64; 2] {
    [0.005, 0.2]
}
fn tail_slack() -> f64 {
    0.3
}
fn energy_levels() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "claim", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimSpec {
    /// Per-`n` spread of the selected norms; the regime's designated norms
    /// when `norms` is empty.
    UniformBound {
        #[serde(default)]
        norms: Vec<NormSelector>,
        #[serde(default = "f1_5")]
        factor: f64,
    },
    /// Fitted decay of `|{|grad u_n| >= t}|` over a window given as
    /// fractions of the domain measure.
    GradientTail {
        #[serde(default = "tail_areas")]
        areas: [f64; 2],
        #[serde(default = "tail_slack")]
        slack: f64,
    },
    LevelEnergy {
        #[serde(default = "energy_levels")]
        levels: Vec<f64>,
        #[serde(default = "two")]
        factor: f64,
    },
    /// Data summability `r` (singular term) and `m` (source) imply the
    /// tabulated summability of `u_n`. `model_dim` overrides the dimension
    /// used for the exponents.
    Regularity {
        #[serde(deserialize_with = "serde_ext::single", serialize_with = "serde_ext::serialize_single")]
        r: f64,
        #[serde(deserialize_with = "serde_ext::single", serialize_with = "serde_ext::serialize_single")]
        m: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        factor: Option<f64>,
    },
    /// Level-set ladder and `L^inf` stability of the source-only linear
    /// solutions.
    LinfBound {
        m: f64,
        #[serde(default = "f1_5")]
        factor: f64,
        #[serde(default = "tenth")]
        refinement: f64,
    },
    Positivity {
        #[serde(default = "tight")]
        tol: f64,
        #[serde(default = "half")]
        scale: f64,
    },
    Splitting {
        #[serde(default = "tight")]
        tol: f64,
    },
    WeakResidual {
        #[serde(default = "loose")]
        tol: f64,
    },
}

impl ClaimSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClaimSpec::UniformBound { .. } => "uniform_bound",
            ClaimSpec::GradientTail { .. } => "gradient_tail",
            ClaimSpec::LevelEnergy { .. } => "level_energy",
            ClaimSpec::Regularity { .. } => "regularity",
            ClaimSpec::LinfBound { .. } => "linf_bound",
            ClaimSpec::Positivity { .. } => "positivity",
            ClaimSpec::Splitting { .. } => "splitting",
            ClaimSpec::WeakResidual { .. } => "weak_residual",
        }
    }

    /// Statement each row of this claim tests.
    pub fn anchor(&self) -> &'static str {
        match self {
            ClaimSpec::UniformBound { .. } => "approximate solutions are bounded uniformly in n",
            ClaimSpec::GradientTail { .. } => "gradient lies in the Marcinkiewicz space of exponent N/(N-1)",
            ClaimSpec::LevelEnergy { .. } => "energy of T_l(u_n) grows at most like l+1",
            ClaimSpec::Regularity { .. } => "summability of the solution from summability of the data",
            ClaimSpec::LinfBound { .. } => "level-set iteration bounds the source-only solution in L^inf",
            ClaimSpec::Positivity { .. } => "approximate solutions stay above the barrier on compact subsets",
            ClaimSpec::Splitting { .. } => "u_n is below the sum of the singular-only and source-only solutions",
            ClaimSpec::WeakResidual { .. } => "weak formulation against compactly supported tests",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("claim {}: {msg}", self.name())));
        match self {
            ClaimSpec::UniformBound { factor, .. } | ClaimSpec::LinfBound { factor, .. } | ClaimSpec::LevelEnergy { factor, .. } if !(*factor >= 1.0) => {
                bad(format!("factor {factor} must be at least 1"))
            }
            ClaimSpec::LevelEnergy { levels, .. } if levels.len() < 4 || levels.windows(2).any(|w| w[0] >= w[1]) || levels[0] <= 0.0 => {
                bad("levels must be positive, increasing, at least 4".into())
            }
            ClaimSpec::GradientTail { areas, slack } if !(0.0 < areas[0] && areas[0] < areas[1] && areas[1] <= 1.0) || !(*slack >= 0.0) => {
                bad("areas must satisfy 0 < a0 < a1 <= 1 and slack >= 0".into())
            }
            ClaimSpec::Regularity { r, m, model_dim, factor } => {
                if !(*r >= 1.0 && *m >= 1.0) {
                    return bad(format!("exponents r = {r}, m = {m} must be at least 1"));
                }
                if model_dim.is_some_and(|d| !(1..=3).contains(&d)) {
                    return bad("model_dim must be 1, 2 or 3".into());
                }
                if factor.is_some_and(|f| !(f >= 1.0)) {
                    return bad("factor must be at least 1".into());
                }
                Ok(())
            }
            ClaimSpec::LinfBound { m, refinement, .. } if !(*m >= 1.0) || !(*refinement > 0.0) => bad("m must be at least 1 and refinement positive".into()),
            ClaimSpec::Positivity { tol, scale } if !(*tol >= 0.0) || !(*scale > 0.0 && *scale < 1.0) => bad("tol >= 0 and scale in (0, 1) required".into()),
            ClaimSpec::Splitting { tol } | ClaimSpec::WeakResidual { tol } if !(*tol >= 0.0) => bad(format!("tol {tol} must be nonnegative")),
            _ => Ok(()),
        }
    }

    /// Norm-table columns this claim reads.
    pub fn required_norms(&self, info: RegimeInfo, n_dim: usize) -> Vec<NormSelector> {
        match self {
            ClaimSpec::UniformBound { norms, .. } if norms.is_empty() => designated_norms(info, n_dim),
            ClaimSpec::UniformBound { norms, .. } => norms.clone(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformanceRow {
    pub claim_id: String,
    pub paper_ref: String,
    pub n_or_h: String,
    pub statistic: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

struct Rows {
    id: String,
    anchor: &'static str,
    out: Vec<ConformanceRow>,
}

impl Rows {
    fn push(&mut self, at: String, statistic: String, value: f64, threshold: f64, pass: bool) {
        self.out.push(ConformanceRow {
            claim_id: self.id.clone(),
            paper_ref: self.anchor.to_string(),
            n_or_h: at,
            statistic,
            value,
            threshold,
            pass,
        });
    }

    fn fail(&mut self, at: String, statistic: String, threshold: f64) {
        self.push(at, statistic, f64::NAN, threshold, false);
    }
}

fn at(h: f64, n: usize) -> String {
    format!("h={h},n={n}")
}

fn over(run: &Run) -> String {
    match (run.solutions.first(), run.solutions.last()) {
        (Some((a, _)), Some((b, _))) => format!("h={},n={a}..{b}", run.h),
        _ => format!("h={}", run.h),
    }
}

fn over_all(runs: &[Run]) -> String {
    let hs: Vec<String> = runs.iter().map(|r| r.h.to_string()).collect();
    format!("h={}", hs.join("|"))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solution of the linear source-only problem.
fn source_only(run: &Run, g: &[f64], tol: f64) -> Result<Vec<f64>> {
    if g.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; g.len()]);
    }
    Ok(solve_linear(&run.op, &run.grid, &RhsSpec::volumetric(g.to_vec()), tol)?.w)
}

/// Rows for claim number `index` of `cfg`, over `runs` ordered coarse to fine.
pub fn evaluate(claim: &ClaimSpec, index: usize, cfg: &ExperimentConfig, runs: &[Run]) -> Result<Vec<ConformanceRow>> {
    let fine = runs.last().ok_or_else(|| Error::MissingArtifact("no solved grid to verify".into()))?;
    let mut rows = Rows {
        id: format!("{}#{index}", claim.name()),
        anchor: claim.anchor(),
        out: Vec::new(),
    };
    if fine.solutions.is_empty() {
        rows.fail(format!("h={}", fine.h), "no solved n".into(), f64::NAN);
        return Ok(rows.out);
    }
    let grid = &fine.grid;
    let cell = grid.cell_measure();
    match claim {
        ClaimSpec::UniformBound { factor, .. } => {
            let info = regime_of(cfg, grid)?;
            for sel in claim.required_norms(info, grid.dim()) {
                let label = sel.label();
                let values = fine.norms.series(&label, |r| sel.pick(r))?;
                let s = spread_check(&values, *factor);
                rows.push(over(fine), format!("max/median {label}"), s.ratio, *factor, s.pass);
            }
        }
        ClaimSpec::GradientTail { areas, slack } => {
            let theory = gradient_tail_exponent(grid.dim());
            let area = grid.discrete_measure();
            for (n, u) in &fine.solutions {
                let g = gradient_magnitude(grid, u, None);
                let fit = area_window(&g, cell, [areas[0] * area, areas[1] * area]).and_then(|w| marcinkiewicz_fit(&g, cell, w, TAIL_SAMPLES));
                match fit {
                    Ok(fit) => {
                        rows.push(at(fine.h, *n), "fitted gradient tail exponent".into(), fit.p_hat, theory - slack, fit.p_hat >= theory - slack);
                        let e = embedding_check(grid, &g, fit.p_hat, EMBEDDING_ETA);
                        rows.push(at(fine.h, *n), format!("|grad u_n|_L^{:.3} vs weak-type bound", e.r), e.norm, e.bound, e.pass);
                    }
                    Err(e) => rows.fail(at(fine.h, *n), format!("gradient tail fit: {e}"), theory - slack),
                }
            }
        }
        ClaimSpec::LevelEnergy { levels, factor } => {
            let mut per_n = Vec::new();
            for (n, u) in &fine.solutions {
                let growth = level_energy_growth(grid, u, levels)?;
                per_n.push((*n, growth.ratios().into_iter().fold(0.0, f64::max), growth.ratios()));
            }
            let all: Vec<f64> = per_n.iter().flat_map(|(_, _, r)| r.iter().copied()).collect();
            let threshold = factor * median(&all);
            for (n, worst, _) in per_n {
                let pass = worst <= threshold || worst == 0.0;
                rows.push(at(fine.h, n), "max over l of E(l)/(l+1)".into(), worst, threshold, pass);
            }
        }
        ClaimSpec::Regularity { r, m, model_dim, factor } => {
            let info = regime_of(cfg, grid)?;
            let n_dim = model_dim.unwrap_or(grid.dim());
            let rep = regularity_exponents(info.regime, n_dim, info.delta, *r, *m);
            let (mut f_vals, mut g_vals, mut u_vals) = (Vec::new(), Vec::new(), Vec::new());
            let target = match rep.target {
                Target::Bounded => Some(f64::INFINITY),
                Target::Lebesgue(q) => Some((q - 0.05).max(1.0)),
                Target::NoPrediction => None,
            };
            for run in runs {
                for (n, u) in &run.solutions {
                    let datum = regularize(&cfg.nu, &cfg.mu, *n, &run.grid, &cfg.mollifier)?;
                    f_vals.push(lp_norm(&run.grid, &datum.singular_weight(), *r, None));
                    g_vals.push(lp_norm(&run.grid, &datum.g_n, *m, None));
                    if let Some(p) = target {
                        u_vals.push(lp_norm(&run.grid, u, p, None));
                    }
                }
            }
            let data_factor = factor.unwrap_or(1.5);
            let where_ = over_all(runs);
            let s = spread_check(&f_vals, data_factor);
            rows.push(where_.clone(), format!("max/median singular data in L^{}", fmt_exp(*r)), s.ratio, data_factor, s.pass);
            let s = spread_check(&g_vals, data_factor);
            rows.push(where_.clone(), format!("max/median source data in L^{}", fmt_exp(*m)), s.ratio, data_factor, s.pass);
            match target {
                Some(p) => {
                    let f = factor.unwrap_or(1.5);
                    let s = spread_check(&u_vals, f);
                    rows.push(where_, format!("max/median |u_n|_L^{} ({})", fmt_exp(p), rep.label), s.ratio, f, s.pass);
                }
                None => rows.fail(where_, format!("no regularity prediction ({})", rep.label), f64::NAN),
            }
        }
        ClaimSpec::LinfBound { m, factor, refinement } => {
            let mut finals = Vec::new();
            for run in runs {
                let mut linf = Vec::new();
                let mut last = Vec::new();
                for (n, _) in &run.solutions {
                    let datum = regularize(&cfg.nu, &cfg.mu, *n, &run.grid, &cfg.mollifier)?;
                    last = source_only(run, &datum.g_n, cfg.fixed_point.inner_tol)?;
                    linf.push(max_abs(&last));
                }
                let top = max_abs(&last);
                let n_max = run.solutions.last().map_or(0, |s| s.0);
                let step = 0.8 * top / (LADDER_LEVELS - 1) as f64;
                let levels: Vec<f64> = (0..LADDER_LEVELS).map(|i| 0.1 * top + i as f64 * step).collect();
                if top == 0.0 {
                    rows.push(at(run.h, n_max), "source-only solution vanishes".into(), 0.0, 1.0, true);
                } else {
                    match stampacchia_certificate(&run.grid, &last, *m, &levels) {
                        Ok(rep) => rows.push(at(run.h, n_max), format!("fitted level-decay exponent (theory {:.3})", rep.alpha_theory), rep.alpha_fit, 1.0, rep.pass),
                        Err(e) => rows.fail(at(run.h, n_max), format!("level ladder: {e}"), 1.0),
                    }
                }
                let s = spread_check(&linf, *factor);
                rows.push(over(run), "max/median |w_n|_L^inf".into(), s.ratio, *factor, s.pass);
                finals.push((run.h, top));
            }
            if let [.., (_, a), (h, b)] = finals[..] {
                let change = if a.max(b) == 0.0 { 0.0 } else { (a - b).abs() / a.max(b) };
                rows.push(format!("h={h}"), "relative change of |w_n|_L^inf under refinement".into(), change, *refinement, change <= *refinement);
            }
        }
        ClaimSpec::Positivity { tol, scale } => {
            if fine.barrier.len() != grid.dof() {
                rows.fail(format!("h={}", fine.h), "barrier unavailable".into(), 0.0);
                return Ok(rows.out);
            }
            let mask = grid.probe_mask(*scale);
            let min_on = |v: &[f64]| v.iter().zip(&mask).filter(|(_, m)| **m).map(|(x, _)| *x).fold(f64::INFINITY, f64::min);
            let wmin = min_on(&fine.barrier);
            rows.push(format!("h={}", fine.h), format!("min of barrier on probe {scale}"), wmin, 0.0, wmin > 0.0 && wmin.is_finite());
            for (n, u) in &fine.solutions {
                let margin = min_on(u) - wmin;
                rows.push(at(fine.h, *n), format!("min of u_n minus min of barrier on probe {scale}"), margin, -tol, margin >= -tol);
            }
        }
        ClaimSpec::Splitting { tol } => {
            let delta = cfg.delta.nodal(grid)?;
            for (n, u) in &fine.solutions {
                let datum = regularize(&cfg.nu, &cfg.mu, *n, grid, &cfg.mollifier)?;
                let singular = ApproxProblem {
                    grid,
                    op: &fine.op,
                    weight: datum.singular_weight(),
                    source: vec![0.0; grid.dof()],
                    delta: delta.clone(),
                    offset: 1.0 / *n as f64,
                    n: *n,
                };
                let v = solve_approximate(&singular, &cfg.fixed_point, &Init::ThetaOfZero)?.u;
                let w = source_only(fine, &datum.g_n, cfg.fixed_point.inner_tol)?;
                let excess = (0..u.len()).map(|i| u[i] - v[i] - w[i]).fold(f64::NEG_INFINITY, f64::max);
                rows.push(at(fine.h, *n), "max of u_n - v_n - w_n".into(), excess, *tol, excess <= *tol);
            }
        }
        ClaimSpec::WeakResidual { tol } => {
            let (n, u) = fine.solutions.last().expect("checked nonempty");
            let delta = cfg.delta.nodal(grid)?;
            let datum = regularize(&cfg.nu, &cfg.mu, *n, grid, &cfg.mollifier)?;
            let prob = ApproxProblem::new(grid, &fine.op, &datum, &delta)?;
            let data = WeakData::of(&prob);
            let tests = default_tests(grid);
            match weak_residual(grid, &fine.op, u, &data, &tests) {
                Ok(res) => {
                    let scale = weak_data_scale(grid, u, &data, &tests);
                    let rel = if scale > 0.0 { res / scale } else { res };
                    rows.push(at(fine.h, *n), "relative weak residual".into(), rel, *tol, rel <= *tol);
                }
                Err(e) => rows.fail(at(fine.h, *n), format!("weak residual: {e}"), *tol),
            }
        }
    }
    Ok(rows.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claims_parse_with_defaults() {
        let c: ClaimSpec = serde_json::from_str(r#"{"claim": "gradient_tail"}"#).unwrap();
        assert_eq!(
            c,
            ClaimSpec::GradientTail {
                areas: [0.005, 0.2],
                slack: 0.3
            }
        );
        let c: ClaimSpec = serde_json::from_str(r#"{"claim": "regularity", "r": "inf", "m": 2}"#).unwrap();
        assert!(matches!(c, ClaimSpec::Regularity { r, .. } if r.is_infinite()));
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ClaimSpec>(&text).unwrap(), c);
        assert!(serde_json::from_str::<ClaimSpec>(r#"{"claim": "positivity", "tolerance": 1}"#).is_err());
        assert!(serde_json::from_str::<ClaimSpec>(r#"{"claim": "unknown"}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let bad = [
            ClaimSpec::UniformBound { norms: vec![], factor: 0.5 },
            ClaimSpec::LevelEnergy {
                levels: vec![1.0, 2.0, 3.0],
                factor: 2.0,
            },
            ClaimSpec::GradientTail {
                areas: [0.3, 0.1],
                slack: 0.3,
            },
            ClaimSpec::Positivity { tol: 1e-8, scale: 1.5 },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn designated_norms_follow_regime() {
        let d = |regime, delta| designated_norms(RegimeInfo { regime, delta }, 2);
        assert_eq!(d(Regime::Variable, 1.0), vec![NormSelector::Grad { q: 1.2 }]);
        assert_eq!(d(Regime::ConstantBelowOne, 0.5), vec![NormSelector::Grad { q: 2.0 }]);
        assert_eq!(d(Regime::ConstantAtLeastOne, 1.0), vec![NormSelector::Grad { q: 2.0 }]);
        assert_eq!(d(Regime::ConstantAtLeastOne, 2.0)[0], NormSelector::PowerEnergy { k: f64::INFINITY });
        assert_eq!(RegimeInfo { regime: Regime::ConstantAtLeastOne, delta: 2.0 }.energy_power(), 1.5);
    }

    #[test]
    fn selectors_extend_norm_config() {
        let mut cfg = NormConfig::default();
        let sels = [
            NormSelector::Lp { p: 3.0 },
            NormSelector::GradLocal { scale: 0.3, q: 1.7 },
            NormSelector::PowerEnergy { k: f64::INFINITY },
            NormSelector::Lp { p: f64::INFINITY },
        ];
        for s in &sels {
            s.require(&mut cfg);
        }
        assert_eq!(cfg.p_list, vec![1.0, 2.0, f64::INFINITY, 3.0]);
        assert!(cfg.probes.contains(&0.3) && cfg.q_list.contains(&1.7));
        assert_eq!(*cfg.k_list.last().unwrap(), f64::INFINITY);
    }
}
