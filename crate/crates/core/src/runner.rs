//! Experiment orchestration and on-disk artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json              runs in coarse-to-fine order
//! runs/h-<i>/report.json     sweep summary for one grid
//! runs/h-<i>/u_n<n>.bin      solution, little-endian f64 per degree of freedom
//! runs/h-<i>/barrier.bin
//! runs/h-<i>/norms.csv
//! conformance.csv            written by verify
//! refinement.csv             written by sweep
//! ```
//!
//! Nothing time-dependent is written, so identical configs give identical
//! files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::claims::{evaluate, regime_of, ConformanceRow, Run};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimates::{lp_norm, sobolev_norm, NormConfig, NormTable};
use crate::grid::Grid;
use crate::measure::{default_tests, regularize};
use crate::operator::OperatorPair;
use crate::singular::{
    solve_sequence, weak_data_scale, weak_residual, ApproxProblem, ProbeMinimum, ProblemFamily, SequenceFailure, SolveReport, StepSummary, WeakData,
};

pub const MANIFEST: &str = "manifest.json";
pub const CONFORMANCE: &str = "conformance.csv";
pub const REFINEMENT: &str = "refinement.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub h: f64,
    /// Relative to the output directory.
    pub dir: String,
    pub complete: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub runs: Vec<ManifestEntry>,
}

/// Contents of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub h: f64,
    pub dof: usize,
    pub n_list: Vec<usize>,
    pub solved: Vec<usize>,
    pub complete: bool,
    pub failure: Option<SequenceFailure>,
    pub steps: Vec<StepSummary>,
    pub gaps: Vec<f64>,
    pub numerically_converged: bool,
    pub barrier_degenerate: bool,
    pub probe_minima: Vec<ProbeMinimum>,
    /// Relative weak residual of the last solved `n` against its own problem.
    pub weak_residual: Option<f64>,
    pub flags: Vec<String>,
}

/// The fields of `report.json` that verify reads back.
#[derive(Deserialize)]
struct RecordIndex {
    h: f64,
    dof: usize,
    solved: Vec<usize>,
}

pub fn build_grid(cfg: &ExperimentConfig, h: f64) -> Result<Grid> {
    Grid::build(cfg.domain.clone(), h)
}

pub fn build_operator(cfg: &ExperimentConfig, grid: &Grid) -> Result<OperatorPair> {
    OperatorPair::assemble(grid, cfg.coefficient.as_ref(), cfg.kernel.as_ref(), cfg.assembly)
}

/// Norm columns for `cfg`: the configured ones, the energy power resolved
/// from the exponent, and every column a claim reads.
pub fn norm_config(cfg: &ExperimentConfig, grid: &Grid) -> Result<NormConfig> {
    let mut norms = cfg.norms.clone();
    let info = regime_of(cfg, grid)?;
    norms.power.get_or_insert(info.energy_power());
    for c in &cfg.claims {
        for sel in c.required_norms(info, grid.dim()) {
            sel.require(&mut norms);
        }
    }
    Ok(norms)
}

/// Flags raised by the configuration on `grid`, including data
/// diagnostics at the largest `n`.
pub fn config_flags(cfg: &ExperimentConfig, grid: &Grid) -> Result<Vec<String>> {
    let mut flags = cfg.flags(grid);
    let n = *cfg.n_list.last().expect("validated");
    let datum = regularize(&cfg.nu, &cfg.mu, n, grid, &cfg.mollifier)?;
    if datum.diagnostics.clipped_mass > 0.0 {
        flags.push(format!(
            "clipped mass {:e} at n = {n}: the divergence part is not compatible with a nonnegative measure",
            datum.diagnostics.clipped_mass
        ));
    }
    Ok(flags)
}

fn relative_weak_residual(cfg: &ExperimentConfig, grid: &Grid, op: &OperatorPair, n: usize, u: &[f64]) -> Result<f64> {
    let delta = cfg.delta.nodal(grid)?;
    let datum = regularize(&cfg.nu, &cfg.mu, n, grid, &cfg.mollifier)?;
    let prob = ApproxProblem::new(grid, op, &datum, &delta)?;
    let data = WeakData::of(&prob);
    let tests = default_tests(grid);
    let res = weak_residual(grid, op, u, &data, &tests)?;
    let scale = weak_data_scale(grid, u, &data, &tests);
    Ok(if scale > 0.0 { res / scale } else { res })
}

/// Solve the sequence on one grid.
pub fn solve_grid(cfg: &ExperimentConfig, h: f64) -> Result<(Run, RunRecord)> {
    let grid = build_grid(cfg, h)?;
    cfg.nu.validate(&grid)?;
    cfg.mu.validate(&grid)?;
    let op = build_operator(cfg, &grid)?;
    let flags = config_flags(cfg, &grid)?;
    let norms_cfg = norm_config(cfg, &grid)?;
    let report = {
        let mut family = ProblemFamily::new(&grid, &op, cfg.nu.clone(), cfg.mu.clone(), cfg.delta.clone());
        family.mollifier = cfg.mollifier;
        family.probes = cfg.probes.clone();
        family.gap_threshold = cfg.gap_threshold;
        family.warm_start = cfg.warm_start;
        solve_sequence(&family, &cfg.n_list, &cfg.fixed_point)?
    };
    let weak = match report.solutions.last() {
        Some((n, u)) => relative_weak_residual(cfg, &grid, &op, *n, u).ok(),
        None => None,
    };
    let norms = NormTable::compute(&grid, &report.solutions, &norms_cfg)?;
    let record = record_of(h, &grid, &report, weak, flags);
    let SolveReport { solutions, barrier, .. } = report;
    Ok((
        Run {
            h,
            grid,
            op,
            solutions,
            barrier: barrier.w,
            norms,
        },
        record,
    ))
}

fn record_of(h: f64, grid: &Grid, report: &SolveReport, weak_residual: Option<f64>, flags: Vec<String>) -> RunRecord {
    RunRecord {
        h,
        dof: grid.dof(),
        n_list: report.n_list.clone(),
        solved: report.solutions.iter().map(|(n, _)| *n).collect(),
        complete: report.complete(),
        failure: report.failure.clone(),
        steps: report.steps.clone(),
        gaps: report.gaps.clone(),
        numerically_converged: report.numerically_converged,
        barrier_degenerate: report.barrier.degenerate,
        probe_minima: report.probe_minima.clone(),
        weak_residual,
        flags,
    }
}

pub fn write_f64s(path: &Path, v: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * v.len());
    for x in v {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::MissingArtifact(format!("{}: truncated array", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn fmt_key(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

pub fn write_norms(path: &Path, table: &NormTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "norm", "param", "probe", "value"])?;
    for row in &table.rows {
        let n = row.n.to_string();
        let mut put = |norm: &str, param: f64, probe: &str, value: f64| w.write_record([n.as_str(), norm, &fmt_key(param), probe, &value.to_string()]);
        for (p, v) in &row.lp {
            put("lp", *p, "", *v)?;
        }
        for (q, v) in &row.grad {
            put("grad", *q, "", *v)?;
        }
        for (s, q, v) in &row.grad_local {
            put("grad_local", *q, &s.to_string(), *v)?;
        }
        for (k, v) in &row.power_energy {
            put("power_energy", *k, "", *v)?;
        }
        for (t, v) in &row.grad_distribution {
            put("grad_distribution", *t, "", *v)?;
        }
        for (k, v) in &row.level_measures {
            put("level_measure", *k, "", *v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_conformance(path: &Path, rows: &[ConformanceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["claim_id", "paper_ref", "n_or_h", "statistic", "value", "threshold", "pass"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run_dir(index: usize) -> String {
    format!("runs/h-{index}")
}

fn write_run(out: &Path, index: usize, run: &Run, record: &RunRecord) -> Result<ManifestEntry> {
    let rel = run_dir(index);
    let dir = out.join(&rel);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("report.json"), record)?;
    for (n, u) in &run.solutions {
        write_f64s(&dir.join(format!("u_n{n}.bin")), u)?;
    }
    write_f64s(&dir.join("barrier.bin"), &run.barrier)?;
    write_norms(&dir.join("norms.csv"), &run.norms)?;
    Ok(ManifestEntry {
        h: run.h,
        dir: rel,
        complete: record.complete,
    })
}

/// Outcome of a solve or sweep.
#[derive(Debug)]
pub struct Outcome {
    pub runs: Vec<Run>,
    pub records: Vec<RunRecord>,
    pub manifest: Manifest,
}

impl Outcome {
    pub fn complete(&self) -> bool {
        self.records.iter().all(|r| r.complete)
    }
}

/// Solve on each spacing in `hs` and write the artifacts. A grid whose sweep
/// stops early still gets its partial artifacts.
pub fn solve_to(cfg: &ExperimentConfig, hs: &[f64], out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let mut outcome = Outcome {
        runs: Vec::new(),
        records: Vec::new(),
        manifest: Manifest {
            version: crate::config::SCHEMA_VERSION,
            runs: Vec::new(),
        },
    };
    for (i, &h) in hs.iter().enumerate() {
        let (run, record) = solve_grid(cfg, h)?;
        log::info!("h = {h}: solved n = {:?}", record.solved);
        outcome.manifest.runs.push(write_run(out, i, &run, &record)?);
        outcome.runs.push(run);
        outcome.records.push(record);
    }
    write_json(&out.join(MANIFEST), &outcome.manifest)?;
    Ok(outcome)
}

pub fn read_manifest(out: &Path) -> Result<Manifest> {
    let path = out.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rebuild the runs listed in the manifest from their arrays.
pub fn load_runs(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Run>> {
    let manifest = read_manifest(out)?;
    if manifest.runs.is_empty() {
        return Err(Error::MissingArtifact(format!("{} lists no runs", out.join(MANIFEST).display())));
    }
    let mut runs = Vec::new();
    for entry in &manifest.runs {
        let dir: PathBuf = out.join(&entry.dir);
        let path = dir.join("report.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
        let index: RecordIndex = serde_json::from_str(&text)?;
        let grid = build_grid(cfg, index.h)?;
        if grid.dof() != index.dof {
            return Err(Error::MissingArtifact(format!(
                "{} was written for {} unknowns, the config gives {}",
                dir.display(),
                index.dof,
                grid.dof()
            )));
        }
        let mut solutions = Vec::new();
        for n in index.solved {
            let u = read_f64s(&dir.join(format!("u_n{n}.bin")))?;
            if u.len() != grid.dof() {
                return Err(Error::MissingArtifact(format!("u_n{n}.bin has {} values, expected {}", u.len(), grid.dof())));
            }
            solutions.push((n, u));
        }
        let barrier = read_f64s(&dir.join("barrier.bin"))?;
        let op = build_operator(cfg, &grid)?;
        let norms = NormTable::compute(&grid, &solutions, &norm_config(cfg, &grid)?)?;
        runs.push(Run {
            h: index.h,
            grid,
            op,
            solutions,
            barrier,
            norms,
        });
    }
    Ok(runs)
}

/// Rows for every configured claim.
pub fn conformance(cfg: &ExperimentConfig, runs: &[Run]) -> Result<Vec<ConformanceRow>> {
    let mut rows = Vec::new();
    for (i, claim) in cfg.claims.iter().enumerate() {
        rows.extend(evaluate(claim, i, cfg, runs)?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementRow {
    pub h: f64,
    pub n: usize,
    pub linf: f64,
    pub l1: f64,
    pub grad_l2: f64,
    /// Relative change of `linf` from the next coarser grid at the same `n`.
    pub linf_change: Option<f64>,
}

pub fn refinement_rows(runs: &[Run]) -> Vec<RefinementRow> {
    let mut rows: Vec<RefinementRow> = Vec::new();
    for run in runs {
        for (n, u) in &run.solutions {
            let linf = lp_norm(&run.grid, u, f64::INFINITY, None);
            let prev = rows.iter().rev().find(|r| r.n == *n && r.h > run.h).map(|r| r.linf);
            rows.push(RefinementRow {
                h: run.h,
                n: *n,
                linf,
                l1: lp_norm(&run.grid, u, 1.0, None),
                grad_l2: sobolev_norm(&run.grid, u, 2.0, None),
                linf_change: prev.map(|p| if p.max(linf) == 0.0 { 0.0 } else { (linf - p).abs() / p.max(linf) }),
            });
        }
    }
    rows
}

pub fn write_refinement(path: &Path, rows: &[RefinementRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "version": 1,
                "domain": {{"shape": "rectangle", "x": [0, 1], "y": [0, 1]}},
                "h": 0.125,
                "coefficient": {{"preset": "identity"}},
                "delta": {{"delta": 1.0}},
                "n_list": [1, 2, 4]
                {extra}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_data_gives_zero_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(r#", "claims": [{"claim": "uniform_bound"}]"#);
        let outcome = solve_to(&cfg, &[0.125], dir.path()).unwrap();
        assert!(outcome.complete());
        let u = read_f64s(&dir.path().join("runs/h-0/u_n4.bin")).unwrap();
        assert!(!u.is_empty() && u.iter().all(|&v| v == 0.0));
        let runs = load_runs(&cfg, dir.path()).unwrap();
        let rows = conformance(&cfg, &runs).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].pass);
    }

    #[test]
    fn artifacts_are_reproducible() {
        let cfg = config(r#", "nu": {"density": 1.0}, "mu": {"density": "1 + x"}"#);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        solve_to(&cfg, &[0.125], a.path()).unwrap();
        solve_to(&cfg, &[0.125], b.path()).unwrap();
        for f in ["manifest.json", "runs/h-0/report.json", "runs/h-0/u_n4.bin", "runs/h-0/norms.csv", "runs/h-0/barrier.bin"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let runs = load_runs(&cfg, a.path()).unwrap();
        let rec: RunRecord = serde_json::from_str(&fs::read_to_string(a.path().join("runs/h-0/report.json")).unwrap()).unwrap();
        assert_eq!(runs[0].solutions.len(), rec.solved.len());
        assert!(rec.weak_residual.unwrap() < 1e-6);
    }

    #[test]
    fn missing_artifacts_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config("");
        assert!(matches!(load_runs(&cfg, dir.path()), Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn flags_for_degenerate_data() {
        let cfg = config(r#", "nu": {"atoms": [{"x": [0.5, 0.5], "mass": 1.0}]}"#);
        let grid = build_grid(&cfg, 1.0 / 32.0).unwrap();
        let flags = config_flags(&cfg, &grid).unwrap();
        assert!(flags.iter().any(|f| f.contains("atoms")));
        let cfg = config("");
        assert!(config_flags(&cfg, &grid).unwrap().iter().any(|f| f.contains("zero")));
    }
}
