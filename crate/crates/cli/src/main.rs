use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smp_core::claims::ConformanceRow;
use smp_core::config::ExperimentConfig;
use smp_core::exponent::{existence_exponents, regularity_exponents, Regime};
use smp_core::runner::{self, CONFORMANCE, REFINEMENT};
use smp_core::Error;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_MISSING: u8 = 3;
const EXIT_CLAIM_FAILED: u8 = 4;

/// Solver and estimate diagnostics for singular elliptic problems with a
/// mixed local and nonlocal operator.
#[derive(Parser)]
#[command(name = "smp", version)]
struct Cli {
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true, env = "SMP_THREADS")]
    threads: Option<usize>,

    /// Exit with status 1 when the configuration raises any flag.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    #[arg(long)]
    config: PathBuf,

    /// Output directory; defaults to the config's `output`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the approximate sequence on the config's grid and write artifacts.
    Solve(Io),
    /// Evaluate the config's claims and write conformance.csv.
    Verify {
        #[command(flatten)]
        io: Io,
        /// Solve first instead of reading existing artifacts.
        #[arg(long)]
        solve: bool,
    },
    /// Print the predicted summability of solutions.
    Exponents {
        /// Space dimension.
        #[arg(long)]
        dim: usize,
        /// Constant exponent, or the boundary majorant with `--variable`.
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        variable: bool,
        /// Summability of the singular datum.
        #[arg(long)]
        r: f64,
        /// Summability of the source datum.
        #[arg(long)]
        m: f64,
    },
    /// Solve on every spacing of `h_list` and write refinement.csv.
    Sweep(Io),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = smp_core::par::init_threads(t) {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let code = match &cli.command {
        Command::Solve(io) => solve(io, cli.strict, false),
        Command::Sweep(io) => solve(io, cli.strict, true),
        Command::Verify { io, solve } => verify(io, cli.strict, *solve),
        Command::Exponents { dim, delta, variable, r, m } => exponents(*dim, *delta, *variable, *r, *m),
    };
    ExitCode::from(code)
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::MissingArtifact(_) => EXIT_MISSING,
        Error::LinearNonConvergence { .. } | Error::FixedPointNonConvergence { .. } => EXIT_PARTIAL,
        _ => EXIT_CONFIG,
    }
}

fn load(io: &Io, strict: bool) -> Result<(ExperimentConfig, PathBuf), u8> {
    let cfg = ExperimentConfig::load(&io.config).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    let out = io.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let grid = runner::build_grid(&cfg, cfg.solve_h()).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    let flags = runner::config_flags(&cfg, &grid).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    for f in &flags {
        eprintln!("flag: {f}");
    }
    if strict && !flags.is_empty() {
        eprintln!("error: --strict rejects flagged configurations");
        return Err(EXIT_CONFIG);
    }
    Ok((cfg, out))
}

fn solve(io: &Io, strict: bool, sweep: bool) -> u8 {
    let (cfg, out) = match load(io, strict) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let hs = if sweep { cfg.sweep_hs() } else { vec![cfg.solve_h()] };
    let outcome = match runner::solve_to(&cfg, &hs, &out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    for rec in &outcome.records {
        let weak = rec.weak_residual.map_or("n/a".to_string(), |w| format!("{w:.3e}"));
        println!("h = {}: solved n = {:?}, weak residual {weak}", rec.h, rec.solved);
        if let Some(f) = &rec.failure {
            eprintln!("stopped at n = {}: {}", f.n, f.message);
        }
    }
    if sweep {
        if let Err(e) = runner::write_refinement(&out.join(REFINEMENT), &runner::refinement_rows(&outcome.runs)) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }
    if outcome.complete() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

fn verify(io: &Io, strict: bool, inline: bool) -> u8 {
    let (cfg, out) = match load(io, strict) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let runs = if inline {
        let hs = cfg.sweep_hs();
        runner::solve_to(&cfg, &hs, &out).map(|o| o.runs)
    } else if cfg.claims.is_empty() {
        Ok(Vec::new())
    } else {
        runner::load_runs(&cfg, &out)
    };
    let rows: Result<Vec<ConformanceRow>, Error> = runs.and_then(|runs| runner::conformance(&cfg, &runs));
    let rows = match rows {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&out).map_err(Error::from).and_then(|_| runner::write_conformance(&out.join(CONFORMANCE), &rows)) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    print_rows(&rows);
    if rows.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_CLAIM_FAILED
    }
}

fn print_rows(rows: &[ConformanceRow]) {
    for r in rows {
        println!(
            "{} {:<16} {:<24} {} = {:.4e} (threshold {:.4e})",
            if r.pass { "pass" } else { "FAIL" },
            r.claim_id,
            r.n_or_h,
            r.statistic,
            r.value,
            r.threshold
        );
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} rows, {failed} failed", rows.len());
}

fn exponents(dim: usize, delta: f64, variable: bool, r: f64, m: f64) -> u8 {
    let regime = if variable {
        Regime::Variable
    } else if delta >= 1.0 {
        Regime::ConstantAtLeastOne
    } else {
        Regime::ConstantBelowOne
    };
    let rep = regularity_exponents(regime, dim, delta, r, m);
    println!("regime        {regime:?}");
    println!("N             {dim}");
    println!("delta         {delta}");
    println!("r             {r}");
    println!("m             {m}");
    println!("r lower bound {}", rep.r_lower);
    println!("case          {}", rep.case.as_deref().unwrap_or("none"));
    println!("prediction    {}", rep.label);
    if !variable {
        match existence_exponents(dim, delta) {
            Ok(e) => {
                println!("energy exp.   {}", e.q);
                println!("source exp.   {}", e.source_exponent);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    EXIT_OK
}
