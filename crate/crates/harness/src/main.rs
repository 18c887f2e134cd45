use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vertexeuler::pipeline::{self, all_permutations, WORKERS_ENV};
use vertexeuler::report::{diagnostics_csv, emit_report, ordering_csv, to_json, Format};
use vertexeuler::Scenario;

/// Vertex-counting Euler numbers of flat bundles over the torus.
#[derive(Parser)]
#[command(name = "vertexeuler", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Absolute quadrature tolerance for every integral.
    #[arg(long, global = true)]
    abs_tol: Option<f64>,
    /// Relative quadrature tolerance for every integral.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Seed for sampled checks; overrides the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// json or csv.
    #[arg(long, default_value = "json")]
    format: Format,
    /// Write here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Global integral, local indices and their comparison.
    Verify {
        #[command(flatten)]
        output: Output,
        /// Include wall-clock timing (makes reports non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Local indices over `B₊` only.
    Indices {
        #[command(flatten)]
        output: Output,
    },
    /// Sum of local indices under re-orderings of the charts.
    OrderingStudy {
        #[command(flatten)]
        output: Output,
        /// Comma-separated permutation, repeatable; all permutations if absent.
        #[arg(long, value_delimiter = ',')]
        perm: Vec<u32>,
    },
    /// Euler number of a line-bundle scenario.
    LineBundle {
        #[command(flatten)]
        output: Output,
    },
    /// `γ_T` curves, decay windows and sampled fiber integrals.
    Diagnostics {
        #[command(flatten)]
        output: Output,
        /// Monte Carlo samples per check.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
    },
}

fn load(cli: &Cli, path: &Path) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    s.override_tolerances(cli.abs_tol, cli.rel_tol);
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn write(output: &Output, bytes: &[u8]) -> Result<()> {
    match &output.out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn run(cli: &Cli) -> Result<bool> {
    pipeline::configure_workers(cli.workers)?;
    match &cli.command {
        Command::Verify { output, timing } => {
            let s = load(cli, &output.scenario)?;
            let r = pipeline::run_verify(&s, *timing)?;
            write(output, &emit_report(&r, output.format)?)?;
            Ok(r.all_match())
        }
        Command::Indices { output } => {
            let s = load(cli, &output.scenario)?;
            let r = pipeline::run_indices(&s)?;
            write(output, &emit_report(&r, output.format)?)?;
            Ok(r.all_match())
        }
        Command::OrderingStudy { output, perm } => {
            let s = load(cli, &output.scenario)?;
            let n = s.covering.charts.len() as u32;
            let perms = if perm.is_empty() {
                all_permutations(n)
            } else {
                perm.chunks(n as usize).map(|c| c.to_vec()).collect()
            };
            let study = pipeline::run_ordering_study(&s, &perms)?;
            let bytes = match output.format {
                Format::Json => to_json(&study)?,
                Format::Csv => ordering_csv(&study)?,
            };
            write(output, &bytes)?;
            Ok(study.invariant)
        }
        Command::LineBundle { output } => {
            let s = load(cli, &output.scenario)?;
            let r = pipeline::run_verify(&s, false)?;
            if r.line.is_none() {
                anyhow::bail!("{} is not a line-bundle scenario", output.scenario.display());
            }
            write(output, &emit_report(&r, output.format)?)?;
            Ok(r.all_match())
        }
        Command::Diagnostics { output, samples } => {
            let s = load(cli, &output.scenario)?;
            let d = pipeline::run_diagnostics(&s, *samples)?;
            let bytes = match output.format {
                Format::Json => to_json(&d)?,
                Format::Csv => diagnostics_csv(&d)?,
            };
            write(output, &bytes)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
