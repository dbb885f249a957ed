//! Command-line front end. `main_with` returns the process exit code:
//! 0 on success, 2 for config or usage errors, 3 when a run breaks a
//! model invariant.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use fabric_sim_core::ScenarioConfig;

use crate::config_io::{emit_config, load_config};
use crate::presets;
use crate::report::{self, RowOutcome, SummaryRow};
use crate::sweep;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "fabric-sim",
    version,
    about = "Discrete-event simulator of an endorse-order-commit ledger"
)]
pub struct Cli {
    /// Output directory (default: the config's output_dir, else `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario file.
    Run { config: PathBuf },
    /// Run a built-in preset, or write it out with --emit.
    Preset {
        name: String,
        /// Write the preset's config to this path instead of running it.
        #[arg(long)]
        emit: Option<PathBuf>,
        /// Seeds to replicate over, `a..b` (inclusive) or `a,b,c`.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Sweep a scenario file (or preset name) over a parameter grid.
    Sweep {
        config: String,
        /// `key=v1,v2,...`; repeatable. Keys are dotted paths or unique leaf names.
        #[arg(long)]
        grid: Vec<String>,
        /// `a..b` (inclusive) or `a,b,c`.
        #[arg(long)]
        seeds: Option<String>,
    },
}

fn command() -> clap::Command {
    Cli::command().after_help(presets::help_text())
}

pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
    }
}

/// Progress line on stdout. A closed pipe is not an error worth dying for.
fn say(args: std::fmt::Arguments<'_>) {
    let _ = writeln!(std::io::stdout(), "{args}");
}

fn out_dir(cli: &Cli, cfg: Option<&ScenarioConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: &Cli) -> Result<i32, String> {
    match &cli.command {
        Command::Run { config } => {
            let mut cfg = load_config(config).map_err(|e| e.to_string())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            single(cli, cfg)
        }
        Command::Preset { name, emit, seeds } => {
            if let Some(path) = emit {
                let mut cfg = presets::preset(name).map_err(|e| e.to_string())?;
                if let Some(s) = cli.seed {
                    cfg.seed = s;
                }
                fs::write(path, emit_config(&cfg))
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
                say(format_args!("wrote {}", path.display()));
                return Ok(EXIT_OK);
            }
            let mut bases = presets::expand(name).map_err(|e| e.to_string())?;
            for b in &mut bases {
                if let Some(s) = cli.seed {
                    b.seed = s;
                }
            }
            let seeds = seeds
                .as_deref()
                .map(sweep::parse_seeds)
                .transpose()
                .map_err(|e| e.to_string())?;
            if bases.len() == 1 && bases[0].sweep.is_none() && seeds.is_none() {
                let cfg = bases.pop().expect("one base");
                return single(cli, cfg);
            }
            many(cli, &bases, &[], seeds.as_deref())
        }
        Command::Sweep {
            config,
            grid,
            seeds,
        } => {
            let mut bases = if Path::new(config).exists() {
                vec![load_config(Path::new(config)).map_err(|e| e.to_string())?]
            } else {
                presets::expand(config).map_err(|_| {
                    format!("`{config}` is neither a readable file nor a preset name")
                })?
            };
            for b in &mut bases {
                if let Some(s) = cli.seed {
                    b.seed = s;
                }
            }
            let grid = grid
                .iter()
                .map(|g| sweep::parse_grid_arg(g))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let seeds = seeds
                .as_deref()
                .map(sweep::parse_seeds)
                .transpose()
                .map_err(|e| e.to_string())?;
            many(cli, &bases, &grid, seeds.as_deref())
        }
    }
}

fn single(cli: &Cli, cfg: ScenarioConfig) -> Result<i32, String> {
    let dir = out_dir(cli, Some(&cfg));
    let (outcome, result) = sweep::run_one(&cfg);
    let row = SummaryRow::new(cfg, Vec::new(), outcome);
    report::write_run(&dir, &row, result.as_ref()).map_err(|e| e.to_string())?;
    match &row.outcome {
        RowOutcome::Done(s) => {
            let c = &s.counters;
            say(format_args!(
                "{} at t={}: created {} endorsed {} dropped {} valid {} invalid {}; e2e_tps {} commit_tps {}",
                report::status_str(s.status),
                report::fmt_sig(s.end_time),
                c.created,
                c.endorsed,
                c.dropped,
                c.committed_valid,
                c.committed_invalid_mvcc,
                report::fmt_sig(s.throughput.e2e_tps),
                report::fmt_sig(s.throughput.commit_tps),
            ));
            say(format_args!("reports in {}", dir.display()));
            Ok(EXIT_OK)
        }
        RowOutcome::Failed { kind, message } => {
            eprintln!("{kind}: {message}");
            Ok(if *kind == "integrity_error" {
                EXIT_INTEGRITY
            } else {
                EXIT_CONFIG
            })
        }
    }
}

fn many(
    cli: &Cli,
    bases: &[ScenarioConfig],
    grid: &[(String, Vec<fabric_sim_core::config::GridValue>)],
    seeds: Option<&[u64]>,
) -> Result<i32, String> {
    let rows = sweep::run_sweep(bases, grid, seeds).map_err(|e| e.to_string())?;
    let dir = out_dir(cli, bases.first());
    report::write_sweep(&dir, &rows).map_err(|e| e.to_string())?;
    let failed: Vec<&SummaryRow> = rows
        .iter()
        .filter(|r| matches!(r.outcome, RowOutcome::Failed { .. }))
        .collect();
    for r in &failed {
        if let RowOutcome::Failed { kind, message } = &r.outcome {
            eprintln!(
                "{} seed {}: {kind}: {message}",
                r.config_hash, r.config.seed
            );
        }
    }
    say(format_args!(
        "{} runs, {} failed; summary in {}",
        rows.len(),
        failed.len(),
        dir.join("summary.csv").display()
    ));
    let integrity = failed.iter().any(|r| {
        matches!(
            r.outcome,
            RowOutcome::Failed {
                kind: "integrity_error",
                ..
            }
        )
    });
    Ok(if integrity { EXIT_INTEGRITY } else { EXIT_OK })
}
