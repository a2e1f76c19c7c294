use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tms_core::cli_io::harness::decay_band;
use tms_core::cli_io::{exit_code, fit_csv, parse_config, run_check, run_convergence, run_decay, run_evolve, SimConfig, Suite};
use tms_core::evolution::Status;
use tms_core::{Error, Result};

/// Timelike minimal graphs: evolution, property checks, convergence and decay.
#[derive(Parser)]
#[command(name = "tms", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve a configuration and write norms.csv, energy.csv, snapshots and run_manifest.
    Evolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a property suite: identities, nullforms, commutators or expansion.
    Check {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evolve at N, 2N (and 4N) and report observed orders.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        refinements: usize,
    },
    /// Evolve and fit decay exponents, or fit an existing CSV.
    Decay {
        #[arg(long, required_unless_present = "fit_only")]
        config: Option<PathBuf>,
        #[arg(long)]
        fit_only: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    parse_config(&text)
}

fn report_failure(status: &Status) {
    match status {
        Status::CoercivityLost { cell, t, margin } => {
            eprintln!("CoercivityLost at cell {cell}, t = {t}, margin = {margin:e}")
        }
        Status::NonFinite { cell, t } => eprintln!("NonFinite at cell {cell}, t = {t}"),
        Status::Ok => {}
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Evolve { config } => {
            let cfg = load(&config)?;
            let s = run_evolve(&cfg)?;
            report_failure(&s.status);
            if let Some(f) = &s.failure {
                eprintln!("offending cell index {:?}, position {:?}", f.index, f.position);
            }
            println!(
                "{}: {} steps, dt = {}, t = {}, output in {}",
                s.status.name(),
                s.steps,
                s.dt,
                s.final_state.t,
                s.output_dir.display()
            );
            Ok(s.exit_code())
        }
        Cmd::Check { suite, seed } => {
            let r = run_check(Suite::parse(&suite)?, seed)?;
            println!("{r}");
            Ok(if r.pass() { 0 } else { 1 })
        }
        Cmd::Convergence { config, refinements } => {
            let t = run_convergence(&load(&config)?, refinements)?;
            print!("{t}");
            Ok(0)
        }
        Cmd::Decay { config, fit_only } => {
            let cfg = config.as_deref().map(load).transpose()?;
            if let Some(csv) = fit_only {
                let mut r = fit_csv(&csv, cfg.as_ref().and_then(|c| c.fit_t_lo), cfg.as_ref().and_then(|c| c.fit_t_hi))?;
                if let Some(c) = &cfg {
                    r.n = Some(c.n);
                    r.target = Some(-((c.n as f64) - 1.0) / 2.0);
                    r.band = Some(decay_band(c.n));
                }
                println!("{r}");
                return Ok(if r.verdict() == Some(false) { 1 } else { 0 });
            }
            let cfg = cfg.expect("clap requires --config without --fit-only");
            let (r, s) = run_decay(&cfg)?;
            report_failure(&s.status);
            if s.status != Status::Ok {
                return Ok(exit_code(&s.status));
            }
            println!("{r}");
            Ok(if r.verdict() == Some(false) { 1 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
