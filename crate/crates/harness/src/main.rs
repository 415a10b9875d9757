use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wcopt_harness::verify::{ensure_passed, summary_lines, verify, DEFAULT_SEED};
use wcopt_harness::{emit_report, enumerate, run_config, sweep, with_threads, Axis, ExperimentConfig, Format, Result};

#[derive(Parser)]
#[command(name = "wcopt", version, about = "Stability and generalization experiments for stochastic subgradient methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; falls back to WCOPT_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run every grid point of a config.
    Run { config: PathBuf },
    /// Sweep one grid axis of a config.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
    },
    /// Run the acceptance suite.
    Verify,
    /// Exact small-case stability by enumerating every index sequence.
    Enumerate { config: PathBuf },
}

fn thread_budget(flag: Option<usize>, cfg: Option<&ExperimentConfig>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Ok(v) = std::env::var("WCOPT_THREADS") {
        let t = v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| wcopt_harness::HarnessError::invalid(format!("WCOPT_THREADS must be a positive integer, got {v:?}")))?;
        return Ok(Some(t));
    }
    Ok(cfg.and_then(|c| c.threads))
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    if cli.threads == Some(0) {
        return Err(wcopt_harness::HarnessError::invalid("--threads must be positive"));
    }
    let (report, out) = match &cli.command {
        Command::Verify => {
            let threads = thread_budget(cli.threads, None)?;
            let report = verify(cli.seed.unwrap_or(DEFAULT_SEED), threads)?;
            for line in summary_lines(&report) {
                eprintln!("{line}");
            }
            (report, cli.out.clone())
        }
        Command::Run { config } | Command::Sweep { config, .. } | Command::Enumerate { config } => {
            let cfg = load(config, cli.seed)?;
            let threads = thread_budget(cli.threads, Some(&cfg))?;
            let out = cli.out.clone().or_else(|| cfg.out.clone());
            let report = with_threads(threads, || match &cli.command {
                Command::Sweep { axis, .. } => sweep(&cfg, *axis),
                Command::Enumerate { .. } => enumerate(&cfg),
                _ => run_config(&cfg),
            })?;
            (report, out)
        }
    };
    let bytes = emit_report(&report, cli.format)?;
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    if matches!(cli.command, Command::Verify) {
        ensure_passed(&report)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
