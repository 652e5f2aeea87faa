//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use domkl_core::validate::{run_invariant_suite, Fault};

use crate::config::load_config;
use crate::error::SimResult;
use crate::io::{write_file, write_results, write_sweep};
use crate::simulator::{run_experiment, sweep, AggregateResult};

#[derive(Debug, Parser)]
#[command(name = "domkl", version, about = "Decentralized online multiple kernel learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write per-round MSE/CV curves.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides experiment.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides experiment.trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Final MSE/CV over a grid of rho and eta_g values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
        #[arg(long = "eta-g", value_delimiter = ',', required = true)]
        eta_g: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the invariant suite.
    Validate {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn summary<W: Write>(w: &mut W, res: &AggregateResult) -> std::io::Result<()> {
    writeln!(w, "{:<10} {:>14} {:>14}", "algorithm", "final_mse", "final_cv")?;
    for a in &res.algorithms {
        writeln!(w, "{:<10} {:>14.6e} {:>14.6e}", a.name, a.final_mse(), a.final_cv())?;
        if let Some(r) = a.regret {
            writeln!(w, "{:<10} regret_a {:.6e}  regret_d {:.6e}", "", r.accuracy, r.discrepancy)?;
        }
    }
    Ok(())
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &Path, trials: Option<usize>) -> SimResult<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let res = run_experiment(&cfg)?;
    let mut buf = Vec::new();
    write_results(&mut buf, &res)?;
    let path = out.join("results.csv");
    write_file(&path, &buf)?;
    let mut stdout = std::io::stdout().lock();
    let _ = summary(&mut stdout, &res);
    let _ = writeln!(stdout, "wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(config: &Path, rho: &[f64], eta_g: &[f64], out: &Path) -> SimResult<()> {
    let cfg = load_config(config)?;
    let rows = sweep(&cfg, rho, eta_g)?;
    let mut buf = Vec::new();
    write_sweep(&mut buf, &rows)?;
    let path = out.join("sweep.csv");
    write_file(&path, &buf)?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(&buf);
    let _ = writeln!(stdout, "wrote {}", path.display());
    Ok(())
}

/// Prints one line per check; `true` when all pass.
pub fn cmd_validate<W: Write>(w: &mut W, fault: Fault) -> bool {
    let start = Instant::now();
    let results = run_invariant_suite(fault);
    let mut ok = true;
    for r in &results {
        ok &= r.passed;
        let _ = writeln!(w, "[{}] {:<14} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let _ = writeln!(w, "{} checks in {:.2?}", results.len(), start.elapsed());
    if !ok {
        let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        let _ = writeln!(w, "failed: {}", failed.join(", "));
    }
    ok
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Run { config, seed, out, trials } => cmd_run(&config, seed, &out, trials),
        Command::Sweep { config, rho, eta_g, out } => cmd_sweep(&config, &rho, &eta_g, &out),
        Command::Validate { inject_fault } => {
            let fault = if inject_fault { Fault::DualSignFlip } else { Fault::None };
            return if cmd_validate(&mut std::io::stdout().lock(), fault) { 0 } else { 1 };
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
