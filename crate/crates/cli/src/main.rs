use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use wprelay_core::experiment::{self, Scheme};
use wprelay_core::{ResultTable, Scenario};

/// Rate sweeps and convergence traces for wireless-powered MIMO relaying.
#[derive(Parser)]
#[command(name = "wprelay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean rate of each scheme over the power-splitting grid.
    SweepRho(Common),
    /// Mean rate over the power-splitting grid at several relay positions.
    SweepDistance(Common),
    /// Objective trace of each scheme on one channel drop.
    Converge(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    drops: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scheme to run, e.g. EFA-OPT; repeat for several.
    #[arg(long = "scheme")]
    schemes: Vec<Scheme>,
    /// Relay antennas.
    #[arg(long = "rR")]
    r_relay: Option<usize>,
    /// Source and destination antennas.
    #[arg(long)]
    r: Option<usize>,
    /// Destination power in W.
    #[arg(long)]
    pd: Option<f64>,
    /// Source power in W.
    #[arg(long)]
    ps: Option<f64>,
    /// Rician factor.
    #[arg(long)]
    k: Option<f64>,
}

/// Relay positions swept when no `dr_ratio` grid is configured.
const DISTANCE_GRID: &str = "0.1:0.1:0.9";

fn scenario(kind: &Command, c: &Common) -> Result<Scenario> {
    let mut s = Scenario::default();
    match kind {
        Command::SweepRho(_) => {}
        Command::SweepDistance(_) => s.set("dr_ratio", DISTANCE_GRID)?,
        Command::Converge(_) => {
            let p = experiment::convergence_params();
            s.dr_ratio_grid = vec![p.d_dr / p.d_ds()];
            s.rho_grid = vec![p.rho];
            s.params = p;
        }
    }
    if let Some(path) = &c.config {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        s.apply_config(BufReader::new(f))
            .with_context(|| format!("reading {}", path.display()))?;
    }
    let flags = [
        ("drops", c.drops.map(|v| v.to_string())),
        ("seed", c.seed.map(|v| v.to_string())),
        ("r_relay", c.r_relay.map(|v| v.to_string())),
        ("r", c.r.map(|v| v.to_string())),
        ("p_dest", c.pd.map(|v| v.to_string())),
        ("p_source", c.ps.map(|v| v.to_string())),
        ("rician_k", c.k.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            s.set(key, &v)?;
        }
    }
    if !c.schemes.is_empty() {
        s.schemes = c.schemes.clone();
    }
    s.validate()?;
    Ok(s)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn summarize(s: &Scenario, t: &ResultTable) {
    for &dr in &s.dr_ratio_grid {
        for &scheme in &s.schemes {
            if let Some(best) = t.best_rho(scheme, dr) {
                eprintln!(
                    "d_DR/d_DS {dr:.3} {scheme:<8} best rho {:.2} mean rate {:.4} bits (stderr {:.4}, {} flagged)",
                    best.rho, best.mean_rate_bits, best.stderr, best.n_flagged
                );
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (Command::SweepRho(c) | Command::SweepDistance(c) | Command::Converge(c)) = &cli.command;
    let s = scenario(&cli.command, c)?;
    let mut out = output(&c.out)?;
    if let Command::Converge(_) = cli.command {
        let ch = experiment::drop_channels(&s, 0, 0)?;
        let p = s.params_at(s.rho_grid[0], s.dr_ratio_grid[0]);
        let traces = experiment::convergence_report(&ch, &p, &s.schemes, &s.iter, s.diag_tol)?;
        experiment::write_traces_csv(&traces, &mut out)?;
        out.flush()?;
        for t in &traces {
            eprintln!(
                "{:<8} {} iterations, converged {}, rate {:.4} bits",
                t.scheme,
                t.iterations(),
                t.converged,
                t.rate_bits
            );
        }
        return Ok(ExitCode::SUCCESS);
    }
    let t = experiment::run_scenario(&s)?;
    experiment::emit_csv(&t, &mut out)?;
    out.flush()?;
    summarize(&s, &t);
    let flagged = t.max_flagged_fraction();
    if flagged > 0.5 {
        eprintln!("more than half of the drops were flagged in some cell ({flagged:.2})");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
