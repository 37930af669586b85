//! `rcert <command> --config <file> --out <dir> [--horizon T] [--tol x]`
//!
//! Exit status: 0 when the command completed with verified or classified output,
//! 2 when a certificate is falsified or inconclusive, 1 on errors.

mod config;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rcert_core::cert::Theorem;

use run::{Command, Overrides};

#[derive(Parser)]
#[command(name = "rcert", version, about = "Riccati-method certificates for second order nonlinear ODEs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the hypotheses of one theorem.
    Certify {
        theorem: TheoremArg,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate one trajectory and export it as CSV.
    Integrate(Common),
    /// Integrate and classify one trajectory.
    Classify(Common),
    /// Classify a raster of initial data.
    Sweep(Common),
    /// Emden-Fowler case study.
    Emden(Common),
    /// Van der Pol case study.
    Vdp(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Absolute end time, overriding the config.
    #[arg(long)]
    horizon: Option<f64>,
    /// Relative integration tolerance, overriding the config.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    #[value(name = "t3_1")]
    T3_1,
    #[value(name = "t3_2")]
    T3_2,
    #[value(name = "t3_3")]
    T3_3,
    #[value(name = "t3_4")]
    T3_4,
    #[value(name = "t3_5")]
    T3_5,
    #[value(name = "t3_6")]
    T3_6,
    #[value(name = "t4_2")]
    T4_2,
}

impl From<TheoremArg> for Theorem {
    fn from(t: TheoremArg) -> Self {
        match t {
            TheoremArg::T3_1 => Theorem::T3_1,
            TheoremArg::T3_2 => Theorem::T3_2,
            TheoremArg::T3_3 => Theorem::T3_3,
            TheoremArg::T3_4 => Theorem::T3_4,
            TheoremArg::T3_5 => Theorem::T3_5,
            TheoremArg::T3_6 => Theorem::T3_6,
            TheoremArg::T4_2 => Theorem::T4_2,
        }
    }
}

fn thread_pool() -> Result<()> {
    let Ok(v) = std::env::var("RCERT_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("RCERT_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        bail!("RCERT_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn write_outputs(out: &Path, outcome: &run::Outcome) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("report.json");
    std::fs::write(&path, report::to_text(&outcome.report)).with_context(|| format!("writing {}", path.display()))?;
    for (name, bytes) in &outcome.files {
        let path = out.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    thread_pool()?;
    let (cmd, common) = match cli.command {
        Cmd::Certify { theorem, common } => (Command::Certify(theorem.into()), common),
        Cmd::Integrate(c) => (Command::Integrate, c),
        Cmd::Classify(c) => (Command::Classify, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Emden(c) => (Command::Emden, c),
        Cmd::Vdp(c) => (Command::Vdp, c),
    };
    let cfg = config::load(&common.config)?;
    let ov = Overrides { horizon: common.horizon, tol: common.tol };
    let outcome = run::run(cfg, cmd, ov)?;
    write_outputs(&common.out, &outcome)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    Ok(outcome.settled)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
