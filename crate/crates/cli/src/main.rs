use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irhc::config::{ExperimentConfig, Table1Config};
use irhc::{experiment, Error};

/// Interval-wise receding horizon control experiments.
#[derive(Debug, Parser)]
#[command(name = "irhc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the output files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed loop and write trace.csv and summary.json.
    Simulate(Common),
    /// Estimate a stabilizability certificate and write certificate.json.
    Certify(Common),
    /// Run the comparison table and write table1.csv and table1.md.
    Table1(Common),
    /// Check the cost bounds on a run and write bounds.json.
    CheckBounds {
        #[command(flatten)]
        common: Common,
        /// Use this trace instead of simulating.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Use this certificate instead of certifying.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.reseed(seed);
    }
    Ok(cfg)
}

fn load_table(common: &Common) -> Result<Table1Config, Error> {
    let mut cfg = Table1Config::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
    }
    Ok(cfg)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::DimensionMismatch { .. } | Error::Json(_) => 2,
        _ => 3,
    }
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = load(&common)?;
            let (_, summary) = experiment::write_simulation(&cfg, &common.out)?;
            report(&common.out.join("trace.csv"));
            report(&common.out.join("summary.json"));
            println!(
                "{}: cost {:.4} over {} steps ({:?}){}",
                summary.controller,
                summary.run.total_cost,
                summary.run.steps,
                summary.run.termination,
                if summary.run.unstable { ", unstable" } else { "" }
            );
            Ok(match summary.run.termination {
                irhc::record::Termination::Aborted { .. } => 3,
                _ => 0,
            })
        }
        Command::Certify(common) => {
            let cfg = load(&common)?;
            let cert = experiment::write_certificate(&cfg, &common.out)?;
            report(&common.out.join("certificate.json"));
            match cert.sigma {
                Some(s) => println!("sigma = {s} over {} samples", cert.sample_states.len()),
                None => println!(
                    "no admissible sequence at {} of {} samples; partial sigma = {:?}",
                    cert.infeasible_samples,
                    cert.sample_states.len(),
                    cert.sigma_partial
                ),
            }
            Ok(if cert.all_feasible { 0 } else { 3 })
        }
        Command::Table1(common) => {
            let cfg = load_table(&common)?;
            let table = experiment::write_table1(&cfg, &common.out)?;
            report(&common.out.join("table1.csv"));
            report(&common.out.join("table1.md"));
            print!("{}", table.to_markdown());
            Ok(0)
        }
        Command::CheckBounds {
            common,
            trace,
            certificate,
        } => {
            let cfg = load(&common)?;
            let rep = experiment::write_bounds(&cfg, trace.as_deref(), certificate.as_deref(), &common.out)?;
            report(&common.out.join("bounds.json"));
            if !rep.certificate_complete {
                println!("certificate incomplete; using partial sigma = {}", rep.sigma);
            }
            for c in &rep.checks {
                println!("{:<24} {} (margin {:.3e})", c.name, if c.passed { "pass" } else { "FAIL" }, c.margin);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
