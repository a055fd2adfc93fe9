//! `pite`: runs the experiment sweeps, validates configs and evaluates
//! single cost-model points.
//!
//! Settings resolve in the order command-line flag, config key, built-in
//! default for the chosen experiment.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pite_core::cost::Method;
use pite_core::experiment::{
    run, single_cost, to_csv, validate, DiagnosticKind, ExperimentConfig, ExperimentKind,
    MANIFEST_FILE,
};
use pite_core::Error;

#[derive(Parser)]
#[command(
    name = "pite",
    version,
    about = "PITE, PITE+QAA and QPE experiments on Heisenberg chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's `output`, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Success probability used for m* instead of the spectral value.
        #[arg(long)]
        p_estimate: Option<f64>,
    },
    /// Print the diagnostics of a config as JSON.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate one cost-model point and print it as CSV.
    Cost {
        /// One of pite, pite+qaa, qpe, qpe+aa.
        #[arg(long)]
        method: String,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        delta: f64,
        /// Chain used for d_CRTE and the QPE phase gap.
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        r: Option<usize>,
    },
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
            p_estimate,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            if p_estimate.is_some() {
                cfg.p_estimate = p_estimate;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let threads = threads.or(cfg.threads);
            let result = run(&cfg.resolve(), &out, threads)?;
            eprintln!(
                "wrote {} ({} rows) and {}",
                out.join(result.file).display(),
                result.rows,
                out.join(MANIFEST_FILE).display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let diagnostics = validate(&ExperimentConfig::load(&config)?.resolve());
            println!("{}", serde_json::to_string_pretty(&diagnostics)?);
            match diagnostics
                .iter()
                .find(|d| d.kind == DiagnosticKind::Resource)
            {
                Some(d) => Err(Error::Resource(d.message.clone())),
                None => match diagnostics.first() {
                    Some(d) => Err(Error::Config(d.message.clone())),
                    None => Ok(()),
                },
            }
        }
        Command::Cost {
            method,
            c1,
            delta,
            n,
            seed,
            r,
        } => {
            let method = Method::parse(&method)?;
            let mut cfg = ExperimentConfig::new(ExperimentKind::CostSweep);
            cfg.n = Some(n);
            cfg.seed = Some(seed);
            cfg.r = r;
            let point = single_cost(&cfg.resolve(), method, c1, delta)?;
            std::io::stdout().write_all(&to_csv(&[point])?)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
