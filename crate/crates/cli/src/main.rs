//! `qrobust`: robustness analysis of coherently controlled quantum dynamics.
//!
//! Reads one JSON experiment config, runs one command, writes versioned,
//! hash-stamped artifacts into the output directory and prints their paths.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use crate::config::{apply_overrides, load_config, resolve, ExperimentConfig, Overrides};

const AFTER_HELP: &str = "\
Exit codes: 0 ok, 1 domain error (computation failed), 2 usage error \
(bad flags or invalid config). Failures print one JSON object to stderr: \
{\"error\": ..., \"kind\": \"usage\"|\"domain\"}.

Worker threads: --workers beats the QROBUST_WORKERS environment variable; \
results are bit-identical for any worker count.

Artifacts (all carry `# version` / `# config_sha256` comment lines or a \
JSON `meta` object):
  simulate.json    propagator U(T) as {re,im} entries, transition
                   probability, unitarity defect
  pathways.csv     kind,alpha,gamma,order,re_raw,im_raw,re_coeff,im_coeff
                   (alpha is hyphen-joined exponents, lowest encoding
                   frequency first; complex values are rotated by
                   analysis.phase, default E_final*T)
  pathways.json    full pathway table (same rotation)
  moments.csv      sigma,expected_probability,mean_re,mean_im,variance_re,
                   variance_im,covariance_re_im,total_variance,
                   same_order_total,cross_order_total (one row per
                   uncertainty.sweep entry; amplitude sigmas are fractions
                   of the nominal amplitudes, dipole sigmas absolute)
  moments.json     full moment reports per sigma
  worstcase.json   gradient, chi-square radius, worst deviation, predicted
                   worst probability (requires uncertainty.kind = dipole)
  sample.json      Monte Carlo statistics with standard errors
  optimize.json    best synthesized field (genes and modes)
  history.csv      generation,best,mean,std
  figure_*.csv     plot series selected by --figure:
    moment-growth       power,nominal,expected,ratio
    interference        sigma,expected_probability,same_order_total,
                        cross_order_total,total_variance
    interference-orders order_row,order_col,nominal_re,nominal_im,
                        expected_re,expected_im
    order-amplitudes    order,nominal_re,nominal_im,nominal_abs,
                        expected_re,expected_im,expected_abs
    mode-sigma-sweep    varied_sigma,expected_probability,
                        cross_order_total,total_variance (second mode
                        varied, others pinned at uncertainty.sigma)
    field-trajectory    time,field_value,nominal_probability,
                        expected_probability
    amplitude-tradeoff  amplitude,best_seed,best_nominal,
                        expected_probability,significant_orders,genes
";

#[derive(Parser)]
#[command(
    name = "qrobust",
    version,
    about = "Pathway, moment, Monte Carlo, worst-case and optimizer analysis \
             of driven N-level dynamics",
    after_long_help = AFTER_HELP
)]
struct Cli {
    /// JSON experiment config; omitted = built-in defaults (reference
    /// system, eps1 preset).
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR", default_value = "out", global = true)]
    out: PathBuf,

    /// Override mc.seed and ga.seed.
    #[arg(long, value_name = "N", global = true)]
    seed: Option<u64>,

    /// Comma-separated sigma list; overrides uncertainty.sweep (and
    /// uncertainty.sigma when a single value is given).
    #[arg(long, value_name = "LIST", value_delimiter = ',', global = true)]
    sigma: Option<Vec<f64>>,

    /// Figure name for the report command.
    #[arg(long, value_name = "NAME", global = true)]
    figure: Option<String>,

    /// Override the field block with a named preset (eps1 .. eps8).
    #[arg(long, value_name = "NAME", global = true)]
    preset: Option<String>,

    /// Worker thread count (default: all cores).
    #[arg(long, value_name = "N", global = true)]
    workers: Option<usize>,

    /// Command name; alternative to the positional subcommand.
    #[arg(long = "command", value_name = "NAME")]
    command_flag: Option<String>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Debug)]
enum Command {
    /// Propagate the nominal dynamics and write U(T).
    Simulate,
    /// Decode the pathway table for the configured uncertainty kind.
    Pathways,
    /// Analytic uncertainty moments over the sigma sweep.
    Moments,
    /// First-order worst case over the dipole confidence ellipsoid.
    Worstcase,
    /// Monte Carlo statistics for the configured uncertainty.
    Sample,
    /// Synthesize a control field with the genetic optimizer.
    Optimize,
    /// Plot-data series (pick one with --figure).
    Report,
}

fn parse_command_name(name: &str) -> Result<Command> {
    match name {
        "simulate" => Ok(Command::Simulate),
        "pathways" => Ok(Command::Pathways),
        "moments" => Ok(Command::Moments),
        "worstcase" => Ok(Command::Worstcase),
        "sample" => Ok(Command::Sample),
        "optimize" => Ok(Command::Optimize),
        "report" => Ok(Command::Report),
        other => Err(anyhow!(
            "unknown command {other:?}; expected simulate, pathways, moments, \
             worstcase, sample, optimize or report"
        )),
    }
}

enum Failure {
    Usage(anyhow::Error),
    Domain(anyhow::Error),
}

impl Failure {
    fn exit(self) -> ExitCode {
        let (kind, err, code) = match self {
            Failure::Usage(e) => ("usage", e, 2u8),
            Failure::Domain(e) => ("domain", e, 1u8),
        };
        eprintln!(
            "{}",
            serde_json::json!({ "error": format!("{err:#}"), "kind": kind })
        );
        ExitCode::from(code)
    }
}

fn usage<T>(result: Result<T>) -> Result<T, Failure> {
    result.map_err(Failure::Usage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for path in &paths {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(failure) => failure.exit(),
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Failure> {
    configure_workers(cli.workers)?;

    let command = match (cli.command, &cli.command_flag) {
        (Some(sub), _) => sub,
        (None, Some(name)) => usage(parse_command_name(name))?,
        (None, None) => {
            return Err(Failure::Usage(anyhow!(
                "no command given; pass a subcommand or --command NAME \
                 (see --help)"
            )))
        }
    };

    let mut config = match &cli.config {
        Some(path) => usage(load_config(path))?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(
        &mut config,
        &Overrides {
            seed: cli.seed,
            sigma: cli.sigma.clone(),
            preset: cli.preset.clone(),
        },
    );
    let resolved = usage(resolve(config))?;

    let figure = match command {
        Command::Report => {
            let name = usage(cli.figure.clone().ok_or_else(|| {
                anyhow!("report needs --figure NAME (one of {})", commands::FIGURES.join(", "))
            }))?;
            if !commands::FIGURES.contains(&name.as_str()) {
                return Err(Failure::Usage(anyhow!(
                    "unknown figure {name:?}; expected one of {}",
                    commands::FIGURES.join(", ")
                )));
            }
            Some(name)
        }
        _ => None,
    };

    let result = match command {
        Command::Simulate => commands::simulate(&resolved, &cli.out),
        Command::Pathways => commands::pathways(&resolved, &cli.out),
        Command::Moments => commands::moments(&resolved, &cli.out),
        Command::Worstcase => commands::worstcase(&resolved, &cli.out),
        Command::Sample => commands::sample(&resolved, &cli.out),
        Command::Optimize => commands::optimize_fields(&resolved, &cli.out),
        Command::Report => {
            commands::report(&resolved, &cli.out, figure.as_deref().expect("validated above"))
        }
    };
    result.map_err(Failure::Domain)
}

fn configure_workers(flag: Option<usize>) -> Result<(), Failure> {
    let workers = match flag {
        Some(n) => Some(n),
        None => match std::env::var("QROBUST_WORKERS") {
            Ok(text) => Some(usage(text.parse::<usize>().map_err(|e| {
                anyhow!("QROBUST_WORKERS must be a positive integer: {e}")
            }))?),
            Err(_) => None,
        },
    };
    if let Some(n) = workers {
        if n == 0 {
            return Err(Failure::Usage(anyhow!("worker count must be >= 1")));
        }
        // A failure here means a pool already exists (e.g. in-process reuse);
        // determinism does not depend on the pool size, so ignore it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
