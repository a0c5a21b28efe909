//! `supercrit`: command-line front end for the supercrit laboratory.
//!
//! Exit codes: 0 success, 1 invalid input or domain error, 2 numerical
//! failure. Failures print a JSON diagnostic on standard error.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use config::{GridKind, InputError, RunConfig};
use output::Sink;
use std::path::PathBuf;
use std::process::ExitCode;
use supercrit_core::shooting::Precision;

/// Environment variable for the worker thread count.
const THREADS_ENV: &str = "SUPERCRIT_THREADS";

#[derive(Parser)]
#[command(name = "supercrit", version, about = "Concentration and oscillation laboratory for supercritical radial problems")]
struct Cli {
    /// Write PREFIX.csv and/or PREFIX.json instead of standard output.
    #[arg(long, global = true, value_name = "PREFIX")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Double,
    #[value(alias = "paired-double")]
    Dd,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Dd => Precision::PairedDouble,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Growth pair (q, p) of the model as JSON.
    Classify {
        #[arg(long, value_name = "CONFIG")]
        model: PathBuf,
    },
    /// Recurrence table as CSV.
    Sequences {
        #[arg(long, alias = "config", value_name = "CONFIG")]
        model: Option<PathBuf>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Limit profile z_k sampled on a log grid as CSV.
    Profile {
        #[arg(long, alias = "config", value_name = "CONFIG")]
        model: Option<PathBuf>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        rmin: Option<f64>,
        #[arg(long)]
        rmax: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// One shot from the center value mu: trajectory CSV and summary JSON.
    Shoot {
        #[arg(long, value_name = "CONFIG")]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        #[arg(long, value_enum)]
        precision: Option<PrecisionArg>,
    },
    /// Bifurcation diagram over a mu range: CSV and oscillation summary JSON.
    Sweep {
        #[arg(long, value_name = "CONFIG")]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        mu_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        mu_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, value_enum)]
        grid: Option<GridKind>,
        /// JSON report written by `singular` for the same model.
        #[arg(long, value_name = "SINGULAR_JSON")]
        reference: Option<String>,
        #[arg(long, value_enum)]
        precision: Option<PrecisionArg>,
    },
    /// Singular solution V*: trajectory CSV and summary JSON.
    Singular {
        #[arg(long, value_name = "CONFIG")]
        model: PathBuf,
        /// Matching radius; found automatically when omitted.
        #[arg(long)]
        rbar: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_enum)]
        precision: Option<PrecisionArg>,
    },
    /// Bump statistics of one shot against their predicted limits as JSON.
    Verify {
        #[arg(long, value_name = "CONFIG")]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        #[arg(long)]
        against_singular: bool,
        #[arg(long, value_enum)]
        precision: Option<PrecisionArg>,
    },
}

#[derive(Clone, Copy)]
enum Kind {
    Classify,
    Sequences,
    Profile,
    Shoot,
    Sweep,
    Singular,
    Verify,
}

fn run(cli: Cli) -> Result<()> {
    let (kind, path) = match &cli.command {
        Command::Classify { model } => (Kind::Classify, Some(model.clone())),
        Command::Sequences { model, .. } => (Kind::Sequences, model.clone()),
        Command::Profile { model, .. } => (Kind::Profile, model.clone()),
        Command::Shoot { model, .. } => (Kind::Shoot, Some(model.clone())),
        Command::Sweep { model, .. } => (Kind::Sweep, Some(model.clone())),
        Command::Singular { model, .. } => (Kind::Singular, Some(model.clone())),
        Command::Verify { model, .. } => (Kind::Verify, Some(model.clone())),
    };
    let mut cfg = RunConfig::load(path.as_deref())?;
    let t = &mut cfg.task;
    macro_rules! over {
        ($($field:ident),*) => {{ $( if let Some(v) = $field { t.$field = Some(v); } )* }};
    }
    let mut precision = None;
    match cli.command {
        Command::Classify { .. } => {}
        Command::Sequences { q, k, tol, .. } => over!(q, k, tol),
        Command::Profile { q, k, rmin, rmax, samples, .. } => over!(q, k, rmin, rmax, samples),
        Command::Shoot { mu, precision: p, .. } => {
            over!(mu);
            precision = p;
        }
        Command::Sweep { mu_min, mu_max, points, grid, reference, precision: p, .. } => {
            over!(mu_min, mu_max, points, grid, reference);
            precision = p;
        }
        Command::Singular { rbar, beta, precision: p, .. } => {
            over!(rbar, beta);
            precision = p;
        }
        Command::Verify { mu, against_singular, precision: p, .. } => {
            if against_singular {
                t.against_singular = Some(true);
            }
            over!(mu);
            precision = p;
        }
    }
    if let Some(p) = precision {
        cfg.solver.precision = p.into();
    }
    cfg.solver.validate()?;
    if let Some(o) = cli.out {
        cfg.output.prefix = Some(o.to_string_lossy().into_owned());
    }
    let sink = Sink { prefix: cfg.output.prefix.clone().map(PathBuf::from) };
    match kind {
        Kind::Classify => commands::classify(&cfg, &sink),
        Kind::Sequences => commands::sequences(&mut cfg, &sink),
        Kind::Profile => commands::profile(&mut cfg, &sink),
        Kind::Shoot => commands::shoot(&mut cfg, &sink),
        Kind::Sweep => commands::sweep(&mut cfg, &sink),
        Kind::Singular => commands::singular(&mut cfg, &sink),
        Kind::Verify => commands::verify(&mut cfg, &sink),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(ce) = cause.downcast_ref::<supercrit_core::Error>() {
            return if ce.is_domain() { 1 } else { 2 };
        }
    }
    1
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| InputError(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(InputError(format!("{THREADS_ENV} must be positive")).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<supercrit_core::Error>())
                .map(|ce| ce.kind())
                .unwrap_or("input");
            let diag = serde_json::json!({ "error": kind, "message": format!("{e:#}"), "exit_code": code });
            eprintln!("{diag}");
            ExitCode::from(code)
        }
    }
}
