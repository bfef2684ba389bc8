//! `dephaso`: batch driver for dephasing sweeps, harmonic tables, response
//! maps, tomography and timescale estimates.

mod commands;
mod config;
mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;
use config::{ConfigError, Format, RunConfig};
use output::{Dataset, Stamp};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "dephaso", version, about = "Two-qubit dephasing spectroscopy of 2D materials")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (overrides output.path); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format (overrides output.format).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads (overrides numerics.threads).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a config key, e.g. --set geometry.D_over_z=8.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Φ_c, Φ_s and Bell-state exponents versus pair angle β.
    SweepBeta,
    /// Single-qubit Φ_s versus azimuth α.
    SweepAlpha,
    /// Φ_c^{2n} and Ψ_c^{2n+1} harmonics versus D/z.
    Harmonics,
    /// Material response on a (q̃, θ_q) grid.
    ResponseMap,
    /// Reconstruct a radial harmonic profile from measured Φ_c^{2n}.
    Tomography {
        /// CSV with columns D,z (overrides tomography.geometries).
        #[arg(long)]
        geometries: Option<PathBuf>,
        /// CSV with columns channel,value (overrides tomography.measurements).
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// Characteristic single-qubit dephasing time of the material.
    Timescale,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SweepBeta => "sweep-beta",
            Command::SweepAlpha => "sweep-alpha",
            Command::Harmonics => "harmonics",
            Command::ResponseMap => "response-map",
            Command::Tomography { .. } => "tomography",
            Command::Timescale => "timescale",
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("--config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = cli.set.clone();
    if let Some(f) = cli.format {
        overrides.push(format!("output.format=\"{}\"", if f == Format::Csv { "csv" } else { "json" }));
    }
    if let Some(t) = cli.threads {
        overrides.push(format!("numerics.threads={t}"));
    }
    let mut cfg = RunConfig::load(&text, &overrides)?;
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load(&cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.numerics.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| ConfigError(format!("numerics.threads: {e}")))?;
    let name = cli.command.name();
    let ds: Dataset = pool.install(|| match cli.command {
        Command::SweepBeta => commands::sweep_beta(&cfg),
        Command::SweepAlpha => commands::sweep_alpha(&cfg),
        Command::Harmonics => commands::harmonics(&cfg),
        Command::ResponseMap => commands::response_map(&cfg),
        Command::Tomography { geometries, measurements } => commands::tomography(&cfg, geometries, measurements),
        Command::Timescale => commands::timescale(&cfg),
    })?;
    for w in &ds.warnings {
        log::warn!("{w}");
    }
    let hash = cfg.hash();
    let stamp = Stamp {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: &hash,
        config: serde_json::to_value(&cfg).expect("config serializes"),
    };
    let (format, digits) = (cfg.output.format, cfg.output.precision);
    let written = match &cfg.output.path {
        Some(p) => File::create(p).and_then(|f| {
            let mut w = BufWriter::new(f);
            output::write(&ds, &stamp, format, digits, &mut w)?;
            w.flush()
        }),
        None => {
            let mut w = std::io::stdout().lock();
            output::write(&ds, &stamp, format, digits, &mut w).and_then(|_| w.flush())
        }
    };
    written.map_err(|e| Failure::Io(format!("writing output: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Failure::Config(_) => EXIT_CONFIG,
                Failure::Numeric(_) => EXIT_NUMERIC,
                Failure::Io(_) => 1,
            })
        }
    }
}
