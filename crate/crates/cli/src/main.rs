//! `ssep`: simulations, solvers and convergence studies for the exclusion
//! process with current reservoirs.
//!
//! Exit codes: 0 ok, 1 configuration error, 2 numerical abort.

mod commands;
mod config;
mod error;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser};

use config::{RunConfig, Subcommand, OUTPUT_DIR_ENV};
use error::CliError;
use output::Writer;

#[derive(Parser)]
#[command(name = "ssep", version, about = "Exclusion process with current reservoirs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Monte Carlo ensemble: site means and standard errors
    Simulate(Flags),
    /// Exact law on a tiny lattice and its marginals
    Oracle(Flags),
    /// Discretized mean-field evolution
    Evolve(Flags),
    /// Boundary traces and macroscopic density
    Macro(Flags),
    /// Kernel tables or the a(h) coefficients
    Kernels(Flags),
    /// Microscopic currents against the macroscopic Fourier law
    Fourier(Flags),
    /// Hydrodynamic gap and continuity constants over a ladder of N
    Study(Flags),
}

/// Every flag is optional and overrides the config file.
#[derive(Args, Debug, Default)]
struct Flags {
    /// Flat key=value config file (an earlier artifact also works)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    threads: Option<String>,
    /// Lattice size N
    #[arg(long)]
    n: Option<String>,
    /// Reservoir width K
    #[arg(long)]
    k: Option<String>,
    /// Reservoir strength j
    #[arg(long)]
    j: Option<String>,
    /// const:c | linear:a,b | step:l,r[,at] | cos:m,a,k | table:r/v;... | file:path
    #[arg(long)]
    init: Option<String>,
    #[arg(long = "t-final")]
    t_final: Option<String>,
    /// Comma-separated output times
    #[arg(long)]
    times: Option<String>,
    /// Number of uniform output times on [0, t-final] when --times is absent
    #[arg(long = "n-times")]
    n_times: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Series and quadrature tolerance
    #[arg(long)]
    tol: Option<String>,
    /// Largest evolution step in units of eps^2
    #[arg(long)]
    dt: Option<String>,
    /// splitting | integral
    #[arg(long)]
    scheme: Option<String>,
    /// Macroscopic time step
    #[arg(long)]
    h: Option<String>,
    /// Macroscopic grid points on [-1, 1]
    #[arg(long)]
    nr: Option<String>,
    /// reflected | full-line | neumann | boundary | a
    #[arg(long)]
    kind: Option<String>,
    /// Comma-separated macroscopic points for the Fourier check
    #[arg(long)]
    points: Option<String>,
    /// Counting window for current estimators
    #[arg(long)]
    window: Option<String>,
    /// Comma-separated N values for `study`
    #[arg(long)]
    ladder: Option<String>,
    /// csv | json | both
    #[arg(long)]
    format: Option<String>,
    /// Output directory (overrides the environment variable)
    #[arg(long = "out-dir")]
    out_dir: Option<String>,
}

impl Flags {
    fn into_map(self) -> (Option<PathBuf>, BTreeMap<String, String>) {
        let pairs = [
            ("threads", self.threads),
            ("n", self.n),
            ("k", self.k),
            ("j", self.j),
            ("init", self.init),
            ("t-final", self.t_final),
            ("times", self.times),
            ("n-times", self.n_times),
            ("replicas", self.replicas),
            ("seed", self.seed),
            ("tol", self.tol),
            ("dt", self.dt),
            ("scheme", self.scheme),
            ("h", self.h),
            ("nr", self.nr),
            ("kind", self.kind),
            ("points", self.points),
            ("window", self.window),
            ("ladder", self.ladder),
            ("format", self.format),
            ("out-dir", self.out_dir),
        ];
        (self.config, pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect())
    }
}

fn execute(sub: Subcommand, flags: Flags) -> Result<(), CliError> {
    let started = Instant::now();
    let (config_path, flag_map) = flags.into_map();
    let file = match config_path {
        Some(p) => config::read_config_file(&p)?,
        None => BTreeMap::new(),
    };
    let cfg = RunConfig::resolve(sub, file, flag_map, std::env::var(OUTPUT_DIR_ENV).ok())?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let tables = commands::run(&cfg)?;
    let writer = Writer { config: &cfg, started };
    for table in &tables {
        for path in writer.write(table)? {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let (sub, flags) = match cli.command {
        Command::Simulate(f) => (Subcommand::Simulate, f),
        Command::Oracle(f) => (Subcommand::Oracle, f),
        Command::Evolve(f) => (Subcommand::Evolve, f),
        Command::Macro(f) => (Subcommand::Macro, f),
        Command::Kernels(f) => (Subcommand::Kernels, f),
        Command::Fourier(f) => (Subcommand::Fourier, f),
        Command::Study(f) => (Subcommand::Study, f),
    };
    match execute(sub, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssep: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
