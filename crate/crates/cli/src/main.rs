mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use suspvisc::{Error, ProcessKind};

use crate::commands::Writer;
use crate::config::CampaignConfig;

#[derive(Parser)]
#[command(name = "suspvisc", version, about = "Effective viscosity of rigid-particle suspensions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate particle configurations.
    Gen(Flags),
    /// Solve the corrector problem for one configuration.
    Solve(Flags),
    /// Ensemble-averaged effective viscosity tensor.
    Effvisc(Flags),
    /// Sweep the volume fraction and fit the first-order coefficient.
    Einstein(Flags),
    /// Cluster-expansion terms of a small configuration.
    Cluster(Flags),
    /// Pair kernels and the second-order coefficient.
    Bg(Flags),
    /// Variational sandwich bounds.
    Bounds(Flags),
    /// Mean-value-property ratios for a fixed geometry.
    Mvp(Flags),
    /// Finite-volume convergence at fixed voxel size.
    Converge(Flags),
}

impl Command {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Command::Gen(f) => ("gen", f),
            Command::Solve(f) => ("solve", f),
            Command::Effvisc(f) => ("effvisc", f),
            Command::Einstein(f) => ("einstein", f),
            Command::Cluster(f) => ("cluster", f),
            Command::Bg(f) => ("bg", f),
            Command::Bounds(f) => ("bounds", f),
            Command::Mvp(f) => ("mvp", f),
            Command::Converge(f) => ("converge", f),
        }
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Default)]
struct Flags {
    /// TOML campaign file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the effective configuration to this path and exit.
    #[arg(long)]
    emit_config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Box side, or a comma list for `converge`.
    #[arg(long = "L", value_delimiter = ',')]
    side: Option<Vec<f64>>,
    /// Volume fraction, or a comma list for `einstein`.
    #[arg(long, value_delimiter = ',')]
    phi: Option<Vec<f64>>,
    /// rsa, lattice, matern or poisson.
    #[arg(long)]
    process: Option<String>,
    #[arg(long)]
    gap: Option<f64>,
    /// Configurations per ensemble.
    #[arg(long)]
    configs: Option<usize>,
    /// Grid points per axis.
    #[arg(long)]
    n: Option<usize>,
    /// Particle viscosity contrast.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Clamp strength of `mvp`; zero selects `theta`.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Basis strain index.
    #[arg(long)]
    strain: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    allow_large: bool,
    /// Configuration JSON to use instead of generating one.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    data_count: Option<usize>,
    #[arg(long)]
    voxel: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long)]
    numeric_near: bool,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    tensor: bool,
    /// Extrapolate `effvisc` in 1/theta.
    #[arg(long)]
    richardson: bool,
    /// Increase log verbosity.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Flags {
    fn apply(&self, c: &mut CampaignConfig) -> suspvisc::Result<()> {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.out, c.output);
        set!(self.seed, c.seed);
        set!(self.dim, c.ensemble.dim);
        set!(self.gap, c.ensemble.gap);
        set!(self.configs, c.n_configs);
        set!(self.n, c.solver.n);
        set!(self.theta, c.solver.theta);
        set!(self.tol, c.solver.tol);
        set!(self.kappa, c.solver.kappa);
        set!(self.max_iter, c.solver.max_iter);
        set!(self.strain, c.options.strain);
        set!(self.particles, c.options.particles);
        set!(self.radius, c.options.radius);
        set!(self.data_count, c.options.data_count);
        set!(self.radii, c.options.radii);
        set!(self.bin_width, c.options.bin_width);
        if let Some(p) = &self.process {
            c.ensemble.process = ProcessKind::parse(p)?;
        }
        if let Some(list) = &self.phi {
            if let Some(&first) = list.first() {
                c.ensemble.phi = first;
            }
            c.phi = list.clone();
        }
        if let Some(list) = &self.side {
            if let Some(&first) = list.first() {
                c.ensemble.side = first;
            }
            c.sides = list.clone();
        }
        if self.input.is_some() {
            c.options.input = self.input.clone();
        }
        if self.voxel.is_some() {
            c.options.voxel = self.voxel;
        }
        c.options.allow_large |= self.allow_large;
        c.options.numeric_near |= self.numeric_near;
        c.options.tensor |= self.tensor;
        c.options.richardson |= self.richardson;
        Ok(())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Overlap(_) | Error::Renormalization(_) => 2,
        Error::NonConvergence { .. } => 3,
        Error::Campaign { .. } | Error::Saturation { .. } => 4,
        Error::Io(_) | Error::Json(_) | Error::Internal(_) => 1,
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn execute(name: &str, flags: &Flags) -> suspvisc::Result<()> {
    let mut cfg = match &flags.config {
        Some(p) => CampaignConfig::load(p)?,
        None => CampaignConfig::defaults(name),
    };
    cfg.command = name.to_string();
    flags.apply(&mut cfg)?;
    if let Some(p) = &flags.emit_config {
        return suspvisc::artifact::write_atomic(p, cfg.emit()?.as_bytes());
    }
    if let Some(j) = flags.jobs {
        if j == 0 {
            return Err(Error::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    std::fs::create_dir_all(&cfg.output)?;
    let started = unix_seconds();
    let clock = Instant::now();
    let mut w = Writer::new(&cfg);
    let outcome = commands::run(name, &mut w);
    let mut log = format!(
        "command = {name}\nstarted_unix = {started:.3}\nelapsed_s = {:.3}\nstatus = {}\n",
        clock.elapsed().as_secs_f64(),
        match &outcome {
            Ok(()) => "ok".to_string(),
            Err(e) => format!("error: {e}"),
        }
    );
    for p in &w.written {
        log.push_str(&format!("artifact = {}\n", p.display()));
    }
    let log_path = cfg.output.join(format!("{name}.log"));
    if let Err(e) = suspvisc::artifact::write_atomic(&log_path, log.as_bytes()) {
        log::warn!("cannot write {}: {e}", log_path.display());
    }
    outcome
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = cli.command.split();
    let level = match flags.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(name, &flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("suspvisc {name}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
