use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use qfeedback::fockspace::GeneratorKind;
use qfeedback::trajectories::Scheme;

use crate::commands;
use crate::config::{Preset, RunConfig};
use crate::output::{write_dir, Manifest};

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "qfeedback",
    version,
    about = "Feedback cooling of a continuously measured quantum oscillator"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Named configuration; replaces its section of the config file.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<Preset>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Size of the thread pool for ensemble runs.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Write CSV files and a manifest here instead of printing to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary moments, optimal gains and decay rate.
    Steady(SteadyArgs),
    /// Integrate the second-moment equations.
    Moments(MomentsArgs),
    /// Ensemble of Gaussian mean-value trajectories.
    Ensemble(EnsembleArgs),
    /// Stochastic Schrödinger equation on a position grid.
    Grid(GridArgs),
    /// Non-selective master equation in a truncated Fock basis.
    Fock(FockArgs),
    /// Gains, bath occupation and effective temperature.
    Design(DesignArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Steady(_) => "steady",
            Command::Moments(_) => "moments",
            Command::Ensemble(_) => "ensemble",
            Command::Grid(_) => "grid",
            Command::Fock(_) => "fock",
            Command::Design(_) => "design",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Steady(a) => a.apply(cfg),
            Command::Moments(a) => a.apply(cfg),
            Command::Ensemble(a) => a.apply(cfg),
            Command::Grid(a) => a.apply(cfg),
            Command::Fock(a) => a.apply(cfg),
            Command::Design(a) => a.apply(cfg),
        }
    }
}

fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}

#[derive(Debug, Args)]
pub struct SteadyArgs {
    /// One or more values of κ.
    #[arg(long, num_args = 1.., conflicts_with = "kappa_grid")]
    pub kappa: Option<Vec<f64>>,
    /// `start:stop:lin|log:count`, e.g. `0.01:16:log:25`.
    #[arg(long, value_name = "SPEC")]
    pub kappa_grid: Option<String>,
}

impl SteadyArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = &self.kappa {
            cfg.steady.kappa = k.clone();
            cfg.steady.kappa_grid = None;
        }
        if self.kappa_grid.is_some() {
            cfg.steady.kappa_grid = self.kappa_grid.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub tau_end: Option<f64>,
    #[arg(long)]
    pub dtau: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
}

impl MomentsArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.moments;
        set(&mut m.kappa, &self.kappa);
        set(&mut m.tau_end, &self.tau_end);
        set(&mut m.dtau, &self.dtau);
        set(&mut m.stride, &self.stride);
    }
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub tau_end: Option<f64>,
    #[arg(long)]
    pub dtau: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "euler-maruyama" | "euler_maruyama" => Ok(Scheme::EulerMaruyama),
        "weak2" => Ok(Scheme::Weak2),
        _ => Err(format!("unknown scheme '{s}' (expected euler-maruyama or weak2)")),
    }
}

impl EnsembleArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let e = &mut cfg.ensemble;
        set(&mut e.kappa, &self.kappa);
        set(&mut e.n_traj, &self.n_traj);
        set(&mut e.tau_end, &self.tau_end);
        set(&mut e.dtau, &self.dtau);
        set(&mut e.record_stride, &self.stride);
        set(&mut e.scheme, &self.scheme);
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub record_stride: Option<usize>,
    #[arg(long)]
    pub snapshot_stride: Option<usize>,
}

impl GridArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let g = &mut cfg.grid;
        set(&mut g.t_end, &self.t_end);
        set(&mut g.dt, &self.dt);
        set(&mut g.record_stride, &self.record_stride);
        set(&mut g.snapshot_stride, &self.snapshot_stride);
    }
}

#[derive(Debug, Args)]
pub struct FockArgs {
    /// `full` or `rwa`.
    #[arg(long, value_parser = parse_generator)]
    pub generator: Option<GeneratorKind>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

fn parse_generator(s: &str) -> Result<GeneratorKind, String> {
    match s {
        "full" => Ok(GeneratorKind::Full),
        "rwa" => Ok(GeneratorKind::Rwa),
        _ => Err(format!("unknown generator '{s}' (expected full or rwa)")),
    }
}

impl FockArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let f = &mut cfg.fock;
        set(&mut f.generator, &self.generator);
        set(&mut f.kappa, &self.kappa);
        set(&mut f.u, &self.u);
        set(&mut f.v, &self.v);
        set(&mut f.n_max, &self.n_max);
        set(&mut f.t_end, &self.t_end);
        set(&mut f.dt, &self.dt);
    }
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
    /// SI gain u (kg/s²).
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<f64>,
    /// SI gain v (1/s).
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<f64>,
    /// Also report the temperature in kelvin.
    #[arg(long)]
    pub kelvin: bool,
}

impl DesignArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.design;
        set(&mut d.kappa, &self.kappa);
        set(&mut d.mass, &self.mass);
        set(&mut d.omega, &self.omega);
        set(&mut d.hbar, &self.hbar);
        if self.u.is_some() {
            d.u = self.u;
        }
        if self.v.is_some() {
            d.v = self.v;
        }
        if self.kelvin {
            d.kelvin = true;
        }
    }
}

/// Config file (or defaults), then preset, then flags.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = cli.preset {
        if p.command() != cli.command.name() {
            bail!(
                "preset {p} configures the {} command, not {}",
                p.command(),
                cli.command.name()
            );
        }
        p.apply(&mut cfg);
    }
    set(&mut cfg.seed, &cli.seed);
    cli.command.apply(&mut cfg);
    Ok(cfg)
}

fn run_in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => bail!("--workers must be at least 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            Ok(pool.install(f))
        }
    }
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let command = cli.command.name();
    let out = run_in_pool(cli.workers, || commands::run(command, &cfg))??;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let mut stdout = std::io::stdout().lock();
    if let Some(report) = &out.report {
        stdout.write_all(report.as_bytes())?;
    }
    match &cli.out {
        Some(dir) => {
            let manifest = Manifest {
                command,
                preset: cli.preset.map(Preset::name),
                seed: cfg.seed,
                workers: cli.workers,
                cli_version: env!("CARGO_PKG_VERSION"),
                core_version: qfeedback::VERSION,
                artifacts: out.artifacts.iter().map(|a| path_string(&a.path)).collect(),
                summary: &out.summary,
                config: &cfg,
            };
            write_dir(dir, &out, &manifest)?;
            eprintln!("wrote {} files to {}", out.artifacts.len() + 1, dir.display());
        }
        None if out.report.is_none() => {
            if let Some(a) = out.artifacts.first() {
                stdout.write_all(&a.bytes)?;
            }
        }
        None => {}
    }
    stdout.flush()?;
    Ok(())
}

fn path_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Exit status for a failed run: 3 for numerical failures, 1 for I/O, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<qfeedback::Error>() {
            return if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID };
        }
    }
    if err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
        return EXIT_IO;
    }
    EXIT_INVALID
}

pub fn main_with(cli: Cli) -> ExitCode {
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
