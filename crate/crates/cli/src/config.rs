use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use qfeedback::fockspace::{GeneratorKind, DEFAULT_LEAK_THRESHOLD as FOCK_LEAK, DEFAULT_N_MAX, MAX_N_MAX};
use qfeedback::gridsim::{GridSimConfig, GridSpec, InitialWavefunction, PotentialSpec};
use qfeedback::moments::{MomentState, DEFAULT_DTAU};
use qfeedback::quadratures::{LabGains, OscillatorConfig};
use qfeedback::trajectories::{Scheme, DEFAULT_BUDGET, DEFAULT_RECORD_STRIDE};

pub const DEFAULT_SEED: u64 = 2024;

/// Everything a run needs. Each subcommand reads its own section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub steady: SteadyConfig,
    pub moments: MomentsConfig,
    pub ensemble: EnsembleConfig,
    pub grid: GridConfig,
    pub fock: FockConfig,
    pub design: DesignConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            steady: SteadyConfig::default(),
            moments: MomentsConfig::default(),
            ensemble: EnsembleConfig::default(),
            grid: GridConfig::default(),
            fock: FockConfig::default(),
            design: DesignConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyConfig {
    pub kappa: Vec<f64>,
    /// `start:stop:lin|log:count`; replaces `kappa` when set.
    pub kappa_grid: Option<String>,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        Self {
            kappa: vec![0.25],
            kappa_grid: None,
        }
    }
}

impl SteadyConfig {
    pub fn kappas(&self) -> anyhow::Result<Vec<f64>> {
        match &self.kappa_grid {
            Some(spec) => Ok(spec.parse::<KappaGrid>()?.values()),
            None => Ok(self.kappa.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub kappa: f64,
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub tau_end: f64,
    pub dtau: f64,
    /// Keep every `stride`-th step.
    pub stride: usize,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        let s = MomentState::fig1_initial();
        Self {
            kappa: 0.25,
            x0: s.x,
            y0: s.y,
            z0: s.z,
            tau_end: 50.0,
            dtau: DEFAULT_DTAU,
            stride: 100,
        }
    }
}

impl MomentsConfig {
    pub fn fig1() -> Self {
        Self {
            tau_end: 60.0,
            stride: 20,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub kappa: f64,
    pub n_traj: usize,
    pub dtau: f64,
    pub tau_end: f64,
    pub scheme: Scheme,
    /// Use the noise-cancelling gains; otherwise `u` and `v` apply.
    pub optimal_gains: bool,
    /// Dimensionless gains, used when `optimal_gains` is false.
    pub u: f64,
    pub v: f64,
    pub record_stride: usize,
    pub q0: f64,
    pub p0: f64,
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub budget: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let s = MomentState::fig1_initial();
        Self {
            kappa: 0.25,
            n_traj: 100,
            dtau: DEFAULT_DTAU,
            tau_end: 60.0,
            scheme: Scheme::Weak2,
            optimal_gains: true,
            u: 0.0,
            v: 0.0,
            record_stride: DEFAULT_RECORD_STRIDE,
            q0: 0.0,
            p0: 1.0,
            x0: s.x,
            y0: s.y,
            z0: s.z,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// The grid simulation settings; the seed comes from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub oscillator: OscillatorConfig,
    pub potential: PotentialSpec,
    pub gains: LabGains,
    pub grid: GridSpec,
    pub initial: InitialWavefunction,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub snapshot_stride: usize,
    pub leak_threshold: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self::from_core(GridSimConfig::fig4b())
    }
}

impl GridConfig {
    pub fn from_core(c: GridSimConfig) -> Self {
        Self {
            oscillator: c.oscillator,
            potential: c.potential,
            gains: c.gains,
            grid: c.grid,
            initial: c.initial,
            dt: c.dt,
            t_end: c.t_end,
            record_stride: c.record_stride,
            snapshot_stride: c.snapshot_stride,
            leak_threshold: c.leak_threshold,
        }
    }

    pub fn to_core(&self, seed: u64) -> GridSimConfig {
        GridSimConfig {
            oscillator: self.oscillator,
            potential: self.potential.clone(),
            gains: self.gains,
            grid: self.grid,
            initial: self.initial,
            dt: self.dt,
            t_end: self.t_end,
            seed,
            record_stride: self.record_stride,
            snapshot_stride: self.snapshot_stride,
            leak_threshold: self.leak_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FockConfig {
    pub generator: GeneratorKind,
    /// Units ħ = m = ω = 1 with γ = 2κ.
    pub kappa: f64,
    pub u: f64,
    pub v: f64,
    pub n_max: usize,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    /// Start in `|k⟩`; ignored when `initial_thermal` is set.
    pub initial_level: usize,
    /// Start in the thermal state of this mean occupation.
    pub initial_thermal: Option<f64>,
    pub leak_threshold: f64,
    pub strict_positivity: bool,
    pub max_n_max: usize,
}

impl Default for FockConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::Rwa,
            kappa: 0.01,
            u: 0.0,
            v: -0.02,
            n_max: DEFAULT_N_MAX,
            dt: 0.05,
            t_end: 600.0,
            record_stride: 20,
            initial_level: 1,
            initial_thermal: None,
            leak_threshold: FOCK_LEAK,
            strict_positivity: true,
            max_n_max: MAX_N_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub kappa: f64,
    pub mass: f64,
    pub omega: f64,
    pub hbar: f64,
    /// SI gains; the noise-cancelling gains are used when unset.
    pub u: Option<f64>,
    pub v: Option<f64>,
    /// Report the temperature in kelvin using CODATA ħ and k_B (then
    /// `omega` is in rad/s).
    pub kelvin: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            kappa: 0.25,
            mass: 1.0,
            omega: 1.0,
            hbar: 1.0,
            u: None,
            v: None,
            kelvin: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1,
    Fig3,
    Fig4a,
    Fig4b,
    Fig4c,
    ThermalCheck,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig1,
        Preset::Fig3,
        Preset::Fig4a,
        Preset::Fig4b,
        Preset::Fig4c,
        Preset::ThermalCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig3 => "fig3",
            Preset::Fig4a => "fig4a",
            Preset::Fig4b => "fig4b",
            Preset::Fig4c => "fig4c",
            Preset::ThermalCheck => "thermal-check",
        }
    }

    /// Subcommand the preset configures.
    pub fn command(self) -> &'static str {
        match self {
            Preset::Fig1 => "moments",
            Preset::Fig3 => "ensemble",
            Preset::Fig4a | Preset::Fig4b | Preset::Fig4c => "grid",
            Preset::ThermalCheck => "fock",
        }
    }

    /// Replaces the preset's section of `cfg`.
    pub fn apply(self, cfg: &mut RunConfig) {
        match self {
            Preset::Fig1 => cfg.moments = MomentsConfig::fig1(),
            Preset::Fig3 => cfg.ensemble = EnsembleConfig::default(),
            Preset::Fig4a => cfg.grid = GridConfig::from_core(GridSimConfig::fig4a()),
            Preset::Fig4b => cfg.grid = GridConfig::from_core(GridSimConfig::fig4b()),
            Preset::Fig4c => cfg.grid = GridConfig::from_core(GridSimConfig::fig4c()),
            Preset::ThermalCheck => cfg.fock = FockConfig::default(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset '{s}' (expected one of {})", names.join(", "))
        })
    }
}

/// `start:stop:lin|log:count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaGrid {
    pub start: f64,
    pub stop: f64,
    pub log: bool,
    pub count: usize,
}

impl KappaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let f = i as f64 / n;
                if i == 0 {
                    self.start
                } else if i + 1 == self.count {
                    self.stop
                } else if self.log {
                    (self.start.ln() + f * (self.stop.ln() - self.start.ln())).exp()
                } else {
                    self.start + f * (self.stop - self.start)
                }
            })
            .collect()
    }
}

impl FromStr for KappaGrid {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, scale, count] = parts[..] else {
            bail!("kappa grid '{s}' is not of the form start:stop:lin|log:count");
        };
        let start: f64 = start
            .trim()
            .parse()
            .with_context(|| format!("bad grid start '{start}'"))?;
        let stop: f64 = stop.trim().parse().with_context(|| format!("bad grid stop '{stop}'"))?;
        let count: usize = count
            .trim()
            .parse()
            .with_context(|| format!("bad grid count '{count}'"))?;
        let log = match scale.trim() {
            "log" => true,
            "lin" => false,
            other => bail!("grid scale must be 'lin' or 'log', got '{other}'"),
        };
        if count == 0 {
            bail!("grid count must be at least 1");
        }
        if !(start.is_finite() && stop.is_finite()) {
            bail!("grid bounds must be finite");
        }
        if log && (start <= 0.0 || stop <= 0.0) {
            bail!("log grid needs positive bounds");
        }
        Ok(Self {
            start,
            stop,
            log,
            count,
        })
    }
}
