//! Position-space stochastic Schrödinger simulation on a periodic grid.
//!
//! Position is measured continuously and the readout is fed back through
//! `exp(−(i/ħ)(χq + δp)dM)`. One step is a Strang splitting: half kinetic
//! step, potential and measurement factor, half kinetic step together with
//! the feedback translation, feedback phase, renormalization.

mod eigenpair;
mod grid;

pub use eigenpair::{stationary_eigenpair_residuals, verify_stationary_eigenpair, EigenpairResiduals};
pub use grid::{
    init_complex_gaussian, init_gaussian, init_pure_gaussian, Grid, GridWavefunction, Spectral, BOUNDARY_FRACTION,
    DEFAULT_LEAK_THRESHOLD, NORM_TOLERANCE,
};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::{optimal_gains, stationary_gaussian};
use crate::error::{ensure, Error, Result};
use crate::moments::step_count;
use crate::quadratures::{LabGains, OscillatorConfig};
use crate::trajectories::trajectory_stream;

pub const DEFAULT_N_POINTS: usize = 1024;
/// Default half-width of the grid in ground-state widths `sqrt(ħ/2mω)`.
pub const DEFAULT_HALF_WIDTH: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `mω²q²/2` with the oscillator's mass and frequency.
    Harmonic,
    Free,
    /// `a4·q⁴ + a2·q²`.
    Quartic {
        a4: f64,
        a2: f64,
    },
    /// One value per grid point.
    Tabulated {
        values: Vec<f64>,
    },
}

impl PotentialSpec {
    pub fn evaluate(&self, grid: &Grid, cfg: &OscillatorConfig) -> Result<Vec<f64>> {
        let q = grid.positions();
        let v: Vec<f64> = match self {
            PotentialSpec::Harmonic => {
                let k = cfg.mass * cfg.omega * cfg.omega;
                q.iter().map(|q| 0.5 * k * q * q).collect()
            }
            PotentialSpec::Free => vec![0.0; q.len()],
            PotentialSpec::Quartic { a4, a2 } => q.iter().map(|q| a4 * q.powi(4) + a2 * q * q).collect(),
            PotentialSpec::Tabulated { values } => {
                ensure(values.len() == grid.n_points, || {
                    format!(
                        "tabulated potential has {} values for {} points",
                        values.len(),
                        grid.n_points
                    )
                })?;
                values.clone()
            }
        };
        ensure(v.iter().all(|x| x.is_finite()), || {
            "potential is not finite on the grid".into()
        })?;
        Ok(v)
    }
}

/// Grid bounds as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_points: usize,
    pub q_min: f64,
    pub q_max: f64,
}

impl GridSpec {
    /// `n_points` over `±half_widths` ground-state widths.
    pub fn for_oscillator(cfg: &OscillatorConfig, n_points: usize, half_widths: f64) -> Result<Self> {
        let w = cfg.ground_variance()?.sqrt();
        Ok(Self {
            n_points,
            q_min: -half_widths * w,
            q_max: half_widths * w,
        })
    }

    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.q_min, self.q_max, self.n_points)
    }
}

pub fn default_grid(cfg: &OscillatorConfig) -> Result<Grid> {
    GridSpec::for_oscillator(cfg, DEFAULT_N_POINTS, DEFAULT_HALF_WIDTH)?.build()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialWavefunction {
    /// Real Gaussian of position standard deviation `width`.
    Gaussian { qbar: f64, pbar: f64, width: f64 },
    /// Pure Gaussian with `⟨Δq²⟩ = var_q` and `⟨{Δq,Δp}⟩ = cov_sym`.
    PureGaussian {
        qbar: f64,
        pbar: f64,
        var_q: f64,
        cov_sym: f64,
    },
    /// Stationary state of the measured oscillator, displaced.
    Stationary { qbar: f64, pbar: f64 },
}

impl InitialWavefunction {
    pub fn build(&self, grid: &Grid, cfg: &OscillatorConfig) -> Result<GridWavefunction> {
        match *self {
            InitialWavefunction::Gaussian { qbar, pbar, width } => init_gaussian(grid, qbar, pbar, width, cfg.hbar),
            InitialWavefunction::PureGaussian {
                qbar,
                pbar,
                var_q,
                cov_sym,
            } => init_pure_gaussian(grid, qbar, pbar, var_q, cov_sym, cfg.hbar),
            InitialWavefunction::Stationary { qbar, pbar } => {
                let s = stationary_gaussian(cfg.kappa()?)? * (cfg.m_omega() / cfg.hbar);
                init_complex_gaussian(grid, qbar, pbar, s, cfg.hbar)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSimConfig {
    pub oscillator: OscillatorConfig,
    pub potential: PotentialSpec,
    /// Feedback `F = χq + δp`; position is always the measured observable.
    pub gains: LabGains,
    pub grid: GridSpec,
    pub initial: InitialWavefunction,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub record_stride: usize,
    pub snapshot_stride: usize,
    pub leak_threshold: f64,
}

impl GridSimConfig {
    fn fig4_base(gamma: f64) -> Self {
        let oscillator = OscillatorConfig::new(1.0, 1.0, gamma, 1.0).expect("valid oscillator");
        Self {
            oscillator,
            potential: PotentialSpec::Harmonic,
            gains: LabGains::default(),
            grid: GridSpec::for_oscillator(&oscillator, DEFAULT_N_POINTS, 16.0).expect("bound oscillator"),
            initial: InitialWavefunction::Gaussian {
                qbar: 2.0,
                pbar: 0.0,
                width: 0.5,
            },
            dt: 1e-3,
            t_end: 40.0,
            seed: 2024,
            record_stride: 10,
            snapshot_stride: 1000,
            leak_threshold: DEFAULT_LEAK_THRESHOLD,
        }
    }

    /// Squeezed displaced Gaussian without measurement.
    pub fn fig4a() -> Self {
        Self {
            t_end: 10.0,
            snapshot_stride: 250,
            ..Self::fig4_base(0.0)
        }
    }

    /// Same initial state under position measurement at κ = 0.25.
    pub fn fig4b() -> Self {
        Self::fig4_base(0.5)
    }

    /// Measurement at κ = 0.25 with the noise-cancelling gains, starting from
    /// the displaced stationary state.
    pub fn fig4c() -> Self {
        let base = Self::fig4_base(0.5);
        let g = optimal_gains(0.25, &base.oscillator).expect("kappa > 0").gains;
        Self {
            gains: LabGains { chi: g.u, delta: g.v },
            initial: InitialWavefunction::Stationary { qbar: 2.0, pbar: 0.0 },
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.oscillator.validate()?;
        ensure(self.dt.is_finite() && self.dt > 0.0, || {
            format!("dt must be positive, got {}", self.dt)
        })?;
        ensure(self.t_end.is_finite() && self.t_end >= 0.0, || {
            format!("t_end must be non-negative, got {}", self.t_end)
        })?;
        ensure(self.record_stride >= 1 && self.snapshot_stride >= 1, || {
            "strides must be at least 1".into()
        })?;
        ensure(self.leak_threshold > 0.0, || "leak_threshold must be positive".into())?;
        ensure(self.gains.chi.is_finite() && self.gains.delta.is_finite(), || {
            "gains must be finite".into()
        })?;
        ensure(self.oscillator.gamma > 0.0 || self.gains == LabGains::default(), || {
            "feedback needs a measurement signal (gamma > 0)".into()
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    pub norm: f64,
    pub q: f64,
    pub p: f64,
    pub varq: f64,
    pub varp: f64,
    /// `⟨{Δq,Δp}⟩`.
    pub cov_sym: f64,
    /// `⟨Δq³⟩`.
    pub skew_q: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub t: f64,
    pub values: Expectations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    /// `|ψ(q_j)|²`.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub series: Vec<GridRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: GridWavefunction,
}

/// A configured simulator with cached transforms and step factors.
#[derive(Debug, Clone)]
pub struct GridSimulator {
    config: GridSimConfig,
    grid: Grid,
    spectral: Spectral,
    positions: Vec<f64>,
    potential: Vec<f64>,
    potential_phase: Vec<Complex64>,
    half_kinetic: Vec<Complex64>,
}

impl GridSimulator {
    pub fn new(config: GridSimConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid.build()?;
        let cfg = &config.oscillator;
        let potential = config.potential.evaluate(&grid, cfg)?;
        let spectral = Spectral::new(&grid);
        let dt = config.dt;
        let half_kinetic = spectral
            .k()
            .iter()
            .map(|k| Complex64::from_polar(1.0, -cfg.hbar * k * k * dt / (4.0 * cfg.mass)))
            .collect();
        let potential_phase = potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / cfg.hbar))
            .collect();
        Ok(Self {
            positions: grid.positions(),
            config,
            grid,
            spectral,
            potential,
            potential_phase,
            half_kinetic,
        })
    }

    pub fn config(&self) -> &GridSimConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn initial_state(&self) -> Result<GridWavefunction> {
        self.config.initial.build(&self.grid, &self.config.oscillator)
    }

    fn mean_q(&self, psi: &GridWavefunction) -> f64 {
        psi.amplitudes()
            .iter()
            .zip(&self.positions)
            .map(|(c, q)| c.norm_sqr() * q)
            .sum::<f64>()
            * self.grid.dq
    }

    pub fn expectations(&self, psi: &GridWavefunction) -> Result<Expectations> {
        psi.check_normalized()?;
        let cfg = &self.config.oscillator;
        let dq = self.grid.dq;
        let amps = psi.amplitudes();
        let rho: Vec<f64> = amps.iter().map(|c| c.norm_sqr()).collect();
        let q = self.mean_q(psi);
        let (mut varq, mut skew_q, mut pot) = (0.0, 0.0, 0.0);
        for ((r, x), v) in rho.iter().zip(&self.positions).zip(&self.potential) {
            let d = x - q;
            varq += r * d * d;
            skew_q += r * d * d * d;
            pot += r * v;
        }

        let mut hat = amps.to_vec();
        self.spectral.forward(&mut hat);
        let weights: Vec<f64> = hat.iter().map(|c| c.norm_sqr()).collect();
        let total: f64 = weights.iter().sum();
        let k = self.spectral.k();
        let p = cfg.hbar * weights.iter().zip(k).map(|(w, k)| w * k).sum::<f64>() / total;
        let p2 = cfg.hbar * cfg.hbar * weights.iter().zip(k).map(|(w, k)| w * k * k).sum::<f64>() / total;

        for (c, k) in hat.iter_mut().zip(k) {
            *c *= cfg.hbar * k;
        }
        self.spectral.inverse(&mut hat);
        let qp: Complex64 = amps
            .iter()
            .zip(&hat)
            .zip(&self.positions)
            .map(|((a, b), x)| a.conj() * b * x)
            .sum::<Complex64>()
            * dq;

        Ok(Expectations {
            norm: psi.norm(),
            q,
            p,
            varq: varq * dq,
            varp: p2 - p * p,
            cov_sym: 2.0 * qp.re - 2.0 * q * p,
            skew_q: skew_q * dq,
            energy: p2 / (2.0 * cfg.mass) + pot * dq,
        })
    }

    /// Applies `exp(−(i/ħ)(χq + δp)dM)` up to a global phase.
    pub fn apply_feedback(&self, psi: &mut GridWavefunction, dm: f64) {
        let LabGains { chi, delta } = self.config.gains;
        let hbar = self.config.oscillator.hbar;
        let amps = psi.amplitudes_mut();
        if delta != 0.0 {
            self.spectral.translate(amps, delta * dm);
        }
        if chi != 0.0 {
            for (c, q) in amps.iter_mut().zip(&self.positions) {
                *c *= Complex64::from_polar(1.0, -chi * q * dm / hbar);
            }
        }
    }

    /// One step of length `dt` driven by the Wiener increment `dw`; `t` is the
    /// time at the start of the step and only labels errors.
    pub fn step(&self, psi: &mut GridWavefunction, dw: f64, t: f64) -> Result<()> {
        let cfg = &self.config.oscillator;
        let dt = self.config.dt;
        let gamma = cfg.gamma;
        let qbar = self.mean_q(psi);
        let feedback = self.config.gains != LabGains::default();
        let dm = if gamma > 0.0 {
            qbar * dt + dw / gamma.sqrt()
        } else {
            0.0
        };
        let delta = self.config.gains.delta;

        let amps = psi.amplitudes_mut();
        self.spectral.apply_diagonal_with(amps, &self.half_kinetic, None);
        let a = 0.25 * gamma * dt;
        let b = 0.5 * gamma.sqrt() * dw;
        for ((c, q), ph) in amps.iter_mut().zip(&self.positions).zip(&self.potential_phase) {
            let d = q - qbar;
            *c *= ph * (-a * d * d + b * d).exp();
        }
        let shift = if feedback && delta != 0.0 {
            Some(delta * dm)
        } else {
            None
        };
        self.spectral.apply_diagonal_with(amps, &self.half_kinetic, shift);
        if feedback && self.config.gains.chi != 0.0 {
            let w = -self.config.gains.chi * dm / cfg.hbar;
            for (c, q) in amps.iter_mut().zip(&self.positions) {
                *c *= Complex64::from_polar(1.0, w * q);
            }
        }

        let norm = psi.norm();
        if norm.is_nan() || norm < 0.5 {
            return Err(Error::NormCollapse { norm, t: t + dt });
        }
        psi.scale(1.0 / norm.sqrt());
        psi.check_boundary(self.config.leak_threshold, t + dt)
    }

    /// Runs `t_end/dt` steps with increments from the configured seed.
    pub fn run(&self, psi0: &GridWavefunction) -> Result<GridRun> {
        let mut rng = trajectory_stream(self.config.seed, 0);
        let sd = self.config.dt.sqrt();
        let steps = step_count(self.config.t_end, self.config.dt)?;
        self.run_inner(psi0, steps, || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd
        })
    }

    /// Runs one step per supplied increment.
    pub fn run_with_increments(&self, psi0: &GridWavefunction, dws: &[f64]) -> Result<GridRun> {
        let mut it = dws.iter().copied();
        self.run_inner(psi0, dws.len(), || it.next().unwrap_or(0.0))
    }

    fn run_inner(&self, psi0: &GridWavefunction, steps: usize, mut dw: impl FnMut() -> f64) -> Result<GridRun> {
        ensure(psi0.grid() == &self.grid, || {
            "initial state lives on a different grid".into()
        })?;
        let dt = self.config.dt;
        let (rs, ss) = (self.config.record_stride, self.config.snapshot_stride);
        let mut psi = psi0.clone();
        psi.check_boundary(self.config.leak_threshold, 0.0)?;
        let mut series = vec![GridRecord {
            t: 0.0,
            values: self.expectations(&psi)?,
        }];
        let mut snapshots = vec![Snapshot {
            step: 0,
            t: 0.0,
            density: psi.density(),
        }];
        for i in 1..=steps {
            let t0 = (i - 1) as f64 * dt;
            self.step(&mut psi, dw(), t0)?;
            let t = i as f64 * dt;
            if i % rs == 0 || i == steps {
                series.push(GridRecord {
                    t,
                    values: self.expectations(&psi)?,
                });
            }
            if i % ss == 0 || i == steps {
                snapshots.push(Snapshot {
                    step: i,
                    t,
                    density: psi.density(),
                });
            }
        }
        Ok(GridRun {
            series,
            snapshots,
            final_state: psi,
        })
    }

    /// Shifts the state so that `⟨q⟩ = ⟨p⟩ = 0`.
    pub fn comoving_transform(&self, psi: &GridWavefunction) -> Result<GridWavefunction> {
        comoving_with(&self.spectral, &self.positions, psi)
    }
}

/// Builds a simulator from `cfg` and runs it from the configured initial state.
pub fn run_grid_trajectory(cfg: &GridSimConfig) -> Result<GridRun> {
    let sim = GridSimulator::new(cfg.clone())?;
    let psi0 = sim.initial_state()?;
    sim.run(&psi0)
}

/// Shifts `psi` so that `⟨q⟩ = ⟨p⟩ = 0`.
pub fn comoving_transform(psi: &GridWavefunction) -> Result<GridWavefunction> {
    let grid = psi.grid();
    comoving_with(&Spectral::new(grid), &grid.positions(), psi)
}

fn comoving_with(spectral: &Spectral, positions: &[f64], psi: &GridWavefunction) -> Result<GridWavefunction> {
    psi.check_normalized()?;
    let dq = psi.grid().dq;
    let amps = psi.amplitudes();
    let q: f64 = amps.iter().zip(positions).map(|(c, x)| c.norm_sqr() * x).sum::<f64>() * dq;
    let mut hat = amps.to_vec();
    spectral.forward(&mut hat);
    let (num, den) = hat
        .iter()
        .zip(spectral.k())
        .fold((0.0, 0.0), |(n, d), (c, k)| (n + c.norm_sqr() * k, d + c.norm_sqr()));
    let k_mean = num / den;
    let mut out = amps.to_vec();
    spectral.translate(&mut out, -q);
    for (c, x) in out.iter_mut().zip(positions) {
        *c *= Complex64::from_polar(1.0, -k_mean * x);
    }
    GridWavefunction::from_amplitudes(*psi.grid(), out)
}
