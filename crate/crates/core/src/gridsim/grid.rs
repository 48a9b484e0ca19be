use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Fraction of the grid at each end counted as boundary.
pub const BOUNDARY_FRACTION: f64 = 0.05;
pub const DEFAULT_LEAK_THRESHOLD: f64 = 1e-6;
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Uniform periodic grid `q_j = q_min + j·dq`, `j = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub q_min: f64,
    pub dq: f64,
    pub n_points: usize,
}

impl Grid {
    pub fn new(q_min: f64, q_max: f64, n_points: usize) -> Result<Self> {
        ensure(n_points >= 16 && n_points.is_power_of_two(), || {
            format!("n_points must be a power of two >= 16, got {n_points}")
        })?;
        ensure(q_min.is_finite() && q_max.is_finite() && q_max > q_min, || {
            format!("grid interval [{q_min}, {q_max}] is empty")
        })?;
        Ok(Self {
            q_min,
            dq: (q_max - q_min) / n_points as f64,
            n_points,
        })
    }

    pub fn centered(half_width: f64, n_points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_points)
    }

    pub fn q_max(&self) -> f64 {
        self.q_min + self.dq * self.n_points as f64
    }

    pub fn length(&self) -> f64 {
        self.dq * self.n_points as f64
    }

    pub fn q(&self, j: usize) -> f64 {
        self.q_min + j as f64 * self.dq
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.q(j)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / self.length();
        (0..n)
            .map(|m| {
                if m < n / 2 {
                    m as f64 * dk
                } else {
                    (m as f64 - n as f64) * dk
                }
            })
            .collect()
    }

    pub fn k_max(&self) -> f64 {
        PI / self.dq
    }

    /// Points in each boundary strip.
    pub fn boundary_points(&self) -> usize {
        (BOUNDARY_FRACTION * self.n_points as f64).ceil() as usize
    }
}

/// Cached forward and inverse transforms for one grid size.
#[derive(Clone)]
pub struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.k.len()).finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(grid.n_points),
            inv: planner.plan_fft_inverse(grid.n_points),
            k: grid.wavenumbers(),
        }
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    /// Inverse transform including the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        let s = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }

    /// Multiply in k-space by `f(k)`.
    pub fn apply_diagonal(&self, buf: &mut [Complex64], f: impl Fn(f64) -> Complex64) {
        self.forward(buf);
        for (c, &k) in buf.iter_mut().zip(&self.k) {
            *c *= f(k);
        }
        self.inverse(buf);
    }

    /// Multiplies in k-space by `factors`, optionally combined with a
    /// translation by `shift`.
    pub(crate) fn apply_diagonal_with(&self, buf: &mut [Complex64], factors: &[Complex64], shift: Option<f64>) {
        self.forward(buf);
        match shift {
            Some(a) => {
                for ((c, f), k) in buf.iter_mut().zip(factors).zip(self.k()) {
                    *c *= f * Complex64::from_polar(1.0, -k * a);
                }
            }
            None => {
                for (c, f) in buf.iter_mut().zip(factors) {
                    *c *= f;
                }
            }
        }
        self.inverse(buf);
    }

    /// `ψ(q) → ψ(q − a)`.
    pub fn translate(&self, buf: &mut [Complex64], a: f64) {
        self.apply_diagonal(buf, |k| Complex64::from_polar(1.0, -k * a));
    }

    /// `−i d/dq ψ`.
    pub fn derivative(&self, buf: &mut [Complex64]) {
        self.apply_diagonal(buf, |k| Complex64::new(k, 0.0));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
}

impl GridWavefunction {
    /// Wraps amplitudes and normalizes them.
    pub fn from_amplitudes(grid: Grid, amplitudes: Vec<Complex64>) -> Result<Self> {
        ensure(amplitudes.len() == grid.n_points, || {
            format!("{} amplitudes for {} grid points", amplitudes.len(), grid.n_points)
        })?;
        let mut psi = Self { grid, amplitudes };
        let norm = psi.norm();
        ensure(norm.is_finite() && norm > 0.0, || "wavefunction has zero norm".into())?;
        psi.scale(1.0 / norm.sqrt());
        Ok(psi)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    /// `Σ|ψ_j|²·dq`.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dq
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.amplitudes.iter_mut().for_each(|c| *c *= s);
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Probability in the outer strips at both ends.
    pub fn boundary_occupancy(&self) -> f64 {
        let b = self.grid.boundary_points();
        let n = self.grid.n_points;
        let edge = |r: std::ops::Range<usize>| -> f64 { self.amplitudes[r].iter().map(|c| c.norm_sqr()).sum() };
        (edge(0..b) + edge(n - b..n)) * self.grid.dq
    }

    pub fn check_normalized(&self) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(())
    }

    pub fn check_boundary(&self, threshold: f64, t: f64) -> Result<()> {
        let occupancy = self.boundary_occupancy();
        if occupancy.is_nan() || occupancy >= threshold {
            return Err(Error::BoundaryLeak { occupancy, t });
        }
        Ok(())
    }

    /// `|⟨φ|ψ⟩|`.
    pub fn overlap(&self, other: &GridWavefunction) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm()
            * self.grid.dq
    }
}

/// Real Gaussian with position standard deviation `width` and mean momentum `pbar`.
pub fn init_gaussian(grid: &Grid, qbar: f64, pbar: f64, width: f64, hbar: f64) -> Result<GridWavefunction> {
    ensure(width.is_finite() && width > 0.0, || {
        format!("width must be positive, got {width}")
    })?;
    init_complex_gaussian(grid, qbar, pbar, Complex64::new(0.5 / (width * width), 0.0), hbar)
}

/// Pure Gaussian `exp(−s(q−q̄)²/2 + i p̄ q/ħ)` with the given second moments.
/// `cov_sym` is `⟨{Δq,Δp}⟩`.
pub fn init_pure_gaussian(
    grid: &Grid,
    qbar: f64,
    pbar: f64,
    var_q: f64,
    cov_sym: f64,
    hbar: f64,
) -> Result<GridWavefunction> {
    ensure(var_q.is_finite() && var_q > 0.0, || {
        format!("var_q must be positive, got {var_q}")
    })?;
    let s = Complex64::new(1.0, -cov_sym / hbar) / (2.0 * var_q);
    init_complex_gaussian(grid, qbar, pbar, s, hbar)
}

pub fn init_complex_gaussian(grid: &Grid, qbar: f64, pbar: f64, s: Complex64, hbar: f64) -> Result<GridWavefunction> {
    ensure(s.re > 0.0 && s.is_finite(), || {
        format!("Gaussian exponent must have Re s > 0, got {s}")
    })?;
    let width = (0.5 / s.re).sqrt();
    if qbar - 8.0 * width < grid.q_min || qbar + 8.0 * width > grid.q_max() {
        return Err(Error::GridTooSmall(format!(
            "q in [{}, {}] does not hold {qbar} ± 8·{width}",
            grid.q_min,
            grid.q_max()
        )));
    }
    // momentum spread of exp(−s q²/2) is ħ|s|/√(2 Re s)
    let k_needed = (pbar.abs() + 8.0 * hbar * s.norm() / (2.0 * s.re).sqrt()) / hbar;
    if k_needed > grid.k_max() {
        return Err(Error::GridTooSmall(format!(
            "spacing {} resolves |k| <= {}, state needs {k_needed}",
            grid.dq,
            grid.k_max()
        )));
    }
    let amps = (0..grid.n_points)
        .map(|j| {
            let d = grid.q(j) - qbar;
            (-s * d * d / 2.0 + Complex64::new(0.0, pbar * grid.q(j) / hbar)).exp()
        })
        .collect();
    GridWavefunction::from_amplitudes(*grid, amps)
}
