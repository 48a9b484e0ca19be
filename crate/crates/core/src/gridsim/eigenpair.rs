//! Residuals of the stationary Gaussian as a joint eigenvector of the
//! deterministic and stochastic generators (ħ = m = ω = 1).

use num_complex::Complex64;

use super::grid::{init_complex_gaussian, Grid, Spectral};
use crate::control::{stationary_energy, stationary_gaussian};
use crate::error::Result;
use crate::moments::stationary_moments;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenpairResiduals {
    /// Energy eigenvalue used in `r1`.
    pub energy: f64,
    /// `‖(H − i(κ/2)(q² − x∞) − E)ψ‖/‖ψ‖`.
    pub r1: f64,
    /// `‖[(i + z∞)q − 2x∞ p]ψ‖/‖ψ‖`.
    pub r2: f64,
}

impl EigenpairResiduals {
    pub fn max(&self) -> f64 {
        self.r1.max(self.r2)
    }
}

/// Residuals with the energy eigenvalue shifted by `energy_offset` (in ħω).
pub fn stationary_eigenpair_residuals(kappa: f64, grid: &Grid, energy_offset: f64) -> Result<EigenpairResiduals> {
    let m = stationary_moments(kappa)?;
    let energy = stationary_energy(kappa)? + energy_offset;
    let psi = init_complex_gaussian(grid, 0.0, 0.0, stationary_gaussian(kappa)?, 1.0)?;
    let amps = psi.amplitudes();
    let q = grid.positions();
    let spectral = Spectral::new(grid);

    let mut p_psi = amps.to_vec();
    spectral.derivative(&mut p_psi);
    let mut p2_psi = p_psi.clone();
    spectral.derivative(&mut p2_psi);

    let i = Complex64::i();
    let (mut s1, mut s2) = (0.0, 0.0);
    for j in 0..grid.n_points {
        let (x, a) = (q[j], amps[j]);
        let h = 0.5 * p2_psi[j] + 0.5 * x * x * a;
        let g1 = h - i * (0.5 * kappa) * (x * x - m.x) * a - energy * a;
        let g2 = (i + m.z) * x * a - 2.0 * m.x * p_psi[j];
        s1 += g1.norm_sqr();
        s2 += g2.norm_sqr();
    }
    // psi is normalized, so ‖ψ‖ = 1
    Ok(EigenpairResiduals {
        energy,
        r1: (s1 * grid.dq).sqrt(),
        r2: (s2 * grid.dq).sqrt(),
    })
}

/// `max(r1, r2)` at the exact stationary energy.
pub fn verify_stationary_eigenpair(kappa: f64, grid: &Grid) -> Result<f64> {
    Ok(stationary_eigenpair_residuals(kappa, grid, 0.0)?.max())
}
