//! Closed-form feedback design: noise-cancelling gains, damping rate,
//! stationary energy and width, and the thermal-bath analogy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::moments::{root_minus_one, stationary_moments};
use crate::quadratures::{FeedbackGains, OscillatorConfig};

fn check_kappa(kappa: f64) -> Result<()> {
    ensure(kappa.is_finite() && kappa > 0.0, || {
        format!("kappa must be positive, got {kappa}")
    })
}

/// Gains that cancel the Wiener terms of the mean-value equations at stationarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalGains {
    /// `u` in kg/s², `v` in 1/s.
    pub gains: FeedbackGains,
    /// `ũ = u/(mω²) = κz∞` and `ṽ = v/ω = −2κx∞`.
    pub dimensionless: FeedbackGains,
}

pub fn optimal_gains(kappa: f64, cfg: &OscillatorConfig) -> Result<OptimalGains> {
    check_kappa(kappa)?;
    if cfg.is_free() {
        return Err(Error::FreeParticle);
    }
    let r = root_minus_one(kappa);
    let u_t = r;
    let v_t = -std::f64::consts::SQRT_2 * r.sqrt();
    let w = cfg.omega;
    Ok(OptimalGains {
        gains: FeedbackGains::new(cfg.mass * w * w * u_t, w * v_t),
        dimensionless: FeedbackGains::new(u_t, v_t),
    })
}

/// Exponential decay rate of `⟨Q⟩` and `⟨P⟩` under [`optimal_gains`], `(ω/√2)√(√(1+κ²)−1)`.
pub fn decay_rate(kappa: f64, omega: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(omega * std::f64::consts::FRAC_1_SQRT_2 * root_minus_one(kappa).sqrt())
}

/// Energy of the stationary co-moving state in units of `ħω`; equals `1/(4x∞)`.
pub fn stationary_energy(kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(kappa / (2.0 * std::f64::consts::SQRT_2 * root_minus_one(kappa).sqrt()))
}

/// Complex inverse width `s` of the stationary wavefunction `exp(−s Q²/2)`
/// (units `ħ = m = ω = 1`); satisfies `s² = 1 − iκ`.
pub fn stationary_gaussian(kappa: f64) -> Result<Complex64> {
    let st = stationary_moments(kappa)?;
    Ok(Complex64::new(1.0, -st.z) / (2.0 * st.x))
}

/// Parameters of the heat bath whose Lindblad dynamics reproduce the
/// rotating-wave, non-selective feedback master equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalAnalogy {
    /// Pump coefficient, 1/s.
    pub c: f64,
    /// Thermalisation rate `γ′ = −v`, 1/s.
    pub gamma_prime: f64,
    /// Mean bath excitation `N = c/γ′`.
    pub n_bath: f64,
    /// Effective temperature in units of `ħω/k_B`.
    pub t_eff: f64,
}

/// Pump coefficient `c = κω/4 + (u²/(m²ω²) + v²)/(4κω) + v/2`.
pub fn pump_coefficient(gains: FeedbackGains, kappa: f64, cfg: &OscillatorConfig) -> Result<f64> {
    check_kappa(kappa)?;
    if cfg.is_free() {
        return Err(Error::FreeParticle);
    }
    let w = cfg.omega;
    let u_scaled = gains.u / (cfg.mass * w);
    Ok(kappa * w / 4.0 + (u_scaled * u_scaled + gains.v * gains.v) / (4.0 * kappa * w) + gains.v / 2.0)
}

pub fn bath_parameters(gains: FeedbackGains, kappa: f64, cfg: &OscillatorConfig) -> Result<ThermalAnalogy> {
    let c = pump_coefficient(gains, kappa, cfg)?;
    if gains.v >= 0.0 {
        return Err(Error::HeatingRegime(gains.v));
    }
    if c < 0.0 {
        return Err(Error::NegativeOccupation(c));
    }
    let gamma_prime = -gains.v;
    let n_bath = c / gamma_prime;
    Ok(ThermalAnalogy {
        c,
        gamma_prime,
        n_bath,
        t_eff: temperature_from_occupation(n_bath),
    })
}

/// `T = ħω / (k_B ln((N+1)/N))` in units of `ħω/k_B`; zero occupation is zero temperature.
pub fn temperature_from_occupation(n: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        1.0 / ((n + 1.0) / n).ln()
    }
}

/// Effective temperature for `u = 0` from the gain directly,
/// `T = ħω / (2k_B ln((v−κω)/(v+κω)))`, in units of `ħω/k_B`.
pub fn temperature_from_gains(v: f64, kappa: f64, omega: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if v >= 0.0 {
        return Err(Error::HeatingRegime(v));
    }
    let kw = kappa * omega;
    let denom = v + kw;
    if denom == 0.0 {
        return Ok(0.0);
    }
    let ratio = (v - kw) / denom;
    if ratio <= 0.0 {
        return Err(Error::InvalidAnalogy { v, ratio });
    }
    Ok(1.0 / (2.0 * ratio.ln()))
}

/// Convert a temperature in units of `ħω/k_B` to kelvin.
pub fn to_kelvin(t_eff: f64, hbar: f64, omega: f64, k_b: f64) -> f64 {
    t_eff * hbar * omega / k_b
}

/// Relaxation of the mean excitation, `N + (n_i − N)e^{−γ′t}`.
pub fn mean_excitation(t: f64, n_i: f64, n_bath: f64, gamma_prime: f64) -> f64 {
    n_bath + (n_i - n_bath) * (-gamma_prime * t).exp()
}
