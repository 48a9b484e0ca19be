//! Physical parameters, measured-quadrature frames and unit conversions.
//!
//! The measured observable is `Q = αq + βp` with conjugate `P = −β′q + α′p`.
//! Frames are stored normalized (`α² + m²ω²β² = 1`, `α′ = α`, `β′ = m²ω²β`) so
//! that the oscillator Hamiltonian keeps the form `P²/2m + mω²Q²/2`.
//!
//! Internally the Gaussian engine works in units `ħ = m = ω = 1` with time
//! `τ = ωt`; [`Units`] converts at the boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::moments::{MomentState, SIMoments};

/// Mass, trap frequency, measurement strength and Planck constant.
///
/// `omega = 0` is a free particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorConfig {
    pub mass: f64,
    pub omega: f64,
    pub gamma: f64,
    pub hbar: f64,
}

impl OscillatorConfig {
    pub fn new(mass: f64, omega: f64, gamma: f64, hbar: f64) -> Result<Self> {
        let cfg = Self {
            mass,
            omega,
            gamma,
            hbar,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Oscillator in internal units (`ħ = m = ω = 1`) with relative strength `kappa`.
    pub fn dimensionless(kappa: f64) -> Self {
        Self {
            mass: 1.0,
            omega: 1.0,
            gamma: 2.0 * kappa,
            hbar: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.mass.is_finite() && self.mass > 0.0, || {
            format!("mass must be positive, got {}", self.mass)
        })?;
        ensure(self.omega.is_finite() && self.omega >= 0.0, || {
            format!("omega must be non-negative, got {}", self.omega)
        })?;
        // gamma = 0 is allowed for unmeasured reference runs.
        ensure(self.gamma.is_finite() && self.gamma >= 0.0, || {
            format!("gamma must be non-negative, got {}", self.gamma)
        })?;
        ensure(self.hbar.is_finite() && self.hbar > 0.0, || {
            format!("hbar must be positive, got {}", self.hbar)
        })
    }

    pub fn is_free(&self) -> bool {
        self.omega == 0.0
    }

    /// `κ = ħγ / (2mω²)`.
    pub fn kappa(&self) -> Result<f64> {
        relative_strength(self)
    }

    /// Position variance of the oscillator ground state, `ħ/(2mω)`.
    pub fn ground_variance(&self) -> Result<f64> {
        if self.is_free() {
            return Err(Error::FreeParticle);
        }
        Ok(self.hbar / (2.0 * self.mass * self.omega))
    }

    /// `m ω`, the product that enters frame normalization.
    pub fn m_omega(&self) -> f64 {
        self.mass * self.omega
    }

    /// Convergence time scales `(mω/(ħγ), 1/(ωκ))`; they differ by a factor two
    /// and are reported side by side.
    pub fn convergence_times(&self) -> Result<(f64, f64)> {
        let kappa = self.kappa()?;
        Ok((
            self.mass * self.omega / (self.hbar * self.gamma),
            1.0 / (self.omega * kappa),
        ))
    }
}

/// Relative measurement strength `κ = ħγ/(2mω²)`.
pub fn relative_strength(cfg: &OscillatorConfig) -> Result<f64> {
    if cfg.is_free() {
        return Err(Error::FreeParticle);
    }
    Ok(cfg.hbar * cfg.gamma / (2.0 * cfg.mass * cfg.omega * cfg.omega))
}

/// Normalized measured-quadrature frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureFrame {
    alpha: f64,
    beta: f64,
    alpha_prime: f64,
    beta_prime: f64,
}

impl QuadratureFrame {
    /// Position measurement, `Q = q`, `P = p`.
    pub fn position() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            alpha_prime: 1.0,
            beta_prime: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn alpha_prime(&self) -> f64 {
        self.alpha_prime
    }
    pub fn beta_prime(&self) -> f64 {
        self.beta_prime
    }

    /// `αα′ + ββ′`, the determinant of the map `(q, p) → (Q, P)`.
    pub fn determinant(&self) -> f64 {
        self.alpha * self.alpha_prime + self.beta * self.beta_prime
    }

    pub fn is_position(&self) -> bool {
        self.beta == 0.0 && self.alpha == 1.0
    }

    /// `(Q, P)` for lab-frame `(q, p)`.
    pub fn to_frame(&self, q: f64, p: f64) -> (f64, f64) {
        (
            self.alpha * q + self.beta * p,
            -self.beta_prime * q + self.alpha_prime * p,
        )
    }

    /// `(q, p)` for frame `(Q, P)`.
    pub fn to_lab(&self, big_q: f64, big_p: f64) -> (f64, f64) {
        (
            self.alpha_prime * big_q - self.beta * big_p,
            self.beta_prime * big_q + self.alpha * big_p,
        )
    }
}

/// Scale raw `(α, β)` onto the normalized frame.
pub fn normalize_frame(alpha_raw: f64, beta_raw: f64, cfg: &OscillatorConfig) -> Result<QuadratureFrame> {
    ensure(alpha_raw.is_finite() && beta_raw.is_finite(), || {
        "frame coefficients must be finite".into()
    })?;
    if alpha_raw == 0.0 && beta_raw == 0.0 {
        return Err(Error::ZeroFrame);
    }
    if cfg.is_free() && beta_raw != 0.0 {
        return Err(Error::UnnormalizableFrame);
    }
    let mw = cfg.m_omega();
    let scale = alpha_raw.hypot(mw * beta_raw);
    let alpha = alpha_raw / scale;
    let beta = beta_raw / scale;
    Ok(QuadratureFrame {
        alpha,
        beta,
        alpha_prime: alpha,
        beta_prime: mw * mw * beta,
    })
}

/// Feedback generator coefficients in the measured frame, `F = uQ + vP`.
///
/// In the Gaussian engine (units `ħ = m = ω = 1`) these are the
/// dimensionless gains `ũ = u/(mω²)` and `ṽ = v/ω`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackGains {
    pub u: f64,
    pub v: f64,
}

impl FeedbackGains {
    pub const ZERO: FeedbackGains = FeedbackGains { u: 0.0, v: 0.0 };

    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Lab-frame feedback coefficients, `F = χq + δp`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabGains {
    pub chi: f64,
    pub delta: f64,
}

pub fn gains_lab_to_frame(chi: f64, delta: f64, frame: &QuadratureFrame) -> FeedbackGains {
    FeedbackGains {
        u: chi * frame.alpha_prime + delta * frame.beta_prime,
        v: delta * frame.alpha - chi * frame.beta,
    }
}

pub fn gains_frame_to_lab(gains: FeedbackGains, frame: &QuadratureFrame) -> LabGains {
    // Inverse of the map above; its determinant is αα′ + ββ′ = 1.
    LabGains {
        chi: frame.alpha * gains.u - frame.beta_prime * gains.v,
        delta: frame.beta * gains.u + frame.alpha_prime * gains.v,
    }
}

/// Characteristic scales used to strip units from moments, means, gains and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Units {
    hbar: f64,
    mass: f64,
    omega: f64,
}

impl Units {
    pub fn new(cfg: &OscillatorConfig) -> Result<Self> {
        if cfg.is_free() {
            return Err(Error::FreeParticle);
        }
        Ok(Self {
            hbar: cfg.hbar,
            mass: cfg.mass,
            omega: cfg.omega,
        })
    }

    fn length2(&self) -> f64 {
        self.hbar / (self.mass * self.omega)
    }

    fn momentum2(&self) -> f64 {
        self.hbar * self.mass * self.omega
    }

    pub fn moments_to_dimensionless(&self, s: &SIMoments) -> MomentState {
        MomentState {
            x: s.var_q / self.length2(),
            y: s.var_p / self.momentum2(),
            z: s.cov / self.hbar,
            tau: s.t * self.omega,
        }
    }

    pub fn moments_to_si(&self, s: &MomentState) -> SIMoments {
        SIMoments {
            var_q: s.x * self.length2(),
            var_p: s.y * self.momentum2(),
            cov: s.z * self.hbar,
            t: s.tau / self.omega,
        }
    }

    /// `(Q̄, P̄)` from `(⟨Q⟩, ⟨P⟩)`.
    pub fn means_to_dimensionless(&self, q: f64, p: f64) -> (f64, f64) {
        (q / self.length2().sqrt(), p / self.momentum2().sqrt())
    }

    pub fn means_to_si(&self, q_bar: f64, p_bar: f64) -> (f64, f64) {
        (q_bar * self.length2().sqrt(), p_bar * self.momentum2().sqrt())
    }

    pub fn gains_to_dimensionless(&self, g: FeedbackGains) -> FeedbackGains {
        FeedbackGains {
            u: g.u / (self.mass * self.omega * self.omega),
            v: g.v / self.omega,
        }
    }

    pub fn gains_to_si(&self, g: FeedbackGains) -> FeedbackGains {
        FeedbackGains {
            u: g.u * self.mass * self.omega * self.omega,
            v: g.v * self.omega,
        }
    }

    pub fn energy_unit(&self) -> f64 {
        self.hbar * self.omega
    }
}
