//! Selective dynamics of a Gaussian state: mean values driven by the
//! measurement record, second moments following the deterministic flow.
//!
//! Everything here is dimensionless (`ħ = m = ω = 1`, `τ = ωt`), so the
//! [`FeedbackGains`] passed in are `ũ = u/(mω²)` and `ṽ = v/ω`.

mod ensemble;

pub use ensemble::{
    run_ensemble, run_ensemble_with, run_trajectory, trajectory_stream, EnsembleRecord, EnsembleResult, EnsembleSpec,
    Execution, TrajectoryRun, DEFAULT_BUDGET, DEFAULT_RECORD_STRIDE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{rk4_step, step_count, MomentState};
use crate::quadratures::FeedbackGains;

/// Means `Q̄ = √(mω/ħ)⟨Q⟩`, `P̄ = ⟨P⟩/√(ħmω)` plus second moments; the clock
/// is `moments.tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTrajectoryState {
    pub q_bar: f64,
    pub p_bar: f64,
    pub moments: MomentState,
}

impl GaussianTrajectoryState {
    pub fn new(q_bar: f64, p_bar: f64, moments: MomentState) -> Self {
        Self { q_bar, p_bar, moments }
    }

    /// Initial state of the `fig3` cooling preset: `(Q̄, P̄) = (0, 1)` with the transient moments.
    pub fn fig3_initial() -> Self {
        Self::new(0.0, 1.0, MomentState::fig1_initial())
    }

    pub fn tau(&self) -> f64 {
        self.moments.tau
    }

    pub fn energy(&self) -> f64 {
        energy(self)
    }
}

/// Integration scheme for the mean-value SDEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    /// Explicit derivative-free weak order-2 scheme for scalar noise:
    ///
    /// ```text
    /// Ȳ  = Y + aΔ + bΔW
    /// Y± = Y + aΔ ± b√Δ
    /// Y' = Y + ½(a(Ȳ) + a)Δ
    ///        + ¼(b(Y+) + b(Y−) + 2b)ΔW
    ///        + ¼(b(Y+) − b(Y−))(ΔW² − Δ)/√Δ
    /// ```
    ///
    /// Supporting values `a(Ȳ)`, `b(Y±)` are taken at `τ + Δ` (time is
    /// treated as an extra state component).
    Weak2,
}

/// Drift and Wiener coefficients of `dQ̄`, `dP̄` per unit `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeCoefficients {
    pub drift_q: f64,
    pub drift_p: f64,
    pub noise_q: f64,
    pub noise_p: f64,
}

fn drift(q: f64, p: f64, g: FeedbackGains) -> (f64, f64) {
    (p + g.v * q, -(1.0 + g.u) * q)
}

fn noise(m: &MomentState, kappa: f64, g: FeedbackGains) -> (f64, f64) {
    if kappa == 0.0 {
        // Without measurement there is neither back-action nor a signal to feed back.
        return (0.0, 0.0);
    }
    (
        (2.0 * kappa).sqrt() * (m.x + g.v / (2.0 * kappa)),
        (0.5 * kappa).sqrt() * (m.z - g.u / kappa),
    )
}

pub fn drift_and_noise(s: &GaussianTrajectoryState, kappa: f64, gains: FeedbackGains) -> SdeCoefficients {
    let (drift_q, drift_p) = drift(s.q_bar, s.p_bar, gains);
    let (noise_q, noise_p) = noise(&s.moments, kappa, gains);
    SdeCoefficients {
        drift_q,
        drift_p,
        noise_q,
        noise_p,
    }
}

/// Advance one step of size `dtau` with Wiener increment `dw ~ N(0, dtau)`.
pub fn step(
    s: &GaussianTrajectoryState,
    dw: f64,
    dtau: f64,
    kappa: f64,
    gains: FeedbackGains,
    scheme: Scheme,
) -> Result<GaussianTrajectoryState> {
    let m0 = s.moments;
    let m1 = rk4_step(&m0, kappa, dtau);
    let (q0, p0) = (s.q_bar, s.p_bar);
    let (aq, ap) = drift(q0, p0, gains);
    let (bq, bp) = noise(&m0, kappa, gains);

    let (q1, p1) = match scheme {
        Scheme::EulerMaruyama => (q0 + aq * dtau + bq * dw, p0 + ap * dtau + bp * dw),
        Scheme::Weak2 => {
            let sq = dtau.sqrt();
            let bar_q = q0 + aq * dtau + bq * dw;
            let bar_p = p0 + ap * dtau + bp * dw;
            let (abq, abp) = drift(bar_q, bar_p, gains);
            // The diffusion is state independent, so both supports share m1;
            // the (ΔW² − Δ) correction vanishes identically.
            let (bq_plus, bp_plus) = noise(&m1, kappa, gains);
            let (bq_minus, bp_minus) = noise(&m1, kappa, gains);
            let corr = (dw * dw - dtau) / sq;
            (
                q0 + 0.5 * (abq + aq) * dtau
                    + 0.25 * (bq_plus + bq_minus + 2.0 * bq) * dw
                    + 0.25 * (bq_plus - bq_minus) * corr,
                p0 + 0.5 * (abp + ap) * dtau
                    + 0.25 * (bp_plus + bp_minus + 2.0 * bp) * dw
                    + 0.25 * (bp_plus - bp_minus) * corr,
            )
        }
    };

    let out = GaussianTrajectoryState::new(q1, p1, m1);
    if !(q1.is_finite() && p1.is_finite()) {
        return Err(Error::IntegrationUnstable { tau: m1.tau });
    }
    out.moments.validate()?;
    Ok(out)
}

/// Total energy `⟨H⟩/(ħω) = (P̄² + y)/2 + (Q̄² + x)/2`.
pub fn energy(s: &GaussianTrajectoryState) -> f64 {
    0.5 * (s.p_bar * s.p_bar + s.moments.y) + 0.5 * (s.q_bar * s.q_bar + s.moments.x)
}

/// Dimensionless third central moments entering the energy noise term:
/// `(mω/ħ)^{3/2}⟨ΔQ³⟩` and `⟨{ΔP², ΔQ}⟩/√(ħ³mω)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThirdMoments {
    pub skew_q: f64,
    pub skew_ppq: f64,
}

/// Drift (per unit `τ`) and Wiener coefficient of the energy.
pub fn energy_coefficients(
    s: &GaussianTrajectoryState,
    kappa: f64,
    gains: FeedbackGains,
    third: ThirdMoments,
) -> (f64, f64) {
    let FeedbackGains { u, v } = gains;
    let (q, p) = (s.q_bar, s.p_bar);
    let m = &s.moments;
    if kappa == 0.0 {
        return (0.0, 0.0);
    }
    let noise_q = m.x + v / (2.0 * kappa);
    let noise_p = m.z - u / kappa;
    let drift = 0.25 * kappa * (1.0 - (u / kappa).powi(2) - (v / kappa).powi(2)) + v * (noise_q + q * q)
        - 0.5 * u * (noise_p + 2.0 * q * p);
    let diffusion = (0.5 * kappa).sqrt() * (2.0 * q * noise_q + p * noise_p + third.skew_q + 0.5 * third.skew_ppq);
    (drift, diffusion)
}

/// Ito energy increment including third-moment terms.
pub fn energy_increment_full(
    s: &GaussianTrajectoryState,
    kappa: f64,
    gains: FeedbackGains,
    third: ThirdMoments,
    dw: f64,
    dtau: f64,
) -> f64 {
    let (drift, diffusion) = energy_coefficients(s, kappa, gains, third);
    drift * dtau + diffusion * dw
}

/// Ito energy increment under Gaussian closure (third moments zero).
pub fn energy_increment(s: &GaussianTrajectoryState, kappa: f64, gains: FeedbackGains, dw: f64, dtau: f64) -> f64 {
    energy_increment_full(s, kappa, gains, ThirdMoments::default(), dw, dtau)
}

/// Noise-free evolution of the means (the non-selective average), RK4 for
/// both means and moments. Returns every step including `s0`.
pub fn mean_dynamics(
    s0: &GaussianTrajectoryState,
    kappa: f64,
    gains: FeedbackGains,
    tau_end: f64,
    dtau: f64,
) -> Result<Vec<GaussianTrajectoryState>> {
    let n = step_count(tau_end, dtau)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(*s0);
    let mut s = *s0;
    for i in 1..=n {
        let (q, p) = (s.q_bar, s.p_bar);
        let k1 = drift(q, p, gains);
        let k2 = drift(q + 0.5 * dtau * k1.0, p + 0.5 * dtau * k1.1, gains);
        let k3 = drift(q + 0.5 * dtau * k2.0, p + 0.5 * dtau * k2.1, gains);
        let k4 = drift(q + dtau * k3.0, p + dtau * k3.1, gains);
        let w = dtau / 6.0;
        let mut moments = rk4_step(&s.moments, kappa, dtau);
        moments.tau = s0.moments.tau + i as f64 * dtau;
        moments.validate()?;
        s = GaussianTrajectoryState::new(
            q + w * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            p + w * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            moments,
        );
        out.push(s);
    }
    Ok(out)
}
