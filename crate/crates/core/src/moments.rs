//! Second-moment dynamics of the measured quadrature under Gaussian closure.
//!
//! Dimensionless variables: `x = (mω/ħ)⟨ΔQ²⟩`, `y = ⟨ΔP²⟩/(ħmω)`,
//! `z = ⟨{ΔQ,ΔP}⟩/ħ`, time `τ = ωt`. Their flow is autonomous and does not
//! depend on the feedback gains.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::quadratures::OscillatorConfig;

/// Dimensionless tolerance on the uncertainty bound before a run is rejected.
pub const HEISENBERG_TOLERANCE: f64 = 1e-9;

/// Default integration step in `τ`.
pub const DEFAULT_DTAU: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub tau: f64,
}

impl MomentState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, tau: 0.0 }
    }

    /// Ground state of the unmeasured oscillator.
    pub fn ground() -> Self {
        Self::new(0.5, 0.5, 0.0)
    }

    /// Pure Gaussian with the given `x` and `z`; `y` follows from a zero defect.
    pub fn pure(x: f64, z: f64) -> Self {
        Self::new(x, (0.25 + 0.25 * z * z) / x, z)
    }

    /// Initial moments of the `fig1` transient preset: `x = 1/√2`, `z = 1/2`.
    pub fn fig1_initial() -> Self {
        Self::pure(std::f64::consts::FRAC_1_SQRT_2, 0.5)
    }

    pub fn defect(&self) -> f64 {
        uncertainty_defect(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) || self.x <= 0.0 || self.y <= 0.0 {
            return Err(Error::IntegrationUnstable { tau: self.tau });
        }
        let defect = self.defect();
        if defect < -HEISENBERG_TOLERANCE {
            return Err(Error::HeisenbergViolation { tau: self.tau, defect });
        }
        Ok(())
    }
}

/// Time derivatives of `(x, y, z)` with respect to `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRates {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl MomentRates {
    pub fn max_abs(&self) -> f64 {
        self.dx.abs().max(self.dy.abs()).max(self.dz.abs())
    }
}

pub fn moment_rhs(s: &MomentState, kappa: f64) -> MomentRates {
    MomentRates {
        dx: -2.0 * kappa * s.x * s.x + s.z,
        dy: 0.5 * kappa * (1.0 - s.z * s.z) - s.z,
        dz: 2.0 * (s.y - s.x) - 2.0 * kappa * s.x * s.z,
    }
}

fn offset(s: &MomentState, r: &MomentRates, h: f64) -> MomentState {
    MomentState {
        x: s.x + h * r.dx,
        y: s.y + h * r.dy,
        z: s.z + h * r.dz,
        tau: s.tau + h,
    }
}

/// One classical fourth-order Runge–Kutta step of the moment flow.
pub fn rk4_step(s: &MomentState, kappa: f64, dtau: f64) -> MomentState {
    let k1 = moment_rhs(s, kappa);
    let k2 = moment_rhs(&offset(s, &k1, 0.5 * dtau), kappa);
    let k3 = moment_rhs(&offset(s, &k2, 0.5 * dtau), kappa);
    let k4 = moment_rhs(&offset(s, &k3, dtau), kappa);
    let w = dtau / 6.0;
    MomentState {
        x: s.x + w * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        y: s.y + w * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy),
        z: s.z + w * (k1.dz + 2.0 * k2.dz + 2.0 * k3.dz + k4.dz),
        tau: s.tau + dtau,
    }
}

pub(crate) fn step_count(tau_end: f64, dtau: f64) -> Result<usize> {
    ensure(dtau.is_finite() && dtau > 0.0, || {
        format!("dtau must be positive, got {dtau}")
    })?;
    ensure(tau_end.is_finite() && tau_end > 0.0, || {
        format!("tau_end must be positive, got {tau_end}")
    })?;
    let n = (tau_end / dtau).round();
    ensure((1.0..1e12).contains(&n), || format!("step count {n} out of range"))?;
    Ok(n as usize)
}

/// Integrate the moment flow from `s0` for `tau_end`, returning every step
/// (including `s0`).
pub fn integrate_moments(s0: &MomentState, kappa: f64, tau_end: f64, dtau: f64) -> Result<Vec<MomentState>> {
    integrate_moments_sampled(s0, kappa, tau_end, dtau, 1)
}

/// Like [`integrate_moments`] but keeps only every `stride`-th step (and the last).
pub fn integrate_moments_sampled(
    s0: &MomentState,
    kappa: f64,
    tau_end: f64,
    dtau: f64,
    stride: usize,
) -> Result<Vec<MomentState>> {
    ensure(kappa.is_finite() && kappa >= 0.0, || {
        format!("kappa must be non-negative, got {kappa}")
    })?;
    ensure(stride >= 1, || "stride must be at least 1".into())?;
    s0.validate()?;
    let n = step_count(tau_end, dtau)?;
    let mut out = Vec::with_capacity(n / stride + 2);
    out.push(*s0);
    let mut s = *s0;
    for i in 1..=n {
        s = rk4_step(&s, kappa, dtau);
        // Keep the clock on the grid instead of accumulating round-off.
        s.tau = s0.tau + i as f64 * dtau;
        s.validate()?;
        if i % stride == 0 || i == n {
            out.push(s);
        }
    }
    Ok(out)
}

/// `√(1+κ²) − 1`, evaluated without cancellation for small κ.
pub(crate) fn root_minus_one(kappa: f64) -> f64 {
    let k2 = kappa * kappa;
    k2 / (1.0 + (1.0 + k2).sqrt())
}

/// Closed-form fixed point `(x∞, y∞, z∞)` of the moment flow.
pub fn stationary_moments(kappa: f64) -> Result<MomentState> {
    ensure(kappa.is_finite() && kappa > 0.0, || {
        format!("kappa must be positive, got {kappa}")
    })?;
    let r = root_minus_one(kappa);
    let z = r / kappa;
    let x = r.sqrt() / (std::f64::consts::SQRT_2 * kappa);
    let y = (1.0 + kappa * kappa).sqrt() * x;
    Ok(MomentState::new(x, y, z))
}

pub fn uncertainty_defect(s: &MomentState) -> f64 {
    s.x * s.y - 0.25 - 0.25 * s.z * s.z
}

/// Second moments in physical units: `⟨ΔQ²⟩`, `⟨ΔP²⟩`, `⟨{ΔQ,ΔP}⟩` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SIMoments {
    pub var_q: f64,
    pub var_p: f64,
    pub cov: f64,
    pub t: f64,
}

impl SIMoments {
    pub fn defect(&self, hbar: f64) -> f64 {
        self.var_q * self.var_p - 0.25 * hbar * hbar - 0.25 * self.cov * self.cov
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SIMomentRates {
    pub d_var_q: f64,
    pub d_var_p: f64,
    pub d_cov: f64,
}

/// Deterministic moment flow for `H = P²/2m + mω²Q²/2` with third central
/// moments set to zero; valid for `ω = 0` as well.
pub fn si_moment_rhs(s: &SIMoments, cfg: &OscillatorConfig) -> SIMomentRates {
    let OscillatorConfig {
        mass: m,
        omega: w,
        gamma: g,
        hbar: h,
    } = *cfg;
    let mw2 = m * w * w;
    SIMomentRates {
        d_var_q: -g * s.var_q * s.var_q + s.cov / m,
        d_var_p: 0.25 * h * h * g - 0.25 * g * s.cov * s.cov - mw2 * s.cov,
        d_cov: 2.0 * s.var_p / m - 2.0 * mw2 * s.var_q - g * s.cov * s.var_q,
    }
}

fn si_offset(s: &SIMoments, r: &SIMomentRates, h: f64) -> SIMoments {
    SIMoments {
        var_q: s.var_q + h * r.d_var_q,
        var_p: s.var_p + h * r.d_var_p,
        cov: s.cov + h * r.d_cov,
        t: s.t + h,
    }
}

pub fn si_rk4_step(s: &SIMoments, cfg: &OscillatorConfig, dt: f64) -> SIMoments {
    let k1 = si_moment_rhs(s, cfg);
    let k2 = si_moment_rhs(&si_offset(s, &k1, 0.5 * dt), cfg);
    let k3 = si_moment_rhs(&si_offset(s, &k2, 0.5 * dt), cfg);
    let k4 = si_moment_rhs(&si_offset(s, &k3, dt), cfg);
    let w = dt / 6.0;
    SIMoments {
        var_q: s.var_q + w * (k1.d_var_q + 2.0 * k2.d_var_q + 2.0 * k3.d_var_q + k4.d_var_q),
        var_p: s.var_p + w * (k1.d_var_p + 2.0 * k2.d_var_p + 2.0 * k3.d_var_p + k4.d_var_p),
        cov: s.cov + w * (k1.d_cov + 2.0 * k2.d_cov + 2.0 * k3.d_cov + k4.d_cov),
        t: s.t + dt,
    }
}

/// Integrate the physical-unit flow; returns every `stride`-th state plus the last.
pub fn integrate_si_moments(
    s0: &SIMoments,
    cfg: &OscillatorConfig,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Vec<SIMoments>> {
    cfg.validate()?;
    ensure(stride >= 1, || "stride must be at least 1".into())?;
    let n = step_count(t_end, dt)?;
    let tol = HEISENBERG_TOLERANCE * cfg.hbar * cfg.hbar;
    let check = |s: &SIMoments| -> Result<()> {
        let finite = s.var_q.is_finite() && s.var_p.is_finite() && s.cov.is_finite();
        if !finite || s.var_q <= 0.0 || s.var_p <= 0.0 {
            return Err(Error::IntegrationUnstable { tau: s.t });
        }
        let defect = s.defect(cfg.hbar);
        if defect < -tol {
            return Err(Error::HeisenbergViolation { tau: s.t, defect });
        }
        Ok(())
    };
    check(s0)?;
    let mut out = vec![*s0];
    let mut s = *s0;
    for i in 1..=n {
        s = si_rk4_step(&s, cfg, dt);
        s.t = s0.t + i as f64 * dt;
        check(&s)?;
        if i % stride == 0 || i == n {
            out.push(s);
        }
    }
    Ok(out)
}

/// Free-particle fixed point: `⟨ΔQ²⟩ = √(ħ/mγ)`, `⟨{ΔQ,ΔP}⟩ = ħ`,
/// `⟨ΔP²⟩ = (ħ/2)√(ħmγ)`.
pub fn stationary_moments_free(cfg: &OscillatorConfig) -> Result<SIMoments> {
    cfg.validate()?;
    if !cfg.is_free() {
        return Err(Error::NotFreeParticle(cfg.omega));
    }
    ensure(cfg.gamma > 0.0, || "free-particle fixed point needs gamma > 0".into())?;
    let OscillatorConfig {
        mass: m,
        gamma: g,
        hbar: h,
        ..
    } = *cfg;
    Ok(SIMoments {
        var_q: (h / (m * g)).sqrt(),
        var_p: 0.5 * h * (h * m * g).sqrt(),
        cov: h,
        t: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratures::Units;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const KAPPA_GRID: [f64; 6] = [0.01, 0.05, 0.25, 1.0, 4.0, 16.0];

    // Closed forms evaluated at 30 digits (mpmath).
    const STAT_025: [f64; 3] = [0.4961967868047123, 0.5114679407719791, 0.12310562561766054];
    const STAT_1: [f64; 3] = [0.45508986056222733, 0.6435942529055826, 0.41421356237309503];

    #[test]
    fn rhs_at_fig1_initial() {
        let r = moment_rhs(&MomentState::fig1_initial(), 0.25);
        assert_abs_diff_eq!(r.dx, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.dy, -0.40625, epsilon = 1e-12);
        assert_abs_diff_eq!(r.dz, -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn ground_state_is_fixed_without_measurement() {
        assert!(moment_rhs(&MomentState::ground(), 0.0).max_abs() < 1e-15);
    }

    #[test]
    fn stationary_values() {
        let s = stationary_moments(0.25).unwrap();
        assert_abs_diff_eq!(s.x, STAT_025[0], epsilon = 1e-14);
        assert_abs_diff_eq!(s.y, STAT_025[1], epsilon = 1e-14);
        assert_abs_diff_eq!(s.z, STAT_025[2], epsilon = 1e-14);
        let s = stationary_moments(1.0).unwrap();
        assert_abs_diff_eq!(s.x, STAT_1[0], epsilon = 1e-14);
        assert_abs_diff_eq!(s.y, STAT_1[1], epsilon = 1e-14);
        assert_abs_diff_eq!(s.z, STAT_1[2], epsilon = 1e-14);
        let weak = stationary_moments(1e-8).unwrap();
        assert_abs_diff_eq!(weak.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(weak.y, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(weak.z, 0.5e-8, epsilon = 1e-15);
        assert!(stationary_moments(0.0).is_err());
    }

    #[test]
    fn fixed_point_and_product_identity() {
        for &k in &KAPPA_GRID {
            let s = stationary_moments(k).unwrap();
            assert!(moment_rhs(&s, k).max_abs() < 1e-10, "kappa {k}");
            assert!(uncertainty_defect(&s).abs() < 1e-12, "kappa {k}");
        }
    }

    #[test]
    fn stationary_values_are_monotone_in_kappa() {
        let s: Vec<_> = KAPPA_GRID.iter().map(|&k| stationary_moments(k).unwrap()).collect();
        for w in s.windows(2) {
            assert!(w[0].z < w[1].z);
            assert!(w[0].y < w[1].y);
        }
    }

    #[test]
    fn defect_values() {
        assert_abs_diff_eq!(uncertainty_defect(&MomentState::fig1_initial()), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(uncertainty_defect(&MomentState::new(1.0, 1.0, 0.0)), 0.75);
    }

    #[test]
    fn stationary_start_stays_put() {
        let s0 = stationary_moments(0.25).unwrap();
        let run = integrate_moments(&s0, 0.25, 5.0, 1e-3).unwrap();
        assert_eq!(run.len(), 5001);
        for s in &run {
            assert_abs_diff_eq!(s.x, s0.x, epsilon = 1e-12);
            assert_abs_diff_eq!(s.y, s0.y, epsilon = 1e-12);
            assert_abs_diff_eq!(s.z, s0.z, epsilon = 1e-12);
        }
    }

    #[test]
    fn fig1_transient_matches_reference_solver() {
        // Frozen from an independent adaptive 8th-order solve (rtol 1e-13).
        let reference = [
            (
                1000usize,
                [0.5806156206034996, 0.44345708012244656, -0.17295210650709902],
            ),
            (5000, [0.4392036945958663, 0.5737825152147907, 0.08960804822893516]),
            (10000, [0.5120645256064297, 0.4940992536307806, 0.10973969041212232]),
            (50000, [0.49619752172507264, 0.5114673225287297, 0.12310674850899163]),
        ];
        let run = integrate_moments(&MomentState::fig1_initial(), 0.25, 50.0, 1e-3).unwrap();
        for (i, r) in reference {
            let s = run[i];
            assert_abs_diff_eq!(s.x, r[0], epsilon = 1e-10);
            assert_abs_diff_eq!(s.y, r[1], epsilon = 1e-10);
            assert_abs_diff_eq!(s.z, r[2], epsilon = 1e-10);
        }
        // Convergence to the closed form within 1e-6 by tau = 80.
        let long = integrate_moments_sampled(&MomentState::fig1_initial(), 0.25, 80.0, 1e-3, 1000).unwrap();
        let end = long.last().unwrap();
        assert!((end.x - STAT_025[0]).abs() < 1e-6);
        assert!((end.y - STAT_025[1]).abs() < 1e-6);
        assert!((end.z - STAT_025[2]).abs() < 1e-6);
    }

    #[test]
    fn defect_decays_with_predicted_law() {
        let kappa = 0.5;
        let s0 = MomentState::new(0.8, 0.9, 0.1);
        let d0 = s0.defect();
        let run = integrate_moments(&s0, kappa, 10.0, 1e-3).unwrap();
        // trapezoidal ∫x dτ
        let mut integral = 0.0;
        for w in run.windows(2) {
            integral += 0.5 * (w[0].x + w[1].x) * 1e-3;
            let predicted = d0 * (-2.0 * kappa * integral).exp();
            assert!((w[1].defect() - predicted).abs() < 1e-6 * d0);
        }
        for w in run.windows(2) {
            assert!(w[1].defect() <= w[0].defect() + 1e-15);
        }
    }

    #[test]
    fn unstable_step_is_reported() {
        let err = integrate_moments(&MomentState::fig1_initial(), 16.0, 10.0, 0.5).unwrap_err();
        assert!(matches!(
            err,
            Error::IntegrationUnstable { .. } | Error::HeisenbergViolation { .. }
        ));
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(integrate_moments(&MomentState::fig1_initial(), 0.25, 1.0, 0.0).is_err());
        assert!(integrate_moments(&MomentState::fig1_initial(), 0.25, -1.0, 1e-3).is_err());
        let bad = MomentState::new(0.1, 0.1, 0.0);
        assert!(matches!(
            integrate_moments(&bad, 0.25, 1.0, 1e-3),
            Err(Error::HeisenbergViolation { .. })
        ));
    }

    #[test]
    fn free_particle_fixed_point() {
        let cfg = OscillatorConfig::new(1.0, 0.0, 1.0, 1.0).unwrap();
        let s = stationary_moments_free(&cfg).unwrap();
        assert_abs_diff_eq!(s.var_q, 1.0);
        assert_abs_diff_eq!(s.cov, 1.0);
        assert_abs_diff_eq!(s.var_p, 0.5);
        assert_abs_diff_eq!(s.var_q * s.var_p, 0.25 + 0.25 * s.cov * s.cov, epsilon = 1e-15);
        let r = si_moment_rhs(&s, &cfg);
        assert!(r.d_var_q.abs() + r.d_var_p.abs() + r.d_cov.abs() < 1e-15);

        let heavy = OscillatorConfig::new(2.0, 0.0, 8.0, 1.0).unwrap();
        assert_abs_diff_eq!(stationary_moments_free(&heavy).unwrap().var_q, 0.25);

        let bound = OscillatorConfig::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(stationary_moments_free(&bound), Err(Error::NotFreeParticle(1.0)));
    }

    #[test]
    fn unmeasured_moments_rotate_with_period_pi() {
        let cfg = OscillatorConfig::new(1.0, 1.0, 0.0, 1.0).unwrap();
        let s0 = SIMoments {
            var_q: 0.25,
            var_p: 1.0,
            cov: 0.0,
            t: 0.0,
        };
        let dt = std::f64::consts::PI / 40_000.0;
        let half = integrate_si_moments(&s0, &cfg, std::f64::consts::FRAC_PI_2, dt, 1_000_000).unwrap();
        let h = half.last().unwrap();
        assert_abs_diff_eq!(h.var_q, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h.var_p, 0.25, epsilon = 1e-9);
        let full = integrate_si_moments(&s0, &cfg, std::f64::consts::PI, dt, 1_000_000).unwrap();
        let f = full.last().unwrap();
        assert_abs_diff_eq!(f.var_q, 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(f.var_p, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.cov, 0.0, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn si_rhs_reduces_to_dimensionless(
            m in 0.2..5.0f64, w in 0.2..5.0f64, g in 0.01..10.0f64, h in 0.5..2.0f64,
            x in 0.1..3.0f64, z in -2.0..2.0f64, extra in 0.0..1.0f64,
        ) {
            let cfg = OscillatorConfig::new(m, w, g, h).unwrap();
            let units = Units::new(&cfg).unwrap();
            let kappa = cfg.kappa().unwrap();
            let mut s = MomentState::pure(x, z);
            s.y += extra;
            let si = units.moments_to_si(&s);
            let r = si_moment_rhs(&si, &cfg);
            // d/dτ of the dimensionless variables
            let dx = r.d_var_q * m * w / h / w;
            let dy = r.d_var_p / (h * m * w) / w;
            let dz = r.d_cov / h / w;
            let e = moment_rhs(&s, kappa);
            let scale = 1.0 + e.max_abs();
            prop_assert!((dx - e.dx).abs() < 1e-12 * scale);
            prop_assert!((dy - e.dy).abs() < 1e-12 * scale);
            prop_assert!((dz - e.dz).abs() < 1e-12 * scale);
        }
    }
}
