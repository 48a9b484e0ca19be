use anyhow::{bail, Context};

use qfeedback::control::{bath_parameters, decay_rate, optimal_gains, stationary_energy, to_kelvin};
use qfeedback::fockspace::{integrate, FockDensityMatrix, FockRunOptions, Generator, GeneratorKind};
use qfeedback::gridsim::GridSimulator;
use qfeedback::moments::{integrate_moments_sampled, stationary_moments, MomentState};
use qfeedback::trajectories::{run_ensemble, EnsembleSpec, GaussianTrajectoryState};
use qfeedback::{Error, FeedbackGains, OscillatorConfig, QuadratureFrame};

use crate::config::{DesignConfig, EnsembleConfig, FockConfig, MomentsConfig, RunConfig, SteadyConfig};
use crate::output::{table, text_table, Output};

/// CODATA 2018 exact values.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
pub const K_B_SI: f64 = 1.380_649e-23;

/// Above this κ the rotating-wave bath picture is only qualitative.
const RWA_KAPPA_WARN: f64 = 0.1;

pub fn steady(cfg: &SteadyConfig) -> anyhow::Result<Output> {
    let kappas = cfg.kappas()?;
    if kappas.is_empty() {
        bail!("no kappa values given");
    }
    let mut rows = Vec::with_capacity(kappas.len());
    for k in kappas {
        let s = stationary_moments(k)?;
        let g = optimal_gains(k, &OscillatorConfig::dimensionless(k))?.dimensionless;
        rows.push([k, s.x, s.y, s.z, stationary_energy(k)?, g.u, g.v, decay_rate(k, 1.0)?]);
    }
    let mut out = Output::default();
    out.note("rows", rows.len());
    out.push(
        "steady.csv",
        table(["kappa", "x", "y", "z", "E", "u", "v", "rate"], rows)?,
    );
    Ok(out)
}

pub fn moments(cfg: &MomentsConfig) -> anyhow::Result<Output> {
    let s0 = MomentState::new(cfg.x0, cfg.y0, cfg.z0);
    let traj = integrate_moments_sampled(&s0, cfg.kappa, cfg.tau_end, cfg.dtau, cfg.stride)?;
    let mut out = Output::default();
    if let Some(last) = traj.last() {
        out.note("final_x", last.x);
        out.note("final_y", last.y);
        out.note("final_z", last.z);
    }
    out.push(
        "moments.csv",
        table(
            ["tau", "x", "y", "z", "defect"],
            traj.iter().map(|s| [s.tau, s.x, s.y, s.z, s.defect()]),
        )?,
    );
    Ok(out)
}

pub fn ensemble_spec(cfg: &EnsembleConfig, seed: u64) -> anyhow::Result<EnsembleSpec> {
    let gains = if cfg.optimal_gains {
        optimal_gains(cfg.kappa, &OscillatorConfig::dimensionless(cfg.kappa))?.dimensionless
    } else {
        FeedbackGains::new(cfg.u, cfg.v)
    };
    Ok(EnsembleSpec {
        n_traj: cfg.n_traj,
        master_seed: seed,
        dtau: cfg.dtau,
        tau_end: cfg.tau_end,
        scheme: cfg.scheme,
        gains,
        kappa: cfg.kappa,
        record_stride: cfg.record_stride,
        initial: GaussianTrajectoryState::new(cfg.q0, cfg.p0, MomentState::new(cfg.x0, cfg.y0, cfg.z0)),
        budget: cfg.budget,
    })
}

pub fn ensemble(cfg: &EnsembleConfig, seed: u64) -> anyhow::Result<Output> {
    let spec = ensemble_spec(cfg, seed)?;
    let res = run_ensemble(&spec)?;
    let mut out = Output::default();
    out.note("n_traj", spec.n_traj);
    out.note("u", spec.gains.u);
    out.note("v", spec.gains.v);
    out.push(
        "ensemble.csv",
        table(
            ["tau", "meanQ", "stdQ", "meanP", "stdP", "meanE", "stdE"],
            res.records
                .iter()
                .map(|r| [r.tau, r.mean_q, r.std_q, r.mean_p, r.std_p, r.mean_e, r.std_e]),
        )?,
    );
    Ok(out)
}

pub fn grid(cfg: &crate::config::GridConfig, seed: u64) -> anyhow::Result<Output> {
    let sim = GridSimulator::new(cfg.to_core(seed))?;
    let psi0 = sim.initial_state()?;
    let run = sim.run(&psi0)?;
    let mut out = Output::default();
    out.push(
        "grid_series.csv",
        table(
            ["tau", "norm", "q", "p", "varq", "varp", "cov", "skewq", "energy"],
            run.series.iter().map(|r| {
                let e = r.values;
                [r.t, e.norm, e.q, e.p, e.varq, e.varp, e.cov_sym, e.skew_q, e.energy]
            }),
        )?,
    );
    let q = sim.grid().positions();
    let mut index = Vec::with_capacity(run.snapshots.len());
    for (i, snap) in run.snapshots.iter().enumerate() {
        index.push([i as f64, snap.step as f64, snap.t]);
        out.push(
            format!("snapshots/snapshot_{i:04}.csv"),
            table(["q", "density"], q.iter().zip(&snap.density).map(|(&x, &d)| [x, d]))?,
        );
    }
    out.push("snapshots/index.csv", table(["index", "step", "t"], index)?);
    out.note("snapshots", run.snapshots.len());
    out.note("boundary_occupancy", run.final_state.boundary_occupancy());
    Ok(out)
}

pub fn fock(cfg: &FockConfig) -> anyhow::Result<Output> {
    let osc = OscillatorConfig::dimensionless(cfg.kappa);
    let gen = Generator::new(
        cfg.generator,
        &osc,
        &QuadratureFrame::position(),
        FeedbackGains::new(cfg.u, cfg.v),
    )?;
    let rho0 = match cfg.initial_thermal {
        Some(n) => FockDensityMatrix::thermal(cfg.n_max, n)?,
        None => FockDensityMatrix::number_state(cfg.n_max, cfg.initial_level)?,
    };
    let opts = FockRunOptions {
        dt: cfg.dt,
        t_end: cfg.t_end,
        record_stride: cfg.record_stride,
        leak_threshold: cfg.leak_threshold,
        strict_positivity: cfg.strict_positivity,
        max_n_max: cfg.max_n_max,
    };
    let run = integrate(&rho0, &gen, &opts)?;
    let mut out = Output::default();
    if run.positivity_flags > 0 {
        out.warnings.push(format!(
            "{} recorded states had a negative eigenvalue below tolerance",
            run.positivity_flags
        ));
    }
    if cfg.generator == GeneratorKind::Rwa && cfg.kappa > RWA_KAPPA_WARN {
        out.warnings.push(format!(
            "rotating-wave generator at kappa = {} is only qualitative",
            cfg.kappa
        ));
    }
    out.note("n_max", run.n_max);
    out.note("positivity_flags", run.positivity_flags);
    out.note("final_n_mean", run.final_state.n_mean());
    out.push(
        "fock.csv",
        table(
            ["t", "n_mean", "trace", "purity", "leak"],
            run.records.iter().map(|r| [r.t, r.n_mean, r.trace, r.purity, r.leak]),
        )?,
    );
    Ok(out)
}

/// Gains and thermal-bath figures for a given oscillator.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    pub kappa: f64,
    pub gamma: f64,
    pub gains: FeedbackGains,
    pub dimensionless: FeedbackGains,
    /// `None` in the heating regime.
    pub bath: Option<qfeedback::control::ThermalAnalogy>,
    pub kelvin: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn design_report(cfg: &DesignConfig) -> anyhow::Result<DesignReport> {
    if !(cfg.kappa.is_finite() && cfg.kappa > 0.0) {
        bail!(Error::InvalidParameter(format!(
            "kappa must be positive, got {}",
            cfg.kappa
        )));
    }
    let gamma = 2.0 * cfg.kappa * cfg.mass * cfg.omega * cfg.omega / cfg.hbar;
    let osc = OscillatorConfig::new(cfg.mass, cfg.omega, gamma, cfg.hbar)?;
    let gains = match (cfg.u, cfg.v) {
        (Some(u), Some(v)) => FeedbackGains::new(u, v),
        (None, None) => optimal_gains(cfg.kappa, &osc)?.gains,
        _ => bail!(Error::InvalidParameter("set both u and v, or neither".into())),
    };
    let dimensionless = FeedbackGains::new(gains.u / (cfg.mass * cfg.omega * cfg.omega), gains.v / cfg.omega);
    let mut warnings = Vec::new();
    let bath = match bath_parameters(gains, cfg.kappa, &osc) {
        Ok(b) => Some(b),
        Err(e @ Error::HeatingRegime(_)) => {
            warnings.push(format!("{e}; no bath temperature exists"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    if cfg.kappa > RWA_KAPPA_WARN {
        warnings.push(format!(
            "the thermal analogy assumes kappa << 1; at kappa = {} it is only qualitative",
            cfg.kappa
        ));
    }
    let kelvin = match (&bath, cfg.kelvin) {
        (Some(b), true) => Some(to_kelvin(b.t_eff, HBAR_SI, cfg.omega, K_B_SI)),
        _ => None,
    };
    Ok(DesignReport {
        kappa: cfg.kappa,
        gamma,
        gains,
        dimensionless,
        bath,
        kelvin,
        warnings,
    })
}

pub fn design(cfg: &DesignConfig) -> anyhow::Result<Output> {
    let r = design_report(cfg)?;
    let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let regime = if r.bath.is_some() { "cooling" } else { "heating" };
    let row = vec![
        r.kappa.to_string(),
        r.gamma.to_string(),
        r.gains.u.to_string(),
        r.gains.v.to_string(),
        r.dimensionless.u.to_string(),
        r.dimensionless.v.to_string(),
        fmt(r.bath.map(|b| b.gamma_prime)),
        fmt(r.bath.map(|b| b.n_bath)),
        fmt(r.bath.map(|b| b.t_eff)),
        fmt(r.kelvin),
        regime.to_string(),
    ];
    let csv = text_table(
        &[
            "kappa",
            "gamma",
            "u",
            "v",
            "u_tilde",
            "v_tilde",
            "gamma_prime",
            "n_bath",
            "t_eff",
            "t_kelvin",
            "regime",
        ],
        &[row],
    )?;

    let mut report = String::new();
    let mut line = |k: &str, v: String| report.push_str(&format!("{k:<14} {v}\n"));
    line("kappa", r.kappa.to_string());
    line("gamma", r.gamma.to_string());
    line("u", r.gains.u.to_string());
    line("v", r.gains.v.to_string());
    line("u/(m w^2)", r.dimensionless.u.to_string());
    line("v/w", r.dimensionless.v.to_string());
    line("regime", regime.to_string());
    if let Some(b) = r.bath {
        line("gamma'", b.gamma_prime.to_string());
        line("N", b.n_bath.to_string());
        line("T [hbar w/kB]", b.t_eff.to_string());
    }
    if let Some(k) = r.kelvin {
        line("T [K]", k.to_string());
    }

    let mut out = Output {
        report: Some(report),
        warnings: r.warnings,
        ..Output::default()
    };
    out.note("regime", regime);
    out.push("design.csv", csv);
    Ok(out)
}

pub fn run(command: &str, cfg: &RunConfig) -> anyhow::Result<Output> {
    match command {
        "steady" => steady(&cfg.steady),
        "moments" => moments(&cfg.moments),
        "ensemble" => ensemble(&cfg.ensemble, cfg.seed),
        "grid" => grid(&cfg.grid, cfg.seed),
        "fock" => fock(&cfg.fock),
        "design" => design(&cfg.design),
        other => Err(anyhow::anyhow!("unknown command {other}")),
    }
    .with_context(|| format!("{command} failed"))
}
