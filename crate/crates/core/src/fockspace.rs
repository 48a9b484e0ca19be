//! Non-selective master equations on a truncated number basis.
//!
//! Operators linear in `a` and `a†` act through bidiagonal helpers, so one
//! generator evaluation costs O(d²) for a basis of dimension `d = n_max + 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::pump_coefficient;
use crate::error::{ensure, Error, Result};
use crate::moments::step_count;
use crate::quadratures::{gains_frame_to_lab, FeedbackGains, OscillatorConfig, QuadratureFrame};

pub type CMatrix = DMatrix<Complex64>;

pub const DEFAULT_N_MAX: usize = 30;
pub const DEFAULT_LEAK_THRESHOLD: f64 = 1e-6;
pub const TRACE_TOLERANCE: f64 = 1e-8;
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;
/// Largest basis the automatic doubling will try.
pub const MAX_N_MAX: usize = 480;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockOperators {
    pub a: CMatrix,
    pub a_dagger: CMatrix,
    pub n: CMatrix,
    /// `ħω(n + 1/2)`.
    pub h: CMatrix,
}

pub fn build_operators(n_max: usize, cfg: &OscillatorConfig) -> Result<FockOperators> {
    ensure(n_max >= 2, || format!("n_max must be at least 2, got {n_max}"))?;
    let d = n_max + 1;
    let a = CMatrix::from_fn(d, d, |i, j| {
        if j == i + 1 {
            Complex64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let a_dagger = a.adjoint();
    let n = CMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(i as f64, 0.0) } else { ZERO });
    let h = CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            Complex64::new(cfg.hbar * cfg.omega * (i as f64 + 0.5), 0.0)
        } else {
            ZERO
        }
    });
    Ok(FockOperators { a, a_dagger, n, h })
}

/// `aρ`.
fn a_left(r: &CMatrix) -> CMatrix {
    let d = r.nrows();
    CMatrix::from_fn(d, d, |i, j| {
        if i + 1 < d {
            r[(i + 1, j)] * ((i + 1) as f64).sqrt()
        } else {
            ZERO
        }
    })
}

/// `a†ρ`.
fn ad_left(r: &CMatrix) -> CMatrix {
    let d = r.nrows();
    CMatrix::from_fn(
        d,
        d,
        |i, j| if i > 0 { r[(i - 1, j)] * (i as f64).sqrt() } else { ZERO },
    )
}

/// `ρa`.
fn a_right(r: &CMatrix) -> CMatrix {
    let d = r.nrows();
    CMatrix::from_fn(
        d,
        d,
        |i, j| if j > 0 { r[(i, j - 1)] * (j as f64).sqrt() } else { ZERO },
    )
}

/// `ρa†`.
fn ad_right(r: &CMatrix) -> CMatrix {
    let d = r.nrows();
    CMatrix::from_fn(d, d, |i, j| {
        if j + 1 < d {
            r[(i, j + 1)] * ((j + 1) as f64).sqrt()
        } else {
            ZERO
        }
    })
}

/// `x·a + y·a†`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ladder {
    x: Complex64,
    y: Complex64,
}

impl Ladder {
    /// `αq + βp` with `q = √(ħ/2mω)(a + a†)` and `p = i√(ħmω/2)(a† − a)`.
    fn quadrature(alpha: f64, beta: f64, cfg: &OscillatorConfig) -> Self {
        let sq = (cfg.hbar / (2.0 * cfg.mass * cfg.omega)).sqrt();
        let sp = (cfg.hbar * cfg.mass * cfg.omega / 2.0).sqrt();
        Self {
            x: Complex64::new(alpha * sq, -beta * sp),
            y: Complex64::new(alpha * sq, beta * sp),
        }
    }

    fn is_zero(&self) -> bool {
        self.x == ZERO && self.y == ZERO
    }

    /// `out += s·[X, r]`.
    fn add_commutator(&self, out: &mut CMatrix, r: &CMatrix, s: Complex64) {
        add_ladder(out, r, [s * self.x, s * self.y, -s * self.x, -s * self.y]);
    }

    /// `[X, r]`.
    fn commutator(&self, r: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(r.nrows(), r.ncols());
        self.add_commutator(&mut out, r, re(1.0));
        out
    }

    /// `{X, r}`.
    fn anticommutator(&self, r: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(r.nrows(), r.ncols());
        add_ladder(&mut out, r, [self.x, self.y, self.x, self.y]);
        out
    }
}

/// `out += c0·aρ + c1·a†ρ + c2·ρa + c3·ρa†` in one pass.
fn add_ladder(out: &mut CMatrix, r: &CMatrix, c: [Complex64; 4]) {
    let d = r.nrows();
    let sq: Vec<f64> = (0..=d).map(|k| (k as f64).sqrt()).collect();
    for j in 0..d {
        for i in 0..d {
            let mut acc = ZERO;
            if i + 1 < d {
                acc += c[0] * sq[i + 1] * r[(i + 1, j)];
            }
            if i > 0 {
                acc += c[1] * sq[i] * r[(i - 1, j)];
            }
            if j > 0 {
                acc += c[2] * sq[j] * r[(i, j - 1)];
            }
            if j + 1 < d {
                acc += c[3] * sq[j + 1] * r[(i, j + 1)];
            }
            out[(i, j)] += acc;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Full feedback master equation including counter-rotating terms.
    Full,
    /// Rotating-wave form with pump and damping coefficients `c` and `c − v`.
    Rwa,
}

/// A master-equation generator with its coefficients precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    kind: GeneratorKind,
    hbar: f64,
    omega: f64,
    gamma: f64,
    m: Ladder,
    f: Ladder,
    lamb: f64,
    pump: f64,
    damp: f64,
}

impl Generator {
    /// `gains` are the frame gains `(u, v)` in SI units.
    pub fn new(
        kind: GeneratorKind,
        cfg: &OscillatorConfig,
        frame: &QuadratureFrame,
        gains: FeedbackGains,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.is_free() {
            return Err(Error::FreeParticle);
        }
        ensure(gains.u.is_finite() && gains.v.is_finite(), || {
            "gains must be finite".into()
        })?;
        let lab = gains_frame_to_lab(gains, frame);
        let f = Ladder::quadrature(lab.chi, lab.delta, cfg);
        ensure(cfg.gamma > 0.0 || f.is_zero(), || {
            "feedback needs a measurement signal (gamma > 0)".into()
        })?;
        let mut g = Self {
            kind,
            hbar: cfg.hbar,
            omega: cfg.omega,
            gamma: cfg.gamma,
            m: Ladder::quadrature(frame.alpha(), frame.beta(), cfg),
            f,
            lamb: 0.0,
            pump: 0.0,
            damp: 0.0,
        };
        if kind == GeneratorKind::Rwa {
            ensure(frame.is_position(), || {
                "the rotating-wave generator assumes position measurement".into()
            })?;
            let c = pump_coefficient(gains, cfg.kappa()?, cfg)?;
            g.lamb = gains.u / (4.0 * cfg.mass * cfg.omega);
            g.pump = c;
            g.damp = c - gains.v;
        }
        Ok(g)
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    /// `dρ/dt`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = rho.nrows();
        let w = self.omega;
        // −(i/ħ)[H, ρ] with H diagonal
        let mut out = CMatrix::from_fn(d, d, |i, j| {
            rho[(i, j)] * Complex64::new(0.0, -w * (i as f64 - j as f64))
        });
        match self.kind {
            GeneratorKind::Full => {
                if self.gamma > 0.0 {
                    self.m
                        .add_commutator(&mut out, &self.m.commutator(rho), re(-self.gamma / 8.0));
                    if !self.f.is_zero() {
                        let h2 = self.hbar * self.hbar;
                        let s = re(-1.0 / (2.0 * h2 * self.gamma));
                        self.f.add_commutator(&mut out, &self.f.commutator(rho), s);
                        let s = Complex64::new(0.0, -0.5 / self.hbar);
                        self.f.add_commutator(&mut out, &self.m.anticommutator(rho), s);
                    }
                }
            }
            GeneratorKind::Rwa => {
                // truncated a a† has a zero in its last diagonal entry
                let nn = |i: usize| i as f64;
                let aad = |i: usize| if i + 1 < d { i as f64 + 1.0 } else { 0.0 };
                let a_rho_ad = a_left(&ad_right(rho));
                let ad_rho_a = ad_left(&a_right(rho));
                for j in 0..d {
                    for i in 0..d {
                        let r = rho[(i, j)];
                        let lamb = Complex64::new(0.0, -self.lamb * ((nn(i) + aad(i)) - (nn(j) + aad(j))));
                        out[(i, j)] += lamb * r
                            + self.damp * (a_rho_ad[(i, j)] - 0.5 * (nn(i) + nn(j)) * r)
                            + self.pump * (ad_rho_a[(i, j)] - 0.5 * (aad(i) + aad(j)) * r);
                    }
                }
            }
        }
        out
    }
}

/// Deterministic part of the feedback master equation.
pub fn full_me_rhs(
    rho: &CMatrix,
    cfg: &OscillatorConfig,
    frame: &QuadratureFrame,
    gains: FeedbackGains,
) -> Result<CMatrix> {
    Ok(Generator::new(GeneratorKind::Full, cfg, frame, gains)?.apply(rho))
}

/// Rotating-wave master equation for position measurement.
pub fn rwa_me_rhs(rho: &CMatrix, cfg: &OscillatorConfig, gains: FeedbackGains) -> Result<CMatrix> {
    Ok(Generator::new(GeneratorKind::Rwa, cfg, &QuadratureFrame::position(), gains)?.apply(rho))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    rho: CMatrix,
}

impl FockDensityMatrix {
    pub fn new(rho: CMatrix) -> Result<Self> {
        ensure(rho.is_square() && rho.nrows() >= 3, || {
            "rho must be square with n_max >= 2".into()
        })?;
        let s = Self { rho };
        s.check(0.0, POSITIVITY_TOLERANCE)?;
        Ok(s)
    }

    /// `|k⟩⟨k|`.
    pub fn number_state(n_max: usize, k: usize) -> Result<Self> {
        ensure(k <= n_max, || format!("level {k} above n_max = {n_max}"))?;
        Self::from_populations(&(0..=n_max).map(|i| if i == k { 1.0 } else { 0.0 }).collect::<Vec<_>>())
    }

    /// Bose-Einstein populations of mean `n_bath`, renormalized on the truncated basis.
    pub fn thermal(n_max: usize, n_bath: f64) -> Result<Self> {
        ensure(n_bath >= 0.0 && n_bath.is_finite(), || {
            format!("occupation must be >= 0, got {n_bath}")
        })?;
        let x = n_bath / (n_bath + 1.0);
        let p: Vec<f64> = (0..=n_max).map(|k| x.powi(k as i32)).collect();
        let total: f64 = p.iter().sum();
        Self::from_populations(&p.iter().map(|v| v / total).collect::<Vec<_>>())
    }

    pub fn from_populations(p: &[f64]) -> Result<Self> {
        let d = p.len();
        Self::new(CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::new(p[i], 0.0)
            } else {
                ZERO
            }
        }))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn n_max(&self) -> usize {
        self.rho.nrows() - 1
    }

    /// Zero-padded copy on a larger basis.
    pub fn embed(&self, n_max: usize) -> Self {
        let d = self.rho.nrows();
        let big = CMatrix::from_fn(n_max + 1, n_max + 1, |i, j| {
            if i < d && j < d {
                self.rho[(i, j)]
            } else {
                ZERO
            }
        });
        Self { rho: big }
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn n_mean(&self) -> f64 {
        (0..self.rho.nrows()).map(|i| i as f64 * self.rho[(i, i)].re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Population of the top two levels.
    pub fn leak(&self) -> f64 {
        let d = self.rho.nrows();
        self.rho[(d - 1, d - 1)].re + self.rho[(d - 2, d - 2)].re
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.rho.nrows();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..=j {
                worst = worst.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().min()
    }

    /// Checks trace, hermiticity and positivity at time `t`.
    pub fn check(&self, t: f64, positivity_tolerance: f64) -> Result<()> {
        let tr = self.trace();
        if tr.is_nan() || (tr - 1.0).abs() >= TRACE_TOLERANCE {
            return Err(Error::InvalidDensityMatrix {
                what: format!("trace {tr}"),
                t,
            });
        }
        let h = self.hermiticity_error();
        if h.is_nan() || h >= HERMITIAN_TOLERANCE {
            return Err(Error::InvalidDensityMatrix {
                what: format!("hermiticity error {h:e}"),
                t,
            });
        }
        let min_eigenvalue = self.min_eigenvalue();
        if min_eigenvalue < -positivity_tolerance {
            return Err(Error::PositivityLoss { min_eigenvalue, t });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockRunOptions {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub leak_threshold: f64,
    /// Fail on a negative eigenvalue instead of counting it.
    pub strict_positivity: bool,
    pub max_n_max: usize,
}

impl Default for FockRunOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 100.0,
            record_stride: 100,
            leak_threshold: DEFAULT_LEAK_THRESHOLD,
            strict_positivity: true,
            max_n_max: MAX_N_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockRecord {
    pub t: f64,
    pub n_mean: f64,
    pub trace: f64,
    pub purity: f64,
    pub leak: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockRun {
    pub n_max: usize,
    pub records: Vec<FockRecord>,
    pub final_state: FockDensityMatrix,
    /// Recorded steps with a negative eigenvalue below tolerance (non-strict runs).
    pub positivity_flags: usize,
}

fn rk4(g: &Generator, rho: &CMatrix, dt: f64) -> CMatrix {
    let k1 = g.apply(rho);
    let k2 = g.apply(&(rho + &k1 * re(0.5 * dt)));
    let k3 = g.apply(&(rho + &k2 * re(0.5 * dt)));
    let k4 = g.apply(&(rho + &k3 * re(dt)));
    rho + (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * re(dt / 6.0)
}

/// Fixed-step RK4 integration. When the population of the top two levels
/// exceeds the threshold the run restarts with twice the basis size, up to
/// `max_n_max`.
pub fn integrate(rho0: &FockDensityMatrix, g: &Generator, opts: &FockRunOptions) -> Result<FockRun> {
    ensure(opts.record_stride >= 1, || "record_stride must be at least 1".into())?;
    ensure(opts.leak_threshold > 0.0, || "leak_threshold must be positive".into())?;
    let mut n_max = rho0.n_max();
    loop {
        match integrate_fixed(&rho0.embed(n_max), g, opts) {
            Err(Error::TruncationLeak { .. }) if 2 * n_max <= opts.max_n_max => n_max *= 2,
            other => return other,
        }
    }
}

fn integrate_fixed(rho0: &FockDensityMatrix, g: &Generator, opts: &FockRunOptions) -> Result<FockRun> {
    let steps = step_count(opts.t_end, opts.dt)?;
    let tol = if opts.strict_positivity {
        POSITIVITY_TOLERANCE
    } else {
        f64::INFINITY
    };
    let mut flags = 0;
    let mut records = Vec::new();
    let mut record = |s: &FockDensityMatrix, t: f64| -> Result<()> {
        s.check(t, tol)?;
        let leak = s.leak();
        if leak.is_nan() || leak >= opts.leak_threshold {
            return Err(Error::TruncationLeak { leak, n_max: s.n_max() });
        }
        let min_eigenvalue = s.min_eigenvalue();
        if min_eigenvalue < -POSITIVITY_TOLERANCE {
            flags += 1;
        }
        records.push(FockRecord {
            t,
            n_mean: s.n_mean(),
            trace: s.trace(),
            purity: s.purity(),
            leak,
            min_eigenvalue,
        });
        Ok(())
    };
    let mut s = rho0.clone();
    record(&s, 0.0)?;
    for i in 1..=steps {
        s = FockDensityMatrix {
            rho: rk4(g, &s.rho, opts.dt),
        };
        if i % opts.record_stride == 0 || i == steps {
            record(&s, i as f64 * opts.dt)?;
        }
    }
    Ok(FockRun {
        n_max: s.n_max(),
        records,
        final_state: s,
        positivity_flags: flags,
    })
}
