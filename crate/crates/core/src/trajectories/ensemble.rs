//! Monte-Carlo ensembles of independent trajectories.
//!
//! Trajectory `i` draws its Wiener increments from ChaCha8 stream `i` keyed by
//! the master seed, so results do not depend on scheduling. Statistics are
//! merged with a fixed pairwise tree over trajectory indices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{energy, step, GaussianTrajectoryState, Scheme};
use crate::error::{ensure, Error, Result};
use crate::moments::{step_count, DEFAULT_DTAU};
use crate::quadratures::FeedbackGains;

pub const DEFAULT_RECORD_STRIDE: usize = 100;
/// Default cap on `n_traj × steps`.
pub const DEFAULT_BUDGET: u64 = 2_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub master_seed: u64,
    pub dtau: f64,
    pub tau_end: f64,
    pub scheme: Scheme,
    /// Dimensionless gains `(ũ, ṽ)`.
    pub gains: FeedbackGains,
    pub kappa: f64,
    pub record_stride: usize,
    pub initial: GaussianTrajectoryState,
    pub budget: u64,
}

impl EnsembleSpec {
    /// The cooling run: κ = 0.25, optimal gains, 100 trajectories, weak-2 scheme.
    pub fn fig3(master_seed: u64) -> Self {
        let kappa = 0.25;
        let gains = crate::control::optimal_gains(kappa, &crate::quadratures::OscillatorConfig::dimensionless(kappa))
            .expect("kappa > 0")
            .dimensionless;
        Self {
            n_traj: 100,
            master_seed,
            dtau: DEFAULT_DTAU,
            tau_end: 60.0,
            scheme: Scheme::Weak2,
            gains,
            kappa,
            record_stride: DEFAULT_RECORD_STRIDE,
            initial: GaussianTrajectoryState::fig3_initial(),
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn steps(&self) -> Result<usize> {
        step_count(self.tau_end, self.dtau)
    }

    pub fn validate(&self) -> Result<usize> {
        ensure(self.n_traj >= 1, || "n_traj must be at least 1".into())?;
        ensure(self.record_stride >= 1, || "record_stride must be at least 1".into())?;
        ensure(self.kappa.is_finite() && self.kappa >= 0.0, || {
            format!("kappa must be non-negative, got {}", self.kappa)
        })?;
        ensure(self.gains.u.is_finite() && self.gains.v.is_finite(), || {
            "gains must be finite".into()
        })?;
        ensure(self.kappa > 0.0 || self.gains == FeedbackGains::ZERO, || {
            "feedback requires a measurement (kappa > 0)".into()
        })?;
        self.initial.moments.validate()?;
        let steps = self.steps()?;
        let required = (self.n_traj as u64).saturating_mul(steps as u64);
        if required > self.budget {
            return Err(Error::BudgetExceeded {
                required,
                budget: self.budget,
            });
        }
        Ok(steps)
    }

    /// Step indices at which ensemble statistics are recorded.
    fn record_steps(&self, steps: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..=steps).step_by(self.record_stride).collect();
        if *idx.last().unwrap() != steps {
            idx.push(steps);
        }
        idx
    }
}

/// Random stream of trajectory `index`.
pub fn trajectory_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// One trajectory sampled at the record steps: `(Q̄, P̄, E)` per record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRun {
    pub index: u64,
    pub samples: Vec<[f64; 3]>,
    pub terminal: GaussianTrajectoryState,
}

pub fn run_trajectory(spec: &EnsembleSpec, index: u64) -> Result<TrajectoryRun> {
    let steps = spec.validate()?;
    trajectory(spec, index, steps)
}

fn trajectory(spec: &EnsembleSpec, index: u64, steps: usize) -> Result<TrajectoryRun> {
    let mut rng = trajectory_stream(spec.master_seed, index);
    let sd = spec.dtau.sqrt();
    let tau0 = spec.initial.tau();
    let sample = |s: &GaussianTrajectoryState| [s.q_bar, s.p_bar, energy(s)];
    let mut s = spec.initial;
    let mut samples = Vec::with_capacity(steps / spec.record_stride + 2);
    samples.push(sample(&s));
    for i in 1..=steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        s = step(&s, z * sd, spec.dtau, spec.kappa, spec.gains, spec.scheme)?;
        s.moments.tau = tau0 + i as f64 * spec.dtau;
        if i % spec.record_stride == 0 || i == steps {
            samples.push(sample(&s));
        }
    }
    Ok(TrajectoryRun {
        index,
        samples,
        terminal: s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub tau: f64,
    pub mean_q: f64,
    pub std_q: f64,
    pub mean_p: f64,
    pub std_p: f64,
    pub mean_e: f64,
    pub std_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub records: Vec<EnsembleRecord>,
    pub terminal: Vec<GaussianTrajectoryState>,
    pub kappa: f64,
    pub gains: FeedbackGains,
    pub master_seed: u64,
    /// Stream index of each trajectory (equal to its position).
    pub streams: Vec<u64>,
}

/// How to schedule trajectories. Output is identical for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing on the current pool; sequential when the
    /// `parallel` feature is disabled.
    #[default]
    Parallel,
}

pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    run_ensemble_with(spec, Execution::default())
}

pub fn run_ensemble_with(spec: &EnsembleSpec, exec: Execution) -> Result<EnsembleResult> {
    let steps = spec.validate()?;
    let n = spec.n_traj as u64;
    let runs: Vec<TrajectoryRun> = match exec {
        Execution::Sequential => (0..n).map(|i| trajectory(spec, i, steps)).collect::<Result<_>>()?,
        Execution::Parallel => parallel_runs(spec, n, steps)?,
    };

    let record_steps = spec.record_steps(steps);
    let stats = tree_reduce(&runs);
    let tau0 = spec.initial.tau();
    let records = record_steps
        .iter()
        .zip(&stats)
        .map(|(&i, st)| {
            let [q, p, e] = st.finish();
            EnsembleRecord {
                tau: tau0 + i as f64 * spec.dtau,
                mean_q: q.0,
                std_q: q.1,
                mean_p: p.0,
                std_p: p.1,
                mean_e: e.0,
                std_e: e.1,
            }
        })
        .collect();

    Ok(EnsembleResult {
        records,
        terminal: runs.iter().map(|r| r.terminal).collect(),
        kappa: spec.kappa,
        gains: spec.gains,
        master_seed: spec.master_seed,
        streams: runs.iter().map(|r| r.index).collect(),
    })
}

#[cfg(feature = "parallel")]
fn parallel_runs(spec: &EnsembleSpec, n: u64, steps: usize) -> Result<Vec<TrajectoryRun>> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(|i| trajectory(spec, i, steps)).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_runs(spec: &EnsembleSpec, n: u64, steps: usize) -> Result<Vec<TrajectoryRun>> {
    (0..n).map(|i| trajectory(spec, i, steps)).collect()
}

/// Count, mean and sum of squared deviations for the three sampled channels.
#[derive(Debug, Clone, Copy)]
struct Moments3 {
    n: f64,
    mean: [f64; 3],
    m2: [f64; 3],
}

impl Moments3 {
    fn leaf(x: &[f64; 3]) -> Self {
        Self {
            n: 1.0,
            mean: *x,
            m2: [0.0; 3],
        }
    }

    fn merge(a: &Self, b: &Self) -> Self {
        let n = a.n + b.n;
        let mut mean = [0.0; 3];
        let mut m2 = [0.0; 3];
        for k in 0..3 {
            let d = b.mean[k] - a.mean[k];
            mean[k] = a.mean[k] + d * b.n / n;
            m2[k] = a.m2[k] + b.m2[k] + d * d * a.n * b.n / n;
        }
        Self { n, mean, m2 }
    }

    /// `(mean, population std)` per channel.
    fn finish(&self) -> [(f64, f64); 3] {
        std::array::from_fn(|k| (self.mean[k], (self.m2[k] / self.n).max(0.0).sqrt()))
    }
}

fn tree_reduce(runs: &[TrajectoryRun]) -> Vec<Moments3> {
    if runs.len() == 1 {
        return runs[0].samples.iter().map(Moments3::leaf).collect();
    }
    let (left, right) = runs.split_at(runs.len() / 2);
    let (l, r) = (tree_reduce(left), tree_reduce(right));
    l.iter().zip(&r).map(|(a, b)| Moments3::merge(a, b)).collect()
}
