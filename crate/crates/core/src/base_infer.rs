//! Base inference algorithms run under a truncated proposal: batched
//! importance sampling and a bootstrap particle filter whose marginal
//! likelihood estimate serves as an unbiased weight.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{StateSpaceModel, TargetModel};
use crate::numeric::{log_sum_exp, normalize_log_weights};
use crate::reparam::{truncated_weight, HyperRect};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedSample {
    pub x: Vec<f64>,
    /// Per-sample truncated log-weight.
    #[serde(with = "crate::serde_float")]
    pub log_w: f64,
    /// Flattened ancestral latent trajectory, SMC only. Not persisted.
    #[serde(skip)]
    pub latent: Vec<f64>,
}

/// Output of one base-inference run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub samples: Vec<WeightedSample>,
    /// The single amalgamated log-weight summarizing the run.
    #[serde(with = "crate::serde_float")]
    pub log_weight: f64,
    /// Representative location of the run in `z`-space, used to attribute
    /// the run's weight to hypothetical splits.
    pub rep_z: Vec<f64>,
    /// Self-normalized integrand value `Σ w f / Σ w`, for models with a known integrand.
    pub f_value: Option<f64>,
    pub evals: u64,
}

/// A base inference algorithm `F(γ, q(·|A), ·)`.
pub trait BaseInference: Send + Sync {
    /// Dimension of the `z`-space the tree partitions.
    fn dim(&self) -> usize;

    fn run(&self, rect: &HyperRect, rng: &mut StreamRng) -> Result<RunResult>;

    /// Target evaluations consumed by one run.
    fn evals_per_run(&self) -> u64;
}

/// Importance sampling with `batch_size` draws per run; the amalgamated
/// weight is the mean sample weight.
#[derive(Clone)]
pub struct ImportanceSampler {
    model: Arc<dyn TargetModel>,
    batch_size: usize,
}

impl ImportanceSampler {
    pub fn new(model: Arc<dyn TargetModel>, batch_size: usize) -> Self {
        assert!(batch_size >= 1, "batch size must be at least one");
        Self { model, batch_size }
    }

    pub fn model(&self) -> &Arc<dyn TargetModel> {
        &self.model
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

impl BaseInference for ImportanceSampler {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn evals_per_run(&self) -> u64 {
        self.batch_size as u64
    }

    fn run(&self, rect: &HyperRect, rng: &mut StreamRng) -> Result<RunResult> {
        let mut samples = Vec::with_capacity(self.batch_size);
        let mut zs = Vec::with_capacity(self.batch_size);
        for _ in 0..self.batch_size {
            let z = rect.sample(rng);
            let (x, log_w) = truncated_weight(self.model.as_ref(), rect, &z)?;
            samples.push(WeightedSample { x, log_w, latent: Vec::new() });
            zs.push(z);
        }
        let log_ws: Vec<f64> = samples.iter().map(|s| s.log_w).collect();
        let log_weight = log_sum_exp(&log_ws) - (self.batch_size as f64).ln();

        let norm = normalize_log_weights(&log_ws);
        let rep_z = match &norm {
            Some(w) => {
                let mut acc = vec![0.0; rect.dim()];
                for (wi, z) in w.iter().zip(&zs) {
                    for (a, v) in acc.iter_mut().zip(z) {
                        *a += wi * v;
                    }
                }
                // keep inside the box despite rounding
                acc.iter()
                    .zip(rect.lo().iter().zip(rect.hi()))
                    .map(|(v, (l, h))| v.clamp(*l, *h))
                    .collect()
            }
            None => rect.center(),
        };
        let f_value = self.model.integrand(&samples[0].x).map(|_| match &norm {
            Some(w) => w.iter().zip(&samples).map(|(wi, s)| wi * self.model.integrand(&s.x).unwrap_or(0.0)).sum(),
            None => 0.0,
        });
        Ok(RunResult { samples, log_weight, rep_z, f_value, evals: self.batch_size as u64 })
    }
}

/// Systematic resampling with a fixed offset `u ∈ [0, 1)`.
///
/// Each index `i` receives either `floor(n p_i)` or `ceil(n p_i)` offspring.
pub fn systematic_resample_with_offset(weights: &[f64], n: usize, u: f64) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let mut out = Vec::with_capacity(n);
    let step = total / n as f64;
    let mut position = u * step;
    let mut cumulative = 0.0;
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    for (i, &w) in weights.iter().enumerate() {
        cumulative += w;
        while out.len() < n && (position < cumulative || i == last_positive) {
            out.push(i);
            position += step;
        }
        if out.len() == n {
            break;
        }
    }
    Ok(out)
}

/// Systematic resampling of `n` ancestor indices from nonnegative weights.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let u: f64 = rng.random();
    systematic_resample_with_offset(weights, n, u)
}

/// Result of one particle-filter sweep at fixed `θ`.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub log_ml: f64,
    /// One ancestral trajectory, flattened `series_len × state_dim`; empty when the sweep died.
    pub trajectory: Vec<f64>,
    pub evals: u64,
}

/// Bootstrap particle filter with systematic resampling at every step.
#[derive(Clone)]
pub struct SmcSampler {
    model: Arc<dyn StateSpaceModel>,
    n_particles: usize,
}

impl SmcSampler {
    pub fn new(model: Arc<dyn StateSpaceModel>, n_particles: usize) -> Self {
        assert!(n_particles >= 2, "a particle filter needs at least two particles");
        Self { model, n_particles }
    }

    pub fn model(&self) -> &Arc<dyn StateSpaceModel> {
        &self.model
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    /// Runs the filter at `theta` and returns the marginal likelihood estimate.
    pub fn sweep(&self, theta: &[f64], rng: &mut StreamRng) -> Sweep {
        let n = self.n_particles;
        let dim = self.model.state_dim();
        let len = self.model.series_len();
        let mut prev = vec![0.0; n * dim];
        for p in prev.chunks_mut(dim) {
            self.model.sample_initial(theta, rng, p);
        }
        let mut history: Vec<Vec<f64>> = Vec::with_capacity(len);
        let mut ancestry: Vec<Vec<usize>> = Vec::with_capacity(len);
        let mut log_w = vec![0.0; n];
        let mut log_ml = 0.0;
        let mut evals = 0;
        let ln_n = (n as f64).ln();
        for t in 0..len {
            let ancestors = if t == 0 {
                (0..n).collect::<Vec<_>>()
            } else {
                let w = normalize_log_weights(&log_w).expect("previous step had positive mass");
                systematic_resample(&w, n, rng).expect("normalized weights")
            };
            let mut cur = vec![0.0; n * dim];
            for (i, &a) in ancestors.iter().enumerate() {
                let (src, dst) = (&prev[a * dim..(a + 1) * dim], &mut cur[i * dim..(i + 1) * dim]);
                self.model.sample_transition(theta, t, src, rng, dst);
                log_w[i] = self.model.log_observation(theta, t, dst);
            }
            evals += n as u64;
            let lse = log_sum_exp(&log_w);
            if lse == f64::NEG_INFINITY || lse.is_nan() {
                return Sweep { log_ml: f64::NEG_INFINITY, trajectory: Vec::new(), evals };
            }
            log_ml += lse - ln_n;
            history.push(cur.clone());
            ancestry.push(ancestors);
            prev = cur;
        }
        let trajectory = if len == 0 {
            Vec::new()
        } else {
            let w = normalize_log_weights(&log_w).expect("final weights positive");
            let mut idx = systematic_resample(&w, 1, rng).expect("normalized weights")[0];
            let mut traj = vec![0.0; len * dim];
            for t in (0..len).rev() {
                traj[t * dim..(t + 1) * dim].copy_from_slice(&history[t][idx * dim..(idx + 1) * dim]);
                idx = ancestry[t][idx];
            }
            traj
        };
        Sweep { log_ml, trajectory, evals }
    }

    /// A sweep at `θ = g(z)` weighted for a region of volume `exp(log_volume)`.
    pub fn run_at(&self, z: Vec<f64>, log_volume: f64, rng: &mut StreamRng) -> RunResult {
        let theta = self.model.theta_from_unit(&z);
        let sweep = self.sweep(&theta, rng);
        let log_weight = sweep.log_ml + log_volume;
        RunResult {
            samples: vec![WeightedSample { x: theta, log_w: log_weight, latent: sweep.trajectory }],
            log_weight,
            rep_z: z,
            f_value: None,
            evals: sweep.evals,
        }
    }
}

impl BaseInference for SmcSampler {
    fn dim(&self) -> usize {
        self.model.theta_dim()
    }

    fn evals_per_run(&self) -> u64 {
        (self.n_particles * self.model.series_len()) as u64
    }

    fn run(&self, rect: &HyperRect, rng: &mut StreamRng) -> Result<RunResult> {
        let z = rect.sample(rng);
        Ok(self.run_at(z, rect.log_volume(), rng))
    }
}
