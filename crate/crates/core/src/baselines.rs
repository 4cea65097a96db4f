//! Reference methods: non-adaptive importance sampling, the naive-IT
//! parameter preset and particle marginal Metropolis-Hastings.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::base_infer::{BaseInference, SmcSampler};
use crate::error::Result;
use crate::numeric::{log_sum_exp, normalize_log_weights};
use crate::refine::batch_runs;
use crate::reparam::HyperRect;
use crate::rng::{StreamRng, StreamSeeder};
use crate::traversal::{Schedule, TraversalParams};
use crate::tree::{LocalEstimate, MeasurePoint};

/// Traversal parameters of the naive tree: no targeted exploration, no
/// annealing, and a larger optimism boost.
pub fn naive_it_preset() -> TraversalParams {
    TraversalParams {
        delta: Schedule::Constant { value: 0.0 },
        alpha: Schedule::Constant { value: 0.0 },
        beta: 0.5,
        ..TraversalParams::default()
    }
}

/// Importance sampling on the whole space, in batches of `runs_per_step`
/// runs drawn from the same streams a never-split tree would use.
pub struct VanillaIs {
    base: Arc<dyn BaseInference>,
    runs_per_step: usize,
    seeder: StreamSeeder,
    local: LocalEstimate,
    sample_log_w: Vec<f64>,
    evals: u64,
    iteration: u64,
}

impl VanillaIs {
    pub fn new(base: Arc<dyn BaseInference>, runs_per_step: usize, seed: u64) -> Self {
        Self {
            base,
            runs_per_step: runs_per_step.max(1),
            seeder: StreamSeeder::new(seed),
            local: LocalEstimate::default(),
            sample_log_w: Vec::new(),
            evals: 0,
            iteration: 0,
        }
    }

    pub fn step(&mut self) -> Result<u64> {
        let rect = HyperRect::unit(self.base.dim());
        let (runs, evals) = batch_runs(self.base.as_ref(), &rect, &self.seeder, self.iteration, 0, self.runs_per_step)?;
        for r in runs {
            self.sample_log_w.extend(r.samples.iter().map(|s| s.log_w));
            self.local.push(r);
        }
        self.evals += evals;
        self.iteration += 1;
        Ok(evals)
    }

    pub fn evals(&self) -> u64 {
        self.evals
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Mean of the run weights.
    pub fn log_z(&self) -> f64 {
        self.local.log_mean_w()
    }

    /// ESS over individual sample weights.
    pub fn ess(&self) -> f64 {
        let lse = log_sum_exp(&self.sample_log_w);
        if lse == f64::NEG_INFINITY {
            return 0.0;
        }
        let sq: Vec<f64> = self.sample_log_w.iter().map(|w| 2.0 * w).collect();
        (2.0 * lse - log_sum_exp(&sq)).exp()
    }

    pub fn local(&self) -> &LocalEstimate {
        &self.local
    }

    /// Self-normalized integrand estimate from the runs' `f` values.
    pub fn integral(&self) -> Option<f64> {
        let total = self.local.log_sum_w();
        if total == f64::NEG_INFINITY {
            return None;
        }
        let mut acc = 0.0;
        for r in self.local.runs() {
            acc += (r.log_w - total).exp() * r.f_value?;
        }
        Some(acc)
    }

    pub fn measure(&self) -> Vec<MeasurePoint> {
        let mut points = Vec::new();
        let Some(weights) = normalize_log_weights(&self.sample_log_w) else {
            return points;
        };
        let mut i = 0;
        for r in self.local.runs() {
            for s in &r.samples {
                points.push(MeasurePoint { x: s.x.clone(), weight: weights[i], latent: s.latent.clone() });
                i += 1;
            }
        }
        points
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VanillaIsResult {
    pub log_z: f64,
    pub ess: f64,
    pub evals: u64,
}

/// Runs [`VanillaIs`] until at least `budget` evaluations are used.
pub fn vanilla_is(base: Arc<dyn BaseInference>, budget: u64, runs_per_step: usize, seed: u64) -> Result<VanillaIs> {
    let mut is = VanillaIs::new(base, runs_per_step, seed);
    loop {
        is.step()?;
        if is.evals() >= budget {
            return Ok(is);
        }
    }
}

/// A target whose likelihood is available only through an unbiased estimator.
pub trait PseudoMarginal: Send + Sync {
    fn dim(&self) -> usize;

    fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64>;

    fn log_prior(&self, theta: &[f64]) -> f64;

    /// Log of an unbiased likelihood estimate, and the evaluations it cost.
    fn log_likelihood_estimate(&self, theta: &[f64], rng: &mut StreamRng) -> (f64, u64);
}

impl PseudoMarginal for SmcSampler {
    fn dim(&self) -> usize {
        self.model().theta_dim()
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64> {
        let z: Vec<f64> = (0..PseudoMarginal::dim(self)).map(|_| rng.random::<f64>()).collect();
        self.model().theta_from_unit(&z)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.model().log_prior(theta)
    }

    fn log_likelihood_estimate(&self, theta: &[f64], rng: &mut StreamRng) -> (f64, u64) {
        let sweep = self.sweep(theta, rng);
        (sweep.log_ml, sweep.evals)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmmhRecord {
    pub iteration: u64,
    pub theta: Vec<f64>,
    #[serde(with = "crate::serde_float")]
    pub log_z: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmmhState {
    pub theta: Vec<f64>,
    #[serde(with = "crate::serde_float")]
    pub log_z: f64,
    #[serde(with = "crate::serde_float")]
    pub log_prior: f64,
    pub step_sd: f64,
    pub trace: Vec<PmmhRecord>,
    pub evals: u64,
}

impl PmmhState {
    /// Starts a chain at a prior draw.
    pub fn from_prior<M: PseudoMarginal + ?Sized>(model: &M, step_sd: f64, rng: &mut StreamRng) -> Self {
        let theta = model.sample_prior(rng);
        let log_prior = model.log_prior(&theta);
        let (log_z, evals) = model.log_likelihood_estimate(&theta, rng);
        Self { theta, log_z, log_prior, step_sd, trace: Vec::new(), evals }
    }

    pub fn accepted(&self) -> usize {
        self.trace.iter().filter(|r| r.accepted).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "iteration")?;
        for i in 0..self.theta.len() {
            write!(out, ",theta_{i}")?;
        }
        writeln!(out, ",log_z,accepted")?;
        for r in &self.trace {
            write!(out, "{}", r.iteration)?;
            for t in &r.theta {
                write!(out, ",{t}")?;
            }
            writeln!(out, ",{},{}", r.log_z, r.accepted as u8)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One Metropolis-Hastings step with an isotropic Gaussian random walk.
/// Proposals outside the prior support are rejected without a sweep.
pub fn pmmh_step<M: PseudoMarginal + ?Sized>(model: &M, state: &mut PmmhState, rng: &mut StreamRng) {
    let proposal: Vec<f64> = state
        .theta
        .iter()
        .map(|t| {
            let e: f64 = StandardNormal.sample(rng);
            t + state.step_sd * e
        })
        .collect::<Vec<f64>>();
    let prior = model.log_prior(&proposal);
    let mut accepted = false;
    let mut log_z = f64::NEG_INFINITY;
    if prior > f64::NEG_INFINITY {
        let (lz, evals) = model.log_likelihood_estimate(&proposal, rng);
        state.evals += evals;
        log_z = lz;
        let current = state.log_z + state.log_prior;
        let candidate = lz + prior;
        accepted = if candidate == f64::NEG_INFINITY || candidate.is_nan() {
            false
        } else if current == f64::NEG_INFINITY {
            true
        } else {
            let log_ratio = candidate - current;
            log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
        };
    }
    if accepted {
        state.theta = proposal;
        state.log_z = log_z;
        state.log_prior = prior;
    }
    state.trace.push(PmmhRecord {
        iteration: state.trace.len() as u64,
        theta: state.theta.clone(),
        log_z: state.log_z,
        accepted,
    });
}

/// Runs a chain until `budget` evaluations are spent (at least one step).
pub fn pmmh<M: PseudoMarginal + ?Sized>(model: &M, step_sd: f64, budget: u64, seed: u64) -> PmmhState {
    let seeder = StreamSeeder::new(seed);
    let mut state = PmmhState::from_prior(model, step_sd, &mut seeder.stream(0, 0));
    let mut i = 1;
    loop {
        pmmh_step(model, &mut state, &mut seeder.stream(i, 0));
        i += 1;
        if state.evals >= budget {
            return state;
        }
    }
}

/// Random-walk standard deviation of the chaos PMMH baseline (covariance `0.0004 I`).
pub const PMMH_STEP_SD: f64 = 0.02;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_infer::ImportanceSampler;
    use crate::models::{ConjugateGaussian, ScaledProposal};
    use crate::numeric::normal_log_pdf;
    use crate::refine::RefineConfig;
    use crate::trainer::{Trainer, TrainerSettings};
    use crate::traversal::TraversalMode;

    #[test]
    fn preset_values() {
        let p = naive_it_preset();
        assert_eq!(p.delta.at(0.5), 0.0);
        assert_eq!(p.alpha.at(1.0), 0.0);
        assert_eq!(p.beta, 0.5);
        assert_eq!(p.kappa, 1.0);
    }

    #[test]
    fn exact_proposal_gives_full_ess() {
        let base = Arc::new(ImportanceSampler::new(Arc::new(ScaledProposal::new(2, 0.0)), 10));
        let is = vanilla_is(base.clone(), 50, 1, 1).unwrap();
        assert!((is.ess() - 50.0).abs() < 1e-9);
        assert!(is.log_z().abs() < 1e-12);
        let base1 = Arc::new(ImportanceSampler::new(Arc::new(ScaledProposal::new(2, 0.0)), 1));
        let is = vanilla_is(base1, 1, 1, 1).unwrap();
        assert!((is.ess() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanilla_is_matches_unsplit_tree() {
        let model = Arc::new(ConjugateGaussian::new(0.0, 1.0, 0.5, vec![0.3, -0.2, 0.8]));
        let base = Arc::new(ImportanceSampler::new(model, 7));
        let cfg = RefineConfig { runs: 4, never_split: true, ..Default::default() };
        for seed in 0..5 {
            let settings = TrainerSettings {
                traversal: TraversalParams::default(),
                refine: cfg,
                mode: TraversalMode::Inference,
                budget: 280,
                seed,
            };
            let mut t = Trainer::new(base.clone(), settings).unwrap();
            t.run(|_, _| Ok(())).unwrap();
            let is = vanilla_is(base.clone(), 280, 4, seed).unwrap();
            assert_eq!(t.tree().log_ml(), is.log_z());
            assert_eq!(t.evals_used(), is.evals());
        }
    }

    #[test]
    fn conjugate_log_z_within_error() {
        let model = ConjugateGaussian::new(0.0, 1.0, 0.5, vec![0.3, -0.2, 0.8]);
        let exact = model.log_evidence();
        let base = Arc::new(ImportanceSampler::new(Arc::new(model), 100));
        let is = vanilla_is(base, 100_000, 10, 4).unwrap();
        let w: Vec<f64> = is.local().log_weights().map(|v| (v - exact).exp()).collect();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 3.0 * (var / n).sqrt());
    }

    /// Exact-likelihood toy: θ ~ N(0, 1), y | θ ~ N(θ, 0.5²).
    struct ExactGaussian {
        y: f64,
    }

    impl PseudoMarginal for ExactGaussian {
        fn dim(&self) -> usize {
            1
        }
        fn sample_prior(&self, rng: &mut StreamRng) -> Vec<f64> {
            vec![StandardNormal.sample(rng)]
        }
        fn log_prior(&self, theta: &[f64]) -> f64 {
            normal_log_pdf(theta[0], 0.0, 1.0)
        }
        fn log_likelihood_estimate(&self, theta: &[f64], _rng: &mut StreamRng) -> (f64, u64) {
            (normal_log_pdf(self.y, theta[0], 0.5), 1)
        }
    }

    /// Prior restricted to [-1, 1].
    struct Boxed;

    impl PseudoMarginal for Boxed {
        fn dim(&self) -> usize {
            1
        }
        fn sample_prior(&self, _rng: &mut StreamRng) -> Vec<f64> {
            vec![0.99]
        }
        fn log_prior(&self, theta: &[f64]) -> f64 {
            if theta[0].abs() <= 1.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        fn log_likelihood_estimate(&self, _theta: &[f64], _rng: &mut StreamRng) -> (f64, u64) {
            (0.0, 1)
        }
    }

    #[test]
    fn out_of_support_is_rejected() {
        let mut state = PmmhState::from_prior(&Boxed, 5.0, &mut StreamSeeder::new(0).stream(0, 0));
        let seeder = StreamSeeder::new(1);
        for i in 0..200 {
            pmmh_step(&Boxed, &mut state, &mut seeder.stream(i, 0));
            assert!(state.theta[0].abs() <= 1.0);
        }
    }

    #[test]
    fn flat_target_always_accepts() {
        let mut state = PmmhState::from_prior(&Boxed, 1e-3, &mut StreamSeeder::new(0).stream(0, 0));
        state.theta = vec![0.0];
        let seeder = StreamSeeder::new(2);
        for i in 0..100 {
            pmmh_step(&Boxed, &mut state, &mut seeder.stream(i, 0));
        }
        assert_eq!(state.accepted(), 100);
    }

    #[test]
    fn exact_likelihood_chain_mean() {
        let model = ExactGaussian { y: 1.0 };
        // posterior N(0.8, 0.2)
        let state = pmmh(&model, 0.8, 100_000, 11);
        let xs: Vec<f64> = state.trace.iter().map(|r| r.theta[0]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        // batch means standard error
        let b = 100;
        let batch: Vec<f64> = xs.chunks(xs.len() / b).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let bm = batch.iter().sum::<f64>() / batch.len() as f64;
        let bv = batch.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (batch.len() - 1) as f64;
        let se = (bv / batch.len() as f64).sqrt();
        assert!((mean - 0.8).abs() < 3.0 * se, "mean {mean} se {se}");
    }
}
