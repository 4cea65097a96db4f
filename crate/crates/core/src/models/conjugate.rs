use serde::{Deserialize, Serialize};

use super::TargetModel;
use crate::numeric::{normal_log_pdf, std_normal_inv_cdf};

/// One-dimensional Gaussian mean with a Gaussian prior and known noise.
/// The prior is the proposal, so the evidence is available in closed form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjugateGaussian {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub noise_sd: f64,
    pub data: Vec<f64>,
}

impl ConjugateGaussian {
    pub fn new(prior_mean: f64, prior_sd: f64, noise_sd: f64, data: Vec<f64>) -> Self {
        assert!(prior_sd > 0.0 && noise_sd > 0.0);
        Self { prior_mean, prior_sd, noise_sd, data }
    }

    pub fn transform_scalar(&self, z: f64) -> f64 {
        self.prior_mean + self.prior_sd * std_normal_inv_cdf(z)
    }

    pub fn log_likelihood(&self, x: f64) -> f64 {
        self.data.iter().map(|&y| normal_log_pdf(y, x, self.noise_sd)).sum()
    }

    pub fn log_gamma(&self, x: f64) -> f64 {
        normal_log_pdf(x, self.prior_mean, self.prior_sd) + self.log_likelihood(x)
    }

    /// `(mean, sd)` of the Gaussian posterior.
    pub fn posterior(&self) -> (f64, f64) {
        let prec = 1.0 / self.prior_sd.powi(2) + self.data.len() as f64 / self.noise_sd.powi(2);
        let mean = (self.prior_mean / self.prior_sd.powi(2)
            + self.data.iter().sum::<f64>() / self.noise_sd.powi(2))
            / prec;
        (mean, prec.sqrt().recip())
    }

    /// Closed-form log marginal likelihood via the sequential predictive decomposition.
    pub fn log_evidence(&self) -> f64 {
        let mut mean = self.prior_mean;
        let mut var = self.prior_sd.powi(2);
        let noise_var = self.noise_sd.powi(2);
        let mut log_z = 0.0;
        for &y in &self.data {
            log_z += normal_log_pdf(y, mean, (var + noise_var).sqrt());
            let gain = var / (var + noise_var);
            mean += gain * (y - mean);
            var *= 1.0 - gain;
        }
        log_z
    }
}

impl TargetModel for ConjugateGaussian {
    fn dim(&self) -> usize {
        1
    }

    fn transform(&self, z: &[f64]) -> Vec<f64> {
        vec![self.transform_scalar(z[0])]
    }

    fn log_weight(&self, x: &[f64]) -> f64 {
        self.log_likelihood(x[0])
    }
}

/// `γ = c · q` with `q` a standard normal of dimension `dim`: every weight on
/// the full space equals `c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledProposal {
    pub dim: usize,
    pub log_c: f64,
}

impl ScaledProposal {
    pub fn new(dim: usize, log_c: f64) -> Self {
        Self { dim, log_c }
    }
}

impl TargetModel for ScaledProposal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn transform(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| std_normal_inv_cdf(v)).collect()
    }

    fn log_weight(&self, _x: &[f64]) -> f64 {
        self.log_c
    }
}
