use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::StateSpaceModel;
use crate::numeric::normal_log_pdf;
use crate::rng::{StreamRng, StreamSeeder};

/// Scalar linear-Gaussian state-space model
///
/// ```text
/// x_init ~ N(0, init_sd²)
/// x_t    = φ x_{t-1} + N(0, trans_sd²)
/// y_t    = x_t + N(0, obs_sd²)
/// ```
///
/// with the autoregressive coefficient `φ` as the global parameter under a
/// uniform prior on `[phi_lo, phi_hi]`. Its likelihood is available from a
/// Kalman filter, which makes it the reference model for particle filters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearGaussianSsm {
    pub phi_lo: f64,
    pub phi_hi: f64,
    pub init_sd: f64,
    pub trans_sd: f64,
    pub obs_sd: f64,
    pub observations: Vec<f64>,
}

impl LinearGaussianSsm {
    pub fn generate(seed: u64, len: usize, phi: f64, init_sd: f64, trans_sd: f64, obs_sd: f64) -> Self {
        let mut rng = StreamSeeder::new(seed).stream(0, 0);
        let mut x = init_sd * rng.sample::<f64, _>(StandardNormal);
        let mut observations = Vec::with_capacity(len);
        for _ in 0..len {
            x = phi * x + trans_sd * rng.sample::<f64, _>(StandardNormal);
            observations.push(x + obs_sd * rng.sample::<f64, _>(StandardNormal));
        }
        Self { phi_lo: -1.0, phi_hi: 1.0, init_sd, trans_sd, obs_sd, observations }
    }
}

impl StateSpaceModel for LinearGaussianSsm {
    fn theta_dim(&self) -> usize {
        1
    }

    fn theta_from_unit(&self, z: &[f64]) -> Vec<f64> {
        vec![self.phi_lo + (self.phi_hi - self.phi_lo) * z[0]]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if (self.phi_lo..=self.phi_hi).contains(&theta[0]) {
            -(self.phi_hi - self.phi_lo).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn series_len(&self) -> usize {
        self.observations.len()
    }

    fn sample_initial(&self, _theta: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        out[0] = self.init_sd * rng.sample::<f64, _>(StandardNormal);
    }

    fn sample_transition(&self, theta: &[f64], _t: usize, prev: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        out[0] = theta[0] * prev[0] + self.trans_sd * rng.sample::<f64, _>(StandardNormal);
    }

    fn log_observation(&self, _theta: &[f64], t: usize, state: &[f64]) -> f64 {
        normal_log_pdf(self.observations[t], state[0], self.obs_sd)
    }
}
