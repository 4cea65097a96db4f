use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, StateSpaceModel};
use crate::numeric::LN_2PI;
use crate::rng::{StreamRng, StreamSeeder};

/// Mean of the Pickover attractor transition for `θ = (a, b, c, d)`.
pub fn pickover_step(theta: &[f64], x: &[f64]) -> [f64; 3] {
    let (a, b, c, d) = (theta[0], theta[1], theta[2], theta[3]);
    [
        (b * x[1]).sin() - (a * x[0]).cos() * x[2],
        (d * x[0]).sin() * x[2] - (c * x[1]).cos(),
        x[0].sin(),
    ]
}

/// Parameters used to simulate a chaos dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaosTruth {
    pub theta: [f64; 4],
    pub series_len: usize,
    pub n_obs: usize,
    pub dirichlet_concentration: f64,
}

impl Default for ChaosTruth {
    fn default() -> Self {
        Self { theta: [2.5, -2.3, 1.25, -1.5], series_len: 200, n_obs: 20, dirichlet_concentration: 0.1 }
    }
}

/// Pickover-attractor tracking model with dynamics parameters `θ = (a, b, c, d)`,
/// uniform priors on `[-π, π]`, Gaussian transition noise, and observations
/// `y_t = C x_t + ε_t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaosModel {
    /// `n_obs × 3` observation matrix, row-major.
    pub obs_matrix: Vec<[f64; 3]>,
    pub transition_var: f64,
    pub obs_var: f64,
    pub observations: Vec<Vec<f64>>,
}

impl ChaosModel {
    pub const TRANSITION_VAR: f64 = 0.01;
    pub const OBS_VAR: f64 = 0.2;

    pub fn new(obs_matrix: Vec<[f64; 3]>, observations: Vec<Vec<f64>>) -> Self {
        assert!(observations.iter().all(|y| y.len() == obs_matrix.len()));
        Self { obs_matrix, transition_var: Self::TRANSITION_VAR, obs_var: Self::OBS_VAR, observations }
    }

    /// Simulates an observation matrix and a series from the model.
    pub fn generate(seed: u64, truth: &ChaosTruth) -> Self {
        let mut rng = StreamSeeder::new(seed).stream(0, 0);
        let gamma = Gamma::new(truth.dirichlet_concentration, 1.0).expect("valid concentration");
        let k = truth.n_obs;
        let mut obs_matrix = vec![[0.0; 3]; k];
        for col in 0..3 {
            let draws = loop {
                let g: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
                let s: f64 = g.iter().sum();
                if s > 0.0 {
                    break g.into_iter().map(|v| v / s).collect::<Vec<_>>();
                }
            };
            for (row, v) in obs_matrix.iter_mut().zip(draws) {
                row[col] = v;
            }
        }
        let mut model = Self::new(obs_matrix, Vec::new());
        let mut x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let tsd = model.transition_var.sqrt();
        let osd = model.obs_var.sqrt();
        let mut observations = Vec::with_capacity(truth.series_len);
        for _ in 0..truth.series_len {
            let mean = pickover_step(&truth.theta, &x);
            for i in 0..3 {
                x[i] = mean[i] + tsd * rng.sample::<f64, _>(StandardNormal);
            }
            let y = model
                .obs_matrix
                .iter()
                .map(|row| row.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() + osd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            observations.push(y);
        }
        model.observations = observations;
        model
    }

    /// Keeps only the first `len` observations.
    pub fn truncated(&self, len: usize) -> Self {
        let mut m = self.clone();
        m.observations.truncate(len);
        m
    }

    pub fn dataset(&self, seed: u64, truth: &ChaosTruth) -> Dataset {
        Dataset {
            kind: "chaos".into(),
            header: (0..self.obs_matrix.len()).map(|i| format!("y{i}")).collect(),
            rows: self.observations.clone(),
            params: serde_json::json!({
                "seed": seed,
                "truth": truth,
                "obs_matrix": self.obs_matrix,
                "transition_var": self.transition_var,
                "obs_var": self.obs_var,
            }),
        }
    }
}

impl StateSpaceModel for ChaosModel {
    fn theta_dim(&self) -> usize {
        4
    }

    fn theta_from_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| -PI + 2.0 * PI * v).collect()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if theta.len() == 4 && theta.iter().all(|t| (-PI..=PI).contains(t)) {
            -4.0 * (2.0 * PI).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn series_len(&self) -> usize {
        self.observations.len()
    }

    fn sample_initial(&self, _theta: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    fn sample_transition(&self, theta: &[f64], _t: usize, prev: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        let mean = pickover_step(theta, prev);
        let sd = self.transition_var.sqrt();
        for (o, m) in out.iter_mut().zip(mean) {
            *o = m + sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    fn log_observation(&self, _theta: &[f64], t: usize, state: &[f64]) -> f64 {
        let y = &self.observations[t];
        let mut sq = 0.0;
        for (row, &yi) in self.obs_matrix.iter().zip(y) {
            let pred = row[0] * state[0] + row[1] * state[1] + row[2] * state[2];
            sq += (yi - pred) * (yi - pred);
        }
        let k = y.len() as f64;
        -0.5 * sq / self.obs_var - 0.5 * k * (self.obs_var.ln() + LN_2PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_from_origin() {
        for theta in [[0.0; 4], [1.0, -2.0, 0.5, 3.0]] {
            assert_eq!(pickover_step(&theta, &[0.0, 0.0, 0.0]), [0.0, -1.0, 0.0]);
        }
    }

    #[test]
    fn step_with_zero_parameters() {
        let x = [0.7, -0.4, 1.3];
        let s = pickover_step(&[0.0; 4], &x);
        assert_eq!(s, [-1.3, -1.0, 0.7f64.sin()]);
    }

    #[test]
    fn step_matches_reference_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let th: Vec<f64> = (0..4).map(|_| rng.random_range(-PI..PI)).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = pickover_step(&th, &x);
            let (a, b, c, d) = (th[0], th[1], th[2], th[3]);
            let (x1, x2, x3) = (x[0], x[1], x[2]);
            assert_eq!(s[0], f64::sin(b * x2) - f64::cos(a * x1) * x3);
            assert_eq!(s[1], f64::sin(d * x1) * x3 - f64::cos(c * x2));
            assert_eq!(s[2], f64::sin(x1));
        }
    }

    #[test]
    fn generation_shapes_and_determinism() {
        let truth = ChaosTruth::default();
        let a = ChaosModel::generate(3, &truth);
        let b = ChaosModel::generate(3, &truth);
        assert_eq!(a.observations.len(), 200);
        assert_eq!(a.obs_matrix.len(), 20);
        assert!(a.observations.iter().all(|y| y.len() == 20));
        for col in 0..3 {
            let s: f64 = a.obs_matrix.iter().map(|r| r[col]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn prior_support() {
        let m = ChaosModel::generate(1, &ChaosTruth { series_len: 5, ..Default::default() });
        assert!(m.log_prior(&[0.0, 3.0, -3.0, 1.0]).is_finite());
        assert_eq!(m.log_prior(&[0.0, 3.2, -3.0, 1.0]), f64::NEG_INFINITY);
    }
}
