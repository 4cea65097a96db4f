use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, TargetModel};
use crate::numeric::{log_sum_exp, std_normal_inv_cdf, LN_2PI};
use crate::rng::StreamSeeder;

/// Mixture of `k` isotropic Gaussians in `d` dimensions with equal weights and
/// unknown means. Assignments are summed out, leaving `k * d` parameters
/// (component means, component-major). The proposal is the prior
/// `μ_k ~ N(0, σ_μ² I)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub d: usize,
    /// Prior standard deviation of each mean coordinate.
    pub prior_sd: f64,
    /// Observation noise standard deviation.
    pub noise_sd: f64,
    pub data: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmData {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub true_means: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn new(k: usize, d: usize, prior_sd: f64, noise_sd: f64, data: Vec<Vec<f64>>) -> Self {
        assert!(k > 0 && d > 0 && prior_sd > 0.0 && noise_sd > 0.0);
        assert!(data.iter().all(|y| y.len() == d), "data dimension mismatch");
        Self { k, d, prior_sd, noise_sd, data }
    }

    /// Draws means from the prior and `n` points from the generative model.
    pub fn generate(seed: u64, n: usize, k: usize, d: usize, prior_sd: f64, noise_sd: f64) -> GmmData {
        let mut rng = StreamSeeder::new(seed).stream(0, 0);
        let true_means: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| prior_sd * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        Self::generate_with_means(&mut rng, n, &true_means, noise_sd)
    }

    /// Draws `n` points around fixed component means.
    pub fn generate_with_means(
        rng: &mut impl Rng,
        n: usize,
        means: &[Vec<f64>],
        noise_sd: f64,
    ) -> GmmData {
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(0..means.len());
            labels.push(c);
            points.push(
                means[c]
                    .iter()
                    .map(|m| m + noise_sd * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
        }
        GmmData { points, labels, true_means: means.to_vec() }
    }

    fn component<'a>(&self, mu: &'a [f64], j: usize) -> &'a [f64] {
        &mu[j * self.d..(j + 1) * self.d]
    }

    fn iso_log_pdf(y: &[f64], mean: &[f64], sd: f64) -> f64 {
        let sq: f64 = y.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        let d = y.len() as f64;
        -0.5 * sq / (sd * sd) - d * sd.ln() - 0.5 * d * LN_2PI
    }

    pub fn log_prior(&self, mu: &[f64]) -> f64 {
        let zero = vec![0.0; self.d];
        (0..self.k).map(|j| Self::iso_log_pdf(self.component(mu, j), &zero, self.prior_sd)).sum()
    }

    /// `Σ_n log (1/K) Σ_k N(y_n; μ_k, σ_y² I)`.
    pub fn log_likelihood(&self, mu: &[f64]) -> f64 {
        let ln_k = (self.k as f64).ln();
        let mut terms = vec![0.0; self.k];
        self.data
            .iter()
            .map(|y| {
                for (j, t) in terms.iter_mut().enumerate() {
                    *t = Self::iso_log_pdf(y, self.component(mu, j), self.noise_sd);
                }
                log_sum_exp(&terms) - ln_k
            })
            .sum()
    }

    /// Unnormalized log posterior `log p(μ) + log p(y | μ)`.
    pub fn log_gamma(&self, mu: &[f64]) -> f64 {
        self.log_prior(mu) + self.log_likelihood(mu)
    }

    pub fn dataset(&self, seed: u64) -> Dataset {
        Dataset {
            kind: "gmm".into(),
            header: (0..self.d).map(|i| format!("y{i}")).collect(),
            rows: self.data.clone(),
            params: serde_json::json!({
                "seed": seed,
                "k": self.k,
                "d": self.d,
                "n": self.data.len(),
                "prior_sd": self.prior_sd,
                "noise_sd": self.noise_sd,
            }),
        }
    }
}

impl TargetModel for GmmModel {
    fn dim(&self) -> usize {
        self.k * self.d
    }

    fn transform(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| self.prior_sd * std_normal_inv_cdf(v)).collect()
    }

    fn log_weight(&self, x: &[f64]) -> f64 {
        self.log_likelihood(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_log_pdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_single_component_closed_form() {
        let y = vec![0.3, -1.2];
        let m = GmmModel::new(1, 2, 1.0, 0.2f64.sqrt(), vec![y.clone()]);
        let mu = vec![0.0, 0.0];
        let want = normal_log_pdf(0.0, 0.0, 1.0) * 2.0
            + normal_log_pdf(0.3, 0.0, 0.2f64.sqrt())
            + normal_log_pdf(-1.2, 0.0, 0.2f64.sqrt());
        assert!((m.log_gamma(&mu) - want).abs() < 1e-12);
        // at the component mean
        let want_at = normal_log_pdf(0.3, 0.0, 1.0)
            + normal_log_pdf(-1.2, 0.0, 1.0)
            + 2.0 * normal_log_pdf(0.0, 0.0, 0.2f64.sqrt());
        assert!((m.log_gamma(&y) - want_at).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_double_loop() {
        let data = GmmModel::generate(11, 30, 3, 2, 1.0, 0.2f64.sqrt());
        let m = GmmModel::new(3, 2, 1.0, 0.2f64.sqrt(), data.points.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mu: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut naive = 0.0;
            for j in 0..3 {
                for t in 0..2 {
                    naive += normal_log_pdf(mu[j * 2 + t], 0.0, 1.0);
                }
            }
            for y in &data.points {
                let mut p = 0.0;
                for j in 0..3 {
                    let mut lp = 0.0;
                    for t in 0..2 {
                        lp += normal_log_pdf(y[t], mu[j * 2 + t], 0.2f64.sqrt());
                    }
                    p += lp.exp() / 3.0;
                }
                naive += p.ln();
            }
            assert!((m.log_gamma(&mu) - naive).abs() < 1e-10 * naive.abs().max(1.0));
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn invariant_under_all_relabelings() {
        let data = GmmModel::generate(5, 40, 4, 2, 1.0, 0.2f64.sqrt());
        let m = GmmModel::new(4, 2, 1.0, 0.2f64.sqrt(), data.points);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let base = m.log_gamma(&mu);
        let perms = permutations(4);
        assert_eq!(perms.len(), 24);
        for p in perms {
            let permuted: Vec<f64> = p.iter().flat_map(|&j| mu[j * 2..j * 2 + 2].to_vec()).collect();
            assert!((m.log_gamma(&permuted) - base).abs() < 1e-9);
        }
    }

    #[test]
    fn generation_defaults_and_determinism() {
        let a = GmmModel::generate(42, 200, 4, 2, 1.0, 0.2f64.sqrt());
        let b = GmmModel::generate(42, 200, 4, 2, 1.0, 0.2f64.sqrt());
        assert_eq!(a.points.len(), 200);
        assert!(a.points.iter().all(|p| p.len() == 2));
        assert_eq!(a.true_means.len(), 4);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
