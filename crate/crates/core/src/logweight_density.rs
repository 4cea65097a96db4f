//! Gaussian density estimation of amalgamated log-weights, and the
//! probabilities behind targeted exploration: how likely a region is to
//! produce a weight above the running threshold if sampled further.

use serde::{Deserialize, Serialize};

use crate::numeric::std_normal_log_cdf;

/// Lower bound on the fitted standard deviation.
pub const SD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogWeightFit {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl LogWeightFit {
    /// `log F(x)` for the fitted Gaussian CDF `F`.
    pub fn log_cdf(&self, x: f64) -> f64 {
        std_normal_log_cdf((x - self.mean) / self.sd)
    }
}

/// Running mean/variance (Welford) over the finite log-weights of a node.
/// `-inf` entries are counted separately and kept out of the fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogWeightAccumulator {
    n_finite: usize,
    n_zero: usize,
    mean: f64,
    m2: f64,
}

impl LogWeightAccumulator {
    pub fn push(&mut self, log_w: f64) {
        if !log_w.is_finite() {
            self.n_zero += 1;
            return;
        }
        self.n_finite += 1;
        let delta = log_w - self.mean;
        self.mean += delta / self.n_finite as f64;
        self.m2 += delta * (log_w - self.mean);
    }

    pub fn n_total(&self) -> usize {
        self.n_finite + self.n_zero
    }

    pub fn n_finite(&self) -> usize {
        self.n_finite
    }

    pub fn fit(&self) -> Option<LogWeightFit> {
        if self.n_finite < 2 {
            return None;
        }
        let sd = (self.m2 / (self.n_finite - 1) as f64).max(0.0).sqrt().max(SD_FLOOR);
        Some(LogWeightFit { mean: self.mean, sd, n: self.n_finite })
    }
}

/// Gaussian fit with Bessel-corrected sd; `None` with fewer than two finite values.
pub fn fit(log_weights: &[f64]) -> Option<LogWeightFit> {
    let mut acc = LogWeightAccumulator::default();
    for &lw in log_weights {
        acc.push(lw);
    }
    acc.fit()
}

/// Probability that the largest of `lookahead` fresh log-weights exceeds
/// `log_threshold`: `1 - F(th)^T`.
pub fn prob_exceed_lookahead(fit: &LogWeightFit, log_threshold: f64, lookahead: u32) -> f64 {
    let log_f = fit.log_cdf(log_threshold);
    (-(lookahead as f64 * log_f).exp_m1()).clamp(0.0, 1.0)
}

/// [`prob_exceed_lookahead`] conditioned on none of `n` existing runs having
/// exceeded the threshold, with the fitted density truncated at
/// `log_threshold + log_gap`.
///
/// The likelihood of the observation given exceedance is `(F(th)/F(tr))^n`.
pub fn prob_exceed_given_none(
    fit: &LogWeightFit,
    log_threshold: f64,
    log_gap: f64,
    n: usize,
    lookahead: u32,
) -> f64 {
    let log_f_th = fit.log_cdf(log_threshold);
    let log_f_tr = fit.log_cdf(log_threshold + log_gap);
    let log_likelihood = if log_f_tr == f64::NEG_INFINITY {
        0.0
    } else {
        (n as f64 * (log_f_th - log_f_tr)).min(0.0)
    };
    posterior_exceed(log_f_th, lookahead, log_likelihood)
}

/// Bayes' rule with prior `1 - F^T` and likelihood `exp(log_likelihood)`
/// against an alternative of likelihood one.
fn posterior_exceed(log_f_th: f64, lookahead: u32, log_likelihood: f64) -> f64 {
    let log_none = lookahead as f64 * log_f_th; // log F^T = log P(no exceedance)
    let prior = (-log_none.exp_m1()).clamp(0.0, 1.0);
    if prior == 0.0 {
        return 0.0;
    }
    let num = prior.ln() + log_likelihood;
    let den = crate::numeric::log_add_exp(num, log_none);
    if den == f64::NEG_INFINITY {
        return prior;
    }
    (num - den).exp().clamp(0.0, 1.0)
}

/// Local exploration term: the exceedance probability scaled by the node's ESS,
/// clipped to `[0, 1]`.
pub fn significant_prob_leaf(posterior: f64, ess: f64) -> f64 {
    if ess <= 0.0 {
        return posterior.clamp(0.0, 1.0);
    }
    (posterior / ess).clamp(0.0, 1.0)
}

/// Combines the local term with the children's terms, treating siblings as
/// independent.
pub fn propagate_ps(child_preference: f64, local_term: f64, children: Option<(f64, f64)>) -> f64 {
    let c = child_preference;
    let child = match children {
        Some((l, r)) => l + r - l * r,
        None => 0.0,
    };
    ((1.0 - c) * local_term + c * child).clamp(0.0, 1.0)
}
