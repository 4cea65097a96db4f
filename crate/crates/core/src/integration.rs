//! Known-integrand variant: statistics over the `w·f` products of each run,
//! and the utility that targets the variance of `γ(f)` instead of `Z`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{log_add_exp, log_diff_exp};
use crate::tree::{InferenceTree, NodeStats};

/// Log-space sums over `w f` for the runs of a node.
///
/// Used in two roles: at a node's local estimate it holds raw sums
/// (`Σ (wf)⁺`, `Σ (wf)⁻`, `Σ (wf)²`), and after propagation it holds the
/// `ω`-analog split into positive and negative parts together with the
/// `ζ²/M`-analog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrandStats {
    #[serde(with = "crate::serde_float")]
    pub log_pos: f64,
    #[serde(with = "crate::serde_float")]
    pub log_neg: f64,
    #[serde(with = "crate::serde_float")]
    pub log_sq: f64,
}

impl IntegrandStats {
    pub fn empty() -> Self {
        Self { log_pos: f64::NEG_INFINITY, log_neg: f64::NEG_INFINITY, log_sq: f64::NEG_INFINITY }
    }

    pub fn push_local(&mut self, log_w: f64, f: f64) {
        if log_w == f64::NEG_INFINITY || f == 0.0 {
            return;
        }
        let lwf = log_w + f.abs().ln();
        if f > 0.0 {
            self.log_pos = log_add_exp(self.log_pos, lwf);
        } else {
            self.log_neg = log_add_exp(self.log_neg, lwf);
        }
        self.log_sq = log_add_exp(self.log_sq, 2.0 * lwf);
    }

    /// Combines local sums with propagated child statistics using the same
    /// coefficients as the weight recursion.
    pub fn propagate(
        c: f64,
        n_local: usize,
        local: Option<&IntegrandStats>,
        children: Option<(Option<&IntegrandStats>, Option<&IntegrandStats>)>,
    ) -> Option<IntegrandStats> {
        let has_children = matches!(children, Some((Some(_), _)) | Some((_, Some(_))));
        if local.is_none() && !has_children {
            return None;
        }
        let mut out = IntegrandStats::empty();
        if let Some(l) = local {
            if n_local > 0 && c < 1.0 {
                let coef = (1.0 - c).ln() - (n_local as f64).ln();
                out.log_pos = coef + l.log_pos;
                out.log_neg = coef + l.log_neg;
                out.log_sq = 2.0 * coef + l.log_sq;
            }
        }
        if let Some((a, b)) = children {
            if c > 0.0 {
                let ln_c = c.ln();
                for child in [a, b].into_iter().flatten() {
                    out.log_pos = log_add_exp(out.log_pos, ln_c + child.log_pos);
                    out.log_neg = log_add_exp(out.log_neg, ln_c + child.log_neg);
                    out.log_sq = log_add_exp(out.log_sq, 2.0 * ln_c + child.log_sq);
                }
            }
        }
        Some(out)
    }

    /// The `ω`-analog `Σ k w f / N`, i.e. the node's estimate of `γ_j(f)`.
    pub fn value(&self) -> f64 {
        self.log_pos.exp() - self.log_neg.exp()
    }

    /// `log ŝ²` from propagated statistics at a node with `visits` runs below it.
    pub fn log_s2(&self, visits: u64) -> f64 {
        if visits < 2 {
            return f64::INFINITY;
        }
        let m = visits as f64;
        let log_sq = self.log_sq + m.ln();
        let log_abs_mean = log_diff_exp(self.log_pos.max(self.log_neg), self.log_pos.min(self.log_neg));
        let log_mean = if self.log_pos == self.log_neg { f64::NEG_INFINITY } else { log_abs_mean };
        (m / (m - 1.0)).ln() + log_diff_exp(log_sq, 2.0 * log_mean)
    }
}

/// `ŝ_j` for a node; `+inf` with fewer than two runs, `0` when no integrand
/// values are present.
pub fn s_hat(stats: &NodeStats) -> f64 {
    match &stats.integrand {
        Some(i) => (0.5 * i.log_s2(stats.visits)).exp(),
        None if stats.visits < 2 => f64::INFINITY,
        None => 0.0,
    }
}

/// Self-normalized estimate of `E_π[f]` for the model's known integrand,
/// taken from the propagated `w·f` statistics.
pub fn estimate_integral(tree: &InferenceTree) -> Result<f64> {
    let root = &tree.root().stats;
    if root.log_omega == f64::NEG_INFINITY {
        return Err(crate::error::Error::NoPosteriorMass);
    }
    let num = match &root.integrand {
        Some(i) => (i.log_pos - root.log_omega).exp() - (i.log_neg - root.log_omega).exp(),
        None => 0.0,
    };
    Ok(num)
}
