//! Leaf selection: starting at the root, repeatedly move to the child with
//! the highest utility
//!
//! ```text
//! u_j = 1/M_j [ (1-δ) (τ_j/τ_pa)^(1-α) + δ p_j/(p_j + p_si) + β (|B_j|/|B_pa|) log M_pa / √M_j ]
//! ```
//!
//! where `τ_j = sqrt(ω_j² + (1+κ) σ_j²)` is the exploitation target and `p`
//! the targeted-exploration probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integration::s_hat;
use crate::numeric::log_add_exp;
use crate::rng::StreamRng;
use crate::tree::{InferenceTree, NodeId, NodeStats};

/// An annealing schedule `ρ ∈ [0,1] → [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { value: f64 },
    /// `scale · (1 + tanh(rate · (center - ρ)))`
    Tanh { scale: f64, rate: f64, center: f64 },
}

impl Schedule {
    pub fn at(&self, rho: f64) -> f64 {
        match *self {
            Schedule::Constant { value } => value,
            Schedule::Tanh { scale, rate, center } => scale * (1.0 + (rate * (center - rho)).tanh()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraversalParams {
    pub kappa: f64,
    pub beta: f64,
    pub lambda: f64,
    pub delta: Schedule,
    pub alpha: Schedule,
    pub lookahead: u32,
    pub log_w_gap: f64,
    /// Fraction of the run after which the optimism term is switched off.
    pub beta_cutoff: f64,
}

impl Default for TraversalParams {
    fn default() -> Self {
        let (delta, alpha) = gmm_schedules();
        Self { kappa: 1.0, beta: 0.1, lambda: 1.2, delta, alpha, lookahead: 1000, log_w_gap: 10.0, beta_cutoff: 0.75 }
    }
}

impl TraversalParams {
    pub fn with_schedules(mut self, (delta, alpha): (Schedule, Schedule)) -> Self {
        self.delta = delta;
        self.alpha = alpha;
        self
    }

    pub fn beta_at(&self, rho: f64) -> f64 {
        if rho >= self.beta_cutoff {
            0.0
        } else {
            self.beta
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa >= 0.0
            && self.kappa.is_finite()
            && self.beta >= 0.0
            && self.beta.is_finite()
            && self.lambda >= 1.0
            && self.lookahead >= 1
            && (0.0..=1.0).contains(&self.beta_cutoff);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid traversal parameters: {self:?}")))
        }
    }
}

fn gmm_schedules() -> (Schedule, Schedule) {
    (
        Schedule::Tanh { scale: 0.5, rate: 20.0, center: 0.9 },
        Schedule::Tanh { scale: 0.625, rate: 25.0, center: 0.95 },
    )
}

fn chaos_schedules() -> (Schedule, Schedule) {
    (
        Schedule::Tanh { scale: 0.5, rate: 4.0, center: 0.7 },
        Schedule::Tanh { scale: 0.625, rate: 10.0, center: 0.8 },
    )
}

/// The `(δ, α)` annealing schedules for a named experiment.
pub fn default_schedules(experiment: &str) -> Result<(Schedule, Schedule)> {
    match experiment {
        "gmm" | "conjugate" | "network" => Ok(gmm_schedules()),
        "chaos" | "linear_gaussian" => Ok(chaos_schedules()),
        other => Err(Error::Config(format!("unknown experiment '{other}'"))),
    }
}

/// Tracks the largest volume-free log-weight seen anywhere in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTracker {
    #[serde(with = "crate::serde_float")]
    reference: f64,
}

impl Default for ThresholdTracker {
    fn default() -> Self {
        Self { reference: f64::NEG_INFINITY }
    }
}

impl ThresholdTracker {
    /// Records a run's amalgamated weight from a node of log-volume
    /// `log_volume`; returns whether the reference moved.
    pub fn update(&mut self, log_w: f64, log_volume: f64) -> bool {
        let v = log_w - log_volume;
        if v > self.reference {
            self.reference = v;
            true
        } else {
            false
        }
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn node_threshold(&self, log_volume: f64) -> f64 {
        self.reference + log_volume
    }
}

/// `log τ̂ = ½ log(ω̂² + (1+κ) σ̂²)`.
pub fn log_exploitation_target(stats: &NodeStats, kappa: f64) -> f64 {
    0.5 * log_add_exp(2.0 * stats.log_omega, (1.0 + kappa).ln() + stats.log_sigma2())
}

/// Which quantity the traversal exploits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalMode {
    #[default]
    Inference,
    Integration,
}

/// `(a/b)^e` for nonnegative, possibly infinite `a` and `b`. An uninformative
/// parent (`b` zero or infinite) gives 1, a dead child gives 0.
fn ratio_term(a: f64, b: f64, exponent: f64) -> f64 {
    if a == f64::INFINITY {
        return if b == f64::INFINITY { 1.0 } else { f64::INFINITY };
    }
    if b == 0.0 || b == f64::INFINITY {
        return 1.0;
    }
    if a == 0.0 {
        return 0.0;
    }
    (a / b).powf(exponent)
}

fn optimism(beta: f64, child: &NodeStats, parent: &NodeStats, volume_ratio: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    beta * volume_ratio * (parent.visits.max(1) as f64).ln() / (child.visits as f64).sqrt()
}

fn scaled(coef: f64, term: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * term
    }
}

/// The inference utility of `child` given its `parent` and `sibling`.
pub fn utility(
    child: &NodeStats,
    parent: &NodeStats,
    sibling: &NodeStats,
    volume_ratio: f64,
    params: &TraversalParams,
    rho: f64,
) -> f64 {
    if child.visits == 0 {
        return f64::INFINITY;
    }
    let delta = params.delta.at(rho);
    let alpha = params.alpha.at(rho);
    let tau_c = log_exploitation_target(child, params.kappa).exp();
    let tau_p = log_exploitation_target(parent, params.kappa).exp();
    let exploit = scaled(1.0 - delta, ratio_term(tau_c, tau_p, 1.0 - alpha));
    let denom = child.ps + sibling.ps;
    let explore = if denom > 0.0 { scaled(delta, child.ps / denom) } else { 0.0 };
    let boost = optimism(params.beta_at(rho), child, parent, volume_ratio);
    (exploit + explore + boost) / child.visits as f64
}

/// The integration utility: `1/M_j [ (ŝ_j/ŝ_pa)^(1-α) + optimism ]`.
pub fn utility_integration(
    child: &NodeStats,
    parent: &NodeStats,
    volume_ratio: f64,
    params: &TraversalParams,
    rho: f64,
) -> f64 {
    if child.visits == 0 {
        return f64::INFINITY;
    }
    let alpha = params.alpha.at(rho);
    let exploit = ratio_term(s_hat(child), s_hat(parent), 1.0 - alpha);
    let boost = optimism(params.beta_at(rho), child, parent, volume_ratio);
    (exploit + boost) / child.visits as f64
}

/// Descends from the root choosing the highest-utility child at each level;
/// ties are broken uniformly at random. Returns the path, root first.
pub fn select_leaf(
    tree: &InferenceTree,
    params: &TraversalParams,
    mode: TraversalMode,
    rho: f64,
    rng: &mut StreamRng,
) -> Vec<NodeId> {
    let mut path = vec![InferenceTree::ROOT];
    let mut cur = InferenceTree::ROOT;
    while let Some((l, r)) = tree.node(cur).children {
        let parent = tree.node(cur);
        let (ln, rn) = (tree.node(l), tree.node(r));
        let vol_l = (ln.log_volume() - parent.log_volume()).exp();
        let vol_r = (rn.log_volume() - parent.log_volume()).exp();
        let (ul, ur) = match mode {
            TraversalMode::Inference => (
                utility(&ln.stats, &parent.stats, &rn.stats, vol_l, params, rho),
                utility(&rn.stats, &parent.stats, &ln.stats, vol_r, params, rho),
            ),
            TraversalMode::Integration => (
                utility_integration(&ln.stats, &parent.stats, vol_l, params, rho),
                utility_integration(&rn.stats, &parent.stats, vol_r, params, rho),
            ),
        };
        cur = if ul > ur || (ul == ur && rng.random_bool(0.5)) || ur.is_nan() { l } else { r };
        path.push(cur);
    }
    path
}
