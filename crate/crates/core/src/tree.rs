//! The inference tree: a binary partition of the unit hypercube where every
//! node keeps a local Monte Carlo estimate and a set of statistics propagated
//! up from its children.
//!
//! A node's marginal likelihood estimate mixes its local runs with its
//! children's estimates through the child preference factor `c_j`:
//!
//! ```text
//! ω_j = (1 - c_j) / N_j Σ_n w_j^n + c_j (ω_l + ω_r)
//! ```
//!
//! Equivalently, every run `m` below `j` carries the flattened weight
//! `w_m k_m / N_{j(m)}` with `k_m` the product of `c` and `(1 - c)` factors on
//! its path, and `ω_j` is the sum of those. The squared-weight statistic
//! `ζ²_j / M_j` follows the same recursion with squared coefficients, which
//! yields the single-traversal variance and the effective sample size.
//!
//! All weights are held as logarithms.

use serde::{Deserialize, Serialize};

use crate::base_infer::{RunResult, WeightedSample};
use crate::error::{Error, Result};
use crate::integration::IntegrandStats;
use crate::logweight_density::{self, LogWeightAccumulator};
use crate::numeric::{log_add_exp, log_diff_exp, log_sum_exp};
use crate::reparam::HyperRect;
use crate::traversal::ThresholdTracker;

pub type NodeId = usize;

/// One base-inference run as stored at a node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(with = "crate::serde_float")]
    pub log_w: f64,
    pub rep_z: Vec<f64>,
    pub f_value: Option<f64>,
    pub samples: Vec<WeightedSample>,
}

impl From<RunResult> for RunRecord {
    fn from(r: RunResult) -> Self {
        Self { log_w: r.log_weight, rep_z: r.rep_z, f_value: r.f_value, samples: r.samples }
    }
}

impl RunRecord {
    /// Multiplies the run's weights by `exp(log_factor)`.
    pub fn rescaled(mut self, log_factor: f64) -> Self {
        self.log_w += log_factor;
        for s in &mut self.samples {
            s.log_w += log_factor;
        }
        self
    }
}

/// The runs performed directly at a node, with running sums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalEstimate {
    runs: Vec<RunRecord>,
    #[serde(with = "crate::serde_float")]
    log_sum_w: f64,
    #[serde(with = "crate::serde_float")]
    log_sum_w2: f64,
    log_weights: LogWeightAccumulator,
    integrand: Option<IntegrandStats>,
}

impl Default for LocalEstimate {
    fn default() -> Self {
        Self {
            runs: Vec::new(),
            log_sum_w: f64::NEG_INFINITY,
            log_sum_w2: f64::NEG_INFINITY,
            log_weights: LogWeightAccumulator::default(),
            integrand: None,
        }
    }
}

impl LocalEstimate {
    pub fn push(&mut self, run: RunRecord) {
        self.log_sum_w = log_add_exp(self.log_sum_w, run.log_w);
        self.log_sum_w2 = log_add_exp(self.log_sum_w2, 2.0 * run.log_w);
        self.log_weights.push(run.log_w);
        if let Some(f) = run.f_value {
            self.integrand.get_or_insert_with(IntegrandStats::empty).push_local(run.log_w, f);
        }
        self.runs.push(run);
    }

    pub fn n(&self) -> usize {
        self.runs.len()
    }

    pub fn runs(&self) -> &[RunRecord] {
        &self.runs
    }

    pub fn log_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.runs.iter().map(|r| r.log_w)
    }

    pub fn log_sum_w(&self) -> f64 {
        self.log_sum_w
    }

    pub fn log_sum_w2(&self) -> f64 {
        self.log_sum_w2
    }

    pub fn log_mean_w(&self) -> f64 {
        if self.runs.is_empty() {
            f64::NEG_INFINITY
        } else {
            self.log_sum_w - (self.runs.len() as f64).ln()
        }
    }

    /// `(Σ w)² / Σ w²` over the local runs; zero when every weight is zero.
    pub fn ess(&self) -> f64 {
        if self.log_sum_w == f64::NEG_INFINITY {
            0.0
        } else {
            (2.0 * self.log_sum_w - self.log_sum_w2).exp()
        }
    }

    pub fn accumulator(&self) -> &LogWeightAccumulator {
        &self.log_weights
    }

    pub fn integrand(&self) -> Option<&IntegrandStats> {
        self.integrand.as_ref()
    }
}

/// Statistics propagated from the leaves to the root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeStats {
    /// `M_j`: runs at this node and all descendants.
    pub visits: u64,
    pub child_preference: f64,
    #[serde(with = "crate::serde_float")]
    pub log_omega: f64,
    #[serde(with = "crate::serde_float")]
    pub log_zeta2_over_m: f64,
    /// Targeted-exploration probability `p̂ˢ_j`.
    pub ps: f64,
    pub leaf_count: usize,
    pub leaf_depth_sum: usize,
    pub integrand: Option<IntegrandStats>,
}

impl Default for NodeStats {
    fn default() -> Self {
        Self {
            visits: 0,
            child_preference: 0.0,
            log_omega: f64::NEG_INFINITY,
            log_zeta2_over_m: f64::NEG_INFINITY,
            ps: 0.0,
            leaf_count: 1,
            leaf_depth_sum: 0,
            integrand: None,
        }
    }
}

impl NodeStats {
    /// Mean depth of the leaves below (or at) this node.
    pub fn mean_leaf_depth(&self) -> f64 {
        self.leaf_depth_sum as f64 / self.leaf_count as f64
    }

    pub fn log_zeta2(&self) -> f64 {
        if self.visits == 0 {
            f64::NEG_INFINITY
        } else {
            self.log_zeta2_over_m + (self.visits as f64).ln()
        }
    }

    /// `log σ̂²_j` with Bessel's correction, clamped at zero variance
    /// (`-inf`). Fewer than two runs give `+inf`.
    pub fn log_sigma2(&self) -> f64 {
        if self.visits < 2 {
            return f64::INFINITY;
        }
        let m = self.visits as f64;
        (m / (m - 1.0)).ln() + log_diff_exp(self.log_zeta2(), 2.0 * self.log_omega)
    }

    pub fn sigma2(&self) -> f64 {
        self.log_sigma2().exp()
    }

    /// `M_j ω̂² / ζ̂²`; zero when `ω̂ = 0`.
    pub fn ess(&self) -> f64 {
        if self.log_omega == f64::NEG_INFINITY {
            return 0.0;
        }
        ((self.visits as f64).ln() + 2.0 * self.log_omega - self.log_zeta2()).exp()
    }
}

/// The child preference factor
/// `c_j = λ^Δ (M - N) / (N + λ^Δ (M - N))` with `Δ = E[d_ch] - d_j`.
pub fn child_preference(lambda: f64, depth_gap: f64, visits: u64, local_runs: usize) -> f64 {
    let child_runs = visits.saturating_sub(local_runs as u64) as f64;
    if child_runs == 0.0 {
        return 0.0;
    }
    let scaled = lambda.powf(depth_gap) * child_runs;
    scaled / (local_runs as f64 + scaled)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub rect: HyperRect,
    pub depth: usize,
    pub local: LocalEstimate,
    pub children: Option<(NodeId, NodeId)>,
    pub stats: NodeStats,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn log_volume(&self) -> f64 {
        self.rect.log_volume()
    }
}

/// Parameters the propagation needs besides the tree itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PropagationParams {
    pub lambda: f64,
    pub lookahead: u32,
    pub log_w_gap: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self { lambda: 1.2, lookahead: 1000, log_w_gap: 10.0 }
    }
}

/// A weighted point of the root's normalized empirical measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurePoint {
    pub x: Vec<f64>,
    pub weight: f64,
    #[serde(skip)]
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceTree {
    nodes: Vec<Node>,
    params: PropagationParams,
    threshold: ThresholdTracker,
}

impl InferenceTree {
    pub fn new(dim: usize, params: PropagationParams) -> Self {
        let root = Node {
            id: 0,
            parent: None,
            rect: HyperRect::unit(dim),
            depth: 0,
            local: LocalEstimate::default(),
            children: None,
            stats: NodeStats::default(),
        };
        Self { nodes: vec![root], params, threshold: ThresholdTracker::default() }
    }

    pub const ROOT: NodeId = 0;

    pub fn params(&self) -> &PropagationParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].rect.dim()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn threshold(&self) -> &ThresholdTracker {
        &self.threshold
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn sibling(&self, id: NodeId) -> Option<NodeId> {
        let parent = self.nodes[id].parent?;
        let (l, r) = self.nodes[parent].children?;
        Some(if l == id { r } else { l })
    }

    /// Ancestors of `id`, nearest first, excluding `id` itself.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out
    }

    /// Appends runs to a node's local estimate without propagating.
    /// Returns whether the global weight threshold moved.
    pub fn push_runs(&mut self, id: NodeId, runs: impl IntoIterator<Item = RunRecord>) -> bool {
        let log_vol = self.nodes[id].log_volume();
        let mut moved = false;
        for run in runs {
            moved |= self.threshold.update(run.log_w, log_vol);
            self.nodes[id].local.push(run);
        }
        moved
    }

    /// Appends runs to a node and propagates the change to the root.
    pub fn add_runs(&mut self, id: NodeId, runs: impl IntoIterator<Item = RunRecord>) {
        let moved = self.push_runs(id, runs);
        self.propagate(id, moved);
    }

    /// Turns leaf `id` into an internal node with the given children and
    /// their initialization runs, then propagates.
    pub fn split(
        &mut self,
        id: NodeId,
        left: (HyperRect, Vec<RunRecord>),
        right: (HyperRect, Vec<RunRecord>),
    ) -> Result<(NodeId, NodeId)> {
        if !self.nodes[id].is_leaf() {
            return Err(Error::InvalidRect(format!("node {id} is already split")));
        }
        let depth = self.nodes[id].depth + 1;
        let mut ids = [0; 2];
        let mut moved = false;
        for (slot, (rect, runs)) in [left, right].into_iter().enumerate() {
            let child = self.nodes.len();
            self.nodes.push(Node {
                id: child,
                parent: Some(id),
                rect,
                depth,
                local: LocalEstimate::default(),
                children: None,
                stats: NodeStats::default(),
            });
            moved |= self.push_runs(child, runs);
            ids[slot] = child;
        }
        self.nodes[id].children = Some((ids[0], ids[1]));
        if moved {
            self.recompute_all();
        } else {
            self.recompute_node(ids[0]);
            self.recompute_node(ids[1]);
            self.propagate(id, false);
        }
        Ok((ids[0], ids[1]))
    }

    /// Recomputes `id` and its ancestors; everything when `threshold_moved`.
    pub fn propagate(&mut self, id: NodeId, threshold_moved: bool) {
        if threshold_moved {
            self.recompute_all();
            return;
        }
        self.recompute_node(id);
        for a in self.ancestors(id) {
            self.recompute_node(a);
        }
    }

    /// Bottom-up recomputation of every node. Children always have larger
    /// ids than their parents, so reverse id order is bottom-up.
    pub fn recompute_all(&mut self) {
        for id in (0..self.nodes.len()).rev() {
            self.recompute_node(id);
        }
    }

    fn recompute_node(&mut self, id: NodeId) {
        let node = &self.nodes[id];
        let n_local = node.local.n();
        let children = node.children.map(|(l, r)| (&self.nodes[l].stats, &self.nodes[r].stats));

        let mut stats = NodeStats::default();
        match children {
            None => {
                stats.visits = n_local as u64;
                stats.leaf_count = 1;
                stats.leaf_depth_sum = node.depth;
            }
            Some((l, r)) => {
                stats.visits = n_local as u64 + l.visits + r.visits;
                stats.leaf_count = l.leaf_count + r.leaf_count;
                stats.leaf_depth_sum = l.leaf_depth_sum + r.leaf_depth_sum;
                let gap = stats.mean_leaf_depth() - node.depth as f64;
                stats.child_preference = child_preference(self.params.lambda, gap, stats.visits, n_local);
            }
        }
        let c = stats.child_preference;
        let ln_keep = (1.0 - c).ln();
        let ln_c = c.ln();
        let ln_n = (n_local as f64).ln();

        let local_omega = if n_local == 0 { f64::NEG_INFINITY } else { ln_keep + node.local.log_sum_w() - ln_n };
        let local_zeta =
            if n_local == 0 { f64::NEG_INFINITY } else { 2.0 * ln_keep + node.local.log_sum_w2() - 2.0 * ln_n };
        let (child_omega, child_zeta) = match children {
            Some((l, r)) => (
                ln_c + log_add_exp(l.log_omega, r.log_omega),
                2.0 * ln_c + log_add_exp(l.log_zeta2_over_m, r.log_zeta2_over_m),
            ),
            None => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        stats.log_omega = log_add_exp(sanitize(local_omega), sanitize(child_omega));
        stats.log_zeta2_over_m = log_add_exp(sanitize(local_zeta), sanitize(child_zeta));

        stats.integrand = IntegrandStats::propagate(
            c,
            n_local,
            node.local.integrand(),
            children.map(|(l, r)| (l.integrand.as_ref(), r.integrand.as_ref())),
        );

        let local_term = self.local_exploration_term(node, &stats);
        stats.ps = logweight_density::propagate_ps(c, local_term, children.map(|(l, r)| (l.ps, r.ps)));

        self.nodes[id].stats = stats;
    }

    /// `P(e(T) | none exceeded) / ESS_j` for the node's own runs.
    fn local_exploration_term(&self, node: &Node, stats: &NodeStats) -> f64 {
        let n = node.local.n();
        if n == 0 {
            return 0.0;
        }
        let ess = stats.ess();
        let acc = node.local.accumulator();
        match acc.fit() {
            Some(fit) => {
                let th = self.threshold.node_threshold(node.log_volume());
                let p = logweight_density::prob_exceed_given_none(
                    &fit,
                    th,
                    self.params.log_w_gap,
                    acc.n_total(),
                    self.params.lookahead,
                );
                logweight_density::significant_prob_leaf(p, ess)
            }
            // every run so far returned zero weight
            None if acc.n_finite() == 0 && n >= 2 => 0.0,
            None => {
                if ess > 0.0 {
                    (1.0 / ess).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
        }
    }

    /// Root log marginal likelihood estimate.
    pub fn log_ml(&self) -> f64 {
        self.root().stats.log_omega
    }

    /// Root effective sample size.
    pub fn ess(&self) -> f64 {
        self.root().stats.ess()
    }

    /// Self-normalized expectation of `f` under the root measure, computed
    /// by the recursive combination of node measures.
    pub fn estimate<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<f64> {
        let log_norm = self.log_ml();
        if log_norm == f64::NEG_INFINITY {
            return Err(Error::NoPosteriorMass);
        }
        Ok(self.node_expectation(Self::ROOT, &f, log_norm))
    }

    /// `γ̂_j(f) / exp(log_norm)`.
    fn node_expectation<F: Fn(&[f64]) -> f64>(&self, id: NodeId, f: &F, log_norm: f64) -> f64 {
        let node = &self.nodes[id];
        let c = node.stats.child_preference;
        let mut total = 0.0;
        let n = node.local.n();
        if n > 0 && c < 1.0 {
            let mut local = 0.0;
            for run in node.local.runs() {
                if run.log_w == f64::NEG_INFINITY {
                    continue;
                }
                local += (run.log_w - log_norm).exp() * run_expectation(run, f);
            }
            total += (1.0 - c) / n as f64 * local;
        }
        if let Some((l, r)) = node.children {
            if c > 0.0 {
                total += c * (self.node_expectation(l, f, log_norm) + self.node_expectation(r, f, log_norm));
            }
        }
        total
    }

    /// Log of the flattened per-run factor `k / N` for each node.
    pub fn log_path_factors(&self) -> Vec<f64> {
        let mut factors = vec![f64::NEG_INFINITY; self.nodes.len()];
        // log of the product of c along the path from the root, per node
        let mut log_c_path = vec![0.0; self.nodes.len()];
        for id in 0..self.nodes.len() {
            let node = &self.nodes[id];
            let c = node.stats.child_preference;
            let n = node.local.n();
            if n > 0 {
                factors[id] = log_c_path[id] + (1.0 - c).ln() - (n as f64).ln();
            }
            if let Some((l, r)) = node.children {
                log_c_path[l] = log_c_path[id] + c.ln();
                log_c_path[r] = log_c_path[id] + c.ln();
            }
        }
        factors
    }

    /// The root's normalized weighted sample set. Deterministic order: node id,
    /// then run, then sample.
    pub fn flatten_measure(&self) -> Vec<MeasurePoint> {
        let factors = self.log_path_factors();
        let mut points = Vec::new();
        let mut log_weights = Vec::new();
        for node in &self.nodes {
            let lf = factors[node.id];
            if lf == f64::NEG_INFINITY {
                continue;
            }
            for run in node.local.runs() {
                let sample_lw: Vec<f64> = run.samples.iter().map(|s| s.log_w).collect();
                let run_total = log_sum_exp(&sample_lw);
                for s in &run.samples {
                    let lw = if run_total == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        lf + run.log_w + s.log_w - run_total
                    };
                    points.push(MeasurePoint { x: s.x.clone(), weight: 0.0, latent: s.latent.clone() });
                    log_weights.push(lw);
                }
            }
        }
        let total = log_sum_exp(&log_weights);
        if total == f64::NEG_INFINITY {
            return points;
        }
        for (p, lw) in points.iter_mut().zip(log_weights) {
            p.weight = (lw - total).exp();
        }
        points
    }

    /// Checks the structural invariants; used by tests and after loading a checkpoint.
    pub fn validate(&self) -> Result<()> {
        for node in &self.nodes {
            if let Some((l, r)) = node.children {
                let (a, b) = (&self.nodes[l], &self.nodes[r]);
                if a.parent != Some(node.id) || b.parent != Some(node.id) || l <= node.id || r <= node.id {
                    return Err(Error::Checkpoint(format!("inconsistent links at node {}", node.id)));
                }
                let vol = a.rect.volume() + b.rect.volume();
                if (vol - node.rect.volume()).abs() > 1e-12 * node.rect.volume().max(1e-300) + 1e-300 {
                    return Err(Error::Checkpoint(format!("children of node {} do not tile it", node.id)));
                }
            }
        }
        Ok(())
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Self-normalized expectation of `f` within one run.
fn run_expectation<F: Fn(&[f64]) -> f64>(run: &RunRecord, f: &F) -> f64 {
    let lw: Vec<f64> = run.samples.iter().map(|s| s.log_w).collect();
    let total = log_sum_exp(&lw);
    if total == f64::NEG_INFINITY {
        return 0.0;
    }
    run.samples.iter().map(|s| (s.log_w - total).exp() * f(&s.x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(log_w: f64, z: f64) -> RunRecord {
        RunRecord {
            log_w,
            rep_z: vec![z],
            f_value: None,
            samples: vec![WeightedSample { x: vec![z], log_w, latent: vec![] }],
        }
    }

    fn leaf_with(weights: &[f64]) -> InferenceTree {
        let mut t = InferenceTree::new(1, PropagationParams::default());
        t.add_runs(0, weights.iter().map(|w| run(w.ln(), 0.5)));
        t
    }

    #[test]
    fn child_preference_examples() {
        assert_eq!(child_preference(1.2, 1.0, 10, 10), 0.0);
        assert!((child_preference(1.0, 3.0, 30, 10) - 20.0 / 30.0).abs() < 1e-15);
        assert!((child_preference(1.2, 1.0, 30, 10) - 24.0 / 34.0).abs() < 1e-12);
        assert!((24.0f64 / 34.0 - 0.70588).abs() < 1e-5);
    }

    #[test]
    fn child_preference_tends_to_one() {
        let mut prev = 0.0;
        for m in (11..100_000).step_by(997) {
            let c = child_preference(1.2, 1.5, m, 10);
            assert!(c >= prev);
            prev = c;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn leaf_statistics() {
        let t = leaf_with(&[0.25, 0.25]);
        assert!((t.log_ml().exp() - 0.25).abs() < 1e-15);
        assert_eq!(t.root().stats.child_preference, 0.0);

        let t = leaf_with(&[1.0, 1.0]);
        assert!((t.root().stats.log_zeta2().exp() - 1.0).abs() < 1e-14);

        let t = leaf_with(&[1.0, 3.0]);
        let s = &t.root().stats;
        assert!((s.log_zeta2().exp() - 5.0).abs() < 1e-13);
        assert!((s.sigma2() - 2.0).abs() < 1e-12);
        assert!((s.ess() - 1.6).abs() < 1e-13);

        let t = leaf_with(&[1.0, 1e6]);
        assert!((t.ess() - 1.0).abs() < 1e-3);

        let t = leaf_with(&[0.7; 5]);
        assert!((t.root().stats.log_zeta2().exp() - 0.49).abs() < 1e-14);
        assert!((t.ess() - 5.0).abs() < 1e-12);
        assert_eq!(t.root().stats.sigma2(), 0.0);
    }

    #[test]
    fn few_visits_are_maximally_uncertain() {
        let t = leaf_with(&[2.0]);
        assert_eq!(t.root().stats.log_sigma2(), f64::INFINITY);
    }

    #[test]
    fn all_zero_weights_are_dead() {
        let mut t = InferenceTree::new(1, PropagationParams::default());
        t.add_runs(0, [run(f64::NEG_INFINITY, 0.5), run(f64::NEG_INFINITY, 0.2)]);
        assert_eq!(t.log_ml(), f64::NEG_INFINITY);
        assert_eq!(t.ess(), 0.0);
        assert!(matches!(t.estimate(|_| 1.0), Err(Error::NoPosteriorMass)));
        assert_eq!(t.root().stats.ps, 0.0);
    }

    #[test]
    fn internal_node_combination() {
        // with λ = 1, depth gap 1: c = (M - N)/M. Pick N = 2, M = 4 → c = 0.5
        let params = PropagationParams { lambda: 1.0, ..Default::default() };
        let mut t = InferenceTree::new(1, params);
        t.push_runs(0, [run(1f64.ln(), 0.3), run(1f64.ln(), 0.7)]);
        let (l, r) = HyperRect::unit(1).split(0, 0.5).unwrap();
        t.split(0, (l, vec![run(0.3f64.ln(), 0.2)]), (r, vec![run(0.2f64.ln(), 0.8)])).unwrap();
        let root = &t.root().stats;
        assert!((root.child_preference - 0.5).abs() < 1e-15);
        assert!((t.log_ml().exp() - 0.75).abs() < 1e-14);
        assert_eq!(root.visits, 4);
    }

    #[test]
    fn full_child_preference_is_children_sum() {
        let mut t = InferenceTree::new(1, PropagationParams::default());
        let (l, r) = HyperRect::unit(1).split(0, 0.5).unwrap();
        t.split(0, (l, vec![run(0.3f64.ln(), 0.2)]), (r, vec![run(0.2f64.ln(), 0.8)])).unwrap();
        assert_eq!(t.root().stats.child_preference, 1.0);
        assert!((t.log_ml().exp() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn estimate_and_flatten_agree_on_leaf() {
        let mut t = InferenceTree::new(1, PropagationParams::default());
        t.add_runs(0, [run(1f64.ln(), 0.1), run(3f64.ln(), 0.9)]);
        assert!((t.estimate(|_| 1.0).unwrap() - 1.0).abs() < 1e-15);
        let m = t.flatten_measure();
        assert!((m[0].weight - 0.25).abs() < 1e-15 && (m[1].weight - 0.75).abs() < 1e-15);
        let e = t.estimate(|x| x[0]).unwrap();
        assert!((e - (0.25 * 0.1 + 0.75 * 0.9)).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut t = InferenceTree::new(1, PropagationParams::default());
        t.push_runs(0, [run(1f64.ln(), 0.3), run(f64::NEG_INFINITY, 0.7)]);
        let (l, r) = HyperRect::unit(1).split(0, 0.5).unwrap();
        t.split(0, (l, vec![run(0.3f64.ln(), 0.2)]), (r, vec![run(0.2f64.ln(), 0.8)])).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: InferenceTree = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back.log_ml(), t.log_ml());
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
