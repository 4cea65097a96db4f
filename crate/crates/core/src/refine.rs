//! Refinement of a selected leaf: either more base runs, or a split chosen
//! by an entropy loss over random candidates and confirmed by a t-test.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::base_infer::BaseInference;
use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sum_exp};
use crate::reparam::HyperRect;
use crate::rng::{StreamSeeder, CANDIDATE_SLOT};
use crate::tree::{InferenceTree, Node, NodeId, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Base runs per refinement step, `b`.
    pub runs: usize,
    pub min_runs: usize,
    pub max_ess_ratio: f64,
    pub sig_level: f64,
    pub n_candidates: usize,
    /// Fraction by which the lower-mass child of the chosen split is shrunk.
    pub shrink: f64,
    /// Disables splitting altogether.
    pub never_split: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            runs: 16,
            min_runs: 16,
            max_ess_ratio: 0.5,
            sig_level: 0.05,
            n_candidates: 100,
            shrink: 0.25,
            never_split: false,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0
            || self.n_candidates == 0
            || !(0.0..1.0).contains(&self.shrink)
            || !(0.0..=1.0).contains(&self.sig_level)
        {
            return Err(Error::Config(format!("invalid refinement settings: {self:?}")));
        }
        Ok(())
    }
}

/// `N_j ≥ min_runs` and the local ESS per run is at most `max_ess_ratio`.
pub fn should_split(node: &Node, cfg: &RefineConfig) -> bool {
    let n = node.local.n();
    if cfg.never_split || !node.is_leaf() || n == 0 || n < cfg.min_runs {
        return false;
    }
    node.local.ess() / n as f64 <= cfg.max_ess_ratio
}

/// A hypothetical split with the mass each side would receive from the
/// node's existing runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub dim: usize,
    pub point: f64,
    pub log_mass_left: f64,
    pub log_mass_right: f64,
    pub runs_left: usize,
    pub runs_right: usize,
}

impl SplitCandidate {
    /// Normalized left mass `ω_ℓ / (ω_ℓ + ω_r)`; `None` when both sides are empty.
    pub fn left_fraction(&self) -> Option<f64> {
        let total = log_add_exp(self.log_mass_left, self.log_mass_right);
        if total == f64::NEG_INFINITY {
            None
        } else {
            Some((self.log_mass_left - total).exp())
        }
    }
}

/// Attributes each run's weight to the side of `point` its representative
/// `z` falls on.
pub fn candidate_masses(runs: &[RunRecord], dim: usize, point: f64) -> SplitCandidate {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for r in runs {
        if r.rep_z[dim] < point {
            left.push(r.log_w);
        } else {
            right.push(r.log_w);
        }
    }
    SplitCandidate {
        dim,
        point,
        log_mass_left: log_sum_exp(&left),
        log_mass_right: log_sum_exp(&right),
        runs_left: left.len(),
        runs_right: right.len(),
    }
}

/// `n_cand` random candidates: a uniform dimension, then a uniform point
/// strictly inside the node's interval on it.
pub fn propose_candidates<R: Rng + ?Sized>(
    rect: &HyperRect,
    runs: &[RunRecord],
    n_cand: usize,
    rng: &mut R,
) -> Vec<SplitCandidate> {
    (0..n_cand)
        .map(|_| {
            let dim = rng.random_range(0..rect.dim());
            let (lo, hi) = rect.split_range(dim);
            let point = lo + rng.random::<f64>() * (hi - lo);
            candidate_masses(runs, dim, point.clamp(lo, hi))
        })
        .collect()
}

/// `ω_ℓ log(|B_ℓ|/ω_ℓ) + ω_r log(|B_r|/ω_r)` with `0 log(·/0) = 0`.
pub fn split_loss(mass_left: f64, mass_right: f64, vol_left: f64, vol_right: f64) -> f64 {
    let term = |m: f64, v: f64| if m == 0.0 { 0.0 } else { m * (v / m).ln() };
    term(mass_left, vol_left) + term(mass_right, vol_right)
}

/// Loss of a candidate using normalized masses and volume fractions.
pub fn candidate_loss(rect: &HyperRect, cand: &SplitCandidate) -> Option<f64> {
    let frac_mass = cand.left_fraction()?;
    let (lo, hi) = (rect.lo()[cand.dim], rect.hi()[cand.dim]);
    let frac_vol = (cand.point - lo) / (hi - lo);
    Some(split_loss(frac_mass, 1.0 - frac_mass, frac_vol, 1.0 - frac_vol))
}

/// Moves the split point so the lower-mass child's extent shrinks by
/// `shrink`; on equal masses the right child shrinks.
pub fn shrink_split(rect: &HyperRect, cand: &SplitCandidate, shrink: f64) -> f64 {
    let (lo, hi) = rect.split_range(cand.dim);
    let (a, b) = (rect.lo()[cand.dim], rect.hi()[cand.dim]);
    let p = cand.point;
    let point = if cand.log_mass_left < cand.log_mass_right {
        p - shrink * (p - a)
    } else {
        p + shrink * (b - p)
    };
    point.clamp(lo, hi)
}

/// The lowest-loss candidate among those with runs on both sides.
pub fn best_candidate(rect: &HyperRect, candidates: &[SplitCandidate]) -> Option<SplitCandidate> {
    let mut best: Option<(f64, &SplitCandidate)> = None;
    for c in candidates {
        if c.runs_left == 0 || c.runs_right == 0 {
            continue;
        }
        let Some(loss) = candidate_loss(rect, c) else { continue };
        if best.is_none_or(|(b, _)| loss < b) {
            best = Some((loss, c));
        }
    }
    best.map(|(_, c)| c.clone())
}

/// Two-sided Welch t-test p-value on the finite entries of each sample.
///
/// A side whose weights are all zero while the other has finite weights is
/// treated as a certain difference (`p = 0`); fewer than two finite values on
/// either side otherwise give `p = 1`.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> f64 {
    let fa: Vec<f64> = a.iter().copied().filter(|v| v.is_finite()).collect();
    let fb: Vec<f64> = b.iter().copied().filter(|v| v.is_finite()).collect();
    if (fa.is_empty() && !a.is_empty() && !fb.is_empty()) || (fb.is_empty() && !b.is_empty() && !fa.is_empty()) {
        return 0.0;
    }
    if fa.len() < 2 || fb.len() < 2 {
        return 1.0;
    }
    let moments = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var)
    };
    let (na, ma, va) = moments(&fa);
    let (nb, mb, vb) = moments(&fb);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0),
        Err(_) => 1.0,
    }
}

pub fn accept_split(left_log_w: &[f64], right_log_w: &[f64], sig_level: f64) -> bool {
    welch_p_value(left_log_w, right_log_w) < sig_level
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefineOutcome {
    /// More runs were added to the leaf.
    Extended { runs: usize },
    Split { dim: usize, point: f64, children: (NodeId, NodeId) },
    /// A split was tried and rejected; the children's runs were merged into the leaf.
    Rejected { dim: usize, point: f64 },
}

/// Result of one refinement step.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport {
    pub outcome: RefineOutcome,
    pub evals: u64,
}

/// Refines leaf `id` in place and propagates the change.
pub fn refine(
    tree: &mut InferenceTree,
    id: NodeId,
    base: &dyn BaseInference,
    cfg: &RefineConfig,
    seeder: &StreamSeeder,
    iteration: u64,
) -> Result<RefineReport> {
    let b = cfg.runs;
    let node = tree.node(id);
    let proposal = if should_split(node, cfg) {
        let mut rng = seeder.stream(iteration, CANDIDATE_SLOT);
        let candidates = propose_candidates(&node.rect, node.local.runs(), cfg.n_candidates, &mut rng);
        best_candidate(&node.rect, &candidates).map(|c| (c.dim, shrink_split(&node.rect, &c, cfg.shrink)))
    } else {
        None
    };

    let Some((dim, point)) = proposal else {
        let rect = node.rect.clone();
        let (runs, evals) = batch_runs(base, &rect, seeder, iteration, 0, b)?;
        tree.add_runs(id, runs);
        return Ok(RefineReport { outcome: RefineOutcome::Extended { runs: b }, evals });
    };

    let parent_rect = node.rect.clone();
    let (left_rect, right_rect) = parent_rect.split(dim, point)?;
    let (left_runs, left_evals) = batch_runs(base, &left_rect, seeder, iteration, 0, b)?;
    let (right_runs, right_evals) = batch_runs(base, &right_rect, seeder, iteration, b as u64, b)?;
    let evals = left_evals + right_evals;

    let lw_left: Vec<f64> = left_runs.iter().map(|r| r.log_w).collect();
    let lw_right: Vec<f64> = right_runs.iter().map(|r| r.log_w).collect();
    if accept_split(&lw_left, &lw_right, cfg.sig_level) {
        let children = tree.split(id, (left_rect, left_runs), (right_rect, right_runs))?;
        Ok(RefineReport { outcome: RefineOutcome::Split { dim, point, children }, evals })
    } else {
        // a pair of draws, one per child, estimates the parent's mass as
        // w_ℓ + w_r, so each child run enters the parent with weight 2w
        let factor = 2f64.ln();
        let merged = left_runs.into_iter().chain(right_runs).map(|r| r.rescaled(factor));
        tree.add_runs(id, merged);
        Ok(RefineReport { outcome: RefineOutcome::Rejected { dim, point }, evals })
    }
}

/// Runs `count` base runs on `rect` on stream slots `first_slot..`, in
/// parallel, merged in slot order. Returns the runs and their total evaluations.
pub fn batch_runs(
    base: &dyn BaseInference,
    rect: &HyperRect,
    seeder: &StreamSeeder,
    iteration: u64,
    first_slot: u64,
    count: usize,
) -> Result<(Vec<RunRecord>, u64)> {
    let results = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeder.stream(iteration, first_slot + i);
            base.run(rect, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let evals = results.iter().map(|r| r.evals).sum();
    Ok((results.into_iter().map(RunRecord::from).collect(), evals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::PropagationParams;
    use rand::SeedableRng;

    fn record(z: f64, w: f64) -> RunRecord {
        RunRecord { log_w: w.ln(), rep_z: vec![z], f_value: None, samples: vec![] }
    }

    fn leaf_node(weights: &[f64]) -> Node {
        let mut t = InferenceTree::new(1, PropagationParams::default());
        t.add_runs(0, weights.iter().enumerate().map(|(i, &w)| record(i as f64 / weights.len() as f64, w)));
        t.root().clone()
    }

    #[test]
    fn should_split_examples() {
        let cfg = RefineConfig::default();
        assert!(!should_split(&leaf_node(&[1.0]), &cfg));
        assert!(!should_split(&leaf_node(&[1.0; 32]), &cfg));
        // 32 runs with local ESS 3.2
        let mut w = vec![0.0; 32];
        w[0] = 1.0;
        w[1] = 1.0;
        w[2] = 1.0;
        w[3] = 0.2f64.sqrt();
        let node = leaf_node(&w);
        let ratio = node.local.ess() / 32.0;
        assert!(ratio < 0.5);
        assert!(should_split(&node, &cfg));
    }

    #[test]
    fn split_loss_examples() {
        assert!(split_loss(0.5, 0.5, 0.5, 0.5).abs() < 1e-15);
        assert!((split_loss(1.0, 0.0, 0.5, 0.5) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn split_loss_peaks_at_proportional_mass() {
        // 1-D: mass fraction m, volume fraction v; maximum over v is at v = m
        for &m in &[0.1, 0.3, 0.5, 0.8] {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for i in 1..1000 {
                let v = i as f64 / 1000.0;
                let l = split_loss(m, 1.0 - m, v, 1.0 - v);
                if l > best.0 {
                    best = (l, v);
                }
            }
            assert!((best.1 - m).abs() < 2e-3);
            assert!(best.0.abs() < 1e-9);
        }
    }

    #[test]
    fn shrink_examples() {
        let rect = HyperRect::unit(1);
        let runs = [record(0.3, 1.0), record(0.9, 0.1)];
        let c = candidate_masses(&runs, 0, 0.8);
        assert!((shrink_split(&rect, &c, 0.25) - 0.85).abs() < 1e-15);
        let runs = [record(0.3, 0.1), record(0.9, 1.0)];
        let c = candidate_masses(&runs, 0, 0.8);
        assert!((shrink_split(&rect, &c, 0.25) - 0.6).abs() < 1e-15);
        let runs = [record(0.3, 1.0), record(0.9, 1.0)];
        let c = candidate_masses(&runs, 0, 0.8);
        assert!((shrink_split(&rect, &c, 0.25) - 0.85).abs() < 1e-15);
    }

    #[test]
    fn candidate_masses_match_recount() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let runs: Vec<RunRecord> = (0..50).map(|_| record(rng.random(), rng.random::<f64>() + 0.01)).collect();
        let rect = HyperRect::unit(1);
        for c in propose_candidates(&rect, &runs, 100, &mut rng) {
            assert!(c.point > 0.0 && c.point < 1.0);
            let mut left = 0.0;
            let mut right = 0.0;
            for r in &runs {
                if r.rep_z[0] < c.point {
                    left += r.log_w.exp();
                } else {
                    right += r.log_w.exp();
                }
            }
            assert!((c.log_mass_left.exp() - left).abs() < 1e-12);
            assert!((c.log_mass_right.exp() - right).abs() < 1e-12);
        }
    }

    #[test]
    fn argmin_isolates_point_mass() {
        let rect = HyperRect::unit(1);
        let mut runs: Vec<RunRecord> = (0..40).map(|i| record((i as f64 + 0.5) / 40.0, 1e-8)).collect();
        runs[3] = record(3.5 / 40.0, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let cands = propose_candidates(&rect, &runs, 100, &mut rng);
        let best = best_candidate(&rect, &cands).unwrap();
        let mut exhaustive = cands
            .iter()
            .filter(|c| c.runs_left > 0 && c.runs_right > 0)
            .map(|c| (candidate_loss(&rect, c).unwrap(), c.point))
            .collect::<Vec<_>>();
        exhaustive.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(exhaustive[0].1, best.point);
        assert!(best.point > 3.5 / 40.0 && best.point < 0.2);
    }

    #[test]
    fn welch_examples() {
        assert!(!accept_split(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 0.05));
        let a: Vec<f64> = (0..20).map(|i| [0.0, 0.1, -0.1][i % 3]).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        assert!(accept_split(&a, &b, 0.05));
        // one side all zero weight, other side finite
        assert!(accept_split(&[f64::NEG_INFINITY; 4], &[0.0, 1.0], 0.05));
        // known value: t = -2.0, df = 8 → p ≈ 0.0805
        let p = welch_p_value(&[1.0, 2.0, 3.0, 4.0, 5.0], &[3.0, 4.0, 5.0, 6.0, 7.0]);
        assert!((p - 0.080516).abs() < 1e-5);
    }

    #[test]
    fn welch_calibration() {
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut rejected = 0;
        for _ in 0..1000 {
            let a: Vec<f64> = (0..16).map(|_| n.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..16).map(|_| n.sample(&mut rng)).collect();
            if !accept_split(&a, &b, 0.05) {
                rejected += 1;
            }
        }
        assert!((930..=970).contains(&rejected), "{rejected}");
    }
}
