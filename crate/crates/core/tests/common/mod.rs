#![allow(dead_code)]

use itree::base_infer::{BaseInference, RunResult, WeightedSample};
use itree::models::{LinearGaussianSsm, TargetModel};
use itree::numeric::normal_log_pdf;
use itree::reparam::HyperRect;
use itree::rng::StreamRng;
use itree::tree::{InferenceTree, PropagationParams, RunRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Exact log-likelihood of a linear-Gaussian state-space model at `phi`
/// from the Kalman filter.
pub fn kalman_log_likelihood(model: &LinearGaussianSsm, phi: f64) -> f64 {
    let (q, r) = (model.trans_sd.powi(2), model.obs_sd.powi(2));
    let mut mean = 0.0;
    let mut var = model.init_sd.powi(2);
    let mut ll = 0.0;
    for &y in &model.observations {
        mean *= phi;
        var = phi * phi * var + q;
        let s = var + r;
        ll += normal_log_pdf(y, mean, s.sqrt());
        let k = var / s;
        mean += k * (y - mean);
        var *= 1.0 - k;
    }
    ll
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn record(log_w: f64, z: Vec<f64>, f: Option<f64>) -> RunRecord {
    RunRecord {
        log_w,
        rep_z: z.clone(),
        f_value: f,
        samples: vec![WeightedSample { x: z, log_w, latent: vec![] }],
    }
}

/// A random tree: random split sequence, 1 to 4 runs per node, log-weights
/// in [-5, 5] with occasional zero weights, integrand values in [-1, 2].
pub fn random_tree(rng: &mut ChaCha8Rng, dim: usize, max_splits: usize) -> InferenceTree {
    random_tree_with_f(rng, dim, max_splits, None)
}

/// [`random_tree`] with every integrand value set to `constant_f` when given.
pub fn random_tree_with_f(
    rng: &mut ChaCha8Rng,
    dim: usize,
    max_splits: usize,
    constant_f: Option<f64>,
) -> InferenceTree {
    let params = PropagationParams { lambda: rng.random_range(1.0..2.0), ..Default::default() };
    let mut tree = InferenceTree::new(dim, params);
    let draw_runs = |rng: &mut ChaCha8Rng, rect: &HyperRect| -> Vec<RunRecord> {
        let n = rng.random_range(1..5);
        (0..n)
            .map(|_| {
                let lw = if rng.random::<f64>() < 0.1 { f64::NEG_INFINITY } else { rng.random_range(-5.0..5.0) };
                let f = match constant_f {
                    Some(c) => c,
                    None if rng.random::<f64>() < 0.2 => 0.0,
                    None => rng.random_range(-1.0..2.0),
                };
                record(lw, rect.sample(rng), Some(f))
            })
            .collect()
    };
    let root_runs = draw_runs(rng, &HyperRect::unit(dim));
    tree.add_runs(0, root_runs);
    let n_splits = rng.random_range(0..=max_splits);
    for _ in 0..n_splits {
        let leaves: Vec<usize> = tree.leaves().map(|n| n.id).collect();
        let leaf = leaves[rng.random_range(0..leaves.len())];
        let rect = tree.node(leaf).rect.clone();
        let d = rng.random_range(0..dim);
        let (lo, hi) = rect.split_range(d);
        let (l, r) = rect.split(d, rng.random_range(lo..hi)).unwrap();
        let lr = draw_runs(rng, &l);
        let rr = draw_runs(rng, &r);
        tree.split(leaf, (l, lr), (r, rr)).unwrap();
    }
    // extra runs anywhere, including internal nodes
    for _ in 0..rng.random_range(0..5) {
        let id = rng.random_range(0..tree.nodes().len());
        let rect = tree.node(id).rect.clone();
        let runs = draw_runs(rng, &rect);
        tree.add_runs(id, runs);
    }
    tree
}

/// Per-node statistics recomputed by brute force from flattened weights.
#[derive(Debug, Clone)]
pub struct FlatStats {
    pub visits: f64,
    pub omega: f64,
    pub zeta2: f64,
    pub sigma2: f64,
    pub ess: f64,
    pub s2: f64,
    /// Mean squared `w f` product, the scale of `s2`.
    pub zeta2_f: f64,
}

/// Enumerates every run below `j` with combination weight `w k M_j / N`,
/// where `k` multiplies `c` at each strict ancestor within the subtree and
/// `1 - c` at the run's own node. The child preference `c` is recomputed
/// from run counts and leaf depths, independently of the tree's own stats.
pub fn flattened_stats(tree: &InferenceTree, j: usize) -> FlatStats {
    fn subtree(tree: &InferenceTree, j: usize, out: &mut Vec<usize>) {
        out.push(j);
        if let Some((l, r)) = tree.node(j).children {
            subtree(tree, l, out);
            subtree(tree, r, out);
        }
    }
    fn pref(tree: &InferenceTree, id: usize) -> f64 {
        let node = tree.node(id);
        if node.children.is_none() {
            return 0.0;
        }
        let mut nodes = Vec::new();
        subtree(tree, id, &mut nodes);
        let m: usize = nodes.iter().map(|&n| tree.node(n).local.n()).sum();
        let leaves: Vec<usize> = nodes.iter().copied().filter(|&n| tree.node(n).children.is_none()).collect();
        let mean_depth = leaves.iter().map(|&n| tree.node(n).depth as f64).sum::<f64>() / leaves.len() as f64;
        let n = node.local.n() as f64;
        let scaled = tree.params().lambda.powf(mean_depth - node.depth as f64) * (m as f64 - n);
        if m as f64 - n == 0.0 {
            0.0
        } else {
            scaled / (n + scaled)
        }
    }
    let mut nodes = Vec::new();
    subtree(tree, j, &mut nodes);
    let m: usize = nodes.iter().map(|&n| tree.node(n).local.n()).sum();
    let mut flat = Vec::new();
    let mut flat_f = Vec::new();
    for &n in &nodes {
        let node = tree.node(n);
        if node.local.n() == 0 {
            continue;
        }
        let mut k = 1.0 - pref(tree, n);
        let mut cur = node.parent;
        let mut child = n;
        while child != j {
            let p = cur.unwrap();
            k *= pref(tree, p);
            child = p;
            cur = tree.node(p).parent;
        }
        for run in node.local.runs() {
            let w = run.log_w.exp() * k * m as f64 / node.local.n() as f64;
            flat.push(w);
            flat_f.push(w * run.f_value.unwrap_or(0.0));
        }
    }
    let mf = m as f64;
    let omega = flat.iter().sum::<f64>() / mf;
    let zeta2 = flat.iter().map(|w| w * w).sum::<f64>() / mf;
    let sigma2 = if m < 2 { f64::INFINITY } else { mf / (mf - 1.0) * (zeta2 - omega * omega) };
    let ess = if omega == 0.0 { 0.0 } else { mf * omega * omega / zeta2 };
    let of = flat_f.iter().sum::<f64>() / mf;
    let zf = flat_f.iter().map(|w| w * w).sum::<f64>() / mf;
    let s2 = if m < 2 { f64::INFINITY } else { mf / (mf - 1.0) * (zf - of * of) };
    FlatStats { visits: mf, omega, zeta2, sigma2, ess, s2, zeta2_f: zf }
}

/// Synthetic base inference for allocation experiments: the run weight is
/// drawn from a distribution chosen by which half of the unit interval the
/// region lies in.
pub struct TwoRegionBase {
    /// `(low, high)` of a uniform weight distribution for the left half.
    pub left: (f64, f64),
    /// Mean of an exponential weight distribution for the right half.
    pub right_mean: f64,
}

impl TwoRegionBase {
    pub fn tau(&self, kappa: f64) -> (f64, f64) {
        let (a, b) = self.left;
        let (ml, vl) = ((a + b) / 2.0, (b - a).powi(2) / 12.0);
        let (mr, vr) = (self.right_mean, self.right_mean.powi(2));
        ((ml * ml + (1.0 + kappa) * vl).sqrt(), (mr * mr + (1.0 + kappa) * vr).sqrt())
    }
}

impl BaseInference for TwoRegionBase {
    fn dim(&self) -> usize {
        1
    }

    fn evals_per_run(&self) -> u64 {
        1
    }

    fn run(&self, rect: &HyperRect, rng: &mut StreamRng) -> itree::Result<RunResult> {
        let z = rect.sample(rng);
        let w = if rect.hi()[0] <= 0.5 {
            rng.random_range(self.left.0..self.left.1)
        } else {
            -self.right_mean * (1.0 - rng.random::<f64>()).ln()
        };
        Ok(RunResult {
            samples: vec![WeightedSample { x: z.clone(), log_w: w.ln(), latent: vec![] }],
            log_weight: w.ln(),
            rep_z: z,
            f_value: None,
            evals: 1,
        })
    }
}

/// A mixture of narrow Gaussian bumps on `[0, 1]` with a uniform proposal.
pub struct Bumps {
    pub centers: Vec<f64>,
    pub width: f64,
    pub floor: f64,
}

impl TargetModel for Bumps {
    fn dim(&self) -> usize {
        1
    }

    fn transform(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }

    fn log_weight(&self, x: &[f64]) -> f64 {
        let mut s = self.floor;
        for c in &self.centers {
            s += normal_log_pdf(x[0], *c, self.width).exp() / self.centers.len() as f64;
        }
        s.ln()
    }
}
