use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{Dataset, TargetModel};
use crate::error::{Error, Result};
use crate::numeric::std_normal_inv_cdf;
use crate::rng::StreamSeeder;

/// Undirected graph whose edges carry the model parameters as weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Graph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub source: usize,
    pub sink: usize,
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Graph {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>, source: usize, sink: usize) -> Result<Self> {
        if source >= n_nodes || sink >= n_nodes || edges.iter().any(|&(u, v)| u >= n_nodes || v >= n_nodes) {
            return Err(Error::Config("graph references a node out of range".into()));
        }
        let g = Self { n_nodes, edges, source, sink };
        if !g.shortest_path(&vec![1.0; g.edges.len()]).is_finite() {
            return Err(Error::Config("sink is not reachable from source".into()));
        }
        Ok(g)
    }

    /// One edge from source to sink.
    pub fn single_edge() -> Self {
        Self { n_nodes: 2, edges: vec![(0, 1)], source: 0, sink: 1 }
    }

    /// Source and sink joined by `n_chains` disjoint chains of `chain_len` edges.
    pub fn parallel_chains(n_chains: usize, chain_len: usize) -> Self {
        assert!(n_chains > 0 && chain_len > 0);
        let source = 0;
        let sink = 1;
        let mut n_nodes = 2;
        let mut edges = Vec::new();
        for _ in 0..n_chains {
            let mut prev = source;
            for step in 0..chain_len {
                let next = if step + 1 == chain_len {
                    sink
                } else {
                    n_nodes += 1;
                    n_nodes - 1
                };
                edges.push((prev, next));
                prev = next;
            }
        }
        Self { n_nodes, edges, source, sink }
    }

    /// Dijkstra from source to sink; negative weights are clamped at zero.
    pub fn shortest_path(&self, weights: &[f64]) -> f64 {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let w = weights[e].max(0.0);
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
        let mut dist = vec![f64::INFINITY; self.n_nodes];
        let mut heap = BinaryHeap::new();
        dist[self.source] = 0.0;
        heap.push(Frontier { dist: 0.0, node: self.source });
        while let Some(Frontier { dist: d, node }) = heap.pop() {
            if node == self.sink {
                return d;
            }
            if d > dist[node] {
                continue;
            }
            for &(next, w) in &adj[node] {
                let nd = d + w;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(Frontier { dist: nd, node: next });
                }
            }
        }
        dist[self.sink]
    }
}

/// Edge weights with an independent Gaussian prior and Student-t observations.
/// The known integrand is the indicator that the shortest source–sink path
/// exceeds `threshold`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkModel {
    pub prior_mean: Vec<f64>,
    pub prior_sd: f64,
    pub obs_scale: f64,
    pub dof: f64,
    pub observations: Vec<f64>,
    pub graph: Graph,
    pub threshold: f64,
}

impl NetworkModel {
    pub fn new(
        prior_mean: Vec<f64>,
        prior_sd: f64,
        obs_scale: f64,
        dof: f64,
        observations: Vec<f64>,
        graph: Graph,
        threshold: f64,
    ) -> Result<Self> {
        if prior_mean.len() != graph.edges.len() || observations.len() != graph.edges.len() {
            return Err(Error::Config("one prior mean and one observation per edge required".into()));
        }
        if prior_sd <= 0.0 || obs_scale <= 0.0 || dof <= 0.0 {
            return Err(Error::Config("network scales must be positive".into()));
        }
        let graph = Graph::new(graph.n_nodes, graph.edges, graph.source, graph.sink)?;
        Ok(Self { prior_mean, prior_sd, obs_scale, dof, observations, graph, threshold })
    }

    /// Draws true edge weights from the prior and noisy observations of them.
    pub fn generate(seed: u64, graph: Graph, mean: f64, prior_sd: f64, obs_scale: f64, dof: f64, threshold: f64) -> Result<Self> {
        let mut rng = StreamSeeder::new(seed).stream(0, 0);
        let t = StudentT::new(dof).map_err(|e| Error::Config(e.to_string()))?;
        let n = graph.edges.len();
        let obs = (0..n)
            .map(|_| {
                let x = mean + prior_sd * rng.sample::<f64, _>(StandardNormal);
                x + obs_scale * t.sample(&mut rng)
            })
            .collect();
        Self::new(vec![mean; n], prior_sd, obs_scale, dof, obs, graph, threshold)
    }

    pub fn shortest_path_exceeds(&self, x: &[f64]) -> bool {
        self.graph.shortest_path(x) > self.threshold
    }

    fn student_t_log_pdf(&self, u: f64) -> f64 {
        let v = self.dof;
        ln_gamma(0.5 * (v + 1.0)) - ln_gamma(0.5 * v) - 0.5 * (v * std::f64::consts::PI).ln()
            - 0.5 * (v + 1.0) * (u * u / v).ln_1p()
    }

    pub fn dataset(&self, seed: u64) -> Dataset {
        Dataset {
            kind: "network".into(),
            header: vec!["y".into()],
            rows: self.observations.iter().map(|&y| vec![y]).collect(),
            params: serde_json::json!({
                "seed": seed,
                "prior_mean": self.prior_mean,
                "prior_sd": self.prior_sd,
                "obs_scale": self.obs_scale,
                "dof": self.dof,
                "threshold": self.threshold,
                "graph": self.graph,
                "graph_is_assumed_default": true,
            }),
        }
    }
}

impl TargetModel for NetworkModel {
    fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    fn transform(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.prior_mean).map(|(&v, m)| m + self.prior_sd * std_normal_inv_cdf(v)).collect()
    }

    fn log_weight(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.observations)
            .map(|(xi, yi)| self.student_t_log_pdf((yi - xi) / self.obs_scale) - self.obs_scale.ln())
            .sum()
    }

    fn integrand(&self, x: &[f64]) -> Option<f64> {
        Some(if self.shortest_path_exceeds(x) { 1.0 } else { 0.0 })
    }
}
