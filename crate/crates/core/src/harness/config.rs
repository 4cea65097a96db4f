use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base_infer::{BaseInference, ImportanceSampler, SmcSampler};
use crate::baselines::{naive_it_preset, PMMH_STEP_SD};
use crate::error::{Error, Result};
use crate::models::{ChaosModel, ChaosTruth, ConjugateGaussian, Dataset, GmmModel, Graph, LinearGaussianSsm, NetworkModel};
use crate::refine::RefineConfig;
use crate::trainer::TrainerSettings;
use crate::traversal::{default_schedules, Schedule, TraversalMode, TraversalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Gmm,
    Chaos,
    Network,
    Conjugate,
    LinearGaussian,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Gmm => "gmm",
            Experiment::Chaos => "chaos",
            Experiment::Network => "network",
            Experiment::Conjugate => "conjugate",
            Experiment::LinearGaussian => "linear_gaussian",
        }
    }

    /// Whether the model is a state-space model driven by a particle filter.
    pub fn is_state_space(&self) -> bool {
        matches!(self, Experiment::Chaos | Experiment::LinearGaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    It,
    NaiveIt,
    Is,
    Pmmh,
    Smc,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::It => "it",
            Algorithm::NaiveIt => "naive_it",
            Algorithm::Is => "is",
            Algorithm::Pmmh => "pmmh",
            Algorithm::Smc => "smc",
        }
    }
}

/// Model parameters. Unset fields take per-experiment defaults when the
/// configuration is resolved.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Seed of the synthetic dataset; defaults to the run seed.
    pub data_seed: Option<u64>,
    pub n_points: Option<usize>,
    pub components: Option<usize>,
    pub dim: Option<usize>,
    pub prior_mean: Option<f64>,
    pub prior_sd: Option<f64>,
    pub noise_sd: Option<f64>,
    pub series_len: Option<usize>,
    /// Length of the series the chaos data are simulated with before truncation.
    pub generated_len: Option<usize>,
    pub n_obs: Option<usize>,
    pub truth: Option<[f64; 4]>,
    pub dirichlet_concentration: Option<f64>,
    pub phi: Option<f64>,
    pub init_sd: Option<f64>,
    pub trans_sd: Option<f64>,
    pub obs_sd: Option<f64>,
    pub dof: Option<f64>,
    pub threshold: Option<f64>,
    /// Network topology: `parallel_chains` or `single_edge`.
    pub graph: Option<String>,
    pub chains: Option<usize>,
    pub chain_len: Option<usize>,
    /// Explicit observations, overriding generation (conjugate and network models).
    pub data: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraversalOverrides {
    pub kappa: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub delta: Option<Schedule>,
    pub alpha: Option<Schedule>,
    pub lookahead: Option<u32>,
    pub log_w_gap: Option<f64>,
    pub beta_cutoff: Option<f64>,
    pub mode: Option<TraversalMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineOverrides {
    pub min_runs: Option<usize>,
    pub max_ess_ratio: Option<f64>,
    pub sig_level: Option<f64>,
    pub n_candidates: Option<usize>,
    pub shrink: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    /// Base runs per refinement.
    pub runs: Option<usize>,
    /// Importance samples per run.
    pub batch_size: Option<usize>,
    /// Particles per SMC sweep.
    pub particles: Option<usize>,
    /// PMMH random-walk standard deviation.
    pub step_sd: Option<f64>,
}

/// A run configuration as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub algorithm: Algorithm,
    /// Label used by `compare`; defaults to the algorithm name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Total target-density evaluations.
    pub budget: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Write a trace row every this many iterations.
    #[serde(default = "one")]
    pub trace_every: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub traversal: TraversalOverrides,
    #[serde(default)]
    pub refine: RefineOverrides,
    #[serde(default)]
    pub batch: BatchConfig,
}

fn one() -> u64 {
    1
}

impl RunConfig {
    pub fn new(experiment: Experiment, algorithm: Algorithm, budget: u64, seed: u64) -> Self {
        Self {
            experiment,
            algorithm,
            name: None,
            seed,
            budget,
            out: None,
            trace_every: 1,
            model: ModelConfig::default(),
            traversal: TraversalOverrides::default(),
            refine: RefineOverrides::default(),
            batch: BatchConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.algorithm.name().to_string())
    }

    /// Fills every unset option with its default and checks consistency.
    pub fn resolve(&self) -> Result<RunConfig> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        if self.trace_every == 0 {
            return Err(Error::Config("trace_every must be positive".into()));
        }
        let ssm = self.experiment.is_state_space();
        if matches!(self.algorithm, Algorithm::Pmmh | Algorithm::Smc) && !ssm {
            return Err(Error::Config(format!("algorithm '{}' needs a state-space experiment", self.algorithm.name())));
        }
        let mut c = self.clone();
        let m = &mut c.model;
        m.data_seed.get_or_insert(self.seed);
        match self.experiment {
            Experiment::Gmm => {
                m.n_points.get_or_insert(200);
                m.components.get_or_insert(4);
                m.dim.get_or_insert(2);
                m.prior_sd.get_or_insert(1.0);
                m.noise_sd.get_or_insert(0.2f64.sqrt());
            }
            Experiment::Chaos => {
                let truth = ChaosTruth::default();
                m.series_len.get_or_insert(50);
                m.generated_len.get_or_insert(truth.series_len);
                m.n_obs.get_or_insert(truth.n_obs);
                m.truth.get_or_insert(truth.theta);
                m.dirichlet_concentration.get_or_insert(truth.dirichlet_concentration);
            }
            Experiment::Network => {
                m.graph.get_or_insert_with(|| "parallel_chains".into());
                m.chains.get_or_insert(2);
                m.chain_len.get_or_insert(5);
                m.prior_mean.get_or_insert(3.0);
                m.prior_sd.get_or_insert(1.0);
                m.noise_sd.get_or_insert(0.1);
                m.dof.get_or_insert(5.0);
                m.threshold.get_or_insert(3.8);
            }
            Experiment::Conjugate => {
                m.prior_mean.get_or_insert(0.0);
                m.prior_sd.get_or_insert(1.0);
                m.noise_sd.get_or_insert(1.0);
                m.n_points.get_or_insert(10);
            }
            Experiment::LinearGaussian => {
                m.series_len.get_or_insert(20);
                m.phi.get_or_insert(0.7);
                m.init_sd.get_or_insert(1.0);
                m.trans_sd.get_or_insert(1.0);
                m.obs_sd.get_or_insert(0.5);
            }
        }

        let base = match self.algorithm {
            Algorithm::NaiveIt => naive_it_preset(),
            _ => TraversalParams::default(),
        };
        let (delta, alpha) = match self.algorithm {
            Algorithm::NaiveIt => (base.delta, base.alpha),
            _ => default_schedules(self.experiment.name())?,
        };
        let t = &mut c.traversal;
        t.kappa.get_or_insert(base.kappa);
        t.beta.get_or_insert(base.beta);
        t.lambda.get_or_insert(base.lambda);
        t.delta.get_or_insert(delta);
        t.alpha.get_or_insert(alpha);
        t.lookahead.get_or_insert(base.lookahead);
        t.log_w_gap.get_or_insert(base.log_w_gap);
        t.beta_cutoff.get_or_insert(base.beta_cutoff);
        t.mode.get_or_insert(if self.experiment == Experiment::Network {
            TraversalMode::Integration
        } else {
            TraversalMode::Inference
        });

        let rd = RefineConfig::default();
        let r = &mut c.refine;
        r.min_runs.get_or_insert(rd.min_runs);
        r.max_ess_ratio.get_or_insert(rd.max_ess_ratio);
        r.sig_level.get_or_insert(rd.sig_level);
        r.n_candidates.get_or_insert(rd.n_candidates);
        r.shrink.get_or_insert(rd.shrink);

        let b = &mut c.batch;
        if ssm {
            b.runs.get_or_insert(8);
            b.particles.get_or_insert(500);
            b.step_sd.get_or_insert(PMMH_STEP_SD);
        } else {
            b.runs.get_or_insert(16);
            b.batch_size.get_or_insert(100);
        }
        c.traversal_params().validate()?;
        c.refine_config().validate()?;
        Ok(c)
    }

    fn require<T: Copy>(v: Option<T>, what: &str) -> T {
        v.unwrap_or_else(|| panic!("configuration not resolved: {what}"))
    }

    /// Traversal parameters of a resolved configuration.
    pub fn traversal_params(&self) -> TraversalParams {
        let t = &self.traversal;
        TraversalParams {
            kappa: Self::require(t.kappa, "kappa"),
            beta: Self::require(t.beta, "beta"),
            lambda: Self::require(t.lambda, "lambda"),
            delta: Self::require(t.delta, "delta"),
            alpha: Self::require(t.alpha, "alpha"),
            lookahead: Self::require(t.lookahead, "lookahead"),
            log_w_gap: Self::require(t.log_w_gap, "log_w_gap"),
            beta_cutoff: Self::require(t.beta_cutoff, "beta_cutoff"),
        }
    }

    pub fn mode(&self) -> TraversalMode {
        self.traversal.mode.unwrap_or_default()
    }

    pub fn refine_config(&self) -> RefineConfig {
        let r = &self.refine;
        RefineConfig {
            runs: Self::require(self.batch.runs, "runs"),
            min_runs: Self::require(r.min_runs, "min_runs"),
            max_ess_ratio: Self::require(r.max_ess_ratio, "max_ess_ratio"),
            sig_level: Self::require(r.sig_level, "sig_level"),
            n_candidates: Self::require(r.n_candidates, "n_candidates"),
            shrink: Self::require(r.shrink, "shrink"),
            never_split: false,
        }
    }

    /// Trainer settings of a resolved configuration.
    pub fn trainer_settings(&self) -> TrainerSettings {
        TrainerSettings {
            traversal: self.traversal_params(),
            refine: self.refine_config(),
            mode: self.mode(),
            budget: self.budget,
            seed: self.seed,
        }
    }
}

/// A built experiment: the base inference algorithm and its dataset.
pub struct Built {
    pub base: Arc<dyn BaseInference>,
    pub smc: Option<Arc<SmcSampler>>,
    pub dataset: Option<Dataset>,
}

fn positive(v: usize, what: &str) -> Result<usize> {
    if v == 0 {
        Err(Error::Config(format!("{what} must be positive")))
    } else {
        Ok(v)
    }
}

/// Builds the model and base algorithm of a resolved configuration.
pub fn build(cfg: &RunConfig) -> Result<Built> {
    let m = &cfg.model;
    let seed = m.data_seed.unwrap_or(cfg.seed);
    let get = |v: Option<f64>, what: &str| v.ok_or_else(|| Error::Config(format!("missing model.{what}")));
    let get_n = |v: Option<usize>, what: &str| v.ok_or_else(|| Error::Config(format!("missing model.{what}")));
    let is_base = |model: Arc<dyn crate::models::TargetModel>| -> Result<Arc<dyn BaseInference>> {
        let n = positive(cfg.batch.batch_size.unwrap_or(100), "batch.batch_size")?;
        Ok(Arc::new(ImportanceSampler::new(model, n)))
    };
    match cfg.experiment {
        Experiment::Gmm => {
            let (k, d) = (get_n(m.components, "components")?, get_n(m.dim, "dim")?);
            let (prior_sd, noise_sd) = (get(m.prior_sd, "prior_sd")?, get(m.noise_sd, "noise_sd")?);
            let data = GmmModel::generate(seed, get_n(m.n_points, "n_points")?, k, d, prior_sd, noise_sd);
            let model = GmmModel::new(k, d, prior_sd, noise_sd, data.points);
            let dataset = model.dataset(seed);
            Ok(Built { base: is_base(Arc::new(model))?, smc: None, dataset: Some(dataset) })
        }
        Experiment::Conjugate => {
            let (mean, sd, noise) =
                (get(m.prior_mean, "prior_mean")?, get(m.prior_sd, "prior_sd")?, get(m.noise_sd, "noise_sd")?);
            let data = match &m.data {
                Some(d) => d.clone(),
                None => {
                    use rand::Rng;
                    let mut rng = crate::rng::StreamSeeder::new(seed).stream(0, 0);
                    let truth = mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    (0..get_n(m.n_points, "n_points")?)
                        .map(|_| truth + noise * rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect()
                }
            };
            let model = ConjugateGaussian::new(mean, sd, noise, data.clone());
            let dataset = Dataset {
                kind: "conjugate".into(),
                header: vec!["y".into()],
                rows: data.iter().map(|&y| vec![y]).collect(),
                params: serde_json::json!({ "seed": seed, "prior_mean": mean, "prior_sd": sd, "noise_sd": noise,
                    "log_evidence": model.log_evidence() }),
            };
            Ok(Built { base: is_base(Arc::new(model))?, smc: None, dataset: Some(dataset) })
        }
        Experiment::Network => {
            let graph = match m.graph.as_deref().unwrap_or("parallel_chains") {
                "parallel_chains" => {
                    Graph::parallel_chains(get_n(m.chains, "chains")?, get_n(m.chain_len, "chain_len")?)
                }
                "single_edge" => Graph::single_edge(),
                other => return Err(Error::Config(format!("unknown graph '{other}'"))),
            };
            let (mean, sd, scale, dof, th) = (
                get(m.prior_mean, "prior_mean")?,
                get(m.prior_sd, "prior_sd")?,
                get(m.noise_sd, "noise_sd")?,
                get(m.dof, "dof")?,
                get(m.threshold, "threshold")?,
            );
            let model = match &m.data {
                Some(obs) => {
                    NetworkModel::new(vec![mean; graph.edges.len()], sd, scale, dof, obs.clone(), graph, th)?
                }
                None => NetworkModel::generate(seed, graph, mean, sd, scale, dof, th)?,
            };
            let dataset = model.dataset(seed);
            Ok(Built { base: is_base(Arc::new(model))?, smc: None, dataset: Some(dataset) })
        }
        Experiment::Chaos => {
            let truth = ChaosTruth {
                theta: m.truth.unwrap_or(ChaosTruth::default().theta),
                series_len: get_n(m.generated_len, "generated_len")?,
                n_obs: get_n(m.n_obs, "n_obs")?,
                dirichlet_concentration: get(m.dirichlet_concentration, "dirichlet_concentration")?,
            };
            let len = get_n(m.series_len, "series_len")?;
            if len > truth.series_len {
                return Err(Error::Config("series_len exceeds generated_len".into()));
            }
            let model = ChaosModel::generate(seed, &truth).truncated(len);
            let dataset = model.dataset(seed, &truth);
            let smc = Arc::new(SmcSampler::new(
                Arc::new(model),
                positive(cfg.batch.particles.unwrap_or(500), "batch.particles")?,
            ));
            Ok(Built { base: smc.clone(), smc: Some(smc), dataset: Some(dataset) })
        }
        Experiment::LinearGaussian => {
            let model = LinearGaussianSsm::generate(
                seed,
                get_n(m.series_len, "series_len")?,
                get(m.phi, "phi")?,
                get(m.init_sd, "init_sd")?,
                get(m.trans_sd, "trans_sd")?,
                get(m.obs_sd, "obs_sd")?,
            );
            let dataset = Dataset {
                kind: "linear_gaussian".into(),
                header: vec!["y".into()],
                rows: model.observations.iter().map(|&y| vec![y]).collect(),
                params: serde_json::json!({ "seed": seed, "phi": m.phi, "init_sd": model.init_sd,
                    "trans_sd": model.trans_sd, "obs_sd": model.obs_sd }),
            };
            let smc = Arc::new(SmcSampler::new(
                Arc::new(model),
                positive(cfg.batch.particles.unwrap_or(500), "batch.particles")?,
            ));
            Ok(Built { base: smc.clone(), smc: Some(smc), dataset: Some(dataset) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmm_defaults() {
        let c = RunConfig::from_toml("experiment = \"gmm\"\nalgorithm = \"it\"\nbudget = 1000\n")
            .unwrap()
            .resolve()
            .unwrap();
        let t = c.traversal_params();
        assert_eq!((t.kappa, t.beta, t.lambda), (1.0, 0.1, 1.2));
        assert_eq!(t.delta, Schedule::Tanh { scale: 0.5, rate: 20.0, center: 0.9 });
        assert_eq!(t.alpha, Schedule::Tanh { scale: 0.625, rate: 25.0, center: 0.95 });
        assert_eq!(c.refine_config().runs, 16);
        assert_eq!(c.batch.batch_size, Some(100));
        assert_eq!(c.model.n_points, Some(200));
        // resolving twice changes nothing
        assert_eq!(c.resolve().unwrap(), c);
    }

    #[test]
    fn naive_preset_and_overrides() {
        let text = "experiment = \"gmm\"\nalgorithm = \"naive_it\"\nbudget = 10\n[traversal]\nkappa = 2.0\n";
        let c = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        let t = c.traversal_params();
        assert_eq!((t.kappa, t.beta), (2.0, 0.5));
        assert_eq!(t.delta.at(0.3), 0.0);
    }

    #[test]
    fn invalid_configs() {
        assert!(RunConfig::from_toml("experiment = \"gmm\"\nalgorithm = \"it\"\nbudget = 0\n")
            .unwrap()
            .resolve()
            .is_err());
        assert!(RunConfig::from_toml("experiment = \"gmm\"\nalgorithm = \"pmmh\"\nbudget = 5\n")
            .unwrap()
            .resolve()
            .is_err());
        assert!(RunConfig::from_toml("experiment = \"nope\"\nalgorithm = \"it\"\nbudget = 5\n").is_err());
        assert!(RunConfig::from_toml("experiment = \"gmm\"\nalgorithm = \"it\"\nbudget = 5\nbogus = 1\n").is_err());
    }

    #[test]
    fn builds_every_experiment() {
        for (e, a) in [
            (Experiment::Gmm, Algorithm::It),
            (Experiment::Chaos, Algorithm::Pmmh),
            (Experiment::Network, Algorithm::Is),
            (Experiment::Conjugate, Algorithm::NaiveIt),
            (Experiment::LinearGaussian, Algorithm::Smc),
        ] {
            let c = RunConfig::new(e, a, 100, 3).resolve().unwrap();
            let b = build(&c).unwrap();
            assert!(b.base.dim() >= 1);
            assert_eq!(b.smc.is_some(), e.is_state_space());
        }
    }
}
