//! Python bindings: a tree trainer driven from Python, a one-shot harness
//! runner, and the numerical building blocks.

use std::path::PathBuf;

use itree::base_infer::systematic_resample_with_offset;
use itree::harness::{self, Algorithm, RunConfig, TraceRow};
use itree::integration::estimate_integral;
use itree::logweight_density::{self, LogWeightFit};
use itree::refine::{self, RefineOutcome};
use itree::trainer::Trainer;
use itree::tree;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: itree::Error) -> PyErr {
    match e {
        itree::Error::Config(_) | itree::Error::InvalidRect(_) | itree::Error::InvalidSplit { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn config_from(experiment: &str, algorithm: &str, config: Option<&str>) -> PyResult<RunConfig> {
    let text = match config {
        Some(t) => t.to_string(),
        None => format!("experiment = \"{experiment}\"\nalgorithm = \"{algorithm}\"\nseed = 0\nbudget = 1\n"),
    };
    RunConfig::from_toml(&text).map_err(py_err)
}

fn trace_dict<'py>(py: Python<'py>, row: &TraceRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("evals_used", row.evals_used)?;
    d.set_item("iteration", row.iteration)?;
    d.set_item("log_ml", row.log_ml)?;
    d.set_item("ess", row.ess)?;
    d.set_item("n_leaves", row.n_leaves)?;
    d.set_item("max_depth", row.max_depth)?;
    d.set_item("integral", row.integral)?;
    Ok(d)
}

/// An inference tree trained on one of the built-in experiments.
///
/// `config` is optional TOML in the harness format; when given it replaces
/// `experiment` and `algorithm`. `seed` and `budget` always apply.
#[pyclass(name = "InferenceTree")]
struct PyInferenceTree {
    trainer: Trainer,
}

#[pymethods]
impl PyInferenceTree {
    #[new]
    #[pyo3(signature = (experiment = "conjugate", seed = 0, budget = 100_000, algorithm = "it", config = None))]
    fn new(experiment: &str, seed: u64, budget: u64, algorithm: &str, config: Option<&str>) -> PyResult<Self> {
        let mut cfg = config_from(experiment, algorithm, config)?;
        if !matches!(cfg.algorithm, Algorithm::It | Algorithm::NaiveIt) {
            return Err(PyValueError::new_err("InferenceTree needs algorithm 'it' or 'naive_it'"));
        }
        cfg.seed = seed;
        cfg.budget = budget;
        let cfg = cfg.resolve().map_err(py_err)?;
        let built = harness::build(&cfg).map_err(py_err)?;
        let trainer = Trainer::new(built.base, cfg.trainer_settings()).map_err(py_err)?;
        Ok(Self { trainer })
    }

    /// One traversal and refinement. Returns the refined leaf, the outcome
    /// (`"extended"`, `"split"` or `"rejected"`) and the evaluations spent.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let report = self.trainer.step().map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("leaf", report.leaf)?;
        let outcome = match report.outcome {
            RefineOutcome::Extended { .. } => "extended",
            RefineOutcome::Split { .. } => "split",
            RefineOutcome::Rejected { .. } => "rejected",
        };
        d.set_item("outcome", outcome)?;
        d.set_item("evals", report.evals)?;
        Ok(d)
    }

    /// Trains until the evaluation budget is spent.
    fn run(&mut self) -> PyResult<()> {
        self.trainer.run(|_, _| Ok(())).map_err(py_err)
    }

    #[getter]
    fn log_ml(&self) -> f64 {
        self.trainer.tree().log_ml()
    }

    #[getter]
    fn ess(&self) -> f64 {
        self.trainer.tree().ess()
    }

    #[getter]
    fn n_leaves(&self) -> usize {
        self.trainer.tree().n_leaves()
    }

    #[getter]
    fn max_depth(&self) -> usize {
        self.trainer.tree().max_depth()
    }

    #[getter]
    fn evals_used(&self) -> u64 {
        self.trainer.evals_used()
    }

    #[getter]
    fn iteration(&self) -> u64 {
        self.trainer.iteration()
    }

    #[getter]
    fn finished(&self) -> bool {
        self.trainer.finished()
    }

    /// Self-normalized estimate of the model's known integrand.
    fn integral(&self) -> PyResult<f64> {
        estimate_integral(self.trainer.tree()).map_err(py_err)
    }

    /// The flattened empirical measure as `(x, weight)` pairs.
    fn measure(&self) -> Vec<(Vec<f64>, f64)> {
        self.trainer.tree().flatten_measure().into_iter().map(|p| (p.x, p.weight)).collect()
    }

    /// Leaf regions in the unit hypercube with their run counts and
    /// log marginal-likelihood estimates.
    fn leaves<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.trainer
            .tree()
            .leaves()
            .map(|n| {
                let d = PyDict::new(py);
                d.set_item("id", n.id)?;
                d.set_item("depth", n.depth)?;
                d.set_item("lo", n.rect.lo().to_vec())?;
                d.set_item("hi", n.rect.hi().to_vec())?;
                d.set_item("runs", n.local.n())?;
                d.set_item("log_omega", n.stats.log_omega)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        let t = self.trainer.tree();
        format!(
            "InferenceTree(leaves={}, evals_used={}, log_ml={:.4})",
            t.n_leaves(),
            self.trainer.evals_used(),
            t.log_ml()
        )
    }
}

/// Runs a harness configuration (TOML text) to its budget, writing artifacts
/// to `out` when given. Returns the trace as a list of dicts.
#[pyfunction]
#[pyo3(signature = (config, out = None, seed = None, budget = None))]
fn run_config<'py>(
    py: Python<'py>,
    config: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    budget: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = RunConfig::from_toml(config).map_err(py_err)?;
    if out.is_some() {
        cfg.out = out;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(b) = budget {
        cfg.budget = b;
    }
    let summary = harness::execute(&cfg).map_err(py_err)?;
    summary.trace.iter().map(|r| trace_dict(py, r)).collect()
}

/// Weight given to a node's children when combining its estimate.
#[pyfunction]
fn child_preference(lambda_: f64, depth_gap: f64, visits: u64, local_runs: usize) -> f64 {
    tree::child_preference(lambda_, depth_gap, visits, local_runs)
}

/// Split loss from child masses and volumes.
#[pyfunction]
fn split_loss(mass_left: f64, mass_right: f64, vol_left: f64, vol_right: f64) -> f64 {
    refine::split_loss(mass_left, mass_right, vol_left, vol_right)
}

/// Systematic resampling with a fixed offset `u` in `[0, 1)`.
#[pyfunction]
fn systematic_resample(weights: Vec<f64>, n: usize, u: f64) -> PyResult<Vec<usize>> {
    systematic_resample_with_offset(&weights, n, u).map_err(py_err)
}

/// Probability that the largest of `lookahead` log-normal log-weights with
/// the given mean and sd exceeds `log_threshold`.
#[pyfunction]
fn prob_exceed_lookahead(mean: f64, sd: f64, log_threshold: f64, lookahead: u32) -> PyResult<f64> {
    if sd.is_nan() || sd <= 0.0 || !mean.is_finite() {
        return Err(PyValueError::new_err("need a finite mean and a positive sd"));
    }
    let fit = LogWeightFit { mean, sd, n: 2 };
    Ok(logweight_density::prob_exceed_lookahead(&fit, log_threshold, lookahead))
}

/// Two-sided Welch t-test p-value on the finite entries of two log-weight samples.
#[pyfunction]
fn welch_p_value(a: Vec<f64>, b: Vec<f64>) -> f64 {
    refine::welch_p_value(&a, &b)
}

#[pymodule]
fn inference_trees(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInferenceTree>()?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(child_preference, m)?)?;
    m.add_function(wrap_pyfunction!(split_loss, m)?)?;
    m.add_function(wrap_pyfunction!(systematic_resample, m)?)?;
    m.add_function(wrap_pyfunction!(prob_exceed_lookahead, m)?)?;
    m.add_function(wrap_pyfunction!(welch_p_value, m)?)?;
    Ok(())
}
