use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{build, Algorithm, Built, RunConfig};
use crate::baselines::{pmmh_step, PmmhState, VanillaIs};
use crate::error::{Error, Result};
use crate::integration::estimate_integral;
use crate::rng::StreamSeeder;
use crate::trainer::{Trainer, TrainerState};
use crate::traversal::TraversalMode;
use crate::tree::MeasurePoint;

pub const CHECKPOINT_VERSION: u32 = 1;

/// One row of the progress trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub evals_used: u64,
    pub iteration: u64,
    #[serde(with = "crate::serde_float")]
    pub log_ml: f64,
    #[serde(with = "crate::serde_float")]
    pub ess: f64,
    pub n_leaves: usize,
    pub max_depth: usize,
    pub integral: Option<f64>,
}

/// In-memory result of a harness run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config: RunConfig,
    pub trace: Vec<TraceRow>,
    pub measure: Vec<MeasurePoint>,
    pub final_state: Option<TrainerState>,
    pub chain: Option<PmmhState>,
}

impl RunSummary {
    pub fn last(&self) -> &TraceRow {
        self.trace.last().expect("a run produces at least one trace row")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    state: TrainerState,
    trace: Vec<TraceRow>,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let with_integral = rows.iter().any(|r| r.integral.is_some());
    let mut out = String::from("evals_used,iteration,log_ml_estimate,ess,n_leaves,max_depth");
    if with_integral {
        out.push_str(",integral_estimate");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{},{},{}", r.evals_used, r.iteration, r.log_ml, r.ess, r.n_leaves, r.max_depth);
        if with_integral {
            let _ = write!(out, ",{}", r.integral.unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

/// Parses a trace written by [`trace_csv`].
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty trace".into()))?;
    let with_integral = header.split(',').count() == 7;
    let bad = |l: &str| Error::Config(format!("malformed trace row '{l}'"));
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != if with_integral { 7 } else { 6 } {
                return Err(bad(l));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(l));
            let int = |i: usize| f[i].parse::<u64>().map_err(|_| bad(l));
            Ok(TraceRow {
                evals_used: int(0)?,
                iteration: int(1)?,
                log_ml: num(2)?,
                ess: num(3)?,
                n_leaves: int(4)? as usize,
                max_depth: int(5)? as usize,
                integral: if with_integral { Some(num(6)?) } else { None },
            })
        })
        .collect()
}

fn measure_jsonl(points: &[MeasurePoint]) -> Result<String> {
    let mut out = String::new();
    for p in points {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

fn tree_row(trainer: &Trainer, with_integral: bool) -> TraceRow {
    let tree = trainer.tree();
    TraceRow {
        evals_used: trainer.evals_used(),
        iteration: trainer.iteration(),
        log_ml: tree.log_ml(),
        ess: tree.ess(),
        n_leaves: tree.n_leaves(),
        max_depth: tree.max_depth(),
        integral: with_integral.then(|| estimate_integral(tree).unwrap_or(f64::NAN)),
    }
}

fn write_outputs(dir: &Path, summary: &RunSummary, dataset: Option<&crate::models::Dataset>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&summary.config)? + "\n")?;
    fs::write(dir.join("trace.csv"), trace_csv(&summary.trace))?;
    fs::write(dir.join("measure.jsonl"), measure_jsonl(&summary.measure)?)?;
    if let Some(state) = &summary.final_state {
        write_checkpoint(dir, state, &summary.trace)?;
    }
    if let Some(chain) = &summary.chain {
        chain.write_csv(&dir.join("chain.csv"))?;
    }
    if let Some(d) = dataset {
        d.write(dir, "data")?;
    }
    Ok(())
}

fn write_checkpoint(dir: &Path, state: &TrainerState, trace: &[TraceRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cp = Checkpoint { version: CHECKPOINT_VERSION, state: state.clone(), trace: trace.to_vec() };
    let mut f = fs::File::create(dir.join("tree.json"))?;
    f.write_all(serde_json::to_string(&cp)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn drive_tree(cfg: &RunConfig, mut trainer: Trainer, mut trace: Vec<TraceRow>) -> Result<RunSummary> {
    let with_integral = cfg.mode() == TraversalMode::Integration;
    let every = cfg.trace_every;
    let result = trainer.run(|t, _| {
        if t.iteration().is_multiple_of(every) || t.finished() {
            trace.push(tree_row(t, with_integral));
        }
        Ok(())
    });
    if let Err(e) = result {
        if let Some(dir) = &cfg.out {
            write_checkpoint(dir, trainer.state(), &trace)?;
        }
        return Err(e);
    }
    if trace.last().map(|r| r.iteration) != Some(trainer.iteration()) {
        trace.push(tree_row(&trainer, with_integral));
    }
    let measure = trainer.tree().flatten_measure();
    Ok(RunSummary { config: cfg.clone(), trace, measure, final_state: Some(trainer.into_state()), chain: None })
}

fn drive_is(cfg: &RunConfig, built: &Built) -> Result<RunSummary> {
    let runs = cfg.batch.runs.unwrap_or(1);
    let mut is = VanillaIs::new(built.base.clone(), runs, cfg.seed);
    let with_integral = cfg.mode() == TraversalMode::Integration;
    let mut trace = Vec::new();
    loop {
        is.step()?;
        let done = is.evals() >= cfg.budget;
        if is.iteration().is_multiple_of(cfg.trace_every) || done {
            trace.push(TraceRow {
                evals_used: is.evals(),
                iteration: is.iteration(),
                log_ml: is.log_z(),
                ess: is.ess(),
                n_leaves: 1,
                max_depth: 0,
                integral: with_integral.then(|| is.integral().unwrap_or(f64::NAN)),
            });
        }
        if done {
            break;
        }
    }
    Ok(RunSummary { config: cfg.clone(), trace, measure: is.measure(), final_state: None, chain: None })
}

fn drive_pmmh(cfg: &RunConfig, built: &Built) -> Result<RunSummary> {
    let smc = built.smc.as_ref().ok_or_else(|| Error::Config("pmmh needs a state-space model".into()))?;
    let step_sd = cfg.batch.step_sd.unwrap_or(crate::baselines::PMMH_STEP_SD);
    let seeder = StreamSeeder::new(cfg.seed);
    let mut state = PmmhState::from_prior(smc.as_ref(), step_sd, &mut seeder.stream(0, 0));
    let mut trace = Vec::new();
    let mut i = 1;
    loop {
        pmmh_step(smc.as_ref(), &mut state, &mut seeder.stream(i, 0));
        let done = state.evals >= cfg.budget;
        if i.is_multiple_of(cfg.trace_every) || done {
            trace.push(TraceRow {
                evals_used: state.evals,
                iteration: i,
                log_ml: state.log_z,
                ess: f64::NAN,
                n_leaves: 0,
                max_depth: 0,
                integral: None,
            });
        }
        if done {
            break;
        }
        i += 1;
    }
    let w = 1.0 / state.trace.len() as f64;
    let measure =
        state.trace.iter().map(|r| MeasurePoint { x: r.theta.clone(), weight: w, latent: Vec::new() }).collect();
    Ok(RunSummary { config: cfg.clone(), trace, measure, final_state: None, chain: Some(state) })
}

/// Runs a configuration to its budget and writes the artifacts if an output
/// directory is configured.
pub fn execute(config: &RunConfig) -> Result<RunSummary> {
    let cfg = config.resolve()?;
    let built = build(&cfg)?;
    let summary = match cfg.algorithm {
        Algorithm::It | Algorithm::NaiveIt => {
            let trainer = Trainer::new(built.base.clone(), cfg.trainer_settings())?;
            drive_tree(&cfg, trainer, Vec::new())?
        }
        Algorithm::Is | Algorithm::Smc => drive_is(&cfg, &built)?,
        Algorithm::Pmmh => drive_pmmh(&cfg, &built)?,
    };
    if let Some(dir) = &cfg.out {
        write_outputs(dir, &summary, built.dataset.as_ref())?;
    }
    Ok(summary)
}

/// Continues a tree run from the artifacts in `dir`, optionally raising the
/// total budget.
pub fn resume(dir: &Path, budget: Option<u64>) -> Result<RunSummary> {
    let mut cfg: RunConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    if !matches!(cfg.algorithm, Algorithm::It | Algorithm::NaiveIt) {
        return Err(Error::Config(format!("cannot resume algorithm '{}'", cfg.algorithm.name())));
    }
    if let Some(b) = budget {
        cfg.budget = b;
    }
    cfg.out = Some(PathBuf::from(dir));
    let cfg = cfg.resolve()?;
    let cp: Checkpoint = serde_json::from_str(&fs::read_to_string(dir.join("tree.json"))?)?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", cp.version)));
    }
    let built = build(&cfg)?;
    let trainer = Trainer::resume(built.base.clone(), cfg.trainer_settings(), cp.state)?;
    let summary = if trainer.finished() {
        let trace = cp.trace;
        let measure = trainer.tree().flatten_measure();
        RunSummary { config: cfg.clone(), trace, measure, final_state: Some(trainer.into_state()), chain: None }
    } else {
        drive_tree(&cfg, trainer, cp.trace)?
    };
    write_outputs(dir, &summary, built.dataset.as_ref())?;
    Ok(summary)
}
