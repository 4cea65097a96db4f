//! The training loop: select a leaf, refine it, propagate, until the
//! evaluation budget is spent.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base_infer::BaseInference;
use crate::error::{Error, Result};
use crate::refine::{refine, RefineConfig, RefineOutcome};
use crate::rng::{StreamSeeder, TRAVERSAL_SLOT};
use crate::traversal::{select_leaf, TraversalMode, TraversalParams};
use crate::tree::{InferenceTree, NodeId, PropagationParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerSettings {
    pub traversal: TraversalParams,
    pub refine: RefineConfig,
    pub mode: TraversalMode,
    /// Total target evaluations.
    pub budget: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub leaf: NodeId,
    pub outcome: RefineOutcome,
    pub evals: u64,
}

/// The resumable part of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerState {
    pub tree: InferenceTree,
    pub evals_used: u64,
    pub iteration: u64,
}

pub struct Trainer {
    base: Arc<dyn BaseInference>,
    settings: TrainerSettings,
    seeder: StreamSeeder,
    state: TrainerState,
}

impl Trainer {
    pub fn new(base: Arc<dyn BaseInference>, settings: TrainerSettings) -> Result<Self> {
        settings.traversal.validate()?;
        settings.refine.validate()?;
        if settings.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        let params = PropagationParams {
            lambda: settings.traversal.lambda,
            lookahead: settings.traversal.lookahead,
            log_w_gap: settings.traversal.log_w_gap,
        };
        let tree = InferenceTree::new(base.dim(), params);
        let seeder = StreamSeeder::new(settings.seed);
        Ok(Self { base, settings, seeder, state: TrainerState { tree, evals_used: 0, iteration: 0 } })
    }

    /// Continues from a saved state.
    pub fn resume(base: Arc<dyn BaseInference>, settings: TrainerSettings, state: TrainerState) -> Result<Self> {
        state.tree.validate()?;
        if state.tree.dim() != base.dim() {
            return Err(Error::Checkpoint(format!(
                "checkpoint dimension {} does not match model dimension {}",
                state.tree.dim(),
                base.dim()
            )));
        }
        let mut t = Self::new(base, settings)?;
        t.state = state;
        t.state.tree.recompute_all();
        Ok(t)
    }

    pub fn tree(&self) -> &InferenceTree {
        &self.state.tree
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn settings(&self) -> &TrainerSettings {
        &self.settings
    }

    pub fn evals_used(&self) -> u64 {
        self.state.evals_used
    }

    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    /// Fraction of the budget consumed, in `[0, 1]`.
    pub fn progress(&self) -> f64 {
        (self.state.evals_used as f64 / self.settings.budget as f64).min(1.0)
    }

    pub fn finished(&self) -> bool {
        self.state.evals_used >= self.settings.budget
    }

    /// One traversal and refinement.
    pub fn step(&mut self) -> Result<StepReport> {
        let rho = self.progress();
        let it = self.state.iteration;
        let mut rng = self.seeder.stream(it, TRAVERSAL_SLOT);
        let path = select_leaf(&self.state.tree, &self.settings.traversal, self.settings.mode, rho, &mut rng);
        let leaf = *path.last().expect("path contains the root");
        let report =
            refine(&mut self.state.tree, leaf, self.base.as_ref(), &self.settings.refine, &self.seeder, it)?;
        self.state.evals_used += report.evals;
        self.state.iteration += 1;
        Ok(StepReport { leaf, outcome: report.outcome, evals: report.evals })
    }

    /// Steps until the budget is exhausted, always at least once, calling
    /// `observe` after every step.
    pub fn run<F: FnMut(&Trainer, &StepReport) -> Result<()>>(&mut self, mut observe: F) -> Result<()> {
        loop {
            let report = self.step()?;
            observe(self, &report)?;
            if self.finished() {
                return Ok(());
            }
        }
    }

    pub fn into_state(self) -> TrainerState {
        self.state
    }
}
