//! Benchmark harness: TOML run configurations, the training loop with
//! budget accounting, artifact export and replicated comparisons.
//!
//! A run directory contains `config.json` (the fully resolved
//! configuration), `trace.csv`, `measure.jsonl`, the synthetic dataset as
//! `data.csv` with a `data.json` sidecar, and for tree algorithms the
//! checkpoint `tree.json`. PMMH runs also write `chain.csv`.

mod compare;
mod config;
mod run;

pub use compare::{compare, quantile, summarize, summary_csv, value_at, SummaryRow};
pub use config::{
    build, Algorithm, BatchConfig, Built, Experiment, ModelConfig, RefineOverrides, RunConfig, TraversalOverrides,
};
pub use run::{execute, parse_trace_csv, resume, trace_csv, RunSummary, TraceRow, CHECKPOINT_VERSION};
