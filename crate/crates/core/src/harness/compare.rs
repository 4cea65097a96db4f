use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::config::RunConfig;
use super::run::{execute, TraceRow};
use crate::error::{Error, Result};

/// Quantile of sorted data by linear interpolation between order statistics
/// (the common "type 7" definition).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Value of a trace at `evals`: the last row recorded at or before it.
pub fn value_at(trace: &[TraceRow], evals: u64) -> Option<&TraceRow> {
    let idx = trace.partition_point(|r| r.evals_used <= evals);
    idx.checked_sub(1).map(|i| &trace[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub evals: u64,
    /// 25%, 50% and 75% quantiles.
    pub log_ml: [f64; 3],
    pub ess: [f64; 3],
}

fn quartiles(values: impl Iterator<Item = f64>) -> [f64; 3] {
    let mut v: Vec<f64> = values.filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    [quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75)]
}

/// Aligns replicated traces on the union of their evaluation counts and
/// takes quartiles across replications at every grid point.
pub fn summarize(label: &str, traces: &[Vec<TraceRow>]) -> Vec<SummaryRow> {
    let grid: BTreeSet<u64> = traces.iter().flatten().map(|r| r.evals_used).collect();
    grid.into_iter()
        .map(|evals| {
            let rows: Vec<&TraceRow> = traces.iter().filter_map(|t| value_at(t, evals)).collect();
            SummaryRow {
                label: label.to_string(),
                evals,
                log_ml: quartiles(rows.iter().map(|r| r.log_ml)),
                ess: quartiles(rows.iter().map(|r| r.ess)),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("label,evals,log_ml_q25,log_ml_median,log_ml_q75,ess_q25,ess_median,ess_q75\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.label, r.evals, r.log_ml[0], r.log_ml[1], r.log_ml[2], r.ess[0], r.ess[1], r.ess[2]
        );
    }
    out
}

/// Runs every configuration `replications` times (seeds `seed`, `seed + 1`,
/// ...) and summarizes the traces per configuration label.
pub fn compare(configs: &[RunConfig], replications: usize, out: Option<&Path>) -> Result<Vec<SummaryRow>> {
    let first = configs.first().ok_or_else(|| Error::Config("compare needs at least one config".into()))?;
    if let Some(c) = configs.iter().find(|c| c.budget != first.budget) {
        return Err(Error::Config(format!(
            "mismatched budgets: '{}' has {} but '{}' has {}",
            first.label(),
            first.budget,
            c.label(),
            c.budget
        )));
    }
    if replications == 0 {
        return Err(Error::Config("replications must be positive".into()));
    }
    let mut rows = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let label = cfg.label();
        let mut traces = Vec::with_capacity(replications);
        for r in 0..replications {
            let mut c = cfg.clone();
            c.seed = cfg.seed + r as u64;
            c.out = out.map(|o| o.join(format!("{i}-{label}")).join(format!("rep{r}")));
            traces.push(execute(&c)?.trace);
        }
        rows.extend(summarize(&label, &traces));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.csv"), summary_csv(&rows))?;
    }
    Ok(rows)
}
