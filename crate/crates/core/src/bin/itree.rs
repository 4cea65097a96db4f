use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use itree::harness::{self, RunConfig};

#[derive(Parser)]
#[command(name = "itree", version, about = "Inference tree experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration to its budget.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicate several configurations and write quantile traces.
    Compare {
        /// Configuration files; repeat the flag for each.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        replications: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue a tree run from its output directory.
    Resume {
        #[arg(long)]
        out: PathBuf,
        /// New total budget.
        #[arg(long)]
        budget: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>, budget: Option<u64>) -> itree::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(b) = budget {
        cfg.budget = b;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, budget, out } => load(&config, seed, budget).and_then(|mut cfg| {
            if out.is_some() {
                cfg.out = out;
            }
            if cfg.out.is_none() {
                cfg.out = Some(PathBuf::from(format!(
                    "runs/{}-{}-{}",
                    cfg.experiment.name(),
                    cfg.algorithm.name(),
                    cfg.seed
                )));
            }
            let s = harness::execute(&cfg)?;
            let last = s.last();
            println!(
                "evals={} iterations={} log_ml={} ess={} leaves={} out={}",
                last.evals_used,
                last.iteration,
                last.log_ml,
                last.ess,
                last.n_leaves,
                cfg.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
            );
            Ok(())
        }),
        Command::Compare { configs, replications, seed, budget, out } => configs
            .iter()
            .map(|p| load(p, seed, budget))
            .collect::<itree::Result<Vec<_>>>()
            .and_then(|cfgs| harness::compare(&cfgs, replications, Some(&out)))
            .map(|rows| println!("wrote {} rows to {}", rows.len(), out.join("summary.csv").display())),
        Command::Resume { out, budget } => harness::resume(&out, budget).map(|s| {
            let last = s.last();
            println!("evals={} iterations={} log_ml={} ess={}", last.evals_used, last.iteration, last.log_ml, last.ess);
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
