// SPDX-License-Identifier: Apache-2.0

//! Experiment runner. Sweeps shard counts, access counts and schedulers,
//! writes averaged results as CSV, and exits nonzero if any audited bound or
//! safety property failed.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use shardsched::experiment::{
    csv_bytes, emit_csv, emit_dat, run_experiment_detailed, ExperimentConfig,
};
use shardsched::{AccessCount, AccessPattern, SchedulerKind, TopologyKind};

#[derive(Debug, Parser)]
#[command(
    name = "shardsched",
    version,
    about = "Cross-shard transaction scheduling experiments"
)]
struct Args {
    /// JSON config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// clique, line, hypercube or grid:<d1>x<d2>...
    #[arg(long)]
    topology: Option<TopologyKind>,

    /// Shard counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    shards: Option<Vec<usize>>,

    /// Maximum objects per transaction, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,

    /// random or nearby.
    #[arg(long)]
    access: Option<AccessPattern>,

    /// exact (every transaction touches k objects) or upto (uniform in 1..=k).
    #[arg(long)]
    access_count: Option<AccessCount>,

    /// central, bucket, distributed or lock2pl, comma separated.
    #[arg(long, value_delimiter = ',')]
    scheduler: Option<Vec<SchedulerKind>>,

    #[arg(long)]
    reps: Option<usize>,

    /// Base seed; repetition r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,

    /// Chance that a generated transaction carries a failing condition.
    #[arg(long)]
    abort_probability: Option<f64>,

    /// CSV output path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write whitespace-separated series for plotting.
    #[arg(long)]
    dat: Option<PathBuf>,

    /// Print every failed bound check to stderr.
    #[arg(long)]
    audit: bool,
}

impl Args {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(t) = &self.topology {
            cfg.topology = t.clone();
        }
        if let Some(s) = &self.shards {
            cfg.shards = Some(s.clone());
        }
        if let Some(k) = &self.k {
            cfg.ks = k.clone();
        }
        if let Some(a) = self.access {
            cfg.access = a;
        }
        if let Some(c) = self.access_count {
            cfg.access_count = c;
        }
        if let Some(s) = &self.scheduler {
            cfg.schedulers = s.clone();
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.abort_probability {
            cfg.abort_probability = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(args: &Args) -> Result<bool> {
    let cfg = args.config()?;
    let cells = run_experiment_detailed(&cfg)?;
    let rows: Vec<_> = cells.iter().map(|c| c.row.clone()).collect();

    match &args.out {
        Some(path) => emit_csv(&rows, path)?,
        None => std::io::stdout().write_all(&csv_bytes(&rows)?)?,
    }
    if let Some(path) = &args.dat {
        emit_dat(&rows, path)?;
    }

    let mut clean = true;
    for cell in &cells {
        let r = &cell.row;
        if r.failed() {
            eprintln!(
                "{} s={} k={} {}: {}",
                r.topology, r.s, r.k, r.scheduler, r.error
            );
        }
        if r.bound_violations > 0 {
            clean = false;
        }
        if args.audit {
            for run in &cell.runs {
                for c in run.audit.violations() {
                    eprintln!(
                        "audit {} s={} k={} {} seed {}: {} failed: {}",
                        r.topology, r.s, r.k, r.scheduler, run.seed, c.name, c.detail
                    );
                }
            }
        }
    }
    if args.audit {
        let violations: usize = rows.iter().map(|r| r.bound_violations).sum();
        let runs: usize = cells.iter().map(|c| c.runs.len()).sum();
        eprintln!("audit: {runs} runs, {violations} violations");
    }
    Ok(clean)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
