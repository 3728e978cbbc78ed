// SPDX-License-Identifier: Apache-2.0

//! Parameter sweeps, repetition averaging, bound audits and result files.
//!
//! A sweep runs every requested scheduler on the same batches: for each
//! `(s, k)` the batch of repetition `r` is generated from seed `seed + r`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{check_safety, ExecutionReport, SegmentLabel};
use crate::sched::{makespan_upper_bound, SchedulerKind};
use crate::topology::{ShardGraph, TopologyKind};
use crate::workload::{
    max_object_load, max_reach, AccessCount, AccessPattern, Transaction, WorkloadSpec,
};

pub const DEFAULT_SHARDS: [usize; 4] = [16, 32, 64, 128];
pub const DEFAULT_KS: [usize; 3] = [2, 4, 8];
pub const DEFAULT_REPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologyKind,
    /// Shard counts to sweep. Defaults to 16, 32, 64 and 128, or to the size
    /// a grid's dimensions imply.
    pub shards: Option<Vec<usize>>,
    #[serde(rename = "k")]
    pub ks: Vec<usize>,
    pub access: AccessPattern,
    pub access_count: AccessCount,
    #[serde(rename = "scheduler")]
    pub schedulers: Vec<SchedulerKind>,
    pub reps: usize,
    pub seed: u64,
    pub abort_probability: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: TopologyKind::Clique,
            shards: None,
            ks: DEFAULT_KS.to_vec(),
            access: AccessPattern::Random,
            access_count: AccessCount::UpTo,
            schedulers: vec![SchedulerKind::Central],
            reps: DEFAULT_REPS,
            seed: 0,
            abort_probability: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The shard counts this config sweeps.
    pub fn shard_counts(&self) -> Result<Vec<usize>> {
        match (self.topology.implied_shards(), &self.shards) {
            (Some(n), None) => Ok(vec![n]),
            (Some(n), Some(list)) if list.iter().all(|&s| s == n) => Ok(vec![n]),
            (Some(n), Some(_)) => Err(Error::InvalidConfig(format!(
                "{} has exactly {n} shards",
                self.topology
            ))),
            (None, None) => Ok(DEFAULT_SHARDS.to_vec()),
            (None, Some(list)) => Ok(list.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::InvalidConfig("k values must be positive".into()));
        }
        if self.schedulers.is_empty() {
            return Err(Error::InvalidConfig("no scheduler selected".into()));
        }
        let shards = self.shard_counts()?;
        if shards.is_empty() || shards.contains(&0) {
            return Err(Error::InvalidConfig("shard counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.abort_probability) {
            return Err(Error::BadAbortProbability(self.abort_probability));
        }
        Ok(())
    }

    pub fn workload(&self, k: usize) -> WorkloadSpec {
        WorkloadSpec::new(self.access, k)
            .with_count(self.access_count)
            .with_abort_probability(self.abort_probability)
    }
}

/// One audited bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Audit of one completed run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundAudit {
    pub checks: Vec<BoundCheck>,
    /// Batch object load `l` exceeded `2k + 4·ln s`. Reported, not a failure.
    pub load_exceeds_lemma: bool,
    /// Makespan over `max(l, d, 1)`, both lower bounds on any schedule.
    pub ratio: f64,
}

impl BoundAudit {
    pub fn violations(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Threshold `2k + 4·ln s` on the object load of a random batch.
pub fn load_threshold(k: usize, s: usize) -> f64 {
    2.0 * k as f64 + 4.0 * (s as f64).ln()
}

/// Checks every bound that applies to the run.
pub fn bound_audit(
    g: &ShardGraph,
    batch: &[Transaction],
    k: usize,
    report: &ExecutionReport,
) -> BoundAudit {
    let mut checks = Vec::new();
    let mut check = |name: &'static str, passed: bool, detail: String| {
        checks.push(BoundCheck {
            name,
            passed,
            detail,
        })
    };

    let problems = check_safety(batch, report);
    check("safety", problems.is_empty(), problems.join("; "));

    for seg in &report.segments {
        let (k_seg, l, d) = (seg.max_accesses, seg.load, seg.reach.max(1));
        let at = format!("{:?} from round {}", seg.label, seg.start);
        check(
            "colors_at_least_load",
            seg.colors as usize >= l,
            format!("{at}: {} colors, l = {l}", seg.colors),
        );
        check(
            "colors_at_most_kl_plus_1",
            seg.colors as usize <= k_seg * l + 1,
            format!("{at}: {} colors, k = {k_seg}, l = {l}", seg.colors),
        );
        let bound = makespan_upper_bound(k_seg, l, d);
        check(
            "phase_two_makespan",
            seg.phase_two_rounds() <= bound,
            format!("{at}: {} rounds, bound {bound}", seg.phase_two_rounds()),
        );
        if let SegmentLabel::Bucket(i) = seg.label {
            let bound = makespan_upper_bound(k_seg, l, 1 << (i + 1));
            check(
                "bucket_makespan",
                seg.phase_two_rounds() <= bound,
                format!(
                    "bucket {i}: {} rounds, bound {bound}",
                    seg.phase_two_rounds()
                ),
            );
            if matches!(g.kind(), TopologyKind::Line) {
                let lower = (1u64 << i) as f64 + (l * l) as f64 / 8.0;
                check(
                    "line_lower_bound",
                    seg.makespan() as f64 >= lower,
                    format!("bucket {i}: {} rounds, lower bound {lower}", seg.makespan()),
                );
            }
        }
    }

    if let Some(accounted) = accounted_rounds(report) {
        check(
            "round_accounting",
            accounted == report.makespan,
            format!("{accounted} accounted of {} rounds", report.makespan),
        );
    }

    let l = max_object_load(batch);
    let d = max_reach(g, batch);
    let lower = l.max(d as usize).max(1) as f64;
    BoundAudit {
        checks,
        load_exceeds_lemma: l as f64 > load_threshold(k, g.shard_count()),
        ratio: report.makespan as f64 / lower,
    }
}

/// Rounds explained by Phase 1, color windows, handoffs and level barriers.
/// `None` for runs without segments.
fn accounted_rounds(report: &ExecutionReport) -> Option<u64> {
    let first = report.segments.first()?;
    if let SegmentLabel::Cluster { .. } = first.label {
        let mut levels: BTreeMap<_, u64> = BTreeMap::new();
        for seg in &report.segments {
            let SegmentLabel::Cluster { level, .. } = seg.label else {
                return Some(u64::MAX);
            };
            let span = levels.entry(level).or_default();
            *span = (*span).max(seg.makespan());
        }
        return Some(levels.values().sum());
    }
    let rounds: u64 = report
        .segments
        .iter()
        .map(|s| s.phase_one_rounds() + s.windows.iter().map(|w| w.1 - w.0).sum::<u64>())
        .sum();
    Some(rounds + report.handoff_rounds)
}

/// Metrics of one repetition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub throughput: f64,
    pub latency: f64,
    pub messages: u64,
    pub makespan: u64,
    pub colors: u32,
    pub audit: BoundAudit,
}

/// Generates the batch for `seed` and runs one scheduler on it.
pub fn run_once(
    g: &ShardGraph,
    spec: &WorkloadSpec,
    scheduler: SchedulerKind,
    seed: u64,
) -> Result<(Vec<Transaction>, ExecutionReport, RunMetrics)> {
    let batch = spec.generate(g, seed)?;
    let report = scheduler.run(g, &batch)?;
    let audit = bound_audit(g, &batch, spec.k, &report);
    let metrics = RunMetrics {
        seed,
        throughput: report.throughput(),
        latency: report.avg_latency(),
        messages: report.messages.total(),
        makespan: report.makespan,
        colors: report.colors_used,
        audit,
    };
    Ok((batch, report, metrics))
}

/// One `(s, k, scheduler)` cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub topology: String,
    pub s: usize,
    pub k: usize,
    pub access: String,
    pub scheduler: String,
    pub reps: usize,
    pub seed: u64,
    pub mean_throughput: f64,
    pub sd_throughput: f64,
    pub mean_latency: f64,
    pub sd_latency: f64,
    pub mean_messages: f64,
    pub sd_messages: f64,
    pub mean_makespan: f64,
    pub colors_mean: f64,
    pub bound_violations: usize,
    pub mean_bound_ratio: f64,
    /// Repetitions whose object load exceeded `2k + 4·ln s`.
    pub load_exceedances: usize,
    /// Empty unless the cell could not run.
    pub error: String,
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl ResultRow {
    fn new(cfg: &ExperimentConfig, s: usize, k: usize, scheduler: SchedulerKind) -> Self {
        ResultRow {
            topology: cfg.topology.to_string(),
            s,
            k,
            access: cfg.access.to_string(),
            scheduler: scheduler.to_string(),
            reps: cfg.reps,
            seed: cfg.seed,
            mean_throughput: 0.0,
            sd_throughput: 0.0,
            mean_latency: 0.0,
            sd_latency: 0.0,
            mean_messages: 0.0,
            sd_messages: 0.0,
            mean_makespan: 0.0,
            colors_mean: 0.0,
            bound_violations: 0,
            mean_bound_ratio: 0.0,
            load_exceedances: 0,
            error: String::new(),
        }
    }

    fn fill(&mut self, runs: &[RunMetrics]) {
        let series = |f: fn(&RunMetrics) -> f64| mean_sd(&runs.iter().map(f).collect::<Vec<_>>());
        (self.mean_throughput, self.sd_throughput) = series(|r| r.throughput);
        (self.mean_latency, self.sd_latency) = series(|r| r.latency);
        (self.mean_messages, self.sd_messages) = series(|r| r.messages as f64);
        self.mean_makespan = series(|r| r.makespan as f64).0;
        self.colors_mean = series(|r| f64::from(r.colors)).0;
        self.mean_bound_ratio = series(|r| r.audit.ratio).0;
        self.bound_violations = runs.iter().map(|r| r.audit.violations().count()).sum();
        self.load_exceedances = runs.iter().filter(|r| r.audit.load_exceeds_lemma).count();
    }

    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }
}

/// A finished cell with its per-repetition metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub row: ResultRow,
    pub runs: Vec<RunMetrics>,
}

/// Runs the sweep; rows are ordered by `(s, k, scheduler)` as requested.
/// A cell that cannot run reports its error in the row and the sweep goes
/// on.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(run_experiment_detailed(cfg)?
        .into_iter()
        .map(|c| c.row)
        .collect())
}

pub fn run_experiment_detailed(cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for s in cfg.shard_counts()? {
        let graph = ShardGraph::build(cfg.topology.clone(), s);
        for &k in &cfg.ks {
            let spec = cfg.workload(k);
            for &scheduler in &cfg.schedulers {
                let mut row = ResultRow::new(cfg, s, k, scheduler);
                let g = match &graph {
                    Ok(g) => g,
                    Err(e) => {
                        row.error = e.to_string();
                        cells.push(CellResult {
                            row,
                            runs: Vec::new(),
                        });
                        continue;
                    }
                };
                let runs: Result<Vec<RunMetrics>> = (0..cfg.reps as u64)
                    .map(|r| run_once(g, &spec, scheduler, cfg.seed + r).map(|(_, _, m)| m))
                    .collect();
                match runs {
                    Ok(runs) => {
                        row.fill(&runs);
                        cells.push(CellResult { row, runs });
                    }
                    Err(e) => {
                        row.error = e.to_string();
                        cells.push(CellResult {
                            row,
                            runs: Vec::new(),
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// CSV bytes for `rows`, header first.
pub fn csv_bytes(rows: &[ResultRow]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Csv(e.into_error().into()))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let bytes = csv_bytes(rows)?;
    fs::write(path, bytes).map_err(io_error(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Whitespace-separated series for plotting tools: one block per
/// `(scheduler, k)`, blocks separated by two blank lines, rows by `s`.
pub fn dat_text(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    let mut blocks: BTreeMap<(&str, usize), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| !r.failed()) {
        blocks.entry((&row.scheduler, row.k)).or_default().push(row);
    }
    let mut out = String::new();
    for (i, ((scheduler, k), block)) in blocks.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        let _ = writeln!(
            out,
            "# {} {} k={k} access={}",
            block[0].topology, scheduler, block[0].access
        );
        out.push_str("# s throughput sd_throughput latency sd_latency messages sd_messages makespan colors\n");
        for r in block {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {}",
                r.s,
                r.mean_throughput,
                r.sd_throughput,
                r.mean_latency,
                r.sd_latency,
                r.mean_messages,
                r.sd_messages,
                r.mean_makespan,
                r.colors_mean
            );
        }
    }
    Ok(out)
}

pub fn emit_dat(rows: &[ResultRow], path: &Path) -> Result<()> {
    let text = dat_text(rows)?;
    fs::write(path, text).map_err(io_error(path))
}
