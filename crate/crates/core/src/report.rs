// SPDX-License-Identifier: Apache-2.0

//! The common result of every scheduler, and the safety checks run over it.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cluster::{Height, Level};
use crate::commit::{ChainEntry, MessageLedger};
use crate::topology::ShardId;
use crate::workload::{ObjectId, Transaction, TxnId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Committed,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnRecord {
    pub id: TxnId,
    /// Color inside the invocation that scheduled it; `None` for lock-based runs.
    pub color: Option<u32>,
    pub height: Option<Height>,
    pub outcome: Outcome,
    /// Round after which the transaction began its commit exchange.
    pub start: u64,
    /// Round at which it committed or aborted. Latency is measured from round 0.
    pub finish: u64,
}

/// Which part of a run a [`Segment`] covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentLabel {
    Whole,
    Bucket(u32),
    Cluster { level: Level, index: usize },
}

/// One invocation of the centralized scheduler.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: SegmentLabel,
    pub leader: ShardId,
    pub start: u64,
    pub phase_one_end: u64,
    pub end: u64,
    pub txns: Vec<TxnId>,
    pub colors: u32,
    /// Observed `k`, `l` and `d` of the scheduled transactions.
    pub max_accesses: usize,
    pub load: usize,
    pub reach: u32,
    /// `(start, end)` of each color window, colors ascending.
    pub windows: Vec<(u64, u64)>,
}

impl Segment {
    pub fn makespan(&self) -> u64 {
        self.end - self.start
    }

    pub fn phase_one_rounds(&self) -> u64 {
        self.phase_one_end - self.start
    }

    pub fn phase_two_rounds(&self) -> u64 {
        self.end - self.phase_one_end
    }
}

/// Lock ownership of one object by one transaction attempt, from the grant
/// at the destination to the release or unlock arriving there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockHold {
    pub object: ObjectId,
    pub txn: TxnId,
    pub from: u64,
    pub to: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub batch_size: usize,
    pub makespan: u64,
    pub records: BTreeMap<TxnId, TxnRecord>,
    pub messages: MessageLedger,
    /// Color windows executed, summed over all invocations.
    pub colors_used: u32,
    /// Rounds spent handing control between bucket leaders.
    pub handoff_rounds: u64,
    pub segments: Vec<Segment>,
    /// Local chain of every shard, in append order.
    pub chains: Vec<Vec<ChainEntry>>,
    pub lock_holds: Vec<LockHold>,
}

impl ExecutionReport {
    /// Transactions per round.
    pub fn throughput(&self) -> f64 {
        if self.makespan == 0 {
            0.0
        } else {
            self.batch_size as f64 / self.makespan as f64
        }
    }

    /// Mean finish round, every transaction injected at round 0.
    pub fn avg_latency(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.values().map(|r| r.finish as f64).sum::<f64>() / self.records.len() as f64
    }

    pub fn committed(&self) -> usize {
        self.records
            .values()
            .filter(|r| r.outcome == Outcome::Committed)
            .count()
    }

    /// Per-shard local chains.
    pub fn commit_log(&self) -> &[Vec<ChainEntry>] {
        &self.chains
    }
}

/// Checks a completed run against the safety properties every scheduler must
/// meet, returning one message per violation.
///
/// * conflicting committed transactions never overlap in their commit
///   intervals, and every shard they share orders them the same way;
/// * no object is ever held by two lock owners at once;
/// * when every transaction's condition holds, every one commits.
pub fn check_safety(batch: &[Transaction], report: &ExecutionReport) -> Vec<String> {
    let mut problems = Vec::new();

    if report.records.len() != batch.len() {
        problems.push(format!(
            "{} of {} transactions have a record",
            report.records.len(),
            batch.len()
        ));
    }
    for t in batch {
        match report.records.get(&t.id) {
            Some(r) if t.condition_ok() && r.outcome != Outcome::Committed => {
                problems.push(format!("{} should commit but aborted", t.id));
            }
            Some(r) if !t.condition_ok() && r.outcome == Outcome::Committed => {
                problems.push(format!("{} committed despite a failing condition", t.id));
            }
            Some(r) if r.finish > report.makespan => {
                problems.push(format!("{} finishes after the makespan", t.id));
            }
            None => problems.push(format!("{} has no record", t.id)),
            _ => {}
        }
    }

    // position of each transaction on each shard's chain
    let mut positions: Vec<HashMap<TxnId, usize>> = Vec::with_capacity(report.chains.len());
    for (shard, chain) in report.chains.iter().enumerate() {
        let mut at = HashMap::new();
        for (pos, entry) in chain.iter().enumerate() {
            if entry.object.owner().0 != shard {
                problems.push(format!(
                    "{} appended {} on S{} which does not own it",
                    entry.txn,
                    entry.object,
                    shard + 1
                ));
            }
            if let Some(r) = report.records.get(&entry.txn) {
                if r.outcome != Outcome::Committed {
                    problems.push(format!("aborted {} appears on S{}", entry.txn, shard + 1));
                }
            }
            at.insert(entry.txn, pos);
        }
        positions.push(at);
    }

    let committed: Vec<&Transaction> = batch
        .iter()
        .filter(|t| {
            report
                .records
                .get(&t.id)
                .is_some_and(|r| r.outcome == Outcome::Committed)
        })
        .collect();
    for (i, a) in committed.iter().enumerate() {
        for b in &committed[i + 1..] {
            if a.conflict_with(b).is_none() {
                continue;
            }
            let (ra, rb) = (&report.records[&a.id], &report.records[&b.id]);
            let a_first = ra.finish <= rb.start;
            if !a_first && rb.finish > ra.start {
                problems.push(format!(
                    "conflicting {} [{}, {}] and {} [{}, {}] overlap",
                    a.id, ra.start, ra.finish, b.id, rb.start, rb.finish
                ));
                continue;
            }
            for shard in a
                .destinations()
                .filter(|d| b.destinations().any(|e| e == *d))
            {
                let at = &positions[shard.0];
                match (at.get(&a.id), at.get(&b.id)) {
                    (Some(pa), Some(pb)) if (pa < pb) != a_first => problems.push(format!(
                        "{} orders {} and {} against their commit order",
                        shard, a.id, b.id
                    )),
                    (Some(_), Some(_)) => {}
                    _ => problems.push(format!(
                        "{} is missing {} or {} from its chain",
                        shard, a.id, b.id
                    )),
                }
            }
        }
    }

    let mut holds: BTreeMap<ObjectId, Vec<&LockHold>> = BTreeMap::new();
    for h in &report.lock_holds {
        holds.entry(h.object).or_default().push(h);
    }
    for (object, mut list) in holds {
        list.sort_by_key(|h| (h.from, h.to));
        for pair in list.windows(2) {
            if pair[1].from < pair[0].to {
                problems.push(format!(
                    "{} held by {} and {} at once (rounds {}..{} and {}..{})",
                    object,
                    pair[0].txn,
                    pair[1].txn,
                    pair[0].from,
                    pair[0].to,
                    pair[1].from,
                    pair[1].to
                ));
            }
        }
    }

    problems
}
