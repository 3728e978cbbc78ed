// SPDX-License-Identifier: Apache-2.0

//! Centralized scheduling: a leader shard collects the batch, colors its
//! conflict graph and the homes then execute one color window per color.

use std::collections::{BTreeMap, BTreeSet};

use crate::coloring::greedy_color_by_id;
use crate::commit::{CommitEngine, MessageKind, WindowSpan, STEPS_PER_WINDOW};
use crate::error::{Error, Result};
use crate::report::{ExecutionReport, Outcome, Segment, SegmentLabel, TxnRecord};
use crate::topology::{ShardGraph, ShardId};
use crate::workload::{
    build_conflict_graph, max_accesses, max_object_load, max_reach, Transaction, TxnId,
};

/// Runs the whole batch through one leader. Phase 1 costs `2·max(1, d_up)`
/// rounds, `d_up` being the farthest home from the leader.
pub fn schedule_centralized(
    g: &ShardGraph,
    batch: &[Transaction],
    leader: ShardId,
) -> Result<ExecutionReport> {
    schedule_centralized_with(g, batch, leader, WindowSpan::PerColor)
}

pub fn schedule_centralized_with(
    g: &ShardGraph,
    batch: &[Transaction],
    leader: ShardId,
    span: WindowSpan,
) -> Result<ExecutionReport> {
    if !g.contains(leader) {
        return Err(Error::UnknownLeader {
            leader,
            s: g.shard_count(),
        });
    }
    let mut engine = CommitEngine::new(g, span);
    let mut records = BTreeMap::new();
    let txns: Vec<&Transaction> = batch.iter().collect();
    let segments = run_invocation(
        &mut engine,
        &txns,
        leader,
        SegmentLabel::Whole,
        &mut records,
    )?
    .into_iter()
    .collect();
    Ok(assemble(batch.len(), engine, segments, records, 0))
}

/// Phase-2 upper bound `4·d·(k·l + 1)`.
pub fn makespan_upper_bound(k: usize, l: usize, d: u32) -> u64 {
    STEPS_PER_WINDOW * u64::from(d) * (k as u64 * l as u64 + 1)
}

/// One invocation of the centralized scheduler on `engine`, starting at its
/// current clock. Returns `None` for an empty transaction set.
pub(crate) fn run_invocation(
    engine: &mut CommitEngine<'_>,
    txns: &[&Transaction],
    leader: ShardId,
    label: SegmentLabel,
    records: &mut BTreeMap<TxnId, TxnRecord>,
) -> Result<Option<Segment>> {
    if txns.is_empty() {
        return Ok(None);
    }
    let g = engine.graph();
    let start = engine.clock.now();

    // Phase 1: homes report to the leader, which colors and answers.
    let homes: BTreeSet<ShardId> = txns.iter().map(|t| t.home).collect();
    let d_up = homes
        .iter()
        .map(|&h| g.dist(h, leader))
        .max()
        .unwrap_or(0)
        .max(1);
    for &home in &homes {
        engine.ledger.send(MessageKind::Control, home, leader);
        engine.ledger.send(MessageKind::Control, leader, home);
    }
    engine.clock.advance(2 * u64::from(d_up));
    let phase_one_end = engine.clock.now();

    let cg = build_conflict_graph(txns.iter().copied());
    let coloring = greedy_color_by_id(&cg);
    let by_id: BTreeMap<TxnId, &Transaction> = txns.iter().map(|t| (t.id, *t)).collect();

    // Phase 2: one window per color, ascending.
    let mut windows = Vec::with_capacity(coloring.xi() as usize);
    for (c, class) in coloring.classes().into_iter().enumerate() {
        let members: Vec<&Transaction> = class.iter().map(|id| by_id[id]).collect();
        let window = engine.run_color_window(&members)?;
        for (ids, outcome) in [
            (&window.committed, Outcome::Committed),
            (&window.aborted, Outcome::Aborted),
        ] {
            for &id in ids {
                records.insert(
                    id,
                    TxnRecord {
                        id,
                        color: Some(c as u32 + 1),
                        height: None,
                        outcome,
                        start: window.start,
                        finish: window.end,
                    },
                );
            }
        }
        windows.push((window.start, window.end));
    }

    Ok(Some(Segment {
        label,
        leader,
        start,
        phase_one_end,
        end: engine.clock.now(),
        txns: txns.iter().map(|t| t.id).collect(),
        colors: coloring.xi(),
        max_accesses: max_accesses(txns.iter().copied()),
        load: max_object_load(txns.iter().copied()),
        reach: max_reach(g, txns.iter().copied()),
        windows,
    }))
}

pub(crate) fn assemble(
    batch_size: usize,
    engine: CommitEngine<'_>,
    segments: Vec<Segment>,
    records: BTreeMap<TxnId, TxnRecord>,
    handoff_rounds: u64,
) -> ExecutionReport {
    let (clock, messages, chains) = engine.into_parts();
    ExecutionReport {
        batch_size,
        makespan: clock.now(),
        records,
        messages,
        colors_used: segments.iter().map(|s| s.colors).sum(),
        handoff_rounds,
        segments,
        chains,
        lock_holds: Vec::new(),
    }
}
