// SPDX-License-Identifier: Apache-2.0

//! Hierarchical scheduling: every transaction goes to the lowest cluster that
//! holds its home and destinations, and levels run in ascending order with a
//! barrier between them. Clusters of one level run concurrently.

use std::collections::BTreeMap;

use crate::cluster::{build_hierarchy, ClusterHierarchy, Height, Level};
use crate::commit::{CommitEngine, MessageLedger, WindowSpan};
use crate::error::Result;
use crate::report::{ExecutionReport, SegmentLabel};
use crate::sched::central::run_invocation;
use crate::topology::ShardGraph;
use crate::workload::Transaction;

pub fn schedule_distributed(g: &ShardGraph, batch: &[Transaction]) -> Result<ExecutionReport> {
    let h = build_hierarchy(g)?;
    schedule_on_hierarchy(g, &h, batch, WindowSpan::PerColor)
}

/// Runs the batch over a prebuilt hierarchy.
pub fn schedule_on_hierarchy(
    g: &ShardGraph,
    h: &ClusterHierarchy,
    batch: &[Transaction],
    span: WindowSpan,
) -> Result<ExecutionReport> {
    let mut levels: BTreeMap<Level, BTreeMap<usize, Vec<&Transaction>>> = BTreeMap::new();
    for t in batch {
        let index = h.home_cluster(t);
        levels
            .entry(h.clusters[index].level)
            .or_default()
            .entry(index)
            .or_default()
            .push(t);
    }

    let mut now = 0u64;
    let mut messages = MessageLedger::default();
    let mut chains = vec![Vec::new(); g.shard_count()];
    let mut records = BTreeMap::new();
    let mut segments = Vec::new();
    for (level, clusters) in levels {
        let level_start = now;
        for (index, mut txns) in clusters {
            txns.sort_by_key(|t| t.id);
            let mut engine = CommitEngine::starting_at(g, span, level_start);
            let mut local = BTreeMap::new();
            let label = SegmentLabel::Cluster { level, index };
            if let Some(segment) = run_invocation(
                &mut engine,
                &txns,
                h.clusters[index].leader,
                label,
                &mut local,
            )? {
                segments.push(segment);
            }
            let (clock, ledger, cluster_chains) = engine.into_parts();
            now = now.max(clock.now());
            messages += ledger;
            for (chain, entries) in chains.iter_mut().zip(cluster_chains) {
                chain.extend(entries);
            }
            for (id, mut record) in local {
                record.height = record.color.map(|color| Height { level, color });
                records.insert(id, record);
            }
        }
    }

    Ok(ExecutionReport {
        batch_size: batch.len(),
        makespan: now,
        records,
        messages,
        colors_used: segments.iter().map(|s| s.colors).sum(),
        handoff_rounds: 0,
        segments,
        chains,
        lock_holds: Vec::new(),
    })
}
