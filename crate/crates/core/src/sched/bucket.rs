// SPDX-License-Identifier: Apache-2.0

//! Distance buckets: transactions whose farthest destination lies in
//! `[2^i, 2^(i+1))` form bucket `B_i`, and buckets run one after another
//! through the centralized scheduler, lowest index first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::commit::{CommitEngine, MessageKind, WindowSpan};
use crate::error::Result;
use crate::report::{ExecutionReport, SegmentLabel};
use crate::sched::central::{assemble, run_invocation};
use crate::topology::{ShardGraph, ShardId};
use crate::workload::{Transaction, TxnId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub index: u32,
    /// Ascending transaction ids.
    pub members: Vec<TxnId>,
    /// Home shard of the member with the smallest id.
    pub leader: ShardId,
}

/// Bucket of a transaction with reach `z`. Purely local transactions
/// (`z = 0`) share bucket 0 with `z = 1`.
pub fn bucket_index(z: u32) -> u32 {
    if z <= 1 {
        0
    } else {
        z.ilog2()
    }
}

/// Non-empty buckets, ascending by index.
pub fn assign_buckets(g: &ShardGraph, batch: &[Transaction]) -> Vec<Bucket> {
    let mut by_index: BTreeMap<u32, Vec<&Transaction>> = BTreeMap::new();
    for t in batch {
        by_index
            .entry(bucket_index(t.reach(g)))
            .or_default()
            .push(t);
    }
    by_index
        .into_iter()
        .map(|(index, mut txns)| {
            txns.sort_by_key(|t| t.id);
            Bucket {
                index,
                leader: txns[0].home,
                members: txns.iter().map(|t| t.id).collect(),
            }
        })
        .collect()
}

/// Runs each bucket through its own leader. When a bucket finishes, its
/// leader notifies the next bucket's leader, costing one control message
/// and their distance in rounds.
pub fn schedule_bucketed(g: &ShardGraph, batch: &[Transaction]) -> Result<ExecutionReport> {
    schedule_bucketed_with(g, batch, WindowSpan::PerColor)
}

pub fn schedule_bucketed_with(
    g: &ShardGraph,
    batch: &[Transaction],
    span: WindowSpan,
) -> Result<ExecutionReport> {
    let by_id: BTreeMap<TxnId, &Transaction> = batch.iter().map(|t| (t.id, t)).collect();
    let mut engine = CommitEngine::new(g, span);
    let mut records = BTreeMap::new();
    let mut segments = Vec::new();
    let mut handoff_rounds = 0;
    let mut previous: Option<ShardId> = None;
    for bucket in assign_buckets(g, batch) {
        if let Some(prev) = previous {
            let rounds = u64::from(g.dist(prev, bucket.leader));
            engine
                .ledger
                .send(MessageKind::Control, prev, bucket.leader);
            engine.clock.advance(rounds);
            handoff_rounds += rounds;
        }
        let txns: Vec<&Transaction> = bucket.members.iter().map(|id| by_id[id]).collect();
        let label = SegmentLabel::Bucket(bucket.index);
        if let Some(segment) =
            run_invocation(&mut engine, &txns, bucket.leader, label, &mut records)?
        {
            segments.push(segment);
        }
        previous = Some(bucket.leader);
    }
    Ok(assemble(
        batch.len(),
        engine,
        segments,
        records,
        handoff_rounds,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::check_safety;
    use crate::sched::central::{makespan_upper_bound, schedule_centralized};
    use crate::workload::{gen_random, AccessCount, AccessPattern, WorkloadSpec};

    #[test]
    fn bucket_indices() {
        assert_eq!(bucket_index(0), 0);
        assert_eq!(bucket_index(1), 0);
        assert_eq!(bucket_index(2), 1);
        assert_eq!(bucket_index(3), 1);
        assert_eq!(bucket_index(4), 2);
        assert_eq!(bucket_index(7), 2);
        assert_eq!(bucket_index(8), 3);
        assert_eq!(bucket_index(15), 3);
    }

    #[test]
    fn membership_by_distance() {
        let g = ShardGraph::line(16).unwrap();
        let near = Transaction::writing(0, 0, &[1]);
        let far = Transaction::writing(1, 0, &[4]);
        let buckets = assign_buckets(&g, &[near, far]);
        assert_eq!(buckets.len(), 2);
        assert_eq!(
            (buckets[0].index, buckets[0].members.clone()),
            (0, vec![TxnId(0)])
        );
        assert_eq!(
            (buckets[1].index, buckets[1].members.clone()),
            (2, vec![TxnId(1)])
        );
    }

    #[test]
    fn buckets_partition_the_batch() {
        let g = ShardGraph::line(16).unwrap();
        for seed in 0..20 {
            let batch = gen_random(&g, 3, seed).unwrap();
            let buckets = assign_buckets(&g, &batch);
            let mut all: Vec<TxnId> = buckets.iter().flat_map(|b| b.members.clone()).collect();
            all.sort();
            assert_eq!(all, batch.iter().map(|t| t.id).collect::<Vec<_>>());
            for b in &buckets {
                let lo = 1u32 << b.index;
                for id in &b.members {
                    let z = batch[id.0].reach(&g);
                    assert!(z < 2 * lo && (z >= lo || b.index == 0));
                }
                assert!(b.members.iter().any(|id| batch[id.0].home == b.leader));
            }
        }
    }

    #[test]
    fn single_bucket_matches_centralized() {
        let g = ShardGraph::line(16).unwrap();
        let batch: Vec<_> = (0..15)
            .map(|i| Transaction::writing(i, i, &[i, i + 1]))
            .collect();
        let bucketed = schedule_bucketed(&g, &batch).unwrap();
        let central = schedule_centralized(&g, &batch, ShardId(0)).unwrap();
        assert_eq!(bucketed.makespan, central.makespan);
        assert_eq!(bucketed.records, central.records);
        assert_eq!(bucketed.messages, central.messages);
    }

    #[test]
    fn buckets_compose_sequentially() {
        let g = ShardGraph::line(16).unwrap();
        let b0 = vec![
            Transaction::writing(0, 2, &[2, 3]),
            Transaction::writing(1, 3, &[3, 4]),
        ];
        let b2 = vec![
            Transaction::writing(2, 12, &[8, 12]),
            Transaction::writing(3, 9, &[9, 13]),
        ];
        let batch: Vec<_> = b0.iter().chain(&b2).cloned().collect();
        let report = schedule_bucketed(&g, &batch).unwrap();

        let alone0 = schedule_centralized(&g, &b0, ShardId(2)).unwrap();
        let alone2 = schedule_centralized(&g, &b2, ShardId(12)).unwrap();
        let handoff = u64::from(g.dist(ShardId(2), ShardId(12)));
        assert_eq!(report.handoff_rounds, handoff);
        assert_eq!(report.makespan, alone0.makespan + handoff + alone2.makespan);
        assert_eq!(
            report.messages.total(),
            alone0.messages.total() + 1 + alone2.messages.total()
        );
        assert!(check_safety(&batch, &report).is_empty());
    }

    #[test]
    fn nearby_pairs_stay_in_bucket_zero() {
        let g = ShardGraph::line(128).unwrap();
        let batch = WorkloadSpec::new(AccessPattern::Nearby, 2)
            .with_count(AccessCount::UpTo)
            .generate(&g, 3)
            .unwrap();
        let buckets = assign_buckets(&g, &batch);
        assert_eq!(buckets.len(), 1);
        assert_eq!(buckets[0].index, 0);
    }

    #[test]
    fn per_bucket_bounds() {
        let g = ShardGraph::line(64).unwrap();
        for seed in 0..10 {
            let batch = gen_random(&g, 4, seed).unwrap();
            let report = schedule_bucketed(&g, &batch).unwrap();
            for seg in &report.segments {
                let SegmentLabel::Bucket(i) = seg.label else {
                    unreachable!()
                };
                let bound = makespan_upper_bound(seg.max_accesses, seg.load, 1 << (i + 1));
                assert!(seg.phase_two_rounds() <= bound);
                let lower = (1u64 << i) as f64 + (seg.load * seg.load) as f64 / 8.0;
                assert!(seg.makespan() as f64 >= lower);
            }
            let accounted: u64 = report
                .segments
                .iter()
                .map(|s| s.phase_one_rounds() + s.windows.iter().map(|w| w.1 - w.0).sum::<u64>())
                .sum::<u64>()
                + report.handoff_rounds;
            assert_eq!(accounted, report.makespan);
            assert!(check_safety(&batch, &report).is_empty());
        }
    }
}
