// SPDX-License-Identifier: Apache-2.0

//! Simulation of conflict-graph scheduling for cross-shard blockchain
//! transactions.
//!
//! Shards sit on a [`ShardGraph`]; a batch of [`Transaction`]s is turned into
//! a conflict graph, colored, and committed one color window at a time by a
//! centralized, bucketed or hierarchical scheduler. A wait-die two-phase
//! locking baseline runs on the same substrate for comparison, and the
//! [`experiment`] module sweeps parameters and audits bounds.

pub mod cluster;
pub mod coloring;
pub mod commit;
pub mod error;
pub mod experiment;
pub mod lock;
pub mod report;
pub mod sched;
pub mod topology;
pub mod workload;

pub use cluster::{build_hierarchy, verify_hierarchy, ClusterHierarchy, Height, Level};
pub use coloring::{
    chromatic_number, greedy_color, greedy_color_by_id, validate_coloring, Coloring,
};
pub use commit::{CommitEngine, MessageLedger, WindowSpan};
pub use error::{Error, Result};
pub use lock::schedule_lock_based;
pub use report::{check_safety, ExecutionReport, Outcome, TxnRecord};
pub use sched::{
    assign_buckets, schedule_bucketed, schedule_centralized, schedule_distributed, SchedulerKind,
};
pub use topology::{ShardGraph, ShardId, TopologyKind};
pub use workload::{
    build_conflict_graph, gen_nearby, gen_random, AccessCount, AccessPattern, ConflictGraph,
    ObjectId, Transaction, TxnId, WorkloadSpec,
};
