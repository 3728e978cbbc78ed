// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use crate::topology::ShardId;
use crate::workload::TxnId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("k = {k} exceeds the shard count s = {s}")]
    KTooLarge { k: usize, s: usize },

    #[error("k must be at least 1")]
    KZero,

    #[error("nearby access needs a line or grid topology, got {0}")]
    NearbyUnsupported(String),

    #[error("no grid axis is long enough for a window of {k} shards")]
    NearbyWindowTooLong { k: usize },

    #[error("abort probability {0} is outside [0, 1]")]
    BadAbortProbability(f64),

    #[error("coloring order is not a permutation of the conflict graph nodes")]
    NotPermutation,

    #[error("exact chromatic search supports at most {max} nodes, got {nodes}")]
    OracleTooLarge { nodes: usize, max: usize },

    #[error("transactions {0} and {1} conflict but were placed in the same color window")]
    ConflictInWindow(TxnId, TxnId),

    #[error("leader {leader} is not a shard of this graph (s = {s})")]
    UnknownLeader { leader: ShardId, s: usize },

    #[error("hierarchy not implemented for this topology ({0}); use central/bucket scheduler")]
    HierarchyUnsupported(String),

    #[error("lock-based run made no progress for {rounds} rounds (stalled at round {at})")]
    Livelock { rounds: u64, at: u64 },

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("no result rows to write")]
    EmptyRows,

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
