// SPDX-License-Identifier: Apache-2.0

//! Schedulers. Each turns a batch into an [`ExecutionReport`].

pub mod bucket;
pub mod central;
pub mod distributed;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lock::schedule_lock_based;
use crate::report::ExecutionReport;
use crate::topology::{ShardGraph, ShardId};
use crate::workload::Transaction;

pub use bucket::{assign_buckets, bucket_index, schedule_bucketed, Bucket};
pub use central::{makespan_upper_bound, schedule_centralized};
pub use distributed::schedule_distributed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Central,
    Bucket,
    Distributed,
    Lock2pl,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::Central,
        SchedulerKind::Bucket,
        SchedulerKind::Distributed,
        SchedulerKind::Lock2pl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Central => "central",
            SchedulerKind::Bucket => "bucket",
            SchedulerKind::Distributed => "distributed",
            SchedulerKind::Lock2pl => "lock2pl",
        }
    }

    /// Runs `batch` on `g`. The centralized scheduler leads from the first
    /// shard.
    pub fn run(self, g: &ShardGraph, batch: &[Transaction]) -> Result<ExecutionReport> {
        match self {
            SchedulerKind::Central => schedule_centralized(g, batch, ShardId(0)),
            SchedulerKind::Bucket => schedule_bucketed(g, batch),
            SchedulerKind::Distributed => schedule_distributed(g, batch),
            SchedulerKind::Lock2pl => schedule_lock_based(g, batch),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheduler `{s}`")))
    }
}
