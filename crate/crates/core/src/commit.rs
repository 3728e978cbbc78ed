// SPDX-License-Identifier: Apache-2.0

//! Execution of color windows: the vote / confirm / commit exchange between
//! home and destination shards, with round and message accounting.
//!
//! A window holding transactions of one color occupies `4·d` rounds, where
//! `d` is the largest home-to-destination distance inside the window (at
//! least 1). Every logical inter-shard transfer counts as one message no
//! matter how far it travels; transfers from a shard to itself are free.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{ShardGraph, ShardId};
use crate::workload::{ObjectId, Transaction, TxnId};

/// Rounds per unit of distance in one color window (send, vote, confirm,
/// append).
pub const STEPS_PER_WINDOW: u64 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoundClock {
    now: u64,
}

impl RoundClock {
    pub fn at(now: u64) -> Self {
        RoundClock { now }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn advance(&mut self, rounds: u64) -> u64 {
        self.now += rounds;
        self.now
    }

    /// Moves the clock forward to `round`; earlier rounds are ignored.
    pub fn advance_to(&mut self, round: u64) {
        self.now = self.now.max(round);
    }
}

/// Message counts by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageLedger {
    pub subtxn_send: u64,
    pub vote: u64,
    pub confirm: u64,
    /// Leader collection, schedule distribution and bucket handoffs.
    pub control: u64,
    pub lock_request: u64,
    pub lock_grant: u64,
    pub lock_deny: u64,
    pub lock_release: u64,
    pub unlock: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    SubtxnSend,
    Vote,
    Confirm,
    Control,
    LockRequest,
    LockGrant,
    LockDeny,
    LockRelease,
    Unlock,
}

impl MessageLedger {
    pub fn total(&self) -> u64 {
        self.subtxn_send
            + self.vote
            + self.confirm
            + self.control
            + self.lock_request
            + self.lock_grant
            + self.lock_deny
            + self.lock_release
            + self.unlock
    }

    /// Counts one `kind` message from `from` to `to` unless they coincide.
    pub fn send(&mut self, kind: MessageKind, from: ShardId, to: ShardId) {
        if from != to {
            *self.slot(kind) += 1;
        }
    }

    fn slot(&mut self, kind: MessageKind) -> &mut u64 {
        match kind {
            MessageKind::SubtxnSend => &mut self.subtxn_send,
            MessageKind::Vote => &mut self.vote,
            MessageKind::Confirm => &mut self.confirm,
            MessageKind::Control => &mut self.control,
            MessageKind::LockRequest => &mut self.lock_request,
            MessageKind::LockGrant => &mut self.lock_grant,
            MessageKind::LockDeny => &mut self.lock_deny,
            MessageKind::LockRelease => &mut self.lock_release,
            MessageKind::Unlock => &mut self.unlock,
        }
    }
}

impl AddAssign for MessageLedger {
    fn add_assign(&mut self, rhs: Self) {
        self.subtxn_send += rhs.subtxn_send;
        self.vote += rhs.vote;
        self.confirm += rhs.confirm;
        self.control += rhs.control;
        self.lock_request += rhs.lock_request;
        self.lock_grant += rhs.lock_grant;
        self.lock_deny += rhs.lock_deny;
        self.lock_release += rhs.lock_release;
        self.unlock += rhs.unlock;
    }
}

/// A subtransaction appended to a shard's local chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub txn: TxnId,
    pub object: ObjectId,
    pub round: u64,
}

/// How long a color window lasts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSpan {
    /// `4·d_clr` with `d_clr` the largest distance among the window's
    /// transactions.
    #[default]
    PerColor,
    /// `4·d` for a fixed `d`, typically the batch-wide maximum distance.
    Fixed(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorWindowResult {
    /// Clock reading when the window opened; its first round is `start + 1`.
    pub start: u64,
    pub end: u64,
    pub distance: u32,
    pub rounds_used: u64,
    pub committed: Vec<TxnId>,
    pub aborted: Vec<TxnId>,
    pub messages: MessageLedger,
}

/// Shared execution substrate: one clock, one ledger and the per-shard local
/// chains of a run.
#[derive(Clone, Debug)]
pub struct CommitEngine<'g> {
    graph: &'g ShardGraph,
    span: WindowSpan,
    pub clock: RoundClock,
    pub ledger: MessageLedger,
    chains: Vec<Vec<ChainEntry>>,
}

impl<'g> CommitEngine<'g> {
    pub fn new(graph: &'g ShardGraph, span: WindowSpan) -> Self {
        Self::starting_at(graph, span, 0)
    }

    pub fn starting_at(graph: &'g ShardGraph, span: WindowSpan, round: u64) -> Self {
        CommitEngine {
            graph,
            span,
            clock: RoundClock::at(round),
            ledger: MessageLedger::default(),
            chains: vec![Vec::new(); graph.shard_count()],
        }
    }

    pub fn graph(&self) -> &'g ShardGraph {
        self.graph
    }

    pub fn span(&self) -> WindowSpan {
        self.span
    }

    pub fn chains(&self) -> &[Vec<ChainEntry>] {
        &self.chains
    }

    pub fn into_parts(self) -> (RoundClock, MessageLedger, Vec<Vec<ChainEntry>>) {
        (self.clock, self.ledger, self.chains)
    }

    /// Runs one color window over pairwise non-conflicting transactions.
    ///
    /// Homes send each subtransaction to its destination, destinations vote,
    /// homes confirm commit only if every vote was a commit, and destinations
    /// append committed subtransactions to their local chains at the window's
    /// last round.
    pub fn run_color_window(&mut self, txns: &[&Transaction]) -> Result<ColorWindowResult> {
        for (i, a) in txns.iter().enumerate() {
            for b in &txns[i + 1..] {
                if a.conflict_with(b).is_some() {
                    return Err(Error::ConflictInWindow(a.id, b.id));
                }
            }
        }

        let distance = match self.span {
            WindowSpan::PerColor => txns.iter().map(|t| t.reach(self.graph)).max().unwrap_or(0),
            WindowSpan::Fixed(d) => d,
        }
        .max(1);
        let start = self.clock.now();
        let rounds_used = STEPS_PER_WINDOW * u64::from(distance);
        let end = start + rounds_used;

        let mut messages = MessageLedger::default();
        let mut committed = Vec::new();
        let mut aborted = Vec::new();
        let mut ordered: Vec<&Transaction> = txns.to_vec();
        ordered.sort_by_key(|t| t.id);
        for t in ordered {
            for dest in t.destinations() {
                messages.send(MessageKind::SubtxnSend, t.home, dest);
                messages.send(MessageKind::Vote, dest, t.home);
                messages.send(MessageKind::Confirm, t.home, dest);
            }
            if t.condition_ok() {
                for a in &t.accesses {
                    self.chains[a.destination().0].push(ChainEntry {
                        txn: t.id,
                        object: a.object,
                        round: end,
                    });
                }
                committed.push(t.id);
            } else {
                aborted.push(t.id);
            }
        }

        self.clock.advance(rounds_used);
        self.ledger += messages;
        Ok(ColorWindowResult {
            start,
            end,
            distance,
            rounds_used,
            committed,
            aborted,
            messages,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{worked_example_batch, ObjectAccess};

    #[test]
    fn single_remote_window() {
        let g = ShardGraph::clique(4).unwrap();
        let batch = worked_example_batch();
        let mut engine = CommitEngine::starting_at(&g, WindowSpan::PerColor, 2);
        let window = engine.run_color_window(&[&batch[0]]).unwrap();
        // rounds 3..=6
        assert_eq!(window.start + 1, 3);
        assert_eq!(window.end, 6);
        assert_eq!(window.messages.total(), 6);
        assert_eq!(window.messages.subtxn_send, 2);
        assert_eq!(window.messages.vote, 2);
        assert_eq!(window.messages.confirm, 2);
        assert_eq!(window.committed, vec![TxnId(0)]);
        assert_eq!(engine.clock.now(), 6);
        assert_eq!(engine.chains()[1].len(), 1);
        assert_eq!(engine.chains()[2][0].round, 6);
    }

    #[test]
    fn local_window_costs_four_rounds_and_no_messages() {
        let g = ShardGraph::line(8).unwrap();
        let local = Transaction::writing(0, 3, &[3]);
        let mut engine = CommitEngine::new(&g, WindowSpan::PerColor);
        let window = engine.run_color_window(&[&local]).unwrap();
        assert_eq!(window.rounds_used, 4);
        assert_eq!(window.messages.total(), 0);
        assert_eq!(engine.chains()[3].len(), 1);
    }

    #[test]
    fn failing_condition_aborts_whole_transaction() {
        let g = ShardGraph::clique(4).unwrap();
        let mut bad = ObjectAccess::write(ObjectId(2));
        bad.valid = false;
        let t = Transaction::with_accesses(
            TxnId(0),
            ShardId(0),
            [ObjectAccess::write(ObjectId(1)), bad],
        );
        let mut engine = CommitEngine::new(&g, WindowSpan::PerColor);
        let window = engine.run_color_window(&[&t]).unwrap();
        assert_eq!(window.aborted, vec![TxnId(0)]);
        assert!(window.committed.is_empty());
        assert_eq!(window.rounds_used, 4);
        // votes and confirm-aborts are still exchanged
        assert_eq!(window.messages.total(), 6);
        assert!(engine.chains().iter().all(Vec::is_empty));
    }

    #[test]
    fn rejects_conflicting_window() {
        let g = ShardGraph::clique(4).unwrap();
        let batch = worked_example_batch();
        let mut engine = CommitEngine::new(&g, WindowSpan::PerColor);
        let err = engine
            .run_color_window(&[&batch[0], &batch[1]])
            .unwrap_err();
        assert!(matches!(err, Error::ConflictInWindow(TxnId(0), TxnId(1))));
        assert_eq!(engine.clock.now(), 0);
    }

    #[test]
    fn window_length_follows_distance() {
        let g = ShardGraph::line(16).unwrap();
        let near = Transaction::writing(0, 0, &[1]);
        let far = Transaction::writing(1, 10, &[15]);
        let mut engine = CommitEngine::new(&g, WindowSpan::PerColor);
        assert_eq!(
            engine.run_color_window(&[&near, &far]).unwrap().rounds_used,
            20
        );
        let mut fixed = CommitEngine::new(&g, WindowSpan::Fixed(15));
        assert_eq!(fixed.run_color_window(&[&near]).unwrap().rounds_used, 60);
    }

    #[test]
    fn all_commit_window_costs_three_messages_per_remote_subtransaction() {
        let g = ShardGraph::clique(16).unwrap();
        let txns: Vec<_> = (0..4)
            .map(|i| Transaction::writing(i, i, &[4 + 3 * i, 5 + 3 * i, 6 + 3 * i, i]))
            .collect();
        let refs: Vec<&Transaction> = txns.iter().collect();
        let remote: usize = txns.iter().map(Transaction::remote_accesses).sum();
        let mut engine = CommitEngine::new(&g, WindowSpan::PerColor);
        let window = engine.run_color_window(&refs).unwrap();
        assert_eq!(window.messages.total(), 3 * remote as u64);
        assert_eq!(engine.ledger, window.messages);
    }
}
