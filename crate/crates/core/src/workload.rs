// SPDX-License-Identifier: Apache-2.0

//! Objects, transactions and the batch workloads fed to the schedulers.
//!
//! Every shard owns exactly one object (the object with the same index), so
//! an object access names its destination shard directly. Generated batches
//! hold one transaction per shard, homed at that shard, with the transaction
//! id equal to the home index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{ShardGraph, ShardId, TopologyKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxnId(pub usize);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub usize);

impl ObjectId {
    /// The shard holding this object.
    pub fn owner(self) -> ShardId {
        ShardId(self.0)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessMode {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectAccess {
    pub object: ObjectId,
    pub mode: AccessMode,
    /// Whether the destination shard will find this subtransaction valid.
    pub valid: bool,
}

impl ObjectAccess {
    pub fn write(object: ObjectId) -> Self {
        ObjectAccess {
            object,
            mode: AccessMode::Write,
            valid: true,
        }
    }

    pub fn read(object: ObjectId) -> Self {
        ObjectAccess {
            object,
            mode: AccessMode::Read,
            valid: true,
        }
    }

    pub fn destination(&self) -> ShardId {
        self.object.owner()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxnId,
    pub home: ShardId,
    /// Distinct objects, ascending.
    pub accesses: Vec<ObjectAccess>,
}

impl Transaction {
    /// A transaction writing every object in `objects`.
    pub fn writing(id: usize, home: usize, objects: &[usize]) -> Self {
        Self::with_accesses(
            TxnId(id),
            ShardId(home),
            objects.iter().map(|&o| ObjectAccess::write(ObjectId(o))),
        )
    }

    pub fn with_accesses(
        id: TxnId,
        home: ShardId,
        accesses: impl IntoIterator<Item = ObjectAccess>,
    ) -> Self {
        let mut by_object = BTreeMap::new();
        for access in accesses {
            by_object
                .entry(access.object)
                .and_modify(|prev: &mut ObjectAccess| {
                    if access.mode == AccessMode::Write {
                        prev.mode = AccessMode::Write;
                    }
                    prev.valid &= access.valid;
                })
                .or_insert(access);
        }
        Transaction {
            id,
            home,
            accesses: by_object.into_values().collect(),
        }
    }

    /// True when every destination will vote to commit.
    pub fn condition_ok(&self) -> bool {
        self.accesses.iter().all(|a| a.valid)
    }

    pub fn destinations(&self) -> impl Iterator<Item = ShardId> + '_ {
        self.accesses.iter().map(|a| a.destination())
    }

    /// Largest home-to-destination distance, `z(T)`. Zero for purely local
    /// transactions.
    pub fn reach(&self, g: &ShardGraph) -> u32 {
        self.destinations()
            .map(|d| g.dist(self.home, d))
            .max()
            .unwrap_or(0)
    }

    /// Destinations other than the home shard.
    pub fn remote_accesses(&self) -> usize {
        self.destinations().filter(|&d| d != self.home).count()
    }

    /// The shared object witnessing a conflict with `other`, if any: both
    /// access it and at least one of the two writes it.
    pub fn conflict_with(&self, other: &Transaction) -> Option<ObjectId> {
        let (mut i, mut j) = (0, 0);
        while i < self.accesses.len() && j < other.accesses.len() {
            let (a, b) = (&self.accesses[i], &other.accesses[j]);
            match a.object.cmp(&b.object) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if a.mode == AccessMode::Write || b.mode == AccessMode::Write {
                        return Some(a.object);
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        None
    }

    /// One subtransaction per accessed object.
    pub fn split(&self) -> Vec<SubTransaction> {
        self.accesses
            .iter()
            .map(|a| SubTransaction {
                parent: self.id,
                destination: a.destination(),
                object: a.object,
                mode: a.mode,
                valid: a.valid,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubTransaction {
    pub parent: TxnId,
    pub destination: ShardId,
    pub object: ObjectId,
    pub mode: AccessMode,
    pub valid: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessPattern {
    Random,
    Nearby,
}

impl fmt::Display for AccessPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessPattern::Random => "random",
            AccessPattern::Nearby => "nearby",
        })
    }
}

impl FromStr for AccessPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random" => Ok(AccessPattern::Random),
            "nearby" => Ok(AccessPattern::Nearby),
            other => Err(Error::InvalidConfig(format!(
                "unknown access pattern `{other}` (expected random or nearby)"
            ))),
        }
    }
}

/// How many objects each generated transaction touches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessCount {
    /// Exactly `k` objects.
    #[default]
    #[serde(rename = "exact")]
    Exactly,
    /// A uniform count in `1..=k`.
    #[serde(rename = "upto")]
    UpTo,
}

impl fmt::Display for AccessCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessCount::Exactly => "exact",
            AccessCount::UpTo => "upto",
        })
    }
}

impl FromStr for AccessCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" | "exactly" => Ok(AccessCount::Exactly),
            "upto" | "up-to" => Ok(AccessCount::UpTo),
            other => Err(Error::InvalidConfig(format!(
                "unknown access count `{other}` (expected exact or upto)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub pattern: AccessPattern,
    pub k: usize,
    pub count: AccessCount,
    /// Probability that a transaction carries one failing subtransaction.
    pub abort_probability: f64,
}

impl WorkloadSpec {
    pub fn new(pattern: AccessPattern, k: usize) -> Self {
        WorkloadSpec {
            pattern,
            k,
            count: AccessCount::Exactly,
            abort_probability: 0.0,
        }
    }

    pub fn with_count(mut self, count: AccessCount) -> Self {
        self.count = count;
        self
    }

    pub fn with_abort_probability(mut self, p: f64) -> Self {
        self.abort_probability = p;
        self
    }

    /// One transaction per shard, deterministic in `seed`.
    pub fn generate(&self, g: &ShardGraph, seed: u64) -> Result<Vec<Transaction>> {
        let s = g.shard_count();
        if self.k == 0 {
            return Err(Error::KZero);
        }
        if self.k > s {
            return Err(Error::KTooLarge { k: self.k, s });
        }
        if !(0.0..=1.0).contains(&self.abort_probability) {
            return Err(Error::BadAbortProbability(self.abort_probability));
        }
        let axes = match self.pattern {
            AccessPattern::Random => Vec::new(),
            AccessPattern::Nearby => {
                if !matches!(g.kind(), TopologyKind::Line | TopologyKind::Grid(_)) {
                    return Err(Error::NearbyUnsupported(g.kind().to_string()));
                }
                let axes = g.axes().expect("line and grid have axes");
                if axes.iter().all(|&len| len < self.k) {
                    return Err(Error::NearbyWindowTooLong { k: self.k });
                }
                axes
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool: Vec<usize> = (0..s).collect();
        let mut batch = Vec::with_capacity(s);
        for home in g.shards() {
            let n = match self.count {
                AccessCount::Exactly => self.k,
                AccessCount::UpTo => rng.gen_range(1..=self.k),
            };
            let objects: Vec<usize> = match self.pattern {
                AccessPattern::Random => {
                    let (chosen, _) = pool.partial_shuffle(&mut rng, n);
                    chosen.to_vec()
                }
                AccessPattern::Nearby => nearby_window(g, &axes, home, n, &mut rng),
            };
            let mut accesses: Vec<ObjectAccess> = objects
                .into_iter()
                .map(|o| ObjectAccess::write(ObjectId(o)))
                .collect();
            accesses.sort_by_key(|a| a.object);
            if self.abort_probability > 0.0 && rng.gen_bool(self.abort_probability) {
                let victim = rng.gen_range(0..accesses.len());
                accesses[victim].valid = false;
            }
            batch.push(Transaction {
                id: TxnId(home.0),
                home,
                accesses,
            });
        }
        Ok(batch)
    }
}

/// `n` consecutive shards along one axis, containing `home`. Windows that
/// would run past an end of the axis are pulled back inside.
fn nearby_window(
    g: &ShardGraph,
    axes: &[usize],
    home: ShardId,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let fitting: Vec<usize> = (0..axes.len()).filter(|&a| axes[a] >= n).collect();
    let axis = if fitting.len() == 1 {
        fitting[0]
    } else {
        fitting[rng.gen_range(0..fitting.len())]
    };
    let coords = g.coords(home).expect("line and grid have coordinates");
    let pos = coords[axis];
    let earliest = (pos + 1).saturating_sub(n);
    let start = rng.gen_range(earliest..=pos).min(axes[axis] - n);
    (start..start + n)
        .map(|c| {
            let mut at = coords.clone();
            at[axis] = c;
            g.shard_at(&at).expect("window stays on the grid").0
        })
        .collect()
}

/// Random-access batch: each transaction picks exactly `k` distinct objects
/// uniformly from all `s` (its own shard's object included).
pub fn gen_random(g: &ShardGraph, k: usize, seed: u64) -> Result<Vec<Transaction>> {
    WorkloadSpec::new(AccessPattern::Random, k).generate(g, seed)
}

/// Nearby-access batch: each transaction accesses a window of `k`
/// consecutive shards around its home.
pub fn gen_nearby(g: &ShardGraph, k: usize, seed: u64) -> Result<Vec<Transaction>> {
    WorkloadSpec::new(AccessPattern::Nearby, k).generate(g, seed)
}

/// Interference graph of a batch. Node `i` is the `i`-th transaction given
/// to [`ConflictGraph::build`].
#[derive(Clone, Debug)]
pub struct ConflictGraph {
    ids: Vec<TxnId>,
    adj: Vec<Vec<usize>>,
    witness: BTreeMap<(usize, usize), ObjectId>,
}

impl ConflictGraph {
    pub fn build<'a>(batch: impl IntoIterator<Item = &'a Transaction>) -> Self {
        let txns: Vec<&Transaction> = batch.into_iter().collect();
        let ids: Vec<TxnId> = txns.iter().map(|t| t.id).collect();
        // object -> (node, writes?)
        let mut users: BTreeMap<ObjectId, Vec<(usize, bool)>> = BTreeMap::new();
        for (node, t) in txns.iter().enumerate() {
            for a in &t.accesses {
                users
                    .entry(a.object)
                    .or_default()
                    .push((node, a.mode == AccessMode::Write));
            }
        }
        let mut witness = BTreeMap::new();
        for (&object, list) in &users {
            for (x, &(a, wa)) in list.iter().enumerate() {
                for &(b, wb) in &list[x + 1..] {
                    if (wa || wb) && a != b {
                        witness.entry((a.min(b), a.max(b))).or_insert(object);
                    }
                }
            }
        }
        let mut adj = vec![Vec::new(); ids.len()];
        for &(a, b) in witness.keys() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        ConflictGraph { ids, adj, witness }
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.witness.len()
    }

    pub fn ids(&self) -> &[TxnId] {
        &self.ids
    }

    pub fn node_of(&self, id: TxnId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: TxnId, b: TxnId) -> bool {
        match (self.node_of(a), self.node_of(b)) {
            (Some(x), Some(y)) => self.witness.contains_key(&(x.min(y), x.max(y))),
            _ => false,
        }
    }

    /// Edges as `(lower node, higher node, shared object)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, ObjectId)> + '_ {
        self.witness.iter().map(|(&(a, b), &o)| (a, b, o))
    }

    /// Edges by transaction id, each with the object witnessing the conflict.
    pub fn edge_ids(&self) -> Vec<(TxnId, TxnId, ObjectId)> {
        self.edges()
            .map(|(a, b, o)| (self.ids[a], self.ids[b], o))
            .collect()
    }
}

pub fn build_conflict_graph<'a>(batch: impl IntoIterator<Item = &'a Transaction>) -> ConflictGraph {
    ConflictGraph::build(batch)
}

/// Number of transactions accessing each object.
pub fn object_loads<'a>(
    batch: impl IntoIterator<Item = &'a Transaction>,
) -> BTreeMap<ObjectId, usize> {
    let mut loads = BTreeMap::new();
    for t in batch {
        for a in &t.accesses {
            *loads.entry(a.object).or_insert(0) += 1;
        }
    }
    loads
}

/// `l`: the largest number of transactions accessing any single object.
pub fn max_object_load<'a>(batch: impl IntoIterator<Item = &'a Transaction>) -> usize {
    object_loads(batch).into_values().max().unwrap_or(0)
}

/// Largest access count in the batch (`k` as observed).
pub fn max_accesses<'a>(batch: impl IntoIterator<Item = &'a Transaction>) -> usize {
    batch
        .into_iter()
        .map(|t| t.accesses.len())
        .max()
        .unwrap_or(0)
}

/// Largest home-to-object distance in the batch (`d` as observed).
pub fn max_reach<'a>(g: &ShardGraph, batch: impl IntoIterator<Item = &'a Transaction>) -> u32 {
    batch.into_iter().map(|t| t.reach(g)).max().unwrap_or(0)
}

/// Four transactions on four shards, each homed at its own shard: `T1` writes
/// the objects on `S2,S3`, `T2` on `S2,S4`, `T3` on `S1,S3` and `T4` on
/// `S3,S4`.
pub fn worked_example_batch() -> Vec<Transaction> {
    vec![
        Transaction::writing(0, 0, &[1, 2]),
        Transaction::writing(1, 1, &[1, 3]),
        Transaction::writing(2, 2, &[0, 2]),
        Transaction::writing(3, 3, &[2, 3]),
    ]
}

/// Transactions grouped by the written objects they share, each group being a
/// clique of the conflict graph.
pub fn writer_groups<'a>(
    batch: impl IntoIterator<Item = &'a Transaction>,
) -> BTreeMap<ObjectId, BTreeSet<TxnId>> {
    let mut groups: BTreeMap<ObjectId, BTreeSet<TxnId>> = BTreeMap::new();
    for t in batch {
        for a in t.accesses.iter().filter(|a| a.mode == AccessMode::Write) {
            groups.entry(a.object).or_default().insert(t.id);
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn random_batches_are_deterministic() {
        let g = ShardGraph::clique(16).unwrap();
        assert_eq!(gen_random(&g, 2, 7).unwrap(), gen_random(&g, 2, 7).unwrap());
        assert_ne!(gen_random(&g, 2, 7).unwrap(), gen_random(&g, 2, 8).unwrap());
    }

    #[test]
    fn random_batch_shape() {
        let g = ShardGraph::line(32).unwrap();
        for k in [1, 2, 4, 8] {
            let batch = gen_random(&g, k, 3).unwrap();
            assert_eq!(batch.len(), 32);
            for (i, t) in batch.iter().enumerate() {
                assert_eq!(t.home, ShardId(i));
                assert_eq!(t.id, TxnId(i));
                assert_eq!(t.accesses.len(), k);
                assert!(t.condition_ok());
                assert!(t.accesses.windows(2).all(|w| w[0].object < w[1].object));
            }
        }
    }

    #[test]
    fn full_access_forces_complete_conflict_graph() {
        let g = ShardGraph::clique(4).unwrap();
        let batch = gen_random(&g, 4, 99).unwrap();
        assert!(batch.iter().all(|t| t.accesses.len() == 4));
        assert_eq!(build_conflict_graph(&batch).edge_count(), 6);
    }

    #[test]
    fn k_above_s_rejected() {
        let g = ShardGraph::clique(4).unwrap();
        assert!(matches!(
            gen_random(&g, 5, 0),
            Err(Error::KTooLarge { k: 5, s: 4 })
        ));
        assert!(matches!(
            gen_nearby(&ShardGraph::line(4).unwrap(), 5, 0),
            Err(Error::KTooLarge { .. })
        ));
        assert!(matches!(gen_random(&g, 0, 0), Err(Error::KZero)));
    }

    #[test]
    fn up_to_k_counts_stay_in_range() {
        let g = ShardGraph::clique(64).unwrap();
        let spec = WorkloadSpec::new(AccessPattern::Random, 8).with_count(AccessCount::UpTo);
        let batch = spec.generate(&g, 5).unwrap();
        let sizes: BTreeSet<usize> = batch.iter().map(|t| t.accesses.len()).collect();
        assert!(sizes.iter().all(|&n| (1..=8).contains(&n)));
        assert!(sizes.len() > 1);
    }

    #[test]
    fn nearby_pairs_on_line() {
        let g = ShardGraph::line(64).unwrap();
        let mut seen = BTreeSet::new();
        for seed in 0..40 {
            let batch = gen_nearby(&g, 2, seed).unwrap();
            // S30 is index 29
            let t = &batch[29];
            let objs: Vec<usize> = t.accesses.iter().map(|a| a.object.0).collect();
            assert!(objs == vec![28, 29] || objs == vec![29, 30], "{objs:?}");
            seen.insert(objs);
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn nearby_span_is_k_minus_one() {
        let g = ShardGraph::line(64).unwrap();
        for seed in 0..5 {
            for t in gen_nearby(&g, 4, seed).unwrap() {
                let lo = t.accesses.first().unwrap().object.0;
                let hi = t.accesses.last().unwrap().object.0;
                assert_eq!(hi - lo, 3);
                assert!((lo..=hi).contains(&t.home.0));
            }
        }
    }

    #[test]
    fn nearby_single_object_is_own_shard() {
        let g = ShardGraph::line(16).unwrap();
        let batch = gen_nearby(&g, 1, 4).unwrap();
        assert!(batch
            .iter()
            .all(|t| t.accesses.len() == 1 && t.reach(&g) == 0));
        assert_eq!(build_conflict_graph(&batch).edge_count(), 0);
    }

    #[test]
    fn nearby_on_grid_and_rejections() {
        let g = ShardGraph::grid(&[8, 8]).unwrap();
        for t in gen_nearby(&g, 4, 1).unwrap() {
            assert!(t.reach(&g) <= 3);
            assert_eq!(t.accesses.len(), 4);
        }
        let clique = ShardGraph::clique(8).unwrap();
        assert!(matches!(
            gen_nearby(&clique, 2, 0),
            Err(Error::NearbyUnsupported(_))
        ));
        let narrow = ShardGraph::grid(&[3, 3]).unwrap();
        assert!(matches!(
            gen_nearby(&narrow, 4, 0),
            Err(Error::NearbyWindowTooLong { k: 4 })
        ));
    }

    #[test]
    fn worked_example_conflicts() {
        let batch = worked_example_batch();
        let cg = build_conflict_graph(&batch);
        let edges: BTreeSet<(usize, usize)> =
            cg.edge_ids().iter().map(|&(a, b, _)| (a.0, b.0)).collect();
        let expected: BTreeSet<(usize, usize)> = [(0, 1), (0, 2), (0, 3), (2, 3), (1, 3)]
            .into_iter()
            .collect();
        assert_eq!(edges, expected);
        assert!(!cg.has_edge(TxnId(1), TxnId(2)));
        assert_eq!(max_object_load(&batch), 3);
        assert_eq!(object_loads(&batch)[&ObjectId(2)], 3);
    }

    #[test]
    fn reads_do_not_conflict() {
        let a = Transaction::with_accesses(TxnId(0), ShardId(0), [ObjectAccess::read(ObjectId(1))]);
        let b = Transaction::with_accesses(TxnId(1), ShardId(1), [ObjectAccess::read(ObjectId(1))]);
        let c =
            Transaction::with_accesses(TxnId(2), ShardId(2), [ObjectAccess::write(ObjectId(1))]);
        assert_eq!(build_conflict_graph([&a, &b]).edge_count(), 0);
        let cg = build_conflict_graph([&a, &b, &c]);
        assert_eq!(cg.edge_count(), 2);
        assert_eq!(a.conflict_with(&c), Some(ObjectId(1)));
    }

    #[test]
    fn disjoint_batch() {
        let batch: Vec<_> = (0..6).map(|i| Transaction::writing(i, i, &[i])).collect();
        assert_eq!(build_conflict_graph(&batch).edge_count(), 0);
        assert_eq!(max_object_load(&batch), 1);
    }

    #[test]
    fn load_matches_recount() {
        let g = ShardGraph::clique(16).unwrap();
        let batch = gen_random(&g, 4, 11).unwrap();
        // independent tally straight over the raw access lists
        let mut best = 0;
        for o in 0..16 {
            let count = batch
                .iter()
                .filter(|t| t.accesses.iter().any(|a| a.object.0 == o))
                .count();
            best = best.max(count);
        }
        assert_eq!(max_object_load(&batch), best);
    }

    #[test]
    fn split_into_subtransactions() {
        let t1 = &worked_example_batch()[0];
        let subs = t1.split();
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].destination, ShardId(1));
        assert_eq!(subs[1].destination, ShardId(2));
        assert!(subs.iter().all(|s| s.parent == TxnId(0)));

        let g = ShardGraph::clique(4).unwrap();
        let local = Transaction::writing(4, 2, &[2]);
        let subs = local.split();
        assert_eq!(subs.len(), 1);
        assert_eq!(g.dist(local.home, subs[0].destination), 0);

        // a transfer touching three accounts
        let transfer = Transaction::writing(5, 0, &[0, 1, 3]);
        assert_eq!(transfer.split().len(), 3);
    }

    #[test]
    fn abort_knob_marks_one_access() {
        let g = ShardGraph::clique(32).unwrap();
        let spec = WorkloadSpec::new(AccessPattern::Random, 3).with_abort_probability(1.0);
        for t in spec.generate(&g, 1).unwrap() {
            assert_eq!(t.accesses.iter().filter(|a| !a.valid).count(), 1);
            assert!(!t.condition_ok());
        }
        assert!(WorkloadSpec::new(AccessPattern::Random, 3)
            .with_abort_probability(1.5)
            .generate(&g, 1)
            .is_err());
    }

    proptest! {
        #[test]
        fn conflict_graph_invariants(s in 2usize..40, k in 1usize..6, seed in any::<u64>(), nearby in any::<bool>()) {
            let k = k.min(s);
            let g = ShardGraph::line(s).unwrap();
            let pattern = if nearby { AccessPattern::Nearby } else { AccessPattern::Random };
            let spec = WorkloadSpec::new(pattern, k).with_count(AccessCount::UpTo);
            let batch = spec.generate(&g, seed).unwrap();
            prop_assert_eq!(&batch, &spec.generate(&g, seed).unwrap());
            let cg = build_conflict_graph(&batch);
            let l = max_object_load(&batch);
            prop_assert!(cg.max_degree() <= k * l);
            for group in writer_groups(&batch).values() {
                for a in group {
                    for b in group {
                        if a != b {
                            prop_assert!(cg.has_edge(*a, *b));
                        }
                    }
                }
            }
            // edges are exactly the pairs with a conflict witness
            for (i, a) in batch.iter().enumerate() {
                for b in &batch[i + 1..] {
                    prop_assert_eq!(cg.has_edge(a.id, b.id), a.conflict_with(b).is_some());
                }
            }
        }
    }
}
