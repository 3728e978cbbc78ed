// SPDX-License-Identifier: Apache-2.0

//! Layered shard clusterings for the distributed scheduler.
//!
//! Layer `q` is a sparse cover whose clusters contain the
//! `(2^q - 1)`-neighborhood of every shard in at least one cluster. Each layer
//! is stored as a list of partitions (sublayers). Clusters are addressed by
//! their [`Level`] `(layer, sublayer)`, ordered lexicographically.
//!
//! Lines and grids are tiled with axis-aligned boxes. Layer 0 is the
//! partition into single shards. For `q ≥ 1` on a `g`-dimensional grid, with
//! `c = 2^(q+1)`, sublayer `j ∈ 0..=g` cuts every axis at the positions
//! congruent to `j·c` modulo `(g+1)·c`: the tiling of sublayer 0 shifted
//! diagonally by `j·c`. The cut positions of all sublayers are `c` apart along
//! each axis, so a box of side `2^(q+1) - 1` crosses at most one of them per
//! axis; with `g` axes and `g + 1` sublayers, some sublayer cuts none of them
//! and holds the whole box, hence the whole neighborhood. A line gets two
//! sublayers, a plane three. A far-end sliver narrower than `2^q` joins the
//! tile before it. Cliques collapse to a single cluster.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{ShardGraph, ShardId, TopologyKind};
use crate::workload::Transaction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Level {
    pub layer: u32,
    pub sublayer: u32,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.layer, self.sublayer)
    }
}

/// Scheduling priority of a transaction: its home cluster's level, then its
/// color inside that cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Height {
    pub level: Level,
    pub color: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub level: Level,
    /// Ascending.
    pub members: Vec<ShardId>,
    pub leader: ShardId,
}

impl Cluster {
    pub fn contains(&self, shard: ShardId) -> bool {
        self.members.binary_search(&shard).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterHierarchy {
    /// Number of layers, `⌈log₂ D⌉ + 1`.
    pub layers: u32,
    /// Sublayers per layer above layer 0.
    pub sublayers: u32,
    /// Axis count of the tiling; scales the diameter allowance.
    pub dimensions: u32,
    /// Sorted by level.
    pub clusters: Vec<Cluster>,
}

/// Radius a layer-`q` cluster must cover: `2^q - 1`.
pub fn cover_radius(layer: u32) -> u32 {
    (1u32 << layer) - 1
}

fn layer_count(diameter: u32) -> u32 {
    if diameter <= 1 {
        1
    } else {
        // ⌈log₂ D⌉ + 1
        (diameter - 1).ilog2() + 2
    }
}

/// Builds the hierarchy for a line, grid or clique.
pub fn build_hierarchy(g: &ShardGraph) -> Result<ClusterHierarchy> {
    match g.kind() {
        TopologyKind::Clique => {
            let members: Vec<ShardId> = g.shards().collect();
            Ok(ClusterHierarchy {
                layers: 1,
                sublayers: 1,
                dimensions: 1,
                clusters: vec![Cluster {
                    level: Level {
                        layer: 0,
                        sublayer: 0,
                    },
                    leader: members[0],
                    members,
                }],
            })
        }
        TopologyKind::Line | TopologyKind::Grid(_) => Ok(tile_hierarchy(g)),
        other => Err(Error::HierarchyUnsupported(other.to_string())),
    }
}

fn tile_hierarchy(g: &ShardGraph) -> ClusterHierarchy {
    let axes = g.axes().expect("line and grid have axes");
    let dims = axes.len() as u32;
    // a two-shard line still needs a layer above the singletons
    let layers = layer_count(g.diameter()).max(if g.shard_count() > 1 { 2 } else { 1 });
    let coords: Vec<Vec<usize>> = g.shards().map(|x| g.coords(x).unwrap()).collect();

    let mut clusters = Vec::new();
    for layer in 0..layers {
        let mut partitions: Vec<Vec<Vec<ShardId>>> = Vec::new();
        if layer == 0 {
            partitions.push(g.shards().map(|x| vec![x]).collect());
        } else {
            let c = 1i64 << (layer + 1);
            let period = (i64::from(dims) + 1) * c;
            for j in 0..=i64::from(dims) {
                let offset = j * c;
                let mut tiles: std::collections::BTreeMap<Vec<i64>, Vec<ShardId>> =
                    std::collections::BTreeMap::new();
                let tile = |p: usize, len: usize| {
                    let key = (p as i64 - offset).div_euclid(period);
                    let first = (-offset).div_euclid(period);
                    let last = (len as i64 - 1 - offset).div_euclid(period);
                    // a far-end sliver too thin to hold any member's
                    // neighborhood joins the tile before it
                    let sliver = len as i64 - (last * period + offset) < (1i64 << layer);
                    if key == last && last > first && sliver {
                        key - 1
                    } else {
                        key
                    }
                };
                for x in g.shards() {
                    let key = coords[x.0]
                        .iter()
                        .zip(&axes)
                        .map(|(&p, &len)| tile(p, len))
                        .collect();
                    tiles.entry(key).or_default().push(x);
                }
                let mut partition: Vec<Vec<ShardId>> = tiles.into_values().collect();
                partition.sort();
                if !partitions.contains(&partition) {
                    partitions.push(partition);
                }
            }
        }
        for (sublayer, partition) in partitions.into_iter().enumerate() {
            let level = Level {
                layer,
                sublayer: sublayer as u32,
            };
            for members in partition {
                let leader = pick_leader(g, &members, cover_radius(layer));
                clusters.push(Cluster {
                    level,
                    members,
                    leader,
                });
            }
        }
    }

    ClusterHierarchy {
        layers,
        sublayers: dims + 1,
        dimensions: dims,
        clusters,
    }
}

/// The member nearest the cluster's metric center among those whose
/// `radius`-neighborhood stays inside the cluster; ties go to the lowest
/// index.
fn pick_leader(g: &ShardGraph, members: &[ShardId], radius: u32) -> ShardId {
    let inside = |m: ShardId| {
        g.shards()
            .filter(|&x| g.dist(m, x) <= radius)
            .all(|x| members.binary_search(&x).is_ok())
    };
    let eccentricity = |m: ShardId| members.iter().map(|&x| g.dist(m, x)).max().unwrap_or(0);
    *members
        .iter()
        .min_by_key(|&&m| (!inside(m), eccentricity(m), m))
        .expect("clusters are non-empty")
}

impl ClusterHierarchy {
    /// Levels present, ascending.
    pub fn levels(&self) -> Vec<Level> {
        let mut levels: Vec<Level> = self.clusters.iter().map(|c| c.level).collect();
        levels.dedup();
        levels
    }

    pub fn clusters_at(&self, level: Level) -> impl Iterator<Item = (usize, &Cluster)> {
        self.clusters
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.level == level)
    }

    /// Index of the lowest-level cluster holding the transaction's home and
    /// every destination. The top layer always qualifies.
    pub fn home_cluster(&self, t: &Transaction) -> usize {
        self.clusters
            .iter()
            .position(|c| c.contains(t.home) && t.destinations().all(|d| c.contains(d)))
            .expect("top-layer cluster spans every shard")
    }

    /// Number of clusters of `layer` containing `shard`.
    pub fn participation(&self, shard: ShardId, layer: u32) -> usize {
        self.clusters
            .iter()
            .filter(|c| c.level.layer == layer && c.contains(shard))
            .count()
    }

    pub fn max_participation(&self, layer: u32, s: usize) -> usize {
        (0..s)
            .map(|x| self.participation(ShardId(x), layer))
            .max()
            .unwrap_or(0)
    }

    /// Allowed cluster diameter at `layer`: `g·2^q·(2·H₂ + 1)`. A full tile
    /// spans `2·H₂·2^q - 1` shards per axis, and a merged far-end sliver adds
    /// fewer than `2^q`.
    pub fn diameter_allowance(&self, layer: u32) -> u32 {
        self.dimensions * (1 << layer) * (2 * self.sublayers + 1)
    }
}

/// A broken sparse-cover property.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HierarchyViolation {
    /// A sublayer covers `shard` `count` times instead of once.
    NotPartition {
        level: Level,
        shard: ShardId,
        count: usize,
    },
    /// No layer-`layer` cluster holds the `(2^q - 1)`-neighborhood of `shard`.
    Coverage { shard: ShardId, layer: u32 },
    Participation {
        shard: ShardId,
        layer: u32,
        count: usize,
        allowed: usize,
    },
    Diameter {
        cluster: usize,
        diameter: u32,
        allowed: u32,
    },
    /// The leader's neighborhood leaves its cluster.
    Leader { cluster: usize, leader: ShardId },
    /// Layer above 0 whose single cluster is not the whole graph at the top.
    TopNotWhole,
}

impl fmt::Display for HierarchyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyViolation::NotPartition {
                level,
                shard,
                count,
            } => {
                write!(f, "sublayer {level} covers {shard} {count} times")
            }
            HierarchyViolation::Coverage { shard, layer } => write!(
                f,
                "no layer-{layer} cluster contains the {}-neighborhood of {shard}",
                cover_radius(*layer)
            ),
            HierarchyViolation::Participation {
                shard,
                layer,
                count,
                allowed,
            } => write!(
                f,
                "{shard} is in {count} layer-{layer} clusters (allowed {allowed})"
            ),
            HierarchyViolation::Diameter {
                cluster,
                diameter,
                allowed,
            } => write!(f, "cluster #{cluster} has diameter {diameter} > {allowed}"),
            HierarchyViolation::Leader { cluster, leader } => write!(
                f,
                "leader {leader} of cluster #{cluster} has its neighborhood outside the cluster"
            ),
            HierarchyViolation::TopNotWhole => f.write_str("top layer is not a single cluster"),
        }
    }
}

/// Checks partitioning, coverage, participation, diameter and leader
/// placement for every layer.
pub fn verify_hierarchy(h: &ClusterHierarchy, g: &ShardGraph) -> Vec<HierarchyViolation> {
    let s = g.shard_count();
    let mut violations = Vec::new();

    for level in h.levels() {
        let mut count = vec![0usize; s];
        for (_, c) in h.clusters_at(level) {
            for m in &c.members {
                count[m.0] += 1;
            }
        }
        for (x, &n) in count.iter().enumerate() {
            if n != 1 {
                violations.push(HierarchyViolation::NotPartition {
                    level,
                    shard: ShardId(x),
                    count: n,
                });
            }
        }
    }

    for layer in 0..h.layers {
        let radius = cover_radius(layer);
        let at_layer: Vec<(usize, &Cluster)> = h
            .clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.level.layer == layer)
            .collect();
        for x in g.shards() {
            let ball = g.neighborhood(x, radius);
            if !at_layer
                .iter()
                .any(|(_, c)| ball.iter().all(|&y| c.contains(y)))
            {
                violations.push(HierarchyViolation::Coverage { shard: x, layer });
            }
            let count = at_layer.iter().filter(|(_, c)| c.contains(x)).count();
            if count > h.sublayers as usize {
                violations.push(HierarchyViolation::Participation {
                    shard: x,
                    layer,
                    count,
                    allowed: h.sublayers as usize,
                });
            }
        }
        let allowed = h.diameter_allowance(layer);
        for &(index, c) in &at_layer {
            let diameter = c
                .members
                .iter()
                .flat_map(|&a| c.members.iter().map(move |&b| (a, b)))
                .map(|(a, b)| g.dist(a, b))
                .max()
                .unwrap_or(0);
            if diameter > allowed {
                violations.push(HierarchyViolation::Diameter {
                    cluster: index,
                    diameter,
                    allowed,
                });
            }
            let leader_ok = c.contains(c.leader)
                && g.neighborhood(c.leader, radius)
                    .iter()
                    .all(|&y| c.contains(y));
            if !leader_ok {
                violations.push(HierarchyViolation::Leader {
                    cluster: index,
                    leader: c.leader,
                });
            }
        }
    }

    let top = h.layers.saturating_sub(1);
    let top_whole = h
        .clusters
        .iter()
        .any(|c| c.level.layer == top && c.members.len() == s);
    if !top_whole {
        violations.push(HierarchyViolation::TopNotWhole);
    }

    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(range: std::ops::Range<usize>) -> Vec<ShardId> {
        range.map(ShardId).collect()
    }

    #[test]
    fn layer_counts() {
        assert_eq!(layer_count(0), 1);
        assert_eq!(layer_count(1), 1);
        assert_eq!(layer_count(2), 2);
        assert_eq!(layer_count(3), 3);
        assert_eq!(layer_count(4), 3);
        assert_eq!(layer_count(15), 5);
        assert_eq!(layer_count(16), 5);
        assert_eq!(layer_count(127), 8);
    }

    #[test]
    fn line_sixteen_layout() {
        let g = ShardGraph::line(16).unwrap();
        let h = build_hierarchy(&g).unwrap();
        assert_eq!(h.layers, 5);
        assert_eq!(h.sublayers, 2);

        let at = |layer, sublayer| -> Vec<Vec<ShardId>> {
            h.clusters_at(Level { layer, sublayer })
                .map(|(_, c)| c.members.clone())
                .collect()
        };
        assert_eq!(at(0, 0).len(), 16);
        assert_eq!(at(1, 0), vec![ids(0..8), ids(8..16)]);
        assert_eq!(at(1, 1), vec![ids(0..4), ids(4..12), ids(12..16)]);
        assert_eq!(at(2, 0), vec![ids(0..16)]);
        assert_eq!(at(2, 1), vec![ids(0..8), ids(8..16)]);
        // the top layer collapses to one partition
        assert_eq!(at(4, 0), vec![ids(0..16)]);
        assert!(at(4, 1).is_empty());
        assert!(
            verify_hierarchy(&h, &g).is_empty(),
            "{:?}",
            verify_hierarchy(&h, &g)
        );
    }

    #[test]
    fn clique_is_one_cluster() {
        let g = ShardGraph::clique(8).unwrap();
        let h = build_hierarchy(&g).unwrap();
        assert_eq!(h.clusters.len(), 1);
        assert_eq!(h.clusters[0].members.len(), 8);
        assert_eq!(h.clusters[0].leader, ShardId(0));
        assert!(verify_hierarchy(&h, &g).is_empty());
        assert_eq!(h.max_participation(0, 8), 1);
    }

    #[test]
    fn hypercube_rejected() {
        let g = ShardGraph::hypercube(8).unwrap();
        let err = build_hierarchy(&g).unwrap_err();
        assert!(err.to_string().contains("use central/bucket scheduler"));
    }

    #[test]
    fn deleted_cluster_breaks_coverage() {
        let g = ShardGraph::line(16).unwrap();
        let mut h = build_hierarchy(&g).unwrap();
        let victim = h
            .clusters
            .iter()
            .position(|c| c.level.layer == 0 && c.members == vec![ShardId(4)])
            .unwrap();
        h.clusters.remove(victim);
        let violations = verify_hierarchy(&h, &g);
        assert!(violations.contains(&HierarchyViolation::Coverage {
            shard: ShardId(4),
            layer: 0
        }));
        assert!(violations.iter().any(|v| matches!(
            v,
            HierarchyViolation::NotPartition {
                shard: ShardId(4),
                ..
            }
        )));
    }

    #[test]
    fn home_clusters() {
        let g = ShardGraph::line(16).unwrap();
        let h = build_hierarchy(&g).unwrap();
        // home S3 accessing S4
        let t = Transaction::writing(0, 2, &[3]);
        let c = &h.clusters[h.home_cluster(&t)];
        assert_eq!(
            c.level,
            Level {
                layer: 1,
                sublayer: 0
            }
        );
        assert!(c.contains(ShardId(2)) && c.contains(ShardId(3)));

        let local = Transaction::writing(1, 4, &[4]);
        let c = &h.clusters[h.home_cluster(&local)];
        assert_eq!(
            c.level,
            Level {
                layer: 0,
                sublayer: 0
            }
        );
        assert_eq!(c.members, vec![ShardId(4)]);

        // straddles the sublayer-0 cut between S8 and S9
        let t = Transaction::writing(2, 7, &[8]);
        assert_eq!(
            h.clusters[h.home_cluster(&t)].level,
            Level {
                layer: 1,
                sublayer: 1
            }
        );

        let clique = ShardGraph::clique(8).unwrap();
        let hc = build_hierarchy(&clique).unwrap();
        assert_eq!(hc.home_cluster(&Transaction::writing(0, 3, &[1, 6])), 0);
    }

    #[test]
    fn grids_cover_with_three_sublayers() {
        for dims in [[8usize, 8], [8, 16], [5, 7]] {
            let g = ShardGraph::grid(&dims).unwrap();
            let h = build_hierarchy(&g).unwrap();
            assert_eq!(h.sublayers, 3);
            let v = verify_hierarchy(&h, &g);
            assert!(
                v.is_empty(),
                "{dims:?}: {}",
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("; ")
            );
        }
    }

    #[test]
    fn lines_of_many_lengths_verify() {
        for s in [1, 2, 3, 16, 32, 64, 128] {
            let g = ShardGraph::line(s).unwrap();
            let h = build_hierarchy(&g).unwrap();
            let v = verify_hierarchy(&h, &g);
            assert!(v.is_empty(), "s={s}: {:?}", v);
            for layer in 0..h.layers {
                assert!(h.max_participation(layer, s) <= 2);
            }
        }
    }

    #[test]
    fn odd_sizes_verify() {
        let mut bad = Vec::new();
        for a in 1..=12 {
            for b in 1..=12 {
                let g = ShardGraph::grid(&[a, b]).unwrap();
                let h = build_hierarchy(&g).unwrap();
                let v = verify_hierarchy(&h, &g);
                if !v.is_empty() {
                    bad.push(format!("{a}x{b}: {}", v[0]));
                }
            }
        }
        for s in 1..=70 {
            let g = ShardGraph::line(s).unwrap();
            let v = verify_hierarchy(&build_hierarchy(&g).unwrap(), &g);
            if !v.is_empty() {
                bad.push(format!("line {s}: {}", v[0]));
            }
        }
        assert!(bad.is_empty(), "{}", bad.join("\n"));
    }

    #[test]
    fn heights_order_lexicographically() {
        let a = Height {
            level: Level {
                layer: 1,
                sublayer: 1,
            },
            color: 1,
        };
        let b = Height {
            level: Level {
                layer: 2,
                sublayer: 0,
            },
            color: 1,
        };
        let c = Height {
            level: Level {
                layer: 1,
                sublayer: 1,
            },
            color: 5,
        };
        assert!(a < c && c < b);
    }
}
