// SPDX-License-Identifier: Apache-2.0

//! Weighted shard graphs.
//!
//! Every topology is stored through its shortest-path metric as a dense
//! `s × s` matrix of round distances. Generated graphs are connected, so every
//! off-diagonal entry is a positive integer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest shard count accepted by [`ShardGraph::build`].
pub const MAX_SHARDS: usize = 1024;

/// Zero-based shard index. Displayed one-based (`S1` is index 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ShardId(pub usize);

impl ShardId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ShardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0 + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    Clique,
    Line,
    Hypercube,
    /// Axis lengths, outermost first. Manhattan metric, no wraparound.
    Grid(Vec<usize>),
}

impl TopologyKind {
    pub fn name(&self) -> &'static str {
        match self {
            TopologyKind::Clique => "clique",
            TopologyKind::Line => "line",
            TopologyKind::Hypercube => "hypercube",
            TopologyKind::Grid(_) => "grid",
        }
    }

    /// Shard count implied by the kind itself, if any.
    pub fn implied_shards(&self) -> Option<usize> {
        match self {
            TopologyKind::Grid(dims) => Some(dims.iter().product()),
            _ => None,
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyKind::Grid(dims) => {
                let dims: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
                write!(f, "grid:{}", dims.join("x"))
            }
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "clique" => Ok(TopologyKind::Clique),
            "line" => Ok(TopologyKind::Line),
            "hypercube" => Ok(TopologyKind::Hypercube),
            _ => {
                let Some(dims) = s.strip_prefix("grid:") else {
                    return Err(Error::InvalidTopology(format!(
                        "unknown topology `{s}` (expected clique, line, hypercube or grid:<d1>x<d2>...)"
                    )));
                };
                let dims = dims
                    .split('x')
                    .map(|d| {
                        d.trim().parse::<usize>().map_err(|_| {
                            Error::InvalidTopology(format!("bad grid dimension `{d}` in `{s}`"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if dims.is_empty() || dims.contains(&0) {
                    return Err(Error::InvalidTopology(format!(
                        "grid dimensions must be positive in `{s}`"
                    )));
                }
                Ok(TopologyKind::Grid(dims))
            }
        }
    }
}

impl Serialize for TopologyKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TopologyKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// A shard topology with all-pairs round distances. Immutable once built.
#[derive(Clone, Debug)]
pub struct ShardGraph {
    kind: TopologyKind,
    s: usize,
    dist: Vec<u32>,
    diameter: u32,
}

impl ShardGraph {
    /// Builds the graph for `kind` over `s` shards.
    ///
    /// Hypercubes need `s` to be a power of two and grids need the product of
    /// their dimensions to equal `s`.
    pub fn build(kind: TopologyKind, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidTopology("s must be at least 1".into()));
        }
        if s > MAX_SHARDS {
            return Err(Error::InvalidTopology(format!(
                "s = {s} exceeds the supported maximum of {MAX_SHARDS}"
            )));
        }
        let metric: Box<dyn Fn(usize, usize) -> u32> = match &kind {
            TopologyKind::Clique => Box::new(|a, b| u32::from(a != b)),
            TopologyKind::Line => Box::new(|a: usize, b: usize| a.abs_diff(b) as u32),
            TopologyKind::Hypercube => {
                if !s.is_power_of_two() {
                    return Err(Error::InvalidTopology(format!(
                        "hypercube requires s to be a power of two, got {s}"
                    )));
                }
                Box::new(|a: usize, b: usize| (a ^ b).count_ones())
            }
            TopologyKind::Grid(dims) => {
                let product: usize = dims.iter().product();
                if product != s {
                    return Err(Error::InvalidTopology(format!(
                        "grid {} has {product} shards but s = {s}",
                        kind
                    )));
                }
                let dims = dims.clone();
                Box::new(move |a, b| {
                    let (ca, cb) = (grid_coords(&dims, a), grid_coords(&dims, b));
                    ca.iter().zip(&cb).map(|(x, y)| x.abs_diff(*y) as u32).sum()
                })
            }
        };

        let mut dist = vec![0u32; s * s];
        let mut diameter = 0;
        for a in 0..s {
            for b in 0..s {
                let d = metric(a, b);
                dist[a * s + b] = d;
                diameter = diameter.max(d);
            }
        }
        Ok(ShardGraph {
            kind,
            s,
            dist,
            diameter,
        })
    }

    pub fn clique(s: usize) -> Result<Self> {
        Self::build(TopologyKind::Clique, s)
    }

    pub fn line(s: usize) -> Result<Self> {
        Self::build(TopologyKind::Line, s)
    }

    pub fn hypercube(s: usize) -> Result<Self> {
        Self::build(TopologyKind::Hypercube, s)
    }

    pub fn grid(dims: &[usize]) -> Result<Self> {
        let s = dims.iter().product();
        Self::build(TopologyKind::Grid(dims.to_vec()), s)
    }

    pub fn kind(&self) -> &TopologyKind {
        &self.kind
    }

    pub fn shard_count(&self) -> usize {
        self.s
    }

    pub fn shards(&self) -> impl Iterator<Item = ShardId> {
        (0..self.s).map(ShardId)
    }

    pub fn contains(&self, shard: ShardId) -> bool {
        shard.0 < self.s
    }

    #[inline]
    pub fn dist(&self, a: ShardId, b: ShardId) -> u32 {
        self.dist[a.0 * self.s + b.0]
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    /// Shards within `z` rounds of `center`, ascending.
    pub fn neighborhood(&self, center: ShardId, z: u32) -> Vec<ShardId> {
        self.shards()
            .filter(|&x| self.dist(center, x) <= z)
            .collect()
    }

    /// Grid coordinates of a shard. Lines behave as one-dimensional grids.
    pub fn coords(&self, shard: ShardId) -> Option<Vec<usize>> {
        match &self.kind {
            TopologyKind::Grid(dims) => Some(grid_coords(dims, shard.0)),
            TopologyKind::Line => Some(vec![shard.0]),
            _ => None,
        }
    }

    /// Axis lengths for lines and grids.
    pub fn axes(&self) -> Option<Vec<usize>> {
        match &self.kind {
            TopologyKind::Grid(dims) => Some(dims.clone()),
            TopologyKind::Line => Some(vec![self.s]),
            _ => None,
        }
    }

    pub fn shard_at(&self, coords: &[usize]) -> Option<ShardId> {
        let axes = self.axes()?;
        if coords.len() != axes.len() || coords.iter().zip(&axes).any(|(c, a)| c >= a) {
            return None;
        }
        Some(ShardId(
            coords.iter().zip(&axes).fold(0, |acc, (c, a)| acc * a + c),
        ))
    }
}

fn grid_coords(dims: &[usize], mut index: usize) -> Vec<usize> {
    let mut coords = vec![0; dims.len()];
    for (slot, &d) in coords.iter_mut().zip(dims).rev() {
        *slot = index % d;
        index /= d;
    }
    coords
}
