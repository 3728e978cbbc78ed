// SPDX-License-Identifier: Apache-2.0

//! Vertex coloring of conflict graphs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::workload::{ConflictGraph, TxnId};

/// Largest graph accepted by [`chromatic_number`].
pub const ORACLE_MAX_NODES: usize = 12;

/// Colors are 1-based and contiguous in `1..=xi`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    colors: BTreeMap<TxnId, u32>,
    xi: u32,
}

impl Coloring {
    pub fn from_map(colors: BTreeMap<TxnId, u32>) -> Self {
        let xi = colors.values().copied().max().unwrap_or(0);
        Coloring { colors, xi }
    }

    pub fn color_of(&self, id: TxnId) -> Option<u32> {
        self.colors.get(&id).copied()
    }

    /// Number of colors used, `ξ`.
    pub fn xi(&self) -> u32 {
        self.xi
    }

    pub fn iter(&self) -> impl Iterator<Item = (TxnId, u32)> + '_ {
        self.colors.iter().map(|(&id, &c)| (id, c))
    }

    /// Transaction ids per color, colors ascending, ids ascending within each.
    pub fn classes(&self) -> Vec<Vec<TxnId>> {
        let mut classes = vec![Vec::new(); self.xi as usize];
        for (&id, &c) in &self.colors {
            classes[(c - 1) as usize].push(id);
        }
        classes
    }
}

/// First-fit greedy coloring in the given node order.
pub fn greedy_color(cg: &ConflictGraph, order: &[TxnId]) -> Result<Coloring> {
    let n = cg.node_count();
    if order.len() != n {
        return Err(Error::NotPermutation);
    }
    let mut nodes = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for &id in order {
        let node = cg.node_of(id).ok_or(Error::NotPermutation)?;
        if std::mem::replace(&mut seen[node], true) {
            return Err(Error::NotPermutation);
        }
        nodes.push(node);
    }

    let mut color = vec![0u32; n];
    let mut taken = Vec::new();
    for node in nodes {
        taken.clear();
        taken.resize(cg.neighbors(node).len() + 2, false);
        for &nb in cg.neighbors(node) {
            let c = color[nb] as usize;
            if c > 0 && c < taken.len() {
                taken[c] = true;
            }
        }
        color[node] = (1..taken.len()).find(|&c| !taken[c]).unwrap() as u32;
    }
    Ok(Coloring::from_map(
        cg.ids().iter().copied().zip(color).collect(),
    ))
}

/// Greedy coloring in ascending transaction-id order.
pub fn greedy_color_by_id(cg: &ConflictGraph) -> Coloring {
    let mut order = cg.ids().to_vec();
    order.sort_unstable();
    greedy_color(cg, &order).expect("sorted ids form a permutation")
}

/// Exact chromatic number by backtracking, for graphs of at most
/// [`ORACLE_MAX_NODES`] nodes.
pub fn chromatic_number(cg: &ConflictGraph) -> Result<u32> {
    let n = cg.node_count();
    if n > ORACLE_MAX_NODES {
        return Err(Error::OracleTooLarge {
            nodes: n,
            max: ORACLE_MAX_NODES,
        });
    }
    if n == 0 {
        return Ok(0);
    }
    // highest degree first prunes earliest
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(cg.neighbors(v).len()));
    let mut colors = vec![0u32; n];
    for k in 1..=n as u32 {
        if try_color(cg, &order, 0, k, 0, &mut colors) {
            return Ok(k);
        }
    }
    unreachable!("n colors always suffice")
}

fn try_color(
    cg: &ConflictGraph,
    order: &[usize],
    at: usize,
    k: u32,
    used: u32,
    colors: &mut [u32],
) -> bool {
    let Some(&v) = order.get(at) else {
        return true;
    };
    // new colors are interchangeable, so only try one fresh color
    let limit = (used + 1).min(k);
    for c in 1..=limit {
        if cg.neighbors(v).iter().all(|&nb| colors[nb] != c) {
            colors[v] = c;
            if try_color(cg, order, at + 1, k, used.max(c), colors) {
                return true;
            }
            colors[v] = 0;
        }
    }
    false
}

/// An edge whose endpoints received the same color (or an uncolored node,
/// reported against itself).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColorClash {
    pub a: TxnId,
    pub b: TxnId,
    pub color: u32,
}

/// Every conflict edge whose endpoints share a color. Empty means valid.
pub fn validate_coloring(cg: &ConflictGraph, coloring: &Coloring) -> Vec<ColorClash> {
    let ids = cg.ids();
    let mut clashes: Vec<ColorClash> = ids
        .iter()
        .filter(|&&id| coloring.color_of(id).is_none_or(|c| c == 0))
        .map(|&id| ColorClash {
            a: id,
            b: id,
            color: 0,
        })
        .collect();
    for (a, b, _) in cg.edges() {
        let (ca, cb) = (coloring.color_of(ids[a]), coloring.color_of(ids[b]));
        if let (Some(ca), Some(cb)) = (ca, cb) {
            if ca == cb && ca != 0 {
                clashes.push(ColorClash {
                    a: ids[a],
                    b: ids[b],
                    color: ca,
                });
            }
        }
    }
    clashes
}
