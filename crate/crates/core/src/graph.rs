//! Immutable undirected graphs in compressed sparse row layout.
//!
//! Node ids are dense `0..n`. The first `ordinary_count` ids are the nodes of
//! the input graph; any ids above that are super nodes appended by rewiring.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    ordinary_count: usize,
}

/// What was discarded while building a graph from raw pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl Graph {
    /// Builds a simple undirected graph on `n` nodes. Both orientations of a
    /// pair name the same edge; self-loops and repeats are dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<(Self, BuildStats)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut stats = BuildStats::default();
        let mut pairs = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                stats.self_loops += 1;
                continue;
            }
            pairs.push((u.min(v), u.max(v)));
        }
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        stats.duplicates = before - pairs.len();
        Ok((Self::from_unique_pairs(n, n, &pairs), stats))
    }

    /// `pairs` must be sorted, deduplicated, loop-free and `u < v`.
    fn from_unique_pairs(n: usize, ordinary_count: usize, pairs: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in pairs {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n].to_vec();
        let mut targets = vec![0usize; pairs.len() * 2];
        for &(u, v) in pairs {
            targets[cursor[u]] = v;
            cursor[u] += 1;
            targets[cursor[v]] = u;
            cursor[v] += 1;
        }
        for u in 0..n {
            targets[offsets[u]..offsets[u + 1]].sort_unstable();
        }
        Self { offsets, targets, ordinary_count }
    }

    /// Appends `groups.len()` super nodes; super node `g` gets an edge to
    /// every ordinary node listed in `groups[g]`.
    pub(crate) fn with_super_nodes(&self, groups: &[Vec<usize>]) -> Self {
        let base = self.node_count();
        let mut pairs: Vec<(usize, usize)> = self.edges().collect();
        for (g, members) in groups.iter().enumerate() {
            pairs.extend(members.iter().map(|&v| (v, base + g)));
        }
        pairs.sort_unstable();
        pairs.dedup();
        Self::from_unique_pairs(base + groups.len(), self.ordinary_count, &pairs)
    }

    /// Pads the node set with `extra` isolated nodes. Used to compare an
    /// original graph against a rewired one in the same dimension.
    pub fn extended_with_isolated(&self, extra: usize) -> Self {
        let pairs: Vec<_> = self.edges().collect();
        Self::from_unique_pairs(self.node_count() + extra, self.ordinary_count, &pairs)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn ordinary_count(&self) -> usize {
        self.ordinary_count
    }

    pub fn super_count(&self) -> usize {
        self.node_count() - self.ordinary_count
    }

    pub fn is_super(&self, v: usize) -> bool {
        v >= self.ordinary_count
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count()).map(|v| self.degree(v)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Every edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count())
            .flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Breadth-first hop distances from `source`; `None` when unreachable.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let next = dist[u].unwrap() + 1;
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(next);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Checks symmetry, sortedness, absence of loops and duplicates.
    pub fn validate(&self) -> Result<()> {
        if self.ordinary_count > self.node_count() {
            return Err(Error::InvalidValue("ordinary_count exceeds node count".into()));
        }
        for u in 0..self.node_count() {
            let nbrs = self.neighbors(u);
            for w in nbrs.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidValue(format!(
                        "neighbor list of {u} is not strictly ascending"
                    )));
                }
            }
            for &v in nbrs {
                if v == u {
                    return Err(Error::InvalidValue(format!("self-loop at {u}")));
                }
                if !self.has_edge(v, u) {
                    return Err(Error::InvalidValue(format!("edge {u}->{v} has no reverse")));
                }
            }
        }
        Ok(())
    }
}
