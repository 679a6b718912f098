//! Deterministic balanced partitioning: one Fennel streaming pass over a
//! seeded BFS order, repair of empty clusters, then a single greedy
//! boundary-refinement sweep. A streaming pass can be misled by an unlucky
//! start (e.g. next to a bridge), so a few seeded orders are tried and the
//! smallest cut is kept.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GroupAssignment;
use crate::error::{Error, Result};
use crate::graph::Graph;

pub const FENNEL_GAMMA: f64 = 1.5;
/// Streaming orders tried per call.
pub const PARTITION_RESTARTS: u64 = 8;
/// Extra streaming passes that re-place every node given the previous
/// pass's assignment of all its neighbors.
pub const RESTREAM_PASSES: usize = 4;
/// Cluster capacity slack over a perfectly even split.
const BALANCE_SLACK: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionAssignment {
    clusters: Vec<usize>,
    sizes: Vec<usize>,
}

impl PartitionAssignment {
    pub fn from_clusters(clusters: Vec<usize>, count: usize) -> Result<Self> {
        let mut sizes = vec![0; count];
        for (v, &c) in clusters.iter().enumerate() {
            if c >= count {
                return Err(Error::InvalidValue(format!("node {v} in cluster {c} of {count}")));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidValue(format!("cluster {empty} is empty")));
        }
        Ok(Self { clusters, sizes })
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        self.clusters[v]
    }

    pub fn clusters(&self) -> &[usize] {
        &self.clusters
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

impl GroupAssignment for PartitionAssignment {
    fn group_count(&self) -> usize {
        self.count()
    }

    fn node_count(&self) -> usize {
        self.clusters.len()
    }

    fn group_of(&self, v: usize) -> Option<usize> {
        Some(self.clusters[v])
    }
}

/// Number of ordinary edges whose endpoints lie in different clusters.
pub fn cut_size(graph: &Graph, clusters: &[usize]) -> usize {
    graph
        .edges()
        .filter(|&(u, v)| v < clusters.len() && clusters[u] != clusters[v])
        .count()
}

/// Partitions the ordinary nodes of `graph` into `count` non-empty clusters.
pub fn partition(graph: &Graph, count: usize, seed: u64) -> Result<PartitionAssignment> {
    let n = graph.ordinary_count();
    if count == 0 || count > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count {count} outside 1..={n}"
        )));
    }
    let mut best: Option<(usize, PartitionAssignment)> = None;
    for restart in 0..PARTITION_RESTARTS {
        let order = stream_order(graph, seed.wrapping_mul(PARTITION_RESTARTS).wrapping_add(restart));
        let clusters = stream_pass(graph, count, &order);
        let cut = cut_size(graph, clusters.clusters());
        if best.as_ref().map_or(true, |(c, _)| cut < *c) {
            best = Some((cut, clusters));
        }
    }
    Ok(best.unwrap().1)
}

fn stream_pass(graph: &Graph, count: usize, order: &[usize]) -> PartitionAssignment {
    let n = graph.ordinary_count();
    let mut state = State::new(n, count);
    let edges = graph.edges().filter(|&(_, v)| v < n).count() as f64;
    let fennel_alpha = edges * (count as f64).powf(FENNEL_GAMMA - 1.0) / (n as f64).powf(FENNEL_GAMMA);

    let marginal = |size: usize| {
        fennel_alpha * ((size as f64 + 1.0).powf(FENNEL_GAMMA) - (size as f64).powf(FENNEL_GAMMA))
    };
    for pass in 0..=RESTREAM_PASSES {
        for &v in order {
            if pass > 0 {
                state.unassign(v);
            }
            let counts = neighbor_clusters(graph, &state.clusters, v);
            // Among clusters without neighbors of v the penalty alone decides,
            // and it is smallest for the least-loaded open cluster.
            let mut best: Option<(f64, usize, usize)> =
                state.open.first().map(|&(size, c)| (-marginal(size), size, c));
            for (&c, &k) in &counts {
                let size = state.sizes[c];
                if size >= state.capacity {
                    continue;
                }
                let cand = (k as f64 - marginal(size), size, c);
                if best.map_or(true, |b| better(cand, b)) {
                    best = Some(cand);
                }
            }
            let (_, _, c) = best.expect("capacity admits every node");
            state.assign(v, c);
        }
    }

    state.fill_empty(graph);
    state.refine(graph, order);
    let State { clusters, sizes, .. } = state;
    PartitionAssignment { clusters: clusters.into_iter().map(Option::unwrap).collect(), sizes }
}

/// Higher score wins, then the smaller cluster, then the lower id.
fn better(a: (f64, usize, usize), b: (f64, usize, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
}

/// BFS over ordinary nodes, restarting from a seeded permutation whenever a
/// component is exhausted.
fn stream_order(graph: &Graph, seed: u64) -> Vec<usize> {
    let n = graph.ordinary_count();
    let mut starts: Vec<usize> = (0..n).collect();
    starts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in starts {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &w in graph.neighbors(u) {
                if w < n && !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order
}

fn neighbor_clusters(graph: &Graph, clusters: &[Option<usize>], v: usize) -> HashMap<usize, usize> {
    let mut counts = HashMap::new();
    for &w in graph.neighbors(v) {
        if let Some(Some(c)) = clusters.get(w) {
            *counts.entry(*c).or_insert(0) += 1;
        }
    }
    counts
}

struct State {
    clusters: Vec<Option<usize>>,
    sizes: Vec<usize>,
    capacity: usize,
    /// Non-full clusters keyed by (size, id).
    open: BTreeSet<(usize, usize)>,
}

impl State {
    fn new(n: usize, count: usize) -> Self {
        let even = n.div_ceil(count);
        let capacity = even.max((BALANCE_SLACK * n as f64 / count as f64).floor() as usize);
        Self {
            clusters: vec![None; n],
            sizes: vec![0; count],
            capacity,
            open: (0..count).map(|c| (0, c)).collect(),
        }
    }

    fn set_size(&mut self, c: usize, size: usize) {
        self.open.remove(&(self.sizes[c], c));
        self.sizes[c] = size;
        if size < self.capacity {
            self.open.insert((size, c));
        }
    }

    fn unassign(&mut self, v: usize) {
        if let Some(old) = self.clusters[v].take() {
            self.set_size(old, self.sizes[old] - 1);
        }
    }

    fn assign(&mut self, v: usize, c: usize) {
        if let Some(old) = self.clusters[v] {
            self.set_size(old, self.sizes[old] - 1);
        }
        self.clusters[v] = Some(c);
        self.set_size(c, self.sizes[c] + 1);
    }

    /// Moves, into each empty cluster, the node of the largest cluster with
    /// the fewest neighbors inside its own cluster.
    fn fill_empty(&mut self, graph: &Graph) {
        while let Some(empty) = self.sizes.iter().position(|&s| s == 0) {
            let donor = (0..self.sizes.len())
                .max_by(|&a, &b| self.sizes[a].cmp(&self.sizes[b]).then(b.cmp(&a)))
                .unwrap();
            let internal = |v: usize| {
                graph.neighbors(v).iter().filter(|&&w| self.clusters.get(w) == Some(&Some(donor))).count()
            };
            let v = (0..self.clusters.len())
                .filter(|&v| self.clusters[v] == Some(donor))
                .min_by_key(|&v| (internal(v), v))
                .unwrap();
            self.assign(v, empty);
        }
    }

    /// One pass in stream order moving each node to the neighboring cluster
    /// that most reduces the cut, within capacity and never emptying a cluster.
    fn refine(&mut self, graph: &Graph, order: &[usize]) {
        for &v in order {
            let own = self.clusters[v].unwrap();
            if self.sizes[own] == 1 {
                continue;
            }
            let counts = neighbor_clusters(graph, &self.clusters, v);
            let here = counts.get(&own).copied().unwrap_or(0);
            let mut best: Option<(f64, usize, usize)> = None;
            for (&c, &k) in &counts {
                if c == own || k <= here || self.sizes[c] >= self.capacity {
                    continue;
                }
                let cand = ((k - here) as f64, self.sizes[c], c);
                if best.map_or(true, |b| better(cand, b)) {
                    best = Some(cand);
                }
            }
            if let Some((_, _, c)) = best {
                self.assign(v, c);
            }
        }
    }
}
