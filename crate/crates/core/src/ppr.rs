//! Personalized PageRank: `r = alpha * P r + (1 - alpha) * q`, with `q` the
//! indicator of the source node and `alpha` the continuation probability.
//!
//! Three solvers are provided. `ppr_power` and `ppr_cpi` are exact up to a
//! tolerance and operate on any [`TransitionMatrix`]. `ppr_push` is the local
//! forward-push approximation on the random walk `A D^-1`, which is the walk
//! of both the column and the row normalization of an undirected graph.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::transition::TransitionMatrix;

pub const DEFAULT_ALPHA: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PprMethod {
    Power,
    Cpi,
    Push,
}

/// Sparse PPR vector for one source. Entries are sorted by node id and
/// strictly positive; `residual` is empty for the exact methods.
#[derive(Debug, Clone, PartialEq)]
pub struct PprVector {
    pub source: usize,
    pub alpha: f64,
    pub method: PprMethod,
    pub mass: Vec<(usize, f64)>,
    pub residual: Vec<(usize, f64)>,
    pub iterations: usize,
}

impl PprVector {
    fn from_dense(source: usize, alpha: f64, method: PprMethod, dense: &[f64], iterations: usize) -> Self {
        let mass = dense.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, &x)| (i, x)).collect();
        Self { source, alpha, method, mass, residual: Vec::new(), iterations }
    }

    pub fn get(&self, v: usize) -> f64 {
        self.mass.binary_search_by_key(&v, |e| e.0).map_or(0.0, |i| self.mass[i].1)
    }

    pub fn residual_at(&self, v: usize) -> f64 {
        self.residual.binary_search_by_key(&v, |e| e.0).map_or(0.0, |i| self.residual[i].1)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().map(|e| e.1).sum()
    }

    pub fn total_residual(&self) -> f64 {
        self.residual.iter().map(|e| e.1).sum()
    }

    pub fn nnz(&self) -> usize {
        self.mass.len()
    }

    /// Nodes holding mass or residual.
    pub fn touched(&self) -> usize {
        let mut ids: Vec<usize> = self.mass.iter().chain(&self.residual).map(|e| e.0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(v, x) in &self.mass {
            out[v] = x;
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "source": self.source,
            "alpha": self.alpha,
            "entries": self.mass.iter().map(|&(v, x)| serde_json::json!([v, x])).collect::<Vec<_>>(),
        })
    }
}

fn check_args(n: usize, source: usize, alpha: f64) -> Result<()> {
    if source >= n {
        return Err(Error::InvalidParameter(format!("source {source} out of range for {n} nodes")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Power iteration from `r = q` until the l1 change drops below `tol`.
pub fn ppr_power(
    transition: &TransitionMatrix<'_>,
    source: usize,
    alpha: f64,
    tol: f64,
    max_iters: usize,
) -> Result<PprVector> {
    let n = transition.dim();
    check_args(n, source, alpha)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let mut r = vec![0.0; n];
    r[source] = 1.0;
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for iter in 1..=max_iters {
        transition.walk(&r, &mut next);
        for x in next.iter_mut() {
            *x *= alpha;
        }
        next[source] += 1.0 - alpha;
        change = l1_distance(&r, &next);
        std::mem::swap(&mut r, &mut next);
        if change < tol {
            return Ok(PprVector::from_dense(source, alpha, PprMethod::Power, &r, iter));
        }
    }
    Err(Error::NonConvergence { iterations: max_iters, residual: change })
}

/// Cumulative power iteration: `r = sum_i (alpha P)^i (1 - alpha) q`,
/// accumulated until a term's l1 mass drops below `tol`.
pub fn ppr_cpi(transition: &TransitionMatrix<'_>, source: usize, alpha: f64, tol: f64) -> Result<PprVector> {
    ppr_cpi_terms(transition, source, alpha, tol, usize::MAX).map(|(v, _)| v)
}

/// Like [`ppr_cpi`] but stops after at most `max_terms` terms and also
/// returns the l1 mass of every term that was added.
pub fn ppr_cpi_terms(
    transition: &TransitionMatrix<'_>,
    source: usize,
    alpha: f64,
    tol: f64,
    max_terms: usize,
) -> Result<(PprVector, Vec<f64>)> {
    let n = transition.dim();
    check_args(n, source, alpha)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let mut term = vec![0.0; n];
    term[source] = 1.0 - alpha;
    let mut r = term.clone();
    let mut next = vec![0.0; n];
    let mut norms = vec![1.0 - alpha];
    while norms.len() < max_terms && *norms.last().unwrap() >= tol {
        if norms.len() > DEFAULT_MAX_ITERS {
            return Err(Error::NonConvergence { iterations: norms.len(), residual: *norms.last().unwrap() });
        }
        transition.walk(&term, &mut next);
        for x in next.iter_mut() {
            *x *= alpha;
        }
        std::mem::swap(&mut term, &mut next);
        for (acc, &t) in r.iter_mut().zip(&term) {
            *acc += t;
        }
        norms.push(term.iter().map(|x| x.abs()).sum());
    }
    let iterations = norms.len();
    Ok((PprVector::from_dense(source, alpha, PprMethod::Cpi, &r, iterations), norms))
}

/// Scratch buffers for repeated push queries; reset in time proportional to
/// the number of nodes the previous query touched.
#[derive(Debug, Default)]
pub struct PushWorkspace {
    mass: Vec<f64>,
    residual: Vec<f64>,
    queued: Vec<bool>,
    seen: Vec<bool>,
    touched: Vec<usize>,
    queue: VecDeque<usize>,
}

impl PushWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, n: usize) {
        if self.mass.len() != n {
            *self = Self {
                mass: vec![0.0; n],
                residual: vec![0.0; n],
                queued: vec![false; n],
                seen: vec![false; n],
                ..Self::default()
            };
            return;
        }
        for &v in &self.touched {
            self.mass[v] = 0.0;
            self.residual[v] = 0.0;
            self.queued[v] = false;
            self.seen[v] = false;
        }
        self.touched.clear();
        self.queue.clear();
    }

    fn touch(&mut self, v: usize) {
        if !self.seen[v] {
            self.seen[v] = true;
            self.touched.push(v);
        }
    }
}

/// Forward push (Andersen-Chung-Lang style) with a FIFO work queue.
///
/// The source is pushed once unconditionally; afterwards a node is pushed
/// while `residual(v) >= eps * degree(v)`. On return every residual satisfies
/// `residual(v) / degree(v) < eps`, and `mass + PPR(residual)` equals the exact
/// PPR vector of the walk `A D^-1`.
pub fn ppr_push(graph: &Graph, source: usize, alpha: f64, eps: f64) -> Result<PprVector> {
    ppr_push_with(&mut PushWorkspace::new(), graph, source, alpha, eps)
}

pub fn ppr_push_with(
    ws: &mut PushWorkspace,
    graph: &Graph,
    source: usize,
    alpha: f64,
    eps: f64,
) -> Result<PprVector> {
    let n = graph.node_count();
    check_args(n, source, alpha)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    ws.prepare(n);
    ws.touch(source);
    ws.residual[source] = 1.0;
    ws.queue.push_back(source);
    ws.queued[source] = true;
    let mut pushes = 0usize;
    while let Some(u) = ws.queue.pop_front() {
        ws.queued[u] = false;
        let rho = std::mem::replace(&mut ws.residual[u], 0.0);
        ws.mass[u] += (1.0 - alpha) * rho;
        pushes += 1;
        let nbrs = graph.neighbors(u);
        if nbrs.is_empty() {
            continue;
        }
        let share = alpha * rho / nbrs.len() as f64;
        for &v in nbrs {
            ws.touch(v);
            ws.residual[v] += share;
            if !ws.queued[v] && ws.residual[v] >= eps * graph.degree(v) as f64 {
                ws.queued[v] = true;
                ws.queue.push_back(v);
            }
        }
    }
    let mut ids = ws.touched.clone();
    ids.sort_unstable();
    let mass = ids.iter().filter(|&&v| ws.mass[v] > 0.0).map(|&v| (v, ws.mass[v])).collect();
    let residual = ids.iter().filter(|&&v| ws.residual[v] > 0.0).map(|&v| (v, ws.residual[v])).collect();
    Ok(PprVector { source, alpha, method: PprMethod::Push, mass, residual, iterations: pushes })
}

/// Top-k nodes by PPR score, best first; ties go to the smaller id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedNeighbors {
    pub requested: usize,
    pub entries: Vec<(usize, f64)>,
}

impl RankedNeighbors {
    pub fn empty() -> Self {
        Self { requested: 0, entries: Vec::new() }
    }

    pub fn k_effective(&self) -> usize {
        self.entries.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    score: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    /// Greater means ranked earlier.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Selects the `k` best nonzero entries that `keep` accepts, using a bounded
/// heap of size `k`.
pub fn topk_where(ppr: &PprVector, k: usize, keep: impl Fn(usize) -> bool) -> RankedNeighbors {
    if k == 0 {
        return RankedNeighbors { requested: 0, entries: Vec::new() };
    }
    let mut heap: BinaryHeap<Reverse<Candidate>> = BinaryHeap::with_capacity(k + 1);
    for &(id, score) in &ppr.mass {
        if score <= 0.0 || !keep(id) {
            continue;
        }
        let cand = Candidate { score, id };
        if heap.len() < k {
            heap.push(Reverse(cand));
        } else if cand > heap.peek().unwrap().0 {
            heap.pop();
            heap.push(Reverse(cand));
        }
    }
    let mut best: Vec<Candidate> = heap.into_iter().map(|r| r.0).collect();
    best.sort_unstable_by(|a, b| b.cmp(a));
    RankedNeighbors { requested: k, entries: best.into_iter().map(|c| (c.id, c.score)).collect() }
}

pub fn topk(ppr: &PprVector, k: usize, exclude: &BTreeSet<usize>) -> RankedNeighbors {
    topk_where(ppr, k, |v| !exclude.contains(&v))
}

/// The super nodes of `graph` plus the source itself.
pub fn default_exclusion(graph: &Graph, source: usize) -> BTreeSet<usize> {
    (graph.ordinary_count()..graph.node_count()).chain([source]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::{normalize, NormKind};

    fn two_cycle() -> Graph {
        Graph::from_edges(2, [(0, 1)]).unwrap().0
    }

    #[test]
    fn two_cycle_closed_form() {
        let g = two_cycle();
        let t = normalize(&g, NormKind::Column);
        let r = ppr_power(&t, 0, 0.85, 1e-14, 1000).unwrap();
        assert!((r.get(0) - 1.0 / 1.85).abs() < 1e-12);
        assert!((r.get(1) - 0.85 / 1.85).abs() < 1e-12);
    }

    #[test]
    fn tiny_alpha_keeps_mass_at_source() {
        let g = two_cycle();
        let t = normalize(&g, NormKind::Column);
        let r = ppr_power(&t, 0, 1e-9, 1e-14, 1000).unwrap();
        assert!((r.get(0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn power_reports_non_convergence() {
        let g = two_cycle();
        let t = normalize(&g, NormKind::Column);
        match ppr_power(&t, 0, 0.99, 1e-15, 5) {
            Err(Error::NonConvergence { iterations: 5, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_arguments() {
        let g = two_cycle();
        let t = normalize(&g, NormKind::Column);
        assert!(ppr_power(&t, 2, 0.85, 1e-10, 10).is_err());
        assert!(ppr_power(&t, 0, 1.0, 1e-10, 10).is_err());
        assert!(ppr_power(&t, 0, 0.5, 0.0, 10).is_err());
        assert!(ppr_push(&g, 0, 0.85, 0.0).is_err());
    }

    #[test]
    fn cpi_first_term() {
        let g = two_cycle();
        let t = normalize(&g, NormKind::Column);
        let (r, norms) = ppr_cpi_terms(&t, 0, 0.85, 1e-12, 1).unwrap();
        assert_eq!(r.mass, vec![(0, 0.15000000000000002)]);
        assert_eq!(norms.len(), 1);
    }

    #[test]
    fn cpi_single_node_self_loop() {
        let g = Graph::from_edges(1, std::iter::empty()).unwrap().0;
        let t = normalize(&g, NormKind::GcnAugmented);
        let r = ppr_cpi(&t, 0, 0.85, 1e-14).unwrap();
        assert!((r.get(0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn push_with_large_eps_only_pushes_source() {
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap().0;
        let r = ppr_push(&g, 0, 0.85, 1.0).unwrap();
        assert_eq!(r.mass, vec![(0, 1.0 - 0.85)]);
        assert!((r.total_residual() - 0.85).abs() < 1e-15);
        for v in 1..4 {
            assert!((r.residual_at(v) - 0.85 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn push_on_isolated_source_terminates() {
        let g = Graph::from_edges(3, [(1, 2)]).unwrap().0;
        let r = ppr_push(&g, 0, 0.85, 1e-6).unwrap();
        assert_eq!(r.mass, vec![(0, 1.0 - 0.85)]);
        assert!(r.residual.is_empty());
    }

    #[test]
    fn workspace_reuse_matches_fresh() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]).unwrap().0;
        let mut ws = PushWorkspace::new();
        for s in 0..6 {
            assert_eq!(ppr_push_with(&mut ws, &g, s, 0.85, 1e-4).unwrap(), ppr_push(&g, s, 0.85, 1e-4).unwrap());
        }
    }

    fn vector(entries: Vec<(usize, f64)>) -> PprVector {
        PprVector { source: 0, alpha: 0.85, method: PprMethod::Power, mass: entries, residual: vec![], iterations: 0 }
    }

    #[test]
    fn topk_zero_is_empty() {
        let r = topk(&vector(vec![(1, 0.5)]), 0, &BTreeSet::new());
        assert!(r.entries.is_empty());
    }

    #[test]
    fn topk_ties_prefer_smaller_id() {
        let r = topk(&vector(vec![(3, 0.2), (7, 0.2)]), 1, &BTreeSet::new());
        assert_eq!(r.entries, vec![(3, 0.2)]);
    }

    #[test]
    fn topk_short_lists_and_exclusion() {
        let ppr = vector(vec![(0, 0.4), (1, 0.1), (2, 0.3), (5, 0.2)]);
        let r = topk(&ppr, 10, &BTreeSet::from([0, 5]));
        assert_eq!(r.entries, vec![(2, 0.3), (1, 0.1)]);
        assert_eq!(r.k_effective(), 2);
        assert_eq!(r.requested, 10);
    }

    #[test]
    fn json_dump() {
        let v = vector(vec![(2, 0.5)]);
        assert_eq!(v.to_json().to_string(), r#"{"alpha":0.85,"entries":[[2,0.5]],"source":0}"#);
    }
}
