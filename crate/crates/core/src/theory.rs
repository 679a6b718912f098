//! Numerical checks of the identities behind the tokenization: the
//! mass-transfer vector of a rewiring, the shortest-path classification of
//! ordinary nodes, the PPR feature recurrence, and the hop rows of a store.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::ppr::{ppr_power, DEFAULT_MAX_ITERS};
use crate::tokenize::{hop_weight, TokenStore};
use crate::transition::TransitionMatrix;

/// Power-iteration tolerance used for `r` and `r̃`.
pub const EXACT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    /// Strictly closer to the target after rewiring.
    Brightened,
    /// Same distance as before.
    Faded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeClassification {
    pub target: usize,
    pub before: Vec<Option<usize>>,
    pub after: Vec<Option<usize>>,
    /// One entry per ordinary node; `None` for the target itself.
    pub classes: Vec<Option<NodeClass>>,
}

impl NodeClassification {
    pub fn nodes(&self, class: NodeClass) -> Vec<usize> {
        (0..self.classes.len()).filter(|&v| self.classes[v] == Some(class)).collect()
    }
}

/// BFS distances from `target` before and after rewiring; super nodes are
/// walkable in `rewired` but are not classified.
pub fn classify_nodes(graph: &Graph, rewired: &Graph, target: usize) -> Result<NodeClassification> {
    let n = graph.ordinary_count();
    if target >= n {
        return Err(Error::InvalidParameter(format!("target {target} is not an ordinary node (n = {n})")));
    }
    if rewired.ordinary_count() != n || rewired.node_count() < graph.node_count() {
        return Err(Error::Shape(format!(
            "rewired graph ({} ordinary of {}) does not extend the original ({n} of {})",
            rewired.ordinary_count(),
            rewired.node_count(),
            graph.node_count()
        )));
    }
    let mut before = graph.bfs_distances(target);
    let mut after = rewired.bfs_distances(target);
    before.truncate(n);
    after.truncate(n);
    let classes = (0..n)
        .map(|v| {
            if v == target {
                return None;
            }
            let closer = match (before[v], after[v]) {
                (Some(b), Some(a)) => a < b,
                (None, Some(_)) => true,
                _ => false,
            };
            Some(if closer { NodeClass::Brightened } else { NodeClass::Faded })
        })
        .collect();
    Ok(NodeClassification { target, before, after, classes })
}

/// Mass of `c` over one node set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MassSummary {
    pub count: usize,
    pub total: f64,
    pub positive: f64,
    pub negative: f64,
}

impl MassSummary {
    fn add(&mut self, x: f64) {
        self.count += 1;
        self.total += x;
        if x > 0.0 {
            self.positive += x;
        } else {
            self.negative += x;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassTransferReport {
    pub source: usize,
    pub alpha: f64,
    pub c: Vec<f64>,
    pub r: Vec<f64>,
    pub r_tilde: Vec<f64>,
    /// `max_v |c(v) + r(v) - r̃(v)|`.
    pub identity_error: f64,
    /// `Σ_v c(v)`, signed.
    pub sum_c: f64,
    /// l1 mass of every series term that was added.
    pub term_norms: Vec<f64>,
    pub target: MassSummary,
    pub brightened: MassSummary,
    pub faded: MassSummary,
    pub super_nodes: MassSummary,
    /// Faded nodes that gained mass and brightened nodes that lost mass.
    pub gaining_faded: usize,
    pub losing_brightened: usize,
}

fn walk(t: &TransitionMatrix<'_>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    t.walk(x, &mut out);
    out
}

/// Computes `c = α Σ_i α^i P̃^i (P̃ - P) r` by a truncated series, stopping
/// once a term's l1 mass drops below `series_tol`, and compares it with
/// `r̃ - r` from independent power iterations.
///
/// `original` must be the original transition matrix zero-extended to the
/// rewired dimension (see [`Graph::extended_with_isolated`]).
pub fn mass_transfer(
    original: &TransitionMatrix<'_>,
    rewired: &TransitionMatrix<'_>,
    source: usize,
    alpha: f64,
    series_tol: f64,
) -> Result<MassTransferReport> {
    let n = rewired.dim();
    if original.dim() != n {
        return Err(Error::Shape(format!("original is {}-dimensional, rewired is {n}", original.dim())));
    }
    if original.kind() != rewired.kind() {
        return Err(Error::InvalidParameter("both transition matrices must have the same kind".into()));
    }
    if !(series_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("series_tol must be positive, got {series_tol}")));
    }
    let r = ppr_power(original, source, alpha, EXACT_TOL, 100 * DEFAULT_MAX_ITERS)?.to_dense(n);
    let r_tilde = ppr_power(rewired, source, alpha, EXACT_TOL, 100 * DEFAULT_MAX_ITERS)?.to_dense(n);

    let moved = walk(rewired, &r);
    let stayed = walk(original, &r);
    let mut term: Vec<f64> = moved.iter().zip(&stayed).map(|(a, b)| alpha * (a - b)).collect();
    let mut c = term.clone();
    let mut term_norms = vec![term.iter().map(|x| x.abs()).sum::<f64>()];
    while *term_norms.last().unwrap() >= series_tol {
        if term_norms.len() > 100 * DEFAULT_MAX_ITERS {
            return Err(Error::NonConvergence { iterations: term_norms.len(), residual: *term_norms.last().unwrap() });
        }
        term = walk(rewired, &term);
        term.iter_mut().for_each(|x| *x *= alpha);
        c.iter_mut().zip(&term).for_each(|(acc, t)| *acc += t);
        term_norms.push(term.iter().map(|x| x.abs()).sum());
    }

    let identity_error = (0..n).map(|v| (c[v] + r[v] - r_tilde[v]).abs()).fold(0.0, f64::max);
    let sum_c = c.iter().sum();

    let classification = classify_nodes(original.graph(), rewired.graph(), source)?;
    let mut report = MassTransferReport {
        source,
        alpha,
        identity_error,
        sum_c,
        term_norms,
        target: MassSummary::default(),
        brightened: MassSummary::default(),
        faded: MassSummary::default(),
        super_nodes: MassSummary::default(),
        gaining_faded: 0,
        losing_brightened: 0,
        c: Vec::new(),
        r: Vec::new(),
        r_tilde: Vec::new(),
    };
    for (v, &x) in c.iter().enumerate() {
        match classification.classes.get(v) {
            None => report.super_nodes.add(x),
            Some(None) => report.target.add(x),
            Some(Some(NodeClass::Brightened)) => {
                report.brightened.add(x);
                report.losing_brightened += usize::from(x < 0.0);
            }
            Some(Some(NodeClass::Faded)) => {
                report.faded.add(x);
                report.gaining_faded += usize::from(x > 0.0);
            }
        }
    }
    report.c = c;
    report.r = r;
    report.r_tilde = r_tilde;
    Ok(report)
}

/// Runs `H(t+1) = (1 - a) P H(t) + a X` from `H(0) = X` and compares every
/// iterate with `Σ_{i<t} a (1 - a)^i P^i X + (1 - a)^t P^t X`.
///
/// Here `a` is the restart mass, i.e. one minus the damping factor used by
/// the PPR solvers.
pub fn verify_ppr_series(transition: &TransitionMatrix<'_>, features: &Matrix, restart: f64, t_max: usize) -> Result<f64> {
    if t_max == 0 {
        return Err(Error::InvalidParameter("t_max must be at least 1".into()));
    }
    let keep = 1.0 - restart;
    let mut h = features.clone();
    let mut power = features.clone();
    let mut partial = Matrix::zeros(features.rows(), features.cols());
    let mut worst: f64 = 0.0;
    for t in 1..=t_max {
        let ph = transition.spmm(&h)?;
        for ((out, &p), &x) in h.as_mut_slice().iter_mut().zip(ph.as_slice()).zip(features.as_slice()) {
            *out = keep * p + restart * x;
        }
        let coeff = restart * keep.powi(t as i32 - 1);
        for (acc, &p) in partial.as_mut_slice().iter_mut().zip(power.as_slice()) {
            *acc += coeff * p;
        }
        power = transition.spmm(&power)?;
        let tail = keep.powi(t as i32);
        for ((&hv, &acc), &p) in h.as_slice().iter().zip(partial.as_slice()).zip(power.as_slice()) {
            worst = worst.max((hv - (acc + tail * p)).abs());
        }
    }
    Ok(worst)
}

/// Largest difference between a store's hop rows (features and weight
/// column) and `(P^l X)(u)` recomputed with dense matrix products.
pub fn verify_gcn_equivalence(store: &TokenStore, transition: &TransitionMatrix<'_>, features: &Matrix) -> Result<f64> {
    let h = &store.header;
    let n = features.rows();
    if h.n as usize != n || h.d as usize != features.cols() || transition.dim() != n {
        return Err(Error::Shape(format!(
            "store header (n = {}, d = {}) does not match features {}x{} / transition {}",
            h.n,
            h.d,
            n,
            features.cols(),
            transition.dim()
        )));
    }
    let hops = h.hops as usize;
    if hops == 0 {
        return Ok(0.0);
    }
    let width = h.token_width();
    let dense = transition.to_dense();
    let mut power = features.clone();
    let mut worst: f64 = 0.0;
    for l in 1..=hops {
        power = dense.matmul(&power)?;
        let weight = hop_weight(l, hops);
        for (u, record) in store.records.iter().enumerate() {
            if record.id as usize != u || record.row_count() < 1 + hops {
                return Err(Error::Format(format!("record {u} does not hold {hops} hop rows")));
            }
            let row = record.row(l, width);
            for (&stored, &exact) in row.iter().zip(power.row(u)) {
                worst = worst.max((stored as f64 - exact).abs());
            }
            worst = worst.max((row[width - 1] as f64 - weight).abs());
        }
    }
    Ok(worst)
}
