//! Four-component token lists.
//!
//! For node `u` with features `X` the list holds, in order:
//!
//! 1. `X(u) ‖ 1`;
//! 2. `L` hop aggregates `(P^l X)(u) ‖ (L - l + 1) / (1 + ... + L)`;
//! 3. up to `k_structure` rows `X(i) ‖ r̄(i)` for the top PPR neighbors on the
//!    structure-rewired graph;
//! 4. up to `k_content` rows `X(j) ‖ r̂(j)` for the top PPR neighbors on the
//!    content-rewired graph.
//!
//! Missing neighbors are padded with zero rows whose mask bit is cleared.

mod store;

pub use store::{StoreHeader, TokenRecord, TokenStore, FORMAT_VERSION, MAGIC};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::ppr::{ppr_push_with, topk_where, PushWorkspace, RankedNeighbors, DEFAULT_ALPHA, DEFAULT_EPS};
use crate::rewire::{add_super_nodes, kmeans_pseudo_labels, partition, ContentAssignment, Rewired};
use crate::transition::{NormKind, TransitionMatrix};

/// `[P X, P^2 X, ..., P^L X]`.
pub fn hop_aggregates(transition: &TransitionMatrix<'_>, features: &Matrix, hops: usize) -> Result<Vec<Matrix>> {
    let mut out: Vec<Matrix> = Vec::with_capacity(hops);
    for _ in 0..hops {
        let next = transition.spmm(out.last().unwrap_or(features))?;
        out.push(next);
    }
    Ok(out)
}

/// Weight of hop `l` (1-based) out of `hops`; closer hops weigh more.
pub fn hop_weight(l: usize, hops: usize) -> f64 {
    (hops - l + 1) as f64 / (hops * (hops + 1) / 2) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenList {
    pub node: usize,
    /// Feature dimension plus the trailing score column.
    pub width: usize,
    /// Row-major `rows x width`.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    /// Node whose features fill each row: `u` for row 0, the neighbor for
    /// neighbor rows, `None` for hop and padding rows.
    pub sources: Vec<Option<usize>>,
}

impl TokenList {
    pub fn rows(&self) -> usize {
        self.mask.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn to_record(&self) -> TokenRecord {
        TokenRecord {
            id: self.node as u64,
            values: self.values.iter().map(|&x| x as f32).collect(),
            mask: self.mask.clone(),
        }
    }
}

/// Assembles the token list of `u`. `hops[l - 1]` must hold `P^l X`; neighbor
/// lists longer than their slot count are truncated.
pub fn build_token_list(
    u: usize,
    features: &FeatureMatrix,
    hops: &[Matrix],
    structure: &RankedNeighbors,
    content: &RankedNeighbors,
    structure_k: usize,
    content_k: usize,
) -> TokenList {
    let d = features.dim();
    let width = d + 1;
    let rows = 1 + hops.len() + structure_k + content_k;
    let mut values = Vec::with_capacity(rows * width);
    let mut mask = Vec::with_capacity(rows);
    let mut sources = Vec::with_capacity(rows);
    let pad = vec![0.0; d];
    let mut push_row = |x: &[f64], score: f64, valid: bool, source: Option<usize>| {
        values.extend_from_slice(x);
        values.push(score);
        mask.push(valid);
        sources.push(source);
    };

    push_row(features.row(u), 1.0, true, Some(u));
    for (l, h) in hops.iter().enumerate() {
        push_row(h.row(u), hop_weight(l + 1, hops.len()), true, None);
    }
    for (ranked, slots) in [(structure, structure_k), (content, content_k)] {
        let taken = ranked.entries.len().min(slots);
        for &(v, score) in &ranked.entries[..taken] {
            push_row(features.row(v), score, true, Some(v));
        }
        for _ in taken..slots {
            push_row(&pad, 0.0, false, None);
        }
    }
    TokenList { node: u, width, values, mask, sources }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentMode {
    /// One super node per class over the training nodes.
    TrainLabels,
    /// One super node per k-means cluster of the features, over all nodes.
    Kmeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizeConfig {
    pub hops: usize,
    pub structure_k: usize,
    pub content_k: usize,
    /// Structure clusters; `None` picks `ceil(sqrt(n))`.
    pub partitions: Option<usize>,
    pub content: ContentMode,
    /// k-means cluster count; `None` uses the class count.
    pub content_clusters: Option<usize>,
    pub hop_norm: NormKind,
    pub alpha: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        Self {
            hops: 4,
            structure_k: 16,
            content_k: 16,
            partitions: None,
            content: ContentMode::TrainLabels,
            content_clusters: None,
            hop_norm: NormKind::Symmetric,
            alpha: DEFAULT_ALPHA,
            eps: DEFAULT_EPS,
            seed: 0,
        }
    }
}

impl TokenizeConfig {
    pub fn rows_per_node(&self) -> usize {
        1 + self.hops + self.structure_k + self.content_k
    }

    pub fn resolved_partitions(&self, n: usize) -> usize {
        self.partitions.unwrap_or_else(|| ((n as f64).sqrt().ceil() as usize).clamp(1, n.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {}", self.eps)));
        }
        if !matches!(self.hop_norm, NormKind::Symmetric | NormKind::GcnAugmented) {
            return Err(Error::InvalidParameter(format!(
                "hop aggregates need a symmetric normalization, got {:?}",
                self.hop_norm
            )));
        }
        Ok(())
    }

    fn kmeans_seed(&self) -> u64 {
        self.seed ^ 0x9e37_79b9_7f4a_7c15
    }

    pub fn header(&self, n: usize, d: usize) -> StoreHeader {
        StoreHeader {
            n: n as u64,
            d: d as u32,
            hops: self.hops as u32,
            structure_k: self.structure_k as u32,
            content_k: self.content_k as u32,
            alpha: self.alpha,
            eps: self.eps,
            seed: self.seed,
        }
    }
}

/// Token lists plus the intermediate rewired graphs.
#[derive(Debug, Clone)]
pub struct Tokenization {
    pub lists: Vec<TokenList>,
    pub hops: Vec<Matrix>,
    pub structure: Option<Rewired>,
    pub content: Option<Rewired>,
    pub header: StoreHeader,
}

impl Tokenization {
    pub fn to_store(&self) -> TokenStore {
        TokenStore { header: self.header, records: self.lists.iter().map(TokenList::to_record).collect() }
    }
}

fn top_ordinary(
    ws: &mut PushWorkspace,
    rewired: Option<&Rewired>,
    u: usize,
    k: usize,
    config: &TokenizeConfig,
) -> Result<RankedNeighbors> {
    let Some(rewired) = rewired else { return Ok(RankedNeighbors::empty()) };
    let n = rewired.graph.ordinary_count();
    let ppr = ppr_push_with(ws, &rewired.graph, u, config.alpha, config.eps)?;
    Ok(topk_where(&ppr, k, |v| v < n && v != u))
}

/// Runs the whole pipeline: structure rewiring, content rewiring, per-node
/// push PPR on both rewired graphs, hop aggregates on the original graph and
/// token assembly. Content groups read only the labels of `train`.
pub fn tokenize(
    graph: &Graph,
    features: &FeatureMatrix,
    labels: &LabelVector,
    train: &[usize],
    config: &TokenizeConfig,
) -> Result<Tokenization> {
    config.validate()?;
    let n = graph.node_count();
    if graph.super_count() != 0 {
        return Err(Error::InvalidValue("tokenize expects a graph without super nodes".into()));
    }
    if features.node_count() != n {
        return Err(Error::Shape(format!("graph has {n} nodes but features have {} rows", features.node_count())));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("graph has {n} nodes but labels have {} entries", labels.len())));
    }

    let structure = if config.structure_k > 0 {
        let s = config.resolved_partitions(n);
        let clusters = partition(graph, s, config.seed)?;
        log::info!("structure rewiring with {s} clusters");
        Some(add_super_nodes(graph, &clusters)?)
    } else {
        None
    };
    let content = if config.content_k > 0 {
        let assignment = match config.content {
            ContentMode::TrainLabels => ContentAssignment::from_train_labels(labels, train)?,
            ContentMode::Kmeans => {
                let k = config.content_clusters.unwrap_or(labels.class_count());
                kmeans_pseudo_labels(features, k, config.kmeans_seed())?
            }
        };
        log::info!("content rewiring with {} groups over {} nodes", assignment.count, assignment.assigned());
        Some(add_super_nodes(graph, &assignment)?)
    } else {
        None
    };

    let hops = hop_aggregates(&crate::transition::normalize(graph, config.hop_norm), features.as_matrix(), config.hops)?;

    let lists = (0..n)
        .into_par_iter()
        .map_init(PushWorkspace::new, |ws, u| {
            let s = top_ordinary(ws, structure.as_ref(), u, config.structure_k, config)?;
            let c = top_ordinary(ws, content.as_ref(), u, config.content_k, config)?;
            Ok(build_token_list(u, features, &hops, &s, &c, config.structure_k, config.content_k))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Tokenization { lists, hops, structure, content, header: config.header(n, features.dim()) })
}

pub fn tokenize_graph(
    graph: &Graph,
    features: &FeatureMatrix,
    labels: &LabelVector,
    train: &[usize],
    config: &TokenizeConfig,
) -> Result<TokenStore> {
    Ok(tokenize(graph, features, labels, train, config)?.to_store())
}
