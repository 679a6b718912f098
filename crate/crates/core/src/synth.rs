//! Stochastic block model datasets with Gaussian class features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, LabelVector, Splits};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Edges favor same-block pairs and features follow the blocks.
    LabelAligned,
    /// Features still follow the blocks but edges favor different blocks
    /// (`p_out > p_in` is required).
    LabelAntiAligned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbmSpec {
    pub n: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    pub feature_mode: FeatureMode,
    /// Distance between any two class means.
    pub sigma_sep: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            blocks: 5,
            p_in: 0.02,
            p_out: 0.002,
            dim: 16,
            feature_mode: FeatureMode::LabelAligned,
            sigma_sep: 3.0,
            seed: 0,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.blocks == 0 || self.blocks > self.n {
            return bad(format!("block count {} outside 1..={}", self.blocks, self.n));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.dim < self.blocks {
            return bad(format!("feature dimension {} is smaller than the block count {}", self.dim, self.blocks));
        }
        if !(self.sigma_sep >= 0.0 && self.sigma_sep.is_finite()) {
            return bad(format!("sigma_sep = {} must be finite and non-negative", self.sigma_sep));
        }
        if self.feature_mode == FeatureMode::LabelAntiAligned && self.p_out <= self.p_in {
            return bad(format!("label_anti_aligned needs p_out > p_in, got {} <= {}", self.p_out, self.p_in));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbmDataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub splits: Splits,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Indices in `0..total` kept independently with probability `p`, found by
/// geometric skips so the cost is proportional to the number kept.
fn bernoulli_indices(total: u64, p: f64, rng: &mut ChaCha8Rng, mut keep: impl FnMut(u64)) {
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(keep);
        return;
    }
    let skip = Geometric::new(p).expect("p in (0, 1)");
    let mut idx = 0u64;
    loop {
        idx = idx.saturating_add(skip.sample(rng));
        if idx >= total {
            return;
        }
        keep(idx);
        idx += 1;
    }
}

/// Each unordered pair `i < j` of `0..s` kept with probability `p`, in
/// row-major order.
fn sample_pairs(s: usize, p: f64, rng: &mut ChaCha8Rng, mut keep: impl FnMut(usize, usize)) {
    let s = s as u64;
    let (mut row, mut row_start) = (0u64, 0u64);
    bernoulli_indices(s * s.saturating_sub(1) / 2, p, rng, |idx| {
        while idx >= row_start + (s - 1 - row) {
            row_start += s - 1 - row;
            row += 1;
        }
        let col = row + 1 + (idx - row_start);
        keep(row as usize, col as usize);
    });
}

/// Erdős–Rényi `G(n, p)` plus a path through a seeded permutation of the
/// nodes, so the result is always connected.
pub fn random_connected_graph(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 nodes, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} is not a probability")));
    }
    let mut edges = Vec::new();
    sample_pairs(n, p, &mut stream(seed, 1), |i, j| edges.push((i, j)));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, 0));
    edges.extend(order.windows(2).map(|w| (w[0], w[1])));
    Ok(Graph::from_edges(n, edges)?.0)
}

pub fn generate_sbm(spec: &SbmSpec) -> Result<SbmDataset> {
    spec.validate()?;
    let (n, b) = (spec.n, spec.blocks);

    let mut labels: Vec<usize> = (0..n).map(|i| i * b / n).collect();
    labels.shuffle(&mut stream(spec.seed, 0));
    let mut members = vec![Vec::new(); b];
    for (v, &c) in labels.iter().enumerate() {
        members[c].push(v);
    }

    let mut edges = Vec::new();
    let mut rng = stream(spec.seed, 1);
    for a in 0..b {
        let block = &members[a];
        let s = block.len() as u64;
        sample_pairs(block.len(), spec.p_in, &mut rng, |i, j| edges.push((block[i], block[j])));
        for other in &members[a + 1..] {
            let t = other.len() as u64;
            bernoulli_indices(s * t, spec.p_out, &mut rng, |idx| {
                edges.push((block[(idx / t) as usize], other[(idx % t) as usize]));
            });
        }
    }
    if edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let (graph, _) = Graph::from_edges(n, edges)?;
    let reached = graph.bfs_distances(0).iter().flatten().count();
    if reached < n {
        log::warn!("generated graph is disconnected: {} of {n} nodes outside the component of node 0", n - reached);
    }

    let mut rng = stream(spec.seed, 2);
    let offset = spec.sigma_sep / std::f64::consts::SQRT_2;
    let mut values = Vec::with_capacity(n * spec.dim);
    for &c in &labels {
        for j in 0..spec.dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            values.push(if j == c { offset + noise } else { noise });
        }
    }
    let features = FeatureMatrix::new(Matrix::from_vec(n, spec.dim, values)?)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(spec.seed, 3));
    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    let sorted = |s: &[usize]| {
        let mut s = s.to_vec();
        s.sort_unstable();
        s
    };
    let splits = Splits {
        train: sorted(&order[..n_train]),
        val: sorted(&order[n_train..n_train + n_val]),
        test: sorted(&order[n_train + n_val..]),
    };

    let labels = LabelVector::with_class_count(labels.into_iter().map(Some).collect(), b)?;
    Ok(SbmDataset { graph, features, labels, splits })
}

/// Fraction of edges whose endpoints share a label.
pub fn edge_homophily(graph: &Graph, labels: &LabelVector) -> Result<f64> {
    let mut same = 0usize;
    let mut total = 0usize;
    for (u, v) in graph.edges() {
        let label = |w: usize| {
            labels.as_slice().get(w).copied().flatten().ok_or_else(|| Error::InvalidValue(format!("node {w} has no label")))
        };
        same += usize::from(label(u)? == label(v)?);
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(same as f64 / total as f64)
}
