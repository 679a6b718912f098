//! Normalized views of a graph's adjacency matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `A D^-1`: columns of non-isolated nodes sum to 1.
    Column,
    /// `D^-1 A`: rows of non-isolated nodes sum to 1.
    Row,
    /// `D^-1/2 A D^-1/2`.
    Symmetric,
    /// `(D+I)^-1/2 (A+I) (D+I)^-1/2`.
    GcnAugmented,
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "column" => Ok(Self::Column),
            "row" => Ok(Self::Row),
            "symmetric" => Ok(Self::Symmetric),
            "gcn_augmented" => Ok(Self::GcnAugmented),
            other => Err(Error::InvalidParameter(format!("unknown normalization {other:?}"))),
        }
    }
}

/// Lazy normalized adjacency. Isolated nodes have an all-zero row and
/// column, except under `GcnAugmented` where they keep their self-loop.
#[derive(Debug, Clone)]
pub struct TransitionMatrix<'g> {
    graph: &'g Graph,
    kind: NormKind,
    scale: Vec<f64>,
}

pub fn normalize(graph: &Graph, kind: NormKind) -> TransitionMatrix<'_> {
    let scale = (0..graph.node_count())
        .map(|v| {
            let d = graph.degree(v) as f64;
            match kind {
                NormKind::Column | NormKind::Row if d > 0.0 => 1.0 / d,
                NormKind::Symmetric if d > 0.0 => 1.0 / d.sqrt(),
                NormKind::GcnAugmented => 1.0 / (d + 1.0).sqrt(),
                _ => 0.0,
            }
        })
        .collect();
    TransitionMatrix { graph, kind, scale }
}

impl<'g> TransitionMatrix<'g> {
    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn dim(&self) -> usize {
        self.graph.node_count()
    }

    /// Entry `(i, j)` of the normalized matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let adjacent = self.graph.has_edge(i, j);
        match self.kind {
            NormKind::Column if adjacent => self.scale[j],
            NormKind::Row if adjacent => self.scale[i],
            NormKind::Symmetric if adjacent => self.scale[i] * self.scale[j],
            NormKind::GcnAugmented if adjacent || i == j => self.scale[i] * self.scale[j],
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for &j in self.graph.neighbors(i) {
                m.set(i, j, self.entry(i, j));
            }
            if self.kind == NormKind::GcnAugmented {
                m.set(i, i, self.entry(i, i));
            }
        }
        m
    }

    #[inline]
    fn row_weight(&self, i: usize, j: usize) -> f64 {
        match self.kind {
            NormKind::Column => self.scale[j],
            NormKind::Row => self.scale[i],
            NormKind::Symmetric | NormKind::GcnAugmented => self.scale[i] * self.scale[j],
        }
    }

    fn product_row(&self, i: usize, input: &[f64], cols: usize, out: &mut [f64]) {
        out.fill(0.0);
        if self.kind == NormKind::GcnAugmented {
            let w = self.scale[i] * self.scale[i];
            for (o, &x) in out.iter_mut().zip(&input[i * cols..(i + 1) * cols]) {
                *o += w * x;
            }
        }
        for &j in self.graph.neighbors(i) {
            let w = self.row_weight(i, j);
            for (o, &x) in out.iter_mut().zip(&input[j * cols..(j + 1) * cols]) {
                *o += w * x;
            }
        }
    }

    /// `out = P x` for a vector `x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        for (i, o) in out.iter_mut().enumerate() {
            self.product_row(i, x, 1, std::slice::from_mut(o));
        }
    }

    /// One step of the random-walk operator used by PageRank.
    ///
    /// Column-, symmetric- and GCN-normalized matrices act on column vectors
    /// (`P x`). A row-normalized matrix is a row-stochastic transition matrix
    /// acting on distributions from the left, so the step is `P^T x`; on an
    /// undirected graph this is the same walk as the column kind.
    pub fn walk(&self, x: &[f64], out: &mut [f64]) {
        if self.kind != NormKind::Row {
            return self.mul_vec(x, out);
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.graph.neighbors(i).iter().map(|&j| self.scale[j] * x[j]).sum();
        }
    }

    /// Exact sparse-dense product `P M`. Rows are computed in parallel; each
    /// row is reduced in neighbor order, so the result does not depend on
    /// the number of worker threads.
    pub fn spmm(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.dim() {
            return Err(Error::Shape(format!(
                "transition matrix is {0}x{0} but operand has {1} rows",
                self.dim(),
                m.rows()
            )));
        }
        let cols = m.cols();
        let mut out = Matrix::zeros(m.rows(), cols);
        if cols == 0 {
            return Ok(out);
        }
        out.as_mut_slice()
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| self.product_row(i, m.as_slice(), cols, row));
        Ok(out)
    }
}
