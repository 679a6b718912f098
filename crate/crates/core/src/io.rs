//! Text formats for graphs and node data.
//!
//! Edge list: UTF-8, one `u v` pair per line separated by a tab or spaces,
//! 0-based integer ids. Blank lines and lines starting with `#` are ignored,
//! except a header line `# nodes: N` which fixes the node count.
//!
//! Features: headerless CSV, one row of comma-separated floats per node.
//!
//! Labels: whitespace-separated integers (conventionally one per line),
//! `-1` for an unlabeled node.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::data::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::graph::{BuildStats, Graph};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Compact the distinct ids that occur into `0..n` in ascending order.
    pub remap: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub stats: BuildStats,
    /// `original_ids[new_id]`, present only when remapping was requested.
    pub original_ids: Option<Vec<u64>>,
}

pub fn load_graph(text: &str) -> Result<LoadedGraph> {
    load_graph_with(text, LoadOptions::default())
}

pub fn load_graph_with(text: &str, options: LoadOptions) -> Result<LoadedGraph> {
    let mut header_nodes: Option<usize> = None;
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("nodes:") {
                let n = value.trim().parse::<usize>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad node-count header: {e}"),
                })?;
                header_nodes = Some(n);
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut id = |what: &str| -> Result<u64> {
            let tok = fields.next().ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("missing {what} id"),
            })?;
            tok.parse::<u64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("{what} id {tok:?} is not a non-negative integer"),
            })
        };
        let u = id("source")?;
        let v = id("target")?;
        if let Some(extra) = fields.next() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("unexpected trailing field {extra:?}"),
            });
        }
        raw.push((u, v, lineno));
    }

    let (edges, n, original_ids) = if options.remap {
        let ids: BTreeSet<u64> = raw.iter().flat_map(|&(u, v, _)| [u, v]).collect();
        let table: Vec<u64> = ids.into_iter().collect();
        let lookup = |x: u64| table.binary_search(&x).unwrap();
        let edges: Vec<_> = raw.iter().map(|&(u, v, _)| (lookup(u), lookup(v))).collect();
        let n = header_nodes.unwrap_or(table.len()).max(table.len());
        (edges, n, Some(table))
    } else {
        let max_id = raw.iter().map(|&(u, v, _)| u.max(v)).max();
        let n = match (header_nodes, max_id) {
            (Some(n), _) => n,
            (None, Some(m)) => m as usize + 1,
            (None, None) => 0,
        };
        let mut edges = Vec::with_capacity(raw.len());
        for &(u, v, lineno) in &raw {
            if u as usize >= n || v as usize >= n {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("id exceeds header node count {n}"),
                });
            }
            edges.push((u as usize, v as usize));
        }
        (edges, n, None)
    };

    let (graph, stats) = Graph::from_edges(n, edges)?;
    if stats.self_loops > 0 {
        log::warn!("dropped {} self-loop(s) from edge list", stats.self_loops);
    }
    if graph.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(LoadedGraph { graph, stats, original_ids })
}

pub fn load_features(csv: &str, n: usize) -> Result<FeatureMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut dim = None;
    for (idx, line) in csv.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                let x = tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("{tok:?} is not a number"),
                })?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::Parse { line: lineno, message: format!("non-finite value {tok}") })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let d = *dim.get_or_insert(row.len());
        if row.len() != d {
            return Err(Error::Parse {
                line: lineno,
                message: format!("ragged row: {} values, expected {d}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::Shape(format!("features have {} rows, graph has {n} nodes", rows.len())));
    }
    FeatureMatrix::new(Matrix::from_rows(&rows)?)
}

pub fn load_labels(text: &str, n: usize) -> Result<LabelVector> {
    let mut labels = Vec::with_capacity(n);
    for (idx, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            let value = tok.parse::<i64>().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("{tok:?} is not an integer label"),
            })?;
            labels.push(match value {
                -1 => None,
                x if x >= 0 => Some(x as usize),
                x => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("label {x} is below the -1 sentinel"),
                    })
                }
            });
        }
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} nodes", labels.len())));
    }
    LabelVector::new(labels)
}

pub fn load_node_data(features_csv: &str, labels_text: &str, n: usize) -> Result<(FeatureMatrix, LabelVector)> {
    Ok((load_features(features_csv, n)?, load_labels(labels_text, n)?))
}

/// Ordinary-to-ordinary edges only; super nodes are never persisted.
pub fn write_edge_list(graph: &Graph) -> String {
    let mut out = format!("# nodes: {}\n", graph.ordinary_count());
    for (u, v) in graph.edges().filter(|&(_, v)| !graph.is_super(v)) {
        writeln!(out, "{u}\t{v}").unwrap();
    }
    out
}

/// Shortest round-trip representation of every value.
pub fn write_features(features: &FeatureMatrix) -> String {
    let mut out = String::new();
    for v in 0..features.node_count() {
        let row: Vec<String> = features.row(v).iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_labels(labels: &LabelVector) -> String {
    let mut out = String::new();
    for l in labels.as_slice() {
        match l {
            Some(c) => writeln!(out, "{c}").unwrap(),
            None => out.push_str("-1\n"),
        }
    }
    out
}
