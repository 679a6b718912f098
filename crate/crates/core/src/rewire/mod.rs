//! Graph rewiring with super nodes.
//!
//! A structure-aware super node is attached to every member of one cluster
//! of a graph partition; a content-aware super node to every node sharing a
//! (true or pseudo) label. Original edges are always kept.

mod assignment;
mod kmeans;
mod partition;

pub use assignment::{read_assignment, write_assignment, AssignmentFile, AssignmentHeader, AssignmentMode};
pub use kmeans::{kmeans_pseudo_labels, KMEANS_MAX_ITERS, KMEANS_REL_TOL};
pub use partition::{cut_size, partition, PartitionAssignment, FENNEL_GAMMA, PARTITION_RESTARTS};

use serde::{Deserialize, Serialize};

use crate::data::LabelVector;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Anything that maps ordinary nodes to at most one of `group_count` groups.
pub trait GroupAssignment {
    fn group_count(&self) -> usize;
    fn node_count(&self) -> usize;
    fn group_of(&self, v: usize) -> Option<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentSource {
    TrainLabels,
    Kmeans,
}

/// Content groups: training labels or feature-cluster pseudo-labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentAssignment {
    pub groups: Vec<Option<usize>>,
    pub count: usize,
    pub source: ContentSource,
}

impl ContentAssignment {
    /// One group per class; only the listed training nodes are assigned,
    /// so labels outside the training split are never read.
    pub fn from_train_labels(labels: &LabelVector, train: &[usize]) -> Result<Self> {
        let mut groups = vec![None; labels.len()];
        for &v in train {
            if v >= labels.len() {
                return Err(Error::InvalidValue(format!("training node {v} has no label entry")));
            }
            groups[v] = labels.get(v);
        }
        Ok(Self { groups, count: labels.class_count(), source: ContentSource::TrainLabels })
    }

    pub fn assigned(&self) -> usize {
        self.groups.iter().flatten().count()
    }
}

impl GroupAssignment for ContentAssignment {
    fn group_count(&self) -> usize {
        self.count
    }

    fn node_count(&self) -> usize {
        self.groups.len()
    }

    fn group_of(&self, v: usize) -> Option<usize> {
        self.groups[v]
    }
}

#[derive(Debug, Clone)]
pub struct Rewired {
    pub graph: Graph,
    /// Groups without members; their super nodes are isolated.
    pub empty_groups: Vec<usize>,
}

/// Appends one super node per group after the existing nodes; super node
/// `g` (id `graph.node_count() + g`) links to exactly the members of group `g`.
pub fn add_super_nodes(graph: &Graph, assignment: &impl GroupAssignment) -> Result<Rewired> {
    if assignment.node_count() > graph.ordinary_count() {
        return Err(Error::Shape(format!(
            "assignment covers {} nodes but graph has {} ordinary nodes",
            assignment.node_count(),
            graph.ordinary_count()
        )));
    }
    let mut groups = vec![Vec::new(); assignment.group_count()];
    for v in 0..assignment.node_count() {
        if let Some(g) = assignment.group_of(v) {
            if g >= groups.len() {
                return Err(Error::InvalidValue(format!(
                    "node {v} assigned to group {g} of {}",
                    groups.len()
                )));
            }
            groups[g].push(v);
        }
    }
    let empty_groups: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].is_empty()).collect();
    if !empty_groups.is_empty() {
        log::warn!("super node(s) for empty group(s) {empty_groups:?} are isolated");
    }
    Ok(Rewired { graph: graph.with_super_nodes(&groups), empty_groups })
}
