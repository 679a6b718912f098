//! Graph loading, normalization, personalized PageRank, super-node rewiring
//! and token-list construction for graph transformers.

pub mod data;
pub mod error;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod ppr;
pub mod rewire;
pub mod synth;
pub mod theory;
pub mod tokenize;
pub mod transition;

pub use data::{FeatureMatrix, LabelVector, Splits};
pub use error::{Error, Result};
pub use graph::Graph;
pub use matrix::Matrix;
pub use transition::{normalize, NormKind, TransitionMatrix};
