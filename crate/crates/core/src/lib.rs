//! Point-cloud semantic segmentation (soil, stem, leaf) with PCA
//! eigen-features, KNN graphs, EdgeConv and graph attention.

pub mod cli;
pub mod cloud;
pub mod error;
pub mod geomfeat;
pub mod graph;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
