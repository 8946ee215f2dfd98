use std::rc::Rc;

use crate::cloud::{augment, downsample, AugmentParams, LabeledCloud};
use crate::error::{Error, Result};
use crate::geomfeat::{featurize, FeatureMatrix};
use crate::graph::{knn_graph, GraphTopology};
use crate::nn::{GraphBatch, ModelConfig};
use crate::tensor::{Real, Tensor};

/// A cloud ready for the network: selected feature columns, its spatial KNN
/// graph and labels as class ids.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    /// The (downsampled) cloud in its original coordinates.
    pub cloud: LabeledCloud,
    pub features: FeatureMatrix,
    pub topology: GraphTopology,
    pub labels: Option<Vec<usize>>,
}

impl PreparedCloud {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::domain("cloud has no labels"))
    }
}

/// Downsample to `points` (when given), center and scale to the unit
/// sphere, featurize, select the configured columns and build the graph.
pub fn prepare_cloud(
    cloud: &LabeledCloud,
    model: &ModelConfig,
    points: Option<usize>,
    seed: u64,
) -> Result<PreparedCloud> {
    let cloud = match points {
        Some(n) => downsample(cloud, n, seed)?,
        None => cloud.clone(),
    };
    let normalized = cloud.cloud.normalized();
    let features = featurize(&normalized, model.k_features)?.select(model.feature_set)?;
    let topology = knn_graph(&normalized, model.k_graph)?;
    let labels = cloud.labels().map(|l| l.iter().map(|c| c.id()).collect());
    Ok(PreparedCloud {
        cloud,
        features,
        topology,
        labels,
    })
}

/// Seed used to downsample the `index`-th cloud of a dataset.
pub fn cloud_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn prepare_dataset(clouds: &[LabeledCloud], model: &ModelConfig, points: usize, seed: u64) -> Result<Vec<PreparedCloud>> {
    clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.require_labels()?;
            prepare_cloud(c, model, Some(points), cloud_seed(seed, i))
        })
        .collect()
}

/// Re-prepares an already downsampled cloud after a random similarity
/// transform and jitter.
pub fn augmented(prepared: &PreparedCloud, model: &ModelConfig, seed: u64) -> Result<PreparedCloud> {
    let params = AugmentParams::for_cloud(&prepared.cloud.cloud, seed);
    let moved = augment(&prepared.cloud, &params)?;
    prepare_cloud(&moved, model, None, seed)
}

/// Disjoint union of several clouds into one batch, with concatenated labels
/// when every part is labeled.
pub fn collate<T: Real>(parts: &[&PreparedCloud]) -> Result<(GraphBatch<T>, Option<Rc<[usize]>>)> {
    if parts.is_empty() {
        return Err(Error::domain("cannot collate an empty batch"));
    }
    let topology = GraphTopology::disjoint_union(&parts.iter().map(|p| &p.topology).collect::<Vec<_>>());
    let features = FeatureMatrix::vstack(&parts.iter().map(|p| &p.features).collect::<Vec<_>>())?;
    let tensor = Tensor::from_f64(features.rows(), features.cols(), features.as_slice())?;
    let labels = parts
        .iter()
        .map(|p| p.labels.as_deref())
        .collect::<Option<Vec<_>>>()
        .map(|ls| ls.concat().into());
    Ok((GraphBatch::new(tensor, topology)?, labels))
}
