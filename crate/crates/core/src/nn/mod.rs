//! Layers and model assemblies: residual MLP, EdgeConv, graph attention,
//! GCN, top-k pooling, batch norm, dropout, and the model zoo.

mod config;
mod layers;
mod models;

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{normalize_adjacency, GraphTopology};
use crate::tensor::{Graph, ParamId, ParamStore, Real, Tensor, Var};

pub use config::{parse_value, Architecture, ModelConfig};
pub use layers::{BatchNorm1d, Combine, EdgeConv, GatLayer, GcnLayer, Linear, Pooled, ResidualMlp, TopKPool};
pub use models::{EdgeGat, GatNet, Gcn, GcnUnet, Network, PointNet};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Index arrays derived from one graph level, shared by the layers that run
/// on it.
#[derive(Debug, Clone)]
pub struct GraphIndex<T> {
    pub topology: GraphTopology,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    /// Edges plus one self-loop per vertex, for attention.
    pub loop_src: Rc<[usize]>,
    pub loop_dst: Rc<[usize]>,
    /// Normalized adjacency entries, for GCN.
    pub adj_src: Rc<[usize]>,
    pub adj_dst: Rc<[usize]>,
    pub adj_weight: Tensor<T>,
    pub batch: Rc<[usize]>,
}

impl<T: Real> GraphIndex<T> {
    pub fn new(topology: GraphTopology) -> Self {
        let n = topology.num_vertices();
        let loop_src: Vec<usize> = topology.sources().iter().copied().chain(0..n).collect();
        let loop_dst: Vec<usize> = topology.destinations().iter().copied().chain(0..n).collect();
        let adj = normalize_adjacency(&topology);
        let adj_weight = Tensor::from_f64(adj.weight.len(), 1, &adj.weight).expect("one weight per entry");
        GraphIndex {
            src: topology.sources().into(),
            dst: topology.destinations().into(),
            loop_src: loop_src.into(),
            loop_dst: loop_dst.into(),
            adj_src: adj.src.as_slice().into(),
            adj_dst: adj.dst.as_slice().into(),
            adj_weight,
            batch: topology.batch().into(),
            topology,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.topology.num_vertices()
    }
}

/// Model input: vertex features and the graph they live on.
#[derive(Debug, Clone)]
pub struct GraphBatch<T> {
    pub features: Tensor<T>,
    pub index: GraphIndex<T>,
}

impl<T: Real> GraphBatch<T> {
    pub fn new(features: Tensor<T>, topology: GraphTopology) -> Result<Self> {
        if features.rows() != topology.num_vertices() {
            return Err(crate::error::Error::Shape {
                op: "graph_batch",
                left: features.shape(),
                right: [topology.num_vertices(), 0],
            });
        }
        Ok(GraphBatch {
            features,
            index: GraphIndex::new(topology),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Debug, Clone)]
struct BnUpdate {
    mean: ParamId,
    var: ParamId,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

/// Attention coefficients of one layer: `edges × heads`, grouped by
/// `destinations`.
#[derive(Debug, Clone)]
pub struct AttentionRecord<T> {
    pub layer: String,
    pub alpha: Tensor<T>,
    pub destinations: Rc<[usize]>,
}

/// Per-forward state: the tape, parameter values, train/eval mode, the
/// dropout stream and optional introspection records.
pub struct Ctx<'g, T: Real> {
    pub graph: &'g Graph<T>,
    pub store: &'g ParamStore<T>,
    pub training: bool,
    rng: RefCell<ChaCha8Rng>,
    cache: RefCell<HashMap<ParamId, Var<'g, T>>>,
    bn_updates: RefCell<Vec<BnUpdate>>,
    record: bool,
    trace: RefCell<Vec<(String, [usize; 2])>>,
    attention: RefCell<Vec<AttentionRecord<T>>>,
}

impl<'g, T: Real> Ctx<'g, T> {
    pub fn new(graph: &'g Graph<T>, store: &'g ParamStore<T>, training: bool, seed: u64) -> Self {
        Ctx {
            graph,
            store,
            training,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            cache: RefCell::new(HashMap::new()),
            bn_updates: RefCell::new(Vec::new()),
            record: false,
            trace: RefCell::new(Vec::new()),
            attention: RefCell::new(Vec::new()),
        }
    }

    /// Enables shape tracing and attention recording.
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn param(&self, id: ParamId) -> Var<'g, T> {
        *self
            .cache
            .borrow_mut()
            .entry(id)
            .or_insert_with(|| self.store.var(self.graph, id))
    }

    /// Inverted dropout; identity outside training or when `p == 0`.
    pub fn dropout(&self, x: Var<'g, T>, p: f64) -> Result<Var<'g, T>> {
        if !self.training || p <= 0.0 {
            return Ok(x);
        }
        let threshold = (p * 4_294_967_296.0).min(u32::MAX as f64) as u32;
        let mut rng = self.rng.borrow_mut();
        let keep: Vec<bool> = (0..x.value().len()).map(|_| rng.random::<u32>() >= threshold).collect();
        x.masked_scale(keep, 1.0 / (1.0 - p))
    }

    pub fn trace(&self, name: &str, v: Var<'g, T>) {
        if self.record {
            self.trace.borrow_mut().push((name.to_string(), v.shape()));
        }
    }

    fn record_attention(&self, layer: &str, alpha: Var<'g, T>, dst: &Rc<[usize]>) {
        if self.record {
            self.attention.borrow_mut().push(AttentionRecord {
                layer: layer.to_string(),
                alpha: alpha.value().clone(),
                destinations: dst.clone(),
            });
        }
    }

    fn push_bn_update(&self, mean: ParamId, var: ParamId, batch_mean: Vec<f64>, batch_var: Vec<f64>) {
        self.bn_updates.borrow_mut().push(BnUpdate {
            mean,
            var,
            batch_mean,
            batch_var,
        });
    }

    pub fn shapes(&self) -> Vec<(String, [usize; 2])> {
        self.trace.borrow().clone()
    }

    pub fn attention(&self) -> Vec<AttentionRecord<T>> {
        self.attention.borrow().clone()
    }

    /// Running-statistics updates gathered during a training forward pass,
    /// to be applied with [`apply_bn_updates`].
    pub fn bn_updates(&self) -> BnUpdates {
        BnUpdates(self.bn_updates.borrow().clone())
    }
}

/// Pending batch-norm running-statistics updates.
#[derive(Debug, Clone, Default)]
pub struct BnUpdates(Vec<BnUpdate>);

impl BnUpdates {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `running ← (1 − momentum)·running + momentum·batch`.
pub fn apply_bn_updates<T: Real>(store: &mut ParamStore<T>, updates: &BnUpdates) {
    let m = BN_MOMENTUM;
    for u in &updates.0 {
        for (id, batch) in [(u.mean, &u.batch_mean), (u.var, &u.batch_var)] {
            for (r, &b) in store.get_mut(id).data_mut().iter_mut().zip(batch) {
                *r = T::lit((1.0 - m) * r.f64() + m * b);
            }
        }
    }
}

/// Uniform Glorot initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::lit(rng.random_range(-a..=a))).collect();
    Tensor::from_vec(rows, cols, data).expect("sized buffer")
}
