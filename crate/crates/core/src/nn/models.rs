use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::layers::{BatchNorm1d, Combine, EdgeConv, GatLayer, GcnLayer, Linear, TopKPool};
use super::{Architecture, Ctx, GraphBatch, GraphIndex, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Aggregation, ParamStore, Real, Var};

/// Two EdgeConv blocks, the input skip concatenation, two GAT layers and a
/// linear classifier.
#[derive(Debug, Clone)]
pub struct EdgeGat {
    pub edge1: EdgeConv,
    pub edge2: EdgeConv,
    pub gat1: GatLayer,
    pub gat2: GatLayer,
    pub head: Linear,
    pub dropout: f64,
    pub slope: f64,
}

impl EdgeGat {
    pub fn new<T: Real>(c: &ModelConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Self {
        let d = c.input_width();
        let dynamic = c.dynamic_knn.then_some(c.k_graph);
        let edge1 = EdgeConv::new(
            store,
            rng,
            "edge1",
            d,
            c.edge_hidden,
            c.edge_out,
            Aggregation::Sum,
            c.dropout,
            c.slope,
            dynamic,
        );
        let edge2 = EdgeConv::new(
            store,
            rng,
            "edge2",
            c.edge_out,
            c.edge_hidden,
            c.edge_out,
            Aggregation::Mean,
            c.dropout,
            c.slope,
            dynamic,
        );
        let gat1 = GatLayer::new(store, rng, "gat1", d + c.edge_out, c.heads, c.head_width, Combine::Concat, c.slope);
        let gat2 = GatLayer::new(store, rng, "gat2", gat1.out_width(), c.heads, c.head_width, Combine::Average, c.slope);
        let head = Linear::new(store, rng, "head", gat2.out_width(), c.num_classes, true);
        EdgeGat {
            edge1,
            edge2,
            gat1,
            gat2,
            head,
            dropout: c.dropout,
            slope: c.slope,
        }
    }

    /// `[d_in, hidden, out]` of the residual MLP in each EdgeConv block.
    pub fn block_widths(&self) -> [[usize; 3]; 2] {
        [self.edge1.mlp.widths(), self.edge2.mlp.widths()]
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        ctx.trace("input", x);
        let h1 = self.edge1.forward(ctx, x, gi)?;
        ctx.trace("edgeconv1", h1);
        let h2 = self.edge2.forward(ctx, h1, gi)?;
        ctx.trace("edgeconv2", h2);
        let h = Var::concat(&[x, h2])?;
        ctx.trace("concat", h);
        let g1 = self.gat1.forward(ctx, h, gi)?;
        ctx.trace("gat1", g1);
        let g1 = ctx.dropout(g1.leaky_relu(self.slope), self.dropout)?;
        let g2 = self.gat2.forward(ctx, g1, gi)?;
        ctx.trace("gat2", g2);
        let g2 = ctx.dropout(g2.leaky_relu(self.slope), self.dropout)?;
        let out = self.head.forward(ctx, g2)?;
        ctx.trace("logits", out);
        Ok(out)
    }
}

/// Stacked graph convolutions with ReLU and dropout; the last layer emits raw
/// logits.
#[derive(Debug, Clone)]
pub struct Gcn {
    pub layers: Vec<GcnLayer>,
    pub dropout: f64,
}

impl Gcn {
    pub fn new<T: Real>(c: &ModelConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Self {
        let widths = [c.input_width(), c.hidden, c.hidden, c.num_classes];
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| GcnLayer::new(store, rng, &format!("gcn{}", i + 1), w[0], w[1]))
            .collect();
        Gcn {
            layers,
            dropout: c.dropout,
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(ctx, h, gi)?;
            if i < last {
                h = ctx.dropout(h.relu(), self.dropout)?;
            }
        }
        Ok(h)
    }
}

/// Two attention layers, each followed by batch norm, LeakyReLU and dropout,
/// then a linear classifier.
#[derive(Debug, Clone)]
pub struct GatNet {
    pub gat1: GatLayer,
    pub bn1: BatchNorm1d,
    pub gat2: GatLayer,
    pub bn2: BatchNorm1d,
    pub head: Linear,
    pub dropout: f64,
    pub slope: f64,
}

impl GatNet {
    pub fn new<T: Real>(c: &ModelConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Self {
        let gat1 = GatLayer::new(store, rng, "gat1", c.input_width(), c.heads, c.head_width, Combine::Concat, c.slope);
        let bn1 = BatchNorm1d::new(store, "bn1", gat1.out_width());
        let gat2 = GatLayer::new(store, rng, "gat2", gat1.out_width(), c.heads, c.head_width, Combine::Average, c.slope);
        let bn2 = BatchNorm1d::new(store, "bn2", gat2.out_width());
        let head = Linear::new(store, rng, "head", gat2.out_width(), c.num_classes, true);
        GatNet {
            gat1,
            bn1,
            gat2,
            bn2,
            head,
            dropout: c.dropout,
            slope: c.slope,
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        let h = self.gat1.forward(ctx, x, gi)?;
        let h = ctx.dropout(self.bn1.forward(ctx, h)?.leaky_relu(self.slope), self.dropout)?;
        let h = self.gat2.forward(ctx, h, gi)?;
        let h = ctx.dropout(self.bn2.forward(ctx, h)?.leaky_relu(self.slope), self.dropout)?;
        self.head.forward(ctx, h)
    }
}

/// Graph U-Net: GCN encoder with top-k pooling per level, unpooling decoder
/// with skip sums. With `normalize` every hidden GCN layer is followed by
/// batch norm and dropout.
#[derive(Debug, Clone)]
pub struct GcnUnet {
    pub input: GcnLayer,
    pub pools: Vec<TopKPool>,
    pub down: Vec<GcnLayer>,
    pub up: Vec<GcnLayer>,
    pub output: GcnLayer,
    /// One per hidden GCN layer in call order: input, down..., up...
    pub norms: Vec<BatchNorm1d>,
    pub dropout: f64,
}

impl GcnUnet {
    pub fn new<T: Real>(c: &ModelConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, normalize: bool) -> Self {
        let h = c.hidden;
        let depth = c.unet_depth;
        let input = GcnLayer::new(store, rng, "enc0", c.input_width(), h);
        let mut pools = Vec::with_capacity(depth);
        let mut down = Vec::with_capacity(depth);
        for l in 1..=depth {
            pools.push(TopKPool::new(store, rng, &format!("pool{l}"), h, c.pool_ratio));
            down.push(GcnLayer::new(store, rng, &format!("enc{l}"), h, h));
        }
        let up = (1..depth)
            .rev()
            .map(|l| GcnLayer::new(store, rng, &format!("dec{l}"), h, h))
            .collect();
        let output = GcnLayer::new(store, rng, "dec0", h, c.num_classes);
        let norms = if normalize {
            (0..2 * depth).map(|i| BatchNorm1d::new(store, &format!("bn{i}"), h)).collect()
        } else {
            Vec::new()
        };
        GcnUnet {
            input,
            pools,
            down,
            up,
            output,
            norms,
            dropout: if normalize { c.dropout } else { 0.0 },
        }
    }

    fn act<'g, T: Real>(&self, ctx: &Ctx<'g, T>, h: Var<'g, T>, slot: usize) -> Result<Var<'g, T>> {
        match self.norms.get(slot) {
            Some(bn) => ctx.dropout(bn.forward(ctx, h)?.relu(), self.dropout),
            None => Ok(h.relu()),
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        let mut slot = 0;
        let mut h = self.act(ctx, self.input.forward(ctx, x, gi)?, slot)?;
        let mut levels: Vec<(Var<'g, T>, Rc<[usize]>)> = Vec::new();
        let mut index = gi.clone();
        let mut graphs = Vec::new();
        for (pool, conv) in self.pools.iter().zip(&self.down) {
            let p = pool.forward(ctx, h, &index)?;
            levels.push((h, p.kept.clone()));
            graphs.push(index);
            index = p.index;
            slot += 1;
            h = self.act(ctx, conv.forward(ctx, p.x, &index)?, slot)?;
        }
        let mut up = self.up.iter();
        while let Some((skip, kept)) = levels.pop() {
            let g = graphs.pop().expect("one graph per level");
            h = TopKPool::unpool(h, &kept, skip)?;
            h = match up.next() {
                Some(conv) if !levels.is_empty() => {
                    slot += 1;
                    self.act(ctx, conv.forward(ctx, h, &g)?, slot)?
                }
                _ => self.output.forward(ctx, h, &g)?,
            };
        }
        if self.pools.is_empty() {
            h = self.output.forward(ctx, h, gi)?;
        }
        Ok(h)
    }
}

/// Shared per-point MLP, global max per cloud broadcast back to every point,
/// and an MLP head. Uses no graph edges.
#[derive(Debug, Clone)]
pub struct PointNet {
    pub local1: Linear,
    pub bn1: BatchNorm1d,
    pub local2: Linear,
    pub bn2: BatchNorm1d,
    pub fc: Linear,
    pub bn3: BatchNorm1d,
    pub head: Linear,
    pub dropout: f64,
}

impl PointNet {
    pub fn new<T: Real>(c: &ModelConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Self {
        let local1 = Linear::new(store, rng, "local1", c.input_width(), 64, true);
        let bn1 = BatchNorm1d::new(store, "bn1", 64);
        let local2 = Linear::new(store, rng, "local2", 64, 128, true);
        let bn2 = BatchNorm1d::new(store, "bn2", 128);
        let fc = Linear::new(store, rng, "fc", 64 + 128, 64, true);
        let bn3 = BatchNorm1d::new(store, "bn3", 64);
        let head = Linear::new(store, rng, "head", 64, c.num_classes, true);
        PointNet {
            local1,
            bn1,
            local2,
            bn2,
            fc,
            bn3,
            head,
            dropout: c.dropout,
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        let h1 = self.bn1.forward(ctx, self.local1.forward(ctx, x)?)?.relu();
        let h2 = self.bn2.forward(ctx, self.local2.forward(ctx, h1)?)?.relu();
        let clouds = gi.batch.iter().max().map_or(0, |m| m + 1);
        let global = h2.scatter(&gi.batch, clouds, Aggregation::Max)?.gather(&gi.batch)?;
        let h = Var::concat(&[h1, global])?;
        let h = self.bn3.forward(ctx, self.fc.forward(ctx, h)?)?.relu();
        let h = ctx.dropout(h, self.dropout)?;
        self.head.forward(ctx, h)
    }
}

/// Any model of the zoo behind one forward signature.
#[derive(Debug, Clone)]
pub enum Network {
    EdgeGat(EdgeGat),
    Gcn(Gcn),
    Gat(GatNet),
    GcnUnet(GcnUnet),
    PointNet(PointNet),
}

impl Network {
    /// Registers the model's parameters in `store` (which should be empty).
    pub fn new<T: Real>(config: &ModelConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        Ok(match config.architecture {
            Architecture::EdgeGat => Network::EdgeGat(EdgeGat::new(config, store, rng)),
            Architecture::Gcn => Network::Gcn(Gcn::new(config, store, rng)),
            Architecture::Gat => Network::Gat(GatNet::new(config, store, rng)),
            Architecture::GcnUnet => Network::GcnUnet(GcnUnet::new(config, store, rng, false)),
            Architecture::GcnUnet2 => Network::GcnUnet(GcnUnet::new(config, store, rng, true)),
            Architecture::PointNet => Network::PointNet(PointNet::new(config, store, rng)),
        })
    }

    pub fn input_width(&self) -> usize {
        match self {
            Network::EdgeGat(m) => m.edge1.d_in,
            Network::Gcn(m) => m.layers[0].lin.d_in,
            Network::Gat(m) => m.gat1.d_in,
            Network::GcnUnet(m) => m.input.lin.d_in,
            Network::PointNet(m) => m.local1.d_in,
        }
    }

    /// Per-vertex class logits.
    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, batch: &GraphBatch<T>) -> Result<Var<'g, T>> {
        if batch.features.cols() != self.input_width() {
            return Err(Error::Shape {
                op: "model_forward",
                left: batch.features.shape(),
                right: [batch.num_vertices(), self.input_width()],
            });
        }
        let x = ctx.graph.constant(batch.features.clone());
        self.forward_var(ctx, x, &batch.index)
    }

    /// Forward from an existing tape value, e.g. a differentiable input.
    pub fn forward_var<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        match self {
            Network::EdgeGat(m) => m.forward(ctx, x, gi),
            Network::Gcn(m) => m.forward(ctx, x, gi),
            Network::Gat(m) => m.forward(ctx, x, gi),
            Network::GcnUnet(m) => m.forward(ctx, x, gi),
            Network::PointNet(m) => m.forward(ctx, x, gi),
        }
    }
}
