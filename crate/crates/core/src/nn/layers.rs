use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::{glorot, Ctx, GraphIndex, BN_EPS};
use crate::error::{Error, Result};
use crate::graph::knn_feature_graph;
use crate::tensor::{Aggregation, ParamId, ParamStore, Real, Tensor, Var};

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(rng, d_in, d_out, d_in, d_out), true);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(1, d_out), true));
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let y = x.matmul(ctx.param(self.weight))?;
        match self.bias {
            Some(b) => y.add_row(ctx.param(b)),
            None => Ok(y),
        }
    }
}

/// Batch norm over rows with learned scale/shift and running statistics
/// (momentum 0.1) used outside training.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm1d {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, width: usize) -> Self {
        BatchNorm1d {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(1, width, T::one()), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(1, width), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(1, width), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(1, width, T::one()), false),
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let (gamma, beta) = (ctx.param(self.gamma), ctx.param(self.beta));
        if ctx.training {
            let bn = x.batch_norm_train(gamma, beta, BN_EPS)?;
            ctx.push_bn_update(self.running_mean, self.running_var, bn.mean, bn.var);
            Ok(bn.out)
        } else {
            let mean = ctx.store.get(self.running_mean).data();
            let var = ctx.store.get(self.running_var).data();
            x.batch_norm_eval(gamma, beta, mean, var, BN_EPS)
        }
    }
}

/// `y = F(x) + S(x)` with `F = Linear → BatchNorm → LeakyReLU → Dropout →
/// Linear` and `S` the identity when widths agree, else a bias-free
/// projection.
#[derive(Debug, Clone)]
pub struct ResidualMlp {
    pub lin1: Linear,
    pub bn: BatchNorm1d,
    pub lin2: Linear,
    pub skip: Option<Linear>,
    pub dropout: f64,
    pub slope: f64,
}

impl ResidualMlp {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        dropout: f64,
        slope: f64,
    ) -> Self {
        let lin1 = Linear::new(store, rng, &format!("{name}.f1"), d_in, d_hidden, true);
        let bn = BatchNorm1d::new(store, &format!("{name}.bn"), d_hidden);
        let lin2 = Linear::new(store, rng, &format!("{name}.f2"), d_hidden, d_out, true);
        let skip = (d_in != d_out).then(|| Linear::new(store, rng, &format!("{name}.skip"), d_in, d_out, false));
        ResidualMlp {
            lin1,
            bn,
            lin2,
            skip,
            dropout,
            slope,
        }
    }

    /// `[d_in, d_hidden, d_out]`.
    pub fn widths(&self) -> [usize; 3] {
        [self.lin1.d_in, self.lin1.d_out, self.lin2.d_out]
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let skip = match &self.skip {
            Some(s) => s.forward(ctx, x)?,
            None => x,
        };
        self.tail(ctx, self.lin1.forward(ctx, x)?, skip)
    }

    /// Everything after the first linear layer, given its output and the
    /// skip-path value.
    pub fn tail<'g, T: Real>(&self, ctx: &Ctx<'g, T>, pre: Var<'g, T>, skip: Var<'g, T>) -> Result<Var<'g, T>> {
        self.lin2.forward(ctx, self.hidden(ctx, pre)?)?.add(skip)
    }

    /// Batch norm, activation and dropout applied to the first linear
    /// layer's output.
    pub fn hidden<'g, T: Real>(&self, ctx: &Ctx<'g, T>, pre: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.bn.forward(ctx, pre)?.leaky_relu(self.slope);
        ctx.dropout(h, self.dropout)
    }
}

/// EdgeConv: for each edge `j → i` the residual MLP maps
/// `[h_i ‖ h_j − h_i]`, and results are aggregated onto `i`.
#[derive(Debug, Clone)]
pub struct EdgeConv {
    pub mlp: ResidualMlp,
    pub aggregation: Aggregation,
    /// Rebuild the graph from the current features with this `k`.
    pub dynamic_k: Option<usize>,
    pub d_in: usize,
}

impl EdgeConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        aggregation: Aggregation,
        dropout: f64,
        slope: f64,
        dynamic_k: Option<usize>,
    ) -> Self {
        EdgeConv {
            mlp: ResidualMlp::new(store, rng, &format!("{name}.mlp"), 2 * d_in, d_hidden, d_out, dropout, slope),
            aggregation,
            dynamic_k,
            d_in,
        }
    }

    fn edges<T: Real>(&self, h: Var<'_, T>, gi: &GraphIndex<T>) -> Result<(Rc<[usize]>, Rc<[usize]>)> {
        match self.dynamic_k {
            None => Ok((gi.src.clone(), gi.dst.clone())),
            Some(k) => {
                let feats = h.value().to_f64();
                let g = knn_feature_graph(&feats, h.cols(), &gi.batch, k)?;
                Ok((g.sources().into(), g.destinations().into()))
            }
        }
    }

    /// Edge features are never materialized. The first linear layer is split
    /// into the rows acting on `h_i` and on `h_j − h_i`, applied per vertex
    /// and gathered per edge. Because sum and mean aggregation are linear,
    /// the second linear layer, its bias and the skip path are applied after
    /// aggregation, at vertex level.
    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, h: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        let d = self.d_in;
        if h.cols() != d {
            return Err(Error::Shape {
                op: "edgeconv",
                left: h.shape(),
                right: [2 * d, self.mlp.lin1.d_out],
            });
        }
        let (src, dst) = self.edges(h, gi)?;
        if self.aggregation == Aggregation::Max {
            return self.mlp.forward(ctx, edge_input(h, &src, &dst)?)?.scatter(&dst, h.rows(), Aggregation::Max);
        }
        let n = h.rows();
        let mut degree = vec![0usize; n];
        for &i in dst.iter() {
            degree[i] += 1;
        }
        let mean = self.aggregation == Aggregation::Mean;
        let weight: Vec<f64> = dst
            .iter()
            .map(|&i| if mean { 1.0 / degree[i] as f64 } else { 1.0 })
            .collect();
        let count: Vec<f64> = degree
            .iter()
            .map(|&k| if mean { f64::from(u8::from(k > 0)) } else { k as f64 })
            .collect();
        let weight = ctx.graph.constant(Tensor::from_f64(dst.len(), 1, &weight)?);
        let count = ctx.graph.constant(Tensor::from_f64(n, 1, &count)?);

        let w1 = ctx.param(self.mlp.lin1.weight);
        let top = w1.slice_rows(0, d)?;
        let bot = w1.slice_rows(d, d)?;
        let mut centre_term = h.matmul(top.sub(bot)?)?;
        if let Some(b) = self.mlp.lin1.bias {
            centre_term = centre_term.add_row(ctx.param(b))?;
        }
        let pre = centre_term.pair_sum(&dst, h.matmul(bot)?, &src)?;
        let z = self.mlp.hidden(ctx, pre)?.scatter(&dst, n, self.aggregation)?;
        let mut out = z.matmul(ctx.param(self.mlp.lin2.weight))?;
        if let Some(b) = self.mlp.lin2.bias {
            out = out.add(count.matmul(ctx.param(b))?)?;
        }
        let centre = h.mul_col(count)?;
        let neighbours = h.edge_weighted_sum(weight, &src, &dst, n)?;
        let input = Var::concat(&[centre, neighbours.sub(centre)?])?;
        let skip = match &self.mlp.skip {
            Some(s) => s.forward(ctx, input)?,
            None => input,
        };
        out.add(skip)
    }

    /// Reference path that builds the `|E| × 2d` edge matrix explicitly.
    pub fn forward_materialized<'g, T: Real>(
        &self,
        ctx: &Ctx<'g, T>,
        h: Var<'g, T>,
        gi: &GraphIndex<T>,
    ) -> Result<Var<'g, T>> {
        let (src, dst) = self.edges(h, gi)?;
        let e = self.mlp.forward(ctx, edge_input(h, &src, &dst)?)?;
        e.scatter(&dst, h.rows(), self.aggregation)
    }
}

/// `[h_i ‖ h_j − h_i]` for every edge `j → i`.
pub(crate) fn edge_input<'g, T: Real>(h: Var<'g, T>, src: &Rc<[usize]>, dst: &Rc<[usize]>) -> Result<Var<'g, T>> {
    let hi = h.gather(dst)?;
    let hj = h.gather(src)?;
    Var::concat(&[hi, hj.sub(hi)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Concat,
    Average,
}

/// Multi-head additive attention over the graph with self-loops:
/// `α_ij = softmax_j(LeakyReLU(a_dstᵀ W h_i + a_srcᵀ W h_j))`,
/// `h'_i = Σ_j α_ij W h_j`, heads concatenated or averaged, plus a bias.
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub name: String,
    pub weight: ParamId,
    pub att_src: ParamId,
    pub att_dst: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub heads: usize,
    pub width: usize,
    pub combine: Combine,
    pub slope: f64,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        heads: usize,
        width: usize,
        combine: Combine,
        slope: f64,
    ) -> Self {
        let hw = heads * width;
        let out = match combine {
            Combine::Concat => hw,
            Combine::Average => width,
        };
        GatLayer {
            name: name.to_string(),
            weight: store.add(format!("{name}.weight"), glorot(rng, d_in, hw, d_in, hw), true),
            att_src: store.add(format!("{name}.att_src"), glorot(rng, 1, hw, width, 1), true),
            att_dst: store.add(format!("{name}.att_dst"), glorot(rng, 1, hw, width, 1), true),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(1, out), true),
            d_in,
            heads,
            width,
            combine,
            slope,
        }
    }

    pub fn out_width(&self) -> usize {
        match self.combine {
            Combine::Concat => self.heads * self.width,
            Combine::Average => self.width,
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        let n = x.rows();
        let wh = x.matmul(ctx.param(self.weight))?;
        let s_src = wh.head_dot(ctx.param(self.att_src), self.heads)?;
        let s_dst = wh.head_dot(ctx.param(self.att_dst), self.heads)?;
        let logits = s_dst
            .pair_sum(&gi.loop_dst, s_src, &gi.loop_src)?
            .leaky_relu(self.slope);
        let alpha = logits.segment_softmax(&gi.loop_dst)?;
        ctx.record_attention(&self.name, alpha, &gi.loop_dst);
        let mut out = wh.edge_weighted_sum(alpha, &gi.loop_src, &gi.loop_dst, n)?;
        if self.combine == Combine::Average && self.heads > 1 {
            let mut acc = out.slice_cols(0, self.width)?;
            for h in 1..self.heads {
                acc = acc.add(out.slice_cols(h * self.width, self.width)?)?;
            }
            out = acc.scale(1.0 / self.heads as f64);
        }
        out.add_row(ctx.param(self.bias))
    }
}

/// `H' = D̃^{-1/2}(A + I)D̃^{-1/2} H W + b`; activation is left to the caller.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub lin: Linear,
    pub bias: ParamId,
}

impl GcnLayer {
    pub fn new<T: Real>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize) -> Self {
        GcnLayer {
            lin: Linear::new(store, rng, name, d_in, d_out, false),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(1, d_out), true),
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Var<'g, T>> {
        let xw = self.lin.forward(ctx, x)?;
        let w = ctx.graph.constant(gi.adj_weight.clone());
        xw.edge_weighted_sum(w, &gi.adj_src, &gi.adj_dst, x.rows())?
            .add_row(ctx.param(self.bias))
    }
}

/// Output of [`TopKPool::forward`].
pub struct Pooled<'g, T> {
    pub x: Var<'g, T>,
    pub index: GraphIndex<T>,
    /// Kept vertex ids in the input numbering, ascending.
    pub kept: Rc<[usize]>,
}

/// Keeps the `⌈ratio·N_g⌉` highest-scoring vertices of each graph, with
/// score `tanh(x p)` gating the kept rows. `ratio = 1` is the identity.
#[derive(Debug, Clone)]
pub struct TopKPool {
    /// Absent when `ratio = 1`.
    pub score: Option<ParamId>,
    pub ratio: f64,
}

impl TopKPool {
    pub fn new<T: Real>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, d_in: usize, ratio: f64) -> Self {
        TopKPool {
            score: (ratio < 1.0).then(|| store.add(format!("{name}.score"), glorot(rng, d_in, 1, d_in, 1), true)),
            ratio,
        }
    }

    pub fn forward<'g, T: Real>(&self, ctx: &Ctx<'g, T>, x: Var<'g, T>, gi: &GraphIndex<T>) -> Result<Pooled<'g, T>> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::domain(format!("pool ratio {} outside (0, 1]", self.ratio)));
        }
        let n = x.rows();
        let Some(score) = self.score.filter(|_| self.ratio < 1.0) else {
            return Ok(Pooled {
                x,
                index: gi.clone(),
                kept: (0..n).collect::<Vec<_>>().into(),
            });
        };
        let score = x.matmul(ctx.param(score))?.tanh();
        let kept: Rc<[usize]> = select_top(&score.value().to_f64(), &gi.batch, self.ratio).into();
        let gate = score.gather(&kept)?;
        let pooled = x.gather(&kept)?.mul_col(gate)?;
        Ok(Pooled {
            x: pooled,
            index: GraphIndex::new(gi.topology.induced(&kept)),
            kept,
        })
    }

    /// Scatters pooled rows back to their positions (zeros elsewhere) and
    /// adds the skip features.
    pub fn unpool<'g, T: Real>(x: Var<'g, T>, kept: &Rc<[usize]>, skip: Var<'g, T>) -> Result<Var<'g, T>> {
        x.scatter(kept, skip.rows(), Aggregation::Sum)?.add(skip)
    }
}

/// Per batch segment, the `⌈ratio·n⌉` vertices with the highest score (ties
/// to the lower index), returned in ascending id order.
pub(crate) fn select_top(score: &[f64], batch: &[usize], ratio: f64) -> Vec<usize> {
    let groups = batch.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); groups];
    for (v, &b) in batch.iter().enumerate() {
        members[b].push(v);
    }
    let mut kept = Vec::new();
    for mut m in members.into_iter().filter(|m| !m.is_empty()) {
        let keep = ((ratio * m.len() as f64).ceil() as usize).clamp(1, m.len());
        m.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
        kept.extend_from_slice(&m[..keep]);
    }
    kept.sort_unstable();
    kept
}
