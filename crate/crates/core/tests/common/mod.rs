//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use edgegat::cloud::{Point3, PointCloud};
use edgegat::graph::{knn_graph, GraphTopology};
use edgegat::nn::{Ctx, GraphIndex};
use edgegat::tensor::{Graph, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in the unit cube; distance ties have probability zero.
pub fn random_points(n: usize, seed: u64) -> Vec<Point3> {
    let mut r = rng(seed);
    (0..n).map(|_| [r.random(), r.random(), r.random()]).collect()
}

pub fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub fn random_graph(n: usize, k: usize, seed: u64) -> (PointCloud, GraphTopology) {
    let cloud = PointCloud::new(random_points(n, seed)).unwrap();
    let g = knn_graph(&cloud, k).unwrap();
    (cloud, g)
}

pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// O(N) scan: the `k` nearest other points of `i`, ties to the lower index.
pub fn brute_knn(points: &[Point3], i: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = (0..points.len())
        .filter(|&j| j != i)
        .map(|j| (dist2(&points[i], &points[j]), j))
        .collect();
    cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    cand.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Cyclic Jacobi rotations. Eigenvalues ascending; `vectors[i]` belongs to
/// `values[i]`.
pub fn jacobi_eigen(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum();
    for _ in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off <= 1e-34 * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for row in a.iter_mut() {
                let (x, y) = (row[p], row[q]);
                row[p] = c * x - s * y;
                row[q] = s * x + c * y;
            }
            for k in 0..3 {
                let (x, y) = (a[p][k], a[q][k]);
                a[p][k] = c * x - s * y;
                a[q][k] = s * x + c * y;
            }
            for row in v.iter_mut() {
                let (x, y) = (row[p], row[q]);
                row[p] = c * x - s * y;
                row[q] = s * x + c * y;
            }
        }
    }
    let mut pairs: Vec<(f64, [f64; 3])> = (0..3).map(|i| (a[i][i], [v[0][i], v[1][i], v[2][i]])).collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    ([pairs[0].0, pairs[1].0, pairs[2].0], [pairs[0].1, pairs[1].1, pairs[2].1])
}

/// The 13-column descriptor of point `i` from brute-force neighbours and the
/// Jacobi eigensolver.
pub fn oracle_descriptor(points: &[Point3], i: usize, k: usize) -> [f64; 13] {
    let nb: Vec<Point3> = brute_knn(points, i, k).into_iter().map(|j| points[j]).collect();
    let n = nb.len() as f64;
    let mut mean = [0.0; 3];
    for p in &nb {
        for a in 0..3 {
            mean[a] += p[a] / n;
        }
    }
    let mut c = [[0.0; 3]; 3];
    for p in &nb {
        for a in 0..3 {
            for b in 0..3 {
                c[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]) / n;
            }
        }
    }
    let (l, vecs) = jacobi_eigen(c);
    let l = l.map(|x| x.max(0.0));
    let sum = l[0] + l[1] + l[2];
    let mut normal = vecs[0];
    let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
    normal = normal.map(|x| x / norm);
    let flip = if normal[2] != 0.0 {
        normal[2] < 0.0
    } else if normal[1] != 0.0 {
        normal[1] < 0.0
    } else {
        normal[0] < 0.0
    };
    if flip {
        normal = normal.map(|x| -x);
    }
    let entropy: f64 = -l
        .iter()
        .map(|&x| x / sum)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let p = points[i];
    [
        p[0],
        p[1],
        p[2],
        normal[0],
        normal[1],
        normal[2],
        l[0] / sum,
        (l[2] - l[1]) / l[2],
        (l[1] - l[0]) / l[2],
        l[0] / l[2],
        (l[0] * l[1] * l[2]).cbrt(),
        (l[2] - l[0]) / l[2],
        entropy,
    ]
}

pub type LossFn<'a> = dyn for<'g> Fn(&Ctx<'g, f64>, Var<'g, f64>) -> edgegat::Result<Var<'g, f64>> + 'a;

/// Seed of the dropout stream in every gradient-check evaluation, so each
/// perturbed forward pass sees the same masks.
const CHECK_SEED: u64 = 5;

fn loss_at(store: &ParamStore<f64>, x: &Tensor<f64>, f: &LossFn<'_>) -> f64 {
    let g = Graph::new();
    let ctx = Ctx::new(&g, store, true, CHECK_SEED);
    f(&ctx, g.constant(x.clone())).unwrap().item()
}

/// Gradients smaller than this in norm (such as a bias feeding a
/// training-mode batch norm, whose true gradient is zero) are compared in
/// absolute terms.
const SCALE_FLOOR: f64 = 1e-3;

/// Relative error `‖a − n‖ / max(‖a‖ + ‖n‖, SCALE_FLOOR)` between analytic and central
/// finite-difference gradients, per parameter tensor and for the input
/// (reported under the name `input`). At most `per_tensor` entries of each
/// tensor are probed.
pub fn gradcheck(store: &mut ParamStore<f64>, x: &Tensor<f64>, per_tensor: usize, f: &LossFn<'_>) -> Vec<(String, f64)> {
    const H: f64 = 1e-6;
    let (param_grads, input_grad) = {
        let g = Graph::new();
        let ctx = Ctx::new(&g, &*store, true, CHECK_SEED);
        let xv = g.variable(x.clone());
        let loss = f(&ctx, xv).unwrap();
        let grads = g.backward(loss).unwrap();
        let params: Vec<_> = store
            .ids()
            .filter(|&id| store.is_trainable(id))
            .map(|id| (id, grads.param(id).cloned()))
            .collect();
        (params, grads.wrt(xv).cloned())
    };
    let probe = |len: usize| -> Vec<usize> {
        if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|i| (2 * i + 1) * len / (2 * per_tensor)).collect()
        }
    };
    let rel = |pairs: &[(f64, f64)]| {
        let diff = pairs.iter().map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = pairs.iter().map(|(a, _)| a * a).sum::<f64>().sqrt() + pairs.iter().map(|(_, n)| n * n).sum::<f64>().sqrt();
        diff / scale.max(SCALE_FLOOR)
    };
    let mut out = Vec::new();
    for (id, grad) in param_grads {
        let len = store.get(id).len();
        let mut pairs = Vec::new();
        for k in probe(len) {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + H;
            let up = loss_at(store, x, f);
            store.get_mut(id).data_mut()[k] = orig - H;
            let down = loss_at(store, x, f);
            store.get_mut(id).data_mut()[k] = orig;
            let analytic = grad.as_ref().map_or(0.0, |g| g.data()[k]);
            pairs.push((analytic, (up - down) / (2.0 * H)));
        }
        out.push((store.name(id).to_string(), rel(&pairs)));
    }
    let mut pairs = Vec::new();
    for k in probe(x.len()) {
        let mut xp = x.clone();
        xp.data_mut()[k] += H;
        let up = loss_at(store, &xp, f);
        xp.data_mut()[k] -= 2.0 * H;
        let down = loss_at(store, &xp, f);
        let analytic = input_grad.as_ref().map_or(0.0, |g| g.data()[k]);
        pairs.push((analytic, (up - down) / (2.0 * H)));
    }
    out.push(("input".to_string(), rel(&pairs)));
    out
}

/// `Σ out ∘ R` for a fixed random `R`: a scalar that exercises every
/// output entry.
pub fn weighted_sum<'g>(out: Var<'g, f64>, seed: u64) -> edgegat::Result<Var<'g, f64>> {
    let [r, c] = out.shape();
    let w = out.graph().constant(random_tensor(r, c, seed));
    Ok(out.mul(w)?.sum(edgegat::tensor::Axis::All))
}

/// Dense single-head attention: `α = softmax_j(LeakyReLU(a_dst·Wh_i + a_src·Wh_j))`
/// over neighbours and self, `out_i = Σ_j α_ij Wh_j`.
pub fn dense_attention(
    wh: &[Vec<f64>],
    a_src: &[f64],
    a_dst: &[f64],
    adj: &[Vec<bool>],
    slope: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = wh.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut alpha = vec![vec![0.0; n]; n];
    let mut out = vec![vec![0.0; wh[0].len()]; n];
    for i in 0..n {
        let nbrs: Vec<usize> = (0..n).filter(|&j| j == i || adj[i][j]).collect();
        let logits: Vec<f64> = nbrs
            .iter()
            .map(|&j| {
                let e = dot(a_dst, &wh[i]) + dot(a_src, &wh[j]);
                if e > 0.0 {
                    e
                } else {
                    slope * e
                }
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for (&j, l) in nbrs.iter().zip(&logits) {
            alpha[i][j] = (l - m).exp() / z;
            for (o, w) in out[i].iter_mut().zip(&wh[j]) {
                *o += alpha[i][j] * w;
            }
        }
    }
    (alpha, out)
}

/// Dense `D̃^{-1/2}(A + I)D̃^{-1/2}`.
pub fn dense_normalized_adjacency(adj: &[Vec<bool>]) -> Vec<Vec<f64>> {
    let n = adj.len();
    let deg: Vec<f64> = (0..n).map(|i| 1.0 + adj[i].iter().filter(|&&b| b).count() as f64).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j || adj[i][j] {
                        1.0 / (deg[i] * deg[j]).sqrt()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

pub fn dense_adjacency(g: &GraphTopology) -> Vec<Vec<bool>> {
    let n = g.num_vertices();
    let mut adj = vec![vec![false; n]; n];
    for (&s, &d) in g.sources().iter().zip(g.destinations()) {
        adj[d][s] = true;
    }
    adj
}

pub fn rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn index(g: &GraphTopology) -> GraphIndex<f64> {
    GraphIndex::new(g.clone())
}

/// Finite-difference checks of every layer type and of whole models on
/// graphs of at most 32 vertices. Returns `(case, worst relative error)`.
pub fn gradient_suite() -> Vec<(String, f64)> {
    use edgegat::nn::{
        Architecture, Combine, EdgeConv, GatLayer, GcnLayer, ModelConfig, Network, ResidualMlp, TopKPool,
    };
    use edgegat::tensor::Aggregation;
    use std::rc::Rc;

    let mut cases: Vec<(String, f64)> = Vec::new();
    fn run(cases: &mut Vec<(String, f64)>, name: &str, store: &mut ParamStore<f64>, x: &Tensor<f64>, per: usize, f: &LossFn<'_>) {
        let worst = gradcheck(store, x, per, f)
            .into_iter()
            .map(|(_, e)| e)
            .fold(0.0, f64::max);
        cases.push((name.to_string(), worst));
    }
    let (_, g20) = random_graph(20, 4, 1);
    let gi = index(&g20);

    let mut store = ParamStore::new();
    let mlp = ResidualMlp::new(&mut store, &mut rng(2), "mlp", 5, 6, 4, 0.2, 0.2);
    run(&mut cases, "residual_mlp (projection skip)", &mut store, &random_tensor(20, 5, 3), 16, &|ctx, x| {
        weighted_sum(mlp.forward(ctx, x)?, 4)
    });

    let mut store = ParamStore::new();
    let mlp = ResidualMlp::new(&mut store, &mut rng(5), "mlp", 4, 6, 4, 0.2, 0.2);
    run(&mut cases, "residual_mlp (identity skip)", &mut store, &random_tensor(20, 4, 6), 16, &|ctx, x| {
        weighted_sum(mlp.forward(ctx, x)?, 7)
    });

    for (agg, d, out, seed) in [(Aggregation::Sum, 5, 7, 10), (Aggregation::Mean, 4, 8, 20), (Aggregation::Max, 3, 5, 30)] {
        let mut store = ParamStore::new();
        let ec = EdgeConv::new(&mut store, &mut rng(seed), "ec", d, 6, out, agg, 0.2, 0.2, None);
        let gi = gi.clone();
        run(&mut cases, &format!("edgeconv ({agg:?})"), &mut store, &random_tensor(20, d, seed + 1), 16, &move |ctx, x| {
            weighted_sum(ec.forward(ctx, x, &gi)?, seed + 2)
        });
    }

    for (combine, seed) in [(Combine::Concat, 40), (Combine::Average, 50)] {
        let mut store = ParamStore::new();
        let gat = GatLayer::new(&mut store, &mut rng(seed), "gat", 5, 3, 4, combine, 0.2);
        let gi = gi.clone();
        run(&mut cases, &format!("gat ({combine:?})"), &mut store, &random_tensor(20, 5, seed + 1), 16, &move |ctx, x| {
            weighted_sum(gat.forward(ctx, x, &gi)?, seed + 2)
        });
    }

    let mut store = ParamStore::new();
    let gcn = GcnLayer::new(&mut store, &mut rng(60), "gcn", 5, 4);
    {
        let gi = gi.clone();
        run(&mut cases, "gcn", &mut store, &random_tensor(20, 5, 61), 16, &move |ctx, x| {
            weighted_sum(gcn.forward(ctx, x, &gi)?, 62)
        });
    }

    let mut store = ParamStore::new();
    let pool = TopKPool::new(&mut store, &mut rng(70), "pool", 5, 0.5);
    let inner = GcnLayer::new(&mut store, &mut rng(71), "inner", 5, 5);
    {
        let gi = gi.clone();
        run(&mut cases, "topk pool + unpool", &mut store, &random_tensor(20, 5, 72), 16, &move |ctx, x| {
            let p = pool.forward(ctx, x, &gi)?;
            let y = inner.forward(ctx, p.x, &p.index)?;
            let kept: Rc<[usize]> = p.kept.clone();
            weighted_sum(TopKPool::unpool(y, &kept, x)?, 73)
        });
    }

    let (_, g32) = random_graph(32, 6, 80);
    let gi32 = index(&g32);
    let labels: Rc<[usize]> = {
        let mut r = rng(81);
        (0..32).map(|_| r.random_range(0..3)).collect::<Vec<_>>().into()
    };
    for arch in [Architecture::PointNet, Architecture::EdgeGat, Architecture::Gat, Architecture::GcnUnet2] {
        let config = ModelConfig::new(arch);
        let mut store = ParamStore::new();
        let net = Network::new(&config, &mut store, &mut rng(90)).unwrap();
        let gi = gi32.clone();
        let labels = labels.clone();
        run(
            &mut cases,
            &format!("{arch} + cross-entropy"),
            &mut store,
            &random_tensor(32, 13, 91),
            6,
            &move |ctx, x| net.forward_var(ctx, x, &gi)?.cross_entropy(&labels),
        );
    }
    cases
}

/// A seeded permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng(seed));
    p
}

/// Features and KNN graph of a random cloud, f64.
pub fn featurized(points: &[Point3], k_graph: usize) -> (Tensor<f64>, GraphIndex<f64>) {
    let cloud = PointCloud::new(points.to_vec()).unwrap().normalized();
    let f = edgegat::geomfeat::featurize(&cloud, 16).unwrap();
    let x = Tensor::from_vec(f.rows(), f.cols(), f.as_slice().to_vec()).unwrap();
    (x, index(&knn_graph(&cloud, k_graph).unwrap()))
}

/// Runs a freshly initialized model (dropout 0) on a random cloud and on a
/// permuted copy whose features and graph are rebuilt from scratch; returns
/// the largest deviation from `y'[i] = y[p[i]]` in train and eval mode.
pub fn permutation_error(arch: edgegat::nn::Architecture, n: usize, seed: u64) -> f64 {
    use edgegat::nn::{ModelConfig, Network};
    let mut config = ModelConfig::new(arch);
    config.dropout = 0.0;
    let mut store = ParamStore::new();
    let net = Network::new(&config, &mut store, &mut rng(seed)).unwrap();
    let points = random_points(n, seed + 1);
    let p = permutation(n, seed + 2);
    let permuted: Vec<Point3> = p.iter().map(|&i| points[i]).collect();
    let (x, gi) = featurized(&points, 16);
    let (xp, gip) = featurized(&permuted, 16);
    let mut worst = 0.0f64;
    for training in [true, false] {
        let run = |x: &Tensor<f64>, gi: &GraphIndex<f64>| {
            let g = Graph::new();
            let ctx = Ctx::new(&g, &store, training, 0);
            let out = net.forward_var(&ctx, g.constant(x.clone()), gi).unwrap();
            let v = out.value().clone();
            v
        };
        let y = run(&x, &gi);
        let yp = run(&xp, &gip);
        for (i, &src) in p.iter().enumerate() {
            for (a, b) in yp.row(i).iter().zip(y.row(src)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Largest `|Σ_j α_ij − 1|` over vertices, heads and both GAT layers of an
/// EdgeGAT forward pass.
pub fn attention_sum_error(n: usize, seed: u64) -> f64 {
    use edgegat::nn::{Architecture, ModelConfig, Network};
    let config = ModelConfig::new(Architecture::EdgeGat);
    let mut store = ParamStore::new();
    let net = Network::new(&config, &mut store, &mut rng(seed)).unwrap();
    let (x, gi) = featurized(&random_points(n, seed + 1), 16);
    let g = Graph::new();
    let ctx = Ctx::new(&g, &store, true, 0).recording();
    net.forward_var(&ctx, g.constant(x), &gi).unwrap();
    let records = ctx.attention();
    assert_eq!(records.len(), 2);
    let mut worst = 0.0f64;
    for rec in records {
        let heads = rec.alpha.cols();
        let mut sums = vec![0.0; n * heads];
        for (e, &d) in rec.destinations.iter().enumerate() {
            for h in 0..heads {
                sums[d * heads + h] += rec.alpha.get(e, h);
            }
        }
        worst = sums.iter().fold(worst, |w, s| w.max((s - 1.0).abs()));
    }
    worst
}

/// Traced intermediate shapes and residual-block widths of EdgeGAT on a
/// random `n`-point cloud.
pub fn edgegat_shapes(n: usize) -> (Vec<(String, [usize; 2])>, [[usize; 3]; 2]) {
    use edgegat::nn::{EdgeGat, ModelConfig};
    let config = ModelConfig::new(edgegat::nn::Architecture::EdgeGat);
    let mut store = ParamStore::new();
    let net = EdgeGat::new(&config, &mut store, &mut rng(3));
    let (x, gi) = featurized(&random_points(n, 4), 16);
    let g = Graph::new();
    let ctx = Ctx::new(&g, &store, false, 0).recording();
    net.forward(&ctx, g.constant(x), &gi).unwrap();
    (ctx.shapes(), net.block_widths())
}

/// Hand-counted metrics for labels in `0..classes`:
/// `(per-class IoU, mIoU, accuracy, macro precision)`.
pub fn confusion_oracle(classes: usize, truth: &[usize], pred: &[usize]) -> (Vec<f64>, f64, f64, f64) {
    let mut m = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t][p] += 1;
    }
    let mut iou = Vec::new();
    let mut precision = Vec::new();
    for c in 0..classes {
        let tp = m[c][c];
        let fp: u64 = (0..classes).filter(|&t| t != c).map(|t| m[t][c]).sum();
        let fn_: u64 = (0..classes).filter(|&p| p != c).map(|p| m[c][p]).sum();
        iou.push(if tp + fp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp + fn_) as f64
        });
        precision.push(if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 });
    }
    let correct: u64 = (0..classes).map(|c| m[c][c]).sum();
    let miou = iou.iter().sum::<f64>() / classes as f64;
    let macro_p = precision.iter().sum::<f64>() / classes as f64;
    (iou, miou, correct as f64 / truth.len() as f64, macro_p)
}

/// Random label pairs of varying length and skew, checked against
/// [`confusion_oracle`] for exact equality. Returns the number of pairs
/// that disagree.
pub fn confusion_mismatches(pairs: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..pairs {
        let n = r.random_range(1..400);
        // skewed draws so some classes go missing
        let classes_t = r.random_range(1..=3);
        let classes_p = r.random_range(1..=3);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..classes_t)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if r.random::<f64>() < 0.6 { t } else { r.random_range(0..classes_p) })
            .collect();
        let got = edgegat::train::evaluate_predictions(3, &truth, &pred).unwrap();
        let (iou, miou, acc, prec) = confusion_oracle(3, &truth, &pred);
        if got.per_class_iou != iou || got.miou != miou || got.accuracy != acc || got.macro_precision != prec {
            bad += 1;
        }
    }
    bad
}

/// Clouds of up to 512 points with `k ∈ {1, 4, 16}`; counts neighbour lists
/// that differ from the brute-force scan.
pub fn knn_mismatches(clouds: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for c in 0..clouds {
        let n = r.random_range(17..=512);
        let points = random_points(n, seed + 1000 + c as u64);
        for k in [1, 4, 16] {
            let lists = edgegat::graph::knn_lists(&points, k).unwrap();
            bad += (0..n).filter(|&i| lists[i] != brute_knn(&points, i, k)).count();
        }
    }
    bad
}

/// Largest deviation between the library's descriptors and
/// [`oracle_descriptor`] over `count` random 16-neighbourhoods, and the
/// largest `|L + P + S − 1|`.
pub fn eigen_feature_error(count: usize, seed: u64) -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut sum_err = 0.0f64;
    let per_cloud = 50;
    for c in 0..count.div_ceil(per_cloud) {
        let points = random_points(200, seed + c as u64);
        let cloud = PointCloud::new(points.clone()).unwrap();
        let f = edgegat::geomfeat::featurize(&cloud, 16).unwrap();
        let take = per_cloud.min(count - c * per_cloud);
        for i in 0..take {
            let oracle = oracle_descriptor(&points, i, 16);
            let row = f.row(i);
            for j in 0..13 {
                worst = worst.max((row[j] - oracle[j]).abs());
            }
            sum_err = sum_err.max((row[7] + row[8] + row[9] - 1.0).abs());
        }
    }
    (worst, sum_err)
}
