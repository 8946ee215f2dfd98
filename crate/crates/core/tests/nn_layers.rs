mod common;

use std::rc::Rc;

use common::{dense_adjacency, dense_attention, dense_normalized_adjacency, index, random_graph, random_tensor, rng, rows};
use edgegat::graph::GraphTopology;
use edgegat::nn::{
    Architecture, Combine, Ctx, EdgeConv, GatLayer, GcnLayer, ModelConfig, Network, ResidualMlp, TopKPool,
    BN_EPS,
};
use edgegat::tensor::{Aggregation, Graph, ParamId, ParamStore, Tensor};

fn run<F>(store: &ParamStore<f64>, training: bool, x: &Tensor<f64>, f: F) -> Tensor<f64>
where
    F: for<'g> Fn(&Ctx<'g, f64>, edgegat::tensor::Var<'g, f64>) -> edgegat::Result<edgegat::tensor::Var<'g, f64>>,
{
    let g = Graph::new();
    let ctx = Ctx::new(&g, store, training, 0);
    let out = f(&ctx, g.constant(x.clone())).unwrap();
    let v = out.value().clone();
    v
}

fn fill(store: &mut ParamStore<f64>, id: ParamId, value: f64) {
    store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = value);
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

fn assert_close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }
}

fn path_graph(n: usize) -> GraphTopology {
    GraphTopology::from_pairs(n, (0..n - 1).map(|i| (i, i + 1)), vec![0; n]).unwrap()
}

#[test]
fn residual_zero_branch_is_identity() {
    let mut store = ParamStore::new();
    let mlp = ResidualMlp::new(&mut store, &mut rng(1), "m", 4, 8, 4, 0.2, 0.2);
    assert!(mlp.skip.is_none());
    fill(&mut store, mlp.lin2.weight, 0.0);
    fill(&mut store, mlp.lin2.bias.unwrap(), 0.0);
    let x = random_tensor(10, 4, 2);
    let y = run(&store, true, &x, |ctx, x| mlp.forward(ctx, x));
    assert_eq!(y, x);
}

#[test]
fn residual_zero_branch_projects() {
    let mut store = ParamStore::new();
    let mlp = ResidualMlp::new(&mut store, &mut rng(1), "m", 3, 8, 5, 0.2, 0.2);
    fill(&mut store, mlp.lin2.weight, 0.0);
    fill(&mut store, mlp.lin2.bias.unwrap(), 0.0);
    let x = random_tensor(6, 3, 2);
    let y = run(&store, true, &x, |ctx, x| mlp.forward(ctx, x));
    let ws = store.get(mlp.skip.as_ref().unwrap().weight);
    assert_close(&rows(&y), &matmul(&rows(&x), &rows(ws)), 1e-12);
}

#[test]
fn residual_matches_hand_arithmetic() {
    let mut store = ParamStore::new();
    let mlp = ResidualMlp::new(&mut store, &mut rng(4), "m", 2, 3, 2, 0.0, 0.2);
    let b1 = mlp.lin1.bias.unwrap();
    let b2 = mlp.lin2.bias.unwrap();
    store.get_mut(b1).data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
    store.get_mut(b2).data_mut().copy_from_slice(&[0.05, -0.05]);
    store.get_mut(mlp.bn.gamma).data_mut().copy_from_slice(&[1.5, 0.5, 1.0]);
    store.get_mut(mlp.bn.beta).data_mut().copy_from_slice(&[0.0, 0.1, -0.1]);
    let x = random_tensor(5, 2, 5);
    let w1 = rows(store.get(mlp.lin1.weight));
    let w2 = rows(store.get(mlp.lin2.weight));
    let gamma = store.get(mlp.bn.gamma).data().to_vec();
    let beta = store.get(mlp.bn.beta).data().to_vec();

    let mut pre = matmul(&rows(&x), &w1);
    for r in pre.iter_mut() {
        for (v, b) in r.iter_mut().zip(store.get(b1).data()) {
            *v += b;
        }
    }
    let n = pre.len() as f64;
    for training in [true, false] {
        let mut h = pre.clone();
        for c in 0..3 {
            let (mean, var) = if training {
                let m = pre.iter().map(|r| r[c]).sum::<f64>() / n;
                (m, pre.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / n)
            } else {
                (0.0, 1.0)
            };
            for r in h.iter_mut() {
                let z = gamma[c] * (r[c] - mean) / (var + BN_EPS).sqrt() + beta[c];
                r[c] = if z > 0.0 { z } else { 0.2 * z };
            }
        }
        let mut expect = matmul(&h, &w2);
        for (r, xr) in expect.iter_mut().zip(rows(&x)) {
            for (j, v) in r.iter_mut().enumerate() {
                *v += store.get(b2).data()[j] + xr[j];
            }
        }
        let y = run(&store, training, &x, |ctx, x| mlp.forward(ctx, x));
        assert_close(&rows(&y), &expect, 1e-6);
    }
}

#[test]
fn edgeconv_identical_neighbours_see_zero_offsets() {
    let mut store = ParamStore::new();
    let ec = EdgeConv::new(&mut store, &mut rng(7), "ec", 3, 8, 5, Aggregation::Sum, 0.2, 0.2, None);
    let (_, g) = random_graph(12, 3, 8);
    let deg = g.in_degree();
    let h = [0.3, -0.7, 1.1];
    let x = Tensor::from_vec(12, 3, h.repeat(12)).unwrap();
    let y = run(&store, false, &x, |ctx, x| ec.forward(ctx, x, &index(&g)));
    let single = Tensor::from_vec(1, 6, vec![h[0], h[1], h[2], 0.0, 0.0, 0.0]).unwrap();
    let phi = run(&store, false, &single, |ctx, e| ec.mlp.forward(ctx, e));
    for (v, d) in deg.iter().enumerate() {
        for c in 0..5 {
            assert!((y.get(v, c) - *d as f64 * phi.get(0, c)).abs() < 1e-9);
        }
    }
}

#[test]
fn edgeconv_bias_accumulates_over_in_degree() {
    let mut store = ParamStore::new();
    let ec = EdgeConv::new(&mut store, &mut rng(9), "ec", 4, 8, 6, Aggregation::Sum, 0.2, 0.2, None);
    fill(&mut store, ec.mlp.lin2.weight, 0.0);
    fill(&mut store, ec.mlp.skip.as_ref().unwrap().weight, 0.0);
    let bias = [0.5, -1.0, 2.0, 0.0, 0.25, 3.0];
    store.get_mut(ec.mlp.lin2.bias.unwrap()).data_mut().copy_from_slice(&bias);
    let mut g = random_graph(15, 3, 10).1;
    // an isolated vertex receives nothing
    g = GraphTopology::disjoint_union(&[&g, &GraphTopology::empty(1)]);
    let x = random_tensor(16, 4, 11);
    let y = run(&store, true, &x, |ctx, x| ec.forward(ctx, x, &index(&g)));
    for (v, d) in g.in_degree().iter().enumerate() {
        for (c, b) in bias.iter().enumerate() {
            assert!((y.get(v, c) - *d as f64 * b).abs() < 1e-12);
        }
    }
}

#[test]
fn edgeconv_factored_matches_materialized() {
    let (_, g) = random_graph(24, 4, 12);
    let gi = index(&g);
    for agg in [Aggregation::Sum, Aggregation::Mean, Aggregation::Max] {
        let mut store = ParamStore::new();
        let ec = EdgeConv::new(&mut store, &mut rng(13), "ec", 5, 8, 7, agg, 0.0, 0.2, None);
        let x = random_tensor(24, 5, 14);
        for training in [true, false] {
            let a = run(&store, training, &x, |ctx, x| ec.forward(ctx, x, &gi));
            let b = run(&store, training, &x, |ctx, x| ec.forward_materialized(ctx, x, &gi));
            assert!(a.max_abs_diff(&b) < 1e-9, "{agg:?} training={training}");
        }
    }
}

#[test]
fn edgeconv_is_permutation_equivariant() {
    let n = 30;
    let (_, g) = random_graph(n, 4, 15);
    let p = common::permutation(n, 16);
    let mut inv = vec![0; n];
    for (i, &old) in p.iter().enumerate() {
        inv[old] = i;
    }
    let gp = GraphTopology::from_pairs(
        n,
        g.sources().iter().zip(g.destinations()).map(|(&s, &d)| (inv[s], inv[d])),
        vec![0; n],
    )
    .unwrap();
    let x = random_tensor(n, 4, 17);
    let xp = x.select_rows(&p);
    for agg in [Aggregation::Sum, Aggregation::Mean] {
        let mut store = ParamStore::new();
        let ec = EdgeConv::new(&mut store, &mut rng(18), "ec", 4, 8, 6, agg, 0.0, 0.2, None);
        let y = run(&store, true, &x, |ctx, x| ec.forward(ctx, x, &index(&g)));
        let yp = run(&store, true, &xp, |ctx, x| ec.forward(ctx, x, &index(&gp)));
        assert!(yp.max_abs_diff(&y.select_rows(&p)) < 1e-6);
    }
}

#[test]
fn gat_uniform_on_identical_features() {
    let mut store = ParamStore::new();
    let gat = GatLayer::new(&mut store, &mut rng(19), "gat", 3, 2, 4, Combine::Concat, 0.2);
    let (_, g) = random_graph(10, 3, 20);
    let x = Tensor::from_vec(10, 3, [0.4, 0.1, -0.9].repeat(10)).unwrap();
    let gr = Graph::new();
    let ctx = Ctx::new(&gr, &store, false, 0).recording();
    gat.forward(&ctx, gr.constant(x), &index(&g)).unwrap();
    let rec = &ctx.attention()[0];
    let deg = g.in_degree();
    for (e, &d) in rec.destinations.iter().enumerate() {
        for h in 0..2 {
            assert!((rec.alpha.get(e, h) - 1.0 / (deg[d] + 1) as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn gat_isolated_vertex_attends_to_itself() {
    let mut store = ParamStore::new();
    let gat = GatLayer::new(&mut store, &mut rng(21), "gat", 3, 2, 4, Combine::Concat, 0.2);
    let g = GraphTopology::empty(1);
    let x = random_tensor(1, 3, 22);
    let gr = Graph::new();
    let ctx = Ctx::new(&gr, &store, false, 0).recording();
    let y = gat.forward(&ctx, gr.constant(x.clone()), &index(&g)).unwrap().value().clone();
    assert_eq!(ctx.attention()[0].alpha.data(), &[1.0, 1.0]);
    let wh = x.matmul(store.get(gat.weight)).unwrap();
    assert!(y.max_abs_diff(&wh) < 1e-12);
}

#[test]
fn gat_matches_dense_attention() {
    let (_, g) = random_graph(8, 2, 23);
    let adj = dense_adjacency(&g);
    let gi = index(&g);
    for combine in [Combine::Concat, Combine::Average] {
        let mut store = ParamStore::new();
        let gat = GatLayer::new(&mut store, &mut rng(24), "gat", 5, 3, 4, combine, 0.2);
        let bias: Vec<f64> = (0..gat.out_width()).map(|i| 0.01 * i as f64).collect();
        store.get_mut(gat.bias).data_mut().copy_from_slice(&bias);
        let x = random_tensor(8, 5, 25);
        let gr = Graph::new();
        let ctx = Ctx::new(&gr, &store, false, 0).recording();
        let y = gat.forward(&ctx, gr.constant(x.clone()), &gi).unwrap().value().clone();
        let rec = &ctx.attention()[0];

        let wh = rows(&x.matmul(store.get(gat.weight)).unwrap());
        let a_src = store.get(gat.att_src).data().to_vec();
        let a_dst = store.get(gat.att_dst).data().to_vec();
        let mut heads = Vec::new();
        for h in 0..3 {
            let cols = h * 4..(h + 1) * 4;
            let whh: Vec<Vec<f64>> = wh.iter().map(|r| r[cols.clone()].to_vec()).collect();
            let (alpha, out) = dense_attention(&whh, &a_src[cols.clone()], &a_dst[cols], &adj, 0.2);
            for i in 0..8 {
                assert!((alpha[i].iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
            for (e, (&s, &d)) in gi.loop_src.iter().zip(rec.destinations.iter()).enumerate() {
                assert!((rec.alpha.get(e, h) - alpha[d][s]).abs() < 1e-6);
            }
            heads.push(out);
        }
        let expect: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let row: Vec<f64> = match combine {
                    Combine::Concat => heads.iter().flat_map(|o| o[i].clone()).collect(),
                    Combine::Average => (0..4).map(|c| heads.iter().map(|o| o[i][c]).sum::<f64>() / 3.0).collect(),
                };
                row.iter().zip(&bias).map(|(v, b)| v + b).collect()
            })
            .collect();
        assert_close(&rows(&y), &expect, 1e-6);
    }
}

fn identity_gcn(store: &mut ParamStore<f64>, d: usize) -> GcnLayer {
    let gcn = GcnLayer::new(store, &mut rng(0), "gcn", d, d);
    let w = store.get_mut(gcn.lin.weight);
    for r in 0..d {
        for c in 0..d {
            w.set(r, c, if r == c { 1.0 } else { 0.0 });
        }
    }
    gcn
}

#[test]
fn gcn_isolated_vertex_keeps_its_features() {
    let mut store = ParamStore::new();
    let gcn = identity_gcn(&mut store, 3);
    let x = random_tensor(1, 3, 26);
    let y = run(&store, false, &x, |ctx, x| gcn.forward(ctx, x, &index(&GraphTopology::empty(1))));
    assert!(y.max_abs_diff(&x) < 1e-15);
    let y = run(&store, false, &x, |ctx, x| Ok(gcn.forward(ctx, x, &index(&GraphTopology::empty(1)))?.relu()));
    assert!(y.max_abs_diff(&x.map(|v| v.max(0.0))) < 1e-15);
}

#[test]
fn gcn_two_clique_averages() {
    let mut store = ParamStore::new();
    let gcn = identity_gcn(&mut store, 3);
    let g = GraphTopology::from_pairs(2, [(0, 1)], vec![0, 0]).unwrap();
    let x = random_tensor(2, 3, 27);
    let y = run(&store, false, &x, |ctx, x| gcn.forward(ctx, x, &index(&g)));
    for c in 0..3 {
        let mean = (x.get(0, c) + x.get(1, c)) / 2.0;
        assert!((y.get(0, c) - mean).abs() < 1e-15 && (y.get(1, c) - mean).abs() < 1e-15);
    }
}

#[test]
fn gcn_matches_dense_operator() {
    let (_, g) = random_graph(20, 3, 28);
    let mut store = ParamStore::new();
    let gcn = GcnLayer::new(&mut store, &mut rng(29), "gcn", 4, 6);
    let x = random_tensor(20, 4, 30);
    let y = run(&store, false, &x, |ctx, x| gcn.forward(ctx, x, &index(&g)));
    let a = dense_normalized_adjacency(&dense_adjacency(&g));
    let expect = matmul(&matmul(&a, &rows(&x)), &rows(store.get(gcn.lin.weight)));
    assert_close(&rows(&y), &expect, 1e-9);
}

#[test]
fn pool_ratio_one_is_identity() {
    let mut store = ParamStore::<f64>::new();
    let pool = TopKPool::new(&mut store, &mut rng(31), "p", 4, 1.0);
    assert!(store.is_empty());
    let (_, g) = random_graph(10, 3, 32);
    let gi = index(&g);
    let x = random_tensor(10, 4, 33);
    let gr = Graph::new();
    let ctx = Ctx::new(&gr, &store, true, 0);
    let p = pool.forward(&ctx, gr.constant(x.clone()), &gi).unwrap();
    assert_eq!(*p.x.value(), x);
    assert_eq!(p.index.topology, g);
    assert_eq!(&*p.kept, &(0..10).collect::<Vec<_>>()[..]);
}

#[test]
fn pool_rejects_bad_ratio() {
    let store = ParamStore::<f64>::new();
    for ratio in [0.0, -0.5, 1.5] {
        let pool = TopKPool { score: None, ratio };
        let gr = Graph::new();
        let ctx = Ctx::new(&gr, &store, true, 0);
        let gi = index(&GraphTopology::empty(3));
        assert!(pool.forward(&ctx, gr.constant(random_tensor(3, 2, 0)), &gi).is_err());
    }
}

#[test]
fn pool_path_graph_keeps_half_with_induced_edges() {
    let g = path_graph(8);
    let mut store = ParamStore::new();
    let pool = TopKPool::new(&mut store, &mut rng(34), "p", 2, 0.5);
    let x = random_tensor(8, 2, 35);
    let gr = Graph::new();
    let ctx = Ctx::new(&gr, &store, true, 0);
    let p = pool.forward(&ctx, gr.constant(x.clone()), &index(&g)).unwrap();

    let score: Vec<f64> = rows(&x.matmul(store.get(pool.score.unwrap())).unwrap()).iter().map(|r| r[0].tanh()).collect();
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap().then(a.cmp(&b)));
    let mut expect_kept = order[..4].to_vec();
    expect_kept.sort_unstable();
    assert_eq!(&*p.kept, &expect_kept[..]);

    let new_id = |v: usize| expect_kept.iter().position(|&k| k == v);
    let mut expect_edges = Vec::new();
    for (&s, &d) in g.sources().iter().zip(g.destinations()) {
        if let (Some(a), Some(b)) = (new_id(s), new_id(d)) {
            expect_edges.push((a, b));
        }
    }
    expect_edges.sort_unstable();
    let t = &p.index.topology;
    let mut edges: Vec<(usize, usize)> = t.sources().iter().copied().zip(t.destinations().iter().copied()).collect();
    edges.sort_unstable();
    assert_eq!(t.num_vertices(), 4);
    assert_eq!(edges, expect_edges);

    let pooled = p.x.value().clone();
    for (r, &v) in expect_kept.iter().enumerate() {
        for c in 0..2 {
            assert!((pooled.get(r, c) - x.get(v, c) * score[v]).abs() < 1e-12);
        }
    }
}

#[test]
fn unpool_scatters_back_and_adds_skip() {
    let mut store = ParamStore::new();
    let pool = TopKPool::new(&mut store, &mut rng(36), "p", 3, 0.4);
    let (_, g) = random_graph(10, 3, 37);
    let x = random_tensor(10, 3, 38);
    let skip = random_tensor(10, 3, 39);
    let gr = Graph::new();
    let ctx = Ctx::new(&gr, &store, true, 0);
    let p = pool.forward(&ctx, gr.constant(x), &index(&g)).unwrap();
    let kept: Rc<[usize]> = p.kept.clone();
    let pooled = p.x.value().clone();
    let y = TopKPool::unpool(p.x, &kept, gr.constant(skip.clone())).unwrap().value().clone();
    for v in 0..10 {
        let pos = kept.iter().position(|&k| k == v);
        for c in 0..3 {
            let base = pos.map_or(0.0, |r| pooled.get(r, c));
            assert_eq!(y.get(v, c), base + skip.get(v, c));
        }
    }
}

#[test]
fn pointnet_is_permutation_equivariant() {
    assert!(common::permutation_error(Architecture::PointNet, 40, 40) < 1e-9);
}

#[test]
fn every_model_is_permutation_equivariant() {
    for arch in [Architecture::EdgeGat, Architecture::Gcn, Architecture::Gat] {
        let err = common::permutation_error(arch, 48, 41);
        assert!(err < 1e-6, "{arch}: {err}");
    }
}

#[test]
fn forward_is_bit_reproducible() {
    let config = ModelConfig::new(Architecture::EdgeGat);
    let (x, gi) = common::featurized(&common::random_points(64, 42), 16);
    let once = || {
        let mut store = ParamStore::new();
        let net = Network::new(&config, &mut store, &mut rng(43)).unwrap();
        run(&store, true, &x, |ctx, x| net.forward_var(ctx, x, &gi))
    };
    assert_eq!(once().data(), once().data());
}

#[test]
fn edgegat_shape_chain() {
    let (shapes, blocks) = common::edgegat_shapes(64);
    let expect = [
        ("input", [64, 13]),
        ("edgeconv1", [64, 64]),
        ("edgeconv2", [64, 64]),
        ("concat", [64, 77]),
        ("gat1", [64, 256]),
        ("gat2", [64, 64]),
        ("logits", [64, 3]),
    ];
    let got: Vec<(&str, [usize; 2])> = shapes.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    assert_eq!(got, expect);
    assert_eq!(blocks, [[26, 32, 64], [128, 32, 64]]);
}

#[test]
fn model_rejects_wrong_width() {
    let config = ModelConfig::new(Architecture::Gcn);
    let mut store = ParamStore::<f64>::new();
    let net = Network::new(&config, &mut store, &mut rng(0)).unwrap();
    let batch = edgegat::nn::GraphBatch::new(random_tensor(4, 7, 0), GraphTopology::empty(4)).unwrap();
    let gr = Graph::new();
    let ctx = Ctx::new(&gr, &store, false, 0);
    assert!(net.forward(&ctx, &batch).is_err());
}
