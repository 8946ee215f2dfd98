//! Inspect the attention weights of a trained EdgeGAT: how concentrated
//! each vertex's attention is, and how much of it stays within its class.
//!
//! ```text
//! cargo run --release --example attention_weights -- [epochs]
//! ```

use edgegat::cloud::{synth_maize, DEFAULT_NOISE};
use edgegat::nn::{Architecture, Ctx, ModelConfig};
use edgegat::tensor::Graph;
use edgegat::train::{collate, prepare_dataset, train_loop, TrainConfig};

fn main() -> edgegat::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let model = ModelConfig::new(Architecture::EdgeGat);
    let cfg = TrainConfig {
        epochs,
        seed: 2,
        ..TrainConfig::default()
    };
    let clouds = (0..6)
        .map(|s| synth_maize(1024, 40 + s, DEFAULT_NOISE))
        .collect::<edgegat::Result<Vec<_>>>()?;
    let data = prepare_dataset(&clouds, &model, cfg.points_per_cloud, cfg.seed)?;
    let (train, val) = data.split_at(5);
    let out = train_loop(&model, &cfg, train, val)?;
    println!("validation mIoU {:.4} after {epochs} epochs", out.last.miou);

    let (network, store) = (out.network, out.best_store);
    let (batch, labels) = collate::<f32>(&[&val[0]])?;
    let labels = labels.expect("labeled");
    let graph = Graph::new();
    let ctx = Ctx::new(&graph, &store, false, 0).recording();
    network.forward(&ctx, &batch)?;

    let n = batch.index.topology.num_vertices();
    let sources = &batch.index.loop_src;
    for rec in ctx.attention() {
        let heads = rec.alpha.cols();
        let mut entropy = 0.0;
        let mut same_class = 0.0;
        for (e, &d) in rec.destinations.iter().enumerate() {
            for h in 0..heads {
                let a = rec.alpha.get(e, h) as f64;
                if a > 0.0 {
                    entropy -= a * a.ln();
                }
                if labels[sources[e]] == labels[d] {
                    same_class += a;
                }
            }
        }
        let per = (n * heads) as f64;
        println!(
            "{}: {heads} heads, mean entropy {:.3} nats, {:.1}% of attention on same-class neighbours",
            rec.layer,
            entropy / per,
            100.0 * same_class / per
        );
    }
    Ok(())
}
