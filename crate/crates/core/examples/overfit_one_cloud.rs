//! Train EdgeGAT, without dropout, on a single synthetic plant until it
//! memorizes every label.
//!
//! ```text
//! cargo run --release --example overfit_one_cloud -- [epochs]
//! ```

use edgegat::cloud::{synth_maize, DEFAULT_NOISE};
use edgegat::nn::{Architecture, ModelConfig};
use edgegat::train::{prepare_dataset, train_loop, TrainConfig};

fn main() -> edgegat::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(300);
    let cloud = synth_maize(1024, 7, DEFAULT_NOISE)?;
    let model = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::new(Architecture::EdgeGat)
    };
    let cfg = TrainConfig {
        epochs,
        batch_size: 1,
        seed: 7,
        verbose: true,
        ..TrainConfig::default()
    };
    let data = prepare_dataset(&[cloud], &model, cfg.points_per_cloud, cfg.seed)?;
    let start = std::time::Instant::now();
    let out = train_loop(&model, &cfg, &data, &[])?;
    let first_perfect = out.curves.iter().find(|r| r.val_accuracy == 1.0).map(|r| r.epoch);
    println!(
        "final accuracy {:.4}, first epoch at 100%: {:?}, {:.1} s",
        out.last.accuracy,
        first_perfect,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
