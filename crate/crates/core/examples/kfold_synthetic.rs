//! Five-fold cross-validation of EdgeGAT against the PointNet baseline on
//! synthetic maize plants.
//!
//! ```text
//! cargo run --release --example kfold_synthetic -- [clouds] [epochs]
//! ```

use edgegat::cloud::{synth_maize, DEFAULT_NOISE};
use edgegat::nn::{Architecture, ModelConfig};
use edgegat::train::{kfold_run, prepare_dataset, TrainConfig};

fn main() -> edgegat::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let clouds = args.next().flatten().unwrap_or(30);
    let epochs = args.next().flatten().unwrap_or(100);
    let raw = (0..clouds as u64)
        .map(|i| synth_maize(1024, 1000 + i, DEFAULT_NOISE))
        .collect::<edgegat::Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        epochs,
        seed: 11,
        ..TrainConfig::default()
    };
    for arch in [Architecture::EdgeGat, Architecture::PointNet] {
        let model = ModelConfig::new(arch);
        let data = prepare_dataset(&raw, &model, cfg.points_per_cloud, cfg.seed)?;
        let started = std::time::Instant::now();
        let report = kfold_run(&data, &model, &cfg, |f| {
            println!(
                "{arch} fold {}: best epoch {} miou {:.4} acc {:.4} | last miou {:.4}",
                f.fold, f.best_epoch, f.best.miou, f.best.accuracy, f.last.miou
            );
        })?;
        println!(
            "{arch}: mean miou {:.4} (final epoch {:.4}), accuracy {:.4}, {:.0} s",
            report.aggregate.miou,
            report.aggregate_last.miou,
            report.aggregate.accuracy,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
