//! Train briefly, save a checkpoint, reload it and write a class-colored
//! PLY of an unseen plant.
//!
//! ```text
//! cargo run --release --example predict_to_ply -- [out_dir] [epochs]
//! ```

use std::path::PathBuf;

use edgegat::cloud::{synth_maize, write_cloud, ClassLabel, CloudFormat, LabeledCloud, DEFAULT_NOISE};
use edgegat::nn::{Architecture, ModelConfig};
use edgegat::tensor::{read_checkpoint, write_checkpoint};
use edgegat::train::{evaluate_predictions, init_model, predict, prepare_cloud, prepare_dataset, train_loop, TrainConfig};

fn main() -> edgegat::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "prediction".into()));
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(30);
    std::fs::create_dir_all(&dir).map_err(|e| edgegat::Error::Io {
        path: dir.clone(),
        source: e,
    })?;

    let model = ModelConfig::new(Architecture::EdgeGat);
    let cfg = TrainConfig {
        epochs,
        seed: 4,
        ..TrainConfig::default()
    };
    let clouds = (0..8)
        .map(|s| synth_maize(1024, 200 + s, DEFAULT_NOISE))
        .collect::<edgegat::Result<Vec<_>>>()?;
    let data = prepare_dataset(&clouds, &model, cfg.points_per_cloud, cfg.seed)?;
    let out = train_loop(&model, &cfg, &data, &[])?;
    let ckpt = dir.join("model.ckpt");
    write_checkpoint(&out.best_store, &ckpt)?;

    let (network, mut store) = init_model::<f32>(&model, cfg.seed)?;
    store.load_from(&read_checkpoint::<f32>(&ckpt)?)?;
    let unseen = synth_maize(4096, 999, DEFAULT_NOISE)?;
    let prepared = prepare_cloud(&unseen, &model, None, 0)?;
    let classes = predict(&network, &store, &prepared)?;
    let m = evaluate_predictions(model.num_classes, prepared.labels.as_deref().expect("labeled"), &classes)?;
    println!(
        "unseen plant: accuracy {:.4}, mIoU {:.4}, IoU soil/stem/leaf {:.3}/{:.3}/{:.3}",
        m.accuracy, m.miou, m.per_class_iou[0], m.per_class_iou[1], m.per_class_iou[2]
    );

    let labels = classes
        .iter()
        .map(|&c| ClassLabel::from_id(c as i64).expect("three classes"))
        .collect();
    let ply = dir.join("prediction.ply");
    write_cloud(&LabeledCloud::new(unseen.cloud.clone(), labels)?, &ply, CloudFormat::Ply)?;
    println!("wrote {} and {}", ckpt.display(), ply.display());
    Ok(())
}
