use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{augmented, collate, PreparedCloud};
use super::metrics::{ConfusionMatrix, MetricsReport};
use super::{Adam, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{apply_bn_updates, Ctx, ModelConfig, Network};
use crate::tensor::{Graph, ParamStore, Real};

/// One row of the learning curves.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_miou: f64,
    pub val_accuracy: f64,
    pub epoch_seconds: f64,
}

pub const CURVES_HEADER: &str = "epoch,train_loss,val_loss,val_miou,val_accuracy,epoch_seconds";

pub fn curves_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.epoch, r.train_loss, r.val_loss, r.val_miou, r.val_accuracy, r.epoch_seconds
        );
    }
    out
}

pub fn write_curves(path: impl AsRef<Path>, records: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, curves_csv(records)).map_err(|e| Error::io(path, e))
}

/// Model, parameters and history of a finished run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Parameters after the last epoch.
    pub store: ParamStore<f32>,
    /// Parameters of the epoch with the highest validation mIoU (earliest on
    /// ties).
    pub best_store: ParamStore<f32>,
    pub best_epoch: usize,
    pub best: MetricsReport,
    pub last: MetricsReport,
    pub curves: Vec<EpochRecord>,
}

/// Builds the network for `model` with parameters drawn from `seed`.
pub fn init_model<T: Real>(model: &ModelConfig, seed: u64) -> Result<(Network, ParamStore<T>)> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network = Network::new(model, &mut store, &mut rng)?;
    Ok((network, store))
}

/// Per-vertex class predictions (dropout off, running batch statistics).
pub fn predict<T: Real>(network: &Network, store: &ParamStore<T>, cloud: &PreparedCloud) -> Result<Vec<usize>> {
    let (batch, _) = collate::<T>(&[cloud])?;
    let graph = Graph::new();
    let ctx = Ctx::new(&graph, store, false, 0);
    let logits = network.forward(&ctx, &batch)?;
    let classes = logits.value().argmax_rows();
    Ok(classes)
}

/// Metrics over every point of `data`, evaluated one cloud at a time with
/// dropout off. `mean_loss` is the per-point mean cross-entropy.
pub fn evaluate<T: Real>(
    network: &Network,
    store: &ParamStore<T>,
    data: &[PreparedCloud],
    num_classes: usize,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::domain("evaluation needs at least one cloud"));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    for cloud in data {
        let (batch, labels) = collate::<T>(&[cloud])?;
        let labels = labels.ok_or_else(|| Error::domain("evaluation needs labeled clouds"))?;
        let graph = Graph::new();
        let ctx = Ctx::new(&graph, store, false, 0);
        let logits = network.forward(&ctx, &batch)?;
        let loss = logits.cross_entropy(&labels)?.item().f64();
        cm.add(&labels, &logits.value().argmax_rows())?;
        loss_sum += loss * labels.len() as f64;
        count += labels.len();
    }
    Ok(MetricsReport::from_confusion(&cm, loss_sum / count as f64))
}

fn step_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ ((epoch as u64) << 32) ^ step as u64
}

/// Trains from freshly initialized parameters.
///
/// Each epoch shuffles the training clouds, groups them into disjoint-union
/// batches of `batch_size`, and takes one Adam step per batch on the
/// per-vertex mean cross-entropy. Validation runs after every epoch; with an
/// empty validation set the training clouds are evaluated instead. With
/// `lr = 0` the model is frozen, batch-norm running statistics included.
pub fn train_loop(
    model: &ModelConfig,
    cfg: &TrainConfig,
    train: &[PreparedCloud],
    val: &[PreparedCloud],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    if train.is_empty() {
        return Err(Error::domain("training needs at least one cloud"));
    }
    for c in train.iter().chain(val) {
        c.require_labels()?;
    }
    let val = if val.is_empty() { train } else { val };
    let (network, mut store) = init_model::<f32>(model, cfg.seed)?;
    let mut adam = Adam::new(&store, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_0DE5);
    let mut curves = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, MetricsReport, ParamStore<f32>)> = None;
    let mut last = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let epoch_data: Vec<PreparedCloud>;
        let source: &[PreparedCloud] = if cfg.augment {
            epoch_data = train
                .iter()
                .enumerate()
                .map(|(i, c)| augmented(c, model, step_seed(cfg.seed, epoch, i)))
                .collect::<Result<_>>()?;
            &epoch_data
        } else {
            train
        };
        let mut order: Vec<usize> = (0..source.len()).collect();
        order.shuffle(&mut order_rng);

        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let parts: Vec<&PreparedCloud> = chunk.iter().map(|&i| &source[i]).collect();
            let (batch, labels) = collate::<f32>(&parts)?;
            let labels = labels.expect("labels checked above");
            let (loss, grads, bn) = {
                let graph = Graph::new();
                let ctx = Ctx::new(&graph, &store, true, step_seed(cfg.seed, epoch, step));
                let logits = network.forward(&ctx, &batch)?;
                let loss = logits.cross_entropy(&labels)?;
                let value = loss.item().f64();
                if !value.is_finite() {
                    return Err(Error::Divergence(format!(
                        "loss became {value} at epoch {epoch}, batch {}",
                        step + 1
                    )));
                }
                (value, graph.backward(loss)?, ctx.bn_updates())
            };
            adam.step(&mut store, &grads)?;
            if cfg.lr > 0.0 {
                apply_bn_updates(&mut store, &bn);
            }
            loss_sum += loss * labels.len() as f64;
            count += labels.len();
        }

        let mut report = evaluate(&network, &store, val, model.num_classes)?;
        let seconds = if cfg.timing { started.elapsed().as_secs_f64() } else { 0.0 };
        report.epoch_time = seconds;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / count as f64,
            val_loss: report.mean_loss,
            val_miou: report.miou,
            val_accuracy: report.accuracy,
            epoch_seconds: seconds,
        };
        if cfg.verbose {
            eprintln!(
                "epoch {epoch:>4}  train_loss {:.4}  val_loss {:.4}  val_miou {:.4}  val_acc {:.4}",
                record.train_loss, record.val_loss, record.val_miou, record.val_accuracy
            );
        }
        curves.push(record);
        if best.as_ref().is_none_or(|(_, b, _)| report.miou > b.miou) {
            best = Some((epoch, report.clone(), store.clone()));
        }
        last = Some(report);
    }

    let (best_epoch, best, best_store) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        network,
        store,
        best_store,
        best_epoch,
        best,
        last: last.expect("at least one epoch"),
        curves,
    })
}
