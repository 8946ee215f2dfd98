//! Optimizer, metrics, data preparation, the epoch loop and k-fold
//! cross-validation.

mod adam;
mod data;
mod fit;
mod kfold;
mod metrics;

use crate::error::{Error, Result};
use crate::nn::parse_value;

pub use adam::Adam;
pub use data::{augmented, cloud_seed, collate, prepare_cloud, prepare_dataset, PreparedCloud};
pub use fit::{
    curves_csv, evaluate, init_model, predict, train_loop, write_curves, EpochRecord, TrainOutcome, CURVES_HEADER,
};
pub use kfold::{fold_partition, kfold_run, FoldReport, KfoldReport};
pub use metrics::{evaluate_predictions, ConfusionMatrix, MetricsReport};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub points_per_cloud: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub folds: usize,
    /// Fraction of clouds held out for validation by single runs.
    pub val_fraction: f64,
    /// Re-augment and re-featurize training clouds every epoch.
    pub augment: bool,
    /// Record wall-clock epoch time; when off the curves carry zeros and
    /// are byte-reproducible.
    pub timing: bool,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            epochs: 100,
            batch_size: 8,
            points_per_cloud: 1024,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            folds: 5,
            val_fraction: 0.2,
            augment: false,
            timing: true,
            verbose: false,
        }
    }
}

impl TrainConfig {
    /// Sets the field named `key` from its text form. Returns `false` when
    /// no such field exists.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value;
        match key {
            "lr" => self.lr = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "points_per_cloud" => self.points_per_cloud = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, v)?,
            "adam_eps" => self.adam_eps = parse_value(key, v)?,
            "folds" => self.folds = parse_value(key, v)?,
            "val_fraction" => self.val_fraction = parse_value(key, v)?,
            "augment" => self.augment = parse_value(key, v)?,
            "timing" => self.timing = parse_value(key, v)?,
            "verbose" => self.verbose = parse_value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be finite and non-negative", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.points_per_cloud == 0 {
            return bad("points_per_cloud must be at least 1".into());
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} outside [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        Ok(())
    }
}
