use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::data::PreparedCloud;
use super::fit::{train_loop, EpochRecord};
use super::metrics::MetricsReport;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::ModelConfig;

/// Seeded partition of `0..n` into `folds` disjoint subsets whose sizes
/// differ by at most one. Each subset is sorted.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::domain(format!("{n} clouds cannot fill {folds} folds")));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut fold = ids[start..start + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += size;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub validation: Vec<usize>,
    pub best_epoch: usize,
    /// Validation metrics at the best epoch.
    pub best: MetricsReport,
    /// Validation metrics after the final epoch.
    pub last: MetricsReport,
    #[serde(skip)]
    pub curves: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KfoldReport {
    pub architecture: String,
    pub folds: Vec<FoldReport>,
    /// Mean over folds of the best-epoch metrics (headline).
    pub aggregate: MetricsReport,
    /// Mean over folds of the final-epoch metrics.
    pub aggregate_last: MetricsReport,
}

impl KfoldReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Cross-validation: every fold is validated once by a model trained on the
/// remaining folds. Fold `f` trains with seed `cfg.seed + f`; the partition
/// itself depends only on `cfg.seed`, so different models see the same
/// folds. `on_fold` is called as each fold finishes.
pub fn kfold_run(
    data: &[PreparedCloud],
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut on_fold: impl FnMut(&FoldReport),
) -> Result<KfoldReport> {
    cfg.validate()?;
    let partition = fold_partition(data.len(), cfg.folds, cfg.seed)?;
    let mut folds = Vec::with_capacity(cfg.folds);
    for (f, held_out) in partition.iter().enumerate() {
        let train: Vec<PreparedCloud> = (0..data.len())
            .filter(|i| held_out.binary_search(i).is_err())
            .map(|i| data[i].clone())
            .collect();
        let val: Vec<PreparedCloud> = held_out.iter().map(|&i| data[i].clone()).collect();
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(f as u64),
            ..cfg.clone()
        };
        let outcome = train_loop(model, &fold_cfg, &train, &val)?;
        let report = FoldReport {
            fold: f,
            validation: held_out.clone(),
            best_epoch: outcome.best_epoch,
            best: outcome.best,
            last: outcome.last,
            curves: outcome.curves,
        };
        on_fold(&report);
        folds.push(report);
    }
    let best: Vec<MetricsReport> = folds.iter().map(|f| f.best.clone()).collect();
    let last: Vec<MetricsReport> = folds.iter().map(|f| f.last.clone()).collect();
    Ok(KfoldReport {
        architecture: model.architecture.to_string(),
        aggregate: MetricsReport::mean(&best)?,
        aggregate_last: MetricsReport::mean(&last)?,
        folds,
    })
}
