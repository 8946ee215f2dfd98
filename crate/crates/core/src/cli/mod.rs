//! Command-line entry points: featurize, synth, train, kfold, eval, predict
//! and export.
//!
//! Settings resolve as flags over the `--config` file over the defaults.
//! Exit codes: 0 success, 1 usage, config or checkpoint error, 2 data error,
//! 3 divergence.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::cloud::{downsample, read_cloud, synth_maize, write_cloud, CloudFormat, LabeledCloud, DEFAULT_NOISE};
use crate::error::{Error, Result};
use crate::geomfeat::{featurize, FeatureSet, DEFAULT_K_FEATURES};
use crate::graph::knn_graph;
use crate::nn::{Architecture, ModelConfig, Network};
use crate::tensor::{read_checkpoint, write_checkpoint, ParamStore};
use crate::train::{
    evaluate, evaluate_predictions, kfold_run, predict, prepare_cloud, prepare_dataset, train_loop, write_curves,
};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "edgegat", version, about = "Soil/stem/leaf point-cloud segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the per-point descriptor CSV of a cloud.
    Featurize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_FEATURES)]
        k_features: usize,
        #[arg(long, default_value = "XYZ-NCLPSOAE")]
        feature_set: FeatureSet,
    },
    /// Generate labeled synthetic plants as xyz-label files.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1024)]
        points: usize,
        #[arg(long, default_value_t = DEFAULT_NOISE)]
        noise: f64,
    },
    /// Train on a held-out split; writes checkpoint, manifest and curves.
    Train(RunArgs),
    /// K-fold cross-validation; writes per-fold curves and a JSON report.
    Kfold(RunArgs),
    /// Metrics of a checkpoint on labeled clouds.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-point classes of a cloud as a class-colored PLY.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Must agree with the checkpoint when given.
        #[arg(long)]
        feature_set: Option<FeatureSet>,
        #[arg(long)]
        arch: Option<Architecture>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert a cloud to a class-colored PLY, optionally dumping its KNN
    /// edge list.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        k: usize,
    },
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Key=value file, or `default`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    arch: Option<Architecture>,
    #[arg(long)]
    feature_set: Option<FeatureSet>,
    /// Graph neighbours.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Print one line per epoch.
    #[arg(long)]
    verbose: bool,
    /// Write zeros instead of wall-clock epoch times.
    #[arg(long)]
    no_timing: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.data {
            c.data = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = self.seed {
            c.train.seed = v;
        }
        if let Some(v) = self.arch {
            c.model.architecture = v;
        }
        if let Some(v) = self.feature_set {
            c.model.feature_set = v;
        }
        if let Some(v) = self.k {
            c.model.k_graph = v;
        }
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = self.lr {
            c.train.lr = v;
        }
        if let Some(v) = self.batch_size {
            c.train.batch_size = v;
        }
        if let Some(v) = self.points {
            c.train.points_per_cloud = v;
        }
        if let Some(v) = self.folds {
            c.train.folds = v;
        }
        c.train.verbose |= self.verbose;
        if self.no_timing {
            c.train.timing = false;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Featurize {
            input,
            output,
            k_features,
            feature_set,
        } => cmd_featurize(&input, &output, k_features, feature_set),
        Command::Synth {
            count,
            out_dir,
            seed,
            points,
            noise,
        } => cmd_synth(count, &out_dir, seed, points, noise),
        Command::Train(a) => cmd_train(&a.resolve()?),
        Command::Kfold(a) => cmd_kfold(&a.resolve()?),
        Command::Eval {
            checkpoint,
            data,
            points,
            seed,
        } => cmd_eval(&checkpoint, &data, points, seed),
        Command::Predict {
            checkpoint,
            input,
            output,
            feature_set,
            arch,
            points,
            seed,
        } => cmd_predict(&checkpoint, &input, &output, feature_set, arch, points, seed),
        Command::Export { input, output, edges, k } => cmd_export(&input, &output, edges.as_deref(), k),
    }
}

fn read_any(path: &Path) -> Result<LabeledCloud> {
    read_cloud(path, CloudFormat::from_path(path))
}

/// A cloud file, or every `.txt`, `.xyz` and `.ply` file of a directory in
/// name order.
pub fn load_clouds(path: &Path) -> Result<Vec<LabeledCloud>> {
    if !path.is_dir() {
        return Ok(vec![read_any(path)?]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| ["txt", "xyz", "ply"].contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Domain(format!("{}: no cloud files", path.display())));
    }
    files.iter().map(|p| read_any(p)).collect()
}

fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn save_model(path: &Path, model: &ModelConfig, seed: u64, store: &ParamStore<f32>) -> Result<()> {
    write_checkpoint(store, path)?;
    let manifest = manifest_path(path);
    fs::write(&manifest, model.to_manifest(seed)).map_err(|e| Error::Io {
        path: manifest,
        source: e,
    })
}

/// Model and parameters of a checkpoint and its manifest.
pub fn load_model(path: &Path) -> Result<(ModelConfig, Network, ParamStore<f32>)> {
    let manifest = manifest_path(path);
    let text = fs::read_to_string(&manifest).map_err(|e| Error::Checkpoint {
        path: manifest.clone(),
        msg: e.to_string(),
    })?;
    let (model, seed) = ModelConfig::from_manifest(&text)?;
    let (network, mut store) = crate::train::init_model::<f32>(&model, seed)?;
    let saved = read_checkpoint::<f32>(path)?;
    store.load_from(&saved).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok((model, network, store))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn cmd_featurize(input: &Path, output: &Path, k: usize, set: FeatureSet) -> Result<()> {
    let cloud = read_any(input)?;
    let features = featurize(&cloud.cloud.normalized(), k)?;
    features.write_csv(output, set, cloud.labels())?;
    eprintln!("{}: {} points, {} feature columns", output.display(), cloud.len(), set.width());
    Ok(())
}

fn cmd_synth(count: usize, dir: &Path, seed: u64, points: usize, noise: f64) -> Result<()> {
    if count == 0 {
        return Err(Error::Domain("synth count must be at least 1".into()));
    }
    create_dir(dir)?;
    for i in 0..count {
        let cloud = synth_maize(points, seed.wrapping_add(i as u64), noise)?;
        write_cloud(&cloud, dir.join(format!("plant_{i:03}.txt")), CloudFormat::XyzLabel)?;
    }
    eprintln!("wrote {count} clouds to {}", dir.display());
    Ok(())
}

fn require_data(c: &RunConfig) -> Result<&Path> {
    c.data
        .as_deref()
        .ok_or_else(|| Error::Config("no data path: pass --data or set data= in the config".into()))
}

fn cmd_train(c: &RunConfig) -> Result<()> {
    let clouds = load_clouds(require_data(c)?)?;
    let data = prepare_dataset(&clouds, &c.model, c.train.points_per_cloud, c.train.seed)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(c.train.seed));
    let n_val = if data.len() > 1 {
        ((c.train.val_fraction * data.len() as f64).round() as usize).min(data.len() - 1)
    } else {
        0
    };
    let (val_ids, train_ids) = order.split_at(n_val);
    let pick = |ids: &[usize]| ids.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let (train, val) = (pick(train_ids), pick(val_ids));
    eprintln!(
        "training {} on {} clouds, validating on {}",
        c.model.architecture,
        train.len(),
        if val.is_empty() { "the training clouds".to_string() } else { format!("{} clouds", val.len()) }
    );
    let out = train_loop(&c.model, &c.train, &train, &val)?;
    create_dir(&c.out)?;
    let ckpt = c.checkpoint.clone().unwrap_or_else(|| c.out.join("model.ckpt"));
    save_model(&ckpt, &c.model, c.train.seed, &out.best_store)?;
    write_curves(c.out.join("curves.csv"), &out.curves)?;
    let report = json!({
        "architecture": c.model.architecture.name(),
        "checkpoint": ckpt.display().to_string(),
        "best_epoch": out.best_epoch,
        "best": out.best,
        "last": out.last,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn cmd_kfold(c: &RunConfig) -> Result<()> {
    let clouds = load_clouds(require_data(c)?)?;
    let data = prepare_dataset(&clouds, &c.model, c.train.points_per_cloud, c.train.seed)?;
    create_dir(&c.out)?;
    let mut written = Ok(());
    let report = kfold_run(&data, &c.model, &c.train, |f| {
        eprintln!(
            "fold {}: best epoch {} mIoU {:.4} accuracy {:.4}",
            f.fold, f.best_epoch, f.best.miou, f.best.accuracy
        );
        if written.is_ok() {
            written = write_curves(c.out.join(format!("fold{}_curves.csv", f.fold)), &f.curves);
        }
    })?;
    written?;
    let json = report.to_json();
    let path = c.out.join("kfold_report.json");
    fs::write(&path, &json).map_err(|e| Error::Io { path, source: e })?;
    println!("{json}");
    Ok(())
}

fn cmd_eval(checkpoint: &Path, data: &Path, points: Option<usize>, seed: u64) -> Result<()> {
    let (model, network, store) = load_model(checkpoint)?;
    let clouds = load_clouds(data)?;
    let prepared = clouds
        .iter()
        .enumerate()
        .map(|(i, cl)| {
            cl.require_labels()?;
            prepare_cloud(cl, &model, points, crate::train::cloud_seed(seed, i))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&network, &store, &prepared, model.num_classes)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn cmd_predict(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    feature_set: Option<FeatureSet>,
    arch: Option<Architecture>,
    points: Option<usize>,
    seed: u64,
) -> Result<()> {
    let (model, network, store) = load_model(checkpoint)?;
    if let Some(fs) = feature_set.filter(|&f| f != model.feature_set) {
        return Err(Error::Config(format!(
            "--feature-set {fs} does not match the checkpoint's {}",
            model.feature_set
        )));
    }
    if let Some(a) = arch.filter(|&a| a != model.architecture) {
        return Err(Error::Config(format!(
            "--arch {a} does not match the checkpoint's {}",
            model.architecture
        )));
    }
    let cloud = read_any(input)?;
    let cloud = match points {
        Some(n) => downsample(&cloud, n, seed)?,
        None => cloud,
    };
    let prepared = prepare_cloud(&cloud, &model, None, seed)?;
    let classes = predict(&network, &store, &prepared)?;
    if let Some(truth) = &prepared.labels {
        let m = evaluate_predictions(model.num_classes, truth, &classes)?;
        eprintln!("agreement with input labels: accuracy {:.4}, mIoU {:.4}", m.accuracy, m.miou);
    }
    let labels = classes
        .iter()
        .map(|&c| crate::cloud::ClassLabel::from_id(c as i64).ok_or_else(|| Error::Domain(format!("class {c} has no label"))))
        .collect::<Result<Vec<_>>>()?;
    let colored = LabeledCloud::new(cloud.cloud.clone(), labels)?;
    write_cloud(&colored, output, CloudFormat::Ply)?;
    eprintln!("{}: {} points", output.display(), colored.len());
    Ok(())
}

fn cmd_export(input: &Path, output: &Path, edges: Option<&Path>, k: usize) -> Result<()> {
    let cloud = read_any(input)?;
    write_cloud(&cloud, output, CloudFormat::Ply)?;
    if let Some(path) = edges {
        knn_graph(&cloud.cloud, k)?.write_edge_list(path)?;
    }
    Ok(())
}
