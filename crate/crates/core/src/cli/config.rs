use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::{Architecture, ModelConfig};
use crate::train::TrainConfig;

/// Everything a run needs: model shape, training schedule and I/O paths.
///
/// The text form is one `key=value` per line, `#` starts a comment, and keys
/// are the field names of [`ModelConfig`] and [`TrainConfig`] plus `data`,
/// `out` and `checkpoint`. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Cloud file or directory of cloud files.
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::new(Architecture::EdgeGat),
            train: TrainConfig::default(),
            data: None,
            out: PathBuf::from("edgegat-out"),
            checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            _ => {
                if !self.model.set(key, value)? && !self.train.set(key, value)? {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Applies `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(cfg)
    }

    /// Reads a config file; the name `default` means the built-in defaults.
    pub fn load(path: &Path) -> Result<Self> {
        if path == Path::new("default") {
            return Ok(RunConfig::default());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// Text form accepted by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = self.model.to_manifest(self.train.seed);
        let t = &self.train;
        let _ = write!(
            out,
            "lr={}\nepochs={}\nbatch_size={}\npoints_per_cloud={}\nadam_beta1={}\nadam_beta2={}\n\
             adam_eps={}\nfolds={}\nval_fraction={}\naugment={}\ntiming={}\nverbose={}\nout={}\n",
            t.lr,
            t.epochs,
            t.batch_size,
            t.points_per_cloud,
            t.adam_beta1,
            t.adam_beta2,
            t.adam_eps,
            t.folds,
            t.val_fraction,
            t.augment,
            t.timing,
            t.verbose,
            self.out.display()
        );
        if let Some(d) = &self.data {
            let _ = writeln!(out, "data={}", d.display());
        }
        if let Some(c) = &self.checkpoint {
            let _ = writeln!(out, "checkpoint={}", c.display());
        }
        out
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomfeat::FeatureSet;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("architecture", "gcn_unet2").unwrap();
        c.set("feature_set", "XYZ-NC").unwrap();
        c.set("lr", "0.01").unwrap();
        c.set("data", "clouds").unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# run\n\nepochs = 5  # short\nfeature_set=XYZ\n").unwrap();
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.model.feature_set, FeatureSet::Xyz);
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = RunConfig::parse("epochs=5\nlearning_rate=0.1\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("line 2") && m.contains("learning_rate")));
        assert!(RunConfig::parse("epochs=many\n").is_err());
        assert!(RunConfig::parse("epochs\n").is_err());
    }

    #[test]
    fn default_name() {
        assert_eq!(RunConfig::load(Path::new("default")).unwrap(), RunConfig::default());
    }
}
