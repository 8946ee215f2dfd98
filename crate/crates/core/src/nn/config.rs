use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geomfeat::{FeatureSet, DEFAULT_K_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    EdgeGat,
    Gcn,
    Gat,
    GcnUnet,
    GcnUnet2,
    PointNet,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::EdgeGat,
        Architecture::Gcn,
        Architecture::Gat,
        Architecture::GcnUnet,
        Architecture::GcnUnet2,
        Architecture::PointNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::EdgeGat => "edgegat",
            Architecture::Gcn => "gcn",
            Architecture::Gat => "gat",
            Architecture::GcnUnet => "gcn_unet",
            Architecture::GcnUnet2 => "gcn_unet2",
            Architecture::PointNet => "pointnet",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// Architecture choice plus every width and rate that shapes the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub feature_set: FeatureSet,
    pub k_graph: usize,
    pub k_features: usize,
    pub num_classes: usize,
    /// EdgeConv residual-MLP hidden width.
    pub edge_hidden: usize,
    /// EdgeConv output width.
    pub edge_out: usize,
    pub heads: usize,
    /// Per-head attention width.
    pub head_width: usize,
    /// Hidden width of the GCN-family baselines.
    pub hidden: usize,
    pub dropout: f64,
    pub slope: f64,
    pub pool_ratio: f64,
    pub unet_depth: usize,
    pub dynamic_knn: bool,
}

impl ModelConfig {
    pub fn new(architecture: Architecture) -> Self {
        ModelConfig {
            architecture,
            feature_set: FeatureSet::Full,
            k_graph: 16,
            k_features: DEFAULT_K_FEATURES,
            num_classes: 3,
            edge_hidden: 32,
            edge_out: 64,
            heads: 4,
            head_width: 64,
            hidden: 64,
            dropout: 0.2,
            slope: 0.2,
            pool_ratio: 0.5,
            unet_depth: 2,
            dynamic_knn: false,
        }
    }

    pub fn input_width(&self) -> usize {
        self.feature_set.width()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_graph == 0 {
            return bad("k_graph must be at least 1".into());
        }
        if self.k_features < 3 {
            return bad("k_features must be at least 3".into());
        }
        for (name, v) in [
            ("num_classes", self.num_classes),
            ("edge_hidden", self.edge_hidden),
            ("edge_out", self.edge_out),
            ("heads", self.heads),
            ("head_width", self.head_width),
            ("hidden", self.hidden),
            ("unet_depth", self.unet_depth),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.pool_ratio > 0.0 && self.pool_ratio <= 1.0) {
            return bad(format!("pool_ratio {} outside (0, 1]", self.pool_ratio));
        }
        if !self.slope.is_finite() {
            return bad("slope must be finite".into());
        }
        Ok(())
    }

    /// Text manifest stored next to a checkpoint, one `key=value` per line.
    pub fn to_manifest(&self, seed: u64) -> String {
        let c = self;
        format!(
            "architecture={}\nfeature_set={}\nk_graph={}\nk_features={}\nnum_classes={}\n\
             edge_hidden={}\nedge_out={}\nheads={}\nhead_width={}\nhidden={}\ndropout={}\n\
             slope={}\npool_ratio={}\nunet_depth={}\ndynamic_knn={}\nseed={}\n",
            c.architecture,
            c.feature_set,
            c.k_graph,
            c.k_features,
            c.num_classes,
            c.edge_hidden,
            c.edge_out,
            c.heads,
            c.head_width,
            c.hidden,
            c.dropout,
            c.slope,
            c.pool_ratio,
            c.unet_depth,
            c.dynamic_knn,
            seed
        )
    }

    /// Parses a manifest; returns the config and the recorded seed.
    pub fn from_manifest(text: &str) -> Result<(ModelConfig, u64)> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad manifest line {line:?}")))?;
            map.insert(k.trim(), v.trim());
        }
        let mut take = |k: &str| map.remove(k).ok_or_else(|| Error::Config(format!("manifest lacks {k}")));
        let mut c = ModelConfig::new(take("architecture")?.parse()?);
        let seed = parse_value("seed", take("seed")?)?;
        for (k, v) in map {
            if !c.set(k, v)? {
                return Err(Error::Config(format!("unknown manifest key {k}")));
            }
        }
        c.validate()?;
        Ok((c, seed))
    }

    /// Sets the field named `key` from its text form. Returns `false` when
    /// no such field exists.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value;
        match key {
            "architecture" => self.architecture = v.parse()?,
            "feature_set" => self.feature_set = v.parse()?,
            "k_graph" => self.k_graph = parse_value(key, v)?,
            "k_features" => self.k_features = parse_value(key, v)?,
            "num_classes" => self.num_classes = parse_value(key, v)?,
            "edge_hidden" => self.edge_hidden = parse_value(key, v)?,
            "edge_out" => self.edge_out = parse_value(key, v)?,
            "heads" => self.heads = parse_value(key, v)?,
            "head_width" => self.head_width = parse_value(key, v)?,
            "hidden" => self.hidden = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "slope" => self.slope = parse_value(key, v)?,
            "pool_ratio" => self.pool_ratio = parse_value(key, v)?,
            "unet_depth" => self.unet_depth = parse_value(key, v)?,
            "dynamic_knn" => self.dynamic_knn = parse_value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Parses `value` for config key `key`, with a config error on failure.
pub fn parse_value<N: FromStr>(key: &str, value: &str) -> Result<N> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}={value} is not a valid value")))
}
