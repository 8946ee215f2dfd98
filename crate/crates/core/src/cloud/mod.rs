//! Point clouds, per-point class labels and the operations that prepare
//! raw scans for featurization: file I/O, random downsampling, rigid and
//! similarity augmentation, and a synthetic maize-plant generator.

mod augment;
mod io;
mod synth;

use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use augment::{augment, AugmentParams};
pub use io::{read_cloud, write_cloud, CloudFormat};
pub use synth::{synth_maize, DEFAULT_NOISE};

pub type Point3 = [f64; 3];

/// Semantic class of a point. Discriminants are the on-disk label ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ClassLabel {
    Soil = 0,
    Stem = 1,
    Leaf = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Soil, ClassLabel::Stem, ClassLabel::Leaf];
    pub const COUNT: usize = 3;

    pub fn from_id(id: i64) -> Option<Self> {
        match id {
            0 => Some(ClassLabel::Soil),
            1 => Some(ClassLabel::Stem),
            2 => Some(ClassLabel::Leaf),
            _ => None,
        }
    }

    pub fn id(self) -> usize {
        self as usize
    }

    /// Display color: soil red, stem blue, leaf green.
    pub fn color(self) -> [u8; 3] {
        match self {
            ClassLabel::Soil => [255, 0, 0],
            ClassLabel::Stem => [0, 0, 255],
            ClassLabel::Leaf => [0, 255, 0],
        }
    }

    pub fn from_color(rgb: [u8; 3]) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.color() == rgb)
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Soil => "soil",
            ClassLabel::Stem => "stem",
            ClassLabel::Leaf => "leaf",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-empty sequence of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("point cloud must contain at least one point"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::domain(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        c.map(|v| v / n)
    }

    /// Length of the axis-aligned bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// Centers on the centroid and scales so the farthest point lies on the
    /// unit sphere. A single-point cloud is only centered.
    pub fn normalized(&self) -> PointCloud {
        let c = self.centroid();
        let centered: Vec<Point3> = self
            .points
            .iter()
            .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
            .collect();
        let radius = centered
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max);
        let scale = if radius > 0.0 { 1.0 / radius } else { 1.0 };
        PointCloud {
            points: centered.into_iter().map(|p| p.map(|v| v * scale)).collect(),
        }
    }
}

/// A cloud with optional per-point ground truth. `labels == None` marks an
/// unlabeled cloud, which training and evaluation refuse.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    labels: Option<Vec<ClassLabel>>,
}

impl LabeledCloud {
    pub fn new(cloud: PointCloud, labels: Vec<ClassLabel>) -> Result<Self> {
        if labels.len() != cloud.len() {
            return Err(Error::domain(format!(
                "{} labels for {} points",
                labels.len(),
                cloud.len()
            )));
        }
        Ok(Self {
            cloud,
            labels: Some(labels),
        })
    }

    pub fn unlabeled(cloud: PointCloud) -> Self {
        Self {
            cloud,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        self.cloud.points()
    }

    pub fn labels(&self) -> Option<&[ClassLabel]> {
        self.labels.as_deref()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// Labels, or a domain error for unlabeled clouds.
    pub fn require_labels(&self) -> Result<&[ClassLabel]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::domain("cloud is unlabeled; ground truth required"))
    }

    /// Fraction of points per class, indexed by class id.
    pub fn class_fractions(&self) -> Option<[f64; 3]> {
        let labels = self.labels.as_ref()?;
        let mut counts = [0usize; 3];
        for l in labels {
            counts[l.id()] += 1;
        }
        let n = labels.len() as f64;
        Some(counts.map(|c| c as f64 / n))
    }

    pub(crate) fn select(&self, indices: &[usize]) -> LabeledCloud {
        let points = indices.iter().map(|&i| self.cloud.points[i]).collect();
        LabeledCloud {
            cloud: PointCloud { points },
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub(crate) fn with_points(&self, points: Vec<Point3>) -> Result<LabeledCloud> {
        Ok(LabeledCloud {
            cloud: PointCloud::new(points)?,
            labels: self.labels.clone(),
        })
    }
}

/// Uniform random subset of `n` points without replacement. Clouds with at
/// most `n` points are returned unchanged. Selected points keep their
/// original relative order.
pub fn downsample(cloud: &LabeledCloud, n: usize, seed: u64) -> Result<LabeledCloud> {
    if n == 0 {
        return Err(Error::domain("downsample target must be at least 1"));
    }
    if cloud.len() <= n {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, cloud.len(), n).into_vec();
    picked.sort_unstable();
    Ok(cloud.select(&picked))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_cloud(n: usize) -> LabeledCloud {
        let pts = (0..n).map(|i| [i as f64, 0.5 * i as f64, 0.0]).collect();
        let labels = (0..n).map(|i| ClassLabel::ALL[i % 3]).collect();
        LabeledCloud::new(PointCloud::new(pts).unwrap(), labels).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![[0.0, f64::NAN, 0.0]]).is_err());
        assert!(PointCloud::new(vec![[0.0, f64::INFINITY, 0.0]]).is_err());
    }

    #[test]
    fn label_count_must_match() {
        let c = PointCloud::new(vec![[0.0; 3]; 2]).unwrap();
        assert!(LabeledCloud::new(c, vec![ClassLabel::Leaf]).is_err());
    }

    #[test]
    fn color_map_is_fixed() {
        assert_eq!(ClassLabel::Leaf.color(), [0, 255, 0]);
        assert_eq!(ClassLabel::Soil.color(), [255, 0, 0]);
        assert_eq!(ClassLabel::Stem.color(), [0, 0, 255]);
        for c in ClassLabel::ALL {
            assert_eq!(ClassLabel::from_color(c.color()), Some(c));
            assert_eq!(ClassLabel::from_id(c.id() as i64), Some(c));
        }
        assert_eq!(ClassLabel::from_id(3), None);
    }

    #[test]
    fn downsample_keeps_small_clouds() {
        let c = line_cloud(800);
        assert_eq!(downsample(&c, 1024, 1).unwrap(), c);
    }

    #[test]
    fn downsample_rejects_zero() {
        assert!(downsample(&line_cloud(4), 0, 1).is_err());
    }

    #[test]
    fn downsample_picks_distinct_input_points() {
        let c = line_cloud(5000);
        let d = downsample(&c, 1024, 7).unwrap();
        assert_eq!(d.len(), 1024);
        // x coordinate identifies the source index
        let mut seen = std::collections::HashSet::new();
        for (p, l) in d.points().iter().zip(d.labels().unwrap()) {
            let i = p[0] as usize;
            assert_eq!(c.points()[i], *p);
            assert_eq!(c.labels().unwrap()[i], *l);
            assert!(seen.insert(i));
        }
        assert_eq!(d, downsample(&c, 1024, 7).unwrap());
        assert_ne!(d, downsample(&c, 1024, 8).unwrap());
    }

    #[test]
    fn normalized_is_centered_unit_radius() {
        let c = line_cloud(10).cloud.normalized();
        let centroid = c.centroid();
        assert!(centroid.iter().all(|v| v.abs() < 1e-12));
        let r = c
            .points()
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max);
        assert!((r - 1.0).abs() < 1e-12);
    }
}
