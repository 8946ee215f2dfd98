//! Local-PCA geometric descriptors.
//!
//! Each point gets a 13-column descriptor from the covariance of its `k`
//! nearest neighbours: position, oriented normal, and seven eigenvalue
//! shape scalars (curvature, linearity, planarity, scattering,
//! omnivariance, anisotropy, eigenentropy).

mod eigen;

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::cloud::{ClassLabel, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::graph::KdTree;

pub use eigen::{asymmetry, eigen3, EigenTriple, Mat3, Vec3};

pub const NUM_FEATURES: usize = 13;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "x",
    "y",
    "z",
    "nx",
    "ny",
    "nz",
    "curvature",
    "linearity",
    "planarity",
    "scattering",
    "omnivariance",
    "anisotropy",
    "eigenentropy",
];

pub const DEFAULT_K_FEATURES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDescriptor {
    pub xyz: Vec3,
    pub normal: Vec3,
    pub curvature: f64,
    pub linearity: f64,
    pub planarity: f64,
    pub scattering: f64,
    pub omnivariance: f64,
    pub anisotropy: f64,
    pub eigenentropy: f64,
}

impl PointDescriptor {
    pub fn to_row(&self) -> [f64; NUM_FEATURES] {
        [
            self.xyz[0],
            self.xyz[1],
            self.xyz[2],
            self.normal[0],
            self.normal[1],
            self.normal[2],
            self.curvature,
            self.linearity,
            self.planarity,
            self.scattering,
            self.omnivariance,
            self.anisotropy,
            self.eigenentropy,
        ]
    }

    fn degenerate(xyz: Vec3) -> Self {
        Self {
            xyz,
            normal: [0.0, 0.0, 1.0],
            curvature: 0.0,
            linearity: 0.0,
            planarity: 0.0,
            scattering: 0.0,
            omnivariance: 0.0,
            anisotropy: 0.0,
            eigenentropy: 0.0,
        }
    }
}

/// Flips `n` so that `n_z >= 0`; exact zeros defer to `n_y`, then `n_x`.
pub fn orient_normal(n: Vec3) -> Vec3 {
    let flip = if n[2] != 0.0 {
        n[2] < 0.0
    } else if n[1] != 0.0 {
        n[1] < 0.0
    } else {
        n[0] < 0.0
    };
    if flip {
        [-n[0], -n[1], -n[2]]
    } else {
        n
    }
}

/// Descriptor from an eigen-decomposition. Eigenvalue sums at or below
/// `degenerate_below` produce zero scalars and a `+z` normal.
pub fn descriptor_with_floor(triple: &EigenTriple, xyz: Vec3, degenerate_below: f64) -> PointDescriptor {
    let t = triple.clamped();
    let [l0, l1, l2] = t.values;
    let sum = l0 + l1 + l2;
    if !(sum > degenerate_below) || l2 <= 0.0 {
        return PointDescriptor::degenerate(xyz);
    }
    let entropy = -t
        .values
        .iter()
        .map(|&l| l / sum)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    PointDescriptor {
        xyz,
        normal: orient_normal(t.vectors[0]),
        curvature: l0 / sum,
        linearity: (l2 - l1) / l2,
        planarity: (l1 - l0) / l2,
        scattering: l0 / l2,
        omnivariance: (l0 * l1 * l2).cbrt(),
        anisotropy: (l2 - l0) / l2,
        eigenentropy: entropy,
    }
}

pub fn descriptor(triple: &EigenTriple, xyz: Vec3) -> PointDescriptor {
    descriptor_with_floor(triple, xyz, 0.0)
}

/// Population covariance `(1/k) Σ (p − p̄)(p − p̄)ᵀ` of a point set.
pub fn covariance(points: &[Point3]) -> Mat3 {
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    mean = mean.map(|v| v / n);
    let mut c = [[0.0; 3]; 3];
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for i in 0..3 {
            for j in i..3 {
                c[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            c[i][j] /= n;
            c[j][i] = c[i][j];
        }
    }
    c
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::domain(format!(
            "neighborhood size k = {k} is below 3; eigen-features undefined"
        )));
    }
    if n < k + 1 {
        return Err(Error::domain(format!(
            "cloud of {n} points is too small for k = {k} neighbours"
        )));
    }
    Ok(())
}

/// Covariance of the `k` nearest neighbours of point `index` (itself
/// excluded, ties to the lower index).
pub fn neighborhood_covariance(cloud: &PointCloud, index: usize, k: usize) -> Result<Mat3> {
    check_k(k, cloud.len())?;
    let pts = cloud.points();
    let q = pts
        .get(index)
        .ok_or_else(|| Error::domain(format!("point index {index} out of range")))?;
    let tree = KdTree::new(pts);
    let nb: Vec<Point3> = tree
        .nearest(q, k, Some(index))
        .into_iter()
        .map(|n| pts[n.index])
        .collect();
    Ok(covariance(&nb))
}

/// Subsets of the 13 descriptor columns used as model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSet {
    Xyz,
    XyzN,
    XyzNC,
    Full,
}

impl FeatureSet {
    pub fn columns(self) -> &'static [usize] {
        match self {
            FeatureSet::Xyz => &[0, 1, 2],
            FeatureSet::XyzN => &[0, 1, 2, 3, 4, 5],
            FeatureSet::XyzNC => &[0, 1, 2, 3, 4, 5, 6],
            FeatureSet::Full => &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
        }
    }

    pub fn width(self) -> usize {
        self.columns().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Xyz => "XYZ",
            FeatureSet::XyzN => "XYZ-N",
            FeatureSet::XyzNC => "XYZ-NC",
            FeatureSet::Full => "XYZ-NCLPSOAE",
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "XYZ" => Ok(FeatureSet::Xyz),
            "XYZ-N" | "XYZN" => Ok(FeatureSet::XyzN),
            "XYZ-NC" | "XYZNC" => Ok(FeatureSet::XyzNC),
            "XYZ-NCLPSOAE" | "XYZNCLPSOAE" | "FULL" | "13" => Ok(FeatureSet::Full),
            _ => Err(Error::Config(format!("unknown feature set {s:?}"))),
        }
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Row-major matrix of per-point features; row order follows the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "{} values for a {rows}x{cols} feature matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("feature matrix contains non-finite values"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    /// Column subset for a feature set; expects the full 13-column layout.
    pub fn select(&self, set: FeatureSet) -> Result<FeatureMatrix> {
        if self.cols != NUM_FEATURES {
            return Err(Error::domain(format!(
                "feature selection needs {NUM_FEATURES} columns, have {}",
                self.cols
            )));
        }
        let cols = set.columns();
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Ok(FeatureMatrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        })
    }

    pub fn vstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if parts.iter().any(|p| p.cols != cols) {
            return Err(Error::domain("feature matrices differ in width"));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(FeatureMatrix {
            rows: parts.iter().map(|p| p.rows).sum(),
            cols,
            data,
        })
    }

    /// CSV with named columns (the named subset for `set`), optionally
    /// followed by a `label` column.
    pub fn to_csv(&self, set: FeatureSet, labels: Option<&[ClassLabel]>) -> Result<String> {
        let sel = if self.cols == set.width() {
            self.clone()
        } else {
            self.select(set)?
        };
        let mut out = String::new();
        let names: Vec<&str> = set.columns().iter().map(|&c| FEATURE_NAMES[c]).collect();
        out.push_str(&names.join(","));
        if labels.is_some() {
            out.push_str(",label");
        }
        out.push('\n');
        for i in 0..sel.rows {
            let row: Vec<String> = sel.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            if let Some(l) = labels {
                write!(out, ",{}", l[i].id()).unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_csv(
        &self,
        path: impl AsRef<Path>,
        set: FeatureSet,
        labels: Option<&[ClassLabel]>,
    ) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(set, labels)?).map_err(|e| Error::io(path, e))
    }
}

/// Full 13-column descriptors for every point.
pub fn featurize(cloud: &PointCloud, k_features: usize) -> Result<FeatureMatrix> {
    check_k(k_features, cloud.len())?;
    let pts = cloud.points();
    let tree = KdTree::new(pts);
    let diameter = cloud.diameter();
    let floor = 1e-12 * diameter * diameter;
    let mut data = Vec::with_capacity(pts.len() * NUM_FEATURES);
    let mut nb = Vec::with_capacity(k_features);
    for (i, p) in pts.iter().enumerate() {
        nb.clear();
        nb.extend(tree.nearest(p, k_features, Some(i)).into_iter().map(|n| pts[n.index]));
        let triple = eigen::eigen3(&covariance(&nb))?;
        data.extend_from_slice(&descriptor_with_floor(&triple, *p, floor).to_row());
    }
    FeatureMatrix::from_rows(pts.len(), NUM_FEATURES, data)
}
