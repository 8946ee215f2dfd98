//! Spatial KNN graphs over point clouds, disjoint-union batching and the
//! symmetrically normalized adjacency used by GCN layers.

mod kdtree;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::geomfeat::FeatureMatrix;

pub use kdtree::{brute_force_nearest, dist2, KdTree, Neighbor};

/// Undirected graph stored as directed `(source, destination)` pairs with
/// both orientations present, plus per-vertex graph membership.
///
/// Edges are sorted by `(destination, source)`. Self-edges never appear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphTopology {
    num_vertices: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    batch: Vec<usize>,
}

impl GraphTopology {
    /// Builds a topology from arbitrary directed pairs: duplicates are
    /// merged, the reverse of every pair is added and self-pairs dropped.
    pub fn from_pairs(
        num_vertices: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
        batch: Vec<usize>,
    ) -> Result<Self> {
        if batch.len() != num_vertices {
            return Err(Error::domain(format!(
                "batch vector has {} entries for {num_vertices} vertices",
                batch.len()
            )));
        }
        let mut set = BTreeSet::new();
        for (s, d) in pairs {
            if s >= num_vertices || d >= num_vertices {
                return Err(Error::domain(format!(
                    "edge ({s}, {d}) out of range for {num_vertices} vertices"
                )));
            }
            if s == d {
                continue;
            }
            if batch[s] != batch[d] {
                return Err(Error::domain(format!(
                    "edge ({s}, {d}) crosses graphs {} and {}",
                    batch[s], batch[d]
                )));
            }
            // keyed (dst, src)
            set.insert((d, s));
            set.insert((s, d));
        }
        let (dst, src) = set.into_iter().unzip();
        Ok(Self {
            num_vertices,
            src,
            dst,
            batch,
        })
    }

    pub fn empty(num_vertices: usize) -> Self {
        Self {
            num_vertices,
            src: Vec::new(),
            dst: Vec::new(),
            batch: vec![0; num_vertices],
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn sources(&self) -> &[usize] {
        &self.src
    }

    pub fn destinations(&self) -> &[usize] {
        &self.dst
    }

    /// The 2×|E| edge-index matrix: row 0 sources, row 1 destinations.
    pub fn edge_index(&self) -> [&[usize]; 2] {
        [&self.src, &self.dst]
    }

    pub fn batch(&self) -> &[usize] {
        &self.batch
    }

    pub fn num_graphs(&self) -> usize {
        self.batch.iter().max().map_or(0, |m| m + 1)
    }

    pub fn in_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_vertices];
        for &d in &self.dst {
            deg[d] += 1;
        }
        deg
    }

    /// Checks every structural invariant; constructors already enforce them.
    pub fn validate(&self) -> Result<()> {
        let mut set = BTreeSet::new();
        for (&s, &d) in self.src.iter().zip(&self.dst) {
            if s >= self.num_vertices || d >= self.num_vertices {
                return Err(Error::domain("edge id out of range"));
            }
            if s == d {
                return Err(Error::domain("self edge present"));
            }
            if self.batch[s] != self.batch[d] {
                return Err(Error::domain("edge crosses graphs"));
            }
            set.insert((s, d));
        }
        if set.iter().any(|&(s, d)| !set.contains(&(d, s))) {
            return Err(Error::domain("edge set is not symmetric"));
        }
        Ok(())
    }

    /// Disjoint union; vertex ids and batch ids are offset per part.
    pub fn disjoint_union(parts: &[&GraphTopology]) -> GraphTopology {
        let mut out = GraphTopology::empty(0);
        out.batch.clear();
        let mut graph_offset = 0;
        for g in parts {
            let off = out.num_vertices;
            out.src.extend(g.src.iter().map(|s| s + off));
            out.dst.extend(g.dst.iter().map(|d| d + off));
            out.batch.extend(g.batch.iter().map(|b| b + graph_offset));
            out.num_vertices += g.num_vertices;
            graph_offset += g.num_graphs().max(1);
        }
        out
    }

    /// Subgraph induced by `keep` (ascending vertex ids); kept vertices are
    /// renumbered by their position in `keep`.
    pub fn induced(&self, keep: &[usize]) -> GraphTopology {
        let mut remap = vec![usize::MAX; self.num_vertices];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (&s, &d) in self.src.iter().zip(&self.dst) {
            let (ns, nd) = (remap[s], remap[d]);
            if ns != usize::MAX && nd != usize::MAX {
                pairs.push((nd, ns));
            }
        }
        pairs.sort_unstable();
        for (d, s) in pairs {
            src.push(s);
            dst.push(d);
        }
        GraphTopology {
            num_vertices: keep.len(),
            src,
            dst,
            batch: keep.iter().map(|&v| self.batch[v]).collect(),
        }
    }

    /// Debug dump: one `src dst` pair per line.
    pub fn edge_list(&self) -> String {
        let mut out = String::with_capacity(self.num_edges() * 12);
        for (s, d) in self.src.iter().zip(&self.dst) {
            writeln!(out, "{s} {d}").unwrap();
        }
        out
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.edge_list()).map_err(|e| Error::io(path, e))
    }
}

/// Directed neighbor lists: entry `i` holds the `k` points nearest to point
/// `i` (itself excluded), ordered by distance then index.
pub fn knn_lists(points: &[Point3], k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k >= points.len() {
        return Err(Error::domain(format!(
            "k = {k} must satisfy 1 <= k < {} points",
            points.len()
        )));
    }
    let tree = KdTree::new(points);
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| tree.nearest(p, k, Some(i)).into_iter().map(|n| n.index).collect())
        .collect())
}

/// Spatial KNN graph on xyz, closed under edge reversal.
pub fn knn_graph(cloud: &PointCloud, k: usize) -> Result<GraphTopology> {
    let lists = knn_lists(cloud.points(), k)?;
    let pairs = lists
        .iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().map(move |&j| (j, i)));
    GraphTopology::from_pairs(cloud.len(), pairs, vec![0; cloud.len()])
}

/// KNN graph in feature space (rows of a row-major `n × dim` buffer), built
/// separately inside each batch segment. Segments with fewer than `k + 1`
/// vertices connect every pair.
pub fn knn_feature_graph(
    features: &[f64],
    dim: usize,
    batch: &[usize],
    k: usize,
) -> Result<GraphTopology> {
    let n = batch.len();
    if features.len() != n * dim {
        return Err(Error::domain("feature buffer does not match vertex count"));
    }
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (v, &b) in batch.iter().enumerate() {
        if members.len() <= b {
            members.resize(b + 1, Vec::new());
        }
        members[b].push(v);
    }
    let row = |v: usize| &features[v * dim..(v + 1) * dim];
    let mut pairs = Vec::with_capacity(n * k);
    for group in &members {
        let kk = k.min(group.len().saturating_sub(1));
        for &i in group {
            let mut cand: Vec<(f64, usize)> = group
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let d: f64 = row(i).iter().zip(row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, j)
                })
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            pairs.extend(cand.into_iter().take(kk).map(|(_, j)| (j, i)));
        }
    }
    GraphTopology::from_pairs(n, pairs, batch.to_vec())
}

/// Disjoint union of graphs with their per-vertex feature rows.
pub fn batch_graphs(
    parts: &[(GraphTopology, FeatureMatrix)],
) -> Result<(GraphTopology, FeatureMatrix)> {
    let first = parts
        .first()
        .ok_or_else(|| Error::domain("batch_graphs needs at least one graph"))?;
    let width = first.1.cols();
    for (g, f) in parts {
        if f.cols() != width {
            return Err(Error::domain(format!(
                "feature width {} differs from {width}",
                f.cols()
            )));
        }
        if f.rows() != g.num_vertices() {
            return Err(Error::domain(format!(
                "{} feature rows for {} vertices",
                f.rows(),
                g.num_vertices()
            )));
        }
    }
    let topo = GraphTopology::disjoint_union(&parts.iter().map(|(g, _)| g).collect::<Vec<_>>());
    let feats = FeatureMatrix::vstack(&parts.iter().map(|(_, f)| f).collect::<Vec<_>>())?;
    Ok((topo, feats))
}

/// Sparse `D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
/// Entries are stored as `(source, destination, weight)` triples and include
/// one self-loop per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub num_vertices: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.num_vertices]; self.num_vertices];
        for ((&s, &d), &w) in self.src.iter().zip(&self.dst).zip(&self.weight) {
            m[d][s] += w;
        }
        m
    }

    /// `y = Â x` for a vector `x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.num_vertices];
        for ((&s, &d), &w) in self.src.iter().zip(&self.dst).zip(&self.weight) {
            y[d] += w * x[s];
        }
        y
    }
}

pub fn normalize_adjacency(g: &GraphTopology) -> NormalizedAdjacency {
    let n = g.num_vertices();
    let deg: Vec<f64> = g.in_degree().iter().map(|&d| d as f64 + 1.0).collect();
    let mut entries: Vec<(usize, usize)> = g
        .destinations()
        .iter()
        .copied()
        .zip(g.sources().iter().copied())
        .chain((0..n).map(|v| (v, v)))
        .collect();
    entries.sort_unstable();
    let (dst, src): (Vec<usize>, Vec<usize>) = entries.into_iter().unzip();
    let weight = src
        .iter()
        .zip(&dst)
        .map(|(&s, &d)| 1.0 / (deg[s] * deg[d]).sqrt())
        .collect();
    NormalizedAdjacency {
        num_vertices: n,
        src,
        dst,
        weight,
    }
}
