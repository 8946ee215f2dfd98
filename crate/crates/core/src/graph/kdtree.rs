//! Exact k-nearest-neighbour search over 3D points.
//!
//! Results are ordered by `(squared distance, index)`, so equal distances
//! resolve to the lower point index. This matches a brute-force scan using
//! the same distance expression bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::Point3;

const LEAF_SIZE: usize = 8;

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub dist2: f64,
    pub index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        if hi[axis] == lo[axis] {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&i, &j| pts[i][axis].total_cmp(&pts[j][axis]));
        let value = pts[self.order[mid]][axis];
        self.nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    /// The `k` nearest points to `query`, skipping index `exclude`, sorted
    /// ascending by `(distance, index)`.
    pub fn nearest(&self, query: &Point3, k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, exclude, &mut heap);
        heap.into_sorted_vec()
    }

    fn search(
        &self,
        node: usize,
        q: &Point3,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let cand = Neighbor {
                        dist2: dist2(q, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                // `<=` keeps equal-distance candidates with lower indices reachable.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

/// O(N) reference scan with the same ordering rule.
pub fn brute_force_nearest(
    points: &[Point3],
    query: &Point3,
    k: usize,
    exclude: Option<usize>,
) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| Neighbor {
            dist2: dist2(query, p),
            index: i,
        })
        .collect();
    all.sort();
    all.truncate(k);
    all
}
