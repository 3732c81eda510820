//! Exact k-nearest-neighbor search over a point cloud snapshot.
//!
//! Queries return exactly `min(k, n)` indices sorted by ascending Euclidean
//! distance, ties broken by ascending point index, so every downstream
//! neighborhood construction is deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    dist_sq: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// kd-tree over an immutable snapshot of a cloud. Safe for concurrent
/// read-only queries.
#[derive(Debug)]
pub struct KnnIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

impl KnnIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyInput);
        }
        let points = cloud.points().to_vec();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let root = build_node(&points, &mut order, 0, points.len(), &mut nodes);
        Ok(KnnIndex {
            points,
            order,
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> Point3 {
        self.points[index]
    }

    /// Indices and distances of the `min(k, n)` nearest points to `query`,
    /// ascending by distance, ties by index.
    pub fn query(&self, query: Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let k = k.min(self.points.len());
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.index as usize, c.dist_sq.sqrt()))
            .collect();
        debug_assert_eq!(out.len(), k);
        out.shrink_to_fit();
        out
    }

    /// Index and distance of the single nearest point.
    pub fn nearest(&self, query: Point3) -> (usize, f64) {
        self.query(query, 1)[0]
    }

    /// Indices of all points within `radius` (inclusive) of `query`,
    /// ascending by index.
    pub fn query_radius(&self, query: Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_search(self.root, query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    /// Number of points within `radius` (inclusive) of `query`.
    pub fn count_within(&self, query: Point3, radius: f64) -> usize {
        let mut count = 0usize;
        self.radius_count(self.root, query, radius * radius, &mut count);
        count
    }

    fn search(&self, node: u32, query: Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start as usize..*end as usize] {
                    let cand = Candidate {
                        dist_sq: query.dist_sq(self.points[idx as usize]),
                        index: idx,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("non-empty heap") {
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
                let q = axis_coord(query, *axis);
                let (near, far) = if q <= *value {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, query, k, heap);
                let plane = q - *value;
                // Equal plane distance can still hide an index tie-break winner.
                if heap.len() < k
                    || plane * plane <= heap.peek().expect("non-empty heap").dist_sq
                {
                    self.search(far, query, k, heap);
                }
            }
        }
    }

    fn radius_search(&self, node: u32, query: Point3, radius_sq: f64, out: &mut Vec<usize>) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start as usize..*end as usize] {
                    if query.dist_sq(self.points[idx as usize]) <= radius_sq {
                        out.push(idx as usize);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let plane = axis_coord(query, *axis) - *value;
                if plane <= 0.0 || plane * plane <= radius_sq {
                    self.radius_search(*left, query, radius_sq, out);
                }
                if plane >= 0.0 || plane * plane <= radius_sq {
                    self.radius_search(*right, query, radius_sq, out);
                }
            }
        }
    }

    fn radius_count(&self, node: u32, query: Point3, radius_sq: f64, count: &mut usize) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start as usize..*end as usize] {
                    if query.dist_sq(self.points[idx as usize]) <= radius_sq {
                        *count += 1;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let plane = axis_coord(query, *axis) - *value;
                if plane <= 0.0 || plane * plane <= radius_sq {
                    self.radius_count(*left, query, radius_sq, count);
                }
                if plane >= 0.0 || plane * plane <= radius_sq {
                    self.radius_count(*right, query, radius_sq, count);
                }
            }
        }
    }
}

fn axis_coord(p: Point3, axis: u8) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn build_node(
    points: &[Point3],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: start as u32,
            end: end as u32,
        });
        return (nodes.len() - 1) as u32;
    }

    let slice = &mut order[start..end];
    let mut lo = points[slice[0] as usize];
    let mut hi = lo;
    for &idx in slice.iter() {
        lo = lo.min_components(points[idx as usize]);
        hi = hi.max_components(points[idx as usize]);
    }
    let extent = hi - lo;
    let axis: u8 = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };

    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        axis_coord(points[a as usize], axis)
            .total_cmp(&axis_coord(points[b as usize], axis))
            .then(a.cmp(&b))
    });
    let value = axis_coord(points[slice[mid] as usize], axis);

    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes.push(Node::Split {
        axis,
        value,
        left,
        right,
    });
    (nodes.len() - 1) as u32
}

/// Reference implementation: full scan, sort by (distance, index).
/// Kept public as the independent oracle for the kd-tree path.
pub fn brute_force_knn(cloud: &PointCloud, query: Point3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, query.dist(p)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k.min(cloud.len()));
    all
}
