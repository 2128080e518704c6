use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Aabb, LabeledCloud, Vec3};

const LEAF_SIZE: usize = 8;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    start: u32,
    end: u32,
    left: u32,
    right: u32,
}

/// Static kd-tree over a fixed point set.
///
/// Built once, queried many times; queries take `&self` and may run from
/// several threads at once.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn build(points: Vec<Vec3>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build_node(&points, &mut order, 0, points.len(), &mut nodes);
        }
        Self { points, order, nodes }
    }

    pub fn from_cloud(cloud: &LabeledCloud) -> Self {
        Self::build(cloud.positions())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }

    /// Indices within distance `r` (inclusive) of `query`, ascending by
    /// distance with ties broken by index.
    pub fn radius_neighbors(&self, query: &Vec3, r: f64) -> Vec<usize> {
        let mut hits = self.radius_neighbors_unsorted(query, r);
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter().map(|(_, i)| i).collect()
    }

    /// `(squared distance, index)` pairs within `r`, in traversal order.
    pub fn radius_neighbors_unsorted(&self, query: &Vec3, r: f64) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        if self.nodes.is_empty() || !(r >= 0.0) {
            return out;
        }
        let r2 = r * r;
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.bounds.distance_squared(query) > r2 {
                continue;
            }
            if node.left == NO_CHILD {
                for &i in &self.order[node.start as usize..node.end as usize] {
                    let d2 = (self.points[i as usize] - query).norm_squared();
                    if d2 <= r2 {
                        out.push((d2, i as usize));
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        out
    }

    /// The `k` nearest points, ascending by distance, ties by index.
    pub fn nearest(&self, query: &Vec3, k: usize) -> Vec<usize> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if heap.len() == k {
                let worst = heap.peek().expect("full heap").d2;
                if node.bounds.distance_squared(query) > worst {
                    continue;
                }
            }
            if node.left == NO_CHILD {
                for &i in &self.order[node.start as usize..node.end as usize] {
                    let c = Candidate {
                        d2: (self.points[i as usize] - query).norm_squared(),
                        index: i as usize,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("full heap") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            } else {
                let (l, r) = (node.left as usize, node.right as usize);
                let dl = self.nodes[l].bounds.distance_squared(query);
                let dr = self.nodes[r].bounds.distance_squared(query);
                if dl <= dr {
                    stack.push(node.right);
                    stack.push(node.left);
                } else {
                    stack.push(node.left);
                    stack.push(node.right);
                }
            }
        }
        heap.into_sorted_vec().into_iter().map(|c| c.index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn build_node(points: &[Vec3], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let bounds = Aabb::from_points(order[start..end].iter().map(|&i| points[i as usize])).expect("non-empty node");
    let id = nodes.len() as u32;
    nodes.push(Node {
        bounds,
        start: start as u32,
        end: end as u32,
        left: NO_CHILD,
        right: NO_CHILD,
    });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let ext = bounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let left = build_node(points, order, start, mid, nodes);
    let right = build_node(points, order, mid, end, nodes);
    nodes[id as usize].left = left;
    nodes[id as usize].right = right;
    id
}
