use crate::geom::{Aabb, LabeledMesh, Vec3};

/// A ray hit: distance along the (unit) direction and triangle index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
}

impl Hit {
    fn better_than(&self, other: &Option<Hit>) -> bool {
        match other {
            None => true,
            Some(o) => self.t < o.t || (self.t == o.t && self.triangle < o.triangle),
        }
    }
}

/// Watertight ray/triangle test, both faces reflective.
///
/// Returns the hit distance in `(0, t_max]`.
pub fn intersect_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3], t_max: f64) -> Option<f64> {
    let kz = dir.iamax();
    let mut kx = (kz + 1) % 3;
    let mut ky = (kx + 1) % 3;
    if dir[kz] < 0.0 {
        std::mem::swap(&mut kx, &mut ky);
    }
    let sx = dir[kx] / dir[kz];
    let sy = dir[ky] / dir[kz];
    let sz = 1.0 / dir[kz];

    let a = tri[0] - origin;
    let b = tri[1] - origin;
    let c = tri[2] - origin;
    let (ax, ay) = (a[kx] - sx * a[kz], a[ky] - sy * a[kz]);
    let (bx, by) = (b[kx] - sx * b[kz], b[ky] - sy * b[kz]);
    let (cx, cy) = (c[kx] - sx * c[kz], c[ky] - sy * c[kz]);

    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let t_scaled = u * sz * a[kz] + v * sz * b[kz] + w * sz * c[kz];
    let t = t_scaled / det;
    (t > 0.0 && t <= t_max).then_some(t)
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    // leaf: triangles[start..start + count]; inner: children at `start` and `start + 1`
    start: usize,
    count: usize,
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over the triangles of a mesh.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    triangles: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn tri_bounds(tri: &[Vec3; 3]) -> Aabb {
    let mut b = Aabb::from_points(tri.iter().copied()).expect("three vertices");
    // pad so that rounding in the slab test never rejects a grazing hit
    let pad = 1e-9 * (1.0 + b.diagonal());
    b.min -= Vec3::repeat(pad);
    b.max += Vec3::repeat(pad);
    b
}

impl TriangleBvh {
    pub fn build(mesh: &LabeledMesh) -> Self {
        let triangles: Vec<[Vec3; 3]> = (0..mesh.triangle_count()).map(|f| mesh.triangle(f)).collect();
        let boxes: Vec<Aabb> = triangles.iter().map(tri_bounds).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut bvh = Self {
            order: (0..triangles.len()).collect(),
            triangles,
            nodes: Vec::new(),
        };
        if !bvh.triangles.is_empty() {
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            let n = bvh.order.len();
            bvh.split(0, 0, n, &boxes, &centroids);
        }
        bvh
    }

    fn split(&mut self, node: usize, lo: usize, hi: usize, boxes: &[Aabb], centroids: &[Vec3]) {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &t in &self.order[lo..hi] {
            bounds.merge(&boxes[t]);
            cbounds.grow(&centroids[t]);
        }
        self.nodes[node].bounds = bounds;
        if hi - lo <= LEAF_SIZE {
            self.nodes[node].start = lo;
            self.nodes[node].count = hi - lo;
            return;
        }
        let axis = cbounds.extent().imax();
        let mid = (lo + hi) / 2;
        self.order[lo..hi].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let left = self.nodes.len();
        let blank = Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        };
        self.nodes.push(blank.clone());
        self.nodes.push(blank);
        self.nodes[node].start = left;
        self.split(left, lo, mid, boxes, centroids);
        self.split(left + 1, mid, hi, boxes, centroids);
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Nearest hit within `t_max`; ties go to the lowest triangle index.
    pub fn first_hit(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let limit = best.map_or(t_max, |h| h.t);
            if slab(&node.bounds, origin, &inv, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    let limit = best.map_or(t_max, |h| h.t);
                    if let Some(d) = intersect_triangle(origin, dir, &self.triangles[t], limit) {
                        let hit = Hit { t: d, triangle: t };
                        if hit.better_than(&best) {
                            best = Some(hit);
                        }
                    }
                }
            } else {
                let (l, r) = (node.start, node.start + 1);
                let dl = slab(&self.nodes[l].bounds, origin, &inv, limit);
                let dr = slab(&self.nodes[r].bounds, origin, &inv, limit);
                // push the farther child first so the nearer one is visited first
                match (dl, dr) {
                    (Some(a), Some(b)) if a <= b => stack.extend([r, l]),
                    (Some(_), Some(_)) => stack.extend([l, r]),
                    (Some(_), None) => stack.push(l),
                    (None, Some(_)) => stack.push(r),
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Reference answer: every triangle tested.
    pub fn first_hit_exhaustive(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        let mut best = None;
        for (i, tri) in self.triangles.iter().enumerate() {
            if let Some(t) = intersect_triangle(origin, dir, tri, t_max) {
                let hit = Hit { t, triangle: i };
                if hit.better_than(&best) {
                    best = Some(hit);
                }
            }
        }
        best
    }
}

/// Entry distance of the ray into the box if it enters before `t_max`.
fn slab(b: &Aabb, origin: &Vec3, inv: &Vec3, t_max: f64) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for k in 0..3 {
        let a = (b.min[k] - origin[k]) * inv[k];
        let c = (b.max[k] - origin[k]) * inv[k];
        // NaN arises only for a ray parallel to and lying on a slab plane;
        // treat that axis as unconstrained
        let (lo, hi) = if a <= c { (a, c) } else { (c, a) };
        if !lo.is_nan() {
            t0 = t0.max(lo);
        }
        if !hi.is_nan() {
            t1 = t1.min(hi);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}
