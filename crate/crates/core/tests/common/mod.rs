//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use plantforge::deform::{Lattice, Material, MaterialMap};
use plantforge::geom::{LabeledCloud, LabeledMesh, UnionFind, Vec3};
use plantforge::instgroup::{GroupingParams, InstancePrediction, ModelOutput};
use plantforge::treegen::{BranchRecord, Segment, TreeModel, TreeStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Segment distance by nested ternary search over the two (convex)
/// parameters; independent of the closed-form routine in the library.
pub fn segment_distance_oracle(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> f64 {
    let at = |s: f64, t: f64| ((p1 + (q1 - p1) * s) - (p2 + (q2 - p2) * t)).norm();
    let inner = |s: f64| {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..80 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if at(s, m1) <= at(s, m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        [0.0, 1.0, 0.5 * (lo + hi)]
            .iter()
            .map(|&t| at(s, t))
            .fold(f64::INFINITY, f64::min)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if inner(m1) <= inner(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    [0.0, 1.0, 0.5 * (lo + hi)]
        .iter()
        .map(|&s| inner(s))
        .fold(f64::INFINITY, f64::min)
}

/// Radius never grows from a segment's start to its end or across a joint.
pub fn check_tapering(model: &TreeModel) -> Result<(), String> {
    for (i, s) in model.skeleton.iter().enumerate() {
        if s.end_radius > s.start_radius {
            return Err(format!("segment {i} widens: {} -> {}", s.start_radius, s.end_radius));
        }
        if let Some(p) = s.parent {
            let pr = model.skeleton[p].end_radius;
            if s.start_radius > pr {
                return Err(format!(
                    "segment {i} starts wider ({}) than parent {p} ends ({pr})",
                    s.start_radius
                ));
            }
        }
    }
    Ok(())
}

/// Exactly one root, at the lowest trunk base; every parent chain reaches it.
pub fn check_acyclic(model: &TreeModel) -> Result<(), String> {
    let sk = &model.skeleton;
    let roots: Vec<usize> = (0..sk.len()).filter(|&i| sk[i].parent.is_none()).collect();
    if roots != vec![0] {
        return Err(format!("roots {roots:?}"));
    }
    let min_z = sk.iter().map(|s| s.start.z.min(s.end.z)).fold(f64::INFINITY, f64::min);
    if sk[0].start.z > min_z + 1e-9 {
        return Err("root is not at the trunk base".into());
    }
    for i in 0..sk.len() {
        let mut cur = i;
        let mut steps = 0;
        while let Some(p) = sk[cur].parent {
            if p >= sk.len() {
                return Err(format!("segment {cur} has dangling parent {p}"));
            }
            cur = p;
            steps += 1;
            if steps > sk.len() {
                return Err(format!("cycle through segment {i}"));
            }
        }
    }
    Ok(())
}

fn first_of_instance_attached_to(sk: &[Segment], child: &Segment, other: &Segment) -> bool {
    match child.parent {
        Some(p) => sk[p].instance_id != child.instance_id && sk[p].instance_id == other.instance_id,
        None => false,
    }
}

/// Every pair of segments from different organs, with the branch-root
/// exemption, is checked with the oracle distance.
pub fn count_collisions(model: &TreeModel, tolerance: f64) -> usize {
    let sk = &model.skeleton;
    let mut hits = 0;
    for i in 0..sk.len() {
        for j in i + 1..sk.len() {
            let (a, b) = (&sk[i], &sk[j]);
            if a.instance_id == b.instance_id
                || first_of_instance_attached_to(sk, a, b)
                || first_of_instance_attached_to(sk, b, a)
            {
                continue;
            }
            let ra = a.start_radius.max(a.end_radius);
            let rb = b.start_radius.max(b.end_radius);
            // bounding spheres cannot touch: no need for the exact distance
            let ca = (a.start + a.end) * 0.5;
            let cb = (b.start + b.end) * 0.5;
            let reach = (a.end - a.start).norm() * 0.5 + (b.end - b.start).norm() * 0.5 + ra + rb;
            if (ca - cb).norm() > reach {
                continue;
            }
            if segment_distance_oracle(&a.start, &a.end, &b.start, &b.end) < ra + rb - tolerance {
                hits += 1;
            }
        }
    }
    hits
}

/// Plausible statistics for an orchard-like tree.
pub fn orchard_stats(seed: u64) -> TreeStats {
    let mut r = rng(seed);
    let height = r.random_range(2.0..3.5);
    let lean = Vec3::new(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), 0.0);
    let nodes = 6;
    let skeleton = (0..nodes)
        .map(|i| {
            let f = i as f64 / (nodes - 1) as f64;
            Vec3::new(0.0, 0.0, f * height) + lean * f * f
        })
        .collect();
    let n_branches = r.random_range(8..20);
    let branches = (0..n_branches)
        .map(|_| BranchRecord {
            insertion: r.random_range(0.25..0.95),
            azimuth: r.random_range(0.0..TAU),
            elevation: r.random_range(-0.2..0.9),
            length: r.random_range(0.4..1.4),
            base_radius: r.random_range(0.01..0.035),
            order: 1,
        })
        .collect();
    TreeStats {
        trunk_height: height,
        trunk_base_radius: r.random_range(0.05..0.09),
        trunk_skeleton: skeleton,
        branches,
        skipped_instances: 0,
    }
}

pub fn pred(class_id: i32, confidence: f64, mut point_indices: Vec<usize>) -> InstancePrediction {
    point_indices.sort();
    InstancePrediction {
        class_id,
        confidence,
        point_indices,
    }
}

/// Greedy matching by descending confidence (ties: smaller first point)
/// with set-based IoU, then the envelope integrated over recall steps of
/// 1/n_gt: AP = Σ_j (1/n_gt) · max{precision_k : recall_k ≥ j/n_gt}.
pub fn oracle_ap(gt: &LabeledCloud, preds: &[InstancePrediction], class: i32, t: f64) -> Option<f64> {
    let valid: HashSet<usize> = (0..gt.len()).filter(|&i| gt.semantic[i] != -1).collect();
    let mut masks: BTreeMap<i32, BTreeSet<usize>> = BTreeMap::new();
    for i in 0..gt.len() {
        if gt.semantic[i] == class && gt.instance[i] != -1 {
            masks.entry(gt.instance[i]).or_default().insert(i);
        }
    }
    let masks: Vec<BTreeSet<usize>> = masks.into_values().collect();
    let n_gt = masks.len();
    if n_gt == 0 {
        return None;
    }
    let mut ps: Vec<&InstancePrediction> = preds.iter().filter(|p| p.class_id == class).collect();
    ps.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.point_indices[0].cmp(&b.point_indices[0]))
            .then(a.point_indices.cmp(&b.point_indices))
    });
    let mut used = vec![false; n_gt];
    let mut tp = 0usize;
    let mut curve = Vec::new();
    for (k, p) in ps.iter().enumerate() {
        let pm: BTreeSet<usize> = p.point_indices.iter().copied().filter(|i| valid.contains(i)).collect();
        let mut best: Option<(f64, usize)> = None;
        for (g, m) in masks.iter().enumerate() {
            if used[g] {
                continue;
            }
            let inter = pm.intersection(m).count() as f64;
            let union = pm.union(m).count() as f64;
            let iou = if union > 0.0 { inter / union } else { 0.0 };
            if best.is_none_or(|(b, _)| iou > b) {
                best = Some((iou, g));
            }
        }
        if let Some((iou, g)) = best {
            if iou >= t {
                used[g] = true;
                tp += 1;
            }
        }
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut ap = 0.0;
    for j in 1..=n_gt {
        let level = j as f64 / n_gt as f64;
        let p = curve
            .iter()
            .filter(|(rec, _)| *rec >= level - 1e-12)
            .map(|(_, prec)| *prec)
            .fold(0.0, f64::max);
        ap += p / n_gt as f64;
    }
    Some(ap)
}

pub fn random_scene(r: &mut impl Rng) -> (LabeledCloud, Vec<InstancePrediction>) {
    let n = r.random_range(10..=200);
    let n_inst = r.random_range(1..=5);
    let mut sem = Vec::with_capacity(n);
    let mut inst = Vec::with_capacity(n);
    for _ in 0..n {
        if r.random_bool(0.08) {
            sem.push(-1);
            inst.push(-1);
            continue;
        }
        let k: i32 = r.random_range(0..n_inst);
        // instances 0..2 are class 1, the rest class 2; class 0 is stuff
        if r.random_bool(0.15) {
            sem.push(0);
            inst.push(-1);
        } else {
            sem.push(if k < 3 { 1 } else { 2 });
            inst.push(k);
        }
    }
    let gt = LabeledCloud::new(vec![[0.0; 3]; n], sem.clone(), inst.clone()).unwrap();
    let n_pred = r.random_range(0..8);
    let mut preds = Vec::new();
    for _ in 0..n_pred {
        // perturb a ground-truth instance mask, or draw noise
        let k: i32 = r.random_range(0..n_inst);
        let mut pts: Vec<usize> = (0..n).filter(|&i| inst[i] == k && r.random_bool(0.8)).collect();
        pts.extend((0..n).filter(|&i| inst[i] != k && r.random_bool(0.05)));
        pts.sort();
        pts.dedup();
        if pts.is_empty() {
            pts.push(r.random_range(0..n));
        }
        // coarse confidences so that ties occur
        let conf = r.random_range(0..5) as f64 / 4.0;
        preds.push(pred(
            if r.random_bool(0.8) {
                if k < 3 {
                    1
                } else {
                    2
                }
            } else {
                0
            },
            conf,
            pts,
        ));
    }
    (gt, preds)
}

pub fn params(radius: f64, gnp: &[(i32, usize)]) -> GroupingParams {
    GroupingParams::new(radius, gnp.iter().copied().collect())
}

/// O(n²) union-find over the shifted candidates of one class.
pub fn brute_force_groups(
    cloud: &LabeledCloud,
    out: &ModelOutput,
    class: usize,
    p: &GroupingParams,
) -> Vec<Vec<usize>> {
    let cand: Vec<usize> = (0..cloud.len())
        .filter(|&i| out.score(i, class) as f64 >= p.score_threshold)
        .collect();
    let shifted: Vec<Vec3> = cand
        .iter()
        .map(|&i| {
            let (a, o) = (cloud.points[i], out.offsets[i]);
            Vec3::new((a[0] + o[0]) as f64, (a[1] + o[1]) as f64, (a[2] + o[2]) as f64)
        })
        .collect();
    let mut uf = UnionFind::new(cand.len());
    for i in 0..cand.len() {
        for j in i + 1..cand.len() {
            if (shifted[i] - shifted[j]).norm() <= p.radius {
                uf.union(i, j);
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = uf
        .groups()
        .into_iter()
        .map(|g| g.into_iter().map(|k| cand[k]).collect::<Vec<_>>())
        .filter(|g| g.len() >= p.min_points[&(class as i32)])
        .collect();
    comps.sort();
    comps
}

pub fn labeled_scene(seed: u64) -> LabeledCloud {
    let mut r = rng(seed);
    let mut pts = Vec::new();
    let (mut sem, mut inst) = (Vec::new(), Vec::new());
    for k in 0..6 {
        let c = [k as f32 * 3.0, (k % 2) as f32 * 3.0, 0.0];
        for _ in 0..80 {
            pts.push([
                c[0] + r.random_range(-0.5..0.5),
                c[1] + r.random_range(-0.5..0.5),
                r.random_range(0.0..1.0),
            ]);
            sem.push(if k == 0 { 0 } else { 1 });
            inst.push(k);
        }
    }
    LabeledCloud::new(pts, sem, inst).unwrap()
}

pub const WOOD: Material = Material {
    young_modulus: 1.0e9,
    poisson_ratio: 0.3,
};

pub fn materials() -> MaterialMap {
    MaterialMap::uniform([0, 1, 2], WOOD)
}

/// One point at the centre of each listed unit voxel (voxel size 1 after the
/// cloud minimum is pinned by a point at the origin corner).
pub fn voxel_cloud(voxels: &[[i64; 3]], class: i32) -> LabeledCloud {
    let mut pts = vec![[0.0f32; 3]];
    for v in voxels {
        pts.push([v[0] as f32 + 0.5, v[1] as f32 + 0.5, v[2] as f32 + 0.5]);
    }
    let n = pts.len();
    LabeledCloud::new(pts, vec![class; n], vec![0; n]).unwrap()
}

pub fn random_small_lattice(r: &mut impl Rng, n: usize) -> Lattice {
    let mut voxels = vec![[0i64, 0, 0]];
    while voxels.len() < n {
        let base = voxels[r.random_range(0..voxels.len())];
        let mut v = base;
        v[r.random_range(0..3)] += 1;
        if !voxels.contains(&v) {
            voxels.push(v);
        }
    }
    let pts: Vec<[f32; 3]> = std::iter::once([0.0; 3])
        .chain(
            voxels
                .iter()
                .map(|v| [v[0] as f32 + 0.5, v[1] as f32 + 0.5, v[2] as f32 + 0.5]),
        )
        .collect();
    let k = pts.len();
    let classes: Vec<i32> = (0..k).map(|i| (i % 2) as i32).collect();
    let mut map = materials();
    map.classes.insert(
        1,
        Material {
            young_modulus: 3e8,
            poisson_ratio: 0.25,
        },
    );
    let cloud = LabeledCloud::new(pts, classes.clone(), classes).unwrap();
    Lattice::build(&cloud, 1.0, &map).unwrap()
}

pub fn small_tree_cloud() -> LabeledCloud {
    use plantforge::treegen::{generate_tree, TreeGenConfig};
    let mut stats = orchard_stats(50);
    stats.branches.truncate(5);
    let model = generate_tree(&stats, 3, 1, &TreeGenConfig::default()).unwrap();
    model.mesh.sample_surface(20_000, 1).unwrap()
}

/// Axis-aligned square in the plane x = `x`, as two triangles.
pub fn quad(mesh: &mut LabeledMesh, x: f64, half: f64, organ: i32, instance: i32) {
    let c = [
        Vec3::new(x, -half, -half),
        Vec3::new(x, half, -half),
        Vec3::new(x, half, half),
        Vec3::new(x, -half, half),
    ];
    mesh.add_triangle([c[0], c[1], c[2]], organ, instance);
    mesh.add_triangle([c[0], c[2], c[3]], organ, instance);
}

pub fn random_mesh(r: &mut impl Rng, n: usize) -> LabeledMesh {
    let mut mesh = LabeledMesh::default();
    for k in 0..n {
        let c = Vec3::new(
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
        );
        let mut v = || {
            c + Vec3::new(
                r.random_range(-0.6..0.6),
                r.random_range(-0.6..0.6),
                r.random_range(-0.6..0.6),
            )
        };
        let tri = [v(), v(), v()];
        mesh.add_triangle(tri, (k % 3) as i32, k as i32);
    }
    mesh
}

pub fn random_unit(r: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn plane_distance(tri: &[Vec3; 3], p: &Vec3) -> f64 {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
    (p - tri[0]).dot(&n).abs()
}

/// Direct solve of the clamped stiffness system by dense Cholesky on the
/// free degrees of freedom. Loads on clamped vertices are dropped.
pub fn dense_displacements(lattice: &Lattice, loads: &[(usize, Vec3)], fixed: &[bool]) -> Vec<Vec3> {
    let free: Vec<usize> = (0..lattice.dof()).filter(|&i| !fixed[i / 3]).collect();
    let k = lattice.stiffness_dense();
    let kff = DMatrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])]);
    let mut f = DVector::zeros(free.len());
    for (v, load) in loads {
        for a in 0..3 {
            if let Some(i) = free.iter().position(|&d| d == 3 * v + a) {
                f[i] += load[a];
            }
        }
    }
    let u = kff.cholesky().expect("clamped stiffness is SPD").solve(&f);
    let mut out = vec![Vec3::zeros(); lattice.vertex_count()];
    for (i, &d) in free.iter().enumerate() {
        out[d / 3][d % 3] = u[i];
    }
    out
}

/// Relative l2 difference of two displacement fields, against `want`.
pub fn relative_difference(got: &[Vec3], want: &[Vec3]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_squared()).sum();
    let den: f64 = want.iter().map(|b| b.norm_squared()).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// Random points, scores and offsets for grouping comparisons.
pub fn random_grouping_case(r: &mut impl Rng, max_points: usize) -> (LabeledCloud, ModelOutput, GroupingParams) {
    let n = r.random_range(1..=max_points);
    let k = 3;
    let pts: Vec<[f32; 3]> = (0..n)
        .map(|_| {
            [
                r.random_range(0.0..5.0),
                r.random_range(0.0..5.0),
                r.random_range(0.0..2.0),
            ]
        })
        .collect();
    let out = ModelOutput {
        n_classes: k,
        scores: (0..n * k).map(|_| r.random_range(0.0..1.0)).collect(),
        offsets: (0..n)
            .map(|_| [r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), 0.0])
            .collect(),
    };
    let mut p = params(r.random_range(0.05..0.4), &[(0, 1), (1, 3), (2, 10)]);
    p.score_threshold = r.random_range(0.1..0.9);
    (LabeledCloud::unlabeled(pts), out, p)
}

/// Per-class `[iou, precision, recall, f1]` and mIoU by direct counting over
/// labeled points; mIoU averages the classes present in the ground truth.
pub fn semantic_oracle(sem: &[i32], pred: &[i32], k: usize) -> (Vec<[Option<f64>; 4]>, Option<f64>) {
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let mut rows = Vec::new();
    let mut present = Vec::new();
    for c in 0..k as i32 {
        let labeled = |i: &usize| sem[*i] != -1;
        let tp = (0..sem.len())
            .filter(labeled)
            .filter(|&i| sem[i] == c && pred[i] == c)
            .count();
        let fp = (0..sem.len())
            .filter(labeled)
            .filter(|&i| sem[i] != c && pred[i] == c)
            .count();
        let fn_ = (0..sem.len()).filter(|&i| sem[i] == c && pred[i] != c).count();
        let (p, r) = (ratio(tp, tp + fp), ratio(tp, tp + fn_));
        let f1 = match (p, r) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        let iou = ratio(tp, tp + fp + fn_);
        if tp + fn_ > 0 {
            present.push(iou.unwrap());
        }
        rows.push([iou, p, r, f1]);
    }
    let miou = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    (rows, miou)
}
