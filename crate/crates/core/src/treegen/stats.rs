use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::OrganClasses;
use crate::error::{Error, Result};
use crate::geom::{LabeledCloud, Vec3};
use crate::rng;

/// Placement and size of one branch relative to its tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    /// Height of the branch base as a fraction of trunk height.
    pub insertion: f64,
    /// Horizontal direction in radians, counter-clockwise from +X.
    pub azimuth: f64,
    /// Angle above the horizontal plane in radians.
    pub elevation: f64,
    pub length: f64,
    pub base_radius: f64,
    pub order: u32,
}

/// Key statistics of one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub trunk_height: f64,
    pub trunk_base_radius: f64,
    /// Trunk centerline from base to top.
    pub trunk_skeleton: Vec<Vec3>,
    pub branches: Vec<BranchRecord>,
    /// Branch instances ignored during extraction for having too few points.
    #[serde(default)]
    pub skipped_instances: usize,
}

impl TreeStats {
    pub fn count_per_order(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for b in &self.branches {
            *m.entry(b.order).or_default() += 1;
        }
        m
    }

    pub fn records_of_order(&self, order: u32) -> Vec<BranchRecord> {
        self.branches.iter().filter(|b| b.order == order).copied().collect()
    }

    pub fn max_order(&self) -> u32 {
        self.branches.iter().map(|b| b.order).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidStats(m));
        if !(self.trunk_height > 0.0 && self.trunk_height.is_finite()) {
            return bad(format!("trunk height {} must be positive", self.trunk_height));
        }
        if !(self.trunk_base_radius > 0.0 && self.trunk_base_radius.is_finite()) {
            return bad(format!("trunk radius {} must be positive", self.trunk_base_radius));
        }
        if self.trunk_skeleton.len() < 2 {
            return bad("trunk skeleton needs at least two nodes".into());
        }
        if self.trunk_skeleton.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return bad("trunk skeleton has non-finite nodes".into());
        }
        for (i, b) in self.branches.iter().enumerate() {
            let finite = [b.insertion, b.azimuth, b.elevation, b.length, b.base_radius]
                .iter()
                .all(|v| v.is_finite());
            if !finite || !(0.0..=1.0).contains(&b.insertion) || b.base_radius <= 0.0 || b.length <= 0.0 || b.order == 0
            {
                return bad(format!("branch record {i} is out of range: {b:?}"));
            }
        }
        let counts = self.count_per_order();
        for &k in counts.keys() {
            if k > 1 && !counts.contains_key(&(k - 1)) {
                return bad(format!("order-{k} branches without order-{} parents", k - 1));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub organs: OrganClasses,
    /// Height bin for the trunk centerline (meters).
    pub bin_size: f64,
    /// Branch instances with fewer points are skipped.
    pub min_branch_points: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            organs: OrganClasses::default(),
            bin_size: 0.1,
            min_branch_points: 5,
        }
    }
}

/// Measures a labeled base tree.
///
/// The trunk centerline is the sequence of per-height-bin centroids of trunk
/// points, closed at the lowest and highest trunk point. The base radius is
/// the mean horizontal distance of lowest-bin points from their centroid.
/// Each branch instance contributes one order-1 record from its principal
/// axis: the axis end nearer the trunk is the base.
pub fn extract_stats(base: &LabeledCloud, cfg: &ExtractConfig) -> Result<TreeStats> {
    if !(cfg.bin_size > 0.0) {
        return Err(Error::InvalidArgument("bin size must be positive".into()));
    }
    let trunk: Vec<Vec3> = (0..base.len())
        .filter(|&i| base.semantic[i] == cfg.organs.trunk)
        .map(|i| base.point(i))
        .collect();
    if trunk.is_empty() {
        return Err(Error::MissingOrgan(format!(
            "no points of trunk class {}",
            cfg.organs.trunk
        )));
    }
    let z0 = trunk.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let z1 = trunk.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    let height = z1 - z0;
    if !(height > 0.0) {
        return Err(Error::MissingOrgan("trunk points have no vertical extent".into()));
    }
    let nbins = ((height / cfg.bin_size).ceil() as usize).max(1);
    let mut bins: Vec<(Vec3, usize)> = vec![(Vec3::zeros(), 0); nbins];
    let bin_of = |z: f64| (((z - z0) / cfg.bin_size) as usize).min(nbins - 1);
    for p in &trunk {
        let b = &mut bins[bin_of(p.z)];
        b.0 += p;
        b.1 += 1;
    }
    let centroids: Vec<Vec3> = bins
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|(s, n)| s / *n as f64)
        .collect();
    let first = centroids[0];
    let last = centroids[centroids.len() - 1];
    let mut skeleton = Vec::with_capacity(centroids.len() + 2);
    skeleton.push(Vec3::new(first.x, first.y, z0));
    skeleton.extend(centroids.iter().copied());
    skeleton.push(Vec3::new(last.x, last.y, z1));

    let lowest_bin = bin_of(trunk.iter().map(|p| p.z).fold(f64::INFINITY, f64::min));
    let low: Vec<&Vec3> = trunk.iter().filter(|p| bin_of(p.z) == lowest_bin).collect();
    let c = low.iter().fold(Vec3::zeros(), |acc, p| acc + **p) / low.len() as f64;
    let radius = low
        .iter()
        .map(|p| ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt())
        .sum::<f64>()
        / low.len() as f64;
    if !(radius > 0.0) {
        return Err(Error::MissingOrgan("trunk base has zero radius".into()));
    }

    let axis_at = |z: f64| -> Vec3 {
        // horizontal position of the centerline at height z
        let nodes = &skeleton;
        if z <= nodes[0].z {
            return nodes[0];
        }
        for w in nodes.windows(2) {
            if z <= w[1].z {
                let span = w[1].z - w[0].z;
                let t = if span > 0.0 { (z - w[0].z) / span } else { 0.0 };
                return w[0] + (w[1] - w[0]) * t;
            }
        }
        nodes[nodes.len() - 1]
    };

    let mut by_instance: BTreeMap<i32, Vec<Vec3>> = BTreeMap::new();
    for i in 0..base.len() {
        if base.semantic[i] == cfg.organs.branch && base.instance[i] >= 0 {
            by_instance.entry(base.instance[i]).or_default().push(base.point(i));
        }
    }
    let mut branches = Vec::new();
    let mut skipped = 0;
    for pts in by_instance.values() {
        if pts.len() < cfg.min_branch_points {
            skipped += 1;
            continue;
        }
        let n = pts.len() as f64;
        let mean = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
        let mut cov = Matrix3::zeros();
        for p in pts {
            let d = p - mean;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov / n);
        let k = eig.eigenvalues.imax();
        let axis: Vec3 = eig.eigenvectors.column(k).into_owned().normalize();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in pts {
            let t = (p - mean).dot(&axis);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        let e0 = mean + axis * lo;
        let e1 = mean + axis * hi;
        let horiz = |e: &Vec3| {
            let a = axis_at(e.z);
            ((e.x - a.x).powi(2) + (e.y - a.y).powi(2)).sqrt()
        };
        let (base_pt, tip) = if horiz(&e0) <= horiz(&e1) { (e0, e1) } else { (e1, e0) };
        let length = hi - lo;
        if !(length > 0.0) {
            skipped += 1;
            continue;
        }
        let dir = (tip - base_pt) / length;
        let radial = pts
            .iter()
            .map(|p| {
                let d = p - mean;
                (d - axis * d.dot(&axis)).norm()
            })
            .sum::<f64>()
            / n;
        branches.push(BranchRecord {
            insertion: ((base_pt.z - z0) / height).clamp(0.0, 1.0),
            azimuth: dir.y.atan2(dir.x).rem_euclid(TAU),
            elevation: dir.z.clamp(-1.0, 1.0).asin(),
            length,
            base_radius: radial.max(f64::MIN_POSITIVE),
            order: 1,
        });
    }
    branches.sort_by(|a, b| a.insertion.total_cmp(&b.insertion));
    Ok(TreeStats {
        trunk_height: height,
        trunk_base_radius: radius,
        trunk_skeleton: skeleton,
        branches,
        skipped_instances: skipped,
    })
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Shortest-arc interpolation of angles.
fn lerp_angle(a: f64, b: f64, t: f64) -> f64 {
    let d = (b - a + PI).rem_euclid(TAU) - PI;
    (a + d * t).rem_euclid(TAU)
}

fn lerp_record(a: &BranchRecord, b: &BranchRecord, t: f64) -> BranchRecord {
    BranchRecord {
        insertion: lerp(a.insertion, b.insertion, t),
        azimuth: lerp_angle(a.azimuth, b.azimuth, t),
        elevation: lerp(a.elevation, b.elevation, t),
        length: lerp(a.length, b.length, t),
        base_radius: lerp(a.base_radius, b.base_radius, t),
        order: a.order,
    }
}

fn mean_record(records: &[BranchRecord]) -> BranchRecord {
    let n = records.len() as f64;
    let (s, c) = records
        .iter()
        .fold((0.0, 0.0), |(s, c), r| (s + r.azimuth.sin(), c + r.azimuth.cos()));
    BranchRecord {
        insertion: records.iter().map(|r| r.insertion).sum::<f64>() / n,
        azimuth: if s == 0.0 && c == 0.0 {
            0.0
        } else {
            s.atan2(c).rem_euclid(TAU)
        },
        elevation: records.iter().map(|r| r.elevation).sum::<f64>() / n,
        length: records.iter().map(|r| r.length).sum::<f64>() / n,
        base_radius: records.iter().map(|r| r.base_radius).sum::<f64>() / n,
        order: records[0].order,
    }
}

/// Piecewise-linear resampling over node index, so resampling to the same
/// node count returns the nodes unchanged.
fn resample(nodes: &[Vec3], count: usize) -> Vec<Vec3> {
    let last = (nodes.len() - 1) as f64;
    (0..count)
        .map(|j| {
            let u = j as f64 * last / (count - 1) as f64;
            let i = (u.floor() as usize).min(nodes.len() - 2);
            let f = u - i as f64;
            if f == 0.0 {
                nodes[i]
            } else {
                nodes[i] + (nodes[i + 1] - nodes[i]) * f
            }
        })
        .collect()
}

/// Interpolates two trees' statistics at `t` in `[0, 1]`.
///
/// Scalars and the resampled trunk skeleton interpolate linearly. Branch
/// records are handled per order: both sides are sorted by insertion height;
/// the larger side contributes a seed-chosen subset matched rank-wise with
/// the smaller side, its other records interpolate toward the smaller side's
/// mean. The result keeps all matched records plus a seed-chosen share of the
/// unmatched ones, `round(lerp(count_a, count_b, t))` in total.
pub fn interpolate_stats(a: &TreeStats, b: &TreeStats, t: f64, seed: u64) -> Result<TreeStats> {
    a.validate()?;
    b.validate()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "interpolation weight {t} outside [0, 1]"
        )));
    }
    let n = a.trunk_skeleton.len().max(b.trunk_skeleton.len());
    let sa = resample(&a.trunk_skeleton, n);
    let sb = resample(&b.trunk_skeleton, n);
    let skeleton = sa.iter().zip(&sb).map(|(p, q)| p + (q - p) * t).collect();

    let mut orders: Vec<u32> = a
        .count_per_order()
        .keys()
        .chain(b.count_per_order().keys())
        .copied()
        .collect();
    orders.sort_unstable();
    orders.dedup();
    let mut branches = Vec::new();
    for order in orders {
        let mut rng = rng::stream(seed, "interpolate", u64::from(order));
        let mut ra = a.records_of_order(order);
        let mut rb = b.records_of_order(order);
        ra.sort_by(|x, y| x.insertion.total_cmp(&y.insertion));
        rb.sort_by(|x, y| x.insertion.total_cmp(&y.insertion));
        let target = lerp(ra.len() as f64, rb.len() as f64, t).round() as usize;
        let a_is_large = ra.len() >= rb.len();
        let (large, small) = if a_is_large { (&ra, &rb) } else { (&rb, &ra) };
        // orient so that weight 0 always means "a"
        let blend = |from_large: &BranchRecord, from_small: &BranchRecord| {
            if a_is_large {
                lerp_record(from_large, from_small, t)
            } else {
                lerp_record(from_small, from_large, t)
            }
        };
        let mut matched_idx: Vec<usize> = if small.len() == large.len() {
            (0..large.len()).collect()
        } else {
            index::sample(&mut rng, large.len(), small.len()).into_vec()
        };
        matched_idx.sort_unstable();
        let mut out: Vec<BranchRecord> = matched_idx
            .iter()
            .zip(small.iter())
            .map(|(&i, s)| blend(&large[i], s))
            .collect();
        let unmatched: Vec<usize> = (0..large.len())
            .filter(|i| matched_idx.binary_search(i).is_err())
            .collect();
        let extra = target.saturating_sub(out.len()).min(unmatched.len());
        if extra > 0 {
            let donor = (!small.is_empty()).then(|| mean_record(small));
            let mut pick: Vec<usize> = index::sample(&mut rng, unmatched.len(), extra).into_vec();
            pick.sort_unstable();
            for p in pick {
                let r = &large[unmatched[p]];
                out.push(match &donor {
                    Some(d) => blend(r, d),
                    None => *r,
                });
            }
        }
        branches.extend(out);
    }
    branches.sort_by(|x, y| x.order.cmp(&y.order).then(x.insertion.total_cmp(&y.insertion)));
    let stats = TreeStats {
        trunk_height: lerp(a.trunk_height, b.trunk_height, t),
        trunk_base_radius: lerp(a.trunk_base_radius, b.trunk_base_radius, t),
        trunk_skeleton: skeleton,
        branches,
        skipped_instances: 0,
    };
    stats.validate()?;
    Ok(stats)
}
