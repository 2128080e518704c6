use std::collections::BTreeMap;

use rand::Rng;

use super::LabeledCloud;
use crate::error::{Error, Result};
use crate::rng;

/// Greedy farthest point sampling with a seed-chosen first point.
///
/// Each later pick maximizes the distance to the already selected set; ties go
/// to the lowest index.
pub fn farthest_point_sample(cloud: &LabeledCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    check_k(cloud, k)?;
    let first = rng::seeded(seed).random_range(0..cloud.len());
    farthest_point_sample_from(cloud, k, first)
}

/// Farthest point sampling starting from a fixed index.
pub fn farthest_point_sample_from(cloud: &LabeledCloud, k: usize, first: usize) -> Result<Vec<usize>> {
    check_k(cloud, k)?;
    if first >= cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "first index {first} out of range for {} points",
            cloud.len()
        )));
    }
    let pts = cloud.positions();
    // Negative marks "already selected".
    let mut min_d2 = vec![f64::INFINITY; pts.len()];
    let mut picked = Vec::with_capacity(k);
    let mut current = first;
    loop {
        picked.push(current);
        min_d2[current] = -1.0;
        if picked.len() == k {
            break;
        }
        let c = pts[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            if min_d2[i] < 0.0 {
                continue;
            }
            let d2 = (p - c).norm_squared();
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if min_d2[i] > best_d {
                best_d = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(picked)
}

fn check_k(cloud: &LabeledCloud, k: usize) -> Result<()> {
    if k == 0 || k > cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "sample count {k} must be in 1..={}",
            cloud.len()
        )));
    }
    Ok(())
}

/// Uniform sampling inside square XY blocks.
///
/// Blocks of side `block_size` tile the XY plane from the cloud minimum. Each
/// non-empty block keeps `min(points_per_block, population)` points drawn
/// without replacement. Output is ordered by block, then by source index.
pub fn blockwise_downsample(
    cloud: &LabeledCloud,
    block_size: f64,
    points_per_block: usize,
    seed: u64,
) -> Result<LabeledCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("cannot downsample an empty cloud".into()));
    }
    if !(block_size > 0.0) || points_per_block == 0 {
        return Err(Error::InvalidArgument(format!(
            "block size {block_size} and points per block {points_per_block} must be positive"
        )));
    }
    cloud.check_finite()?;
    let min = cloud.bounds().expect("non-empty").min;
    let mut blocks: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let bx = ((p.x - min.x) / block_size).floor() as i64;
        let by = ((p.y - min.y) / block_size).floor() as i64;
        blocks.entry((bx, by)).or_default().push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut keep = Vec::new();
    for members in blocks.values() {
        if members.len() <= points_per_block {
            keep.extend_from_slice(members);
        } else {
            let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, members.len(), points_per_block)
                .into_iter()
                .map(|j| members[j])
                .collect();
            chosen.sort_unstable();
            keep.extend(chosen);
        }
    }
    Ok(cloud.select(&keep))
}
