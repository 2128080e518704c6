//! Grouping-based instance segmentation from per-point model outputs.
//!
//! An external network supplies per-point class scores and offsets toward
//! instance centres. Points are shifted by their offsets and, class by
//! class, every point scoring at least `τ` joins a ball-query graph with
//! radius `Gr`. Connected components of that graph are the instances;
//! components smaller than the class's `Gnp` are dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_f32s, sample_file, write_f32s, DatasetStats};
use crate::geom::{LabeledCloud, SpatialIndex, UnionFind, Vec3, UNLABELED};
use crate::{rng, Error, Result};

/// Per-point class scores (row-major `n × n_classes`) and centre offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub n_classes: usize,
    pub scores: Vec<f32>,
    pub offsets: Vec<[f32; 3]>,
}

impl ModelOutput {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn score(&self, point: usize, class: usize) -> f32 {
        self.scores[point * self.n_classes + class]
    }

    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.offsets.len() != n_points || self.scores.len() != n_points * self.n_classes {
            return Err(Error::Shape(format!(
                "model output has {} offsets and {} scores for {n_points} points and {} classes",
                self.offsets.len(),
                self.scores.len(),
                self.n_classes
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) || self.offsets.iter().flatten().any(|o| !o.is_finite()) {
            return Err(Error::InvalidInput("model output contains non-finite values".into()));
        }
        Ok(())
    }

    /// Writes `<id>.scores` and `<id>.offsets` into `dir`.
    pub fn write(&self, dir: &Path, sample_id: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_f32s(&sample_file(dir, sample_id, "scores"), &self.scores)?;
        let flat: Vec<f32> = self.offsets.iter().flatten().copied().collect();
        write_f32s(&sample_file(dir, sample_id, "offsets"), &flat)
    }

    pub fn read(dir: &Path, sample_id: &str) -> Result<Self> {
        Self::read_files(
            &sample_file(dir, sample_id, "scores"),
            &sample_file(dir, sample_id, "offsets"),
        )
    }

    /// The class count is inferred from the two file sizes.
    pub fn read_files(scores: &Path, offsets: &Path) -> Result<Self> {
        let flat = read_f32s(offsets)?;
        let scores_v = read_f32s(scores)?;
        if flat.len() % 3 != 0 {
            return Err(Error::corrupt(
                offsets.display().to_string(),
                "length is not a multiple of 3 floats",
            ));
        }
        let n = flat.len() / 3;
        let n_classes = scores_v.len().checked_div(n).unwrap_or(0);
        if n_classes * n != scores_v.len() {
            return Err(Error::corrupt(
                scores.display().to_string(),
                format!("{} scores do not divide into {n} points", scores_v.len()),
            ));
        }
        Ok(Self {
            n_classes,
            scores: scores_v,
            offsets: flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupingMode {
    /// Cluster shifted coordinates only.
    #[default]
    Shifted,
    /// Union of the shifted-space and original-space clusterings.
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingParams {
    /// Ball-query radius `Gr` in metres.
    pub radius: f64,
    /// Minimum class score `τ` for a point to join that class's graph.
    #[serde(default = "default_threshold")]
    pub score_threshold: f64,
    /// `Gnp` per instance class. JSON keys are class ids.
    pub min_points: BTreeMap<i32, usize>,
    /// Classes to group. `None` groups every score column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_classes: Option<Vec<i32>>,
    #[serde(default)]
    pub mode: GroupingMode,
}

fn default_threshold() -> f64 {
    0.2
}

impl GroupingParams {
    pub fn new(radius: f64, min_points: BTreeMap<i32, usize>) -> Self {
        Self {
            radius,
            score_threshold: default_threshold(),
            min_points,
            instance_classes: None,
            mode: GroupingMode::Shifted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grouping radius must be > 0, got {}",
                self.radius
            )));
        }
        if !(self.score_threshold > 0.0 && self.score_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "score threshold must lie in (0, 1], got {}",
                self.score_threshold
            )));
        }
        if let Some((c, _)) = self.min_points.iter().find(|(_, &n)| n == 0) {
            return Err(Error::InvalidArgument(format!("min_points for class {c} must be >= 1")));
        }
        Ok(())
    }

    fn classes(&self, n_classes: usize) -> Vec<i32> {
        match &self.instance_classes {
            Some(c) => c.clone(),
            None => (0..n_classes as i32).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub class_id: i32,
    pub confidence: f64,
    /// Ascending point indices.
    pub point_indices: Vec<usize>,
}

/// Connected components of the `radius`-ball graph over `points`, each
/// sorted, ordered by smallest member.
pub fn ball_components(points: &[Vec3], radius: f64) -> Vec<Vec<usize>> {
    let index = SpatialIndex::build(points.to_vec());
    let mut uf = UnionFind::new(points.len());
    for (i, p) in points.iter().enumerate() {
        for (_, j) in index.radius_neighbors_unsorted(p, radius) {
            if j > i {
                uf.union(i, j);
            }
        }
    }
    uf.groups()
}

/// Groups points into instance predictions.
pub fn group(cloud: &LabeledCloud, output: &ModelOutput, params: &GroupingParams) -> Result<Vec<InstancePrediction>> {
    params.validate()?;
    output.validate(cloud.len())?;
    let classes = params.classes(output.n_classes);
    for &c in &classes {
        if c < 0 || c as usize >= output.n_classes {
            return Err(Error::InvalidArgument(format!(
                "instance class {c} has no score column ({} classes)",
                output.n_classes
            )));
        }
        if !params.min_points.contains_key(&c) {
            return Err(Error::MissingThreshold(c));
        }
    }
    let shifted: Vec<Vec3> = cloud
        .points
        .iter()
        .zip(&output.offsets)
        .map(|(p, o)| Vec3::new((p[0] + o[0]) as f64, (p[1] + o[1]) as f64, (p[2] + o[2]) as f64))
        .collect();
    let original = cloud.positions();
    let mut spaces = vec![&shifted];
    if params.mode == GroupingMode::Dual {
        spaces.push(&original);
    }

    let per_class: Vec<Vec<InstancePrediction>> = classes
        .par_iter()
        .map(|&c| {
            let col = c as usize;
            let candidates: Vec<usize> = (0..cloud.len())
                .filter(|&i| output.score(i, col) as f64 >= params.score_threshold)
                .collect();
            let min_points = params.min_points[&c];
            let mut clusters: BTreeSet<Vec<usize>> = BTreeSet::new();
            for space in &spaces {
                let pts: Vec<Vec3> = candidates.iter().map(|&i| space[i]).collect();
                for comp in ball_components(&pts, params.radius) {
                    if comp.len() >= min_points {
                        clusters.insert(comp.into_iter().map(|k| candidates[k]).collect());
                    }
                }
            }
            clusters
                .into_iter()
                .map(|members| {
                    let sum: f64 = members.iter().map(|&i| output.score(i, col) as f64).sum();
                    InstancePrediction {
                        class_id: c,
                        confidence: sum / members.len() as f64,
                        point_indices: members,
                    }
                })
                .collect()
        })
        .collect();
    let mut preds: Vec<InstancePrediction> = per_class.into_iter().flatten().collect();
    preds.sort_by(|a, b| {
        a.class_id
            .cmp(&b.class_id)
            .then(b.confidence.total_cmp(&a.confidence))
            .then(a.point_indices[0].cmp(&b.point_indices[0]))
    });
    Ok(preds)
}

pub fn write_predictions(preds: &[InstancePrediction], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string(preds)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<InstancePrediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rescales reference grouping parameters to a new dataset by the ratio of
/// mean instance sizes. The radius follows the mean instance extent; each
/// `Gnp` follows that class's mean instance point count.
pub fn infer_params(
    target: &DatasetStats,
    reference: &DatasetStats,
    reference_params: &GroupingParams,
) -> Result<GroupingParams> {
    let classes: Vec<i32> = match &reference_params.instance_classes {
        Some(c) => c.clone(),
        None => reference_params.min_points.keys().copied().collect(),
    };
    let extent = |s: &DatasetStats, which: &str| {
        s.mean_instance_extent(Some(&classes))
            .ok_or_else(|| Error::DegenerateStats(format!("{which} stats have no instances of classes {classes:?}")))
    };
    let ref_extent = extent(reference, "reference")?;
    let tgt_extent = extent(target, "target")?;
    if ref_extent <= 0.0 {
        return Err(Error::DegenerateStats("reference mean instance extent is zero".into()));
    }
    let mut out = reference_params.clone();
    out.radius = reference_params.radius * tgt_extent / ref_extent;
    for (&c, gnp) in out.min_points.iter_mut() {
        let r = reference
            .mean_instance_points(c)
            .filter(|&m| m > 0.0)
            .ok_or_else(|| Error::DegenerateStats(format!("reference has no instances of class {c}")))?;
        let t = target
            .mean_instance_points(c)
            .ok_or_else(|| Error::DegenerateStats(format!("target has no instances of class {c}")))?;
        *gnp = ((*gnp as f64 * t / r).round() as usize).max(1);
    }
    Ok(out)
}

/// Outputs of a perfect model: one-hot scores of the true class and offsets
/// to the true instance centroid, plus optional Gaussian noise.
pub fn oracle_output(cloud: &LabeledCloud, n_classes: usize, noise_sigma: f64, seed: u64) -> Result<ModelOutput> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    if let Some(i) = (0..cloud.len()).find(|&i| cloud.semantic[i] == UNLABELED || cloud.instance[i] == UNLABELED) {
        return Err(Error::InvalidInput(format!("point {i} is not labeled")));
    }
    if let Some(&c) = cloud.semantic.iter().find(|&&c| c < 0 || c as usize >= n_classes) {
        return Err(Error::InvalidInput(format!("class {c} is outside 0..{n_classes}")));
    }
    let mut sums: BTreeMap<i32, (Vec3, usize)> = BTreeMap::new();
    for i in 0..cloud.len() {
        let e = sums.entry(cloud.instance[i]).or_insert((Vec3::zeros(), 0));
        e.0 += cloud.point(i);
        e.1 += 1;
    }
    let centroids: BTreeMap<i32, Vec3> = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut r = rng::stream(seed, "oracle-output", 0);
    let mut scores = vec![0f32; cloud.len() * n_classes];
    let mut offsets = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        scores[i * n_classes + cloud.semantic[i] as usize] = 1.0;
        let p = cloud.points[i];
        let c = centroids[&cloud.instance[i]];
        // offsets are chosen so that p + offset reproduces the centroid in f32
        let target = [c.x as f32, c.y as f32, c.z as f32];
        let mut o = [target[0] - p[0], target[1] - p[1], target[2] - p[2]];
        if noise_sigma > 0.0 {
            for v in &mut o {
                *v += normal.sample(&mut r) as f32;
            }
        }
        offsets.push(o);
    }
    Ok(ModelOutput {
        n_classes,
        scores,
        offsets,
    })
}
