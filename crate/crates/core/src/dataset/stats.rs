use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DatasetManifest;
use crate::error::Result;
use crate::geom::{Aabb, LabeledCloud};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceStat {
    pub id: i32,
    pub class: i32,
    pub points: usize,
    /// Diagonal of the instance's axis-aligned bounding box.
    pub extent: f64,
}

/// Counts for a single sample. Points with semantic -1 are only counted in
/// `points`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub points: usize,
    pub class_points: BTreeMap<i32, usize>,
    pub class_instances: BTreeMap<i32, usize>,
    pub instances: Vec<InstanceStat>,
}

pub fn cloud_stats(cloud: &LabeledCloud) -> SampleStats {
    let mut s = SampleStats {
        points: cloud.len(),
        ..Default::default()
    };
    let mut inst: BTreeMap<i32, (i32, usize, Aabb)> = BTreeMap::new();
    for i in 0..cloud.len() {
        let class = cloud.semantic[i];
        if class < 0 {
            continue;
        }
        *s.class_points.entry(class).or_default() += 1;
        let id = cloud.instance[i];
        if id >= 0 {
            let e = inst.entry(id).or_insert((class, 0, Aabb::empty()));
            e.1 += 1;
            e.2.grow(&cloud.point(i));
        }
    }
    for (id, (class, points, bounds)) in inst {
        *s.class_instances.entry(class).or_default() += 1;
        s.instances.push(InstanceStat {
            id,
            class,
            points,
            extent: bounds.diagonal(),
        });
    }
    s
}

/// Per-sample statistics for a whole dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub samples: BTreeMap<String, SampleStats>,
}

impl DatasetStats {
    fn instances<'a>(&'a self, classes: Option<&'a [i32]>) -> impl Iterator<Item = &'a InstanceStat> + 'a {
        self.samples
            .values()
            .flat_map(|s| s.instances.iter())
            .filter(move |i| classes.is_none_or(|c| c.contains(&i.class)))
    }

    /// Mean bounding-box diagonal over all instances of the given classes.
    pub fn mean_instance_extent(&self, classes: Option<&[i32]>) -> Option<f64> {
        mean(self.instances(classes).map(|i| i.extent))
    }

    /// Mean number of points per instance of `class`.
    pub fn mean_instance_points(&self, class: i32) -> Option<f64> {
        mean(
            self.instances(None)
                .filter(|i| i.class == class)
                .map(|i| i.points as f64),
        )
    }

    pub fn mean_extent_by_class(&self) -> BTreeMap<i32, f64> {
        let mut acc: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
        for i in self.instances(None) {
            let e = acc.entry(i.class).or_default();
            e.0 += i.extent;
            e.1 += 1;
        }
        acc.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect()
    }

    /// Per-sample point counts of `class`, zero where absent.
    pub fn class_point_counts(&self, class: i32) -> Vec<usize> {
        self.samples
            .values()
            .map(|s| s.class_points.get(&class).copied().unwrap_or(0))
            .collect()
    }

    pub fn class_instance_counts(&self, class: i32) -> Vec<usize> {
        self.samples
            .values()
            .map(|s| s.class_instances.get(&class).copied().unwrap_or(0))
            .collect()
    }

    pub fn total_point_counts(&self) -> Vec<usize> {
        self.samples.values().map(|s| s.points).collect()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Loads every sample (or one split) and counts it. Samples are processed in
/// parallel; any unloadable sample aborts with its id.
pub fn compute_stats(manifest: &DatasetManifest, root: &Path, split: Option<&str>) -> Result<DatasetStats> {
    let ids = manifest.sample_ids(split)?;
    let per: Vec<(String, SampleStats)> = ids
        .par_iter()
        .map(|id| Ok((id.clone(), cloud_stats(&manifest.load_sample(root, id)?))))
        .collect::<Result<_>>()?;
    Ok(DatasetStats {
        samples: per.into_iter().collect(),
    })
}

/// Five-number summary plus mean. Quartiles interpolate linearly between
/// order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Distribution {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }

    pub fn from_counts(values: &[usize]) -> Option<Self> {
        Self::from_values(&values.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }
}

/// Distribution tables for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub class_id: i32,
    pub name: String,
    /// Points of the class per sample.
    pub points: Option<Distribution>,
    /// Instances of the class per sample.
    pub instances: Option<Distribution>,
}

/// Per-sample point and instance count distributions of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub samples: usize,
    pub total_points: Option<Distribution>,
    pub classes: Vec<ClassDistribution>,
}

impl StatsReport {
    pub fn new(stats: &DatasetStats, class_names: &BTreeMap<u32, String>) -> Self {
        let classes = class_names
            .iter()
            .map(|(&id, name)| {
                let c = id as i32;
                ClassDistribution {
                    class_id: c,
                    name: name.clone(),
                    points: Distribution::from_counts(&stats.class_point_counts(c)),
                    instances: Distribution::from_counts(&stats.class_instance_counts(c)),
                }
            })
            .collect();
        Self {
            samples: stats.samples.len(),
            total_points: Distribution::from_counts(&stats.total_point_counts()),
            classes,
        }
    }

    pub fn to_text(&self) -> String {
        let row = |label: &str, d: &Option<Distribution>| match d {
            Some(d) => format!(
                "{label:<24} {:>10.0} {:>10.1} {:>10.1} {:>10.1} {:>10.0} {:>12.1}\n",
                d.min, d.q1, d.median, d.q3, d.max, d.mean
            ),
            None => format!("{label:<24} {:>10}\n", "-"),
        };
        let mut out = format!("samples: {}\n", self.samples);
        out += &format!(
            "{:<24} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}\n",
            "", "min", "q1", "median", "q3", "max", "mean"
        );
        out += &row("points", &self.total_points);
        for c in &self.classes {
            out += &row(&format!("{} points", c.name), &c.points);
            out += &row(&format!("{} instances", c.name), &c.instances);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_standard;
    use rand::Rng;

    #[test]
    fn counting() {
        let c = LabeledCloud::new(vec![[0.0; 3]; 3], vec![0, 0, 1], vec![-1, -1, 0]).unwrap();
        let s = cloud_stats(&c);
        assert_eq!(s.class_points[&0], 2);
        assert_eq!(s.class_points[&1], 1);
        assert_eq!(s.class_instances[&1], 1);
        assert!(!s.class_instances.contains_key(&0));
    }

    #[test]
    fn extent_is_bbox_diagonal() {
        let c = LabeledCloud::new(vec![[0.0; 3], [1.0; 3], [0.5; 3]], vec![1; 3], vec![4; 3]).unwrap();
        let s = cloud_stats(&c);
        assert!((s.instances[0].extent - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distribution_quartiles() {
        let d = Distribution::from_counts(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(
            (d.min, d.q1, d.median, d.q3, d.max, d.mean),
            (1.0, 2.0, 3.0, 4.0, 5.0, 3.0)
        );
        let d = Distribution::from_counts(&[10, 20]).unwrap();
        assert_eq!(d.median, 15.0);
        assert!(Distribution::from_counts(&[]).is_none());
    }

    #[test]
    fn dataset_stats_match_independent_recount() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest::new("synthetic", &["trunk", "branch", "leaf"], vec![1, 2]);
        let mut rng = crate::rng::seeded(42);
        let mut clouds = Vec::new();
        for s in 0..10 {
            let n = rng.random_range(50..400);
            let mut c = LabeledCloud::unlabeled((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect());
            for i in 0..n {
                let inst = rng.random_range(-1..8);
                c.instance[i] = inst;
                c.semantic[i] = if inst < 0 { rng.random_range(-1..3) } else { inst % 3 };
            }
            let id = format!("s{s}");
            write_standard(&c, &dir.path().join("clouds"), &id).unwrap();
            m.add_sample(&id, format!("clouds/{id}"));
            clouds.push((id, c));
        }
        let stats = compute_stats(&m, dir.path(), None).unwrap();
        assert_eq!(stats.samples.len(), 10);
        for (id, c) in &clouds {
            let s = &stats.samples[id];
            for class in 0..3 {
                let pts = c.semantic.iter().filter(|&&x| x == class).count();
                assert_eq!(s.class_points.get(&class).copied().unwrap_or(0), pts);
                let mut ids: Vec<i32> = (0..c.len())
                    .filter(|&i| c.semantic[i] == class && c.instance[i] >= 0)
                    .map(|i| c.instance[i])
                    .collect();
                ids.sort();
                ids.dedup();
                assert_eq!(s.class_instances.get(&class).copied().unwrap_or(0), ids.len());
                for id in ids {
                    let members: Vec<usize> = (0..c.len()).filter(|&i| c.instance[i] == id).collect();
                    let mut lo = [f64::INFINITY; 3];
                    let mut hi = [f64::NEG_INFINITY; 3];
                    for &i in &members {
                        for a in 0..3 {
                            lo[a] = lo[a].min(c.points[i][a] as f64);
                            hi[a] = hi[a].max(c.points[i][a] as f64);
                        }
                    }
                    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt();
                    let got = s.instances.iter().find(|x| x.id == id).unwrap();
                    assert_eq!(got.points, members.len());
                    assert!((got.extent - diag).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn missing_sample_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest::new("x", &["a"], vec![]);
        m.add_sample("gone", "gone");
        match compute_stats(&m, dir.path(), None) {
            Err(crate::Error::CorruptSample { sample, .. }) => assert_eq!(sample, "gone"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
