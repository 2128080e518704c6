//! On-disk dataset format, manifest, converters, splits and statistics.

mod convert;
pub mod ply;
mod split;
mod standard;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use convert::{convert, parse_delimited, Column, ColumnMap, InputFormat};
pub use split::make_splits;
pub use standard::{
    load_standard, read_f32s, read_labels, sample_file, write_f32s, write_labels, write_standard, COLOR_EXT,
    INSTANCE_EXT, POINTS_EXT, SEMANTIC_EXT,
};
pub use stats::{
    cloud_stats, compute_stats, ClassDistribution, DatasetStats, Distribution, InstanceStat, SampleStats, StatsReport,
};

use crate::error::{Error, Result};
use crate::geom::LabeledCloud;

/// Dataset metadata stored as `manifest.json` at the dataset root.
///
/// `samples` maps each id to a path stem relative to the root; the sample's
/// files are that stem plus the standard extensions. `groups` holds optional
/// per-sample metadata keyed by attribute (e.g. `"orchard"`), used for
/// stratified splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub classes: BTreeMap<u32, String>,
    #[serde(default)]
    pub instance_classes: Vec<i32>,
    #[serde(default)]
    pub splits: BTreeMap<String, Vec<String>>,
    pub samples: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, BTreeMap<String, String>>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl DatasetManifest {
    pub fn new(name: impl Into<String>, classes: &[&str], instance_classes: Vec<i32>) -> Self {
        Self {
            name: name.into(),
            classes: classes
                .iter()
                .enumerate()
                .map(|(i, c)| (i as u32, c.to_string()))
                .collect(),
            instance_classes,
            splits: BTreeMap::new(),
            samples: BTreeMap::new(),
            groups: BTreeMap::new(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.values().cloned().collect()
    }

    /// Registers a sample whose files live at `<root>/<stem>`.
    pub fn add_sample(&mut self, id: impl Into<String>, stem: impl Into<String>) {
        self.samples.insert(id.into(), stem.into());
    }

    pub fn validate(&self) -> Result<()> {
        for (expect, &id) in self.classes.keys().enumerate() {
            if id as usize != expect {
                return Err(Error::Schema(format!(
                    "class ids must be contiguous from 0; found {id} at position {expect}"
                )));
            }
        }
        for &c in &self.instance_classes {
            if c < 0 || !self.classes.contains_key(&(c as u32)) {
                return Err(Error::Schema(format!("instance class {c} is not a known class")));
            }
        }
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (split, ids) in &self.splits {
            for id in ids {
                if !self.samples.contains_key(id) {
                    return Err(Error::Schema(format!(
                        "split `{split}` lists `{id}`, which has no file path"
                    )));
                }
                if let Some(other) = seen.insert(id, split) {
                    return Err(Error::Schema(format!(
                        "sample `{id}` appears in splits `{other}` and `{split}`"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sample ids of a split, or every sample when `split` is `None`.
    pub fn sample_ids(&self, split: Option<&str>) -> Result<Vec<String>> {
        match split {
            None => Ok(self.samples.keys().cloned().collect()),
            Some(s) => self
                .splits
                .get(s)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("no split named `{s}`"))),
        }
    }

    /// Directory and file stem holding a sample's files.
    pub fn sample_location(&self, root: &Path, id: &str) -> Result<(PathBuf, String)> {
        let rel = self
            .samples
            .get(id)
            .ok_or_else(|| Error::Schema(format!("unknown sample `{id}`")))?;
        let full = root.join(rel);
        let stem = full
            .file_name()
            .ok_or_else(|| Error::Schema(format!("sample `{id}` has an empty path")))?
            .to_string_lossy()
            .into_owned();
        let dir = full.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((dir, stem))
    }

    pub fn load_sample(&self, root: &Path, id: &str) -> Result<LabeledCloud> {
        let (dir, stem) = self.sample_location(root, id)?;
        load_standard(&dir, &stem).map_err(|e| match e {
            Error::CorruptSample { reason, .. } => Error::corrupt(id, reason),
            other => Error::corrupt(id, other.to_string()),
        })
    }

    /// Value of metadata attribute `key` for each listed sample.
    pub fn group_values(&self, key: &str, ids: &[String]) -> Result<Vec<String>> {
        let table = self
            .groups
            .get(key)
            .ok_or_else(|| Error::Schema(format!("unknown group key `{key}`")))?;
        ids.iter()
            .map(|id| {
                table
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("sample `{id}` has no `{key}` value")))
            })
            .collect()
    }

    pub fn distinct_group_values(&self, key: &str) -> Result<BTreeSet<String>> {
        Ok(self
            .groups
            .get(key)
            .ok_or_else(|| Error::Schema(format!("unknown group key `{key}`")))?
            .values()
            .cloned()
            .collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_like() -> DatasetManifest {
        let mut m = DatasetManifest::new("cos", &["trunk", "branch"], vec![1]);
        m.add_sample("a", "clouds/a");
        m.add_sample("b", "clouds/b");
        m.splits.insert("train".into(), vec!["a".into()]);
        m.splits.insert("test".into(), vec!["b".into()]);
        m
    }

    #[test]
    fn json_layout_uses_string_class_keys() {
        let m = cos_like();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["classes"]["0"], "trunk");
        assert_eq!(v["instance_classes"], serde_json::json!([1]));
        assert_eq!(v["samples"]["a"], "clouds/a");
        let back: DatasetManifest = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn validation_rejects_bad_manifests() {
        let mut m = cos_like();
        m.classes.insert(3, "leaf".into());
        assert!(matches!(m.validate(), Err(Error::Schema(_))));

        let mut m = cos_like();
        m.instance_classes.push(2);
        assert!(matches!(m.validate(), Err(Error::Schema(_))));

        let mut m = cos_like();
        m.splits.get_mut("test").unwrap().push("ghost".into());
        assert!(matches!(m.validate(), Err(Error::Schema(_))));

        let mut m = cos_like();
        m.splits.get_mut("test").unwrap().push("a".into());
        assert!(matches!(m.validate(), Err(Error::Schema(_))));

        assert!(cos_like().validate().is_ok());
    }

    #[test]
    fn load_sample_resolves_stem() {
        let dir = tempfile::tempdir().unwrap();
        let m = cos_like();
        let cloud = LabeledCloud::new(vec![[1.0, 2.0, 3.0]], vec![1], vec![0]).unwrap();
        write_standard(&cloud, &dir.path().join("clouds"), "a").unwrap();
        assert_eq!(m.load_sample(dir.path(), "a").unwrap(), cloud);
        match m.load_sample(dir.path(), "b") {
            Err(Error::CorruptSample { sample, .. }) => assert_eq!(sample, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
