//! Sim-to-real data protocol.
//!
//! Base trees are drawn from the real training pool into disjoint folds,
//! balanced across groups (orchards). Larger base-tree subsets pool the
//! best- or worst-ranked folds (upper and lower bound). Each subset gets a
//! synthetic corpus and training manifests for the 0-shot (synthetic only),
//! K_b-shot (synthetic pre-training, fine-tuning on the K_b real trees) and
//! vanilla (all real training trees) setups. No training happens here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_standard, DatasetManifest};
use crate::deform::{augment, AugmentConfig, MaterialMap};
use crate::geom::LabeledCloud;
use crate::treegen::{extract_stats, generate_population, ExtractConfig, TreeGenConfig, TreeModel, TreeStats};
use crate::vls::{default_tls_positions, scan, ScannerConfig};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Manifest group key whose values balance the folds.
    pub group_key: String,
    pub train_split: String,
    pub test_split: String,
    /// Base trees per fold (K_b of the smallest subsets).
    pub fold_size: usize,
    /// Number of folds; `None` uses as many as the pool allows.
    pub folds: Option<usize>,
    /// Larger subset sizes, each a multiple of `fold_size`.
    pub larger_k_b: Vec<usize>,
    /// Fold indices from best to worst. `None` keeps fold order.
    pub fold_ranking: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            group_key: "orchard".into(),
            train_split: "train".into(),
            test_split: "test".into(),
            fold_size: 6,
            folds: None,
            larger_k_b: vec![12, 18, 24],
            fold_ranking: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Fold(usize),
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subset {
    pub name: String,
    pub k_b: usize,
    pub bound: Bound,
    pub trees: Vec<String>,
    /// K_b relative to the test set size.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPlan {
    pub folds: Vec<Vec<String>>,
    pub subsets: Vec<Subset>,
    pub pool: Vec<String>,
    pub test: Vec<String>,
}

/// Fold order for a per-fold score (higher is better); ties keep fold order.
pub fn rank_folds(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn plan_protocol(manifest: &DatasetManifest, cfg: &ProtocolConfig) -> Result<ProtocolPlan> {
    let pool = manifest.sample_ids(Some(&cfg.train_split))?;
    let test = manifest.sample_ids(Some(&cfg.test_split))?;
    if test.is_empty() {
        return Err(Error::InvalidProtocol(format!(
            "test split `{}` is empty",
            cfg.test_split
        )));
    }
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, g) in pool.iter().zip(manifest.group_values(&cfg.group_key, &pool)?) {
        groups.entry(g).or_default().push(id.clone());
    }
    let n_groups = groups.len();
    if cfg.fold_size == 0 || n_groups == 0 || !cfg.fold_size.is_multiple_of(n_groups) {
        return Err(Error::InvalidProtocol(format!(
            "fold size {} cannot be split evenly across {n_groups} groups",
            cfg.fold_size
        )));
    }
    if cfg.fold_size > pool.len() {
        return Err(Error::InvalidProtocol(format!(
            "K_b = {} exceeds the {} available base trees",
            cfg.fold_size,
            pool.len()
        )));
    }
    let per_group = cfg.fold_size / n_groups;
    let capacity = groups.values().map(|m| m.len() / per_group).min().unwrap_or(0);
    let n_folds = cfg.folds.unwrap_or(capacity);
    if n_folds == 0 || n_folds > capacity {
        return Err(Error::InvalidProtocol(format!(
            "{n_folds} folds of {} need {} trees per group; the smallest group allows {capacity} folds",
            cfg.fold_size,
            n_folds * per_group
        )));
    }

    let mut folds = vec![Vec::with_capacity(cfg.fold_size); n_folds];
    for (g, mut members) in groups.into_values().enumerate() {
        members.shuffle(&mut rng::stream(cfg.seed, "protocol-folds", g as u64));
        for (f, fold) in folds.iter_mut().enumerate() {
            fold.extend_from_slice(&members[f * per_group..(f + 1) * per_group]);
        }
    }
    for fold in &mut folds {
        fold.sort();
    }

    let ranking = match &cfg.fold_ranking {
        Some(r) => {
            let mut sorted = r.clone();
            sorted.sort_unstable();
            if sorted != (0..n_folds).collect::<Vec<_>>() {
                return Err(Error::InvalidProtocol(format!(
                    "fold ranking {r:?} is not a permutation of 0..{n_folds}"
                )));
            }
            r.clone()
        }
        None => (0..n_folds).collect(),
    };

    let ratio = |k: usize| k as f64 / test.len() as f64;
    let mut subsets: Vec<Subset> = folds
        .iter()
        .enumerate()
        .map(|(f, trees)| Subset {
            name: format!("fold{f:02}"),
            k_b: cfg.fold_size,
            bound: Bound::Fold(f),
            trees: trees.clone(),
            ratio: ratio(cfg.fold_size),
        })
        .collect();
    for &k in &cfg.larger_k_b {
        if k % cfg.fold_size != 0 {
            return Err(Error::InvalidProtocol(format!(
                "K_b = {k} is not a multiple of {}",
                cfg.fold_size
            )));
        }
        let m = k / cfg.fold_size;
        if m > n_folds {
            return Err(Error::InvalidProtocol(format!(
                "K_b = {k} needs {m} folds, only {n_folds} exist"
            )));
        }
        for (bound, picks) in [(Bound::Upper, &ranking[..m]), (Bound::Lower, &ranking[n_folds - m..])] {
            let mut trees: Vec<String> = picks.iter().flat_map(|&f| folds[f].iter().cloned()).collect();
            trees.sort();
            let tag = if bound == Bound::Upper { "upper" } else { "lower" };
            subsets.push(Subset {
                name: format!("kb{k}_{tag}"),
                k_b: k,
                bound,
                trees,
                ratio: ratio(k),
            });
        }
    }
    Ok(ProtocolPlan {
        folds,
        subsets,
        pool,
        test,
    })
}

/// Scanner settings applied to every synthetic tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlsSettings {
    pub angular_resolution_deg: f64,
    pub n_positions: usize,
    pub standoff: f64,
    pub range_noise_sigma: f64,
    pub elevation_deg: [f64; 2],
    pub max_range: f64,
}

impl Default for VlsSettings {
    fn default() -> Self {
        let s = ScannerConfig::default();
        Self {
            angular_resolution_deg: s.angular_resolution_deg,
            n_positions: 4,
            standoff: 2.0,
            range_noise_sigma: s.range_noise_sigma,
            elevation_deg: s.elevation_deg,
            max_range: s.max_range,
        }
    }
}

impl VlsSettings {
    pub fn scanner(&self, model: &TreeModel, seed: u64) -> Result<ScannerConfig> {
        Ok(ScannerConfig {
            positions: default_tls_positions(model, self.n_positions, self.standoff)?,
            angular_resolution_deg: self.angular_resolution_deg,
            elevation_deg: self.elevation_deg,
            range_noise_sigma: self.range_noise_sigma,
            max_range: self.max_range,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    /// Synthetic trees per subset.
    pub count: usize,
    pub max_order: u32,
    pub treegen: TreeGenConfig,
    pub extract: ExtractConfig,
    /// Surface samples per tree when no scanner is configured.
    pub surface_points: usize,
    pub vls: Option<VlsSettings>,
    /// Extra scanned corpora of the largest upper-bound subset, one per
    /// angular resolution.
    pub vls_study: Vec<f64>,
    /// Deformation corpus settings; `n_variants` is ignored in favour of `count`.
    pub deform: Option<AugmentConfig>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            count: 150,
            max_order: 3,
            treegen: TreeGenConfig::default(),
            extract: ExtractConfig::default(),
            surface_points: 100_000,
            vls: None,
            vls_study: Vec::new(),
            deform: None,
        }
    }
}

/// Point cloud of a synthetic tree: a scan when `vls` is set, otherwise an
/// area-weighted surface sample.
pub fn tree_cloud(
    model: &TreeModel,
    vls: Option<&VlsSettings>,
    surface_points: usize,
    seed: u64,
) -> Result<LabeledCloud> {
    match vls {
        Some(v) => scan(model, &v.scanner(model, seed)?),
        None => model.mesh.sample_surface(surface_points, seed),
    }
}

/// Generates `count` trees from the bases and writes them as standard
/// samples `<prefix>_<index>` into `dir`. Returns the sample ids.
pub fn synthesize_trees(
    bases: &[TreeStats],
    cfg: &SynthesisConfig,
    vls: Option<&VlsSettings>,
    seed: u64,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<String>> {
    let trees = generate_population(bases, cfg.count, seed, cfg.max_order, &cfg.treegen)?;
    trees
        .par_iter()
        .enumerate()
        .map(|(i, model)| {
            let id = format!("{prefix}_{i:04}");
            let cloud = tree_cloud(model, vls, cfg.surface_points, rng::derive_seed(seed, &id))?;
            write_standard(&cloud, dir, &id)?;
            Ok(id)
        })
        .collect()
}

/// Deformed copies of the base clouds, spread evenly over the bases.
pub fn synthesize_deformed(
    bases: &[LabeledCloud],
    count: usize,
    materials: &MaterialMap,
    cfg: &AugmentConfig,
    seed: u64,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<String>> {
    if bases.is_empty() {
        return Err(Error::EmptyInput("no base clouds to deform".into()));
    }
    let mut ids = Vec::with_capacity(count);
    for (b, base) in bases.iter().enumerate() {
        let n = count / bases.len() + usize::from(b < count % bases.len());
        if n == 0 {
            continue;
        }
        let cfg = AugmentConfig {
            n_variants: n,
            seed: rng::derive_seed(seed, &format!("{prefix}/{b}")),
            ..cfg.clone()
        };
        for v in augment(base, materials, &cfg)? {
            let id = format!("{prefix}_{:04}", ids.len());
            write_standard(&v.cloud, dir, &id)?;
            ids.push(id);
        }
    }
    Ok(ids)
}

/// What [`write_protocol`] produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutput {
    pub plan: ProtocolPlan,
    /// Manifest files, each resolving sample paths against `out_dir`.
    pub manifests: Vec<PathBuf>,
}

fn real_manifest(base: &DatasetManifest, name: String, real_root: &Path) -> DatasetManifest {
    let mut m = DatasetManifest {
        name,
        classes: base.classes.clone(),
        instance_classes: base.instance_classes.clone(),
        splits: BTreeMap::new(),
        samples: BTreeMap::new(),
        groups: BTreeMap::new(),
    };
    for (id, stem) in &base.samples {
        m.samples
            .insert(id.clone(), real_root.join(stem).to_string_lossy().into_owned());
    }
    m
}

/// Writes `plan.json` and the per-setup manifests into `out_dir`; with
/// `synthesis`, also the synthetic corpus of every subset under
/// `out_dir/synthetic/<corpus>/`.
pub fn write_protocol(
    manifest: &DatasetManifest,
    real_root: &Path,
    cfg: &ProtocolConfig,
    synthesis: Option<(&SynthesisConfig, &MaterialMap)>,
    out_dir: &Path,
) -> Result<ProtocolOutput> {
    let plan = plan_protocol(manifest, cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let real_root = std::path::absolute(real_root).map_err(|e| Error::io(real_root, e))?;
    let mut manifests = Vec::new();
    let mut save = |m: &DatasetManifest| -> Result<()> {
        let path = out_dir.join(format!("{}.manifest.json", m.name));
        m.save(&path)?;
        manifests.push(path);
        Ok(())
    };

    let mut vanilla = real_manifest(manifest, "vanilla".into(), &real_root);
    vanilla.splits.insert("train".into(), plan.pool.clone());
    vanilla.splits.insert("test".into(), plan.test.clone());
    vanilla
        .samples
        .retain(|id, _| plan.pool.contains(id) || plan.test.contains(id));
    save(&vanilla)?;

    let largest_upper = plan
        .subsets
        .iter()
        .filter(|s| s.bound == Bound::Upper)
        .max_by_key(|s| s.k_b)
        .map(|s| s.name.clone());

    for subset in &plan.subsets {
        // corpora: name -> sample ids (relative stems under out_dir)
        let mut corpora: Vec<(String, Vec<String>)> = Vec::new();
        if let Some((syn, materials)) = synthesis {
            let seed = rng::derive_seed(cfg.seed, &format!("protocol/{}", subset.name));
            let clouds = subset
                .trees
                .par_iter()
                .map(|id| manifest.load_sample(&real_root, id))
                .collect::<Result<Vec<_>>>()?;
            let stats = clouds
                .iter()
                .map(|c| extract_stats(c, &syn.extract))
                .collect::<Result<Vec<_>>>()?;
            let mut runs: Vec<(String, Option<VlsSettings>)> = vec![(format!("{}_tg", subset.name), syn.vls.clone())];
            if largest_upper.as_deref() == Some(&subset.name) {
                for &res in &syn.vls_study {
                    let v = VlsSettings {
                        angular_resolution_deg: res,
                        ..syn.vls.clone().unwrap_or_default()
                    };
                    runs.push((
                        format!("{}_tg_vls{}", subset.name, res.to_string().replace('.', "")),
                        Some(v),
                    ));
                }
            }
            for (name, vls) in runs {
                let dir = out_dir.join("synthetic").join(&name);
                let ids = synthesize_trees(&stats, syn, vls.as_ref(), seed, &dir, &name)?;
                corpora.push((name, ids));
            }
            if let Some(aug) = &syn.deform {
                let name = format!("{}_deform", subset.name);
                let dir = out_dir.join("synthetic").join(&name);
                let ids = synthesize_deformed(&clouds, syn.count, materials, aug, seed, &dir, &name)?;
                corpora.push((name, ids));
            }
        }
        let real = |name: String| {
            let mut m = real_manifest(manifest, name, &real_root);
            m.samples
                .retain(|id, _| subset.trees.contains(id) || plan.test.contains(id));
            m
        };
        if corpora.is_empty() {
            // plan only: record the subset's real trees for fine-tuning
            let mut m = real(format!("{}_kb_shot", subset.name));
            m.splits.insert("train".into(), subset.trees.clone());
            m.splits.insert("test".into(), plan.test.clone());
            save(&m)?;
            continue;
        }
        for (name, ids) in corpora {
            let add_synthetic = |m: &mut DatasetManifest| {
                for id in &ids {
                    m.samples.insert(id.clone(), format!("synthetic/{name}/{id}"));
                }
            };
            let mut zero = real(format!("{name}_zero_shot"));
            zero.samples.retain(|id, _| plan.test.contains(id));
            add_synthetic(&mut zero);
            zero.splits.insert("train".into(), ids.clone());
            zero.splits.insert("test".into(), plan.test.clone());
            save(&zero)?;

            let mut few = real(format!("{name}_kb_shot"));
            add_synthetic(&mut few);
            few.splits.insert("pretrain".into(), ids.clone());
            few.splits.insert("train".into(), subset.trees.clone());
            few.splits.insert("test".into(), plan.test.clone());
            save(&few)?;
        }
    }

    let plan_path = out_dir.join("plan.json");
    let mut text = serde_json::to_string_pretty(&plan)?;
    text.push('\n');
    std::fs::write(&plan_path, text).map_err(|e| Error::io(&plan_path, e))?;
    Ok(ProtocolOutput { plan, manifests })
}
