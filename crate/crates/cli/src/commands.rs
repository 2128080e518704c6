use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use plantforge::dataset::{
    compute_stats, convert, load_standard, make_splits, read_labels, sample_file, write_standard, Column, ColumnMap,
    DatasetManifest, InputFormat, StatsReport, MANIFEST_FILE, POINTS_EXT,
};
use plantforge::deform::{augment, AugmentConfig, MaterialMap};
use plantforge::instgroup::{group, oracle_output, read_predictions, write_predictions, GroupingParams, ModelOutput};
use plantforge::metrics::{aggregate, instance_eval, semantic_eval, EvalReport};
use plantforge::protocol::{write_protocol, ProtocolConfig, SynthesisConfig, VlsSettings};
use plantforge::treegen::{extract_stats, generate_population, ExtractConfig, TreeGenConfig, TreeModel, TreeStats};
use plantforge::vls::scan;
use plantforge::{rng, Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::log;
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Convert(a) => convert_cmd(cli, a),
        Command::Split(a) => split_cmd(cli, a),
        Command::Stats(a) => stats_cmd(cli, a),
        Command::GenTree(a) => gen_tree_cmd(cli, a),
        Command::Scan(a) => scan_cmd(cli, a),
        Command::Deform(a) => deform_cmd(cli, a),
        Command::Group(a) => group_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Protocol(a) => protocol_cmd(cli, a),
    }
}

fn required_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--out is required for this command".into()))
}

/// Splits `<dir>/<id>` into the sample directory and id.
fn sample_ref(path: &Path) -> Result<(PathBuf, String)> {
    let id = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` does not name a sample", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((dir, id))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn manifest_root(manifest: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) => r.to_path_buf(),
        None => manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}

fn parse_key_value(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=fraction, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad fraction in `{s}`: {e}"))?;
    Ok((k.to_string(), v))
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// ascii-xyz, csv or ply.
    #[arg(long, default_value = "ascii-xyz")]
    pub format: String,
    #[arg(long, default_value = "0")]
    pub x: String,
    #[arg(long, default_value = "1")]
    pub y: String,
    #[arg(long, default_value = "2")]
    pub z: String,
    #[arg(long)]
    pub semantic: Option<String>,
    #[arg(long)]
    pub instance: Option<String>,
    /// Sample id; defaults to the input file stem.
    #[arg(long)]
    pub id: Option<String>,
    /// Existing manifest to register the converted sample in.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn convert_cmd(cli: &Cli, a: &ConvertArgs) -> Result<()> {
    let out = required_out(cli)?;
    let format: InputFormat = a.format.parse()?;
    let col = |s: &str| s.parse::<Column>();
    let columns = ColumnMap {
        x: col(&a.x)?,
        y: col(&a.y)?,
        z: col(&a.z)?,
        semantic: a.semantic.as_deref().map(col).transpose()?,
        instance: a.instance.as_deref().map(col).transpose()?,
        color: None,
    };
    let cloud = convert(&a.input, format, &columns)?;
    let id = match &a.id {
        Some(id) => id.clone(),
        None => a
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::InvalidArgument("cannot derive a sample id from the input".into()))?,
    };
    write_standard(&cloud, out, &id)?;
    if let Some(mpath) = &a.manifest {
        let mut m = DatasetManifest::load(mpath)?;
        let root = manifest_root(mpath, None);
        let stem = std::path::absolute(out.join(&id)).map_err(|e| Error::io(out, e))?;
        let rel = std::path::absolute(&root)
            .ok()
            .and_then(|r| stem.strip_prefix(r).ok().map(Path::to_path_buf))
            .unwrap_or(stem);
        m.add_sample(&id, rel.to_string_lossy());
        m.save(mpath)?;
    }
    log::info("convert", "wrote sample", json!({ "id": id, "points": cloud.len() }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Existing manifest to split.
    #[arg(long, required_unless_present = "from_dir")]
    pub manifest: Option<PathBuf>,
    /// Build a fresh manifest from every standard sample under this directory.
    #[arg(long, conflicts_with = "manifest")]
    pub from_dir: Option<PathBuf>,
    /// Class names in id order, for `--from-dir`.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    /// Instance class ids, for `--from-dir`.
    #[arg(long, value_delimiter = ',')]
    pub instance_classes: Vec<i32>,
    /// Split fraction, e.g. `train=0.8`. Repeatable.
    #[arg(long, value_parser = parse_key_value)]
    pub ratio: Vec<(String, f64)>,
    /// Manifest group key to stratify by.
    #[arg(long)]
    pub stratify_by: Option<String>,
}

fn collect_samples(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_samples(root, &p, out)?;
        } else if p.extension().is_some_and(|e| e == POINTS_EXT) {
            let rel = p.strip_prefix(root).expect("under root").with_extension("");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

fn split_cmd(cli: &Cli, a: &SplitArgs) -> Result<()> {
    let (manifest, default_out) = match (&a.manifest, &a.from_dir) {
        (Some(p), _) => (DatasetManifest::load(p)?, p.clone()),
        (None, Some(dir)) => {
            if a.classes.is_empty() {
                return Err(Error::InvalidArgument("--from-dir needs --classes".into()));
            }
            let names: Vec<&str> = a.classes.iter().map(String::as_str).collect();
            let name = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into());
            let mut m = DatasetManifest::new(name, &names, a.instance_classes.clone());
            let mut ids = Vec::new();
            collect_samples(dir, dir, &mut ids)?;
            for id in ids {
                m.add_sample(id.clone(), id);
            }
            (m, dir.join(MANIFEST_FILE))
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let ratios: BTreeMap<String, f64> = a.ratio.iter().cloned().collect();
    let out_manifest = if ratios.is_empty() {
        manifest
    } else {
        make_splits(
            &manifest,
            &ratios,
            a.stratify_by.as_deref(),
            rng::derive_seed(cli.seed, "split"),
        )?
    };
    let path = cli.out.clone().unwrap_or(default_out);
    out_manifest.save(&path)?;
    let sizes: BTreeMap<&str, usize> = out_manifest.splits.iter().map(|(k, v)| (k.as_str(), v.len())).collect();
    log::info("split", "wrote manifest", json!({ "path": path, "splits": sizes }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: Option<String>,
    /// Dataset root; defaults to the manifest's directory.
    #[arg(long)]
    pub root: Option<PathBuf>,
}

fn stats_cmd(cli: &Cli, a: &StatsArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let root = manifest_root(&a.manifest, a.root.as_deref());
    let stats = compute_stats(&manifest, &root, a.split.as_deref())?;
    let report = StatsReport::new(&stats, &manifest.classes);
    print!("{}", report.to_text());
    if let Some(out) = &cli.out {
        write_json(&report, out)?;
    }
    log::info("stats", "computed statistics", json!({ "samples": report.samples }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct GenTreeArgs {
    /// Directory of base trees: tree statistics as `*.json`, or labeled
    /// standard samples to measure.
    #[arg(long, required_unless_present = "manifest")]
    pub bases: Option<PathBuf>,
    /// Manifest whose samples (optionally one split) are the base trees.
    #[arg(long, conflicts_with = "bases")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long, default_value_t = 150)]
    pub count: usize,
    #[arg(long, default_value_t = 3)]
    pub max_order: u32,
    /// Also write an area-weighted surface sample of each tree with this
    /// many points.
    #[arg(long)]
    pub surface_points: Option<usize>,
    /// Generation parameters as JSON.
    #[arg(long)]
    pub treegen: Option<PathBuf>,
}

fn load_bases(a: &GenTreeArgs, extract: &ExtractConfig) -> Result<Vec<TreeStats>> {
    if let Some(mpath) = &a.manifest {
        let m = DatasetManifest::load(mpath)?;
        let root = manifest_root(mpath, None);
        return m
            .sample_ids(a.split.as_deref())?
            .par_iter()
            .map(|id| extract_stats(&m.load_sample(&root, id)?, extract))
            .collect();
    }
    let dir = a.bases.as_deref().expect("clap requires bases or manifest");
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let json: Vec<&PathBuf> = entries
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    if !json.is_empty() {
        return json
            .into_iter()
            .map(|p| {
                let s: TreeStats = read_json(p)?;
                s.validate()?;
                Ok(s)
            })
            .collect();
    }
    let ids: Vec<String> = entries
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == POINTS_EXT))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    if ids.is_empty() {
        return Err(Error::EmptyInput(format!("no base trees in {}", dir.display())));
    }
    ids.par_iter()
        .map(|id| extract_stats(&load_standard(dir, id)?, extract))
        .collect()
}

fn gen_tree_cmd(cli: &Cli, a: &GenTreeArgs) -> Result<()> {
    let out = required_out(cli)?;
    let cfg: TreeGenConfig = match &a.treegen {
        Some(p) => read_json(p)?,
        None => TreeGenConfig::default(),
    };
    let extract = ExtractConfig {
        organs: cfg.organs,
        ..ExtractConfig::default()
    };
    let bases = load_bases(a, &extract)?;
    let seed = rng::derive_seed(cli.seed, "gen-tree");
    let trees = generate_population(&bases, a.count, seed, a.max_order, &cfg)?;
    trees.par_iter().enumerate().try_for_each(|(i, t)| {
        let stem = format!("tree_{i:04}");
        t.write(out, &stem)?;
        if let Some(n) = a.surface_points {
            write_standard(&t.mesh.sample_surface(n, rng::derive_seed(seed, &stem))?, out, &stem)?;
        }
        Ok::<_, Error>(())
    })?;
    log::info(
        "gen-tree",
        "generated trees",
        json!({ "bases": bases.len(), "count": trees.len() }),
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Tree mesh PLY (a sibling `.skeleton.json` places the scanners at
    /// trunk mid-height).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub resolution_deg: f64,
    #[arg(long, default_value_t = 4)]
    pub positions: usize,
    #[arg(long, default_value_t = 2.0)]
    pub standoff: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 100.0)]
    pub max_range: f64,
}

fn scan_cmd(cli: &Cli, a: &ScanArgs) -> Result<()> {
    let (dir, id) = sample_ref(required_out(cli)?)?;
    let model = TreeModel::read(&a.model)?;
    let settings = VlsSettings {
        angular_resolution_deg: a.resolution_deg,
        n_positions: a.positions,
        standoff: a.standoff,
        range_noise_sigma: a.noise_sigma,
        max_range: a.max_range,
        ..VlsSettings::default()
    };
    let cfg = settings.scanner(&model, rng::derive_seed(cli.seed, "scan"))?;
    let cloud = scan(&model, &cfg)?;
    write_standard(&cloud, &dir, &id)?;
    log::info("scan", "scanned model", json!({ "id": id, "points": cloud.len() }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    /// Input sample as `<dir>/<id>`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub variants: usize,
    #[arg(long, default_value_t = 0.001)]
    pub voxel_size: f64,
    #[arg(long, default_value_t = 5.0)]
    pub force_bound: f64,
    #[arg(long, default_value_t = 4)]
    pub forces_per_variant: usize,
    /// Class id to {E, nu} map; defaults to wood, or leaf material for
    /// classes named after leaves, using `--classes`.
    #[arg(long)]
    pub materials: Option<PathBuf>,
    /// Class names in id order for the default materials.
    #[arg(long, value_delimiter = ',', default_value = "trunk,branch")]
    pub classes: Vec<String>,
}

fn deform_cmd(cli: &Cli, a: &DeformArgs) -> Result<()> {
    let out = required_out(cli)?;
    let (dir, id) = sample_ref(&a.input)?;
    let cloud = load_standard(&dir, &id)?;
    let materials = match &a.materials {
        Some(p) => MaterialMap::load(p)?,
        None => MaterialMap::plant_defaults(a.classes.iter().enumerate().map(|(i, n)| (i as i32, n.as_str()))),
    };
    let cfg = AugmentConfig {
        n_variants: a.variants,
        voxel_size: a.voxel_size,
        force_bound: a.force_bound,
        forces_per_variant: a.forces_per_variant,
        seed: rng::derive_seed(cli.seed, &format!("deform/{id}")),
        ..AugmentConfig::default()
    };
    let variants = augment(&cloud, &materials, &cfg)?;
    for (v, var) in variants.iter().enumerate() {
        write_standard(&var.cloud, out, &format!("{id}_d{v:02}"))?;
    }
    let frozen = variants.first().map_or(0, |v| v.field.frozen_components);
    if frozen > 0 {
        log::warn(
            "deform",
            "lattice components without ground contact stay rigid",
            json!({ "id": id, "components": frozen }),
        );
    }
    let iterations: Vec<usize> = variants.iter().map(|v| v.field.iterations).collect();
    log::info(
        "deform",
        "wrote variants",
        json!({ "id": id, "variants": variants.len(), "iterations": iterations }),
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    /// Sample as `<dir>/<id>`.
    #[arg(long)]
    pub sample: PathBuf,
    /// Score matrix file; defaults to `<dir>/<id>.scores`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub offsets: Option<PathBuf>,
    #[arg(long)]
    pub params: PathBuf,
    /// Use a perfect model built from the sample's labels, with this much
    /// offset noise, instead of reading model outputs.
    #[arg(long, conflicts_with_all = ["scores", "offsets"])]
    pub oracle_sigma: Option<f64>,
    /// Class count for `--oracle-sigma`.
    #[arg(long)]
    pub n_classes: Option<usize>,
    /// Also write the model outputs used as `<dir>/<id>.scores/.offsets`.
    #[arg(long)]
    pub write_output: Option<PathBuf>,
}

fn group_cmd(cli: &Cli, a: &GroupArgs) -> Result<()> {
    let out = required_out(cli)?;
    let (dir, id) = sample_ref(&a.sample)?;
    let cloud = load_standard(&dir, &id)?;
    let params = GroupingParams::load(&a.params)?;
    let output = match a.oracle_sigma {
        Some(sigma) => {
            let n = a
                .n_classes
                .ok_or_else(|| Error::InvalidArgument("--oracle-sigma needs --n-classes".into()))?;
            oracle_output(&cloud, n, sigma, rng::derive_seed(cli.seed, &format!("oracle/{id}")))?
        }
        None => {
            let scores = a.scores.clone().unwrap_or_else(|| sample_file(&dir, &id, "scores"));
            let offsets = a.offsets.clone().unwrap_or_else(|| sample_file(&dir, &id, "offsets"));
            ModelOutput::read_files(&scores, &offsets)?
        }
    };
    if let Some(d) = &a.write_output {
        output.write(d, &id)?;
    }
    let preds = group(&cloud, &output, &params)?;
    write_predictions(&preds, out)?;
    log::info(
        "group",
        "wrote instances",
        json!({ "id": id, "instances": preds.len() }),
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Holds `<id>.sem` (or `<id>.scores`) and optionally `<id>.pred.json`.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Also write per-class rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn predicted_semantic(pred_dir: &Path, id: &str, n: usize, n_classes: usize) -> Result<Vec<i32>> {
    let sem = sample_file(pred_dir, id, "sem");
    if sem.exists() {
        return read_labels(&sem, n, id);
    }
    let scores = sample_file(pred_dir, id, "scores");
    if !scores.exists() {
        return Err(Error::CorruptSample {
            sample: id.into(),
            reason: format!("no semantic prediction in {}", pred_dir.display()),
        });
    }
    let out = ModelOutput::read(pred_dir, id)?;
    out.validate(n)?;
    if out.n_classes != n_classes {
        return Err(Error::Shape(format!(
            "{id}: {} score columns for {n_classes} classes",
            out.n_classes
        )));
    }
    Ok((0..n)
        .map(|i| {
            // first maximum wins
            (0..n_classes).fold(0, |best, c| if out.score(i, c) > out.score(i, best) { c } else { best }) as i32
        })
        .collect())
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let out = required_out(cli)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let root = manifest_root(&a.manifest, a.root.as_deref());
    let ids = manifest.sample_ids(Some(&a.split))?;
    if ids.is_empty() {
        return Err(Error::EmptyInput(format!("split `{}` has no samples", a.split)));
    }
    let names = manifest.class_names();
    let start = Instant::now();
    let mut reports = ids
        .par_iter()
        .map(|id| {
            let gt = manifest.load_sample(&root, id)?;
            let pred = predicted_semantic(&a.pred_dir, id, gt.len(), names.len())?;
            let sem = semantic_eval(&gt, &pred, names.len())?;
            let inst_path = a.pred_dir.join(format!("{id}.pred.json"));
            let inst = if inst_path.exists() && !manifest.instance_classes.is_empty() {
                Some(instance_eval(
                    &gt,
                    &read_predictions(&inst_path)?,
                    &manifest.instance_classes,
                )?)
            } else {
                None
            };
            Ok(EvalReport::from_metrics(&names, &sem, inst.as_ref(), 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    // wall clock covers the whole run, so it is shared out evenly
    let per_sample = start.elapsed().as_secs_f64() / ids.len() as f64;
    for r in &mut reports {
        r.elapsed_seconds = per_sample;
    }
    let report = aggregate(&reports)?;
    write_json(&report, out)?;
    if let Some(csv) = &a.csv {
        fs::write(csv, report.to_csv()).map_err(|e| Error::io(csv, e))?;
    }
    log::info(
        "eval",
        "evaluated split",
        json!({ "samples": report.samples, "miou": report.miou, "ap": report.ap, "throughput": report.throughput }),
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Real dataset manifest with train/test splits and orchard groups.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long, default_value = "orchard")]
    pub group_key: String,
    #[arg(long, default_value_t = 6)]
    pub fold_size: usize,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "12,18,24")]
    pub larger_kb: Vec<usize>,
    /// JSON array with one validation score per fold, used to rank folds.
    #[arg(long)]
    pub fold_scores: Option<PathBuf>,
    /// Generate the synthetic corpus of every subset.
    #[arg(long)]
    pub synthesize: bool,
    #[arg(long, default_value_t = 150)]
    pub count: usize,
    #[arg(long, default_value_t = 3)]
    pub max_order: u32,
    #[arg(long, default_value_t = 100_000)]
    pub surface_points: usize,
    /// Scan synthetic trees at this resolution instead of surface sampling.
    #[arg(long)]
    pub vls_resolution: Option<f64>,
    /// Extra resolutions for the scanning study on the largest subset.
    #[arg(long, value_delimiter = ',')]
    pub vls_study: Vec<f64>,
    /// Also build deformed corpora of the real subset trees.
    #[arg(long)]
    pub deform: bool,
    #[arg(long, default_value_t = 0.001)]
    pub voxel_size: f64,
    #[arg(long)]
    pub materials: Option<PathBuf>,
}

fn protocol_cmd(cli: &Cli, a: &ProtocolArgs) -> Result<()> {
    let out = required_out(cli)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let root = manifest_root(&a.manifest, a.root.as_deref());
    let fold_ranking = match &a.fold_scores {
        Some(p) => Some(plantforge::protocol::rank_folds(&read_json::<Vec<f64>>(p)?)),
        None => None,
    };
    let cfg = ProtocolConfig {
        group_key: a.group_key.clone(),
        fold_size: a.fold_size,
        folds: a.folds,
        larger_k_b: a.larger_kb.clone(),
        fold_ranking,
        seed: rng::derive_seed(cli.seed, "protocol"),
        ..ProtocolConfig::default()
    };
    let syn = SynthesisConfig {
        count: a.count,
        max_order: a.max_order,
        surface_points: a.surface_points,
        vls: a.vls_resolution.map(|r| VlsSettings {
            angular_resolution_deg: r,
            ..VlsSettings::default()
        }),
        vls_study: a.vls_study.clone(),
        deform: a.deform.then(|| AugmentConfig {
            voxel_size: a.voxel_size,
            ..AugmentConfig::default()
        }),
        ..SynthesisConfig::default()
    };
    let materials = match &a.materials {
        Some(p) => MaterialMap::load(p)?,
        None => MaterialMap::plant_defaults(manifest.classes.iter().map(|(&id, n)| (id as i32, n.as_str()))),
    };
    let output = write_protocol(&manifest, &root, &cfg, a.synthesize.then_some((&syn, &materials)), out)?;
    let ratios: Vec<(String, f64)> = output.plan.subsets.iter().map(|s| (s.name.clone(), s.ratio)).collect();
    log::info(
        "protocol",
        "wrote protocol",
        json!({ "folds": output.plan.folds.len(), "manifests": output.manifests.len(), "ratios": ratios }),
    );
    Ok(())
}
