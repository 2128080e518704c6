//! Runs the `forge` binary and the miniature end-to-end pipeline.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plantforge::geom::Vec3;
use plantforge::treegen::{BranchRecord, TreeStats};

pub fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .output()
        .expect("forge runs")
}

/// Runs forge and panics with its stderr unless it succeeds.
pub fn forge_ok(args: &[&str]) -> Output {
    let out = forge(args);
    assert!(
        out.status.success(),
        "forge {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// A hand-made base tree: `n` order-1 branches spiralling up the trunk.
pub fn base_stats(height: f64, n: usize) -> TreeStats {
    let skeleton = (0..5).map(|i| Vec3::new(0.0, 0.0, height * i as f64 / 4.0)).collect();
    let branches = (0..n)
        .map(|k| BranchRecord {
            insertion: 0.3 + 0.6 * k as f64 / n as f64,
            azimuth: 2.4 * k as f64,
            elevation: 0.3,
            length: 0.5 + 0.05 * k as f64,
            base_radius: 0.02,
            order: 1,
        })
        .collect();
    TreeStats {
        trunk_height: height,
        trunk_base_radius: 0.07,
        trunk_skeleton: skeleton,
        branches,
        skipped_instances: 0,
    }
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

/// 2 base trees, 6 synthetic trees, a 0.3 degree scan of each, 2 deformed
/// variants per scan, oracle grouping and evaluation, all under `dir`.
/// Returns the path of the evaluation report.
pub fn mini_pipeline(dir: &Path, seed: u64) -> PathBuf {
    let seed = seed.to_string();
    let bases = dir.join("bases");
    fs::create_dir_all(&bases).unwrap();
    for (k, stats) in [base_stats(2.2, 6), base_stats(2.8, 8)].iter().enumerate() {
        fs::write(
            bases.join(format!("base_{k}.json")),
            serde_json::to_string(stats).unwrap(),
        )
        .unwrap();
    }
    let trees = dir.join("trees");
    forge_ok(&[
        "--seed",
        &seed,
        "--out",
        s(&trees),
        "gen-tree",
        "--bases",
        s(&bases),
        "--count",
        "6",
        "--max-order",
        "2",
    ]);
    let scans = dir.join("scans");
    let deformed = dir.join("deformed");
    for i in 0..6 {
        let stem = format!("tree_{i:04}");
        let model = trees.join(format!("{stem}.ply"));
        let sample = scans.join(&stem);
        forge_ok(&[
            "--seed",
            &seed,
            "--out",
            s(&sample),
            "scan",
            "--model",
            s(&model),
            "--resolution-deg",
            "0.3",
        ]);
        forge_ok(&[
            "--seed",
            &seed,
            "--out",
            s(&deformed),
            "deform",
            "--in",
            s(&sample),
            "--variants",
            "2",
            "--voxel-size",
            "0.05",
        ]);
    }
    let manifest = deformed.join("manifest.json");
    forge_ok(&[
        "--seed",
        &seed,
        "split",
        "--from-dir",
        s(&deformed),
        "--classes",
        "trunk,branch",
        "--instance-classes",
        "0,1",
        "--ratio",
        "test=1",
    ]);
    let params = dir.join("params.json");
    fs::write(&params, r#"{"radius": 0.01, "min_points": {"0": 1, "1": 1}}"#).unwrap();
    let pred = dir.join("pred");
    for i in 0..6 {
        for v in 0..2 {
            let id = format!("tree_{i:04}_d{v:02}");
            let out = pred.join(format!("{id}.pred.json"));
            forge_ok(&[
                "--seed",
                &seed,
                "--out",
                s(&out),
                "group",
                "--sample",
                s(&deformed.join(&id)),
                "--params",
                s(&params),
                "--oracle-sigma",
                "0",
                "--n-classes",
                "2",
                "--write-output",
                s(&pred),
            ]);
        }
    }
    let report = dir.join("report.json");
    forge_ok(&[
        "--seed",
        &seed,
        "--out",
        s(&report),
        "eval",
        "--manifest",
        s(&manifest),
        "--split",
        "test",
        "--pred-dir",
        s(&pred),
        "--csv",
        s(&dir.join("report.csv")),
    ]);
    report
}
