//! Standard sample layout: `<id>.points` (f32 xyz triples), `<id>.sem` and
//! `<id>.inst` (i32), optional `<id>.rgb` (u8 triples). Little-endian, no
//! header; the point count is implied by file length.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::LabeledCloud;

pub const POINTS_EXT: &str = "points";
pub const SEMANTIC_EXT: &str = "sem";
pub const INSTANCE_EXT: &str = "inst";
pub const COLOR_EXT: &str = "rgb";

/// `<dir>/<sample_id>.<ext>`.
pub fn sample_file(dir: &Path, sample_id: &str, ext: &str) -> PathBuf {
    dir.join(format!("{sample_id}.{ext}"))
}

pub fn write_standard(cloud: &LabeledCloud, dir: &Path, sample_id: &str) -> Result<()> {
    cloud.validate()?;
    let points_path = sample_file(dir, sample_id, POINTS_EXT);
    if let Some(parent) = points_path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut buf = Vec::with_capacity(cloud.len() * 12);
    for p in &cloud.points {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    write(&points_path, &buf)?;
    write_labels(&sample_file(dir, sample_id, SEMANTIC_EXT), &cloud.semantic)?;
    write_labels(&sample_file(dir, sample_id, INSTANCE_EXT), &cloud.instance)?;
    let rgb_path = sample_file(dir, sample_id, COLOR_EXT);
    match &cloud.color {
        Some(color) => write(&rgb_path, color.as_flattened())?,
        None if rgb_path.exists() => fs::remove_file(&rgb_path).map_err(|e| Error::io(&rgb_path, e))?,
        None => {}
    }
    Ok(())
}

pub fn load_standard(dir: &Path, sample_id: &str) -> Result<LabeledCloud> {
    let corrupt = |reason: String| Error::corrupt(sample_id, reason);
    let raw = read(&sample_file(dir, sample_id, POINTS_EXT))?;
    if raw.len() % 12 != 0 {
        return Err(corrupt(format!(
            "points file has {} bytes, not a multiple of 12",
            raw.len()
        )));
    }
    let n = raw.len() / 12;
    let points: Vec<[f32; 3]> = raw
        .chunks_exact(12)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().expect("4 bytes")),
                f32::from_le_bytes(c[4..8].try_into().expect("4 bytes")),
                f32::from_le_bytes(c[8..12].try_into().expect("4 bytes")),
            ]
        })
        .collect();
    let semantic = read_labels(&sample_file(dir, sample_id, SEMANTIC_EXT), n, sample_id)?;
    let instance = read_labels(&sample_file(dir, sample_id, INSTANCE_EXT), n, sample_id)?;
    let rgb_path = sample_file(dir, sample_id, COLOR_EXT);
    let color = if rgb_path.exists() {
        let raw = read(&rgb_path)?;
        if raw.len() != n * 3 {
            return Err(corrupt(format!("color file has {} bytes for {n} points", raw.len())));
        }
        Some(raw.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    } else {
        None
    };
    let cloud = LabeledCloud {
        points,
        semantic,
        instance,
        color,
    };
    cloud.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(cloud)
}

/// Little-endian i32 array file, as used for `.sem`, `.inst` and predictions.
pub fn write_labels(path: &Path, labels: &[i32]) -> Result<()> {
    let mut buf = Vec::with_capacity(labels.len() * 4);
    for l in labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    write(path, &buf)
}

/// Reads an i32 array file, checking it holds exactly `n` values.
pub fn read_labels(path: &Path, n: usize, sample_id: &str) -> Result<Vec<i32>> {
    let raw = read(path)?;
    if raw.len() != n * 4 {
        return Err(Error::corrupt(
            sample_id,
            format!("{} has {} bytes for {n} points", path.display(), raw.len()),
        ));
    }
    Ok(raw
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

/// Little-endian f32 array file.
pub fn write_f32s(path: &Path, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write(path, &buf)
}

pub fn read_f32s(path: &Path) -> Result<Vec<f32>> {
    let raw = read(path)?;
    if raw.len() % 4 != 0 {
        return Err(Error::corrupt(
            path.display().to_string(),
            "length is not a multiple of 4",
        ));
    }
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
