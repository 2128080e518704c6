//! Virtual terrestrial laser scanning of labeled meshes.
//!
//! Each scanner sweeps a regular azimuth/elevation grid. A ray returns the
//! nearest surface within range, displaced along the ray by Gaussian range
//! noise, and carries the hit triangle's organ and instance labels.

mod bvh;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, LabeledCloud, LabeledMesh, Vec3};
use crate::treegen::TreeModel;
use crate::{rng, Error, Result};

pub use bvh::{intersect_triangle, Hit, TriangleBvh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScannerConfig {
    pub positions: Vec<Vec3>,
    /// Degrees between neighbouring rays on both axes.
    pub angular_resolution_deg: f64,
    /// Half-open elevation sweep `[lo, hi)` in degrees.
    pub elevation_deg: [f64; 2],
    pub range_noise_sigma: f64,
    pub max_range: f64,
    pub seed: u64,
}

impl Default for ScannerConfig {
    fn default() -> Self {
        Self {
            positions: Vec::new(),
            angular_resolution_deg: 0.3,
            elevation_deg: [-60.0, 90.0],
            range_noise_sigma: 0.0,
            max_range: 100.0,
            seed: 0,
        }
    }
}

impl ScannerConfig {
    pub fn validate(&self) -> Result<()> {
        let res = self.angular_resolution_deg;
        if !(res.is_finite() && res > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "angular resolution must be > 0, got {res}"
            )));
        }
        if !(self.range_noise_sigma.is_finite() && self.range_noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "range noise sigma must be >= 0, got {}",
                self.range_noise_sigma
            )));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "max range must be > 0, got {}",
                self.max_range
            )));
        }
        let [lo, hi] = self.elevation_deg;
        if !(lo >= -90.0 && hi <= 90.0 && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "elevation range [{lo}, {hi}) is not within [-90, 90]"
            )));
        }
        if self.positions.is_empty() {
            return Err(Error::InvalidArgument("no scanner positions".into()));
        }
        if self.positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidGeometry("scanner position is not finite".into()));
        }
        let (n_az, n_el) = self.grid_dims();
        if n_az == 0 || n_el == 0 {
            return Err(Error::InvalidArgument(format!(
                "angular resolution {res} leaves an empty ray grid"
            )));
        }
        Ok(())
    }

    /// Ray-grid steps along azimuth and elevation for one scanner.
    pub fn grid_dims(&self) -> (usize, usize) {
        let res = self.angular_resolution_deg;
        let [lo, hi] = self.elevation_deg;
        ((360.0 / res).round() as usize, ((hi - lo) / res).round() as usize)
    }

    /// Unit direction of grid ray `(i, j)`.
    pub fn direction(&self, i: usize, j: usize) -> Vec3 {
        let res = self.angular_resolution_deg;
        let az = (i as f64 * res).to_radians();
        let el = (self.elevation_deg[0] + j as f64 * res).to_radians();
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// Scans the mesh of a generated tree.
pub fn scan(model: &TreeModel, cfg: &ScannerConfig) -> Result<LabeledCloud> {
    scan_mesh(&model.mesh, cfg)
}

pub fn scan_mesh(mesh: &LabeledMesh, cfg: &ScannerConfig) -> Result<LabeledCloud> {
    if mesh.is_empty() {
        return Err(Error::EmptyInput("mesh has no triangles".into()));
    }
    mesh.validate()?;
    cfg.validate()?;
    let bvh = TriangleBvh::build(mesh);
    let bounds = mesh.bounds().expect("non-empty mesh");
    let (n_az, n_el) = cfg.grid_dims();
    let noise = Normal::new(0.0, cfg.range_noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut out = LabeledCloud::default();
    for (p, origin) in cfg.positions.iter().enumerate() {
        let (columns, rows) = visible_window(cfg, origin, &bounds);
        let hits: Vec<Vec<([f32; 3], i32, i32)>> = columns
            .par_iter()
            .map(|&i| {
                let mut col = Vec::new();
                for j in rows.clone() {
                    let dir = cfg.direction(i, j);
                    let Some(hit) = bvh.first_hit(origin, &dir, cfg.max_range) else {
                        continue;
                    };
                    let mut range = hit.t;
                    if cfg.range_noise_sigma > 0.0 {
                        let ray = (i * n_el + j) as u64;
                        let mut r = rng::stream(cfg.seed, "scan", ((p as u64) << 40) | ray);
                        range += noise.sample(&mut r);
                    }
                    let q = origin + dir * range;
                    col.push((
                        [q.x as f32, q.y as f32, q.z as f32],
                        mesh.organ[hit.triangle],
                        mesh.instance[hit.triangle],
                    ));
                }
                col
            })
            .collect();
        for (pt, sem, inst) in hits.into_iter().flatten() {
            out.points.push(pt);
            out.semantic.push(sem);
            out.instance.push(inst);
        }
    }
    debug_assert!(out.points.len() <= cfg.positions.len() * n_az * n_el);
    Ok(out)
}

/// Azimuth columns (ascending) and elevation rows whose rays can reach the box.
///
/// The window is conservative by one step on every side; rays outside it
/// cannot hit anything inside `bounds`.
fn visible_window(cfg: &ScannerConfig, origin: &Vec3, bounds: &Aabb) -> (Vec<usize>, std::ops::Range<usize>) {
    let (n_az, n_el) = cfg.grid_dims();
    let res = cfg.angular_resolution_deg;
    let rel_min = bounds.min - origin;
    let rel_max = bounds.max - origin;

    // horizontal distance to the nearest and farthest point of the footprint
    let near_x = 0f64.max(rel_min.x).max(-rel_max.x);
    let near_y = 0f64.max(rel_min.y).max(-rel_max.y);
    let rho_min = near_x.hypot(near_y);
    let far_x = rel_min.x.abs().max(rel_max.x.abs());
    let far_y = rel_min.y.abs().max(rel_max.y.abs());
    let rho_max = far_x.hypot(far_y);
    let el = |z: f64, rho: f64| z.atan2(rho).to_degrees();
    let el_hi = if rel_max.z >= 0.0 {
        el(rel_max.z, rho_min)
    } else {
        el(rel_max.z, rho_max)
    };
    let el_lo = if rel_min.z >= 0.0 {
        el(rel_min.z, rho_max)
    } else {
        el(rel_min.z, rho_min)
    };
    let to_row = |deg: f64| (deg - cfg.elevation_deg[0]) / res;
    let r0 = (to_row(el_lo).floor() - 1.0).max(0.0) as usize;
    let r1 = ((to_row(el_hi).ceil() + 2.0).max(0.0) as usize).min(n_el);
    let rows = r0.min(r1)..r1;

    let inside = near_x == 0.0 && near_y == 0.0;
    if inside {
        return ((0..n_az).collect(), rows);
    }
    // the footprint is convex and excludes the scanner, so its azimuth
    // span is set by the corners and is narrower than a half turn
    let center = ((rel_min + rel_max) * 0.5).xy();
    let c_az = center.y.atan2(center.x);
    let mut lo = 0f64;
    let mut hi = 0f64;
    for (x, y) in [
        (rel_min.x, rel_min.y),
        (rel_min.x, rel_max.y),
        (rel_max.x, rel_min.y),
        (rel_max.x, rel_max.y),
    ] {
        let mut d = y.atan2(x) - c_az;
        d = (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let a0 = ((c_az + lo).to_degrees() / res).floor() as i64 - 1;
    let a1 = ((c_az + hi).to_degrees() / res).ceil() as i64 + 1;
    let n = n_az as i64;
    let mut cols: Vec<usize> = if a1 - a0 + 1 >= n {
        (0..n_az).collect()
    } else {
        (a0..=a1).map(|k| k.rem_euclid(n) as usize).collect()
    };
    cols.sort_unstable();
    cols.dedup();
    (cols, rows)
}

/// Scanner origins on a horizontal circle around the model at trunk
/// mid-height, the first on the +X side of the centroid.
pub fn default_tls_positions(model: &TreeModel, n_positions: usize, standoff: f64) -> Result<Vec<Vec3>> {
    if n_positions == 0 {
        return Err(Error::InvalidArgument("need at least one scanner position".into()));
    }
    if !(standoff.is_finite() && standoff > 0.0) {
        return Err(Error::InvalidArgument(format!("standoff must be > 0, got {standoff}")));
    }
    let bounds = model
        .mesh
        .bounds()
        .ok_or_else(|| Error::EmptyInput("mesh has no vertices".into()))?;
    let centroid = model.mesh.vertices.iter().sum::<Vec3>() / model.mesh.vertices.len() as f64;
    let extent = bounds.extent();
    let radius = 0.5 * extent.x.max(extent.y) + standoff;
    let trunk = model
        .skeleton
        .iter()
        .filter(|s| s.order == 0)
        .fold(None, |acc: Option<(f64, f64)>, s| {
            let (lo, hi) = (s.start.z.min(s.end.z), s.start.z.max(s.end.z));
            Some(acc.map_or((lo, hi), |(a, b)| (a.min(lo), b.max(hi))))
        });
    let z = match trunk {
        Some((lo, hi)) => 0.5 * (lo + hi),
        None => bounds.center().z,
    };
    Ok((0..n_positions)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n_positions as f64;
            Vec3::new(centroid.x + radius * a.cos(), centroid.y + radius * a.sin(), z)
        })
        .collect())
}
