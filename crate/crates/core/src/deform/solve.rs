use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Lattice;
use crate::geom::voxel::VoxelIndex;
use crate::geom::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once `|r| <= tolerance * |f|`.
    pub tolerance: f64,
    /// Iteration cap as a multiple of the number of degrees of freedom.
    pub max_iter_factor: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter_factor: 10,
        }
    }
}

/// Vertex displacements plus what the solve had to do to get them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformField {
    pub displacements: Vec<Vec3>,
    /// Components with no clamped vertex; their vertices are held at rest.
    pub frozen_components: usize,
    pub iterations: usize,
    pub residual: f64,
}

impl DeformField {
    pub fn zeros(n: usize) -> Self {
        Self {
            displacements: vec![Vec3::zeros(); n],
            frozen_components: 0,
            iterations: 0,
            residual: 0.0,
        }
    }
}

const CHUNK: usize = 4096;

// fixed chunking keeps the summation order independent of the thread pool
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

struct Active {
    mask: Vec<bool>,
    frozen_components: usize,
}

fn anchors_rigidly(points: &[VoxelIndex]) -> bool {
    let Some(a) = points.first() else {
        return false;
    };
    let d = |p: &VoxelIndex| Vec3::new((p[0] - a[0]) as f64, (p[1] - a[1]) as f64, (p[2] - a[2]) as f64);
    let Some(b) = points.iter().map(d).find(|v| *v != Vec3::zeros()) else {
        return false;
    };
    points.iter().any(|p| b.cross(&d(p)) != Vec3::zeros())
}

fn active_vertices(lattice: &Lattice, fixed: &[bool]) -> Active {
    let (comp, n_comp) = lattice.element_components();
    let mut clamped: Vec<Vec<VoxelIndex>> = vec![Vec::new(); n_comp];
    for v in (0..lattice.vertex_count()).filter(|&v| fixed[v]) {
        let mut seen: Vec<usize> = lattice.vertex_elements(v).map(|e| comp[e]).collect();
        seen.sort_unstable();
        seen.dedup();
        for c in seen {
            clamped[c].push(lattice.vertices[v]);
        }
    }
    let anchored: Vec<bool> = clamped.iter().map(|pts| anchors_rigidly(pts)).collect();
    let mask = (0..lattice.vertex_count())
        .map(|v| !fixed[v] && lattice.vertex_elements(v).any(|e| anchored[comp[e]]))
        .collect();
    Active {
        mask,
        frozen_components: anchored.iter().filter(|&&a| !a).count(),
    }
}

/// Solves `K u = f` with the vertices in `fixed` clamped to zero, by
/// Jacobi-preconditioned conjugate gradients.
///
/// Loads on clamped or frozen vertices are dropped. Pieces of the lattice
/// are elements joined through shared faces. A piece with fewer than three
/// non-collinear clamped vertices could move or spin as a rigid body; it is
/// held at rest and counted in [`DeformField::frozen_components`]. Vertices
/// it shares with an anchored piece stay free.
pub fn solve_elastic(
    lattice: &Lattice,
    loads: &[(usize, Vec3)],
    fixed: &[bool],
    cfg: &SolverConfig,
) -> Result<DeformField> {
    let nv = lattice.vertex_count();
    if fixed.len() != nv {
        return Err(Error::Shape(format!(
            "fixed mask has {} entries for {nv} vertices",
            fixed.len()
        )));
    }
    if !fixed.iter().any(|&f| f) {
        return Err(Error::UnconstrainedSystem);
    }
    let active = active_vertices(lattice, fixed);
    let frozen_components = active.frozen_components;
    let active = active.mask;

    let n = 3 * nv;
    let mut f = vec![0.0; n];
    for (v, load) in loads {
        if *v >= nv {
            return Err(Error::InvalidArgument(format!("vertex {v} is not in the lattice")));
        }
        if active[*v] {
            for k in 0..3 {
                f[3 * v + k] += load[k];
            }
        }
    }
    let mut field = DeformField::zeros(nv);
    field.frozen_components = frozen_components;
    let f_norm = dot(&f, &f).sqrt();
    if f_norm == 0.0 {
        return Ok(field);
    }

    let mask = |x: &mut [f64]| {
        x.par_chunks_mut(3).zip(active.par_iter()).for_each(|(c, &a)| {
            if !a {
                c.fill(0.0);
            }
        })
    };
    let inv_diag: Vec<f64> = lattice
        .stiffness_diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| if active[i / 3] && d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let precondition = |r: &[f64]| -> Vec<f64> { r.par_iter().zip(&inv_diag).map(|(a, b)| a * b).collect() };

    let mut x = vec![0.0; n];
    let mut r = f.clone();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = cfg.max_iter_factor * n;
    let mut residual = 1.0;
    let mut it = 0;
    while it < max_iter {
        let mut ap = lattice.apply_stiffness(&p);
        mask(&mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        it += 1;
        residual = dot(&r, &r).sqrt() / f_norm;
        if residual <= cfg.tolerance {
            break;
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    if !(residual <= cfg.tolerance) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure {
            iterations: it,
            residual,
        });
    }
    field.displacements = x.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    field.iterations = it;
    field.residual = residual;
    Ok(field)
}
