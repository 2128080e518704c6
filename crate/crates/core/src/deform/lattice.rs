use std::collections::{BTreeMap, HashMap};

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use super::{Material, MaterialMap};
use crate::geom::voxel::cell_index;
use crate::geom::{voxelize, LabeledCloud, UnionFind, Vec3, VoxelIndex};
use crate::{Error, Result};

pub type ElementMatrix = SMatrix<f64, 24, 24>;

/// Corner `c` of a hexahedron sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
pub const CORNERS: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Isotropic elasticity matrix in Voigt order `xx, yy, zz, yz, xz, xy`
/// (engineering shear strains).
pub fn elasticity_matrix(m: &Material) -> SMatrix<f64, 6, 6> {
    let (e, nu) = (m.young_modulus, m.poisson_ratio);
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    let mut d = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = lambda;
        }
        d[(i, i)] = lambda + 2.0 * mu;
        d[(i + 3, i + 3)] = mu;
    }
    d
}

/// Stiffness of a cubic trilinear element of edge `h`, integrated with the
/// 2×2×2 Gauss rule. DOF `3c + k` is component `k` of corner `c`.
pub fn element_stiffness(m: &Material, h: f64) -> ElementMatrix {
    let d = elasticity_matrix(m);
    let g = 0.5 / 3f64.sqrt();
    let mut k = ElementMatrix::zeros();
    for gp in CORNERS {
        let xi = gp.map(|b| if b == 0 { 0.5 - g } else { 0.5 + g });
        let b = strain_matrix(xi, h);
        // each Gauss point carries an eighth of the volume h³
        k += b.transpose() * d * b * (h * h * h / 8.0);
    }
    k
}

/// Strain-displacement matrix at local coordinates `xi ∈ [0, 1]³`.
pub fn strain_matrix(xi: [f64; 3], h: f64) -> SMatrix<f64, 6, 24> {
    let mut b = SMatrix::<f64, 6, 24>::zeros();
    for (c, off) in CORNERS.iter().enumerate() {
        let f = |a: usize| if off[a] == 1 { xi[a] } else { 1.0 - xi[a] };
        let df = |a: usize| if off[a] == 1 { 1.0 } else { -1.0 };
        let dn = [
            df(0) * f(1) * f(2) / h,
            f(0) * df(1) * f(2) / h,
            f(0) * f(1) * df(2) / h,
        ];
        let col = 3 * c;
        b[(0, col)] = dn[0];
        b[(1, col + 1)] = dn[1];
        b[(2, col + 2)] = dn[2];
        b[(3, col + 1)] = dn[2];
        b[(3, col + 2)] = dn[1];
        b[(4, col)] = dn[2];
        b[(4, col + 2)] = dn[0];
        b[(5, col)] = dn[1];
        b[(5, col + 1)] = dn[0];
    }
    b
}

/// Trilinear weights of the eight corners at local coordinates `t`.
pub fn trilinear_weights(t: [f64; 3]) -> [f64; 8] {
    let mut w = [0.0; 8];
    for (c, off) in CORNERS.iter().enumerate() {
        w[c] = (0..3).map(|a| if off[a] == 1 { t[a] } else { 1.0 - t[a] }).product();
    }
    w
}

/// Hexahedral lattice over the occupied voxels of a cloud.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: [i64; 3],
    /// Occupied voxels in ascending index order; element `e` is voxel `e`.
    pub voxels: Vec<VoxelIndex>,
    /// Majority semantic class of each element.
    pub element_class: Vec<i32>,
    pub element_material: Vec<Material>,
    /// Lattice vertices (integer grid coordinates), ascending.
    pub vertices: Vec<VoxelIndex>,
    pub element_vertices: Vec<[usize; 8]>,
    voxel_lookup: HashMap<VoxelIndex, usize>,
    /// One stiffness matrix per distinct material, indexed by `element_kind`.
    kinds: Vec<ElementMatrix>,
    element_kind: Vec<usize>,
    /// For each vertex, `(element, corner)` pairs in ascending element order.
    incidence: Vec<Vec<(usize, usize)>>,
}

impl Lattice {
    pub fn build(cloud: &LabeledCloud, voxel_size: f64, materials: &MaterialMap) -> Result<Self> {
        materials.validate()?;
        let grid = voxelize(cloud, voxel_size)?;
        let mut voxels = Vec::with_capacity(grid.cells.len());
        let mut element_class = Vec::with_capacity(grid.cells.len());
        for (idx, members) in &grid.cells {
            let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
            for &i in members {
                *counts.entry(cloud.semantic[i]).or_default() += 1;
            }
            // strict comparison keeps the lowest class id on ties
            let mut best = (i32::MAX, 0usize);
            for (&class, &n) in &counts {
                if n > best.1 {
                    best = (class, n);
                }
            }
            voxels.push(*idx);
            element_class.push(best.0);
        }
        let element_material = element_class
            .iter()
            .map(|&c| materials.get(c).ok_or(Error::MissingMaterial(c)))
            .collect::<Result<Vec<_>>>()?;

        let mut vertex_ids: BTreeMap<VoxelIndex, usize> = BTreeMap::new();
        for v in &voxels {
            for off in CORNERS {
                vertex_ids.insert([v[0] + off[0], v[1] + off[1], v[2] + off[2]], 0);
            }
        }
        for (i, id) in vertex_ids.values_mut().enumerate() {
            *id = i;
        }
        let vertices: Vec<VoxelIndex> = vertex_ids.keys().copied().collect();
        let element_vertices: Vec<[usize; 8]> = voxels
            .iter()
            .map(|v| CORNERS.map(|off| vertex_ids[&[v[0] + off[0], v[1] + off[1], v[2] + off[2]]]))
            .collect();
        let mut incidence = vec![Vec::new(); vertices.len()];
        for (e, ev) in element_vertices.iter().enumerate() {
            for (c, &v) in ev.iter().enumerate() {
                incidence[v].push((e, c));
            }
        }

        let mut distinct: Vec<Material> = Vec::new();
        let element_kind = element_material
            .iter()
            .map(|m| match distinct.iter().position(|d| d == m) {
                Some(k) => k,
                None => {
                    distinct.push(*m);
                    distinct.len() - 1
                }
            })
            .collect();
        let kinds = distinct.iter().map(|m| element_stiffness(m, voxel_size)).collect();
        let voxel_lookup = voxels.iter().enumerate().map(|(e, v)| (*v, e)).collect();

        Ok(Self {
            origin: grid.origin,
            voxel_size,
            dims: grid.dims,
            voxels,
            element_class,
            element_material,
            vertices,
            element_vertices,
            voxel_lookup,
            kinds,
            element_kind,
            incidence,
        })
    }

    pub fn element_count(&self) -> usize {
        self.voxels.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn dof(&self) -> usize {
        3 * self.vertices.len()
    }

    pub fn vertex_position(&self, v: usize) -> Vec3 {
        let g = self.vertices[v];
        self.origin + Vec3::new(g[0] as f64, g[1] as f64, g[2] as f64) * self.voxel_size
    }

    pub fn element_of_voxel(&self, idx: &VoxelIndex) -> Option<usize> {
        self.voxel_lookup.get(idx).copied()
    }

    /// Element containing `p` and the local coordinates of `p` in it.
    pub fn locate(&self, p: &Vec3) -> Option<(usize, [f64; 3])> {
        let idx = cell_index(&self.origin, self.voxel_size, &self.dims, p)?;
        let e = self.element_of_voxel(&idx)?;
        let min = self.origin + Vec3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.voxel_size;
        let t = [0, 1, 2].map(|a| ((p[a] - min[a]) / self.voxel_size).clamp(0.0, 1.0));
        Some((e, t))
    }

    pub fn element_stiffness(&self, e: usize) -> &ElementMatrix {
        &self.kinds[self.element_kind[e]]
    }

    /// Bottom-face vertices of the lowest occupied voxel layer.
    pub fn ground_mask(&self) -> Vec<bool> {
        let zmin = self.voxels.iter().map(|v| v[2]).min().unwrap_or(0);
        self.vertices.iter().map(|v| v[2] == zmin).collect()
    }

    /// Connected components of elements that share a face, as the
    /// component id of every element (ids ordered by smallest element).
    /// Elements meeting only at an edge or a vertex can hinge about it, so
    /// they do not join.
    pub fn element_components(&self) -> (Vec<usize>, usize) {
        let mut uf = UnionFind::new(self.element_count());
        for (e, v) in self.voxels.iter().enumerate() {
            for axis in 0..3 {
                let mut n = *v;
                n[axis] += 1;
                if let Some(o) = self.element_of_voxel(&n) {
                    uf.union(e, o);
                }
            }
        }
        let groups = uf.groups();
        let mut comp = vec![0; self.element_count()];
        for (g, members) in groups.iter().enumerate() {
            for &e in members {
                comp[e] = g;
            }
        }
        (comp, groups.len())
    }

    /// Elements incident to vertex `v`, ascending.
    pub fn vertex_elements(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.incidence[v].iter().map(|&(e, _)| e)
    }

    /// `K x` without assembling `K`. Element products are summed per vertex
    /// in ascending element order, so the result does not depend on the
    /// thread count.
    pub fn apply_stiffness(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dof());
        let local: Vec<SVector<f64, 24>> = (0..self.element_count())
            .into_par_iter()
            .map(|e| {
                let ev = &self.element_vertices[e];
                let xe = SVector::<f64, 24>::from_fn(|i, _| x[3 * ev[i / 3] + i % 3]);
                self.element_stiffness(e) * xe
            })
            .collect();
        let mut y = vec![0.0; x.len()];
        y.par_chunks_mut(3).enumerate().for_each(|(v, out)| {
            for &(e, c) in &self.incidence[v] {
                for k in 0..3 {
                    out[k] += local[e][3 * c + k];
                }
            }
        });
        y
    }

    /// Diagonal of `K`.
    pub fn stiffness_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dof()];
        for (v, inc) in self.incidence.iter().enumerate() {
            for &(e, c) in inc {
                let ke = self.element_stiffness(e);
                for k in 0..3 {
                    d[3 * v + k] += ke[(3 * c + k, 3 * c + k)];
                }
            }
        }
        d
    }

    /// Dense assembled `K`; meant for small lattices.
    pub fn stiffness_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dof();
        let mut k = nalgebra::DMatrix::zeros(n, n);
        for (e, ev) in self.element_vertices.iter().enumerate() {
            let ke = self.element_stiffness(e);
            for i in 0..24 {
                for j in 0..24 {
                    k[(3 * ev[i / 3] + i % 3, 3 * ev[j / 3] + j % 3)] += ke[(i, j)];
                }
            }
        }
        k
    }
}
