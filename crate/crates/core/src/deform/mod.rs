//! Elastic deformation of labeled clouds.
//!
//! Occupied voxels become trilinear hexahedra carrying the material of their
//! majority class. Forces at lattice vertices are resolved with linear
//! elastostatics (`K u = f`, ground layer clamped) and the vertex
//! displacements are carried back to the points by trilinear interpolation.

mod lattice;
mod solve;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{LabeledCloud, Vec3};
use crate::{rng, Error, Result};

pub use lattice::{
    elasticity_matrix, element_stiffness, strain_matrix, trilinear_weights, ElementMatrix, Lattice, CORNERS,
};
pub use solve::{solve_elastic, DeformField, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    #[serde(rename = "E")]
    pub young_modulus: f64,
    #[serde(rename = "nu")]
    pub poisson_ratio: f64,
}

impl Material {
    pub const WOOD: Material = Material {
        young_modulus: 1.0e10,
        poisson_ratio: 0.3,
    };
    pub const LEAF: Material = Material {
        young_modulus: 5.0e7,
        poisson_ratio: 0.35,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.young_modulus.is_finite() && self.young_modulus > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Young's modulus must be > 0, got {}",
                self.young_modulus
            )));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "Poisson's ratio must lie in (0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        Ok(())
    }
}

/// Material per semantic class. Serialized as `{"<class id>": {"E": .., "nu": ..}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaterialMap {
    pub classes: BTreeMap<i32, Material>,
}

impl MaterialMap {
    /// Wood for every class except those whose name mentions a leaf.
    pub fn plant_defaults<'a>(classes: impl IntoIterator<Item = (i32, &'a str)>) -> Self {
        let classes = classes
            .into_iter()
            .map(|(id, name)| {
                let m = if name.to_ascii_lowercase().contains("leaf") {
                    Material::LEAF
                } else {
                    Material::WOOD
                };
                (id, m)
            })
            .collect();
        Self { classes }
    }

    pub fn uniform(classes: impl IntoIterator<Item = i32>, m: Material) -> Self {
        Self {
            classes: classes.into_iter().map(|c| (c, m)).collect(),
        }
    }

    pub fn get(&self, class: i32) -> Option<Material> {
        self.classes.get(&class).copied()
    }

    pub fn validate(&self) -> Result<()> {
        self.classes.values().try_for_each(Material::validate)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: Self = serde_json::from_str(&text)?;
        map.validate()?;
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexSelector {
    Index(usize),
    /// A free vertex drawn uniformly, without repetition within one spec.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSpec {
    pub forces: Vec<(VertexSelector, [f64; 3])>,
    /// Largest allowed magnitude of any force component, in newtons.
    pub bound: f64,
}

impl ForceSpec {
    /// `n` random vertices, each with components uniform in `[-bound, bound]`.
    pub fn random(n: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let forces = (0..n)
            .map(|_| {
                let f = if bound > 0.0 {
                    [0; 3].map(|_| rng.random_range(-bound..=bound))
                } else {
                    [0.0; 3]
                };
                (VertexSelector::Random, f)
            })
            .collect();
        Self { forces, bound }
    }

    /// Concrete `(vertex, force)` loads. Random selectors draw distinct
    /// vertices among those not fixed.
    pub fn resolve(&self, lattice: &Lattice, fixed: &[bool], rng: &mut impl Rng) -> Result<Vec<(usize, Vec3)>> {
        if !(self.bound.is_finite() && self.bound >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "force bound must be >= 0, got {}",
                self.bound
            )));
        }
        let free: Vec<usize> = (0..lattice.vertex_count()).filter(|&v| !fixed[v]).collect();
        let n_random = self.forces.iter().filter(|(s, _)| *s == VertexSelector::Random).count();
        let picks = if free.is_empty() || n_random == 0 {
            Vec::new()
        } else {
            sample(rng, free.len(), n_random.min(free.len())).into_vec()
        };
        let mut picks = picks.into_iter().map(|i| free[i]);
        let mut out = Vec::with_capacity(self.forces.len());
        for (sel, f) in &self.forces {
            if f.iter().any(|c| !c.is_finite() || c.abs() > self.bound) {
                return Err(Error::InvalidArgument(format!(
                    "force {f:?} exceeds the bound {} N",
                    self.bound
                )));
            }
            let v = match sel {
                VertexSelector::Index(v) if *v < lattice.vertex_count() => *v,
                VertexSelector::Index(v) => {
                    return Err(Error::InvalidArgument(format!("vertex {v} is not in the lattice")))
                }
                VertexSelector::Random => match picks.next() {
                    Some(v) => v,
                    None => continue,
                },
            };
            out.push((v, Vec3::from(*f)));
        }
        Ok(out)
    }
}

/// Moves every point by the trilinear blend of its voxel's corner displacements.
pub fn apply_deformation(cloud: &LabeledCloud, lattice: &Lattice, field: &DeformField) -> Result<LabeledCloud> {
    if field.displacements.len() != lattice.vertex_count() {
        return Err(Error::Shape(format!(
            "field has {} displacements for {} lattice vertices",
            field.displacements.len(),
            lattice.vertex_count()
        )));
    }
    let points = cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let q = Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64);
            let (e, t) = lattice.locate(&q).ok_or(Error::LatticeCoverage { point: i })?;
            let w = trilinear_weights(t);
            let mut u = Vec3::zeros();
            for (c, &v) in lattice.element_vertices[e].iter().enumerate() {
                u += field.displacements[v] * w[c];
            }
            if u == Vec3::zeros() {
                return Ok(*p);
            }
            let r = q + u;
            Ok([r.x as f32, r.y as f32, r.z as f32])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledCloud {
        points,
        semantic: cloud.semantic.clone(),
        instance: cloud.instance.clone(),
        color: cloud.color.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub n_variants: usize,
    pub voxel_size: f64,
    pub force_bound: f64,
    /// Loaded vertices per variant.
    pub forces_per_variant: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            n_variants: 10,
            voxel_size: 0.001,
            force_bound: 5.0,
            forces_per_variant: 4,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

/// One deformed variant and its solver summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub cloud: LabeledCloud,
    pub field: DeformField,
}

/// Deformed copies of a cloud under seeded random loads. The lattice's
/// ground layer is clamped.
pub fn augment(cloud: &LabeledCloud, materials: &MaterialMap, cfg: &AugmentConfig) -> Result<Vec<Variant>> {
    if cfg.n_variants == 0 {
        return Err(Error::InvalidArgument("need at least one variant".into()));
    }
    let lattice = Lattice::build(cloud, cfg.voxel_size, materials)?;
    let fixed = lattice.ground_mask();
    (0..cfg.n_variants)
        .into_par_iter()
        .map(|v| {
            let mut r = rng::stream(cfg.seed, "deform", v as u64);
            let spec = ForceSpec::random(cfg.forces_per_variant, cfg.force_bound, &mut r);
            let loads = spec.resolve(&lattice, &fixed, &mut r)?;
            let field = solve_elastic(&lattice, &loads, &fixed, &cfg.solver)?;
            let cloud = apply_deformation(cloud, &lattice, &field)?;
            Ok(Variant { cloud, field })
        })
        .collect()
}
