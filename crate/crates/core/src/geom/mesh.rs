use rand::Rng;

use super::{Aabb, LabeledCloud, Vec3};
use crate::error::{Error, Result};

/// Indexed triangle mesh with an organ class and instance id per face.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub organ: Vec<i32>,
    pub instance: Vec<i32>,
}

impl LabeledMesh {
    pub fn triangle_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn add_vertex(&mut self, v: Vec3) -> u32 {
        self.vertices.push(v);
        (self.vertices.len() - 1) as u32
    }

    pub fn add_face(&mut self, face: [u32; 3], organ: i32, instance: i32) {
        self.faces.push(face);
        self.organ.push(organ);
        self.instance.push(instance);
    }

    /// Adds a free-standing triangle with its own three vertices.
    pub fn add_triangle(&mut self, tri: [Vec3; 3], organ: i32, instance: i32) {
        let a = self.add_vertex(tri[0]);
        let b = self.add_vertex(tri[1]);
        let c = self.add_vertex(tri[2]);
        self.add_face([a, b, c], organ, instance);
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(self.vertices.iter().copied())
    }

    /// Area of face `f`.
    pub fn area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Area-weighted uniform sampling of `n` surface points. Point labels
    /// come from the sampled face.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<LabeledCloud> {
        if self.is_empty() {
            return Err(Error::EmptyInput("mesh has no faces".into()));
        }
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            total += self.area(f);
            cumulative.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::InvalidGeometry("mesh has zero surface area".into()));
        }
        let mut rng = crate::rng::seeded(seed);
        let mut cloud = LabeledCloud::default();
        for _ in 0..n {
            let pick = rng.random::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= pick).min(self.faces.len() - 1);
            let [a, b, c] = self.triangle(f);
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let p = a + (b - a) * u + (c - a) * v;
            cloud.points.push([p.x as f32, p.y as f32, p.z as f32]);
            cloud.semantic.push(self.organ[f]);
            cloud.instance.push(self.instance[f]);
        }
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        if self.organ.len() != self.faces.len() || self.instance.len() != self.faces.len() {
            return Err(Error::Shape("per-face label arrays differ from face count".into()));
        }
        let n = self.vertices.len() as u32;
        if let Some(f) = self.faces.iter().position(|f| f.iter().any(|&v| v >= n)) {
            return Err(Error::InvalidGeometry(format!("face {f} references a missing vertex")));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidGeometry("non-finite mesh vertex".into()));
        }
        Ok(())
    }
}
