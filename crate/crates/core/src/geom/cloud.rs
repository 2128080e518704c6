use std::collections::HashMap;

use super::Vec3;
use crate::error::{Error, Result};

/// Sentinel for "no label" in both semantic and instance arrays.
pub const UNLABELED: i32 = -1;

/// Points with per-point semantic class, instance id and optional color.
///
/// Coordinates are stored as `f32`, the precision of the on-disk format, so a
/// cloud written and read back is bit-identical. Geometry is computed in `f64`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCloud {
    pub points: Vec<[f32; 3]>,
    pub semantic: Vec<i32>,
    pub instance: Vec<i32>,
    pub color: Option<Vec<[u8; 3]>>,
}

impl LabeledCloud {
    /// Builds a cloud and checks its invariants.
    pub fn new(points: Vec<[f32; 3]>, semantic: Vec<i32>, instance: Vec<i32>) -> Result<Self> {
        let cloud = Self {
            points,
            semantic,
            instance,
            color: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    /// A cloud with every label set to [`UNLABELED`].
    pub fn unlabeled(points: Vec<[f32; 3]>) -> Self {
        let n = points.len();
        Self {
            points,
            semantic: vec![UNLABELED; n],
            instance: vec![UNLABELED; n],
            color: None,
        }
    }

    pub fn with_color(mut self, color: Vec<[u8; 3]>) -> Result<Self> {
        if color.len() != self.points.len() {
            return Err(Error::Shape(format!(
                "{} colors for {} points",
                color.len(),
                self.points.len()
            )));
        }
        self.color = Some(color);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> Vec3 {
        let [x, y, z] = self.points[i];
        Vec3::new(f64::from(x), f64::from(y), f64::from(z))
    }

    pub fn positions(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Checks array lengths, finiteness and that each instance has one class.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.semantic.len() != n || self.instance.len() != n {
            return Err(Error::Shape(format!(
                "{} points, {} semantic labels, {} instance labels",
                n,
                self.semantic.len(),
                self.instance.len()
            )));
        }
        if let Some(color) = &self.color {
            if color.len() != n {
                return Err(Error::Shape(format!("{} colors for {n} points", color.len())));
            }
        }
        self.check_finite()?;
        let mut class_of: HashMap<i32, i32> = HashMap::new();
        for (&inst, &sem) in self.instance.iter().zip(&self.semantic) {
            if inst < 0 {
                continue;
            }
            match class_of.insert(inst, sem) {
                Some(prev) if prev != sem => {
                    return Err(Error::InvalidInput(format!(
                        "instance {inst} spans classes {prev} and {sem}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            Some(i) => Err(Error::InvalidGeometry(format!("point {i} is not finite"))),
            None => Ok(()),
        }
    }

    /// Copies the given points, in order, into a new cloud.
    pub fn select(&self, indices: &[usize]) -> LabeledCloud {
        LabeledCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            semantic: indices.iter().map(|&i| self.semantic[i]).collect(),
            instance: indices.iter().map(|&i| self.instance[i]).collect(),
            color: self.color.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Appends another cloud. Colors survive only if both sides have them.
    pub fn extend(&mut self, other: &LabeledCloud) {
        let had = self.len();
        self.points.extend_from_slice(&other.points);
        self.semantic.extend_from_slice(&other.semantic);
        self.instance.extend_from_slice(&other.instance);
        self.color = match (self.color.take(), &other.color) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(_)) if had == 0 => other.color.clone(),
            _ => None,
        };
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points((0..self.len()).map(|i| self.point(i)))
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points(points: impl IntoIterator<Item = Vec3>) -> Option<Self> {
        let mut b = Self::empty();
        let mut any = false;
        for p in points {
            b.grow(&p);
            any = true;
        }
        any.then_some(b)
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }
}
