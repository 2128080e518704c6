use std::collections::BTreeMap;

use super::{LabeledCloud, Vec3};
use crate::error::{Error, Result};

/// Integer cell coordinates `(i, j, k)`.
pub type VoxelIndex = [i64; 3];

/// Partition of a point set into cubic cells anchored at the cloud minimum.
///
/// A point `p` lands in `floor((p - origin) / voxel_size)`. Points on the
/// upper face of the global bounding box are clamped into the last cell so no
/// one-point cell appears past the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub voxel_size: f64,
    /// Number of cells per axis spanned by the bounding box (at least 1).
    pub dims: [i64; 3],
    pub cells: BTreeMap<VoxelIndex, Vec<usize>>,
}

impl VoxelGrid {
    /// Cell for an arbitrary position, using the grid's clamping rule.
    /// Returns `None` if the position falls outside the grid's box.
    pub fn cell_of(&self, p: &Vec3) -> Option<VoxelIndex> {
        cell_index(&self.origin, self.voxel_size, &self.dims, p)
    }

    /// Lower corner of a cell.
    pub fn cell_min(&self, idx: &VoxelIndex) -> Vec3 {
        self.origin + Vec3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.voxel_size
    }

    pub fn occupied(&self) -> usize {
        self.cells.len()
    }
}

pub(crate) fn cell_index(origin: &Vec3, size: f64, dims: &[i64; 3], p: &Vec3) -> Option<VoxelIndex> {
    let mut idx = [0i64; 3];
    for a in 0..3 {
        let f = ((p[a] - origin[a]) / size).floor();
        if !f.is_finite() || f < 0.0 {
            return None;
        }
        let f = f as i64;
        if f < dims[a] {
            idx[a] = f;
        } else if f == dims[a] && p[a] <= origin[a] + size * dims[a] as f64 {
            idx[a] = dims[a] - 1;
        } else {
            return None;
        }
    }
    Some(idx)
}

pub(crate) fn grid_dims(origin: &Vec3, max: &Vec3, size: f64) -> [i64; 3] {
    let mut dims = [1i64; 3];
    for a in 0..3 {
        dims[a] = (((max[a] - origin[a]) / size).ceil() as i64).max(1);
    }
    dims
}

/// Voxelizes a cloud. `origin` is the componentwise minimum of its points.
pub fn voxelize(cloud: &LabeledCloud, voxel_size: f64) -> Result<VoxelGrid> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyInput("cannot voxelize an empty cloud".into()));
    }
    cloud.check_finite()?;
    let bounds = cloud.bounds().expect("non-empty");
    let origin = bounds.min;
    let dims = grid_dims(&origin, &bounds.max, voxel_size);
    let mut cells: BTreeMap<VoxelIndex, Vec<usize>> = BTreeMap::new();
    for i in 0..cloud.len() {
        let idx =
            cell_index(&origin, voxel_size, &dims, &cloud.point(i)).expect("points inside their own bounding box");
        cells.entry(idx).or_default().push(i);
    }
    Ok(VoxelGrid {
        origin,
        voxel_size,
        dims,
        cells,
    })
}
