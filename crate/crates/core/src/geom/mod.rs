//! Point-cloud types, voxelization, spatial indexing and sampling.

mod cloud;
mod kdtree;
mod mesh;
mod sampling;
mod segment;
mod union_find;
pub(crate) mod voxel;

pub use cloud::{Aabb, LabeledCloud, UNLABELED};
pub use kdtree::SpatialIndex;
pub use mesh::LabeledMesh;
pub use sampling::{blockwise_downsample, farthest_point_sample, farthest_point_sample_from};
pub use segment::{closest_points, segment_distance};
pub use union_find::UnionFind;
pub use voxel::{voxelize, VoxelGrid, VoxelIndex};

/// Double-precision 3-vector used for all geometric computation.
pub type Vec3 = nalgebra::Vector3<f64>;
