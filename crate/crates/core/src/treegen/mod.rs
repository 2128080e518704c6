//! Procedural tree generation from statistics of real trees.
//!
//! Statistics (trunk height, skeleton, per-branch placement and size) are
//! extracted from labeled base trees, interpolated between pairs of bases and
//! turned into a capsule-chain skeleton with a labeled surface mesh. Higher
//! order branches are attached to their parents with scaled length and
//! radius. Every candidate branch is tested against the existing organs and
//! re-sampled or dropped on collision.

mod generate;
mod model;
mod stats;

pub use generate::{generate_population, generate_tree, plan_population, PopulationMember};
pub use model::{collisions, Segment, TreeModel};
pub use stats::{extract_stats, interpolate_stats, BranchRecord, ExtractConfig, TreeStats};

use serde::{Deserialize, Serialize};

/// Class ids used for trunk and branch organs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganClasses {
    pub trunk: i32,
    pub branch: i32,
}

impl Default for OrganClasses {
    fn default() -> Self {
        Self { trunk: 0, branch: 1 }
    }
}

/// Generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeGenConfig {
    pub organs: OrganClasses,
    /// Tip radius as a fraction of base radius, for every organ.
    pub tip_ratio: f64,
    /// Length multiplier from an order-k branch to its order-(k+1) children.
    pub length_scale: f64,
    /// Radius multiplier from an order-k branch to its children.
    pub radius_scale: f64,
    /// Placement attempts after the first before a branch is dropped.
    pub retry_budget: usize,
    pub radial_segments: usize,
    pub trunk_segments: usize,
    pub branch_segments: usize,
    /// Capsules collide when their axis distance is below the radius sum
    /// minus this tolerance (meters).
    pub collision_tolerance: f64,
    /// Children per parent for orders >= 2; `None` derives it from the
    /// statistics (order-k count over order-(k-1) count) or falls back to 2.
    pub children_per_branch: Option<usize>,
    /// Range of angles between a child and its parent axis, in degrees.
    pub child_angle_deg: (f64, f64),
}

impl Default for TreeGenConfig {
    fn default() -> Self {
        Self {
            organs: OrganClasses::default(),
            tip_ratio: 0.1,
            length_scale: 0.5,
            radius_scale: 0.6,
            retry_budget: 20,
            radial_segments: 12,
            trunk_segments: 16,
            branch_segments: 4,
            collision_tolerance: 1e-4,
            children_per_branch: None,
            child_angle_deg: (30.0, 60.0),
        }
    }
}
