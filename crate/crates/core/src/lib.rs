//! Synthetic plant point clouds for organ segmentation.
//!
//! The crate covers the data side of a sim-to-real segmentation workflow:
//! procedural trees and virtual laser scans, elastic deformation augmentation,
//! a standard on-disk dataset format, grouping-based instance segmentation
//! from externally predicted scores and offsets, and the evaluation metrics.

// `!(x > 0.0)` is used on purpose to reject NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod deform;
pub mod error;
pub mod geom;
pub mod instgroup;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod treegen;
pub mod vls;

pub use error::{Error, ErrorKind, Result};
pub use geom::{LabeledCloud, Vec3};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/dataset.md")]
    struct Dataset;
    #[doc = include_str!("../../../book/src/trees.md")]
    struct Trees;
    #[doc = include_str!("../../../book/src/scanning.md")]
    struct Scanning;
    #[doc = include_str!("../../../book/src/deformation.md")]
    struct Deformation;
    #[doc = include_str!("../../../book/src/grouping.md")]
    struct Grouping;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/protocol.md")]
    struct Protocol;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
