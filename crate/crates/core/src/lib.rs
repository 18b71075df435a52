//! Point-set optimal transport for lidar upsampling.
//!
//! The crate provides the distances used to compare point clouds (Chamfer,
//! Hausdorff, exact and auction EMD, Sinkhorn, sliced Wasserstein) with
//! analytic gradients, the lidar range-image decimation pipeline that
//! produces low/high resolution pairs, a free-point gradient-descent
//! upsampler, and sweep harnesses that measure how each metric reacts to
//! jitter and rotation.

pub mod cli;
pub mod cloud;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod io;
pub mod lidar;
pub mod metrics;
pub mod optimize;
pub mod rng;
pub mod sampling;
pub mod spatial;
pub mod synth;

pub use cloud::{DirectionSet, Point3, PointCloud};
pub use error::{Error, Result};
