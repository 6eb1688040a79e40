//! Motion sets for a simplified articulated arm.
//!
//! Poses are sampled uniformly in joint space, motions join nearby poses,
//! and each motion's swept volume is rasterized onto the grid.

mod arm;
mod set;
mod sweep;

pub use arm::{forward_kinematics, ArmSpec, Pose, Segment};
pub use set::{generate_motion_set, Motion, MotionSet};
pub use sweep::{default_steps, rasterize_capsule, rasterize_pose, swept_volume};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("invalid arm: {0}")]
    InvalidArm(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid motion set size: {0}")]
    InvalidCounts(String),
    #[error("{requested} motions requested but {n_poses} poses allow at most {max}")]
    TooManyMotions { requested: usize, n_poses: usize, max: usize },
    #[error("malformed motion set: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("motion set json: {0}")]
    Json(#[from] serde_json::Error),
}
