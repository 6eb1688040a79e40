//! Collision-exposure analysis for voxel-based collision detection storage.

pub mod geometry;
pub mod cdm;
pub mod config;
pub mod environment;
pub mod fi;
pub mod motion;
pub mod oracle;
pub mod pipeline;
pub mod planner;
pub mod seed;
