//! Voxel-grid primitives.
//!
//! Everything downstream (swept spaces, critical spaces, obstacle occupancy)
//! is a [`VoxelSet`] on a cubic [`GridSpec`]. Adjacency is 6-connected: two
//! cells touch only if they share a face.

mod boxes;
mod grid;
pub mod io;
mod octree;
mod surface;
mod voxel_set;

pub use boxes::{box_cover, BoxRegion};
pub use grid::{GridSpec, VoxelCoord};
pub use octree::{build_octree, decode_octree, OctantStatus, OctreeNode};
pub use surface::{exposed_surface_area, surface_and_volume};
pub use voxel_set::VoxelSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("voxel sets live on different grids ({left} vs {right})")]
    GridMismatch { left: String, right: String },
    #[error("critical space and erroneous swept space overlap in {count} cell(s)")]
    Overlap { count: usize },
    #[error("voxel ({x},{y},{z}) is outside a grid of resolution {resolution}")]
    OutOfBounds { x: i64, y: i64, z: i64, resolution: u32 },
    #[error("input voxel set is empty")]
    EmptyInput,
    #[error("grid resolution {resolution} is not 2^{depth}")]
    DepthMismatch { resolution: u32, depth: u32 },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Face-neighbour offsets, in the order -x, +x, -y, +y, -z, +z.
pub(crate) const FACE_OFFSETS: [(i32, i32, i32); 6] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];
