use serde::{Deserialize, Serialize};
use std::fmt;

use super::GeometryError;

/// Largest supported resolution; coordinates are stored as `u16` and the
/// dense sets would get unwieldy well before this anyway.
pub const MAX_RESOLUTION: u32 = 1024;

/// A cubic environment of `resolution`³ cells spanning `extent_cm` per edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub resolution: u32,
    pub extent_cm: f64,
}

impl GridSpec {
    pub fn new(resolution: u32, extent_cm: f64) -> Result<Self, GeometryError> {
        let grid = Self { resolution, extent_cm };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.resolution < 2 || !self.resolution.is_power_of_two() {
            return Err(GeometryError::InvalidGrid(format!(
                "resolution must be a power of two >= 2, got {}",
                self.resolution
            )));
        }
        if self.resolution > MAX_RESOLUTION {
            return Err(GeometryError::InvalidGrid(format!(
                "resolution {} exceeds the supported maximum {MAX_RESOLUTION}",
                self.resolution
            )));
        }
        if !(self.extent_cm.is_finite() && self.extent_cm > 0.0) {
            return Err(GeometryError::InvalidGrid(format!(
                "physical extent must be positive, got {}",
                self.extent_cm
            )));
        }
        Ok(())
    }

    /// log2 of the resolution: the octree depth and the width of one
    /// coordinate field in bits.
    pub fn depth(&self) -> u32 {
        self.resolution.trailing_zeros()
    }

    pub fn cell_count(&self) -> usize {
        let r = self.resolution as usize;
        r * r * r
    }

    pub fn voxel_edge_cm(&self) -> f64 {
        self.extent_cm / self.resolution as f64
    }

    pub fn voxel_volume_cm3(&self) -> f64 {
        self.voxel_edge_cm().powi(3)
    }

    /// Center of a cell in environment coordinates (cm), origin at the
    /// grid's minimum corner.
    pub fn cell_center(&self, c: VoxelCoord) -> [f64; 3] {
        let e = self.voxel_edge_cm();
        [
            (c.x as f64 + 0.5) * e,
            (c.y as f64 + 0.5) * e,
            (c.z as f64 + 0.5) * e,
        ]
    }

    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        let r = self.resolution as i64;
        (0..r).contains(&x) && (0..r).contains(&y) && (0..r).contains(&z)
    }

    pub fn coord(&self, x: i64, y: i64, z: i64) -> Result<VoxelCoord, GeometryError> {
        if self.contains(x, y, z) {
            Ok(VoxelCoord::new(x as u16, y as u16, z as u16))
        } else {
            Err(GeometryError::OutOfBounds { x, y, z, resolution: self.resolution })
        }
    }

    /// Row-major index with z fastest; iterating indices in order visits
    /// cells in lexicographic `(x, y, z)` order.
    #[inline]
    pub(crate) fn lex_index(&self, c: VoxelCoord) -> usize {
        let r = self.resolution as usize;
        (c.x as usize * r + c.y as usize) * r + c.z as usize
    }

    #[inline]
    pub(crate) fn coord_at_lex(&self, i: usize) -> VoxelCoord {
        let r = self.resolution as usize;
        VoxelCoord::new((i / (r * r)) as u16, ((i / r) % r) as u16, (i % r) as u16)
    }

    /// Index with x fastest, used by the packed bitmap format and the
    /// flattened-octree layout.
    #[inline]
    pub fn x_fastest_index(&self, c: VoxelCoord) -> usize {
        let r = self.resolution as usize;
        (c.z as usize * r + c.y as usize) * r + c.x as usize
    }

    #[inline]
    pub fn from_x_fastest_index(&self, i: usize) -> VoxelCoord {
        let r = self.resolution as usize;
        VoxelCoord::new((i % r) as u16, ((i / r) % r) as u16, (i / (r * r)) as u16)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^3 @ {} cm", self.resolution, self.extent_cm)
    }
}

/// Integer cell indices. Ordering is lexicographic on `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoxelCoord {
    pub x: u16,
    pub y: u16,
    pub z: u16,
}

impl VoxelCoord {
    pub const fn new(x: u16, y: u16, z: u16) -> Self {
        Self { x, y, z }
    }

    pub fn get(&self, axis: usize) -> u16 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn set(&mut self, axis: usize, v: u16) {
        match axis {
            0 => self.x = v,
            1 => self.y = v,
            2 => self.z = v,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

impl fmt::Display for VoxelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}
