//! Bit-accurate models of the four collision-detection storage layouts.
//!
//! | kind | structure | bits per structure |
//! |------|-----------|--------------------|
//! | A1 voxel | one cell `(x, y, z)` | `3·log2(r)` |
//! | A2 box | lo corner then hi corner | `6·log2(r)` |
//! | A3 octree | 8 × 2-bit octant status + 8-bit child base | 24 |
//! | A4 flattened octree | one occupancy bit per cell, x fastest | 64 per word |
//!
//! Decoding is total: any bit pattern, including one produced by a fault,
//! decodes to some voxel set following the corruption rules in [`codec`].

mod bits;
pub mod codec;
mod image;

pub use bits::BitBuf;
pub use codec::{bit_field, coord_bits, decode, encode, field_at, structure_bits, BitField, FieldKind, A3_ADDRESS_BITS, A3_NODE_BITS, A4_WORD_BITS};
pub use image::{BitImage, StructureRole, StructureSpan, BIT_IMAGE_MAGIC};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::geometry::{GeometryError, OctantStatus, VoxelSet};

#[derive(Debug, Error)]
pub enum CdmError {
    #[error("{kind} needs {required} {what} but the layout holds at most {available}")]
    Capacity { kind: CdmKind, what: &'static str, required: usize, available: usize },
    #[error("{kind} cannot encode this grid: {reason}")]
    UnsupportedGrid { kind: CdmKind, reason: String },
    #[error("bit index {index} outside an image of {len} bits")]
    BitOutOfRange { index: usize, len: usize },
    #[error("malformed bit image: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CdmKind {
    #[serde(rename = "A1")]
    A1Voxel,
    #[serde(rename = "A2")]
    A2Box,
    #[serde(rename = "A3")]
    A3Octree,
    #[serde(rename = "A4")]
    A4FlatOctree,
}

impl CdmKind {
    pub const ALL: [CdmKind; 4] = [CdmKind::A1Voxel, CdmKind::A2Box, CdmKind::A3Octree, CdmKind::A4FlatOctree];

    pub fn label(&self) -> &'static str {
        match self {
            CdmKind::A1Voxel => "A1",
            CdmKind::A2Box => "A2",
            CdmKind::A3Octree => "A3",
            CdmKind::A4FlatOctree => "A4",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            CdmKind::A1Voxel => 1,
            CdmKind::A2Box => 2,
            CdmKind::A3Octree => 3,
            CdmKind::A4FlatOctree => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for CdmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CdmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a1" | "voxel" => Ok(CdmKind::A1Voxel),
            "a2" | "box" => Ok(CdmKind::A2Box),
            "a3" | "octree" => Ok(CdmKind::A3Octree),
            "a4" | "flat" | "flat_octree" | "flattened_octree" => Ok(CdmKind::A4FlatOctree),
            other => Err(format!("unknown CDM kind {other:?} (expected A1, A2, A3 or A4)")),
        }
    }
}

/// Per-query-voxel collision flags, in the query set's iteration order.
pub type CollisionVector = Vec<bool>;

/// Entry `i` is true iff the `i`-th query voxel lies in the stored space.
pub fn detect_collisions(image: &BitImage, query: &VoxelSet) -> Result<CollisionVector, CdmError> {
    if image.grid != *query.grid() {
        return Err(GeometryError::GridMismatch { left: image.grid.to_string(), right: query.grid().to_string() }.into());
    }
    let stored = decode(image);
    Ok(query.iter().map(|v| stored.contains(v)).collect())
}

/// Copy of `image` with one bit inverted.
pub fn flip_bit(image: &BitImage, bit_index: usize) -> Result<BitImage, CdmError> {
    if bit_index >= image.bits.len() {
        return Err(CdmError::BitOutOfRange { index: bit_index, len: image.bits.len() });
    }
    let mut out = image.clone();
    out.bits.flip(bit_index);
    Ok(out)
}

/// How often each structure is read while checking `obstacles`.
///
/// A1, A2 and A4 read every structure for every obstacle voxel. A3 walks
/// the tree from the root towards each obstacle voxel and counts node visits.
pub fn access_counts(image: &BitImage, obstacles: &VoxelSet) -> Result<Vec<u64>, CdmError> {
    if image.grid != *obstacles.grid() {
        return Err(GeometryError::GridMismatch { left: image.grid.to_string(), right: obstacles.grid().to_string() }.into());
    }
    let mut counts = vec![0u64; image.directory.len()];
    match image.kind {
        CdmKind::A3Octree => {
            let nodes = codec::parse_nodes(image);
            for v in obstacles.iter() {
                let mut index = 0usize;
                let mut size = image.grid.resolution as u16;
                let mut origin = [0u16; 3];
                loop {
                    counts[index] += 1;
                    let half = size / 2;
                    let k = (0..3).fold(0usize, |acc, a| {
                        let inside_upper = v.get(a) >= origin[a] + half;
                        acc | ((inside_upper as usize) << a)
                    });
                    let node = &nodes[index];
                    if node.octants[k] != OctantStatus::Partial || half <= 1 {
                        break;
                    }
                    let rank = node.octants[..k].iter().filter(|&&s| s == OctantStatus::Partial).count();
                    index = ((node.child_base as usize) + rank) % nodes.len();
                    for (a, o) in origin.iter_mut().enumerate() {
                        if k >> a & 1 == 1 {
                            *o += half;
                        }
                    }
                    size = half;
                }
            }
        }
        _ => {
            let n = obstacles.len() as u64;
            counts.iter_mut().for_each(|c| *c = n);
        }
    }
    Ok(counts)
}
