//! Encoders and the total decoders for each layout.
//!
//! Corruption rules applied by [`decode`]:
//!
//! | kind | pattern | decodes as |
//! |------|---------|------------|
//! | A2 | `lo > hi` on any axis | empty box |
//! | A3 | status `11` | full |
//! | A3 | partial octant of single voxels | empty |
//! | A3 | child index `>=` node count | wraps modulo node count |
//!
//! A1 and A4 have no invalid patterns: every field value names a cell.

use super::{BitBuf, BitImage, CdmError, CdmKind, StructureRole, StructureSpan};
use crate::geometry::{box_cover, build_octree, decode_octree, GridSpec, OctantStatus, OctreeNode, VoxelCoord, VoxelSet};

pub const A3_NODE_BITS: u32 = 24;
pub const A3_ADDRESS_BITS: u32 = 8;
pub const A4_WORD_BITS: u32 = 64;
const A3_STATUS_BITS: u32 = 2;

/// Bits per coordinate field in the A1 and A2 layouts.
pub fn coord_bits(grid: &GridSpec) -> u32 {
    grid.depth()
}

/// Bits in one structure of `kind` on `grid`.
pub fn structure_bits(kind: CdmKind, grid: &GridSpec) -> u32 {
    match kind {
        CdmKind::A1Voxel => 3 * coord_bits(grid),
        CdmKind::A2Box => 6 * coord_bits(grid),
        CdmKind::A3Octree => A3_NODE_BITS,
        CdmKind::A4FlatOctree => A4_WORD_BITS,
    }
}

pub fn encode(kind: CdmKind, motion_id: u32, swept: &VoxelSet) -> Result<BitImage, CdmError> {
    let grid = *swept.grid();
    let w = coord_bits(&grid);
    let mut bits = BitBuf::new();
    let push_coord = |bits: &mut BitBuf, c: VoxelCoord| {
        for a in 0..3 {
            bits.push_field(c.get(a) as u64, w);
        }
    };
    let role = match kind {
        CdmKind::A1Voxel => {
            for v in swept.iter() {
                push_coord(&mut bits, v);
            }
            StructureRole::Voxel
        }
        CdmKind::A2Box => {
            for b in box_cover(swept)? {
                push_coord(&mut bits, b.lo);
                push_coord(&mut bits, b.hi);
            }
            StructureRole::Box
        }
        CdmKind::A3Octree => {
            let nodes = build_octree(swept, grid.depth())?;
            let available = 1usize << A3_ADDRESS_BITS;
            if nodes.len() > available {
                return Err(CdmError::Capacity { kind, what: "octree nodes", required: nodes.len(), available });
            }
            for n in &nodes {
                for s in n.octants {
                    let code = match s {
                        OctantStatus::Empty => 0b00,
                        OctantStatus::Partial => 0b01,
                        OctantStatus::Full => 0b10,
                    };
                    bits.push_field(code, A3_STATUS_BITS);
                }
                bits.push_field(n.child_base as u64, A3_ADDRESS_BITS);
            }
            StructureRole::OctreeNode
        }
        CdmKind::A4FlatOctree => {
            if !grid.cell_count().is_multiple_of(A4_WORD_BITS as usize) {
                return Err(CdmError::UnsupportedGrid {
                    kind,
                    reason: format!("{} cells do not fill whole 64-bit words (resolution must be at least 4)", grid.cell_count()),
                });
            }
            bits = BitBuf::zeros(grid.cell_count());
            for v in swept.iter() {
                bits.set(grid.x_fastest_index(v), true);
            }
            StructureRole::FlatWord
        }
    };
    let width = structure_bits(kind, &grid);
    let count = bits.len() / width as usize;
    if bits.len() > u32::MAX as usize {
        return Err(CdmError::Capacity { kind, what: "bits", required: bits.len(), available: u32::MAX as usize });
    }
    let directory = (0..count as u32)
        .map(|i| StructureSpan { structure_id: i, role, bit_offset: i * width, bit_length: width })
        .collect();
    Ok(BitImage { kind, motion_id, grid, bits, directory })
}

/// Voxel set represented by `image`, corrupted or not.
pub fn decode(image: &BitImage) -> VoxelSet {
    let grid = image.grid;
    let mut out = VoxelSet::new(grid);
    match image.kind {
        CdmKind::A1Voxel => {
            for s in &image.directory {
                out.insert_unchecked(read_coord(image, s.bit_offset as usize));
            }
        }
        CdmKind::A2Box => {
            let w = coord_bits(&grid) as usize;
            for s in &image.directory {
                let lo = read_coord(image, s.bit_offset as usize);
                let hi = read_coord(image, s.bit_offset as usize + 3 * w);
                out.fill_box(lo, hi).expect("decoded coordinates lie inside the grid");
            }
        }
        CdmKind::A3Octree => out = decode_octree(&parse_nodes(image), grid),
        CdmKind::A4FlatOctree => {
            for s in &image.directory {
                for i in s.bits() {
                    if image.bits.get(i) {
                        out.insert_unchecked(grid.from_x_fastest_index(i));
                    }
                }
            }
        }
    }
    out
}

fn read_coord(image: &BitImage, offset: usize) -> VoxelCoord {
    let w = coord_bits(&image.grid);
    let f = |k: usize| image.bits.read_field(offset + k * w as usize, w) as u16;
    VoxelCoord::new(f(0), f(1), f(2))
}

pub(crate) fn parse_nodes(image: &BitImage) -> Vec<OctreeNode> {
    image
        .directory
        .iter()
        .map(|s| {
            let base = s.bit_offset as usize;
            let mut octants = [OctantStatus::Empty; 8];
            for (k, o) in octants.iter_mut().enumerate() {
                *o = match image.bits.read_field(base + k * A3_STATUS_BITS as usize, A3_STATUS_BITS) {
                    0b00 => OctantStatus::Empty,
                    0b01 => OctantStatus::Partial,
                    _ => OctantStatus::Full,
                };
            }
            let child_base = image.bits.read_field(base + 16, A3_ADDRESS_BITS) as u32;
            OctreeNode { octants, child_base }
        })
        .collect()
}

/// Which field of which structure a bit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitField {
    pub structure_id: u32,
    pub field: FieldKind,
    /// Position within the field, 0 being the most significant bit.
    pub significance: u32,
    pub field_width: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldKind {
    /// Coordinate `axis` of a voxel (A1) or of a box corner (A2).
    Coord { corner: u8, axis: u8 },
    OctantStatus { octant: u8 },
    ChildBase,
    /// A4 occupancy bit; position in the word is its significance.
    Occupancy,
}

/// Field layout of bit `i`, or `None` outside every structure.
pub fn bit_field(image: &BitImage, i: usize) -> Option<BitField> {
    let s = image.structure_of(i)?;
    let (field, significance, field_width) = field_at(image.kind, &image.grid, (i - s.bit_offset as usize) as u32);
    Some(BitField { structure_id: s.structure_id, field, significance, field_width })
}

/// `(field, significance, field width)` of the bit at `offset` inside one
/// structure of `kind`. The layout depends only on the kind and the grid.
pub fn field_at(kind: CdmKind, grid: &GridSpec, offset: u32) -> (FieldKind, u32, u32) {
    match kind {
        CdmKind::A1Voxel | CdmKind::A2Box => {
            let w = coord_bits(grid);
            let f = offset / w;
            (FieldKind::Coord { corner: (f / 3) as u8, axis: (f % 3) as u8 }, offset % w, w)
        }
        CdmKind::A3Octree if offset < 16 => {
            (FieldKind::OctantStatus { octant: (offset / A3_STATUS_BITS) as u8 }, offset % A3_STATUS_BITS, A3_STATUS_BITS)
        }
        CdmKind::A3Octree => (FieldKind::ChildBase, offset - 16, A3_ADDRESS_BITS),
        CdmKind::A4FlatOctree => (FieldKind::Occupancy, offset, A4_WORD_BITS),
    }
}
