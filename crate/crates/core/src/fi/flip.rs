use std::collections::BTreeMap;

use super::FiError;
use crate::cdm::{codec::coord_bits, decode, BitImage, CdmKind};
use crate::geometry::{VoxelCoord, VoxelSet};
use crate::motion::MotionSet;

/// Difference between the decoded image with one bit flipped and the
/// error-free decoded image.
///
/// `removed` is the critical space (stored voxels no longer detected);
/// `added` are false-positive voxels. Both are sorted and disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlipDelta {
    pub removed: Vec<VoxelCoord>,
    pub added: Vec<VoxelCoord>,
}

impl FlipDelta {
    pub fn is_masked(&self) -> bool {
        self.removed.is_empty() && self.added.is_empty()
    }

    /// The erroneous decoded set `error_free − removed + added`.
    pub fn apply(&self, error_free: &VoxelSet) -> VoxelSet {
        let mut out = error_free.clone();
        for &v in &self.removed {
            out.remove(v);
        }
        for &v in &self.added {
            out.insert(v).expect("delta voxels lie in the grid");
        }
        out
    }
}

/// Computes single-flip deltas of one image without re-decoding it whole.
///
/// A1 and A2 are unions of per-structure regions, so a flip only changes the
/// region of the structure it lands in and a voxel disappears only when no
/// other structure still covers it. A4 maps each bit to one cell. A3 flips can
/// rewire whole subtrees, so they fall back to a full decode.
pub struct FlipDecoder<'a> {
    image: &'a BitImage,
    base: VoxelSet,
    /// Number of structures covering each cell, in lexicographic order. A1/A2 only.
    cover: Vec<u16>,
}

impl<'a> FlipDecoder<'a> {
    pub fn new(image: &'a BitImage) -> Self {
        let base = decode(image);
        let grid = image.grid;
        let mut cover = Vec::new();
        if matches!(image.kind, CdmKind::A1Voxel | CdmKind::A2Box) {
            cover = vec![0u16; grid.cell_count()];
            for s in 0..image.directory.len() {
                let (lo, hi) = region(image, s, None);
                for_each_in(lo, hi, |v| cover[lex(&grid, v)] += 1);
            }
        }
        Self { image, base, cover }
    }

    pub fn error_free(&self) -> &VoxelSet {
        &self.base
    }

    pub fn delta(&self, bit: usize) -> FlipDelta {
        let image = self.image;
        let grid = image.grid;
        match image.kind {
            CdmKind::A1Voxel | CdmKind::A2Box => {
                let s = bit / image.directory[0].bit_length as usize;
                let (olo, ohi) = region(image, s, None);
                let (nlo, nhi) = region(image, s, Some(bit));
                let inside = |v: VoxelCoord, lo: VoxelCoord, hi: VoxelCoord| {
                    (0..3).all(|a| lo.get(a) <= v.get(a) && v.get(a) <= hi.get(a))
                };
                let mut removed = Vec::new();
                for_each_in(olo, ohi, |v| {
                    if self.cover[lex(&grid, v)] == 1 && !inside(v, nlo, nhi) {
                        removed.push(v);
                    }
                });
                let mut added = Vec::new();
                for_each_in(nlo, nhi, |v| {
                    if self.cover[lex(&grid, v)] == 0 {
                        added.push(v);
                    }
                });
                FlipDelta { removed, added }
            }
            CdmKind::A4FlatOctree => {
                let v = grid.from_x_fastest_index(bit);
                if image.bits.get(bit) {
                    FlipDelta { removed: vec![v], added: vec![] }
                } else {
                    FlipDelta { removed: vec![], added: vec![v] }
                }
            }
            CdmKind::A3Octree => {
                let mut flipped = image.clone();
                flipped.bits.flip(bit);
                let er = decode(&flipped);
                let removed = self.base.difference(&er).expect("same grid").to_vec();
                let added = er.difference(&self.base).expect("same grid").to_vec();
                FlipDelta { removed, added }
            }
        }
    }
}

fn lex(grid: &crate::geometry::GridSpec, v: VoxelCoord) -> usize {
    let r = grid.resolution as usize;
    (v.x as usize * r + v.y as usize) * r + v.z as usize
}

/// Corners of structure `s`, optionally with `flip` inverted first. An
/// inverted box yields `lo > hi` and iterates nothing.
fn region(image: &BitImage, s: usize, flip: Option<usize>) -> (VoxelCoord, VoxelCoord) {
    let w = coord_bits(&image.grid) as usize;
    let off = image.directory[s].bit_offset as usize;
    let field = |k: usize| {
        let start = off + k * w;
        let mut v = image.bits.read_field(start, w as u32);
        if let Some(b) = flip {
            if (start..start + w).contains(&b) {
                v ^= 1 << (w - 1 - (b - start));
            }
        }
        v as u16
    };
    let lo = VoxelCoord::new(field(0), field(1), field(2));
    match image.kind {
        CdmKind::A1Voxel => (lo, lo),
        _ => (lo, VoxelCoord::new(field(3), field(4), field(5))),
    }
}

fn for_each_in(lo: VoxelCoord, hi: VoxelCoord, mut f: impl FnMut(VoxelCoord)) {
    for x in lo.x..=hi.x {
        for y in lo.y..=hi.y {
            for z in lo.z..=hi.z {
                f(VoxelCoord::new(x, y, z));
            }
        }
    }
}

/// Identifies one bit of one motion's image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitKey {
    pub motion_id: u32,
    pub bit: u32,
}

/// Erroneous decoded sets, stored as deltas, for the bits Phase 2 touches.
#[derive(Debug, Clone, Default)]
pub struct ErroneousSweptCache {
    pub kind: Option<CdmKind>,
    entries: BTreeMap<BitKey, FlipDelta>,
}

impl ErroneousSweptCache {
    /// Encodes each referenced motion once and records the delta of every key.
    pub fn build(motion_set: &MotionSet, kind: CdmKind, keys: &[BitKey]) -> Result<Self, FiError> {
        use rayon::prelude::*;
        let mut by_motion: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for k in keys {
            by_motion.entry(k.motion_id).or_default().push(k.bit);
        }
        let groups: Vec<(u32, Vec<u32>)> = by_motion.into_iter().collect();
        let parts = groups
            .par_iter()
            .map(|(m, bits)| {
                let motion = motion_set
                    .motions
                    .get(*m as usize)
                    .ok_or_else(|| FiError::Invalid(format!("motion {m} is not in the motion set")))?;
                let image = crate::cdm::encode(kind, *m, &motion.swept)?;
                let dec = FlipDecoder::new(&image);
                bits.iter()
                    .map(|&b| {
                        if b as usize >= image.bits.len() {
                            return Err(FiError::Invalid(format!("bit {b} outside motion {m}")));
                        }
                        Ok((BitKey { motion_id: *m, bit: b }, dec.delta(b as usize)))
                    })
                    .collect::<Result<Vec<_>, FiError>>()
            })
            .collect::<Result<Vec<_>, FiError>>()?;
        Ok(Self { kind: Some(kind), entries: parts.into_iter().flatten().collect() })
    }

    pub fn get(&self, key: BitKey) -> Option<&FlipDelta> {
        self.entries.get(&key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
