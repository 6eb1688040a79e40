use serde::{Deserialize, Serialize};

use super::{GeometryError, VoxelCoord, VoxelSet};

/// Axis-aligned box of cells with inclusive diagonal corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: VoxelCoord,
    pub hi: VoxelCoord,
}

impl BoxRegion {
    pub fn new(lo: VoxelCoord, hi: VoxelCoord) -> Option<Self> {
        (lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z).then_some(Self { lo, hi })
    }

    pub fn volume(&self) -> u64 {
        (0..3)
            .map(|a| (self.hi.get(a) - self.lo.get(a)) as u64 + 1)
            .product()
    }

    pub fn contains(&self, c: VoxelCoord) -> bool {
        (0..3).all(|a| self.lo.get(a) <= c.get(a) && c.get(a) <= self.hi.get(a))
    }
}

/// Covers `swept` exactly with greedily grown boxes.
///
/// Seeds at the lexicographically smallest uncovered cell, grows the box in
/// +x, then +y, then +z for as long as every cell of the new slab is in
/// `swept`, and repeats. Boxes may overlap cells already covered.
pub fn box_cover(swept: &VoxelSet) -> Result<Vec<BoxRegion>, GeometryError> {
    if swept.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let r = swept.grid().resolution as u16;
    let mut covered = VoxelSet::new(*swept.grid());
    let mut boxes = Vec::new();
    for seed in swept.iter() {
        if covered.contains(seed) {
            continue;
        }
        let mut b = BoxRegion { lo: seed, hi: seed };
        for axis in 0..3 {
            while b.hi.get(axis) + 1 < r && slab_filled(swept, &b, axis) {
                let v = b.hi.get(axis) + 1;
                b.hi.set(axis, v);
            }
        }
        covered.fill_box(b.lo, b.hi)?;
        boxes.push(b);
    }
    Ok(boxes)
}

/// Whether the one-cell-thick slab just past `b.hi` on `axis` is fully swept.
fn slab_filled(swept: &VoxelSet, b: &BoxRegion, axis: usize) -> bool {
    let mut lo = b.lo;
    let mut hi = b.hi;
    let next = b.hi.get(axis) + 1;
    lo.set(axis, next);
    hi.set(axis, next);
    for x in lo.x..=hi.x {
        for y in lo.y..=hi.y {
            for z in lo.z..=hi.z {
                if !swept.contains(VoxelCoord::new(x, y, z)) {
                    return false;
                }
            }
        }
    }
    true
}
