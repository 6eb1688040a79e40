use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::{GeometryError, GridSpec, VoxelCoord, VoxelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OctantStatus {
    Empty,
    Partial,
    Full,
}

/// One stored octree node: a status per octant plus the index of the first
/// child record. Octants are numbered in Morton order, `(z << 2) | (y << 1) | x`
/// where each bit selects the upper half on that axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OctreeNode {
    pub octants: [OctantStatus; 8],
    pub child_base: u32,
}

impl OctreeNode {
    pub fn partial_count(&self) -> usize {
        self.octants.iter().filter(|&&s| s == OctantStatus::Partial).count()
    }
}

/// Offset of octant `k` within a parent cube of edge `2 * half`.
#[inline]
pub(crate) fn octant_origin(origin: VoxelCoord, half: u16, k: usize) -> VoxelCoord {
    VoxelCoord::new(
        origin.x + if k & 1 != 0 { half } else { 0 },
        origin.y + if k & 2 != 0 { half } else { 0 },
        origin.z + if k & 4 != 0 { half } else { 0 },
    )
}

/// Builds the stored node array of the octree for `swept`.
///
/// Only the root and partially occupied cubes become nodes. Nodes are laid
/// out breadth-first and the children of one node's partial octants are
/// contiguous from its `child_base`.
pub fn build_octree(swept: &VoxelSet, depth: u32) -> Result<Vec<OctreeNode>, GeometryError> {
    let grid = *swept.grid();
    if grid.depth() != depth || grid.resolution != 1u32 << depth {
        return Err(GeometryError::DepthMismatch { resolution: grid.resolution, depth });
    }
    let table = PrefixSum::new(swept);
    let mut nodes = Vec::new();
    let mut queue = VecDeque::new();
    queue.push_back((VoxelCoord::new(0, 0, 0), grid.resolution as u16));
    // Index that the next enqueued child will occupy.
    let mut next_free = 1u32;
    while let Some((origin, size)) = queue.pop_front() {
        let half = size / 2;
        let volume = (half as u64).pow(3);
        let mut octants = [OctantStatus::Empty; 8];
        let mut partials = 0u32;
        for (k, status) in octants.iter_mut().enumerate() {
            let o = octant_origin(origin, half, k);
            let count = table.count(o, half);
            *status = if count == 0 {
                OctantStatus::Empty
            } else if count == volume {
                OctantStatus::Full
            } else {
                partials += 1;
                queue.push_back((o, half));
                OctantStatus::Partial
            };
        }
        let child_base = if partials > 0 { next_free } else { 0 };
        next_free += partials;
        nodes.push(OctreeNode { octants, child_base });
    }
    Ok(nodes)
}

/// Reconstructs the occupied cells from a node array.
///
/// Accepts arbitrary (possibly corrupted) nodes: a partial octant whose cells
/// are single voxels decodes as empty, and child indices wrap modulo the
/// node count. Recursion is bounded by the grid depth.
pub fn decode_octree(nodes: &[OctreeNode], grid: GridSpec) -> VoxelSet {
    let mut out = VoxelSet::new(grid);
    if !nodes.is_empty() {
        decode_node(nodes, 0, VoxelCoord::new(0, 0, 0), grid.resolution as u16, &mut out);
    }
    out
}

fn decode_node(nodes: &[OctreeNode], index: usize, origin: VoxelCoord, size: u16, out: &mut VoxelSet) {
    let node = &nodes[index];
    let half = size / 2;
    let mut rank = 0u64;
    for (k, status) in node.octants.iter().enumerate() {
        let o = octant_origin(origin, half, k);
        match status {
            OctantStatus::Empty => {}
            OctantStatus::Full => {
                let hi = VoxelCoord::new(o.x + half - 1, o.y + half - 1, o.z + half - 1);
                out.fill_box(o, hi).expect("octant lies inside the grid");
            }
            OctantStatus::Partial => {
                let child = ((node.child_base as u64 + rank) % nodes.len() as u64) as usize;
                rank += 1;
                if half > 1 {
                    decode_node(nodes, child, o, half, out);
                }
            }
        }
    }
}

/// Summed-volume table for O(1) occupancy counts of axis-aligned cubes.
struct PrefixSum {
    r: usize,
    sums: Vec<u32>,
}

impl PrefixSum {
    fn new(set: &VoxelSet) -> Self {
        let r = set.grid().resolution as usize;
        let n = r + 1;
        let mut sums = vec![0u32; n * n * n];
        let idx = |x: usize, y: usize, z: usize| (x * n + y) * n + z;
        for x in 1..=r {
            for y in 1..=r {
                for z in 1..=r {
                    let v = set.contains(VoxelCoord::new((x - 1) as u16, (y - 1) as u16, (z - 1) as u16)) as u32;
                    sums[idx(x, y, z)] = v + sums[idx(x - 1, y, z)] + sums[idx(x, y - 1, z)] + sums[idx(x, y, z - 1)]
                        - sums[idx(x - 1, y - 1, z)]
                        - sums[idx(x - 1, y, z - 1)]
                        - sums[idx(x, y - 1, z - 1)]
                        + sums[idx(x - 1, y - 1, z - 1)];
                }
            }
        }
        Self { r, sums }
    }

    fn count(&self, o: VoxelCoord, edge: u16) -> u64 {
        let n = self.r + 1;
        let at = |x: usize, y: usize, z: usize| self.sums[(x * n + y) * n + z] as i64;
        let (x0, y0, z0) = (o.x as usize, o.y as usize, o.z as usize);
        let (x1, y1, z1) = (x0 + edge as usize, y0 + edge as usize, z0 + edge as usize);
        let v = at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1) + at(x0, y1, z0)
            + at(x1, y0, z0)
            - at(x0, y0, z0);
        v as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(r: u32) -> GridSpec {
        GridSpec::new(r, r as f64).unwrap()
    }

    #[test]
    fn empty_and_full_spaces_are_single_nodes() {
        let g = grid(8);
        let empty = build_octree(&VoxelSet::new(g), 3).unwrap();
        assert_eq!(empty.len(), 1);
        assert!(empty[0].octants.iter().all(|&s| s == OctantStatus::Empty));
        let full = build_octree(&VoxelSet::full(g), 3).unwrap();
        assert_eq!(full.len(), 1);
        assert!(full[0].octants.iter().all(|&s| s == OctantStatus::Full));
    }

    #[test]
    fn depth_mismatch() {
        assert!(matches!(
            build_octree(&VoxelSet::new(grid(8)), 4),
            Err(GeometryError::DepthMismatch { resolution: 8, depth: 4 })
        ));
    }

    #[test]
    fn one_partial_octant_gives_two_nodes() {
        let g = grid(4);
        // Octant 2 (upper y half) holds a 1x1x2 column; everything else empty.
        let s = VoxelSet::from_coords(g, [VoxelCoord::new(0, 2, 0), VoxelCoord::new(0, 2, 1)]).unwrap();
        let nodes = build_octree(&s, 2).unwrap();
        assert_eq!(nodes.len(), 2);
        assert_eq!(nodes[0].octants[2], OctantStatus::Partial);
        assert_eq!(nodes[0].child_base, 1);
        assert_eq!(decode_octree(&nodes, g), s);
    }

    #[test]
    fn corrupted_leaf_partial_decodes_empty() {
        let g = grid(2);
        let mut node = OctreeNode { octants: [OctantStatus::Empty; 8], child_base: 0 };
        node.octants[0] = OctantStatus::Partial;
        node.octants[7] = OctantStatus::Full;
        let s = decode_octree(&[node], g);
        assert_eq!(s.to_vec(), vec![VoxelCoord::new(1, 1, 1)]);
    }
}
