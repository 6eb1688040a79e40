use super::{GeometryError, VoxelSet, FACE_OFFSETS};

/// Number of voxel faces of `critical` that an obstacle could touch.
///
/// A face counts when the cell across it is neither critical itself nor part
/// of the remaining (erroneous) swept space. Faces on the grid boundary count.
/// This is the collision exposure factor in units of one voxel face.
pub fn exposed_surface_area(critical: &VoxelSet, erroneous_swept: &VoxelSet) -> Result<u64, GeometryError> {
    critical.same_grid(erroneous_swept)?;
    let overlap = critical.intersection_len(erroneous_swept)?;
    if overlap > 0 {
        return Err(GeometryError::Overlap { count: overlap });
    }
    Ok(count_exposed(critical, Some(erroneous_swept)))
}

/// `(faces exposed to empty space, voxel count)`.
pub fn surface_and_volume(cells: &VoxelSet) -> (u64, u64) {
    (count_exposed(cells, None), cells.len() as u64)
}

fn count_exposed(cells: &VoxelSet, blocking: Option<&VoxelSet>) -> u64 {
    let mut faces = 0u64;
    for c in cells.iter() {
        for (dx, dy, dz) in FACE_OFFSETS {
            let (x, y, z) = (c.x as i64 + dx as i64, c.y as i64 + dy as i64, c.z as i64 + dz as i64);
            let hidden = cells.contains_signed(x, y, z)
                || blocking.is_some_and(|b| b.contains_signed(x, y, z));
            if !hidden {
                faces += 1;
            }
        }
    }
    faces
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridSpec, VoxelCoord};

    fn g(r: u32) -> GridSpec {
        GridSpec::new(r, r as f64).unwrap()
    }

    #[test]
    fn empty_critical_is_zero() {
        let grid = g(8);
        let swept = VoxelSet::from_box(grid, VoxelCoord::new(1, 1, 1), VoxelCoord::new(3, 3, 3)).unwrap();
        assert_eq!(exposed_surface_area(&VoxelSet::new(grid), &swept).unwrap(), 0);
    }

    #[test]
    fn single_voxel_with_one_swept_neighbour() {
        let grid = g(8);
        let critical = VoxelSet::from_coords(grid, [VoxelCoord::new(3, 3, 3)]).unwrap();
        let swept = VoxelSet::from_coords(grid, [VoxelCoord::new(3, 4, 3)]).unwrap();
        assert_eq!(exposed_surface_area(&critical, &swept).unwrap(), 5);
    }

    #[test]
    fn boundary_faces_are_exposed() {
        let grid = g(4);
        let critical = VoxelSet::from_coords(grid, [VoxelCoord::new(0, 0, 0)]).unwrap();
        assert_eq!(exposed_surface_area(&critical, &VoxelSet::new(grid)).unwrap(), 6);
    }

    #[test]
    fn errors() {
        let a = VoxelSet::from_coords(g(4), [VoxelCoord::new(0, 0, 0)]).unwrap();
        let b = VoxelSet::new(g(8));
        assert!(matches!(exposed_surface_area(&a, &b), Err(GeometryError::GridMismatch { .. })));
        assert!(matches!(exposed_surface_area(&a, &a), Err(GeometryError::Overlap { count: 1 })));
    }

    #[test]
    fn surface_and_volume_examples() {
        let grid = g(8);
        let one = VoxelSet::from_coords(grid, [VoxelCoord::new(2, 2, 2)]).unwrap();
        assert_eq!(surface_and_volume(&one), (6, 1));
        let pair = VoxelSet::from_box(grid, VoxelCoord::new(2, 2, 2), VoxelCoord::new(3, 2, 2)).unwrap();
        assert_eq!(surface_and_volume(&pair), (10, 2));
    }
}
