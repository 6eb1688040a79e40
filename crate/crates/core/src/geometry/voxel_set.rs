use std::fmt;

use super::{GeometryError, GridSpec, VoxelCoord};

/// A set of occupied cells on one grid.
///
/// Backed by a dense bitmap over the grid in lexicographic order, so
/// iteration is always canonical and set algebra is word-parallel.
#[derive(Clone, PartialEq)]
pub struct VoxelSet {
    grid: GridSpec,
    words: Vec<u64>,
}

impl VoxelSet {
    pub fn new(grid: GridSpec) -> Self {
        let words = vec![0u64; grid.cell_count().div_ceil(64)];
        Self { grid, words }
    }

    pub fn full(grid: GridSpec) -> Self {
        let mut s = Self::new(grid);
        let n = grid.cell_count();
        for (i, w) in s.words.iter_mut().enumerate() {
            let lo = i * 64;
            let span = (n - lo).min(64);
            *w = if span == 64 { u64::MAX } else { (1u64 << span) - 1 };
        }
        s
    }

    pub fn from_coords<I>(grid: GridSpec, cells: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = VoxelCoord>,
    {
        let mut s = Self::new(grid);
        for c in cells {
            s.insert(c)?;
        }
        Ok(s)
    }

    /// All cells of the inclusive box `lo..=hi`, clipped to nothing if the
    /// box is inverted on any axis.
    pub fn from_box(grid: GridSpec, lo: VoxelCoord, hi: VoxelCoord) -> Result<Self, GeometryError> {
        let mut s = Self::new(grid);
        s.fill_box(lo, hi)?;
        Ok(s)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn insert(&mut self, c: VoxelCoord) -> Result<bool, GeometryError> {
        self.check(c)?;
        Ok(self.insert_unchecked(c))
    }

    #[inline]
    pub(crate) fn insert_unchecked(&mut self, c: VoxelCoord) -> bool {
        let i = self.grid.lex_index(c);
        let (w, m) = (i >> 6, 1u64 << (i & 63));
        let was = self.words[w] & m != 0;
        self.words[w] |= m;
        !was
    }

    pub fn remove(&mut self, c: VoxelCoord) -> bool {
        if !self.in_bounds(c) {
            return false;
        }
        let i = self.grid.lex_index(c);
        let (w, m) = (i >> 6, 1u64 << (i & 63));
        let was = self.words[w] & m != 0;
        self.words[w] &= !m;
        was
    }

    #[inline]
    pub fn contains(&self, c: VoxelCoord) -> bool {
        if !self.in_bounds(c) {
            return false;
        }
        let i = self.grid.lex_index(c);
        self.words[i >> 6] & (1u64 << (i & 63)) != 0
    }

    /// Membership test on signed coordinates; anything off-grid is absent.
    #[inline]
    pub fn contains_signed(&self, x: i64, y: i64, z: i64) -> bool {
        self.grid.contains(x, y, z) && self.contains(VoxelCoord::new(x as u16, y as u16, z as u16))
    }

    /// Inserts every cell of the inclusive box. Inverted boxes insert nothing.
    pub fn fill_box(&mut self, lo: VoxelCoord, hi: VoxelCoord) -> Result<(), GeometryError> {
        self.check(lo)?;
        self.check(hi)?;
        if lo.x > hi.x || lo.y > hi.y || lo.z > hi.z {
            return Ok(());
        }
        let r = self.grid.resolution as usize;
        for x in lo.x..=hi.x {
            for y in lo.y..=hi.y {
                let row = (x as usize * r + y as usize) * r;
                self.set_range(row + lo.z as usize, row + hi.z as usize + 1);
            }
        }
        Ok(())
    }

    fn set_range(&mut self, start: usize, end: usize) {
        let mut i = start;
        while i < end {
            let w = i >> 6;
            let bit = i & 63;
            let n = (64 - bit).min(end - i);
            let mask = if n == 64 { u64::MAX } else { ((1u64 << n) - 1) << bit };
            self.words[w] |= mask;
            i += n;
        }
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Cells in lexicographic `(x, y, z)` order.
    pub fn iter(&self) -> impl Iterator<Item = VoxelCoord> + '_ {
        let grid = self.grid;
        self.words.iter().enumerate().flat_map(move |(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(grid.coord_at_lex(wi * 64 + b))
            })
        })
    }

    pub fn to_vec(&self) -> Vec<VoxelCoord> {
        self.iter().collect()
    }

    pub fn same_grid(&self, other: &VoxelSet) -> Result<(), GeometryError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(GeometryError::GridMismatch {
                left: self.grid.to_string(),
                right: other.grid.to_string(),
            })
        }
    }

    pub fn union(&self, other: &VoxelSet) -> Result<VoxelSet, GeometryError> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &VoxelSet) -> Result<VoxelSet, GeometryError> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &VoxelSet) -> Result<VoxelSet, GeometryError> {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn union_with(&mut self, other: &VoxelSet) -> Result<(), GeometryError> {
        self.same_grid(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
        Ok(())
    }

    pub fn is_disjoint(&self, other: &VoxelSet) -> Result<bool, GeometryError> {
        self.same_grid(other)?;
        Ok(self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0))
    }

    pub fn is_subset(&self, other: &VoxelSet) -> Result<bool, GeometryError> {
        self.same_grid(other)?;
        Ok(self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0))
    }

    pub fn intersection_len(&self, other: &VoxelSet) -> Result<usize, GeometryError> {
        self.same_grid(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    fn zip_with(&self, other: &VoxelSet, f: impl Fn(u64, u64) -> u64) -> Result<VoxelSet, GeometryError> {
        self.same_grid(other)?;
        let words = self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect();
        Ok(VoxelSet { grid: self.grid, words })
    }

    fn in_bounds(&self, c: VoxelCoord) -> bool {
        let r = self.grid.resolution;
        (c.x as u32) < r && (c.y as u32) < r && (c.z as u32) < r
    }

    fn check(&self, c: VoxelCoord) -> Result<(), GeometryError> {
        if self.in_bounds(c) {
            Ok(())
        } else {
            Err(GeometryError::OutOfBounds {
                x: c.x as i64,
                y: c.y as i64,
                z: c.z as i64,
                resolution: self.grid.resolution,
            })
        }
    }
}

impl fmt::Debug for VoxelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VoxelSet")
            .field("grid", &self.grid)
            .field("cells", &self.iter().map(|c| (c.x, c.y, c.z)).collect::<Vec<_>>())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(r: u32) -> GridSpec {
        GridSpec::new(r, r as f64).unwrap()
    }

    #[test]
    fn iteration_is_lexicographic() {
        let g = grid(4);
        let cells = [
            VoxelCoord::new(3, 0, 0),
            VoxelCoord::new(0, 2, 1),
            VoxelCoord::new(0, 2, 0),
            VoxelCoord::new(1, 0, 3),
        ];
        let s = VoxelSet::from_coords(g, cells).unwrap();
        let mut sorted = cells.to_vec();
        sorted.sort();
        assert_eq!(s.to_vec(), sorted);
    }

    #[test]
    fn out_of_bounds_insert_fails() {
        let mut s = VoxelSet::new(grid(4));
        assert!(s.insert(VoxelCoord::new(4, 0, 0)).is_err());
        assert!(!s.contains(VoxelCoord::new(9, 9, 9)));
        assert!(!s.contains_signed(-1, 0, 0));
    }

    #[test]
    fn full_and_box_fill() {
        let g = grid(2);
        assert_eq!(VoxelSet::full(g).len(), 8);
        let g = grid(8);
        assert_eq!(VoxelSet::full(g).len(), 512);
        let b = VoxelSet::from_box(g, VoxelCoord::new(1, 2, 3), VoxelCoord::new(2, 4, 7)).unwrap();
        assert_eq!(b.len(), 2 * 3 * 5);
        let inverted = VoxelSet::from_box(g, VoxelCoord::new(3, 0, 0), VoxelCoord::new(2, 4, 7)).unwrap();
        assert!(inverted.is_empty());
    }

    #[test]
    fn set_algebra_rejects_mismatched_grids() {
        let a = VoxelSet::new(grid(4));
        let b = VoxelSet::new(grid(8));
        assert!(matches!(a.union(&b), Err(GeometryError::GridMismatch { .. })));
    }
}
