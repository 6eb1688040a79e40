//! Voxel set file formats.
//!
//! Text: one `x,y,z` line per cell in lexicographic order, `\n` terminated.
//! Blank lines and lines starting with `#` are ignored when reading.
//!
//! Binary (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `b"CEFVOXS1"` |
//! | 4     | resolution `u32` |
//! | 8     | extent in cm, `f64` bits |
//! | ⌈r³/8⌉ | occupancy, cell `i = x + r*y + r²*z` at byte `i/8`, bit `i%8` (LSB first) |

use super::{GeometryError, GridSpec, VoxelCoord, VoxelSet};

pub const BITMAP_MAGIC: &[u8; 8] = b"CEFVOXS1";

pub fn to_text(set: &VoxelSet) -> String {
    let mut out = String::with_capacity(set.len() * 9);
    for c in set.iter() {
        out.push_str(&format!("{},{},{}\n", c.x, c.y, c.z));
    }
    out
}

pub fn from_text(grid: GridSpec, text: &str) -> Result<VoxelSet, GeometryError> {
    let mut set = VoxelSet::new(grid);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(GeometryError::Parse(format!("line {}: expected x,y,z", lineno + 1)));
        }
        let mut v = [0i64; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| GeometryError::Parse(format!("line {}: bad integer {p:?}", lineno + 1)))?;
        }
        let c = grid.coord(v[0], v[1], v[2])?;
        set.insert(c)?;
    }
    Ok(set)
}

pub fn to_bitmap(set: &VoxelSet) -> Vec<u8> {
    let grid = set.grid();
    let n = grid.cell_count();
    let mut out = Vec::with_capacity(20 + n.div_ceil(8));
    out.extend_from_slice(BITMAP_MAGIC);
    out.extend_from_slice(&grid.resolution.to_le_bytes());
    out.extend_from_slice(&grid.extent_cm.to_bits().to_le_bytes());
    let mut payload = vec![0u8; n.div_ceil(8)];
    for c in set.iter() {
        let i = grid.x_fastest_index(c);
        payload[i / 8] |= 1 << (i % 8);
    }
    out.extend_from_slice(&payload);
    out
}

pub fn from_bitmap(bytes: &[u8]) -> Result<VoxelSet, GeometryError> {
    if bytes.len() < 20 || &bytes[..8] != BITMAP_MAGIC {
        return Err(GeometryError::Parse("missing voxel bitmap header".into()));
    }
    let resolution = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let extent = f64::from_bits(u64::from_le_bytes(bytes[12..20].try_into().unwrap()));
    let grid = GridSpec::new(resolution, extent)?;
    let n = grid.cell_count();
    let payload = &bytes[20..];
    if payload.len() != n.div_ceil(8) {
        return Err(GeometryError::Parse(format!(
            "bitmap payload is {} bytes, expected {}",
            payload.len(),
            n.div_ceil(8)
        )));
    }
    let mut set = VoxelSet::new(grid);
    for i in 0..n {
        if payload[i / 8] >> (i % 8) & 1 == 1 {
            set.insert_unchecked(grid.from_x_fastest_index(i));
        }
    }
    Ok(set)
}

/// Parses one `x,y,z` triple; used by the CSV readers elsewhere.
pub fn parse_coord(grid: &GridSpec, s: &str) -> Result<VoxelCoord, GeometryError> {
    let parts: Vec<i64> = s
        .split(',')
        .map(|p| p.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|_| GeometryError::Parse(format!("bad coordinate {s:?}")))?;
    match parts.as_slice() {
        [x, y, z] => grid.coord(*x, *y, *z),
        _ => Err(GeometryError::Parse(format!("bad coordinate {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(8, 20.0).unwrap()
    }

    #[test]
    fn text_format_is_lexicographic_lines() {
        let s = VoxelSet::from_coords(grid(), [VoxelCoord::new(1, 0, 0), VoxelCoord::new(0, 3, 2)]).unwrap();
        assert_eq!(to_text(&s), "0,3,2\n1,0,0\n");
        assert!(from_text(grid(), "9,0,0\n").is_err());
        assert!(from_text(grid(), "1,2\n").is_err());
    }

    #[test]
    fn bitmap_layout_is_x_fastest() {
        let s = VoxelSet::from_coords(grid(), [VoxelCoord::new(1, 0, 0), VoxelCoord::new(0, 1, 0)]).unwrap();
        let bytes = to_bitmap(&s);
        assert_eq!(bytes.len(), 20 + 64);
        assert_eq!(bytes[20], 0b0000_0010);
        assert_eq!(bytes[21], 0b0000_0001);
        assert!(from_bitmap(&bytes[..30]).is_err());
    }

    proptest! {
        #[test]
        fn formats_round_trip(cells in proptest::collection::vec((0u16..8, 0u16..8, 0u16..8), 0..80)) {
            let s = VoxelSet::from_coords(grid(), cells.into_iter().map(|(x, y, z)| VoxelCoord::new(x, y, z))).unwrap();
            prop_assert_eq!(&from_text(grid(), &to_text(&s)).unwrap(), &s);
            prop_assert_eq!(&from_bitmap(&to_bitmap(&s)).unwrap(), &s);
        }
    }
}
