use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;

use super::flip::{BitKey, FlipDecoder};
use super::FiError;
use crate::cdm::{encode, structure_bits, CdmKind};
use crate::geometry::{exposed_surface_area, GridSpec, VoxelCoord, VoxelSet};
use crate::motion::MotionSet;

pub const CEF_REPORT_MAGIC: &[u8; 8] = b"CEFREPT1";

/// One bit with a non-empty critical space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitCef {
    pub bit: u32,
    pub cef: u64,
    /// Sorted lexicographically.
    pub critical: Vec<VoxelCoord>,
}

/// Phase 1 result for one motion. Bits absent from `entries` have an empty
/// critical space and CEF 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionCef {
    pub motion_id: u32,
    pub n_bits: u32,
    pub structure_bits: u32,
    /// Set when the motion could not be encoded; such motions carry no bits.
    pub error: Option<String>,
    pub entries: Vec<BitCef>,
}

impl MotionCef {
    pub fn entry(&self, bit: u32) -> Option<&BitCef> {
        self.entries.binary_search_by_key(&bit, |e| e.bit).ok().map(|i| &self.entries[i])
    }
}

/// Read-only view of one bit of a [`CefReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitView<'a> {
    pub motion_id: u32,
    pub structure_id: u32,
    pub bit: u32,
    pub cef: u64,
    pub critical: &'a [VoxelCoord],
}

impl BitView<'_> {
    pub fn key(&self) -> BitKey {
        BitKey { motion_id: self.motion_id, bit: self.bit }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CefReport {
    pub kind: CdmKind,
    pub grid: GridSpec,
    pub motions: Vec<MotionCef>,
}

impl CefReport {
    pub fn total_bits(&self) -> u64 {
        self.motions.iter().map(|m| m.n_bits as u64).sum()
    }

    pub fn failed_motions(&self) -> impl Iterator<Item = &MotionCef> {
        self.motions.iter().filter(|m| m.error.is_some())
    }

    /// Every bit of every motion, motions in report order and bits ascending.
    pub fn bits(&self) -> impl Iterator<Item = BitView<'_>> {
        self.motions.iter().flat_map(|m| {
            let mut next = m.entries.iter().peekable();
            (0..m.n_bits).map(move |bit| {
                let e = next.next_if(|e| e.bit == bit);
                BitView {
                    motion_id: m.motion_id,
                    structure_id: bit / m.structure_bits.max(1),
                    bit,
                    cef: e.map_or(0, |e| e.cef),
                    critical: e.map_or(&[][..], |e| &e.critical[..]),
                }
            })
        })
    }

    /// Number of bits per CEF value.
    pub fn histogram(&self) -> BTreeMap<u64, u64> {
        let mut h = BTreeMap::new();
        let mut listed = 0u64;
        for e in self.motions.iter().flat_map(|m| &m.entries) {
            *h.entry(e.cef).or_insert(0) += 1;
            listed += 1;
        }
        let implicit = self.total_bits() - listed;
        if implicit > 0 {
            *h.entry(0).or_insert(0) += implicit;
        }
        h
    }

    pub fn zero_cef_fraction(&self) -> f64 {
        let total = self.total_bits();
        if total == 0 {
            return 0.0;
        }
        self.histogram().get(&0).copied().unwrap_or(0) as f64 / total as f64
    }

    /// Compact binary form, all integers little-endian:
    ///
    /// ```text
    /// magic "CEFREPT1" | kind u8 | resolution u32 | extent f64-bits u64 | n_motions u32
    /// per motion: motion_id u32 | n_bits u32 | structure_bits u32
    ///             | error_len u32 (0 = none) | error utf-8
    ///             | n_entries u32
    ///             | per entry: bit u32 | cef u64 | n_critical u32 | n × (x u16, y u16, z u16)
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CEF_REPORT_MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&self.grid.resolution.to_le_bytes());
        out.extend_from_slice(&self.grid.extent_cm.to_bits().to_le_bytes());
        out.extend_from_slice(&(self.motions.len() as u32).to_le_bytes());
        for m in &self.motions {
            out.extend_from_slice(&m.motion_id.to_le_bytes());
            out.extend_from_slice(&m.n_bits.to_le_bytes());
            out.extend_from_slice(&m.structure_bits.to_le_bytes());
            let err = m.error.as_deref().unwrap_or("").as_bytes();
            out.extend_from_slice(&(err.len() as u32).to_le_bytes());
            out.extend_from_slice(err);
            out.extend_from_slice(&(m.entries.len() as u32).to_le_bytes());
            for e in &m.entries {
                out.extend_from_slice(&e.bit.to_le_bytes());
                out.extend_from_slice(&e.cef.to_le_bytes());
                out.extend_from_slice(&(e.critical.len() as u32).to_le_bytes());
                for v in &e.critical {
                    for a in 0..3 {
                        out.extend_from_slice(&v.get(a).to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FiError> {
        let bad = |d: &str| FiError::Malformed { what: "CEF report", detail: d.into() };
        let mut r = ByteReader::new(bytes, "CEF report");
        if r.take(8)? != CEF_REPORT_MAGIC {
            return Err(bad("bad magic"));
        }
        let kind = CdmKind::from_code(r.u8()?).ok_or_else(|| bad("unknown kind"))?;
        let resolution = r.u32()?;
        let grid = GridSpec::new(resolution, f64::from_bits(r.u64()?))?;
        let n = r.u32()?;
        let mut motions = Vec::new();
        for _ in 0..n {
            let motion_id = r.u32()?;
            let n_bits = r.u32()?;
            let structure_bits = r.u32()?;
            let elen = r.u32()? as usize;
            let error = match elen {
                0 => None,
                _ => Some(String::from_utf8(r.take(elen)?.to_vec()).map_err(|_| bad("error text is not utf-8"))?),
            };
            let ne = r.u32()?;
            let mut entries = Vec::new();
            for _ in 0..ne {
                let bit = r.u32()?;
                let cef = r.u64()?;
                let nc = r.u32()?;
                let mut critical = Vec::new();
                for _ in 0..nc {
                    let c = grid.coord(r.u16()? as i64, r.u16()? as i64, r.u16()? as i64)?;
                    critical.push(c);
                }
                if bit >= n_bits {
                    return Err(bad("entry bit outside its motion"));
                }
                entries.push(BitCef { bit, cef, critical });
            }
            if entries.windows(2).any(|w| w[0].bit >= w[1].bit) {
                return Err(bad("entries must be strictly ascending by bit"));
            }
            motions.push(MotionCef { motion_id, n_bits, structure_bits, error, entries });
        }
        if !r.done() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { kind, grid, motions })
    }

    /// One row per bit: `motion_id,structure_id,bit_index,cef,critical_volume`,
    /// preceded by `#`-prefixed metadata lines.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(String, String)]) -> Result<(), FiError> {
        writeln!(w, "# kind={}", self.kind)?;
        writeln!(w, "# grid={}", self.grid)?;
        for (k, v) in metadata {
            writeln!(w, "# {k}={v}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["motion_id", "structure_id", "bit_index", "cef", "critical_volume"])?;
        for b in self.bits() {
            csv.write_record([
                b.motion_id.to_string(),
                b.structure_id.to_string(),
                b.bit.to_string(),
                b.cef.to_string(),
                b.critical.len().to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Phase 1: the CEF of every bit of every motion.
///
/// For each bit the image is flipped, the motion's own swept voxels are
/// queried, the voxels no longer detected form the critical space, and the
/// CEF is its exposed surface against the erroneous decoded set. Needs no
/// obstacle data. Motions that fail to encode are reported and skipped.
pub fn phase1_cef(motion_set: &MotionSet, kind: CdmKind) -> CefReport {
    let grid = motion_set.grid;
    let width = structure_bits(kind, &grid);
    let motions = motion_set
        .motions
        .par_iter()
        .map(|m| {
            let id = m.id as u32;
            let image = match encode(kind, id, &m.swept) {
                Ok(img) => img,
                Err(e) => {
                    return MotionCef { motion_id: id, n_bits: 0, structure_bits: width, error: Some(e.to_string()), entries: vec![] }
                }
            };
            let entries = motion_entries(&image, &m.swept);
            MotionCef { motion_id: id, n_bits: image.bits.len() as u32, structure_bits: width, error: None, entries }
        })
        .collect();
    CefReport { kind, grid, motions }
}

fn motion_entries(image: &crate::cdm::BitImage, swept: &VoxelSet) -> Vec<BitCef> {
    let dec = FlipDecoder::new(image);
    let mut entries = Vec::new();
    for bit in 0..image.bits.len() {
        let delta = dec.delta(bit);
        if delta.removed.is_empty() {
            continue;
        }
        let erroneous = delta.apply(swept);
        let critical = VoxelSet::from_coords(*swept.grid(), delta.removed.iter().copied()).expect("in grid");
        let cef = exposed_surface_area(&critical, &erroneous).expect("critical and erroneous sets are disjoint");
        entries.push(BitCef { bit: bit as u32, cef, critical: delta.removed });
    }
    entries
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FiError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(FiError::Malformed { what: self.what, detail: "truncated".into() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    pub(crate) fn u8(&mut self) -> Result<u8, FiError> {
        Ok(self.take(1)?[0])
    }
    pub(crate) fn u16(&mut self) -> Result<u16, FiError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub(crate) fn u32(&mut self) -> Result<u32, FiError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn u64(&mut self) -> Result<u64, FiError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn f64(&mut self) -> Result<f64, FiError> {
        Ok(f64::from_bits(self.u64()?))
    }
    pub(crate) fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{generate_motion_set, ArmSpec};

    fn small_set() -> MotionSet {
        let grid = GridSpec::new(8, 84.0).unwrap();
        generate_motion_set(&ArmSpec::desk_for_grid(&grid), &grid, 8, 10, 4).unwrap()
    }

    #[test]
    fn a4_critical_space_is_the_bit_voxel() {
        let ms = small_set();
        let report = phase1_cef(&ms, CdmKind::A4FlatOctree);
        for b in report.bits() {
            let v = ms.grid.from_x_fastest_index(b.bit as usize);
            let stored = ms.motions[b.motion_id as usize].swept.contains(v);
            if stored {
                assert_eq!(b.critical, &[v]);
            } else {
                assert!(b.critical.is_empty());
                assert_eq!(b.cef, 0);
            }
        }
    }

    #[test]
    fn a1_bits_always_lose_their_voxel() {
        let ms = small_set();
        let report = phase1_cef(&ms, CdmKind::A1Voxel);
        let n: usize = ms.motions.iter().map(|m| m.swept.len() * 9).sum();
        assert_eq!(report.total_bits() as usize, n);
        assert!(report.bits().all(|b| b.critical.len() == 1));
    }

    #[test]
    fn report_round_trips_and_counts() {
        let ms = small_set();
        for kind in CdmKind::ALL {
            let report = phase1_cef(&ms, kind);
            assert_eq!(CefReport::from_bytes(&report.to_bytes()).unwrap(), report);
            assert_eq!(report.bits().count() as u64, report.total_bits());
            assert_eq!(report.histogram().values().sum::<u64>(), report.total_bits());
            let mut csv = Vec::new();
            report.write_csv(&mut csv, &[("seed".into(), "4".into())]).unwrap();
            let text = String::from_utf8(csv).unwrap();
            assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count() as u64, report.total_bits() + 1);
        }
        assert!(CefReport::from_bytes(b"CEFREPT1").is_err());
    }

    #[test]
    fn failed_motion_is_reported_not_fatal() {
        let mut ms = small_set();
        ms.grid = GridSpec::new(2, 84.0).unwrap();
        for m in &mut ms.motions {
            m.swept = VoxelSet::from_coords(ms.grid, [VoxelCoord::new(0, 0, 0)]).unwrap();
        }
        let report = phase1_cef(&ms, CdmKind::A4FlatOctree);
        assert_eq!(report.failed_motions().count(), ms.motions.len());
        assert_eq!(report.total_bits(), 0);
    }
}
