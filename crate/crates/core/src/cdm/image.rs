use serde::{Deserialize, Serialize};

use super::{BitBuf, CdmError, CdmKind};
use crate::geometry::GridSpec;

pub const BIT_IMAGE_MAGIC: &[u8; 8] = b"CEFBIMG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureRole {
    Voxel,
    Box,
    OctreeNode,
    FlatWord,
}

impl StructureRole {
    fn code(self) -> u8 {
        match self {
            StructureRole::Voxel => 1,
            StructureRole::Box => 2,
            StructureRole::OctreeNode => 3,
            StructureRole::FlatWord => 4,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        [StructureRole::Voxel, StructureRole::Box, StructureRole::OctreeNode, StructureRole::FlatWord]
            .into_iter()
            .find(|r| r.code() == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructureSpan {
    pub structure_id: u32,
    pub role: StructureRole,
    pub bit_offset: u32,
    pub bit_length: u32,
}

impl StructureSpan {
    pub fn bits(&self) -> std::ops::Range<usize> {
        self.bit_offset as usize..(self.bit_offset + self.bit_length) as usize
    }
}

/// The stored bits of one motion in one storage layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BitImage {
    pub kind: CdmKind,
    pub motion_id: u32,
    pub grid: GridSpec,
    pub bits: BitBuf,
    pub directory: Vec<StructureSpan>,
}

impl BitImage {
    /// Structure holding bit `i`, found by binary search over the directory.
    pub fn structure_of(&self, i: usize) -> Option<&StructureSpan> {
        let idx = self.directory.partition_point(|s| (s.bit_offset as usize) <= i);
        let s = self.directory.get(idx.checked_sub(1)?)?;
        s.bits().contains(&i).then_some(s)
    }

    /// Serializes the image. All integers little-endian:
    ///
    /// ```text
    /// magic      8 bytes  "CEFBIMG1"
    /// kind       u8       1=A1 2=A2 3=A3 4=A4
    /// motion_id  u32
    /// resolution u32
    /// extent_cm  u64      (f64 bit pattern)
    /// n_spans    u32
    /// spans      n × { structure_id u32, role u8 (1 voxel, 2 box, 3 node, 4 word), bit_offset u32, bit_length u32 }
    /// n_bits     u64
    /// payload    ⌈n_bits/8⌉ bytes, bit i in byte i/8 under mask 0x80 >> (i%8)
    /// ```
    pub fn dump(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BIT_IMAGE_MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&self.motion_id.to_le_bytes());
        out.extend_from_slice(&self.grid.resolution.to_le_bytes());
        out.extend_from_slice(&self.grid.extent_cm.to_bits().to_le_bytes());
        out.extend_from_slice(&(self.directory.len() as u32).to_le_bytes());
        for s in &self.directory {
            out.extend_from_slice(&s.structure_id.to_le_bytes());
            out.push(s.role.code());
            out.extend_from_slice(&s.bit_offset.to_le_bytes());
            out.extend_from_slice(&s.bit_length.to_le_bytes());
        }
        out.extend_from_slice(&(self.bits.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.bits.to_bytes());
        out
    }

    pub fn load(bytes: &[u8]) -> Result<Self, CdmError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != BIT_IMAGE_MAGIC {
            return Err(CdmError::Malformed("bad magic".into()));
        }
        let kind = CdmKind::from_code(r.u8()?).ok_or_else(|| CdmError::Malformed("unknown kind code".into()))?;
        let motion_id = r.u32()?;
        let resolution = r.u32()?;
        let extent = f64::from_bits(r.u64()?);
        let grid = GridSpec::new(resolution, extent)?;
        let n = r.u32()? as usize;
        let mut directory = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let structure_id = r.u32()?;
            let role = StructureRole::from_code(r.u8()?).ok_or_else(|| CdmError::Malformed("unknown role code".into()))?;
            let bit_offset = r.u32()?;
            let bit_length = r.u32()?;
            directory.push(StructureSpan { structure_id, role, bit_offset, bit_length });
        }
        let n_bits = r.u64()? as usize;
        let payload = r.take(n_bits.div_ceil(8))?;
        let bits = BitBuf::from_bytes(payload, n_bits).ok_or_else(|| CdmError::Malformed("payload size".into()))?;
        if r.pos != bytes.len() {
            return Err(CdmError::Malformed("trailing bytes after payload".into()));
        }
        if directory.iter().any(|s| s.bit_offset as usize + s.bit_length as usize > n_bits) {
            return Err(CdmError::Malformed("structure span past the payload".into()));
        }
        Ok(Self { kind, motion_id, grid, bits, directory })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CdmError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CdmError::Malformed("truncated image".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CdmError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CdmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CdmError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
