/// Fixed-length bit vector addressed from index 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitBuf {
    len: usize,
    words: Vec<u64>,
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let m = 1u64 << (i & 63);
        if v {
            self.words[i >> 6] |= m;
        } else {
            self.words[i >> 6] &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i >> 6] ^= 1u64 << (i & 63);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_field(&mut self, value: u64, width: u32) {
        for k in (0..width).rev() {
            let i = self.len;
            self.len += 1;
            if self.words.len() * 64 < self.len {
                self.words.push(0);
            }
            if value >> k & 1 == 1 {
                self.words[i >> 6] |= 1u64 << (i & 63);
            }
        }
    }

    /// Reads `width` bits starting at `offset` as an MSB-first integer.
    pub fn read_field(&self, offset: usize, width: u32) -> u64 {
        (0..width as usize).fold(0u64, |acc, k| acc << 1 | self.get(offset + k) as u64)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Packs bit `i` into byte `i / 8` under mask `0x80 >> (i % 8)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len.div_ceil(8)];
        for i in 0..self.len {
            if self.get(i) {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut b = Self::zeros(len);
        for i in 0..len {
            if bytes[i / 8] & (0x80 >> (i % 8)) != 0 {
                b.set(i, true);
            }
        }
        Some(b)
    }
}
