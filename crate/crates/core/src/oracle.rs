//! Brute-force reference implementations used to cross-check the fast paths.
//!
//! Nothing here goes through the production decoders, the exposed-surface
//! routine or the flip-delta machinery: the bit layouts are re-read from the
//! raw image bits into ordered sets and faces are counted cell by cell.

use rand::Rng;
use serde::Serialize;
use std::collections::BTreeSet;

use crate::cdm::{detect_collisions, encode, flip_bit, BitImage, CdmKind};
use crate::fi::{classify_delta, phase1_cef, BitKey, ErroneousSweptCache, FiError, Outcome};
use crate::geometry::VoxelSet;
use crate::motion::MotionSet;
use crate::seed::rng_for;

type Cell = [u16; 3];

/// Unsigned big-endian field of `width` bits starting at `offset`.
fn field(image: &BitImage, offset: usize, width: usize) -> u16 {
    (0..width).fold(0u16, |acc, i| (acc << 1) | image.bits.get(offset + i) as u16)
}

/// Cells represented by `image`, decoded straight from its bits.
pub fn oracle_decode(image: &BitImage) -> BTreeSet<Cell> {
    let r = image.grid.resolution as u16;
    let w = r.trailing_zeros() as usize;
    let n = image.bits.len();
    let mut out = BTreeSet::new();
    match image.kind {
        CdmKind::A1Voxel => {
            for s in (0..n).step_by(3 * w) {
                out.insert([field(image, s, w), field(image, s + w, w), field(image, s + 2 * w, w)]);
            }
        }
        CdmKind::A2Box => {
            for s in (0..n).step_by(6 * w) {
                let c: Vec<u16> = (0..6).map(|k| field(image, s + k * w, w)).collect();
                for x in c[0]..=c[3] {
                    for y in c[1]..=c[4] {
                        for z in c[2]..=c[5] {
                            out.insert([x, y, z]);
                        }
                    }
                }
            }
        }
        CdmKind::A3Octree => {
            let nodes = n / 24;
            if nodes > 0 {
                walk(image, nodes, 0, [0, 0, 0], r, &mut out);
            }
        }
        CdmKind::A4FlatOctree => {
            for i in (0..n).filter(|&i| image.bits.get(i)) {
                let i = i as u32;
                let r = r as u32;
                out.insert([(i % r) as u16, (i / r % r) as u16, (i / (r * r)) as u16]);
            }
        }
    }
    out
}

fn walk(image: &BitImage, nodes: usize, node: usize, origin: Cell, size: u16, out: &mut BTreeSet<Cell>) {
    let half = size / 2;
    let base = node * 24;
    let child_base = field(image, base + 16, 8) as usize;
    let mut partial_seen = 0;
    for k in 0..8 {
        let o = [
            origin[0] + if k & 1 == 1 { half } else { 0 },
            origin[1] + if k & 2 == 2 { half } else { 0 },
            origin[2] + if k & 4 == 4 { half } else { 0 },
        ];
        match field(image, base + 2 * k, 2) {
            0 => {}
            1 => {
                let child = (child_base + partial_seen) % nodes;
                partial_seen += 1;
                if half >= 2 {
                    walk(image, nodes, child, o, half, out);
                }
            }
            _ => {
                for x in o[0]..o[0] + half {
                    for y in o[1]..o[1] + half {
                        for z in o[2]..o[2] + half {
                            out.insert([x, y, z]);
                        }
                    }
                }
            }
        }
    }
}

/// Faces of `critical` cells whose neighbour is neither critical nor in
/// `erroneous`; neighbours outside the `r`-cube count as exposed.
pub fn oracle_exposed_faces(critical: &BTreeSet<Cell>, erroneous: &BTreeSet<Cell>, r: u16) -> u64 {
    let mut faces = 0;
    for c in critical {
        for axis in 0..3 {
            for step in [-1i32, 1] {
                let v = c[axis] as i32 + step;
                if v < 0 || v >= r as i32 {
                    faces += 1;
                    continue;
                }
                let mut n = *c;
                n[axis] = v as u16;
                if !critical.contains(&n) && !erroneous.contains(&n) {
                    faces += 1;
                }
            }
        }
    }
    faces
}

/// `(critical space, CEF)` of every bit of `image`.
pub fn oracle_bit_cefs(image: &BitImage) -> Vec<(BTreeSet<Cell>, u64)> {
    let stored = oracle_decode(image);
    (0..image.bits.len())
        .map(|b| {
            let mut faulty = image.clone();
            faulty.bits.flip(b);
            let er = oracle_decode(&faulty);
            let critical: BTreeSet<Cell> = stored.difference(&er).copied().collect();
            let cef = oracle_exposed_faces(&critical, &er, image.grid.resolution as u16);
            (critical, cef)
        })
        .collect()
}

/// Outcome of one oracle comparison campaign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub check: &'static str,
    pub kind: CdmKind,
    pub checked: u64,
    pub mismatch_count: u64,
    /// The first few mismatches, human readable.
    pub mismatches: Vec<String>,
}

impl OracleReport {
    fn new(check: &'static str, kind: CdmKind) -> Self {
        Self { check, kind, checked: 0, mismatch_count: 0, mismatches: Vec::new() }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.mismatch_count += 1;
            if self.mismatches.len() < 20 {
                self.mismatches.push(detail());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatch_count == 0 && self.checked > 0
    }
}

/// Compares [`phase1_cef`] against [`oracle_bit_cefs`] bit by bit.
pub fn verify_phase1(motion_set: &MotionSet, kind: CdmKind) -> OracleReport {
    let report = phase1_cef(motion_set, kind);
    let mut out = OracleReport::new("phase1_cef", kind);
    for (m, mc) in motion_set.motions.iter().zip(&report.motions) {
        let image = match encode(kind, m.id as u32, &m.swept) {
            Ok(i) => i,
            Err(e) => {
                out.record(mc.error.is_some(), || format!("motion {}: encode failed ({e}) but phase 1 reported bits", m.id));
                continue;
            }
        };
        let swept: BTreeSet<Cell> = m.swept.iter().map(|v| [v.x, v.y, v.z]).collect();
        out.record(oracle_decode(&image) == swept, || format!("motion {}: error-free decode differs from the swept set", m.id));
        out.record(mc.n_bits as usize == image.bits.len(), || format!("motion {}: bit count differs", m.id));
        for (b, (critical, cef)) in oracle_bit_cefs(&image).into_iter().enumerate() {
            let got = mc.entry(b as u32);
            let ok = match got {
                None => critical.is_empty(),
                Some(e) => {
                    e.cef == cef && e.critical.iter().map(|v| [v.x, v.y, v.z]).collect::<BTreeSet<Cell>>() == critical
                }
            };
            out.record(ok, || {
                format!(
                    "motion {} bit {b}: phase 1 {:?}, oracle cef {cef} with {} critical cells",
                    m.id,
                    got.map(|e| (e.cef, e.critical.len())),
                    critical.len()
                )
            });
        }
    }
    out
}

/// Checks the cached-delta classification against a full simulation on
/// `pairs` random (bit, scenario) pairs: flip the stored bit, run collision
/// detection on the corrupted image, and classify from the oracle decode.
pub fn verify_fast_path(
    motion_set: &MotionSet,
    kind: CdmKind,
    scenarios: &[VoxelSet],
    pairs: usize,
    seed: u64,
) -> Result<OracleReport, FiError> {
    if scenarios.is_empty() {
        return Err(FiError::Invalid("fast-path verification needs scenarios".into()));
    }
    let images: Vec<BitImage> = motion_set
        .motions
        .iter()
        .filter_map(|m| encode(kind, m.id as u32, &m.swept).ok())
        .filter(|i| !i.bits.is_empty())
        .collect();
    if images.is_empty() {
        return Err(FiError::Invalid(format!("no motion of the set encodes under {kind}")));
    }
    let mut rng = rng_for(seed, &format!("oracle/pairs/{kind}"), 0);
    let picks: Vec<(usize, u32, usize)> = (0..pairs)
        .map(|_| {
            let i = rng.gen_range(0..images.len());
            let b = rng.gen_range(0..images[i].bits.len()) as u32;
            (i, b, rng.gen_range(0..scenarios.len()))
        })
        .collect();
    let keys: Vec<BitKey> = picks.iter().map(|&(i, bit, _)| BitKey { motion_id: images[i].motion_id, bit }).collect();
    let cache = ErroneousSweptCache::build(motion_set, kind, &keys)?;
    let mut out = OracleReport::new("fast_path", kind);
    for (&(i, bit, s), key) in picks.iter().zip(&keys) {
        let image = &images[i];
        let ef = &motion_set.motions[image.motion_id as usize].swept;
        let obstacles = &scenarios[s];
        let delta = cache.get(*key).ok_or(FiError::CacheMiss { motion_id: key.motion_id, bit })?;
        let fast = classify_delta(ef, delta, obstacles);

        let faulty = flip_bit(image, bit as usize)?;
        let before = detect_collisions(image, obstacles)?;
        let after = detect_collisions(&faulty, obstacles)?;
        let silent = before.iter().any(|&c| c) && !after.iter().any(|&c| c);
        let stored = oracle_decode(image);
        let er = oracle_decode(&faulty);
        let obs: BTreeSet<Cell> = obstacles.iter().map(|v| [v.x, v.y, v.z]).collect();
        let hit_before: BTreeSet<&Cell> = stored.intersection(&obs).collect();
        let hit_after: BTreeSet<&Cell> = er.intersection(&obs).collect();
        let slow = if silent {
            Outcome::Sdcc
        } else if er == stored {
            Outcome::Masked
        } else if hit_before.is_subset(&hit_after) && hit_before != hit_after {
            Outcome::FalsePositiveOnly
        } else {
            Outcome::Benign
        };
        out.record(fast == slow, || format!("motion {} bit {bit} scenario {s}: fast {fast:?}, simulated {slow:?}", image.motion_id));
    }
    Ok(out)
}
