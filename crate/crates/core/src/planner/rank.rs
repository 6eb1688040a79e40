use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::PlanError;
use crate::cdm::{access_counts, encode, field_at, CdmKind};
use crate::fi::{BitKey, CefReport, ExhaustiveResult};
use crate::geometry::{box_cover, VoxelSet};
use crate::motion::MotionSet;
use crate::seed::rng_for;

/// Vulnerability score used to order structures for protection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Sum of bit CEFs.
    Cef,
    /// Sum of critical-space volumes.
    CsVolume,
    /// Bits MSB-first across all structures.
    BitPosition,
    /// Structure reads over a calibration batch.
    AccessFrequency,
    /// Voxel count of the stored box (A2 only).
    BoxVolume,
    UniformRandom,
    /// Sum of exact per-bit SDC-C probabilities from an exhaustive campaign.
    Ideal,
}

impl Heuristic {
    pub const ALL: [Heuristic; 7] = [
        Heuristic::Cef,
        Heuristic::CsVolume,
        Heuristic::BitPosition,
        Heuristic::AccessFrequency,
        Heuristic::BoxVolume,
        Heuristic::UniformRandom,
        Heuristic::Ideal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Heuristic::Cef => "cef",
            Heuristic::CsVolume => "cs_volume",
            Heuristic::BitPosition => "bit_position",
            Heuristic::AccessFrequency => "access_frequency",
            Heuristic::BoxVolume => "box_volume",
            Heuristic::UniformRandom => "uniform_random",
            Heuristic::Ideal => "ideal",
        }
    }

    /// Whether the heuristic can rank structures of `kind` at all.
    pub fn applies_to(&self, kind: CdmKind) -> bool {
        *self != Heuristic::BoxVolume || kind == CdmKind::A2Box
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Heuristic::ALL
            .into_iter()
            .find(|h| h.as_str() == norm || (norm == "uniform" && *h == Heuristic::UniformRandom))
            .ok_or_else(|| format!("unknown heuristic {s:?}"))
    }
}

/// One structure of one motion's image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StructureKey {
    pub motion_id: u32,
    pub structure_id: u32,
}

/// Ranked protection units, most vulnerable first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ordering {
    Structures(Vec<StructureKey>),
    /// Bit-granular ordering, used by [`Heuristic::BitPosition`].
    Bits(Vec<BitKey>),
}

/// Optional inputs some heuristics need.
#[derive(Debug, Clone, Copy, Default)]
pub struct AuxData<'a> {
    pub exhaustive: Option<&'a ExhaustiveResult>,
    /// Reads per structure, keyed by motion id. See [`access_frequency`].
    pub access_counts: Option<&'a BTreeMap<u32, Vec<u64>>>,
    /// Box voxel counts per structure, keyed by motion id. See [`box_volumes`].
    pub box_volumes: Option<&'a BTreeMap<u32, Vec<u64>>>,
    /// Seed of the `uniform_random` shuffle.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub heuristic: Heuristic,
    pub kind: CdmKind,
    pub structure_bits: u32,
    pub order: Ordering,
}

impl Ranking {
    pub fn unit_count(&self) -> usize {
        match &self.order {
            Ordering::Structures(v) => v.len(),
            Ordering::Bits(v) => v.len(),
        }
    }

    /// Units protected at `fraction`: `⌊fraction × units⌋`.
    pub fn protected_units(&self, fraction: f64) -> usize {
        let n = self.unit_count();
        (((fraction * n as f64) + 1e-9).floor() as usize).min(n)
    }

    /// Bits of the `i`-th ranked unit.
    pub fn unit_bits(&self, i: usize) -> Vec<BitKey> {
        match &self.order {
            Ordering::Structures(v) => {
                let s = v[i];
                let start = s.structure_id * self.structure_bits;
                (start..start + self.structure_bits).map(|bit| BitKey { motion_id: s.motion_id, bit }).collect()
            }
            Ordering::Bits(v) => vec![v[i]],
        }
    }

    pub fn plan(&self, fraction: f64) -> Result<ProtectionPlan, PlanError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(PlanError::Invalid(format!("fraction must be in [0, 1], got {fraction}")));
        }
        let units = self.protected_units(fraction);
        let mut protected: Vec<BitKey> = (0..units).flat_map(|i| self.unit_bits(i)).collect();
        protected.sort_unstable();
        Ok(ProtectionPlan { heuristic: self.heuristic, kind: self.kind, fraction, protected_units: units, protected })
    }
}

/// The bits protected when the top `fraction` of a ranking is hardened.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionPlan {
    pub heuristic: Heuristic,
    pub kind: CdmKind,
    pub fraction: f64,
    pub protected_units: usize,
    /// Sorted.
    pub protected: Vec<BitKey>,
}

impl ProtectionPlan {
    pub fn is_protected(&self, key: BitKey) -> bool {
        self.protected.binary_search(&key).is_ok()
    }
}

/// Orders every structure of `report` by descending `heuristic` score, ties
/// broken by `(motion_id, structure_id)` ascending.
pub fn rank_structures(heuristic: Heuristic, report: &CefReport, aux: &AuxData) -> Result<Ranking, PlanError> {
    let kind = report.kind;
    if !heuristic.applies_to(kind) {
        return Err(PlanError::Invalid(format!("heuristic {heuristic} only applies to A2, not {kind}")));
    }
    let sb = crate::cdm::structure_bits(kind, &report.grid);
    let ranking = |order| Ok(Ranking { heuristic, kind, structure_bits: sb, order });
    let structures: Vec<StructureKey> = report
        .motions
        .iter()
        .flat_map(|m| (0..m.n_bits / sb).map(move |s| StructureKey { motion_id: m.motion_id, structure_id: s }))
        .collect();

    if heuristic == Heuristic::BitPosition {
        let mut bits: Vec<(u32, BitKey)> = report
            .bits()
            .map(|b| (field_at(kind, &report.grid, b.bit % sb).1, b.key()))
            .collect();
        bits.sort_unstable();
        return ranking(Ordering::Bits(bits.into_iter().map(|(_, k)| k).collect()));
    }
    if heuristic == Heuristic::UniformRandom {
        let seed = aux.seed.ok_or(PlanError::MissingAux { heuristic, requirement: "a shuffle seed" })?;
        let mut order = structures;
        order.shuffle(&mut rng_for(seed, &format!("rank/uniform_random/{kind}"), 0));
        return ranking(Ordering::Structures(order));
    }

    // Index of each motion's first structure in `structures`.
    let mut first: BTreeMap<u32, usize> = BTreeMap::new();
    let mut acc = 0;
    for m in &report.motions {
        first.insert(m.motion_id, acc);
        acc += (m.n_bits / sb) as usize;
    }
    let mut scores = vec![0.0f64; structures.len()];
    match heuristic {
        Heuristic::Cef | Heuristic::CsVolume => {
            for m in &report.motions {
                let base = first[&m.motion_id];
                for e in &m.entries {
                    let v = if heuristic == Heuristic::Cef { e.cef as f64 } else { e.critical.len() as f64 };
                    scores[base + (e.bit / sb) as usize] += v;
                }
            }
        }
        Heuristic::AccessFrequency | Heuristic::BoxVolume => {
            let (table, requirement) = if heuristic == Heuristic::AccessFrequency {
                (aux.access_counts, "per-structure access counts from a calibration batch")
            } else {
                (aux.box_volumes, "per-box voxel counts")
            };
            let table = table.ok_or(PlanError::MissingAux { heuristic, requirement })?;
            for m in &report.motions {
                let n = (m.n_bits / sb) as usize;
                if n == 0 {
                    continue;
                }
                let row = table.get(&m.motion_id).filter(|r| r.len() == n).ok_or_else(|| {
                    PlanError::Invalid(format!("{heuristic} data for motion {} does not list its {n} structures", m.motion_id))
                })?;
                let base = first[&m.motion_id];
                for (s, &v) in row.iter().enumerate() {
                    scores[base + s] = v as f64;
                }
            }
        }
        Heuristic::Ideal => {
            let ex = aux.exhaustive.ok_or(PlanError::MissingAux { heuristic, requirement: "an exhaustive FI result" })?;
            if ex.kind != kind {
                return Err(PlanError::Invalid(format!("exhaustive result is for {}, report is for {kind}", ex.kind)));
            }
            let bits: BTreeMap<u32, u32> = report.motions.iter().map(|m| (m.motion_id, m.n_bits)).collect();
            if ex.motions.iter().any(|(m, n)| bits.get(m) != Some(n)) {
                return Err(PlanError::Invalid("exhaustive result and CEF report describe different images".into()));
            }
            for ((m, b), p) in ex.per_bit() {
                scores[first[&m] + (b / sb) as usize] += p;
            }
        }
        Heuristic::BitPosition | Heuristic::UniformRandom => unreachable!("handled above"),
    }
    let mut idx: Vec<usize> = (0..structures.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(structures[a].cmp(&structures[b])));
    ranking(Ordering::Structures(idx.into_iter().map(|i| structures[i]).collect()))
}

/// Reads of every structure, summed over `scenarios`, keyed by motion id.
/// Motions that cannot be encoded map to an empty list.
pub fn access_frequency(
    motion_set: &MotionSet,
    kind: CdmKind,
    scenarios: &[VoxelSet],
) -> Result<BTreeMap<u32, Vec<u64>>, PlanError> {
    motion_set
        .motions
        .par_iter()
        .map(|m| {
            let id = m.id as u32;
            let Ok(image) = encode(kind, id, &m.swept) else {
                return Ok((id, Vec::new()));
            };
            let mut total = vec![0u64; image.directory.len()];
            for o in scenarios {
                for (t, c) in total.iter_mut().zip(access_counts(&image, o)?) {
                    *t += c;
                }
            }
            Ok((id, total))
        })
        .collect()
}

/// Voxel count of every stored box, keyed by motion id.
pub fn box_volumes(motion_set: &MotionSet) -> BTreeMap<u32, Vec<u64>> {
    motion_set
        .motions
        .iter()
        .map(|m| {
            let vols = box_cover(&m.swept).map(|bs| bs.iter().map(|b| b.volume()).collect()).unwrap_or_default();
            (m.id as u32, vols)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fi::{BitCef, MotionCef};
    use crate::geometry::{GridSpec, VoxelCoord};

    fn report(kind: CdmKind, cefs: &[(u32, u64)], n_bits: u32) -> CefReport {
        let grid = GridSpec::new(16, 16.0).unwrap();
        let entries = cefs
            .iter()
            .map(|&(bit, cef)| BitCef { bit, cef, critical: vec![VoxelCoord::new(0, 0, 0); (cef % 5 + 1) as usize] })
            .collect();
        CefReport {
            kind,
            grid,
            motions: vec![MotionCef {
                motion_id: 0,
                n_bits,
                structure_bits: crate::cdm::structure_bits(kind, &grid),
                error: None,
                entries,
            }],
        }
    }

    fn structures(r: &Ranking) -> Vec<u32> {
        match &r.order {
            Ordering::Structures(v) => v.iter().map(|k| k.structure_id).collect(),
            Ordering::Bits(_) => panic!("bit ordering"),
        }
    }

    #[test]
    fn cef_orders_by_sum_with_id_ties() {
        // A1 on 16³ has 12-bit structures.
        let r = report(CdmKind::A1Voxel, &[(0, 2), (13, 10), (40, 3), (41, 3)], 48);
        let rk = rank_structures(Heuristic::Cef, &r, &AuxData::default()).unwrap();
        assert_eq!(structures(&rk), vec![1, 3, 0, 2]);
    }

    #[test]
    fn scaling_cef_keeps_the_order() {
        let cefs = [(0, 2), (13, 10), (25, 4), (40, 3)];
        let scaled: Vec<(u32, u64)> = cefs.iter().map(|&(b, c)| (b, c * 7)).collect();
        let a = rank_structures(Heuristic::Cef, &report(CdmKind::A1Voxel, &cefs, 48), &AuxData::default()).unwrap();
        let b = rank_structures(Heuristic::Cef, &report(CdmKind::A1Voxel, &scaled, 48), &AuxData::default()).unwrap();
        assert_eq!(a.order, b.order);
    }

    #[test]
    fn bit_position_is_msb_first_round_robin() {
        let r = report(CdmKind::A1Voxel, &[], 24);
        let rk = rank_structures(Heuristic::BitPosition, &r, &AuxData::default()).unwrap();
        let Ordering::Bits(bits) = &rk.order else { panic!() };
        let head: Vec<u32> = bits.iter().take(6).map(|k| k.bit).collect();
        // Significance 0 of x, y, z in structure 0, then structure 1.
        assert_eq!(head, vec![0, 4, 8, 12, 16, 20]);
    }

    #[test]
    fn missing_aux_is_named() {
        let r = report(CdmKind::A2Box, &[], 48);
        for h in [Heuristic::Ideal, Heuristic::AccessFrequency, Heuristic::BoxVolume, Heuristic::UniformRandom] {
            let e = rank_structures(h, &r, &AuxData::default()).unwrap_err();
            assert!(matches!(e, PlanError::MissingAux { .. }), "{h}: {e}");
        }
        let a1 = report(CdmKind::A1Voxel, &[], 48);
        assert!(matches!(rank_structures(Heuristic::BoxVolume, &a1, &AuxData::default()), Err(PlanError::Invalid(_))));
    }

    #[test]
    fn plan_protects_whole_top_structures() {
        let r = report(CdmKind::A1Voxel, &[(13, 10), (40, 3)], 48);
        let rk = rank_structures(Heuristic::Cef, &r, &AuxData::default()).unwrap();
        let plan = rk.plan(0.5).unwrap();
        assert_eq!(plan.protected_units, 2);
        assert_eq!(plan.protected.len(), 24);
        assert!(plan.is_protected(BitKey { motion_id: 0, bit: 12 }));
        assert!(plan.is_protected(BitKey { motion_id: 0, bit: 47 }));
        assert!(!plan.is_protected(BitKey { motion_id: 0, bit: 0 }));
        assert!(rk.plan(1.5).is_err());
    }

    #[test]
    fn heuristic_names_round_trip() {
        for h in Heuristic::ALL {
            assert_eq!(h.as_str().parse::<Heuristic>().unwrap(), h);
        }
        assert_eq!("uniform".parse::<Heuristic>().unwrap(), Heuristic::UniformRandom);
    }
}
