use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

use super::flip::FlipDecoder;
use super::phase1::ByteReader;
use super::stats::clopper_pearson_interval;
use super::{is_sdcc, FiBudget, FiError, FiMode};
use crate::cdm::{encode, BitImage, CdmKind};
use crate::geometry::VoxelSet;
use crate::motion::MotionSet;
use crate::seed::rng_for;

pub const EXHAUSTIVE_MAGIC: &[u8; 8] = b"CEFEXHS1";

/// Largest (bit, scenario) campaign [`exhaustive_fi`] accepts by default.
pub const DEFAULT_MAX_EXHAUSTIVE_RUNS: u64 = 1_000_000_000;

/// Per-bit SDC-C counts over every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    pub kind: CdmKind,
    pub budget: FiBudget,
    /// `(motion_id, n_bits)` in motion-set order.
    pub motions: Vec<(u32, u32)>,
    /// SDC-C scenario count per bit, motions concatenated in `motions` order.
    pub sdcc_counts: Vec<u32>,
    pub overall: f64,
}

impl ExhaustiveResult {
    pub fn scenario_count(&self) -> u64 {
        self.budget.scenario_count
    }

    /// Per-bit probabilities keyed by `(motion_id, bit)`.
    pub fn per_bit(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        let s = self.scenario_count() as f64;
        let mut off = 0usize;
        self.motions.iter().flat_map(move |&(m, n)| {
            let start = off;
            off += n as usize;
            (0..n).map(move |b| ((m, b), self.sdcc_counts[start + b as usize] as f64 / s))
        })
    }

    /// Little-endian binary form:
    ///
    /// ```text
    /// magic "CEFEXHS1" | kind u8 | overall f64 | budget (as in the SDC-C table)
    /// n_motions u32 | per motion: motion_id u32 | n_bits u32
    /// per bit, motions in order: sdcc count u32
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 4 * self.sdcc_counts.len());
        out.extend_from_slice(EXHAUSTIVE_MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&self.overall.to_bits().to_le_bytes());
        self.budget.write_bytes(&mut out);
        out.extend_from_slice(&(self.motions.len() as u32).to_le_bytes());
        for &(m, n) in &self.motions {
            out.extend_from_slice(&m.to_le_bytes());
            out.extend_from_slice(&n.to_le_bytes());
        }
        for c in &self.sdcc_counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FiError> {
        let bad = |d: &str| FiError::Malformed { what: "exhaustive result", detail: d.into() };
        let mut r = ByteReader::new(bytes, "exhaustive result");
        if r.take(8)? != EXHAUSTIVE_MAGIC {
            return Err(bad("bad magic"));
        }
        let kind = CdmKind::from_code(r.u8()?).ok_or_else(|| bad("unknown kind"))?;
        let overall = r.f64()?;
        let budget = FiBudget::read_bytes(&mut r)?;
        let n = r.u32()?;
        let mut motions = Vec::new();
        for _ in 0..n {
            motions.push((r.u32()?, r.u32()?));
        }
        let total: u64 = motions.iter().map(|&(_, n)| n as u64).sum();
        if total != budget.total_bits {
            return Err(bad("bit count disagrees with the budget"));
        }
        let sdcc_counts = (0..total).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if !r.done() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { kind, budget, motions, sdcc_counts, overall })
    }

    /// Probability lookup table, `map[motion_id][bit]`.
    pub fn probability_map(&self) -> BTreeMap<u32, Vec<f64>> {
        let mut map: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for ((m, _), p) in self.per_bit() {
            map.entry(m).or_default().push(p);
        }
        map
    }
}

fn encode_all(motion_set: &MotionSet, kind: CdmKind) -> Result<Vec<BitImage>, FiError> {
    motion_set
        .motions
        .par_iter()
        .map(|m| encode(kind, m.id as u32, &m.swept).map_err(FiError::from))
        .collect()
}

/// Classifies every (bit, scenario) pair.
///
/// Fails with [`FiError::Budget`] when `bits × scenarios` exceeds `max_runs`.
pub fn exhaustive_fi(
    motion_set: &MotionSet,
    kind: CdmKind,
    scenarios: &[VoxelSet],
    max_runs: u64,
) -> Result<ExhaustiveResult, FiError> {
    if scenarios.is_empty() {
        return Err(FiError::Invalid("exhaustive injection needs at least one scenario".into()));
    }
    let images = encode_all(motion_set, kind)?;
    let total_bits: u64 = images.iter().map(|i| i.bits.len() as u64).sum();
    let s = scenarios.len() as u64;
    let runs = total_bits * s;
    if runs > max_runs {
        return Err(FiError::Budget { runs, limit: max_runs });
    }
    let per_motion: Vec<Vec<u32>> = images
        .par_iter()
        .zip(&motion_set.motions)
        .map(|(img, m)| {
            let dec = FlipDecoder::new(img);
            let hits: Vec<usize> = scenarios.iter().map(|o| m.swept.intersection_len(o).expect("same grid")).collect();
            (0..img.bits.len())
                .map(|b| {
                    let delta = dec.delta(b);
                    if delta.removed.is_empty() {
                        return 0;
                    }
                    scenarios.iter().zip(&hits).filter(|(o, &h)| is_sdcc(h, &delta, o)).count() as u32
                })
                .collect()
        })
        .collect();
    let mut budget = FiBudget::new(FiMode::Exhaustive, 0, s, 0, total_bits);
    budget.record(runs);
    let motions = images.iter().map(|i| (i.motion_id, i.bits.len() as u32)).collect();
    let sdcc_counts: Vec<u32> = per_motion.into_iter().flatten().collect();
    let total: u64 = sdcc_counts.iter().map(|&c| c as u64).sum();
    let overall = if runs == 0 { 0.0 } else { total as f64 / runs as f64 };
    Ok(ExhaustiveResult { kind, budget, motions, sdcc_counts, overall })
}

/// Estimate from uniformly sampled (bit, scenario) pairs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UniformEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub samples: u64,
    pub sdcc: u64,
    pub with_replacement: bool,
    pub budget: FiBudget,
}

impl UniformEstimate {
    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// Samples `n_samples` (bit, scenario) pairs uniformly over the whole fault
/// space and reports the SDC-C fraction with a Clopper-Pearson interval.
///
/// Without replacement and `n_samples` equal to the space size, the estimate
/// equals the exhaustive overall probability exactly.
pub fn uniform_statistical_fi(
    motion_set: &MotionSet,
    kind: CdmKind,
    scenarios: &[VoxelSet],
    n_samples: u64,
    seed: u64,
    with_replacement: bool,
    confidence: f64,
) -> Result<UniformEstimate, FiError> {
    if n_samples == 0 {
        return Err(FiError::Invalid("uniform injection needs at least one sample".into()));
    }
    if scenarios.is_empty() {
        return Err(FiError::Invalid("uniform injection needs at least one scenario".into()));
    }
    let images = encode_all(motion_set, kind)?;
    let total_bits: u64 = images.iter().map(|i| i.bits.len() as u64).sum();
    let s = scenarios.len() as u64;
    let space = total_bits * s;
    if !with_replacement && n_samples > space {
        return Err(FiError::Invalid(format!("{n_samples} samples exceed the {space}-pair fault space")));
    }
    let mut rng = rng_for(seed, &format!("uniform/{kind}"), 0);
    let mut pairs: Vec<u64> = if with_replacement {
        (0..n_samples).map(|_| rng.gen_range(0..space)).collect()
    } else {
        sample(&mut rng, space as usize, n_samples as usize).into_iter().map(|i| i as u64).collect()
    };
    pairs.sort_unstable();

    // Bucket pairs by motion through the running bit offsets.
    let mut starts = Vec::with_capacity(images.len());
    let mut acc = 0u64;
    for img in &images {
        starts.push(acc);
        acc += img.bits.len() as u64;
    }
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); images.len()];
    for p in pairs {
        let (bit, sc) = (p / s, (p % s) as usize);
        let mi = starts.partition_point(|&st| st <= bit) - 1;
        buckets[mi].push(((bit - starts[mi]) as usize, sc));
    }
    let sdcc: u64 = buckets
        .par_iter()
        .enumerate()
        .map(|(mi, list)| {
            if list.is_empty() {
                return 0;
            }
            let dec = FlipDecoder::new(&images[mi]);
            let ef = &motion_set.motions[mi].swept;
            let mut count = 0u64;
            let mut i = 0;
            while i < list.len() {
                let bit = list[i].0;
                let delta = dec.delta(bit);
                while i < list.len() && list[i].0 == bit {
                    let o = &scenarios[list[i].1];
                    if !delta.removed.is_empty() && is_sdcc(ef.intersection_len(o).expect("same grid"), &delta, o) {
                        count += 1;
                    }
                    i += 1;
                }
            }
            count
        })
        .sum();
    let mut budget = FiBudget::new(FiMode::UniformStatistical, n_samples, s, seed, total_bits);
    budget.record(n_samples);
    let (ci_low, ci_high) = clopper_pearson_interval(sdcc, n_samples, confidence)?;
    Ok(UniformEstimate {
        p_hat: sdcc as f64 / n_samples as f64,
        ci_low,
        ci_high,
        confidence,
        samples: n_samples,
        sdcc,
        with_replacement,
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_scenarios, DensityClass};
    use crate::fi::phase1_cef;
    use crate::geometry::GridSpec;
    use crate::motion::{generate_motion_set, ArmSpec};

    fn instance() -> (MotionSet, Vec<VoxelSet>) {
        let grid = GridSpec::new(8, 84.0).unwrap();
        let ms = generate_motion_set(&ArmSpec::desk_for_grid(&grid), &grid, 8, 12, 6).unwrap();
        let sc = generate_scenarios(DensityClass::D3, 40, &grid, 3).unwrap();
        (ms, sc.scenarios.into_iter().map(|s| s.occupancy).collect())
    }

    #[test]
    fn exhaustive_bookkeeping() {
        let (ms, sc) = instance();
        for kind in CdmKind::ALL {
            let ex = exhaustive_fi(&ms, kind, &sc, u64::MAX).unwrap();
            assert_eq!(ex.budget.run_counter, ex.budget.total_bits * sc.len() as u64);
            let mean = ex.per_bit().map(|(_, p)| p).sum::<f64>() / ex.budget.total_bits as f64;
            assert!((mean - ex.overall).abs() < 1e-12);
            let report = phase1_cef(&ms, kind);
            let probs = ex.probability_map();
            for b in report.bits().filter(|b| b.critical.is_empty()) {
                assert_eq!(probs[&b.motion_id][b.bit as usize], 0.0);
            }
        }
    }

    #[test]
    fn budget_guard() {
        let (ms, sc) = instance();
        assert!(matches!(exhaustive_fi(&ms, CdmKind::A4FlatOctree, &sc, 10), Err(FiError::Budget { .. })));
    }

    #[test]
    fn binary_round_trip() {
        let (ms, sc) = instance();
        let ex = exhaustive_fi(&ms, CdmKind::A3Octree, &sc, u64::MAX).unwrap();
        let bytes = ex.to_bytes();
        assert_eq!(ExhaustiveResult::from_bytes(&bytes).unwrap(), ex);
        assert!(ExhaustiveResult::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn full_space_without_replacement_is_exact() {
        let (ms, sc) = instance();
        let ex = exhaustive_fi(&ms, CdmKind::A2Box, &sc, u64::MAX).unwrap();
        let space = ex.budget.exhaustive_runs();
        let u = uniform_statistical_fi(&ms, CdmKind::A2Box, &sc, space, 1, false, 0.95).unwrap();
        assert_eq!(u.p_hat, ex.overall);
    }

    #[test]
    fn empty_scenarios_estimate_zero() {
        let (ms, sc) = instance();
        let empty = vec![VoxelSet::new(*sc[0].grid()); 5];
        let u = uniform_statistical_fi(&ms, CdmKind::A1Voxel, &empty, 500, 2, true, 0.95).unwrap();
        assert_eq!(u.p_hat, 0.0);
        assert_eq!(u.budget.run_counter, 500);
    }
}
