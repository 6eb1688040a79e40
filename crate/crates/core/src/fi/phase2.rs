use rand::seq::index::sample;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;

use super::flip::{BitKey, ErroneousSweptCache};
use super::phase1::{phase1_cef, ByteReader, CefReport};
use super::stats::wilson_interval;
use super::{is_sdcc, FiBudget, FiError, FiMode};
use crate::cdm::CdmKind;
use crate::geometry::VoxelSet;
use crate::motion::MotionSet;
use crate::seed::rng_for;

pub const SDCC_TABLE_MAGIC: &[u8; 8] = b"CEFSDCC1";

/// Phase 2 estimate for the bits sharing one CEF value.
#[derive(Debug, Clone, PartialEq)]
pub struct SdccGroup {
    pub cef: u64,
    /// All bits with this CEF.
    pub bits: u64,
    /// Bits whose critical space is empty. They cannot hide an obstacle, so
    /// they count as exact zeros and are never sampled. Only CEF 0 has them.
    pub empty_critical_bits: u64,
    pub sampled_bits: u64,
    /// `sampled_bits × scenarios`.
    pub trials: u64,
    pub sdcc: u64,
    pub p_hat: f64,
    /// Half-width of the Wilson interval on `p_hat` at the table's confidence.
    pub error_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdccTable {
    pub kind: CdmKind,
    pub confidence: f64,
    pub budget: FiBudget,
    /// Ascending by CEF.
    pub groups: Vec<SdccGroup>,
    /// Bit-weighted mean of the group estimates.
    pub overall: f64,
}

/// Sampled bits for one CEF group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSelection {
    pub cef: u64,
    pub bits: u64,
    pub empty_critical_bits: u64,
    pub population: u64,
    pub sampled: Vec<BitKey>,
}

/// Draws `min(m, population)` bits per CEF group without replacement.
///
/// The stream for a group is keyed by its CEF only, so the same bits are
/// drawn for every scenario batch of a run.
pub fn phase2_bit_selection(report: &CefReport, m: u64, seed: u64) -> Vec<GroupSelection> {
    let mut population: BTreeMap<u64, Vec<BitKey>> = BTreeMap::new();
    let mut listed = 0u64;
    for mc in &report.motions {
        for e in &mc.entries {
            population.entry(e.cef).or_default().push(BitKey { motion_id: mc.motion_id, bit: e.bit });
            listed += 1;
        }
    }
    let empty = report.total_bits() - listed;
    if empty > 0 {
        population.entry(0).or_default();
    }
    population
        .into_iter()
        .map(|(cef, keys)| {
            let take = (m as usize).min(keys.len());
            let mut rng = rng_for(seed, &format!("phase2/{}/{cef}", report.kind), 0);
            let mut idx = sample(&mut rng, keys.len(), take).into_vec();
            idx.sort_unstable();
            let empty_critical_bits = if cef == 0 { empty } else { 0 };
            GroupSelection {
                cef,
                bits: keys.len() as u64 + empty_critical_bits,
                empty_critical_bits,
                population: keys.len() as u64,
                sampled: idx.into_iter().map(|i| keys[i]).collect(),
            }
        })
        .collect()
}

/// Phase 2: estimates the SDC-C probability of every CEF group.
///
/// Every sampled bit is checked against every scenario with the cached
/// erroneous swept space of its motion. A group's estimate is its sampled
/// SDC-C rate scaled by the share of its bits that have a critical space
/// at all. The overall probability averages the group estimates weighted
/// by group size.
pub fn phase2_sdcc(
    report: &CefReport,
    cache: &ErroneousSweptCache,
    motion_set: &MotionSet,
    scenarios: &[VoxelSet],
    m: u64,
    seed: u64,
    confidence: f64,
) -> Result<SdccTable, FiError> {
    if m == 0 {
        return Err(FiError::Invalid("M must be at least 1".into()));
    }
    if scenarios.is_empty() {
        return Err(FiError::Invalid("phase 2 needs at least one scenario".into()));
    }
    let selection = phase2_bit_selection(report, m, seed);
    if selection.is_empty() {
        return Err(FiError::Invalid("the CEF report has no bits to group".into()));
    }
    let s = scenarios.len() as u64;
    let work: Vec<(usize, BitKey)> =
        selection.iter().enumerate().flat_map(|(g, sel)| sel.sampled.iter().map(move |&k| (g, k))).collect();
    let counts = work
        .par_iter()
        .map(|&(g, key)| {
            let delta = cache.get(key).ok_or(FiError::CacheMiss { motion_id: key.motion_id, bit: key.bit })?;
            let ef = &motion_set
                .motions
                .get(key.motion_id as usize)
                .ok_or_else(|| FiError::Invalid(format!("motion {} is not in the motion set", key.motion_id)))?
                .swept;
            let mut hits = 0u64;
            for o in scenarios {
                if is_sdcc(ef.intersection_len(o)?, delta, o) {
                    hits += 1;
                }
            }
            Ok((g, hits))
        })
        .collect::<Result<Vec<_>, FiError>>()?;
    let mut sdcc = vec![0u64; selection.len()];
    for (g, h) in counts {
        sdcc[g] += h;
    }

    let mut budget = FiBudget::new(FiMode::CefAware, m, s, seed, report.total_bits());
    budget.record(report.total_bits());
    let mut groups = Vec::with_capacity(selection.len());
    for (sel, &hits) in selection.iter().zip(&sdcc) {
        let sampled_bits = sel.sampled.len() as u64;
        let trials = sampled_bits * s;
        budget.record(trials);
        let share = if sel.bits == 0 { 0.0 } else { sel.population as f64 / sel.bits as f64 };
        let (p_hat, error_margin) = if trials == 0 {
            (0.0, 0.0)
        } else {
            let (lo, hi) = wilson_interval(hits, trials, confidence)?;
            (share * hits as f64 / trials as f64, share * (hi - lo) / 2.0)
        };
        groups.push(SdccGroup {
            cef: sel.cef,
            bits: sel.bits,
            empty_critical_bits: sel.empty_critical_bits,
            sampled_bits,
            trials,
            sdcc: hits,
            p_hat,
            error_margin,
        });
    }
    let mut table = SdccTable { kind: report.kind, confidence, budget, groups, overall: 0.0 };
    table.overall = table.recompute_overall();
    Ok(table)
}

/// Phase 1, cache construction and Phase 2 in one call.
pub fn run_cef_aware(
    motion_set: &MotionSet,
    kind: CdmKind,
    scenarios: &[VoxelSet],
    m: u64,
    seed: u64,
    confidence: f64,
) -> Result<(CefReport, SdccTable), FiError> {
    let report = phase1_cef(motion_set, kind);
    let keys: Vec<BitKey> = phase2_bit_selection(&report, m, seed).into_iter().flat_map(|g| g.sampled).collect();
    let cache = ErroneousSweptCache::build(motion_set, kind, &keys)?;
    let table = phase2_sdcc(&report, &cache, motion_set, scenarios, m, seed, confidence)?;
    Ok((report, table))
}

impl SdccTable {
    /// Bit-weighted mean of group estimates.
    pub fn recompute_overall(&self) -> f64 {
        let bits: u64 = self.groups.iter().map(|g| g.bits).sum();
        if bits == 0 {
            return 0.0;
        }
        self.groups.iter().map(|g| g.bits as f64 * g.p_hat).sum::<f64>() / bits as f64
    }

    pub fn group(&self, cef: u64) -> Option<&SdccGroup> {
        self.groups.binary_search_by_key(&cef, |g| g.cef).ok().map(|i| &self.groups[i])
    }

    /// Estimate attributed to a bit with this CEF; 0 for an unseen value.
    pub fn p_hat_for(&self, cef: u64) -> f64 {
        self.group(cef).map_or(0.0, |g| g.p_hat)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(String, String)]) -> Result<(), FiError> {
        let b = &self.budget;
        writeln!(w, "# kind={}", self.kind)?;
        writeln!(w, "# mode={} m={} scenarios={} seed={} total_bits={}", b.mode, b.m, b.scenario_count, b.seed, b.total_bits)?;
        writeln!(w, "# run_counter={} exhaustive_runs={} speedup={:.3}", b.run_counter, b.exhaustive_runs(), b.speedup())?;
        writeln!(w, "# overall={:e}", self.overall)?;
        for (k, v) in metadata {
            writeln!(w, "# {k}={v}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "cef",
            "bits",
            "empty_critical_bits",
            "sampled_bits",
            "trials",
            "sdcc",
            "p_hat",
            "confidence",
            "error_margin",
        ])?;
        for g in &self.groups {
            csv.write_record([
                g.cef.to_string(),
                g.bits.to_string(),
                g.empty_critical_bits.to_string(),
                g.sampled_bits.to_string(),
                g.trials.to_string(),
                g.sdcc.to_string(),
                format!("{:e}", g.p_hat),
                self.confidence.to_string(),
                format!("{:e}", g.error_margin),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Little-endian binary form:
    ///
    /// ```text
    /// magic "CEFSDCC1" | kind u8 | confidence f64 | overall f64
    /// budget: mode u8 (0 exhaustive, 1 uniform, 2 cef_aware) | m u64 | scenarios u64 | seed u64
    ///         | total_bits u64 | run_counter u64
    /// n_groups u32 | per group: cef u64 | bits u64 | empty_critical_bits u64 | sampled_bits u64
    ///                           | trials u64 | sdcc u64 | p_hat f64 | error_margin f64
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SDCC_TABLE_MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&self.confidence.to_bits().to_le_bytes());
        out.extend_from_slice(&self.overall.to_bits().to_le_bytes());
        self.budget.write_bytes(&mut out);
        out.extend_from_slice(&(self.groups.len() as u32).to_le_bytes());
        for g in &self.groups {
            for v in [g.cef, g.bits, g.empty_critical_bits, g.sampled_bits, g.trials, g.sdcc] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&g.p_hat.to_bits().to_le_bytes());
            out.extend_from_slice(&g.error_margin.to_bits().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FiError> {
        let bad = |d: &str| FiError::Malformed { what: "SDC-C table", detail: d.into() };
        let mut r = ByteReader::new(bytes, "SDC-C table");
        if r.take(8)? != SDCC_TABLE_MAGIC {
            return Err(bad("bad magic"));
        }
        let kind = CdmKind::from_code(r.u8()?).ok_or_else(|| bad("unknown kind"))?;
        let confidence = r.f64()?;
        let overall = r.f64()?;
        let budget = FiBudget::read_bytes(&mut r)?;
        let n = r.u32()?;
        let mut groups = Vec::new();
        for _ in 0..n {
            groups.push(SdccGroup {
                cef: r.u64()?,
                bits: r.u64()?,
                empty_critical_bits: r.u64()?,
                sampled_bits: r.u64()?,
                trials: r.u64()?,
                sdcc: r.u64()?,
                p_hat: r.f64()?,
                error_margin: r.f64()?,
            });
        }
        if !r.done() {
            return Err(bad("trailing bytes"));
        }
        if groups.windows(2).any(|w| w[0].cef >= w[1].cef) {
            return Err(bad("groups must be strictly ascending by CEF"));
        }
        Ok(Self { kind, confidence, budget, groups, overall })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_scenarios, DensityClass};
    use crate::geometry::GridSpec;
    use crate::motion::{generate_motion_set, ArmSpec};

    fn instance() -> (MotionSet, Vec<VoxelSet>) {
        let grid = GridSpec::new(8, 84.0).unwrap();
        let ms = generate_motion_set(&ArmSpec::desk_for_grid(&grid), &grid, 10, 16, 2).unwrap();
        let sc = generate_scenarios(DensityClass::D4, 60, &grid, 3).unwrap();
        (ms, sc.scenarios.into_iter().map(|s| s.occupancy).collect())
    }

    #[test]
    fn all_zero_cef_needs_no_trials() {
        let (ms, sc) = instance();
        let mut report = phase1_cef(&ms, CdmKind::A4FlatOctree);
        for m in &mut report.motions {
            m.entries.clear();
        }
        let cache = ErroneousSweptCache::default();
        let t = phase2_sdcc(&report, &cache, &ms, &sc, 8, 1, 0.95).unwrap();
        assert_eq!(t.overall, 0.0);
        assert_eq!(t.groups.len(), 1);
        assert_eq!(t.groups[0].trials, 0);
        assert_eq!(t.budget.run_counter, report.total_bits());
    }

    #[test]
    fn table_is_consistent_and_round_trips() {
        let (ms, sc) = instance();
        for kind in CdmKind::ALL {
            let (report, t) = run_cef_aware(&ms, kind, &sc, 5, 9, 0.95).unwrap();
            assert_eq!(t.groups.iter().map(|g| g.bits).sum::<u64>(), report.total_bits());
            assert!((t.overall - t.recompute_overall()).abs() < 1e-15);
            assert!(t.groups.iter().all(|g| (0.0..=1.0).contains(&g.p_hat)));
            let s = sc.len() as u64;
            let groups = t.groups.len() as u64;
            assert!(t.budget.run_counter <= report.total_bits() + groups * 5 * s);
            assert_eq!(SdccTable::from_bytes(&t.to_bytes()).unwrap(), t);
            let mut csv = Vec::new();
            t.write_csv(&mut csv, &[]).unwrap();
            assert_eq!(String::from_utf8(csv).unwrap().lines().filter(|l| !l.starts_with('#')).count(), t.groups.len() + 1);
        }
    }

    #[test]
    fn selection_is_deterministic_and_bounded() {
        let (ms, _) = instance();
        let report = phase1_cef(&ms, CdmKind::A2Box);
        let a = phase2_bit_selection(&report, 3, 4);
        assert_eq!(a, phase2_bit_selection(&report, 3, 4));
        for g in &a {
            assert_eq!(g.sampled.len() as u64, g.population.min(3));
        }
    }

    #[test]
    fn missing_cache_entry_is_an_error() {
        let (ms, sc) = instance();
        let report = phase1_cef(&ms, CdmKind::A1Voxel);
        let err = phase2_sdcc(&report, &ErroneousSweptCache::default(), &ms, &sc, 2, 1, 0.95).unwrap_err();
        assert!(matches!(err, FiError::CacheMiss { .. }));
        assert!(phase2_sdcc(&report, &ErroneousSweptCache::default(), &ms, &[], 2, 1, 0.95).is_err());
        assert!(phase2_sdcc(&report, &ErroneousSweptCache::default(), &ms, &sc, 0, 1, 0.95).is_err());
    }
}
