//! Fault injection: Phase 1 CEF measurement, CEF-grouped Phase 2 sampling,
//! and the exhaustive and uniform baselines.
//!
//! Every mode evaluates a flip through its [`FlipDelta`]: the stored voxels a
//! flip hides (the critical space) and the voxels it adds. Classifying a
//! delta against an obstacle set is exactly equivalent to flipping the bit,
//! re-running collision detection, and comparing detections.

mod exhaustive;
mod flip;
mod phase1;
mod phase2;
mod stats;

pub use exhaustive::{
    exhaustive_fi, uniform_statistical_fi, ExhaustiveResult, UniformEstimate, DEFAULT_MAX_EXHAUSTIVE_RUNS, EXHAUSTIVE_MAGIC,
};
pub use flip::{BitKey, ErroneousSweptCache, FlipDecoder, FlipDelta};
pub use phase1::{phase1_cef, BitCef, BitView, CefReport, MotionCef, CEF_REPORT_MAGIC};
pub use phase2::{phase2_bit_selection, phase2_sdcc, run_cef_aware, SdccGroup, SdccTable, SDCC_TABLE_MAGIC};
pub use stats::{clopper_pearson_interval, sample_size, spearman, wilson_interval, z_score};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::cdm::CdmError;
use crate::geometry::{GeometryError, VoxelSet};

#[derive(Debug, Error)]
pub enum FiError {
    #[error("invalid fault-injection request: {0}")]
    Invalid(String),
    #[error("exhaustive injection needs {runs} runs, over the budget of {limit}; use the cef_aware or uniform mode")]
    Budget { runs: u64, limit: u64 },
    #[error("bit {motion_id}:{bit} was sampled but is missing from the erroneous swept cache")]
    CacheMiss { motion_id: u32, bit: u32 },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
    #[error(transparent)]
    Cdm(#[from] CdmError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Effect of one flip on one collision query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The error-free image detects the obstacle, the faulty one does not.
    Sdcc,
    /// The decoded set is unchanged.
    Masked,
    /// The faulty image detects strictly more obstacle voxels and loses none.
    FalsePositiveOnly,
    Benign,
}

/// Classifies the faulty detection against the error-free one.
pub fn classify_sdcc(error_free: &VoxelSet, erroneous: &VoxelSet, obstacles: &VoxelSet) -> Result<Outcome, GeometryError> {
    let ef_hit = error_free.intersection(obstacles)?;
    let er_hit = erroneous.intersection(obstacles)?;
    Ok(if !ef_hit.is_empty() && er_hit.is_empty() {
        Outcome::Sdcc
    } else if erroneous == error_free {
        Outcome::Masked
    } else if ef_hit.is_subset(&er_hit)? && ef_hit != er_hit {
        Outcome::FalsePositiveOnly
    } else {
        Outcome::Benign
    })
}

/// [`classify_sdcc`] evaluated from a delta; `removed ⊆ error_free` and
/// `added ∩ error_free = ∅` make the counts additive.
pub fn classify_delta(error_free: &VoxelSet, delta: &FlipDelta, obstacles: &VoxelSet) -> Outcome {
    let hits = error_free.intersection_len(obstacles).expect("same grid");
    let lost = delta.removed.iter().filter(|&&v| obstacles.contains(v)).count();
    let gained = delta.added.iter().filter(|&&v| obstacles.contains(v)).count();
    if hits > 0 && hits - lost + gained == 0 {
        Outcome::Sdcc
    } else if delta.is_masked() {
        Outcome::Masked
    } else if lost == 0 && gained > 0 {
        Outcome::FalsePositiveOnly
    } else {
        Outcome::Benign
    }
}

/// Only the SDC-C test of [`classify_delta`], with the hit count precomputed.
#[inline]
pub(crate) fn is_sdcc(hits: usize, delta: &FlipDelta, obstacles: &VoxelSet) -> bool {
    hits > 0
        && delta.removed.len() >= hits
        && delta.added.iter().all(|&v| !obstacles.contains(v))
        && delta.removed.iter().filter(|&&v| obstacles.contains(v)).count() == hits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiMode {
    Exhaustive,
    UniformStatistical,
    CefAware,
}

impl fmt::Display for FiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FiMode::Exhaustive => "exhaustive",
            FiMode::UniformStatistical => "uniform_statistical",
            FiMode::CefAware => "cef_aware",
        })
    }
}

impl FromStr for FiMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "exhaustive" => Ok(FiMode::Exhaustive),
            "uniform" | "uniform_statistical" => Ok(FiMode::UniformStatistical),
            "cef" | "cef_aware" => Ok(FiMode::CefAware),
            other => Err(format!("unknown FI mode {other:?} (expected exhaustive, uniform_statistical or cef_aware)")),
        }
    }
}

/// Run bookkeeping carried by every FI output.
///
/// One run is one simulated flip evaluated against one input: Phase 1
/// counts one run per bit (the swept-space query), Phase 2 and the baselines
/// one per (bit, scenario) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiBudget {
    pub mode: FiMode,
    /// Bits sampled per CEF group (cef_aware) or pairs sampled (uniform).
    pub m: u64,
    pub scenario_count: u64,
    pub seed: u64,
    pub total_bits: u64,
    pub run_counter: u64,
}

impl FiBudget {
    pub fn new(mode: FiMode, m: u64, scenario_count: u64, seed: u64, total_bits: u64) -> Self {
        Self { mode, m, scenario_count, seed, total_bits, run_counter: 0 }
    }

    pub fn record(&mut self, runs: u64) {
        self.run_counter += runs;
    }

    /// Runs an exhaustive campaign over the same instance needs.
    pub fn exhaustive_runs(&self) -> u64 {
        self.total_bits * self.scenario_count
    }

    /// `mode u8 (0 exhaustive, 1 uniform, 2 cef_aware) | m | scenarios | seed | total_bits | run_counter`,
    /// the counters as little-endian u64.
    pub(crate) fn write_bytes(&self, out: &mut Vec<u8>) {
        out.push(match self.mode {
            FiMode::Exhaustive => 0,
            FiMode::UniformStatistical => 1,
            FiMode::CefAware => 2,
        });
        for v in [self.m, self.scenario_count, self.seed, self.total_bits, self.run_counter] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub(crate) fn read_bytes(r: &mut phase1::ByteReader) -> Result<Self, FiError> {
        let mode = match r.u8()? {
            0 => FiMode::Exhaustive,
            1 => FiMode::UniformStatistical,
            2 => FiMode::CefAware,
            _ => return Err(FiError::Malformed { what: "FI budget", detail: "unknown mode".into() }),
        };
        Ok(FiBudget {
            mode,
            m: r.u64()?,
            scenario_count: r.u64()?,
            seed: r.u64()?,
            total_bits: r.u64()?,
            run_counter: r.u64()?,
        })
    }

    pub fn speedup(&self) -> f64 {
        if self.run_counter == 0 {
            return f64::INFINITY;
        }
        self.exhaustive_runs() as f64 / self.run_counter as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridSpec, VoxelCoord};

    fn set(cells: &[(u16, u16, u16)]) -> VoxelSet {
        let g = GridSpec::new(4, 4.0).unwrap();
        VoxelSet::from_coords(g, cells.iter().map(|&(x, y, z)| VoxelCoord::new(x, y, z))).unwrap()
    }

    #[test]
    fn outcomes() {
        let ef = set(&[(0, 0, 0), (1, 0, 0)]);
        let er = set(&[(1, 0, 0)]);
        assert_eq!(classify_sdcc(&ef, &er, &set(&[(3, 3, 3)])).unwrap(), Outcome::Benign);
        assert_eq!(classify_sdcc(&ef, &er, &set(&[(0, 0, 0)])).unwrap(), Outcome::Sdcc);
        assert_eq!(classify_sdcc(&ef, &er, &set(&[(0, 0, 0), (1, 0, 0)])).unwrap(), Outcome::Benign);
        for o in [set(&[]), set(&[(0, 0, 0)]), set(&[(2, 2, 2)])] {
            assert_eq!(classify_sdcc(&ef, &ef, &o).unwrap(), Outcome::Masked);
        }
        let grown = set(&[(0, 0, 0), (1, 0, 0), (2, 0, 0)]);
        assert_eq!(classify_sdcc(&ef, &grown, &set(&[(2, 0, 0)])).unwrap(), Outcome::FalsePositiveOnly);
        assert_eq!(classify_sdcc(&ef, &grown, &set(&[(3, 0, 0)])).unwrap(), Outcome::Benign);
    }

    #[test]
    fn delta_classification_agrees() {
        let ef = set(&[(0, 0, 0), (1, 0, 0), (1, 1, 0)]);
        let deltas = [
            FlipDelta { removed: vec![VoxelCoord::new(0, 0, 0)], added: vec![] },
            FlipDelta { removed: vec![], added: vec![VoxelCoord::new(3, 3, 3)] },
            FlipDelta { removed: vec![VoxelCoord::new(1, 1, 0)], added: vec![VoxelCoord::new(2, 1, 0)] },
            FlipDelta::default(),
        ];
        for d in &deltas {
            let er = d.apply(&ef);
            for x in 0..4 {
                for y in 0..4 {
                    let o = set(&[(x, y, 0)]);
                    let slow = classify_sdcc(&ef, &er, &o).unwrap();
                    assert_eq!(classify_delta(&ef, d, &o), slow);
                    let hits = ef.intersection_len(&o).unwrap();
                    assert_eq!(is_sdcc(hits, d, &o), slow == Outcome::Sdcc);
                }
            }
        }
    }

    #[test]
    fn budget_speedup() {
        let mut b = FiBudget::new(FiMode::CefAware, 4, 100, 1, 1000);
        b.record(1000);
        b.record(2 * 4 * 100);
        assert_eq!(b.exhaustive_runs(), 100_000);
        assert!((b.speedup() - 100_000.0 / 1800.0).abs() < 1e-9);
        assert_eq!("cef-aware".parse::<FiMode>().unwrap(), FiMode::CefAware);
    }
}
