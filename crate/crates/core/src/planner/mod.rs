//! Reliability planning: FIT rates, protection orderings, residual-FIT and
//! area-overhead curves, and SIL verdicts.
//!
//! Protecting a bit removes its SDC-C contribution entirely (ideal
//! protection) or divides it by the technique's FIT reduction factor.

mod curve;
mod rank;

pub use curve::{
    default_power_ratio, default_storage_share, fit_reduction_curve, overhead_curve, sil_milestones, write_curve_csv,
    BitModel, CurvePoint, HardeningModel, SilMilestone, Technique,
};
pub use rank::{box_volumes, access_frequency, rank_structures, AuxData, Heuristic, Ordering, ProtectionPlan, Ranking, StructureKey};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{CdmError, CdmKind};
use crate::fi::FiError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner input: {0}")]
    Invalid(String),
    #[error("heuristic {heuristic} needs {requirement}")]
    MissingAux { heuristic: Heuristic, requirement: &'static str },
    #[error("{technique} hardening does not apply to {kind}: {reason}")]
    Incompatible { technique: Technique, kind: CdmKind, reason: &'static str },
    #[error(transparent)]
    Cdm(#[from] CdmError),
    #[error(transparent)]
    Fi(#[from] FiError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raw soft-error rate in FIT per Mbit used by default.
pub const DEFAULT_FIT_RAW: f64 = 20.49;
/// Default collision queries served between reloads of on-chip data.
pub const DEFAULT_EXECUTIONS: f64 = 3600.0;

/// Inputs of the FIT model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitParams {
    /// FIT per Mbit of unprotected storage.
    pub fit_raw: f64,
    /// Executions before the stored data is reloaded.
    pub n: f64,
    pub total_bits: u64,
}

impl FitParams {
    pub fn new(fit_raw: f64, n: f64, total_bits: u64) -> Result<Self, PlanError> {
        let p = Self { fit_raw, n, total_bits };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.fit_raw > 0.0 && self.fit_raw.is_finite()) {
            return Err(PlanError::Invalid(format!("fit_raw must be positive, got {}", self.fit_raw)));
        }
        if !(self.n > 0.0 && self.n.is_finite()) {
            return Err(PlanError::Invalid(format!("N must be positive, got {}", self.n)));
        }
        if self.total_bits == 0 {
            return Err(PlanError::Invalid("total_bits must be positive".into()));
        }
        Ok(())
    }

    /// FIT contributed by bits whose SDC-C probabilities sum to `p_sum`.
    pub fn fit_of_sum(&self, p_sum: f64) -> f64 {
        p_sum / 1e6 * self.fit_raw * self.n
    }
}

/// `FIT = bits[Mbit] × p_sdcc × fit_raw × N`.
///
/// ```
/// use cefkit::planner::{fit_rate, FitParams};
/// let p = FitParams::new(20.49, 3600.0, 1_000_000).unwrap();
/// assert!((fit_rate(0.003, &p) - 221.292).abs() < 1e-9);
/// ```
pub fn fit_rate(p_sdcc: f64, params: &FitParams) -> f64 {
    params.total_bits as f64 / 1e6 * p_sdcc * params.fit_raw * params.n
}

/// Safety integrity level with its FIT ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SilTarget {
    pub level: u8,
    pub max_fit: u32,
}

impl SilTarget {
    pub const ALL: [SilTarget; 4] = [
        SilTarget { level: 1, max_fit: 10_000 },
        SilTarget { level: 2, max_fit: 1_000 },
        SilTarget { level: 3, max_fit: 100 },
        SilTarget { level: 4, max_fit: 10 },
    ];

    pub fn met_by(&self, fit: f64) -> bool {
        fit <= self.max_fit as f64
    }
}

/// Highest SIL whose ceiling is at least `fit`; ceilings are inclusive.
pub fn sil_verdict(fit: f64) -> Option<u8> {
    SilTarget::ALL.iter().rev().find(|t| t.met_by(fit)).map(|t| t.level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_reference_values() {
        let p = FitParams::new(DEFAULT_FIT_RAW, DEFAULT_EXECUTIONS, 1_000_000).unwrap();
        assert_eq!(fit_rate(0.0, &p), 0.0);
        assert!((fit_rate(0.003, &p) - 221.3).abs() / 221.3 < 1e-3);
        let once = FitParams { n: 1.0, ..p };
        assert_eq!(fit_rate(0.003, &p) / fit_rate(0.003, &once), 3600.0);
        assert!(FitParams::new(0.0, 1.0, 1).is_err());
        assert!(FitParams::new(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn sil_bounds_are_inclusive() {
        assert_eq!(sil_verdict(0.1), Some(4));
        assert_eq!(sil_verdict(10.0), Some(4));
        assert_eq!(sil_verdict(10.5), Some(3));
        assert_eq!(sil_verdict(1_000.0), Some(2));
        assert_eq!(sil_verdict(10_000.0), Some(1));
        assert_eq!(sil_verdict(10_001.0), None);
    }
}
