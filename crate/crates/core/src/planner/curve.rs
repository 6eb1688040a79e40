use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use super::rank::Ranking;
use super::{sil_verdict, FitParams, PlanError, SilTarget};
use crate::cdm::CdmKind;
use crate::fi::{CefReport, ExhaustiveResult, SdccTable};

/// Source of per-bit SDC-C probabilities.
#[derive(Debug, Clone, Copy)]
pub enum BitModel<'a> {
    /// Group estimates. A bit with an empty critical space contributes 0;
    /// a CEF-0 bit with an enclosed critical space contributes the stratum
    /// rate of the CEF-0 group; any other bit contributes its group `p̂`.
    Groups(&'a SdccTable),
    /// Exact per-bit probabilities.
    Exhaustive(&'a ExhaustiveResult),
}

impl BitModel<'_> {
    pub fn kind(&self) -> CdmKind {
        match self {
            BitModel::Groups(t) => t.kind,
            BitModel::Exhaustive(e) => e.kind,
        }
    }

    /// `map[motion_id][bit]` for every bit of `report`.
    pub fn probabilities(&self, report: &CefReport) -> Result<BTreeMap<u32, Vec<f64>>, PlanError> {
        if self.kind() != report.kind {
            return Err(PlanError::Invalid(format!("probabilities are for {}, report is for {}", self.kind(), report.kind)));
        }
        match self {
            BitModel::Exhaustive(ex) => {
                let map = ex.probability_map();
                for m in report.motions.iter().filter(|m| m.n_bits > 0) {
                    if map.get(&m.motion_id).map(Vec::len) != Some(m.n_bits as usize) {
                        return Err(PlanError::Invalid(format!("exhaustive result lacks the bits of motion {}", m.motion_id)));
                    }
                }
                Ok(map)
            }
            BitModel::Groups(table) => {
                let enclosed_rate = table.group(0).map_or(0.0, |g| {
                    let population = g.bits - g.empty_critical_bits;
                    if population == 0 {
                        0.0
                    } else {
                        g.p_hat * g.bits as f64 / population as f64
                    }
                });
                let mut map: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
                for b in report.bits() {
                    let p = if b.critical.is_empty() {
                        0.0
                    } else if b.cef == 0 {
                        enclosed_rate
                    } else {
                        table
                            .group(b.cef)
                            .ok_or_else(|| PlanError::Invalid(format!("SDC-C table has no group for CEF {}", b.cef)))?
                            .p_hat
                    };
                    map.entry(b.motion_id).or_default().push(p);
                }
                Ok(map)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    /// Strike-suppression latch.
    Rcc,
    /// Redundant-node latch.
    Seut,
    Tmr,
    /// SEC-DED code per storage entry.
    Ecc,
}

impl Technique {
    pub const ALL: [Technique; 4] = [Technique::Rcc, Technique::Seut, Technique::Tmr, Technique::Ecc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Technique::Rcc => "rcc",
            Technique::Seut => "seut",
            Technique::Tmr => "tmr",
            Technique::Ecc => "ecc",
        }
    }

    pub fn is_latch(&self) -> bool {
        *self != Technique::Ecc
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technique {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase();
        Technique::ALL.into_iter().find(|t| t.as_str() == norm).ok_or_else(|| format!("unknown hardening technique {s:?}"))
    }
}

/// Area and FIT effect of protecting storage with one technique.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardeningModel {
    pub technique: Technique,
    /// Area of a protected storage cell relative to an unprotected one.
    pub area_multiplier: f64,
    /// Factor by which protection divides a bit's FIT; infinite for ECC.
    pub fit_divisor: f64,
    /// Extra check bits per data bit; ECC only.
    pub ecc_bit_ratio: Option<f64>,
}

impl HardeningModel {
    pub fn rcc() -> Self {
        Self { technique: Technique::Rcc, area_multiplier: 1.15, fit_divisor: 6.3, ecc_bit_ratio: None }
    }

    pub fn seut() -> Self {
        Self { technique: Technique::Seut, area_multiplier: 2.0, fit_divisor: 37.0, ecc_bit_ratio: None }
    }

    pub fn tmr() -> Self {
        Self { technique: Technique::Tmr, area_multiplier: 3.5, fit_divisor: 1e6, ecc_bit_ratio: None }
    }

    /// SEC-DED over the storage entries of `kind`: 7 check bits per 24-bit
    /// octree node, 8 per 64-bit word.
    pub fn ecc(kind: CdmKind) -> Result<Self, PlanError> {
        let ratio = match kind {
            CdmKind::A3Octree => 7.0 / 24.0,
            CdmKind::A4FlatOctree => 8.0 / 64.0,
            _ => {
                return Err(PlanError::Incompatible {
                    technique: Technique::Ecc,
                    kind,
                    reason: "registers are read in parallel and would each need a decoder",
                })
            }
        };
        let area_multiplier = 1.0 + ratio;
        Ok(Self { technique: Technique::Ecc, area_multiplier, fit_divisor: f64::INFINITY, ecc_bit_ratio: Some(ratio) })
    }

    pub fn for_kind(technique: Technique, kind: CdmKind) -> Result<Self, PlanError> {
        let m = match technique {
            Technique::Rcc => Self::rcc(),
            Technique::Seut => Self::seut(),
            Technique::Tmr => Self::tmr(),
            Technique::Ecc => return Self::ecc(kind),
        };
        m.check_kind(kind)?;
        Ok(m)
    }

    pub fn check_kind(&self, kind: CdmKind) -> Result<(), PlanError> {
        let latch_kind = matches!(kind, CdmKind::A1Voxel | CdmKind::A2Box);
        if self.technique.is_latch() && !latch_kind {
            return Err(PlanError::Incompatible { technique: self.technique, kind, reason: "entries live in SRAM or DRAM, not latches" });
        }
        if !self.technique.is_latch() && latch_kind {
            return Err(PlanError::Incompatible {
                technique: self.technique,
                kind,
                reason: "registers are read in parallel and would each need a decoder",
            });
        }
        Ok(())
    }

    /// Extra storage area per protected bit, relative to an unprotected bit.
    pub fn area_factor(&self) -> f64 {
        self.ecc_bit_ratio.unwrap_or(self.area_multiplier - 1.0)
    }
}

/// Fraction of accelerator area spent on the stored swept-space data.
pub fn default_storage_share(kind: CdmKind) -> f64 {
    match kind {
        CdmKind::A1Voxel | CdmKind::A2Box => 0.5,
        CdmKind::A3Octree => 0.4,
        CdmKind::A4FlatOctree => 0.98,
    }
}

/// Power overhead per unit of area overhead for the default technique of `kind`.
pub fn default_power_ratio(kind: CdmKind) -> f64 {
    match kind {
        CdmKind::A1Voxel | CdmKind::A2Box => 0.8,
        CdmKind::A3Octree => 0.75,
        CdmKind::A4FlatOctree => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub protected_bits: u64,
    pub residual_fit: f64,
    /// Absent on ideal-protection curves.
    pub area_overhead_pct: Option<f64>,
    pub power_overhead_pct: Option<f64>,
    pub sil: Option<u8>,
}

/// Probability mass of each ranked unit, in rank order.
fn unit_mass(ranking: &Ranking, probs: &BTreeMap<u32, Vec<f64>>) -> Result<Vec<(f64, u64)>, PlanError> {
    (0..ranking.unit_count())
        .map(|i| {
            let bits = ranking.unit_bits(i);
            let mut sum = 0.0;
            for k in &bits {
                sum += probs
                    .get(&k.motion_id)
                    .and_then(|v| v.get(k.bit as usize))
                    .ok_or_else(|| PlanError::Invalid(format!("no probability for bit {}:{}", k.motion_id, k.bit)))?;
            }
            Ok((sum, bits.len() as u64))
        })
        .collect()
}

fn check_fractions(fractions: &[f64]) -> Result<(), PlanError> {
    match fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        Some(f) => Err(PlanError::Invalid(format!("fraction {f} is outside [0, 1]"))),
        None => Ok(()),
    }
}

struct Curve {
    units: Vec<(f64, u64)>,
    /// `suffix[k]`: mass of units `k..`, accumulated from the back.
    suffix: Vec<f64>,
    prefix: Vec<f64>,
    prefix_bits: Vec<u64>,
}

impl Curve {
    fn new(units: Vec<(f64, u64)>) -> Self {
        let n = units.len();
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + units[i].0;
        }
        let mut prefix = vec![0.0; n + 1];
        let mut prefix_bits = vec![0u64; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + units[i].0;
            prefix_bits[i + 1] = prefix_bits[i] + units[i].1;
        }
        Self { units, suffix, prefix, prefix_bits }
    }

    fn total_bits(&self) -> u64 {
        *self.prefix_bits.last().expect("non-empty prefix")
    }
}

/// Residual FIT when the top `fraction` of `ranking` is perfectly protected.
///
/// Non-increasing in the fraction and exactly 0 at fraction 1.
pub fn fit_reduction_curve(
    ranking: &Ranking,
    report: &CefReport,
    model: BitModel,
    params: &FitParams,
    fractions: &[f64],
) -> Result<Vec<CurvePoint>, PlanError> {
    check_fractions(fractions)?;
    params.validate()?;
    let curve = Curve::new(unit_mass(ranking, &model.probabilities(report)?)?);
    Ok(fractions
        .iter()
        .map(|&f| {
            let k = ranking.protected_units(f);
            let residual_fit = params.fit_of_sum(curve.suffix[k]);
            CurvePoint {
                fraction: f,
                protected_bits: curve.prefix_bits[k],
                residual_fit,
                area_overhead_pct: None,
                power_overhead_pct: None,
                sil: sil_verdict(residual_fit),
            }
        })
        .collect())
}

/// Area overhead and residual FIT when the top `fraction` of `ranking` is
/// hardened with `model`.
///
/// Area overhead is `protected share × storage_share × area factor`, in
/// percent; power overhead scales it by `power_ratio`. Protected bits keep
/// `1 / fit_divisor` of their FIT.
#[allow(clippy::too_many_arguments)]
pub fn overhead_curve(
    ranking: &Ranking,
    report: &CefReport,
    model: BitModel,
    hardening: &HardeningModel,
    storage_share: f64,
    power_ratio: f64,
    params: &FitParams,
    fractions: &[f64],
) -> Result<Vec<CurvePoint>, PlanError> {
    check_fractions(fractions)?;
    params.validate()?;
    hardening.check_kind(ranking.kind)?;
    if !(0.0..=1.0).contains(&storage_share) || !(power_ratio >= 0.0 && power_ratio.is_finite()) {
        return Err(PlanError::Invalid(format!("storage share {storage_share} or power ratio {power_ratio} out of range")));
    }
    let curve = Curve::new(unit_mass(ranking, &model.probabilities(report)?)?);
    let total = curve.total_bits().max(1) as f64;
    debug_assert_eq!(curve.units.len(), ranking.unit_count());
    Ok(fractions
        .iter()
        .map(|&f| {
            let k = ranking.protected_units(f);
            let kept = if hardening.fit_divisor.is_finite() { curve.prefix[k] / hardening.fit_divisor } else { 0.0 };
            let residual_fit = params.fit_of_sum(curve.suffix[k] + kept);
            let area = curve.prefix_bits[k] as f64 / total * storage_share * hardening.area_factor() * 100.0;
            CurvePoint {
                fraction: f,
                protected_bits: curve.prefix_bits[k],
                residual_fit,
                area_overhead_pct: Some(area),
                power_overhead_pct: Some(area * power_ratio),
                sil: sil_verdict(residual_fit),
            }
        })
        .collect())
}

/// Cheapest curve point reaching one SIL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilMilestone {
    pub level: u8,
    pub max_fit: u32,
    pub fraction: f64,
    pub residual_fit: f64,
    pub area_overhead_pct: Option<f64>,
    pub power_overhead_pct: Option<f64>,
}

/// For each SIL, the first point of `curve` (in fraction order) meeting it.
pub fn sil_milestones(curve: &[CurvePoint]) -> Vec<SilMilestone> {
    let mut pts: Vec<&CurvePoint> = curve.iter().collect();
    pts.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    SilTarget::ALL
        .iter()
        .filter_map(|t| {
            pts.iter().find(|p| t.met_by(p.residual_fit)).map(|p| SilMilestone {
                level: t.level,
                max_fit: t.max_fit,
                fraction: p.fraction,
                residual_fit: p.residual_fit,
                area_overhead_pct: p.area_overhead_pct,
                power_overhead_pct: p.power_overhead_pct,
            })
        })
        .collect()
}

/// Columns `fraction,residual_fit,area_overhead_pct,sil,protected_bits,power_overhead_pct`
/// after `#` metadata lines. Missing values are empty cells.
pub fn write_curve_csv<W: Write>(mut w: W, curve: &[CurvePoint], metadata: &[(String, String)]) -> Result<(), PlanError> {
    for (k, v) in metadata {
        writeln!(w, "# {k}={v}")?;
    }
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["fraction", "residual_fit", "area_overhead_pct", "sil", "protected_bits", "power_overhead_pct"])?;
    for p in curve {
        csv.write_record([
            p.fraction.to_string(),
            format!("{:e}", p.residual_fit),
            opt(p.area_overhead_pct),
            p.sil.map_or(String::new(), |s| s.to_string()),
            p.protected_bits.to_string(),
            opt(p.power_overhead_pct),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
