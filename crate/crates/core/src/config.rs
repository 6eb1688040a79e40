//! Experiment configuration: a versioned TOML document that fixes every
//! input of a pipeline run.
//!
//! Unknown keys are rejected. All randomness derives from `seed`; every
//! stream is keyed by its stage name and item id (see [`crate::seed`]).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::cdm::CdmKind;
use crate::environment::DensityClass;
use crate::fi::{FiMode, DEFAULT_MAX_EXHAUSTIVE_RUNS};
use crate::geometry::GridSpec;
use crate::motion::ArmSpec;
use crate::planner::{Heuristic, Technique, DEFAULT_EXECUTIONS, DEFAULT_FIT_RAW};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem, naming the offending field.
#[derive(Debug, Error)]
#[error("config: {field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

fn err<T>(field: &str, reason: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { field: field.into(), reason: reason.into() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed.
    pub seed: u64,
    /// Where artifacts go; the command line may override it. Not part of
    /// any digest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub grid: GridSpec,
    /// Defaults to the desk arm with links at least half a voxel thick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<ArmSpec>,
    pub motion_set: MotionSetConfig,
    #[serde(default = "all_kinds")]
    pub kinds: Vec<CdmKind>,
    pub scenarios: ScenarioConfig,
    #[serde(default)]
    pub fi: FiConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSetConfig {
    pub n_poses: usize,
    pub n_motions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "all_classes")]
    pub classes: Vec<DensityClass>,
    /// Scenarios per density class.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiConfig {
    pub mode: FiMode,
    /// Bits sampled per CEF group in Phase 2.
    pub m_bits_per_group: u64,
    pub confidence: f64,
    /// Error margin used to size uniform campaigns.
    pub margin: f64,
    /// Pairs sampled in uniform mode; sized from `margin` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform_samples: Option<u64>,
    pub with_replacement: bool,
    pub max_exhaustive_runs: u64,
}

impl Default for FiConfig {
    fn default() -> Self {
        Self {
            mode: FiMode::CefAware,
            m_bits_per_group: 32,
            confidence: 0.95,
            margin: 0.025,
            uniform_samples: None,
            with_replacement: false,
            max_exhaustive_runs: DEFAULT_MAX_EXHAUSTIVE_RUNS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub heuristics: Vec<Heuristic>,
    pub fractions: Vec<f64>,
    /// Environment whose SDC-C estimates drive the curves; first class when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_class: Option<DensityClass>,
    /// Scenarios of that class used to count structure accesses.
    pub calibration_scenarios: usize,
    /// Applied to every kind each technique suits.
    pub techniques: Vec<Technique>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            heuristics: vec![
                Heuristic::Cef,
                Heuristic::CsVolume,
                Heuristic::BitPosition,
                Heuristic::AccessFrequency,
                Heuristic::BoxVolume,
                Heuristic::UniformRandom,
                Heuristic::Ideal,
            ],
            fractions: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            density_class: None,
            calibration_scenarios: 50,
            techniques: Technique::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// FIT per Mbit.
    pub fit_raw: f64,
    /// Executions between reloads used by the planner.
    pub n: f64,
    /// Values of N tabulated by the comparison stage.
    pub compare_n: Vec<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { fit_raw: DEFAULT_FIT_RAW, n: DEFAULT_EXECUTIONS, compare_n: vec![1.0, DEFAULT_EXECUTIONS] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Also write one CSV row per bit for every CEF report.
    pub bit_csv: bool,
}

/// The tiny instance the `oracle` command checks exhaustively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub resolution: u32,
    pub n_poses: usize,
    pub n_motions: usize,
    pub scenarios: usize,
    pub pairs: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { resolution: 8, n_poses: 16, n_motions: 32, scenarios: 100, pairs: 1000 }
    }
}

fn all_kinds() -> Vec<CdmKind> {
    CdmKind::ALL.to_vec()
}

fn all_classes() -> Vec<DensityClass> {
    DensityClass::ALL.to_vec()
}

impl ExperimentConfig {
    /// 16³ grid over 84 cm, 512 poses, 1024 motions, all kinds and classes,
    /// 2000 scenarios per class.
    pub fn desk_default(seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            output_dir: None,
            grid: GridSpec { resolution: 16, extent_cm: 84.0 },
            arm: None,
            motion_set: MotionSetConfig { n_poses: 512, n_motions: 1024 },
            kinds: all_kinds(),
            scenarios: ScenarioConfig { classes: all_classes(), count: 2000 },
            fi: FiConfig::default(),
            plan: PlanConfig::default(),
            fit: FitConfig::default(),
            output: OutputConfig::default(),
            oracle: OracleConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError { field: "(document)".into(), reason: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { field: "(file)".into(), reason: format!("{}: {e}", path.display()) })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn arm(&self) -> ArmSpec {
        self.arm.clone().unwrap_or_else(|| ArmSpec::desk_for_grid(&self.grid))
    }

    pub fn plan_class(&self) -> DensityClass {
        self.plan.density_class.unwrap_or(self.scenarios.classes[0])
    }

    /// Checks every field whose validity does not depend on generated data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return err("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if let Err(e) = self.grid.validate() {
            return err("grid", e.to_string());
        }
        if let Err(e) = self.arm().validate_in(&self.grid) {
            return err("arm", e.to_string());
        }
        if self.motion_set.n_poses < 2 {
            return err("motion_set.n_poses", "need at least 2 poses");
        }
        if self.motion_set.n_motions == 0 {
            return err("motion_set.n_motions", "need at least one motion");
        }
        if self.kinds.is_empty() {
            return err("kinds", "list at least one CDM kind");
        }
        if has_duplicates(&self.kinds) {
            return err("kinds", "duplicate entries");
        }
        if self.scenarios.classes.is_empty() {
            return err("scenarios.classes", "list at least one density class");
        }
        if has_duplicates(&self.scenarios.classes) {
            return err("scenarios.classes", "duplicate entries");
        }
        if self.scenarios.count == 0 {
            return err("scenarios.count", "need at least one scenario per class");
        }
        let fi = &self.fi;
        if fi.m_bits_per_group == 0 {
            return err("fi.m_bits_per_group", "must be positive");
        }
        if !(fi.confidence > 0.0 && fi.confidence < 1.0) {
            return err("fi.confidence", "must lie in (0, 1)");
        }
        if !(fi.margin > 0.0 && fi.margin < 1.0) {
            return err("fi.margin", "must lie in (0, 1)");
        }
        if fi.uniform_samples == Some(0) {
            return err("fi.uniform_samples", "must be positive");
        }
        let plan = &self.plan;
        if plan.heuristics.is_empty() {
            return err("plan.heuristics", "list at least one heuristic");
        }
        if plan.fractions.is_empty() || plan.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return err("plan.fractions", "need one or more fractions in [0, 1]");
        }
        if let Some(c) = plan.density_class {
            if !self.scenarios.classes.contains(&c) {
                return err("plan.density_class", format!("{c} is not among scenarios.classes"));
            }
        }
        if plan.calibration_scenarios == 0 {
            return err("plan.calibration_scenarios", "must be positive");
        }
        if !(self.fit.fit_raw > 0.0 && self.fit.fit_raw.is_finite()) {
            return err("fit.fit_raw", "must be positive");
        }
        if !(self.fit.n > 0.0 && self.fit.n.is_finite()) {
            return err("fit.n", "must be positive");
        }
        if self.fit.compare_n.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return err("fit.compare_n", "values must be positive");
        }
        let o = &self.oracle;
        if o.resolution < 4 || !o.resolution.is_power_of_two() {
            return err("oracle.resolution", "must be a power of two, at least 4");
        }
        if o.n_poses < 2 || o.n_motions == 0 || o.scenarios == 0 || o.pairs == 0 {
            return err("oracle", "poses, motions, scenarios and pairs must be positive (at least 2 poses)");
        }
        Ok(())
    }

    /// SHA-256 (hex) of the canonical JSON form, ignoring `output_dir`.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        digest_json(&c)
    }
}

fn has_duplicates<T: Ord + Clone>(v: &[T]) -> bool {
    let mut s = v.to_vec();
    s.sort();
    s.windows(2).any(|w| w[0] == w[1])
}

pub(crate) fn digest_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config values serialize to JSON");
    hex::encode(Sha256::digest(&json))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 7
grid = { resolution = 16, extent_cm = 84.0 }
motion_set = { n_poses = 512, n_motions = 1024 }
scenarios = { count = 2000 }
"#;

    #[test]
    fn minimal_document_is_the_desk_default() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg, ExperimentConfig::desk_default(7));
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again.digest(), cfg.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_toml(&format!("{MINIMAL}\nturbo = true\n")).unwrap_err();
        assert!(e.reason.contains("turbo"), "{e}");
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("count = 2000", "count = 2000, colour = 1")).unwrap_err();
        assert!(e.reason.contains("colour"), "{e}");
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("seed = 7\n", "")).is_err());
    }

    #[test]
    fn errors_name_the_field() {
        let mut cfg = ExperimentConfig::desk_default(1);
        cfg.fi.confidence = 1.5;
        assert_eq!(cfg.validate().unwrap_err().field, "fi.confidence");
        let mut cfg = ExperimentConfig::desk_default(1);
        cfg.plan.fractions.push(1.2);
        assert_eq!(cfg.validate().unwrap_err().field, "plan.fractions");
        let mut cfg = ExperimentConfig::desk_default(1);
        cfg.schema_version = 2;
        assert_eq!(cfg.validate().unwrap_err().field, "schema_version");
    }

    #[test]
    fn digest_ignores_output_dir() {
        let a = ExperimentConfig::desk_default(1);
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.digest(), b.digest());
        b.seed = 2;
        assert_ne!(a.digest(), b.digest());
    }
}
