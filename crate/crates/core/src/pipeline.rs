//! Stage orchestration and artifact bookkeeping.
//!
//! Each stage reads only artifacts written by earlier stages, checks them
//! against the digests in `manifest.json`, and records its own outputs
//! there. A stage is stale when the configuration it was run with no longer
//! matches; rerunning a stage drops the records of the stages after it.
//!
//! Output layout under the run directory:
//!
//! ```text
//! manifest.json
//! config.toml                       effective configuration
//! motion_set.json
//! cef/{kind}.cefr                   binary CEF report
//! cef/{kind}_histogram.csv          cef,bits,fraction
//! cef/summary.json
//! scenarios/{class}.json
//! fi/{kind}_{class}.sdcc            cef_aware: binary SDC-C table (+ _sdcc.csv)
//! fi/{kind}_{class}.exh             exhaustive: per-bit counts
//! fi/{kind}_{class}_uniform.json    uniform_statistical
//! fi/summary.json
//! plan/{kind}/{heuristic}.csv       ideal-protection residual FIT curve
//! plan/{kind}/{heuristic}_{technique}.csv
//! plan/summary.json
//! compare/cef_cdf.csv               kind,cef,bits,cumulative_fraction
//! compare/fit.csv                   kind,density_class,n,total_bits,p_sdcc,fit,sil
//! compare/summary.json
//! oracle/report.json
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

use crate::cdm::{CdmError, CdmKind};
use crate::config::{digest_json, ConfigError, ExperimentConfig};
use crate::environment::{generate_scenarios, DensityClass, EnvError, ScenarioBatch};
use crate::fi::{
    exhaustive_fi, phase1_cef, phase2_bit_selection, phase2_sdcc, sample_size, uniform_statistical_fi, BitKey, CefReport,
    ErroneousSweptCache, ExhaustiveResult, FiBudget, FiError, FiMode, SdccTable, UniformEstimate,
};
use crate::geometry::{GridSpec, VoxelSet};
use crate::motion::{generate_motion_set, ArmSpec, MotionError, MotionSet};
use crate::oracle::{verify_fast_path, verify_phase1, OracleReport};
use crate::planner::{
    box_volumes, access_frequency, default_power_ratio, default_storage_share, fit_rate, fit_reduction_curve,
    overhead_curve, rank_structures, sil_milestones, sil_verdict, write_curve_csv, AuxData, BitModel, CurvePoint,
    FitParams, HardeningModel, Heuristic, PlanError, SilMilestone,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "cefkit-manifest/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{what} not found at {path}; {hint}")]
    Missing { what: String, path: PathBuf, hint: String },
    #[error("{what} is stale: {detail}; {hint}")]
    Stale { what: String, detail: String, hint: String },
    #[error("{0}")]
    Unsupported(String),
    #[error("oracle check failed with {0} mismatches")]
    OracleMismatch(u64),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Environment(#[from] EnvError),
    #[error(transparent)]
    Cdm(#[from] CdmError),
    #[error(transparent)]
    Fi(#[from] FiError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl PipelineError {
    /// 1 for configuration problems, 3 for oracle mismatches, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::OracleMismatch(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Motionset,
    Cef,
    Fi,
    Plan,
    Compare,
    Oracle,
}

impl Stage {
    /// The stages of a full run, in order. The oracle check stands apart.
    pub const PIPELINE: [Stage; 5] = [Stage::Motionset, Stage::Cef, Stage::Fi, Stage::Plan, Stage::Compare];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Motionset => "motionset",
            Stage::Cef => "cef",
            Stage::Fi => "fi",
            Stage::Plan => "plan",
            Stage::Compare => "compare",
            Stage::Oracle => "oracle",
        }
    }

    pub fn upstream(&self) -> &'static [Stage] {
        match self {
            Stage::Motionset | Stage::Oracle => &[],
            Stage::Cef => &[Stage::Motionset],
            Stage::Fi => &[Stage::Motionset, Stage::Cef],
            Stage::Plan => &[Stage::Motionset, Stage::Cef, Stage::Fi],
            Stage::Compare => &[Stage::Cef, Stage::Fi],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Stage::Motionset, Stage::Cef, Stage::Fi, Stage::Plan, Stage::Compare, Stage::Oracle]
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// What one stage produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    /// Digest of the configuration the stage and its inputs depend on.
    pub stage_key: String,
    pub wall_clock_s: f64,
    /// Relative path → SHA-256 of the file contents.
    pub artifacts: BTreeMap<String, String>,
    /// FI bookkeeping per `{kind}/{class}`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fi_runs: BTreeMap<String, FiBudget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(PipelineError::Stale {
                what: path.display().to_string(),
                detail: format!("format {:?} is not {MANIFEST_FORMAT:?}", m.format),
                hint: "start from an empty output directory".into(),
            });
        }
        Ok(Some(m))
    }

    fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|source| PipelineError::Io { path, source })
    }

    /// Every artifact of every stage, keyed by relative path.
    pub fn artifact_digests(&self) -> BTreeMap<String, String> {
        self.stages.values().flat_map(|r| r.artifacts.iter().map(|(k, v)| (k.clone(), v.clone()))).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the configuration `stage` depends on, upstream stages included.
pub fn stage_key(config: &ExperimentConfig, stage: Stage) -> String {
    #[derive(Serialize)]
    struct Key<'a, T: Serialize> {
        stage: &'static str,
        upstream: Vec<String>,
        part: &'a T,
    }
    let up = |st: &[Stage]| st.iter().map(|s| stage_key(config, *s)).collect::<Vec<_>>();
    match stage {
        Stage::Motionset => digest_json(&Key {
            stage: "motionset",
            upstream: vec![],
            part: &(config.seed, config.grid, config.arm(), config.motion_set),
        }),
        Stage::Cef => digest_json(&Key { stage: "cef", upstream: up(stage.upstream()), part: &config.kinds }),
        Stage::Fi => digest_json(&Key {
            stage: "fi",
            upstream: up(stage.upstream()),
            part: &(&config.scenarios, &config.fi),
        }),
        Stage::Plan => {
            digest_json(&Key { stage: "plan", upstream: up(stage.upstream()), part: &(&config.plan, &config.fit) })
        }
        Stage::Compare => digest_json(&Key { stage: "compare", upstream: up(stage.upstream()), part: &config.fit }),
        Stage::Oracle => digest_json(&Key {
            stage: "oracle",
            upstream: vec![],
            part: &(config.seed, config.grid.extent_cm, &config.arm, &config.kinds, &config.oracle),
        }),
    }
}

/// A configured run rooted at one output directory.
pub struct Pipeline {
    config: ExperimentConfig,
    out: PathBuf,
    jobs: Option<usize>,
}

struct Ctx<'a> {
    pipeline: &'a Pipeline,
    manifest: RunManifest,
    record: StageRecord,
    stage: Stage,
}

impl Ctx<'_> {
    fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("stage".into(), self.stage.name().into()),
            ("seed".into(), self.pipeline.config.seed.to_string()),
            ("config_digest".into(), self.record.stage_key.clone()),
            ("tool_version".into(), TOOL_VERSION.into()),
        ]
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.pipeline.out.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| PipelineError::Io { path: parent.into(), source })?;
        }
        std::fs::write(&path, bytes).map_err(|source| PipelineError::Io { path, source })?;
        self.record.artifacts.insert(rel.into(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(rel, text.as_bytes())
    }

    /// Reads an artifact recorded by `from`, checking its digest.
    fn read(&self, from: Stage, rel: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.pipeline.out.join(rel);
        let hint = format!("run `cefkit {from}` with this configuration first");
        let expected = self
            .manifest
            .stages
            .get(&from)
            .and_then(|r| r.artifacts.get(rel))
            .ok_or_else(|| PipelineError::Missing { what: format!("{from} artifact {rel}"), path: path.clone(), hint: hint.clone() })?;
        let bytes = std::fs::read(&path).map_err(|_| PipelineError::Missing {
            what: format!("{from} artifact {rel}"),
            path: path.clone(),
            hint: hint.clone(),
        })?;
        if &sha256_hex(&bytes) != expected {
            return Err(PipelineError::Stale {
                what: rel.into(),
                detail: "contents differ from the digest in the manifest".into(),
                hint: format!("rerun `cefkit {from}`"),
            });
        }
        Ok(bytes)
    }

    fn read_text(&self, from: Stage, rel: &str) -> Result<String, PipelineError> {
        String::from_utf8(self.read(from, rel)?).map_err(|_| PipelineError::Stale {
            what: rel.into(),
            detail: "not valid UTF-8".into(),
            hint: format!("rerun `cefkit {from}`"),
        })
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), PipelineError>) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn cef_path(kind: CdmKind) -> String {
    format!("cef/{kind}.cefr")
}

fn fi_path(kind: CdmKind, class: DensityClass, mode: FiMode) -> String {
    match mode {
        FiMode::CefAware => format!("fi/{kind}_{class}.sdcc"),
        FiMode::Exhaustive => format!("fi/{kind}_{class}.exh"),
        FiMode::UniformStatistical => format!("fi/{kind}_{class}_uniform.json"),
    }
}

/// Overall SDC-C estimate of one FI artifact, any mode.
enum FiArtifact {
    Groups(SdccTable),
    Exhaustive(ExhaustiveResult),
    Uniform(UniformEstimate),
}

impl FiArtifact {
    fn overall(&self) -> f64 {
        match self {
            FiArtifact::Groups(t) => t.overall,
            FiArtifact::Exhaustive(e) => e.overall,
            FiArtifact::Uniform(u) => u.p_hat,
        }
    }
}

#[derive(Serialize)]
struct FiSummaryRow {
    kind: CdmKind,
    density_class: DensityClass,
    mode: FiMode,
    overall: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    groups: Option<usize>,
    run_counter: u64,
    exhaustive_runs: u64,
    speedup: f64,
}

#[derive(Serialize)]
struct CurveSummary {
    heuristic: Heuristic,
    #[serde(skip_serializing_if = "Option::is_none")]
    technique: Option<String>,
    points: Vec<CurvePoint>,
    sil_milestones: Vec<SilMilestone>,
}

#[derive(Serialize)]
struct PlanKindSummary {
    kind: CdmKind,
    density_class: DensityClass,
    probability_source: &'static str,
    total_bits: u64,
    baseline_fit: f64,
    baseline_sil: Option<u8>,
    curves: Vec<CurveSummary>,
    /// Heuristic → reason it was not evaluated.
    unavailable: BTreeMap<String, String>,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self { config, out: out.into(), jobs: None })
    }

    /// Runs stage work on a dedicated pool of `jobs` workers.
    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = Some(jobs.max(1));
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
        match self.jobs {
            Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
            None => Ok(f()),
        }
    }

    /// Runs every pipeline stage in order and returns the final manifest.
    pub fn run_all(&self) -> Result<RunManifest, PipelineError> {
        for stage in Stage::PIPELINE {
            self.run_stage(stage)?;
        }
        Ok(RunManifest::load(&self.out)?.expect("manifest written by the stages"))
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageRecord, PipelineError> {
        std::fs::create_dir_all(&self.out).map_err(|source| PipelineError::Io { path: self.out.clone(), source })?;
        let manifest = match RunManifest::load(&self.out)? {
            Some(m) => m,
            None => RunManifest {
                format: MANIFEST_FORMAT.into(),
                tool_version: TOOL_VERSION.into(),
                config_digest: self.config.digest(),
                seed: self.config.seed,
                stages: BTreeMap::new(),
            },
        };
        for up in stage.upstream() {
            let rec = manifest.stages.get(up).ok_or_else(|| PipelineError::Missing {
                what: format!("output of stage `{up}`"),
                path: self.out.join(MANIFEST_FILE),
                hint: format!("run `cefkit {up}` first"),
            })?;
            if rec.stage_key != stage_key(&self.config, *up) {
                return Err(PipelineError::Stale {
                    what: format!("stage `{up}`"),
                    detail: "it ran with a different configuration".into(),
                    hint: format!("rerun `cefkit {up}` with the current configuration"),
                });
            }
        }
        let record = StageRecord {
            stage_key: stage_key(&self.config, stage),
            wall_clock_s: 0.0,
            artifacts: BTreeMap::new(),
            fi_runs: BTreeMap::new(),
        };
        let mut ctx = Ctx { pipeline: self, manifest, record, stage };
        let start = Instant::now();
        let result = self.in_pool(|| match stage {
            Stage::Motionset => self.stage_motionset(&mut ctx),
            Stage::Cef => self.stage_cef(&mut ctx),
            Stage::Fi => self.stage_fi(&mut ctx),
            Stage::Plan => self.stage_plan(&mut ctx),
            Stage::Compare => self.stage_compare(&mut ctx),
            Stage::Oracle => self.stage_oracle(&mut ctx),
        })?;
        ctx.record.wall_clock_s = start.elapsed().as_secs_f64();
        let Ctx { mut manifest, record, .. } = ctx;
        manifest.config_digest = self.config.digest();
        manifest.seed = self.config.seed;
        manifest.tool_version = TOOL_VERSION.into();
        manifest.stages.retain(|s, _| !depends_on(*s, stage));
        manifest.stages.insert(stage, record.clone());
        manifest.save(&self.out)?;
        result?;
        Ok(record)
    }

    fn stage_motionset(&self, ctx: &mut Ctx) -> Result<(), PipelineError> {
        let c = &self.config;
        let ms = generate_motion_set(&c.arm(), &c.grid, c.motion_set.n_poses, c.motion_set.n_motions, c.seed)?;
        ctx.write("motion_set.json", ms.to_json()?.as_bytes())?;
        let mut effective = c.clone();
        effective.output_dir = None;
        ctx.write("config.toml", effective.to_toml().as_bytes())
    }

    fn load_motion_set(&self, ctx: &Ctx) -> Result<MotionSet, PipelineError> {
        Ok(MotionSet::from_json(&ctx.read_text(Stage::Motionset, "motion_set.json")?)?)
    }

    fn load_report(&self, ctx: &Ctx, kind: CdmKind) -> Result<CefReport, PipelineError> {
        Ok(CefReport::from_bytes(&ctx.read(Stage::Cef, &cef_path(kind))?)?)
    }

    fn stage_cef(&self, ctx: &mut Ctx) -> Result<(), PipelineError> {
        #[derive(Serialize)]
        struct Row {
            kind: CdmKind,
            total_bits: u64,
            failed_motions: Vec<(u32, String)>,
            cef_groups: usize,
            zero_cef_fraction: f64,
            mean_cef: f64,
        }
        let ms = self.load_motion_set(ctx)?;
        let meta = ctx.metadata();
        let mut rows = Vec::new();
        for &kind in &self.config.kinds {
            let report = phase1_cef(&ms, kind);
            ctx.write(&cef_path(kind), &report.to_bytes())?;
            let hist = report.histogram();
            let total = report.total_bits();
            let body = csv_bytes(|buf| {
                use std::io::Write;
                for (k, v) in &meta {
                    writeln!(buf, "# {k}={v}").expect("write to memory");
                }
                writeln!(buf, "# kind={kind}").expect("write to memory");
                buf.extend_from_slice(b"cef,bits,fraction\n");
                for (cef, bits) in &hist {
                    writeln!(buf, "{cef},{bits},{:e}", *bits as f64 / total.max(1) as f64).expect("write to memory");
                }
                Ok(())
            })?;
            ctx.write(&format!("cef/{kind}_histogram.csv"), &body)?;
            if self.config.output.bit_csv {
                let body = csv_bytes(|buf| Ok(report.write_csv(buf, &meta)?))?;
                ctx.write(&format!("cef/{kind}_bits.csv"), &body)?;
            }
            let cef_sum: f64 = hist.iter().map(|(c, b)| *c as f64 * *b as f64).sum();
            rows.push(Row {
                kind,
                total_bits: total,
                failed_motions: report.failed_motions().map(|m| (m.motion_id, m.error.clone().unwrap_or_default())).collect(),
                cef_groups: hist.len(),
                zero_cef_fraction: report.zero_cef_fraction(),
                mean_cef: if total == 0 { 0.0 } else { cef_sum / total as f64 },
            });
        }
        ctx.write_json("cef/summary.json", &rows)
    }

    fn scenario_sets(batch: &ScenarioBatch) -> Vec<VoxelSet> {
        batch.scenarios.iter().map(|s| s.occupancy.clone()).collect()
    }

    fn stage_fi(&self, ctx: &mut Ctx) -> Result<(), PipelineError> {
        let c = &self.config;
        let ms = self.load_motion_set(ctx)?;
        let meta = ctx.metadata();
        let mut batches = Vec::new();
        for &class in &c.scenarios.classes {
            let batch = generate_scenarios(class, c.scenarios.count, &c.grid, c.seed)?;
            ctx.write(&format!("scenarios/{class}.json"), batch.to_json()?.as_bytes())?;
            batches.push((class, Self::scenario_sets(&batch)));
        }
        let mut rows = Vec::new();
        for &kind in &c.kinds {
            let report = self.load_report(ctx, kind)?;
            let cache = if c.fi.mode == FiMode::CefAware {
                let keys: Vec<BitKey> = phase2_bit_selection(&report, c.fi.m_bits_per_group, c.seed)
                    .into_iter()
                    .flat_map(|g| g.sampled)
                    .collect();
                Some(ErroneousSweptCache::build(&ms, kind, &keys)?)
            } else {
                None
            };
            for (class, scenarios) in &batches {
                let rel = fi_path(kind, *class, c.fi.mode);
                let (row, budget) = match c.fi.mode {
                    FiMode::CefAware => {
                        let cache = cache.as_ref().expect("built for cef_aware");
                        let t = phase2_sdcc(&report, cache, &ms, scenarios, c.fi.m_bits_per_group, c.seed, c.fi.confidence)?;
                        ctx.write(&rel, &t.to_bytes())?;
                        let mut m = meta.clone();
                        m.push(("density_class".into(), class.to_string()));
                        let body = csv_bytes(|buf| Ok(t.write_csv(buf, &m)?))?;
                        ctx.write(&format!("fi/{kind}_{class}_sdcc.csv"), &body)?;
                        (self.fi_row(kind, *class, t.overall, None, Some(t.groups.len()), &t.budget), t.budget.clone())
                    }
                    FiMode::Exhaustive => {
                        let e = exhaustive_fi(&ms, kind, scenarios, c.fi.max_exhaustive_runs)?;
                        ctx.write(&rel, &e.to_bytes())?;
                        (self.fi_row(kind, *class, e.overall, None, None, &e.budget), e.budget.clone())
                    }
                    FiMode::UniformStatistical => {
                        let space = report.total_bits() * scenarios.len() as u64;
                        let n = match c.fi.uniform_samples {
                            Some(n) => n,
                            None => sample_size(0.5, Some(space), c.fi.confidence, c.fi.margin)?,
                        };
                        let u = uniform_statistical_fi(&ms, kind, scenarios, n, c.seed, c.fi.with_replacement, c.fi.confidence)?;
                        ctx.write_json(&rel, &u)?;
                        (self.fi_row(kind, *class, u.p_hat, Some((u.ci_low, u.ci_high)), None, &u.budget), u.budget.clone())
                    }
                };
                ctx.record.fi_runs.insert(format!("{kind}/{class}"), budget);
                rows.push(row);
            }
        }
        ctx.write_json("fi/summary.json", &rows)
    }

    fn fi_row(
        &self,
        kind: CdmKind,
        class: DensityClass,
        overall: f64,
        ci: Option<(f64, f64)>,
        groups: Option<usize>,
        b: &FiBudget,
    ) -> FiSummaryRow {
        FiSummaryRow {
            kind,
            density_class: class,
            mode: b.mode,
            overall,
            ci,
            groups,
            run_counter: b.run_counter,
            exhaustive_runs: b.exhaustive_runs(),
            speedup: b.speedup(),
        }
    }

    fn load_fi(&self, ctx: &Ctx, kind: CdmKind, class: DensityClass) -> Result<FiArtifact, PipelineError> {
        let rel = fi_path(kind, class, self.config.fi.mode);
        let bytes = ctx.read(Stage::Fi, &rel)?;
        Ok(match self.config.fi.mode {
            FiMode::CefAware => FiArtifact::Groups(SdccTable::from_bytes(&bytes)?),
            FiMode::Exhaustive => FiArtifact::Exhaustive(ExhaustiveResult::from_bytes(&bytes)?),
            FiMode::UniformStatistical => FiArtifact::Uniform(serde_json::from_slice(&bytes)?),
        })
    }

    fn stage_plan(&self, ctx: &mut Ctx) -> Result<(), PipelineError> {
        let c = &self.config;
        let class = c.plan_class();
        let ms = self.load_motion_set(ctx)?;
        let batch = ScenarioBatch::from_json(&ctx.read_text(Stage::Fi, &format!("scenarios/{class}.json"))?)?;
        let calibration: Vec<VoxelSet> =
            batch.scenarios.iter().take(c.plan.calibration_scenarios).map(|s| s.occupancy.clone()).collect();
        let meta = ctx.metadata();
        let mut summaries = Vec::new();
        for &kind in &c.kinds {
            let report = self.load_report(ctx, kind)?;
            let fi = self.load_fi(ctx, kind, class)?;
            let (model, source) = match &fi {
                FiArtifact::Groups(t) => (BitModel::Groups(t), "cef_aware groups"),
                FiArtifact::Exhaustive(e) => (BitModel::Exhaustive(e), "exhaustive per-bit"),
                FiArtifact::Uniform(_) => {
                    return Err(PipelineError::Unsupported(
                        "planning needs per-group or per-bit SDC-C data; run `cefkit fi` in cef_aware or exhaustive mode".into(),
                    ))
                }
            };
            let params = FitParams::new(c.fit.fit_raw, c.fit.n, report.total_bits().max(1))?;
            let access = if c.plan.heuristics.contains(&Heuristic::AccessFrequency) {
                Some(access_frequency(&ms, kind, &calibration)?)
            } else {
                None
            };
            let boxes = (kind == CdmKind::A2Box).then(|| box_volumes(&ms));
            let aux = AuxData {
                exhaustive: match &fi {
                    FiArtifact::Exhaustive(e) => Some(e),
                    _ => None,
                },
                access_counts: access.as_ref(),
                box_volumes: boxes.as_ref(),
                seed: Some(c.seed),
            };
            let baseline = params.fit_of_sum(model.probabilities(&report)?.values().flatten().sum());
            let mut unavailable = BTreeMap::new();
            let mut curves = Vec::new();
            for &h in &c.plan.heuristics {
                if !h.applies_to(kind) {
                    unavailable.insert(h.to_string(), format!("only defined for A2, not {kind}"));
                    continue;
                }
                if h == Heuristic::Ideal && aux.exhaustive.is_none() {
                    unavailable.insert(h.to_string(), "needs an exhaustive FI run for this instance".into());
                    continue;
                }
                let ranking = rank_structures(h, &report, &aux)?;
                let mut m = meta.clone();
                m.extend([("kind".into(), kind.to_string()), ("heuristic".into(), h.to_string()), ("density_class".into(), class.to_string())]);
                let points = fit_reduction_curve(&ranking, &report, model, &params, &c.plan.fractions)?;
                let body = csv_bytes(|buf| Ok(write_curve_csv(buf, &points, &m)?))?;
                ctx.write(&format!("plan/{kind}/{h}.csv"), &body)?;
                curves.push(CurveSummary { heuristic: h, technique: None, sil_milestones: sil_milestones(&points), points });
                for &t in &c.plan.techniques {
                    let Ok(hm) = HardeningModel::for_kind(t, kind) else { continue };
                    let points = overhead_curve(
                        &ranking,
                        &report,
                        model,
                        &hm,
                        default_storage_share(kind),
                        default_power_ratio(kind),
                        &params,
                        &c.plan.fractions,
                    )?;
                    let mut mt = m.clone();
                    mt.push(("technique".into(), t.to_string()));
                    let body = csv_bytes(|buf| Ok(write_curve_csv(buf, &points, &mt)?))?;
                    ctx.write(&format!("plan/{kind}/{h}_{t}.csv"), &body)?;
                    curves.push(CurveSummary {
                        heuristic: h,
                        technique: Some(t.to_string()),
                        sil_milestones: sil_milestones(&points),
                        points,
                    });
                }
            }
            summaries.push(PlanKindSummary {
                kind,
                density_class: class,
                probability_source: source,
                total_bits: report.total_bits(),
                baseline_fit: baseline,
                baseline_sil: sil_verdict(baseline),
                curves,
                unavailable,
            });
        }
        ctx.write_json("plan/summary.json", &summaries)
    }

    fn stage_compare(&self, ctx: &mut Ctx) -> Result<(), PipelineError> {
        use std::io::Write;
        #[derive(Serialize)]
        struct FitRow {
            kind: CdmKind,
            density_class: DensityClass,
            n: f64,
            total_bits: u64,
            p_sdcc: f64,
            fit: f64,
            sil: Option<u8>,
        }
        let c = &self.config;
        let meta = ctx.metadata();
        let header = |buf: &mut Vec<u8>| {
            for (k, v) in &meta {
                writeln!(buf, "# {k}={v}").expect("write to memory");
            }
        };
        let mut cdf = Vec::new();
        header(&mut cdf);
        cdf.extend_from_slice(b"kind,cef,bits,cumulative_fraction\n");
        let mut fit_rows = Vec::new();
        for &kind in &c.kinds {
            let report = self.load_report(ctx, kind)?;
            let total = report.total_bits();
            let mut acc = 0u64;
            for (cef, bits) in report.histogram() {
                acc += bits;
                writeln!(cdf, "{kind},{cef},{bits},{:e}", acc as f64 / total.max(1) as f64).expect("write to memory");
            }
            for &class in &c.scenarios.classes {
                let p = self.load_fi(ctx, kind, class)?.overall();
                for &n in &c.fit.compare_n {
                    let params = FitParams::new(c.fit.fit_raw, n, total.max(1))?;
                    let fit = fit_rate(p, &params);
                    fit_rows.push(FitRow { kind, density_class: class, n, total_bits: total, p_sdcc: p, fit, sil: sil_verdict(fit) });
                }
            }
        }
        ctx.write("compare/cef_cdf.csv", &cdf)?;
        let mut fit_csv = Vec::new();
        header(&mut fit_csv);
        fit_csv.extend_from_slice(b"kind,density_class,n,total_bits,p_sdcc,fit,sil\n");
        for r in &fit_rows {
            writeln!(
                fit_csv,
                "{},{},{},{},{:e},{:e},{}",
                r.kind,
                r.density_class,
                r.n,
                r.total_bits,
                r.p_sdcc,
                r.fit,
                r.sil.map_or(String::new(), |s| s.to_string())
            )
            .expect("write to memory");
        }
        ctx.write("compare/fit.csv", &fit_csv)?;
        ctx.write_json("compare/summary.json", &fit_rows)
    }

    fn stage_oracle(&self, ctx: &mut Ctx) -> Result<(), PipelineError> {
        let c = &self.config;
        let o = &c.oracle;
        let grid = GridSpec::new(o.resolution, c.grid.extent_cm).map_err(|e| ConfigError {
            field: "oracle.resolution".into(),
            reason: e.to_string(),
        })?;
        let arm = c.arm.clone().unwrap_or_else(|| ArmSpec::desk_for_grid(&grid));
        let ms = generate_motion_set(&arm, &grid, o.n_poses, o.n_motions, c.seed)?;
        let batch = generate_scenarios(DensityClass::D3, o.scenarios, &grid, c.seed)?;
        let scenarios = Self::scenario_sets(&batch);
        let mut reports: Vec<OracleReport> = Vec::new();
        for &kind in &c.kinds {
            reports.push(verify_phase1(&ms, kind));
            reports.push(verify_fast_path(&ms, kind, &scenarios, o.pairs, c.seed)?);
        }
        ctx.write_json("oracle/report.json", &reports)?;
        let mismatches: u64 = reports.iter().map(|r| r.mismatch_count).sum();
        if mismatches > 0 || reports.iter().any(|r| r.checked == 0) {
            return Err(PipelineError::OracleMismatch(mismatches));
        }
        Ok(())
    }
}

/// Whether `stage` (transitively) consumes the output of `of`.
fn depends_on(stage: Stage, of: Stage) -> bool {
    let mut seen = BTreeSet::new();
    let mut todo: Vec<Stage> = stage.upstream().to_vec();
    while let Some(s) = todo.pop() {
        if s == of {
            return true;
        }
        if seen.insert(s) {
            todo.extend_from_slice(s.upstream());
        }
    }
    false
}
