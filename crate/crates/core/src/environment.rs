//! Random cuboid obstacle scenarios at four density classes.
//!
//! Each scenario holds 3 to 12 cuboids with edges drawn uniformly from
//! 5 to 20 cm, placed uniformly so they lie inside the environment. The
//! obstacle count is the only free parameter, so a calibration pass measures
//! the mean occupancy for every count and picks the count range whose mean
//! lands on the class target.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::geometry::{GeometryError, GridSpec, VoxelCoord, VoxelSet};
use crate::seed::rng_for;

pub const MIN_OBSTACLES: u32 = 3;
pub const MAX_OBSTACLES: u32 = 12;
pub const MIN_EDGE_CM: f64 = 5.0;
pub const MAX_EDGE_CM: f64 = 20.0;
/// Accepted relative deviation of a batch's mean occupancy from the target.
pub const OCCUPANCY_TOLERANCE: f64 = 0.20;
/// Scenarios per obstacle count in the calibration pass.
pub const CALIBRATION_SAMPLES: u64 = 400;
/// Batches drawn before giving up on the tolerance.
pub const MAX_BATCH_ATTEMPTS: u64 = 64;
pub const SCENARIO_BATCH_FORMAT: &str = "cefkit-scenarios/1";

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid scenario request: {0}")]
    Invalid(String),
    #[error(
        "{class} target occupancy {target:.4} is unreachable on a {extent_cm} cm environment; \
         obstacle counts 3..=12 give {lo:.4}..{hi:.4}"
    )]
    Unreachable { class: DensityClass, target: f64, extent_cm: f64, lo: f64, hi: f64 },
    #[error("no batch of {count} {class} scenarios met the occupancy tolerance within {attempts} attempts")]
    Tolerance { class: DensityClass, count: usize, attempts: u64 },
    #[error("malformed scenario batch: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("scenario batch json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DensityClass {
    D1,
    D2,
    D3,
    D4,
}

impl DensityClass {
    pub const ALL: [DensityClass; 4] = [DensityClass::D1, DensityClass::D2, DensityClass::D3, DensityClass::D4];

    /// `x` for class `Dx`.
    pub fn percent(&self) -> u32 {
        *self as u32 + 1
    }

    pub fn target_occupancy(&self) -> f64 {
        0.01 * self.percent() as f64
    }
}

impl fmt::Display for DensityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.percent())
    }
}

impl FromStr for DensityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "D1" => Ok(DensityClass::D1),
            "D2" => Ok(DensityClass::D2),
            "D3" => Ok(DensityClass::D3),
            "D4" => Ok(DensityClass::D4),
            _ => Err(format!("unknown density class {s:?} (expected D1..D4)")),
        }
    }
}

/// Axis-aligned box in centimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cuboid {
    pub min_cm: [f64; 3],
    pub size_cm: [f64; 3],
}

impl Cuboid {
    pub fn max_cm(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.min_cm[a] + self.size_cm[a])
    }

    pub fn volume_cm3(&self) -> f64 {
        self.size_cm.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: usize,
    pub obstacles: Vec<Cuboid>,
    pub occupancy: VoxelSet,
}

impl Scenario {
    pub fn occupancy_fraction(&self) -> f64 {
        self.occupancy.len() as f64 / self.occupancy.grid().cell_count() as f64
    }
}

/// Cells whose centre lies inside (or on the boundary of) any cuboid.
pub fn rasterize_obstacles(cuboids: &[Cuboid], grid: &GridSpec) -> VoxelSet {
    let mut out = VoxelSet::new(*grid);
    let e = grid.voxel_edge_cm();
    let r = grid.resolution as i64;
    for c in cuboids {
        let hi = c.max_cm();
        let mut lo_i = [0u16; 3];
        let mut hi_i = [0u16; 3];
        let mut empty = false;
        for a in 0..3 {
            let first = ((c.min_cm[a] / e - 0.5).ceil() as i64).max(0);
            let last = ((hi[a] / e - 0.5).floor() as i64).min(r - 1);
            if first > last {
                empty = true;
                break;
            }
            lo_i[a] = first as u16;
            hi_i[a] = last as u16;
        }
        if !empty {
            let lo = VoxelCoord::new(lo_i[0], lo_i[1], lo_i[2]);
            let hi = VoxelCoord::new(hi_i[0], hi_i[1], hi_i[2]);
            out.fill_box(lo, hi).expect("clamped to the grid");
        }
    }
    out
}

/// Obstacle-count range chosen for one class on one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub count_min: u32,
    pub count_max: u32,
    /// Mean measured occupancy for counts 3..=12.
    pub per_count_occupancy: Vec<f64>,
    pub expected_occupancy: f64,
}

/// Measures occupancy per obstacle count and picks a count range for `class`.
///
/// Among ranges whose expected occupancy is within 5% of the target the
/// widest wins; otherwise the closest. Fails if even the closest misses the
/// batch tolerance.
pub fn calibrate(class: DensityClass, grid: &GridSpec, seed: u64) -> Result<Calibration, EnvError> {
    check_extent(grid)?;
    let per_count: Vec<f64> = (MIN_OBSTACLES..=MAX_OBSTACLES)
        .map(|n| {
            let total: f64 = (0..CALIBRATION_SAMPLES)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng_for(seed, &format!("calibration/{n}"), i);
                    let cuboids = sample_cuboids(&mut rng, n, grid.extent_cm);
                    rasterize_obstacles(&cuboids, grid).len() as f64
                })
                .sum();
            total / (CALIBRATION_SAMPLES as f64 * grid.cell_count() as f64)
        })
        .collect();

    let target = class.target_occupancy();
    let n = per_count.len();
    let mut best: Option<(usize, usize, f64)> = None;
    let score = |lo: usize, hi: usize| {
        let mean = per_count[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        ((mean - target).abs() / target, mean)
    };
    for lo in 0..n {
        for hi in lo..n {
            let (err, _) = score(lo, hi);
            let better = match best {
                None => true,
                Some((blo, bhi, berr)) => {
                    let (w, bw) = (hi - lo, bhi - blo);
                    match (err <= 0.05, berr <= 0.05) {
                        (true, true) => w > bw || (w == bw && err < berr),
                        (true, false) => true,
                        (false, true) => false,
                        (false, false) => err < berr,
                    }
                }
            };
            if better {
                best = Some((lo, hi, err));
            }
        }
    }
    let (lo, hi, err) = best.expect("at least one count range");
    if err > OCCUPANCY_TOLERANCE {
        return Err(EnvError::Unreachable {
            class,
            target,
            extent_cm: grid.extent_cm,
            lo: per_count[0],
            hi: per_count[n - 1],
        });
    }
    Ok(Calibration {
        count_min: MIN_OBSTACLES + lo as u32,
        count_max: MIN_OBSTACLES + hi as u32,
        expected_occupancy: score(lo, hi).1,
        per_count_occupancy: per_count,
    })
}

/// A generated batch plus the facts needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBatch {
    pub class: DensityClass,
    pub seed: u64,
    pub grid: GridSpec,
    pub calibration: Calibration,
    /// Index of the accepted attempt.
    pub attempt: u64,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioBatch {
    pub fn mean_occupancy(&self) -> f64 {
        self.scenarios.iter().map(Scenario::occupancy_fraction).sum::<f64>() / self.scenarios.len() as f64
    }

    pub fn to_json(&self) -> Result<String, EnvError> {
        let doc = BatchDoc {
            format: SCENARIO_BATCH_FORMAT.into(),
            class: self.class,
            seed: self.seed,
            grid: self.grid,
            calibration: self.calibration.clone(),
            attempt: self.attempt,
            mean_occupancy: self.mean_occupancy(),
            scenarios: self.scenarios.iter().map(|s| ScenarioDoc { id: s.id, obstacles: s.obstacles.clone() }).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    /// Reloads a batch; occupancy is re-rasterized from the cuboids.
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let doc: BatchDoc = serde_json::from_str(text)?;
        if doc.format != SCENARIO_BATCH_FORMAT {
            return Err(EnvError::Malformed(format!("unknown format tag {:?}", doc.format)));
        }
        doc.grid.validate()?;
        let scenarios = doc
            .scenarios
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if s.id != i {
                    return Err(EnvError::Malformed(format!("scenario ids must be dense; found {} at {i}", s.id)));
                }
                let occupancy = rasterize_obstacles(&s.obstacles, &doc.grid);
                Ok(Scenario { id: s.id, obstacles: s.obstacles, occupancy })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { class: doc.class, seed: doc.seed, grid: doc.grid, calibration: doc.calibration, attempt: doc.attempt, scenarios })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchDoc {
    format: String,
    class: DensityClass,
    seed: u64,
    grid: GridSpec,
    calibration: Calibration,
    attempt: u64,
    mean_occupancy: f64,
    scenarios: Vec<ScenarioDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    id: usize,
    obstacles: Vec<Cuboid>,
}

/// Generates `count` scenarios of `class`.
///
/// Scenario `i` of attempt `k` draws from the stream `"scenarios/{class}/{k}"`
/// item `i`, so scenarios can be produced independently and in parallel.
/// Attempts continue until the batch mean occupancy is within 20% of the
/// class target.
pub fn generate_scenarios(class: DensityClass, count: usize, grid: &GridSpec, seed: u64) -> Result<ScenarioBatch, EnvError> {
    if count == 0 {
        return Err(EnvError::Invalid("scenario count must be at least 1".into()));
    }
    let calibration = calibrate(class, grid, seed)?;
    let target = class.target_occupancy();
    for attempt in 0..MAX_BATCH_ATTEMPTS {
        let stream = format!("scenarios/{class}/{attempt}");
        let scenarios: Vec<Scenario> = (0..count)
            .into_par_iter()
            .map(|id| {
                let mut rng = rng_for(seed, &stream, id as u64);
                let n = rng.gen_range(calibration.count_min..=calibration.count_max);
                let obstacles = sample_cuboids(&mut rng, n, grid.extent_cm);
                let occupancy = rasterize_obstacles(&obstacles, grid);
                Scenario { id, obstacles, occupancy }
            })
            .collect();
        let batch = ScenarioBatch { class, seed, grid: *grid, calibration: calibration.clone(), attempt, scenarios };
        if (batch.mean_occupancy() - target).abs() <= OCCUPANCY_TOLERANCE * target {
            return Ok(batch);
        }
    }
    Err(EnvError::Tolerance { class, count, attempts: MAX_BATCH_ATTEMPTS })
}

fn check_extent(grid: &GridSpec) -> Result<(), EnvError> {
    grid.validate()?;
    if grid.extent_cm < MAX_EDGE_CM {
        return Err(EnvError::Invalid(format!(
            "a {} cm environment cannot hold a {MAX_EDGE_CM} cm obstacle",
            grid.extent_cm
        )));
    }
    Ok(())
}

fn sample_cuboids<R: Rng>(rng: &mut R, n: u32, extent_cm: f64) -> Vec<Cuboid> {
    (0..n)
        .map(|_| {
            let size_cm: [f64; 3] = std::array::from_fn(|_| rng.gen_range(MIN_EDGE_CM..=MAX_EDGE_CM));
            let min_cm = std::array::from_fn(|a| rng.gen_range(0.0..=extent_cm - size_cm[a]));
            Cuboid { min_cm, size_cm }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(16, 84.0).unwrap()
    }

    #[test]
    fn whole_cube_and_single_voxel() {
        let g = grid();
        let all = Cuboid { min_cm: [0.0; 3], size_cm: [84.0; 3] };
        assert_eq!(rasterize_obstacles(&[all], &g).len(), g.cell_count());
        // Centre of cell (2, 3, 4) is (13.125, 18.375, 23.625).
        let tiny = Cuboid { min_cm: [13.0, 18.25, 23.5], size_cm: [0.25; 3] };
        assert_eq!(rasterize_obstacles(&[tiny], &g).to_vec(), vec![VoxelCoord::new(2, 3, 4)]);
    }

    #[test]
    fn class_labels() {
        assert_eq!(DensityClass::D3.to_string(), "D3");
        assert_eq!("d4".parse::<DensityClass>().unwrap(), DensityClass::D4);
        assert!((DensityClass::D2.target_occupancy() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn single_scenario_is_reproducible() {
        let a = generate_scenarios(DensityClass::D2, 1, &grid(), 5).unwrap();
        let b = generate_scenarios(DensityClass::D2, 1, &grid(), 5).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = ScenarioBatch::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn batch_respects_ranges() {
        let batch = generate_scenarios(DensityClass::D4, 200, &grid(), 9).unwrap();
        let target = DensityClass::D4.target_occupancy();
        assert!((batch.mean_occupancy() - target).abs() <= 0.2 * target);
        for s in &batch.scenarios {
            assert!((3..=12).contains(&s.obstacles.len()));
            for c in &s.obstacles {
                for a in 0..3 {
                    assert!((5.0..=20.0).contains(&c.size_cm[a]));
                    assert!(c.min_cm[a] >= 0.0 && c.max_cm()[a] <= 84.0);
                }
            }
        }
    }

    #[test]
    fn small_environment_is_rejected() {
        let g = GridSpec::new(16, 16.0).unwrap();
        assert!(generate_scenarios(DensityClass::D1, 4, &g, 1).is_err());
        let huge = GridSpec::new(16, 1000.0).unwrap();
        assert!(matches!(generate_scenarios(DensityClass::D4, 4, &huge, 1), Err(EnvError::Unreachable { .. })));
    }
}
