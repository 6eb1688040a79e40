use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::arm::{ArmSpec, Pose};
use super::sweep::{default_steps, swept_volume};
use super::MotionError;
use crate::geometry::{io as vio, GridSpec, VoxelSet};
use crate::seed::rng_for;

pub const MOTION_SET_FORMAT: &str = "cefkit-motionset/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub id: usize,
    /// Pose indices into [`MotionSet::poses`].
    pub from: usize,
    pub to: usize,
    pub swept: VoxelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSet {
    pub arm: ArmSpec,
    pub grid: GridSpec,
    pub poses: Vec<Pose>,
    pub motions: Vec<Motion>,
    pub seed: u64,
}

impl MotionSet {
    pub fn from_pose(&self, m: &Motion) -> &Pose {
        &self.poses[m.from]
    }

    pub fn to_pose(&self, m: &Motion) -> &Pose {
        &self.poses[m.to]
    }

    pub fn to_json(&self) -> Result<String, MotionError> {
        let doc = MotionSetDoc {
            format: MOTION_SET_FORMAT.into(),
            seed: self.seed,
            arm: self.arm.clone(),
            grid: self.grid,
            poses: self.poses.clone(),
            motions: self
                .motions
                .iter()
                .map(|m| MotionDoc { id: m.id, from: m.from, to: m.to, swept: vio::to_text(&m.swept) })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, MotionError> {
        let doc: MotionSetDoc = serde_json::from_str(text)?;
        if doc.format != MOTION_SET_FORMAT {
            return Err(MotionError::Malformed(format!("unknown format tag {:?}", doc.format)));
        }
        doc.arm.validate()?;
        doc.grid.validate()?;
        for p in &doc.poses {
            p.validate(&doc.arm)?;
        }
        let mut motions = Vec::with_capacity(doc.motions.len());
        for (i, m) in doc.motions.into_iter().enumerate() {
            if m.id != i {
                return Err(MotionError::Malformed(format!("motion ids must be dense; found {} at {i}", m.id)));
            }
            if m.from >= doc.poses.len() || m.to >= doc.poses.len() {
                return Err(MotionError::Malformed(format!("motion {i} references a missing pose")));
            }
            let swept = vio::from_text(doc.grid, &m.swept)?;
            if swept.is_empty() {
                return Err(MotionError::Malformed(format!("motion {i} has an empty swept volume")));
            }
            motions.push(Motion { id: m.id, from: m.from, to: m.to, swept });
        }
        Ok(Self { arm: doc.arm, grid: doc.grid, poses: doc.poses, motions, seed: doc.seed })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionSetDoc {
    format: String,
    seed: u64,
    arm: ArmSpec,
    grid: GridSpec,
    poses: Vec<Pose>,
    motions: Vec<MotionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionDoc {
    id: usize,
    from: usize,
    to: usize,
    /// Swept cells in the newline-delimited `x,y,z` format.
    swept: String,
}

/// Samples `n_poses` poses uniformly within the joint limits and connects
/// them with `n_motions` edges.
///
/// Edges come from k-nearest-neighbour rounds (joint-space Euclidean, ties by
/// pose id) with k grown until the budget is reached; the last round is cut
/// shortest-edge-first. Motions are numbered in `(from, to)` order.
pub fn generate_motion_set(
    arm: &ArmSpec,
    grid: &GridSpec,
    n_poses: usize,
    n_motions: usize,
    seed: u64,
) -> Result<MotionSet, MotionError> {
    arm.validate_in(grid)?;
    if n_poses < 2 {
        return Err(MotionError::InvalidCounts(format!("need at least 2 poses, got {n_poses}")));
    }
    if n_motions < 1 {
        return Err(MotionError::InvalidCounts("need at least one motion".into()));
    }
    let max = n_poses * (n_poses - 1) / 2;
    if n_motions > max {
        return Err(MotionError::TooManyMotions { requested: n_motions, n_poses, max });
    }

    let mut rng = rng_for(seed, "poses", 0);
    let poses: Vec<Pose> = (0..n_poses)
        .map(|_| Pose::new(arm.joint_limits.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()))
        .collect();

    let edges = select_edges(&poses, n_motions);
    let motions = edges
        .par_iter()
        .enumerate()
        .map(|(id, &(from, to))| {
            let (a, b) = (&poses[from], &poses[to]);
            let steps = default_steps(arm, a, b, grid);
            Motion { id, from, to, swept: swept_volume(arm, a, b, grid, steps) }
        })
        .collect::<Vec<_>>();
    if let Some(m) = motions.iter().find(|m| m.swept.is_empty()) {
        return Err(MotionError::Malformed(format!("motion {} sweeps no voxel centre", m.id)));
    }
    Ok(MotionSet { arm: arm.clone(), grid: *grid, poses, motions, seed })
}

fn select_edges(poses: &[Pose], budget: usize) -> Vec<(usize, usize)> {
    let n = poses.len();
    let neighbours: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut v: Vec<(f64, usize)> =
                (0..n).filter(|&q| q != p).map(|q| (poses[p].distance(&poses[q]), q)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        })
        .collect();

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for k in 0..n - 1 {
        let mut round: Vec<(f64, usize, usize)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (p, nbrs) in neighbours.iter().enumerate() {
            let (d, q) = nbrs[k];
            let e = (p.min(q), p.max(q));
            if !edges.contains(&e) && seen.insert(e) {
                round.push((d, e.0, e.1));
            }
        }
        if edges.len() + round.len() <= budget {
            edges.extend(round.iter().map(|&(_, a, b)| (a, b)));
        } else {
            round.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let take = budget - edges.len();
            edges.extend(round.iter().take(take).map(|&(_, a, b)| (a, b)));
        }
        if edges.len() == budget {
            break;
        }
    }
    edges.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(8, 84.0).unwrap()
    }

    #[test]
    fn two_poses_one_motion() {
        let ms = generate_motion_set(&ArmSpec::desk_default(), &grid(), 2, 1, 3).unwrap();
        assert_eq!(ms.motions.len(), 1);
        assert_eq!((ms.motions[0].from, ms.motions[0].to), (0, 1));
    }

    #[test]
    fn too_many_motions() {
        let err = generate_motion_set(&ArmSpec::desk_default(), &grid(), 4, 7, 3).unwrap_err();
        assert!(matches!(err, MotionError::TooManyMotions { requested: 7, max: 6, .. }));
    }

    #[test]
    fn complete_graph_is_reachable() {
        let ms = generate_motion_set(&ArmSpec::desk_default(), &grid(), 5, 10, 1).unwrap();
        assert_eq!(ms.motions.len(), 10);
    }

    #[test]
    fn json_round_trip() {
        let ms = generate_motion_set(&ArmSpec::desk_default(), &grid(), 6, 8, 11).unwrap();
        let text = ms.to_json().unwrap();
        assert_eq!(MotionSet::from_json(&text).unwrap(), ms);
        assert!(MotionSet::from_json(&text.replace("cefkit-motionset/1", "other")).is_err());
    }
}
