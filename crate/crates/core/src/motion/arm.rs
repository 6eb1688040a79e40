use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use super::MotionError;
use crate::geometry::GridSpec;

/// A serial chain of straight capsule links.
///
/// Joint `i` rotates about the local z axis when `i` is even and about the
/// local y axis when `i` is odd; each link extends along its local +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub dof: usize,
    pub link_lengths_cm: Vec<f64>,
    pub link_radius_cm: f64,
    /// Inclusive `(min, max)` angle per joint, radians.
    pub joint_limits: Vec<(f64, f64)>,
    pub base_position_cm: [f64; 3],
}

impl ArmSpec {
    /// The 4-DOF, 42 cm reach arm used by the desk-scale experiments, with
    /// its base at the centre of an 84 cm environment.
    pub fn desk_default() -> Self {
        Self {
            dof: 4,
            link_lengths_cm: vec![14.0, 12.0, 10.0, 6.0],
            link_radius_cm: 3.5,
            joint_limits: vec![(-PI, PI), (-FRAC_PI_2, FRAC_PI_2), (-2.5, 2.5), (-2.0, 2.0)],
            base_position_cm: [42.0, 42.0, 42.0],
        }
    }

    /// [`desk_default`](Self::desk_default) with links at least half a voxel
    /// thick, so every motion still covers a voxel centre on coarse grids.
    pub fn desk_for_grid(grid: &GridSpec) -> Self {
        let mut arm = Self::desk_default();
        arm.link_radius_cm = arm.link_radius_cm.max(grid.voxel_edge_cm() / 2.0);
        arm
    }

    pub fn reach_cm(&self) -> f64 {
        self.link_lengths_cm.iter().sum()
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        let bad = |m: String| Err(MotionError::InvalidArm(m));
        if !(2..=7).contains(&self.dof) {
            return bad(format!("dof must be in 2..=7, got {}", self.dof));
        }
        if self.link_lengths_cm.len() != self.dof {
            return bad(format!("{} link lengths for {} joints", self.link_lengths_cm.len(), self.dof));
        }
        if self.joint_limits.len() != self.dof {
            return bad(format!("{} joint limits for {} joints", self.joint_limits.len(), self.dof));
        }
        if self.link_lengths_cm.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return bad("link lengths must be positive".into());
        }
        if !(self.link_radius_cm.is_finite() && self.link_radius_cm > 0.0) {
            return bad("link radius must be positive".into());
        }
        for (i, &(lo, hi)) in self.joint_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("joint {i} has an empty or non-finite range"));
            }
        }
        Ok(())
    }

    /// Checks that the whole workspace fits inside the grid.
    pub fn validate_in(&self, grid: &GridSpec) -> Result<(), MotionError> {
        self.validate()?;
        grid.validate()?;
        let reach = self.reach_cm();
        if reach > grid.extent_cm / 2.0 + 1e-9 {
            return Err(MotionError::InvalidArm(format!(
                "reach {reach} cm exceeds half the environment extent ({} cm)",
                grid.extent_cm
            )));
        }
        if self.base_position_cm.iter().any(|&b| b - reach < -1e-9 || b + reach > grid.extent_cm + 1e-9) {
            return Err(MotionError::InvalidArm(
                "base position leaves part of the reachable sphere outside the environment".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose {
    pub joint_angles: Vec<f64>,
}

impl Pose {
    pub fn new(joint_angles: Vec<f64>) -> Self {
        Self { joint_angles }
    }

    pub fn validate(&self, arm: &ArmSpec) -> Result<(), MotionError> {
        if self.joint_angles.len() != arm.dof {
            return Err(MotionError::InvalidPose(format!(
                "{} angles for a {}-DOF arm",
                self.joint_angles.len(),
                arm.dof
            )));
        }
        for (i, (&a, &(lo, hi))) in self.joint_angles.iter().zip(&arm.joint_limits).enumerate() {
            if !(lo..=hi).contains(&a) {
                return Err(MotionError::InvalidPose(format!("joint {i} angle {a} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        self.joint_angles
            .iter()
            .zip(&other.joint_angles)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: [f64; 3],
    pub end: [f64; 3],
}

type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn joint_rotation(joint: usize, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    if joint.is_multiple_of(2) {
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    } else {
        [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
    }
}

/// Link segments in environment coordinates (cm), base link first.
pub fn forward_kinematics(arm: &ArmSpec, pose: &Pose) -> Vec<Segment> {
    let mut frame = IDENTITY;
    let mut at = arm.base_position_cm;
    let mut segments = Vec::with_capacity(arm.dof);
    for (i, (&len, &angle)) in arm.link_lengths_cm.iter().zip(&pose.joint_angles).enumerate() {
        frame = mat_mul(&frame, &joint_rotation(i, angle));
        let end = [at[0] + frame[0][0] * len, at[1] + frame[1][0] * len, at[2] + frame[2][0] * len];
        segments.push(Segment { start: at, end });
        at = end;
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: [f64; 3], b: [f64; 3]) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn zero_pose_is_straight_along_x() {
        let arm = ArmSpec::desk_default();
        let segs = forward_kinematics(&arm, &Pose::new(vec![0.0; 4]));
        assert_eq!(segs.len(), 4);
        let mut x = 42.0;
        for (s, l) in segs.iter().zip(&arm.link_lengths_cm) {
            assert!(close(s.start, [x, 42.0, 42.0]));
            x += l;
            assert!(close(s.end, [x, 42.0, 42.0]));
        }
    }

    #[test]
    fn quarter_turn_on_first_joint_points_along_y() {
        let arm = ArmSpec {
            dof: 2,
            link_lengths_cm: vec![3.0, 2.0],
            link_radius_cm: 0.5,
            joint_limits: vec![(-PI, PI); 2],
            base_position_cm: [0.0; 3],
        };
        let segs = forward_kinematics(&arm, &Pose::new(vec![FRAC_PI_2, 0.0]));
        assert!(close(segs[0].end, [0.0, 3.0, 0.0]));
        assert!(close(segs[1].end, [0.0, 5.0, 0.0]));
    }

    #[test]
    fn validation() {
        let mut arm = ArmSpec::desk_default();
        assert!(arm.validate().is_ok());
        arm.dof = 8;
        assert!(arm.validate().is_err());
        let arm = ArmSpec::desk_default();
        assert!(arm.validate_in(&GridSpec::new(16, 84.0).unwrap()).is_ok());
        assert!(arm.validate_in(&GridSpec::new(16, 60.0).unwrap()).is_err());
        assert!(Pose::new(vec![0.0; 3]).validate(&arm).is_err());
        assert!(Pose::new(vec![0.0, 3.0, 0.0, 0.0]).validate(&arm).is_err());
    }
}
