use super::arm::{forward_kinematics, ArmSpec, Pose, Segment};
use crate::geometry::{GridSpec, VoxelCoord, VoxelSet};

/// Adds every voxel whose centre lies within `radius` of `seg`.
pub fn rasterize_capsule(grid: &GridSpec, seg: &Segment, radius: f64, out: &mut VoxelSet) {
    let edge = grid.voxel_edge_cm();
    let r = grid.resolution as i64;
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for a in 0..3 {
        let mn = seg.start[a].min(seg.end[a]) - radius;
        let mx = seg.start[a].max(seg.end[a]) + radius;
        // Centres sit at (i + 0.5) * edge.
        lo[a] = ((mn / edge - 0.5).ceil() as i64).max(0);
        hi[a] = ((mx / edge - 0.5).floor() as i64).min(r - 1);
        if lo[a] > hi[a] {
            return;
        }
    }
    let d = [seg.end[0] - seg.start[0], seg.end[1] - seg.start[1], seg.end[2] - seg.start[2]];
    let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let r2 = radius * radius;
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for z in lo[2]..=hi[2] {
                let c = grid.cell_center(VoxelCoord::new(x as u16, y as u16, z as u16));
                let w = [c[0] - seg.start[0], c[1] - seg.start[1], c[2] - seg.start[2]];
                let t = if dd > 0.0 {
                    ((w[0] * d[0] + w[1] * d[1] + w[2] * d[2]) / dd).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let p = [w[0] - t * d[0], w[1] - t * d[1], w[2] - t * d[2]];
                if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= r2 {
                    out.insert_unchecked(VoxelCoord::new(x as u16, y as u16, z as u16));
                }
            }
        }
    }
}

pub fn rasterize_pose(arm: &ArmSpec, pose: &Pose, grid: &GridSpec, out: &mut VoxelSet) {
    for seg in forward_kinematics(arm, pose) {
        rasterize_capsule(grid, &seg, arm.link_radius_cm, out);
    }
}

/// Interpolation intervals that keep every point of the arm moving at most
/// half a voxel edge per step.
pub fn default_steps(arm: &ArmSpec, from: &Pose, to: &Pose, grid: &GridSpec) -> usize {
    let mut bound = 0.0;
    let mut outboard: f64 = arm.reach_cm();
    for (i, (a, b)) in from.joint_angles.iter().zip(&to.joint_angles).enumerate() {
        bound += (b - a).abs() * outboard;
        outboard -= arm.link_lengths_cm[i];
    }
    let steps = (bound / (grid.voxel_edge_cm() / 2.0)).ceil() as usize;
    steps.max(2)
}

/// Union of the arm's rasterization over `steps` equal joint-space intervals
/// between the two poses (`steps + 1` sampled poses, both ends included).
///
/// The endpoints are put in a canonical order first so that the result does
/// not depend on the direction of travel, and halving the interval width
/// only adds sample poses.
pub fn swept_volume(arm: &ArmSpec, from: &Pose, to: &Pose, grid: &GridSpec, steps: usize) -> VoxelSet {
    let steps = steps.max(1);
    let (a, b) = if lex_le(&from.joint_angles, &to.joint_angles) { (from, to) } else { (to, from) };
    let mut out = VoxelSet::new(*grid);
    for k in 0..=steps {
        let pose = if k == steps {
            b.clone()
        } else {
            let t = k as f64 / steps as f64;
            Pose::new(
                a.joint_angles
                    .iter()
                    .zip(&b.joint_angles)
                    .map(|(p, q)| p + (q - p) * t)
                    .collect(),
            )
        };
        rasterize_pose(arm, &pose, grid, &mut out);
    }
    out
}

fn lex_le(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn tiny_capsule_hits_one_voxel() {
        let g = GridSpec::new(8, 8.0).unwrap();
        let mut out = VoxelSet::new(g);
        let seg = Segment { start: [2.5, 2.5, 2.5], end: [2.5, 2.5, 2.5] };
        rasterize_capsule(&g, &seg, 0.1, &mut out);
        assert_eq!(out.to_vec(), vec![VoxelCoord::new(2, 2, 2)]);
    }

    #[test]
    fn stationary_motion_equals_single_pose() {
        let arm = ArmSpec::desk_default();
        let g = GridSpec::new(16, 84.0).unwrap();
        let p = Pose::new(vec![0.3, -0.2, 1.0, 0.5]);
        let mut single = VoxelSet::new(g);
        rasterize_pose(&arm, &p, &g, &mut single);
        assert_eq!(swept_volume(&arm, &p, &p, &g, 7), single);
    }

    #[test]
    fn steps_cover_half_voxel_motion() {
        let arm = ArmSpec {
            dof: 2,
            link_lengths_cm: vec![10.0, 10.0],
            link_radius_cm: 1.0,
            joint_limits: vec![(-PI, PI); 2],
            base_position_cm: [20.0; 3],
        };
        let g = GridSpec::new(16, 40.0).unwrap();
        let a = Pose::new(vec![0.0, 0.0]);
        let b = Pose::new(vec![FRAC_PI_2, 0.0]);
        // tip travels 20 * pi/2 ≈ 31.4 cm; half voxel is 1.25 cm
        assert_eq!(default_steps(&arm, &a, &b, &g), 26);
    }
}
