//! Property tests for the cross-module invariants.

use std::collections::BTreeMap;

use cefkit::cdm::{decode, detect_collisions, encode, flip_bit, CdmKind};
use cefkit::environment::{generate_scenarios, DensityClass};
use cefkit::fi::{exhaustive_fi, phase1_cef, run_cef_aware, uniform_statistical_fi};
use cefkit::geometry::{box_cover, build_octree, decode_octree, exposed_surface_area, GridSpec, VoxelCoord, VoxelSet};
use cefkit::motion::{generate_motion_set, swept_volume, ArmSpec, Motion, MotionSet, Pose};
use cefkit::planner::{fit_reduction_curve, rank_structures, AuxData, BitModel, FitParams, Heuristic};
use proptest::prelude::*;

fn grid(r: u32) -> GridSpec {
    GridSpec::new(r, r as f64).unwrap()
}

fn arb_set(r: u16, max: usize) -> impl Strategy<Value = VoxelSet> {
    prop::collection::vec((0..r, 0..r, 0..r), 0..max).prop_map(move |cells| {
        VoxelSet::from_coords(grid(r as u32), cells.into_iter().map(|(x, y, z)| VoxelCoord::new(x, y, z))).unwrap()
    })
}

fn neighbours(c: VoxelCoord) -> impl Iterator<Item = (i64, i64, i64)> {
    let (x, y, z) = (c.x as i64, c.y as i64, c.z as i64);
    [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)].into_iter().map(move |(dx, dy, dz)| (x + dx, y + dy, z + dz))
}

fn single_motion(swept: VoxelSet) -> MotionSet {
    let g = *swept.grid();
    MotionSet { arm: ArmSpec::desk_for_grid(&g), grid: g, poses: Vec::new(), motions: vec![Motion { id: 0, from: 0, to: 0, swept }], seed: 0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn exposed_area_bound_and_equality(c in arb_set(8, 30), s in arb_set(8, 60)) {
        let s = s.difference(&c).unwrap();
        let area = exposed_surface_area(&c, &s).unwrap();
        let bound = 6 * c.len() as u64;
        prop_assert!(area <= bound);
        let isolated = c.iter().all(|v| neighbours(v).all(|(x, y, z)| !c.contains_signed(x, y, z) && !s.contains_signed(x, y, z)));
        prop_assert_eq!(area == bound, isolated);
    }

    #[test]
    fn exposed_area_is_monotone_in_the_erroneous_set(c in arb_set(8, 30), s in arb_set(8, 60), extra in arb_set(8, 60)) {
        let s = s.difference(&c).unwrap();
        let bigger = s.union(&extra).unwrap().difference(&c).unwrap();
        prop_assert!(exposed_surface_area(&c, &bigger).unwrap() <= exposed_surface_area(&c, &s).unwrap());
    }

    #[test]
    fn box_cover_is_exact(s in arb_set(8, 80)) {
        prop_assume!(!s.is_empty());
        let mut union = VoxelSet::new(*s.grid());
        for b in box_cover(&s).unwrap() {
            let bx = VoxelSet::from_box(*s.grid(), b.lo, b.hi).unwrap();
            prop_assert!(bx.is_subset(&s).unwrap());
            union.union_with(&bx).unwrap();
        }
        prop_assert_eq!(union, s);
    }

    #[test]
    fn octree_round_trip_and_node_count(depth in 3u32..=5, cells in prop::collection::vec((0u16..32, 0u16..32, 0u16..32), 0..120)) {
        let r = 1u16 << depth;
        let s = VoxelSet::from_coords(grid(r as u32), cells.into_iter().map(|(x, y, z)| VoxelCoord::new(x % r, y % r, z % r))).unwrap();
        let nodes = build_octree(&s, depth).unwrap();
        prop_assert_eq!(decode_octree(&nodes, *s.grid()), s.clone());
        // Partially occupied cubes of edge ≥ 2, root included.
        let mut partial = 0;
        let mut size = r;
        while size >= 2 {
            for ox in (0..r).step_by(size as usize) {
                for oy in (0..r).step_by(size as usize) {
                    for oz in (0..r).step_by(size as usize) {
                        let cube = VoxelSet::from_box(*s.grid(), VoxelCoord::new(ox, oy, oz), VoxelCoord::new(ox + size - 1, oy + size - 1, oz + size - 1)).unwrap();
                        let n = cube.intersection_len(&s).unwrap();
                        if n > 0 && n < cube.len() {
                            partial += 1;
                        }
                    }
                }
            }
            size /= 2;
        }
        prop_assert!(nodes.len() <= partial + 1);
        prop_assert_eq!(nodes.len(), partial.max(1));
    }

    #[test]
    fn a4_flip_toggles_exactly_one_cell(s in arb_set(8, 80), bit in 0usize..512) {
        let img = encode(CdmKind::A4FlatOctree, 0, &s).unwrap();
        let before = decode(&img);
        let after = decode(&flip_bit(&img, bit).unwrap());
        let changed = before.union(&after).unwrap().len() - before.intersection_len(&after).unwrap();
        prop_assert_eq!(changed, 1);
        let cell = grid(8).from_x_fastest_index(bit);
        prop_assert_ne!(before.contains(cell), after.contains(cell));
    }

    /// A flip that only adds stored voxels, or changes nothing, has no
    /// critical space, and every collision seen before is still seen.
    #[test]
    fn growing_flips_are_harmless(s in arb_set(8, 40), query in arb_set(8, 80)) {
        prop_assume!(!s.is_empty());
        let ms = single_motion(s.clone());
        for kind in CdmKind::ALL {
            let img = encode(kind, 0, &s).unwrap();
            let report = phase1_cef(&ms, kind);
            let stored = decode(&img);
            let before = detect_collisions(&img, &query).unwrap();
            for b in 0..img.bits.len() {
                let faulty = flip_bit(&img, b).unwrap();
                if stored.is_subset(&decode(&faulty)).unwrap() {
                    prop_assert!(report.motions[0].entry(b as u32).is_none(), "{} bit {} has a critical space", kind, b);
                    let after = detect_collisions(&faulty, &query).unwrap();
                    prop_assert!(before.iter().zip(&after).all(|(x, y)| !x || *y));
                }
            }
        }
    }

    #[test]
    fn sweep_is_symmetric_and_contains_its_endpoints(
        a in prop::collection::vec(-1.5f64..1.5, 4),
        b in prop::collection::vec(-1.5f64..1.5, 4),
        steps in 2usize..24,
    ) {
        let g = GridSpec::new(16, 84.0).unwrap();
        let arm = ArmSpec::desk_for_grid(&g);
        let (pa, pb) = (Pose::new(a), Pose::new(b));
        let ab = swept_volume(&arm, &pa, &pb, &g, steps);
        prop_assert_eq!(&ab, &swept_volume(&arm, &pb, &pa, &g, steps));
        prop_assert!(swept_volume(&arm, &pa, &pa, &g, steps).is_subset(&ab).unwrap());
        // Every swept cell centre lies within reach + link radius of the base.
        let limit = arm.reach_cm() + arm.link_radius_cm + 1e-9;
        for v in ab.iter() {
            let c = g.cell_center(v);
            let d: f64 = (0..3).map(|k| (c[k] - arm.base_position_cm[k]).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d <= limit, "{:?} at {} cm", v, d);
        }
    }
}

fn small_instance(seed: u64) -> (MotionSet, Vec<VoxelSet>) {
    let g = GridSpec::new(8, 84.0).unwrap();
    let ms = generate_motion_set(&ArmSpec::desk_for_grid(&g), &g, 12, 24, seed).unwrap();
    let sc = generate_scenarios(DensityClass::D3, 120, &g, seed).unwrap().scenarios.into_iter().map(|s| s.occupancy).collect();
    (ms, sc)
}

#[test]
fn occupancy_rises_with_density_class() {
    let g = GridSpec::new(16, 84.0).unwrap();
    for seed in [1, 2] {
        let means: Vec<f64> =
            DensityClass::ALL.iter().map(|&d| generate_scenarios(d, 1000, &g, seed).unwrap().mean_occupancy()).collect();
        assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    }
}

#[test]
fn sampled_modes_are_pure_functions_of_their_seed() {
    let (ms, sc) = small_instance(4);
    for kind in CdmKind::ALL {
        assert_eq!(run_cef_aware(&ms, kind, &sc, 8, 9, 0.95).unwrap(), run_cef_aware(&ms, kind, &sc, 8, 9, 0.95).unwrap());
        let u = |s| uniform_statistical_fi(&ms, kind, &sc, 500, s, true, 0.95).unwrap();
        assert_eq!(u(3), u(3));
    }
}

#[test]
fn overall_probability_is_the_group_weighted_mean() {
    let (ms, sc) = small_instance(5);
    for kind in CdmKind::ALL {
        let (_, t) = run_cef_aware(&ms, kind, &sc, 8, 1, 0.95).unwrap();
        let bits: u64 = t.groups.iter().map(|g| g.bits).sum();
        let weighted: f64 = t.groups.iter().map(|g| g.p_hat * g.bits as f64).sum::<f64>() / bits as f64;
        assert!((t.overall - weighted).abs() < 1e-12);
        for g in &t.groups {
            assert_eq!(g.trials, g.sampled_bits * sc.len() as u64);
            if g.trials > 0 {
                let scale = (g.bits - g.empty_critical_bits) as f64 / g.bits as f64;
                assert!((g.p_hat - g.sdcc as f64 / g.trials as f64 * scale).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn reduction_curves_fall_to_zero_for_every_heuristic() {
    let fractions: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    for seed in [1, 2, 3] {
        let (ms, sc) = small_instance(seed);
        for kind in CdmKind::ALL {
            let report = phase1_cef(&ms, kind);
            let exh = exhaustive_fi(&ms, kind, &sc, u64::MAX).unwrap();
            let params = FitParams::new(20.49, 3600.0, report.total_bits()).unwrap();
            let access: BTreeMap<u32, Vec<u64>> = cefkit::planner::access_frequency(&ms, kind, &sc[..10]).unwrap();
            let boxes = cefkit::planner::box_volumes(&ms);
            let aux = AuxData { exhaustive: Some(&exh), access_counts: Some(&access), box_volumes: Some(&boxes), seed: Some(seed) };
            for h in Heuristic::ALL.into_iter().filter(|h| h.applies_to(kind)) {
                let ranking = rank_structures(h, &report, &aux).unwrap();
                let curve = fit_reduction_curve(&ranking, &report, BitModel::Exhaustive(&exh), &params, &fractions).unwrap();
                assert!(curve.windows(2).all(|w| w[1].residual_fit <= w[0].residual_fit), "{kind} {h}");
                assert_eq!(curve.last().unwrap().residual_fit, 0.0, "{kind} {h}");
            }
        }
    }
}

#[test]
fn a4_positive_cef_structures_carry_the_risk() {
    let g = GridSpec::new(16, 84.0).unwrap();
    let ms = generate_motion_set(&ArmSpec::desk_for_grid(&g), &g, 64, 128, 3).unwrap();
    let sc: Vec<VoxelSet> = generate_scenarios(DensityClass::D3, 200, &g, 3).unwrap().scenarios.into_iter().map(|s| s.occupancy).collect();
    let kind = CdmKind::A4FlatOctree;
    let report = phase1_cef(&ms, kind);
    let exh = exhaustive_fi(&ms, kind, &sc, u64::MAX).unwrap();
    let params = FitParams::new(20.49, 3600.0, report.total_bits()).unwrap();
    let ranking = rank_structures(Heuristic::Cef, &report, &AuxData::default()).unwrap();
    let mut positive: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for b in report.bits() {
        *positive.entry((b.motion_id, b.structure_id)).or_default() += b.cef;
    }
    let share = positive.values().filter(|&&c| c > 0).count() as f64 / positive.len() as f64;
    assert!(share < 0.2, "positive-CEF structures {share}");
    let curve = fit_reduction_curve(&ranking, &report, BitModel::Exhaustive(&exh), &params, &[0.0, share]).unwrap();
    let achieved = 1.0 - curve[1].residual_fit / curve[0].residual_fit;
    assert!(achieved >= 0.99, "{achieved}");
}

#[test]
fn group_and_exhaustive_residuals_agree_within_the_margins() {
    let fractions = [0.0, 0.1, 0.25, 0.5, 0.75];
    for seed in [1, 2] {
        let (ms, sc) = small_instance(seed);
        for kind in CdmKind::ALL {
            let (report, table) = run_cef_aware(&ms, kind, &sc, 16, seed, 0.95).unwrap();
            let exh = exhaustive_fi(&ms, kind, &sc, u64::MAX).unwrap();
            let params = FitParams::new(20.49, 3600.0, report.total_bits()).unwrap();
            let slack = params.fit_of_sum(table.groups.iter().map(|g| g.error_margin * g.bits as f64).sum());
            let ranking = rank_structures(Heuristic::Cef, &report, &AuxData::default()).unwrap();
            let by_groups = fit_reduction_curve(&ranking, &report, BitModel::Groups(&table), &params, &fractions).unwrap();
            let exact = fit_reduction_curve(&ranking, &report, BitModel::Exhaustive(&exh), &params, &fractions).unwrap();
            for (a, b) in by_groups.iter().zip(&exact) {
                assert!((a.residual_fit - b.residual_fit).abs() <= slack, "{kind} f={} {} vs {}", a.fraction, a.residual_fit, b.residual_fit);
            }
        }
    }
}
