mod common;

use common::{props, rule_oracle, truth_table_mismatches};
use packplan::properties::{derive_avoidance, estimated_weight, AvoidanceMatrix, MaterialTable, ObjectProperties};
use packplan::voxel::VoxelShape;
use proptest::prelude::*;

#[test]
fn avoidance_truth_table() {
    assert_eq!(truth_table_mismatches(), 0);
}

#[test]
fn level_means() {
    let t = MaterialTable::default();
    let want = [0.0, 0.425, 1.1, 2.8, 4.2, 7.8];
    for (level, w) in want.iter().enumerate() {
        assert!((t.level_mean_density(level as u8).unwrap() - w).abs() < 1e-12, "level {level}");
    }
    assert!(t.level_mean_density(6).is_err());
    assert!(want.windows(2).all(|p| p[0] <= p[1]));
}

#[test]
fn weights_in_kilograms() {
    let t = MaterialTable::default();
    let cube = VoxelShape::solid_box("c", 10, 10, 10).unwrap();
    let w = estimated_weight(&cube, &ObjectProperties { density_level: 2, ..Default::default() }, &t).unwrap();
    assert!((w - 1.1).abs() < 1e-12);
}

proptest! {
    #[test]
    fn avoidance_is_symmetric(a in any::<u8>(), b in any::<u8>()) {
        prop_assert_eq!(derive_avoidance(&props(a), &props(b)), derive_avoidance(&props(b), &props(a)));
    }

    #[test]
    fn matrix_matches_pairwise_rules(masks in proptest::collection::vec(any::<u8>(), 1..20)) {
        let ps: Vec<ObjectProperties> = masks.iter().map(|&m| props(m)).collect();
        let m = AvoidanceMatrix::new(ps.iter().enumerate().map(|(i, p)| (i as u32, p)));
        for i in 0..ps.len() {
            prop_assert!(!m.related(i as u32, i as u32));
            for j in 0..ps.len() {
                if i != j {
                    prop_assert_eq!(m.related(i as u32, j as u32), rule_oracle(masks[i], masks[j]));
                }
            }
        }
    }

    #[test]
    fn weight_is_rotation_invariant(nx in 1usize..8, ny in 1usize..8, nz in 1usize..8, level in 0u8..=5) {
        let t = MaterialTable::default();
        let p = ObjectProperties { density_level: level, ..Default::default() };
        let a = estimated_weight(&VoxelShape::solid_box("a", nx, ny, nz).unwrap(), &p, &t).unwrap();
        let b = estimated_weight(&VoxelShape::solid_box("b", nz, nx, ny).unwrap(), &p, &t).unwrap();
        prop_assert_eq!(a, b);
    }
}
