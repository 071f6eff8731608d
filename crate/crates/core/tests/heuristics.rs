mod common;

use std::sync::Arc;

use common::{check_heuristics, pick, scene};
use packplan::container::ContainerState;
use packplan::heuristics::{Dbl, FirstFit, Hm, MinZ, Policy};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn heuristics_match_exhaustive_oracles(seed in any::<u64>(), n in 0usize..40) {
        prop_assert_eq!(check_heuristics(seed, n), Ok(()));
    }

    #[test]
    fn heuristics_are_deterministic(seed in any::<u64>()) {
        let (cat, s, buffer) = scene(seed, 20);
        for p in [&mut Dbl as &mut dyn Policy, &mut MinZ, &mut Hm, &mut FirstFit] {
            let a = pick(p, &s, &buffer, &cat);
            prop_assert_eq!(a, pick(p, &s, &buffer, &cat));
        }
    }
}

#[test]
fn single_cube_on_empty_floor() {
    use packplan::catalog::{Catalog, ObjectRecord};
    use packplan::properties::MaterialTable;
    use packplan::voxel::VoxelShape;
    let cat = Catalog::new(
        vec![ObjectRecord {
            id: 0,
            class_name: "cube".into(),
            tag: None,
            shape: VoxelShape::solid_box("c", 3, 3, 3).unwrap(),
            properties: Default::default(),
        }],
        MaterialTable::default(),
    )
    .unwrap()
    .prepare()
    .unwrap();
    let s = ContainerState::default();
    let buffer = vec![Arc::clone(cat.get(0).unwrap())];
    for p in [&mut Dbl as &mut dyn Policy, &mut MinZ, &mut Hm, &mut FirstFit] {
        assert_eq!(pick(p, &s, &buffer, &cat), Some((0, 0, 0, 0, 0)));
    }
}

#[test]
fn deeper_pit_wins_and_pocket_beats_bridge() {
    use packplan::catalog::{Catalog, ObjectRecord};
    use packplan::properties::MaterialTable;
    use packplan::voxel::VoxelShape;
    let rec = |id: u32, d: [usize; 3]| ObjectRecord {
        id,
        class_name: format!("b{id}"),
        tag: None,
        shape: VoxelShape::solid_box("b", d[0], d[1], d[2]).unwrap(),
        properties: Default::default(),
    };
    let cat = Catalog::new(vec![rec(0, [1, 1, 5]), rec(1, [1, 1, 2]), rec(2, [2, 2, 1])], MaterialTable::default())
        .unwrap()
        .prepare()
        .unwrap();
    let tall = cat.get(0).unwrap();
    let up = tall.poses.iter().find(|p| p.height() == 5).unwrap();
    // floor of 5-high pillars except a 5-deep pit at (2,2) and a 2-deep
    // pit at (5,5)
    let mut s = ContainerState::new(8, 8, 10);
    let short = cat.get(1).unwrap();
    let up2 = short.poses.iter().find(|p| p.height() == 2).unwrap();
    for y in 0..8 {
        for x in 0..8 {
            if (x, y) == (2, 2) {
                continue;
            }
            if (x, y) == (5, 5) {
                s.place(short, up2, x, y).unwrap();
                let unit = packplan::voxel::OrientedShape::new(&VoxelShape::solid_box("s", 1, 1, 1).unwrap(), packplan::voxel::Orientation::IDENTITY);
                s.place_raw(9, Default::default(), 0.0, &Arc::new(unit), x, y).unwrap();
                continue;
            }
            s.place(tall, up, x, y).unwrap();
        }
    }
    let cube = Arc::new(VoxelShape::solid_box("c", 1, 1, 1).unwrap());
    let one = Catalog::new(
        vec![ObjectRecord {
            id: 5,
            class_name: "c".into(),
            tag: None,
            shape: (*cube).clone(),
            properties: Default::default(),
        }],
        MaterialTable::default(),
    )
    .unwrap()
    .prepare()
    .unwrap();
    let buffer = vec![Arc::clone(one.get(5).unwrap())];
    assert_eq!(pick(&mut Dbl, &s, &buffer, &one), Some((0, 0, 2, 2, 0)));
    assert_eq!(pick(&mut MinZ, &s, &buffer, &one), Some((0, 0, 2, 2, 0)));
    // every spot costs the cube's own column; depth breaks the tie
    assert_eq!(pick(&mut Hm, &s, &buffer, &one), Some((0, 0, 2, 2, 0)));

    // a 2x2 plate: over the (2,2) hole it bridges a gap, on the slab it does not
    let plate = vec![Arc::clone(cat.get(2).unwrap())];
    let hm = pick(&mut Hm, &s, &plate, &cat).unwrap();
    let covers_hole = (hm.2..hm.2 + 2).contains(&2) && (hm.3..hm.3 + 2).contains(&2);
    assert!(!covers_hole, "HM bridged the pit: {hm:?}");
}
