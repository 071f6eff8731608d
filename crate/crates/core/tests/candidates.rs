mod common;

use common::{brute_feasible, random_scene, shape_library};
use packplan::candidates::{convex_vertices, enumerate_candidates, feasible_mask, FeasibleMask, MAX_CANDIDATES};
use proptest::prelude::*;

/// Corner-pattern scan written independently of the library: a cell is a
/// convex vertex when, for some diagonal direction, both axis neighbours
/// toward it are outside the region.
fn corner_oracle(w: usize, l: usize, inside: &dyn Fn(i64, i64) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..l as i64 {
        for x in 0..w as i64 {
            if !inside(x, y) {
                continue;
            }
            let convex = [(-1, -1), (1, -1), (-1, 1), (1, 1)]
                .iter()
                .any(|&(dx, dy)| !inside(x + dx, y) && !inside(x, y + dy));
            if convex {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}

fn rect_mask(w: usize, l: usize, r: (usize, usize, usize, usize)) -> FeasibleMask {
    let (x0, y0, x1, y1) = r;
    let cells = (0..w * l).map(|i| (x0..=x1).contains(&(i % w)) && (y0..=y1).contains(&(i / w))).collect();
    FeasibleMask::from_bools(w, l, cells)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_candidate_is_feasible(seed in any::<u64>(), n in 0usize..40) {
        let cat = shape_library(21);
        let s = random_scene(&cat, 12, 12, 15, n, seed);
        for (b, obj) in cat.objects().iter().enumerate() {
            let cands = enumerate_candidates(&s, obj, b);
            prop_assert!(cands.len() <= MAX_CANDIDATES);
            for c in &cands {
                let pose = &obj.poses[c.pose_index];
                prop_assert_eq!(pose.orientation, c.orientation);
                prop_assert_eq!(brute_feasible(&s, pose, c.x, c.y), Some(c.z));
            }
            prop_assert!(cands.windows(2).all(|p| p[0].key() < p[1].key()));
        }
    }

    #[test]
    fn masks_match_full_voxel_check(seed in any::<u64>(), n in 0usize..40) {
        let cat = shape_library(23);
        let s = random_scene(&cat, 10, 9, 12, n, seed);
        for obj in cat.objects().iter().take(5) {
            for pose in &obj.poses {
                let m = feasible_mask(&s, pose);
                for y in 0..9 {
                    for x in 0..10 {
                        let want = brute_feasible(&s, pose, x, y);
                        prop_assert_eq!(m.is_feasible(x, y), want.is_some());
                        if let Some(z) = want {
                            prop_assert_eq!(m.z(x, y), z);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rectangles_give_their_corners(w in 1usize..20, l in 1usize..20, a in any::<(u8, u8, u8, u8)>()) {
        let (x0, x1) = { let p = a.0 as usize % w; let q = a.1 as usize % w; (p.min(q), p.max(q)) };
        let (y0, y1) = { let p = a.2 as usize % l; let q = a.3 as usize % l; (p.min(q), p.max(q)) };
        let v = convex_vertices(&rect_mask(w, l, (x0, y0, x1, y1)));
        let mut corners = vec![(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
        corners.sort_by_key(|&(x, y)| (y, x));
        corners.dedup();
        prop_assert_eq!(v, corners);
    }

    #[test]
    fn vertices_match_pattern_scan(w in 1usize..12, l in 1usize..12, bits in proptest::collection::vec(any::<bool>(), 144)) {
        let cells: Vec<bool> = (0..w * l).map(|i| bits[i]).collect();
        let m = FeasibleMask::from_bools(w, l, cells.clone());
        let inside = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < l && cells[x as usize + w * y as usize];
        prop_assert_eq!(convex_vertices(&m), corner_oracle(w, l, &inside));
    }
}

#[test]
fn l_region_has_five_convex_corners() {
    // 4x4 with the top-right 2x2 quadrant removed
    let cells = (0..16).map(|i| !(i % 4 >= 2 && i / 4 >= 2)).collect();
    let v = convex_vertices(&FeasibleMask::from_bools(4, 4, cells));
    assert_eq!(v, vec![(0, 0), (3, 0), (3, 1), (0, 3), (1, 3)]);
}

#[test]
fn cap_keeps_smallest_keys_in_stable_order() {
    use packplan::catalog::{Catalog, ObjectRecord};
    use packplan::container::ContainerState;
    use packplan::properties::MaterialTable;
    use packplan::voxel::VoxelShape;

    // pillars on a checkerboard up to the lid leave 512 isolated free cells
    let pillar = Catalog::new(
        vec![
            ObjectRecord {
                id: 0,
                class_name: "pillar".into(),
                tag: None,
                shape: VoxelShape::solid_box("p", 1, 1, 2).unwrap(),
                properties: Default::default(),
            },
            ObjectRecord {
                id: 1,
                class_name: "cube".into(),
                tag: None,
                shape: VoxelShape::solid_box("c", 1, 1, 1).unwrap(),
                properties: Default::default(),
            },
        ],
        MaterialTable::default(),
    )
    .unwrap()
    .prepare()
    .unwrap();
    let p = pillar.get(0).unwrap();
    let mut s = ContainerState::new(32, 32, 2);
    for y in 0..32 {
        for x in 0..32 {
            if (x + y) % 2 == 1 {
                let pose = p.poses.iter().find(|q| q.height() == 2).unwrap();
                s.place(p, pose, x, y).unwrap();
            }
        }
    }
    let cube = pillar.get(1).unwrap();
    let all = enumerate_candidates(&s, cube, 0);
    assert_eq!(all.len(), MAX_CANDIDATES);
    assert!(all.iter().all(|c| c.z == 0));
    let mut free: Vec<(usize, usize)> = (0..32 * 32).map(|i| (i % 32, i / 32)).filter(|&(x, y)| (x + y) % 2 == 0).collect();
    free.sort_by_key(|&(x, y)| (y, x));
    let got: Vec<(usize, usize)> = all.iter().map(|c| (c.x, c.y)).collect();
    assert_eq!(got, free[..MAX_CANDIDATES].to_vec());
    assert_eq!(enumerate_candidates(&s, cube, 0), all);
}
