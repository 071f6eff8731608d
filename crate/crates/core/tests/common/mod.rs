//! Scene generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use packplan::catalog::{generate_synthetic, Family, PreparedCatalog, PreparedObject, PropertyMarginals, SynthSpec};
use packplan::container::ContainerState;
use packplan::heuristics::{Dbl, FirstFit, Hm, MinZ, Policy, PolicyView};
use packplan::properties::{derive_avoidance, ObjectProperties};
use packplan::voxel::OrientedShape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small mixed-shape catalog (boxes plus shapes with overhangs).
pub fn shape_library(seed: u64) -> PreparedCatalog {
    let spec = SynthSpec {
        counts: vec![
            (Family::Box, 4),
            (Family::LShape, 3),
            (Family::TShape, 3),
            (Family::Cylinder, 2),
            (Family::Hemisphere, 2),
        ],
        size_range: (1, 6),
        marginals: PropertyMarginals {
            fragile: 0.4,
            soft: 0.3,
            sharp: 0.3,
            ..Default::default()
        },
    };
    generate_synthetic(&spec, seed).unwrap().prepare().unwrap()
}

/// Random pose and position drops until `placements` objects are in (or
/// attempts run out).
pub fn random_scene(cat: &PreparedCatalog, w: usize, l: usize, h: i32, placements: usize, seed: u64) -> ContainerState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ContainerState::new(w, l, h);
    let mut tries = 0;
    while s.placed().len() < placements && tries < placements * 20 {
        tries += 1;
        let obj = random_object(cat, &mut rng);
        let pose = &obj.poses[rng.gen_range(0..obj.poses.len())];
        let (fx, fy) = pose.footprint();
        if fx > w || fy > l {
            continue;
        }
        let x = rng.gen_range(0..=w - fx);
        let y = rng.gen_range(0..=l - fy);
        let _ = s.place(&obj, pose, x, y);
    }
    s
}

pub fn random_object(cat: &PreparedCatalog, rng: &mut ChaCha8Rng) -> Arc<PreparedObject> {
    Arc::clone(&cat.objects()[rng.gen_range(0..cat.objects().len())])
}

/// Dense 3D occupancy of the placed objects, `extra` cells taller than the
/// container so drops can start above it.
pub struct Grid {
    pub w: usize,
    pub l: usize,
    pub h: usize,
    pub cells: Vec<bool>,
}

impl Grid {
    pub fn of(state: &ContainerState, extra: usize) -> Grid {
        let (w, l) = (state.width(), state.length());
        let h = state.height() as usize + extra;
        let mut cells = vec![false; w * l * h];
        for p in state.placed() {
            for [cx, cy, cz] in p.shape.shape.occupied_cells() {
                let (x, y, z) = (p.x + cx, p.y + cy, p.z as usize + cz);
                let i = x + w * (y + l * z);
                assert!(!cells[i], "objects overlap at {x},{y},{z}");
                cells[i] = true;
            }
        }
        Grid { w, l, h, cells }
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.cells[x + self.w * (y + self.l * z)]
    }

    pub fn collides(&self, shape: &OrientedShape, x: usize, y: usize, z: usize) -> bool {
        shape
            .shape
            .occupied_cells()
            .any(|[cx, cy, cz]| z + cz >= self.h || self.get(x + cx, y + cy, z + cz))
    }

    /// Column tops: one above the highest occupied cell, 0 for empty columns.
    pub fn tops(&self) -> Vec<i32> {
        let mut out = vec![0; self.w * self.l];
        for y in 0..self.l {
            for x in 0..self.w {
                for z in (0..self.h).rev() {
                    if self.get(x, y, z) {
                        out[x + self.w * y] = z as i32 + 1;
                        break;
                    }
                }
            }
        }
        out
    }
}

/// Lowest z reached by lowering `shape` straight down from above the
/// container until it would collide.
pub fn brute_drop_z(state: &ContainerState, shape: &OrientedShape, x: usize, y: usize) -> i32 {
    let grid = Grid::of(state, shape.height() as usize + 1);
    let mut z = state.height() as usize;
    assert!(!grid.collides(shape, x, y, z));
    while z > 0 && !grid.collides(shape, x, y, z - 1) {
        z -= 1;
    }
    z as i32
}

/// Full-voxel feasibility: footprint in bounds, resting height from a
/// straight drop, top within the container.
pub fn brute_feasible(state: &ContainerState, shape: &OrientedShape, x: usize, y: usize) -> Option<i32> {
    let (fx, fy) = shape.footprint();
    if x + fx > state.width() || y + fy > state.length() {
        return None;
    }
    let z = brute_drop_z(state, shape, x, y);
    (z + shape.height() <= state.height()).then_some(z)
}

/// Sum over columns of the height increase caused by dropping `shape` at
/// `(x, y)`, from a fresh 3D rendering.
pub fn brute_increment(state: &ContainerState, shape: &OrientedShape, x: usize, y: usize, z: i32) -> i64 {
    let before = Grid::of(state, 0).tops();
    let mut after = before.clone();
    for [cx, cy, cz] in shape.shape.occupied_cells() {
        let i = x + cx + state.width() * (y + cy);
        after[i] = after[i].max(z + cz as i32 + 1);
    }
    after.iter().zip(&before).map(|(a, b)| i64::from(a - b)).sum()
}

/// `(b, pose, x, y, z)` of every feasible placement, found by dropping voxels.
pub fn exhaustive(state: &ContainerState, buffer: &[Arc<PreparedObject>]) -> Vec<(usize, usize, usize, usize, i32)> {
    let mut out = Vec::new();
    for (b, obj) in buffer.iter().enumerate() {
        for (k, pose) in obj.poses.iter().enumerate() {
            for y in 0..state.length() {
                for x in 0..state.width() {
                    if let Some(z) = brute_feasible(state, pose, x, y) {
                        out.push((b, k, x, y, z));
                    }
                }
            }
        }
    }
    out
}

pub fn pick(p: &mut dyn Policy, state: &ContainerState, buffer: &[Arc<PreparedObject>], cat: &PreparedCatalog) -> Option<(usize, usize, usize, usize, i32)> {
    let view = PolicyView { state, buffer, catalog: cat };
    p.select(&view).map(|a| (a.buffer_index, a.pose_index, a.x, a.y, a.z))
}

pub fn scene(seed: u64, n: usize) -> (PreparedCatalog, ContainerState, Vec<Arc<PreparedObject>>) {
    let cat = shape_library(31);
    let s = random_scene(&cat, 16, 16, 15, n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(99));
    let buffer = (0..3).map(|_| random_object(&cat, &mut rng)).collect();
    (cat, s, buffer)
}

pub fn check_heuristics(seed: u64, n: usize) -> Result<(), String> {
    let (cat, s, buffer) = scene(seed, n);
    let all = exhaustive(&s, &buffer);
    let o = |t: &(usize, usize, usize, usize, i32)| buffer[t.0].poses[t.1].orientation.index();
    let lowest = all.iter().min_by_key(|t| (t.4, t.3, t.2, o(t), t.0)).copied();
    let first = all.iter().min_by_key(|t| (t.0, t.3, t.2, t.1)).copied();
    let flattest = all
        .iter()
        .min_by_key(|t| (brute_increment(&s, &buffer[t.0].poses[t.1], t.2, t.3, t.4), t.4, t.3, t.2, o(t), t.0))
        .copied();
    let checks: [(&str, &mut dyn Policy, _); 4] = [
        ("dbl", &mut Dbl, lowest),
        ("minz", &mut MinZ, lowest),
        ("hm", &mut Hm, flattest),
        ("firstfit", &mut FirstFit, first),
    ];
    for (name, p, want) in checks {
        let got = pick(p, &s, &buffer, &cat);
        if got != want {
            return Err(format!("{name} on scene {seed}: got {got:?}, oracle {want:?}"));
        }
    }
    Ok(())
}

/// Flag order: fragile, soft, sharp, edible, medicine, chemical, ignition,
/// flammable.
pub fn rule_oracle(a: u8, b: u8) -> bool {
    let has = |m: u8, bit: u8| m & (1 << bit) != 0;
    let pairs = [(2, 1), (4, 3), (5, 3), (6, 7)];
    pairs
        .iter()
        .any(|&(p, q)| (has(a, p) && has(b, q)) || (has(a, q) && has(b, p)))
}

pub fn props(mask: u8) -> ObjectProperties {
    let mut flags = [false; 8];
    for (i, f) in flags.iter_mut().enumerate() {
        *f = mask & (1 << i) != 0;
    }
    ObjectProperties::from_flags(flags, 0)
}

pub fn truth_table_mismatches() -> usize {
    let mut bad = 0;
    for a in 0..=255u8 {
        for b in 0..=255u8 {
            if derive_avoidance(&props(a), &props(b)) != rule_oracle(a, b) {
                bad += 1;
            }
        }
    }
    bad
}

