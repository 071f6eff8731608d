//! Seeded synthetic object generation from primitive families.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Catalog, CatalogError, ObjectRecord};
use crate::properties::{MaterialTable, ObjectProperties, FLAG_NAMES};
use crate::voxel::{VoxelShape, MAX_OBJECT_EXTENT};

const MAX_ATTEMPTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Box,
    LShape,
    TShape,
    Cylinder,
    Hemisphere,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Box => "box",
            Family::LShape => "l-shape",
            Family::TShape => "t-shape",
            Family::Cylinder => "cylinder",
            Family::Hemisphere => "hemisphere",
        }
    }
}

/// Per-flag Bernoulli probabilities and density-level weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropertyMarginals {
    pub fragile: f64,
    pub soft: f64,
    pub sharp: f64,
    pub edible: f64,
    pub medicine: f64,
    pub household_chemical: f64,
    pub ignition: f64,
    pub flammable: f64,
    pub density_levels: [f64; 6],
}

impl Default for PropertyMarginals {
    fn default() -> Self {
        PropertyMarginals {
            fragile: 0.25,
            soft: 0.15,
            sharp: 0.1,
            edible: 0.2,
            medicine: 0.05,
            household_chemical: 0.05,
            ignition: 0.03,
            flammable: 0.05,
            density_levels: [0.0, 0.25, 0.45, 0.15, 0.1, 0.05],
        }
    }
}

impl PropertyMarginals {
    fn flag_probabilities(&self) -> [f64; 8] {
        [
            self.fragile,
            self.soft,
            self.sharp,
            self.edible,
            self.medicine,
            self.household_chemical,
            self.ignition,
            self.flammable,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// `(family, count)` pairs, generated in this order.
    pub counts: Vec<(Family, usize)>,
    /// Inclusive per-axis extent range in cm.
    pub size_range: (usize, usize),
    #[serde(default)]
    pub marginals: PropertyMarginals,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            counts: vec![
                (Family::Box, 8),
                (Family::LShape, 3),
                (Family::TShape, 3),
                (Family::Cylinder, 3),
                (Family::Hemisphere, 3),
            ],
            size_range: (2, 8),
            marginals: PropertyMarginals::default(),
        }
    }
}

/// Deterministic catalog of primitive shapes; ids are assigned from 0 in
/// generation order.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Catalog, CatalogError> {
    let total: usize = spec.counts.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(CatalogError::EmptySpec);
    }
    let (lo, hi) = spec.size_range;
    if lo == 0 || lo > hi || hi > MAX_OBJECT_EXTENT {
        return Err(CatalogError::BadRange(lo, hi));
    }
    let level_dist = WeightedIndex::new(spec.marginals.density_levels)
        .map_err(|e| CatalogError::Malformed(format!("density level weights: {e}")))?;
    let flag_p = spec.marginals.flag_probabilities();
    if flag_p.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CatalogError::Malformed("flag probabilities must lie in [0, 1]".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(total);
    for &(family, count) in &spec.counts {
        for _ in 0..count {
            let id = records.len() as u32;
            let name = format!("{}-{id}", family.name());
            let shape = sample_shape(family, lo, hi, &mut rng, &name);
            let mut flags = [false; 8];
            for (f, p) in flags.iter_mut().zip(flag_p) {
                *f = rng.gen_bool(p);
            }
            let level = level_dist.sample(&mut rng) as u8;
            debug_assert_eq!(FLAG_NAMES.len(), flags.len());
            records.push(ObjectRecord {
                id,
                class_name: family.name().to_string(),
                tag: None,
                shape,
                properties: ObjectProperties::from_flags(flags, level),
            });
        }
    }
    Catalog::new(records, MaterialTable::default())
}

fn sample_shape(family: Family, lo: usize, hi: usize, rng: &mut ChaCha8Rng, name: &str) -> VoxelShape {
    for _ in 0..MAX_ATTEMPTS {
        let cells = match family {
            Family::Box => box_cells(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)),
            Family::LShape => l_cells(rng, lo, hi),
            Family::TShape => t_cells(rng, lo, hi),
            Family::Cylinder => cylinder_cells(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)),
            Family::Hemisphere => dome_cells(rng.gen_range(lo..=hi)),
        };
        if let Ok(shape) = VoxelShape::from_cells(name, &cells) {
            if shape.dims().iter().all(|d| (lo..=hi).contains(d)) {
                return shape;
            }
        }
    }
    // ranges too narrow for the family: fall back to a box
    let n = rng.gen_range(lo..=hi);
    VoxelShape::solid_box(name, n, n, n).expect("range validated")
}

fn box_cells(nx: usize, ny: usize, nz: usize) -> Vec<[i32; 3]> {
    let mut v = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz as i32 {
        for y in 0..ny as i32 {
            for x in 0..nx as i32 {
                v.push([x, y, z]);
            }
        }
    }
    v
}

/// L-shaped footprint extruded upwards: an `a × b` rectangle with the
/// `(a - t) × (b - t)` corner removed.
fn l_cells(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<[i32; 3]> {
    let lo2 = lo.max(2);
    if lo2 > hi {
        return vec![];
    }
    let a = rng.gen_range(lo2..=hi) as i32;
    let b = rng.gen_range(lo2..=hi) as i32;
    let h = rng.gen_range(lo..=hi) as i32;
    let t = rng.gen_range(1..a.min(b));
    box_cells(a as usize, b as usize, h as usize)
        .into_iter()
        .filter(|&[x, y, _]| x < t || y < t)
        .collect()
}

/// T profile in the xz plane (bar on top, centred stem) extruded along y.
fn t_cells(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<[i32; 3]> {
    let lo3 = lo.max(3);
    let lo2 = lo.max(2);
    if lo3 > hi {
        return vec![];
    }
    let width = rng.gen_range(lo3..=hi) as i32;
    let height = rng.gen_range(lo2..=hi) as i32;
    let depth = rng.gen_range(lo..=hi) as i32;
    let stem = rng.gen_range(1..=(width - 2).max(1));
    let bar = rng.gen_range(1..height);
    let s0 = (width - stem) / 2;
    box_cells(width as usize, depth as usize, height as usize)
        .into_iter()
        .filter(|&[x, _, z]| z >= height - bar || (x >= s0 && x < s0 + stem))
        .collect()
}

fn disc(d: usize) -> Vec<(i32, i32)> {
    let r = d as f64 / 2.0;
    let mut v = Vec::new();
    for y in 0..d as i32 {
        for x in 0..d as i32 {
            let dx = x as f64 + 0.5 - r;
            let dy = y as f64 + 0.5 - r;
            if dx * dx + dy * dy <= r * r + 1e-9 {
                v.push((x, y));
            }
        }
    }
    v
}

fn cylinder_cells(d: usize, h: usize) -> Vec<[i32; 3]> {
    let disc = disc(d);
    (0..h as i32)
        .flat_map(|z| disc.iter().map(move |&(x, y)| [x, y, z]))
        .collect()
}

/// Half ball of diameter `d` resting on its flat face.
fn dome_cells(d: usize) -> Vec<[i32; 3]> {
    let r = d as f64 / 2.0;
    let mut v = Vec::new();
    for z in 0..d as i32 {
        for y in 0..d as i32 {
            for x in 0..d as i32 {
                let dx = x as f64 + 0.5 - r;
                let dy = y as f64 + 0.5 - r;
                let dz = z as f64 + 0.5;
                if dx * dx + dy * dy + dz * dz <= r * r + 1e-9 {
                    v.push([x, y, z]);
                }
            }
        }
    }
    v
}
