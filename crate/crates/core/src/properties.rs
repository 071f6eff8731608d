//! Object-centric property model, material knowledge and avoidance rules.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::voxel::VoxelShape;

pub const MAX_DENSITY_LEVEL: u8 = 5;

#[derive(Debug, Error)]
pub enum PropertyError {
    #[error("unknown density level {0}")]
    UnknownLevel(u8),
    #[error("density level {level} has no material")]
    EmptyLevel { level: u8 },
    #[error("densities decrease between level {lower} and level {upper}")]
    NonMonotone { lower: u8, upper: u8 },
    #[error("invalid material row: {0}")]
    BadRow(String),
    #[error("material table: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialEntry {
    pub name: String,
    pub density_level: u8,
    /// g/cm³
    pub density: f64,
    pub fragile: bool,
}

impl MaterialEntry {
    fn new(name: &str, density_level: u8, density: f64, fragile: bool) -> Self {
        MaterialEntry {
            name: name.to_string(),
            density_level,
            density,
            fragile,
        }
    }
}

/// Materials grouped into density levels 0–5.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialTable {
    entries: Vec<MaterialEntry>,
    level_means: [f64; 6],
}

impl Default for MaterialTable {
    fn default() -> Self {
        let rows = vec![
            MaterialEntry::new("Air", 0, 0.0, false),
            MaterialEntry::new("Bread", 1, 0.3, true),
            MaterialEntry::new("Biscuit", 1, 0.4, true),
            MaterialEntry::new("Wood", 1, 0.4, false),
            MaterialEntry::new("Cardboard", 1, 0.6, false),
            MaterialEntry::new("Wax", 2, 0.9, true),
            MaterialEntry::new("Water", 2, 1.0, false),
            MaterialEntry::new("Fruits", 2, 1.0, true),
            MaterialEntry::new("Synthetic (Nylon)", 2, 1.1, false),
            MaterialEntry::new("Paper", 2, 1.2, false),
            MaterialEntry::new("Plastic", 2, 1.4, false),
            MaterialEntry::new("Glass", 3, 2.5, true),
            MaterialEntry::new("Clay", 3, 3.1, true),
            MaterialEntry::new("Ceramic", 4, 4.2, true),
            MaterialEntry::new("Steel", 5, 7.8, false),
        ];
        Self::new(rows).expect("built-in table is valid")
    }
}

#[derive(Deserialize)]
struct MaterialRow {
    name: String,
    level: u8,
    density: f64,
    fragile: String,
}

impl MaterialTable {
    pub fn new(entries: Vec<MaterialEntry>) -> Result<Self, PropertyError> {
        let mut members: [Vec<f64>; 6] = Default::default();
        for e in &entries {
            if e.density_level > MAX_DENSITY_LEVEL {
                return Err(PropertyError::UnknownLevel(e.density_level));
            }
            if !(e.density.is_finite() && e.density >= 0.0) {
                return Err(PropertyError::BadRow(format!("{}: density {}", e.name, e.density)));
            }
            members[e.density_level as usize].push(e.density);
        }
        let mut level_means = [0.0; 6];
        for (level, m) in members.iter().enumerate() {
            if m.is_empty() {
                return Err(PropertyError::EmptyLevel { level: level as u8 });
            }
            level_means[level] = m.iter().sum::<f64>() / m.len() as f64;
        }
        for level in 1..6 {
            let lower_max = members[level - 1].iter().cloned().fold(f64::MIN, f64::max);
            let upper_min = members[level].iter().cloned().fold(f64::MAX, f64::min);
            if upper_min < lower_max {
                return Err(PropertyError::NonMonotone {
                    lower: level as u8 - 1,
                    upper: level as u8,
                });
            }
        }
        Ok(MaterialTable {
            entries,
            level_means,
        })
    }

    /// Reads a comma-separated table with a `name,level,density,fragile`
    /// header; `fragile` accepts yes/no/true/false.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, PropertyError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize() {
            let row: MaterialRow = row?;
            let fragile = match row.fragile.to_ascii_lowercase().as_str() {
                "yes" | "true" | "1" => true,
                "no" | "false" | "0" => false,
                other => return Err(PropertyError::BadRow(format!("{}: fragile = {other}", row.name))),
            };
            entries.push(MaterialEntry {
                name: row.name,
                density_level: row.level,
                density: row.density,
                fragile,
            });
        }
        Self::new(entries)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,level,density,fragile\n");
        for e in &self.entries {
            let name = if e.name.contains(',') {
                format!("\"{}\"", e.name)
            } else {
                e.name.clone()
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                name,
                e.density_level,
                e.density,
                if e.fragile { "yes" } else { "no" }
            ));
        }
        out
    }

    pub fn entries(&self) -> &[MaterialEntry] {
        &self.entries
    }

    /// Densities of the materials at `level`.
    pub fn level_members(&self, level: u8) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.density_level == level)
            .map(|e| e.density)
            .collect()
    }

    /// Arithmetic mean density (g/cm³) of the materials at `level`.
    pub fn level_mean_density(&self, level: u8) -> Result<f64, PropertyError> {
        self.level_means
            .get(level as usize)
            .copied()
            .ok_or(PropertyError::UnknownLevel(level))
    }
}

/// Physical and semantic properties of one object.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectProperties {
    pub fragile: bool,
    pub soft: bool,
    pub sharp: bool,
    pub edible: bool,
    pub medicine: bool,
    pub household_chemical: bool,
    pub ignition: bool,
    pub flammable: bool,
    pub density_level: u8,
}

/// Flag names in their canonical order, as used by the catalog format.
pub const FLAG_NAMES: [&str; 8] = [
    "fragile",
    "soft",
    "sharp",
    "edible",
    "medicine",
    "household_chemical",
    "ignition",
    "flammable",
];

impl ObjectProperties {
    pub fn flags(&self) -> [bool; 8] {
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

    pub fn from_flags(flags: [bool; 8], density_level: u8) -> Self {
        ObjectProperties {
            fragile: flags[0],
            soft: flags[1],
            sharp: flags[2],
            edible: flags[3],
            medicine: flags[4],
            household_chemical: flags[5],
            ignition: flags[6],
            flammable: flags[7],
            density_level,
        }
    }

    pub fn set_flag(&mut self, name: &str, value: bool) -> bool {
        match FLAG_NAMES.iter().position(|n| *n == name) {
            Some(i) => {
                let mut f = self.flags();
                f[i] = value;
                *self = Self::from_flags(f, self.density_level);
                true
            }
            None => false,
        }
    }

    pub fn flag_names(&self) -> Vec<&'static str> {
        self.flags()
            .iter()
            .zip(FLAG_NAMES)
            .filter(|(f, _)| **f)
            .map(|(_, n)| n)
            .collect()
    }
}

/// Network input `(fragile, soft, sharp, density g/cm³, volume cm³)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyVector(pub [f64; 5]);

/// Weight in kg: volume (cm³) × level mean density (g/cm³) / 1000.
pub fn estimated_weight(shape: &VoxelShape, props: &ObjectProperties, table: &MaterialTable) -> Result<f64, PropertyError> {
    Ok(shape.volume() as f64 * table.level_mean_density(props.density_level)? / 1000.0)
}

pub fn property_vector(shape: &VoxelShape, props: &ObjectProperties, table: &MaterialTable) -> Result<PropertyVector, PropertyError> {
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(PropertyVector([
        bit(props.fragile),
        bit(props.soft),
        bit(props.sharp),
        table.level_mean_density(props.density_level)?,
        shape.volume() as f64,
    ]))
}

/// Whether two objects must not be packed closely: sharp/soft,
/// medicine/edible, household chemical/edible, ignition/flammable.
pub fn derive_avoidance(a: &ObjectProperties, b: &ObjectProperties) -> bool {
    let one_way = |p: &ObjectProperties, q: &ObjectProperties| {
        (p.sharp && q.soft)
            || (p.medicine && q.edible)
            || (p.household_chemical && q.edible)
            || (p.ignition && q.flammable)
    };
    one_way(a, b) || one_way(b, a)
}

/// Symmetric avoidance relation over object ids, zero diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvoidanceMatrix {
    ids: Vec<u32>,
    index: HashMap<u32, usize>,
    bits: Vec<bool>,
}

impl AvoidanceMatrix {
    pub fn new<'a>(objects: impl IntoIterator<Item = (u32, &'a ObjectProperties)>) -> Self {
        let objects: Vec<(u32, &ObjectProperties)> = objects.into_iter().collect();
        let n = objects.len();
        let mut bits = vec![false; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let r = derive_avoidance(objects[i].1, objects[j].1);
                bits[i * n + j] = r;
                bits[j * n + i] = r;
            }
        }
        let ids: Vec<u32> = objects.iter().map(|(id, _)| *id).collect();
        let index = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        AvoidanceMatrix { ids, index, bits }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Entry by position in the id list.
    pub fn at(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.ids.len() + j]
    }

    /// Entry by object id; unknown ids relate to nothing.
    pub fn related(&self, a: u32, b: u32) -> bool {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&i), Some(&j)) => self.at(i, j),
            _ => false,
        }
    }

    pub fn pair_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count() / 2
    }

    /// SHA-256 over the id list and row-major bits, hex encoded.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.ids.len() as u64).to_le_bytes());
        for id in &self.ids {
            h.update(id.to_le_bytes());
        }
        let bytes: Vec<u8> = self.bits.iter().map(|&b| b as u8).collect();
        h.update(&bytes);
        hex::encode(h.finalize())
    }
}
