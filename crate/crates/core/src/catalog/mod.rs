//! Object datasets and packing scenarios.
//!
//! A [`Catalog`] holds the object records, the material table and the derived
//! avoidance relation. [`PreparedCatalog`] adds everything the planner needs per
//! object (candidate poses, profiles, surface points, weight).

mod io;
mod synth;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::properties::{
    estimated_weight, property_vector, AvoidanceMatrix, MaterialTable, ObjectProperties, PropertyError, PropertyVector,
};
use crate::voxel::{sample_surface_points, stable_orientations, OrientedShape, ShapeError, VoxelShape, DEFAULT_SURFACE_POINTS};

pub use io::{load_catalog, load_scenarios, parse_catalog, parse_scenarios, save_catalog, save_scenarios, write_catalog, write_scenarios, CATALOG_VERSION, SCENARIO_VERSION};
pub use synth::{generate_synthetic, Family, PropertyMarginals, SynthSpec};

/// Default number of objects visible to the planner at once.
pub const DEFAULT_BUFFER_CAPACITY: usize = 10;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("unsupported {kind} format version {found} (expected {expected})")]
    VersionMismatch { kind: &'static str, found: i64, expected: u32 },
    #[error("object {id}: malformed voxel grid: {reason}")]
    MalformedGrid { id: u32, reason: String },
    #[error("duplicate object id {0}")]
    DuplicateId(u32),
    #[error("avoidance checksum mismatch: stored {stored}, recomputed {computed}")]
    ChecksumMismatch { stored: String, computed: String },
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("synthetic spec requests no objects")]
    EmptySpec,
    #[error("invalid size range {0}..={1} (must lie within 1..=30)")]
    BadRange(usize, usize),
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error("object {id}: {source}")]
    Shape { id: u32, source: ShapeError },
    #[error(transparent)]
    Property(#[from] PropertyError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub class_name: String,
    /// Free-form grouping label (e.g. a dataset subset).
    pub tag: Option<String>,
    pub shape: VoxelShape,
    pub properties: ObjectProperties,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    records: Vec<ObjectRecord>,
    materials: MaterialTable,
    avoidance: AvoidanceMatrix,
}

impl Catalog {
    pub fn new(records: Vec<ObjectRecord>, materials: MaterialTable) -> Result<Self, CatalogError> {
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.id) {
                return Err(CatalogError::DuplicateId(r.id));
            }
            materials.level_mean_density(r.properties.density_level)?;
        }
        let avoidance = AvoidanceMatrix::new(records.iter().map(|r| (r.id, &r.properties)));
        Ok(Catalog {
            records,
            materials,
            avoidance,
        })
    }

    pub fn records(&self) -> &[ObjectRecord] {
        &self.records
    }

    pub fn get(&self, id: u32) -> Option<&ObjectRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn materials(&self) -> &MaterialTable {
        &self.materials
    }

    pub fn avoidance(&self) -> &AvoidanceMatrix {
        &self.avoidance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn prepare(&self) -> Result<PreparedCatalog, CatalogError> {
        PreparedCatalog::new(self, DEFAULT_SURFACE_POINTS)
    }
}

/// Planner-side view of one catalog object.
#[derive(Clone, Debug)]
pub struct PreparedObject {
    pub id: u32,
    pub class_name: String,
    pub properties: ObjectProperties,
    pub volume: usize,
    /// kg
    pub weight: f64,
    pub property_vector: PropertyVector,
    /// Candidate poses: the distinct planar-stable orientations.
    pub poses: Vec<Arc<OrientedShape>>,
    /// Surface samples of the canonical shape, centred at its centroid.
    pub points: Vec<[f64; 3]>,
}

impl PreparedObject {
    pub fn new(record: &ObjectRecord, materials: &MaterialTable, n_points: usize) -> Result<Self, CatalogError> {
        let shape = &record.shape;
        let poses = stable_orientations(shape)
            .into_iter()
            .map(|o| Arc::new(OrientedShape::new(shape, o)))
            .collect();
        let points = sample_surface_points(shape, n_points, 0x5eed ^ u64::from(record.id))
            .map_err(|source| CatalogError::Shape { id: record.id, source })?;
        Ok(PreparedObject {
            id: record.id,
            class_name: record.class_name.clone(),
            properties: record.properties,
            volume: shape.volume(),
            weight: estimated_weight(shape, &record.properties, materials)?,
            property_vector: property_vector(shape, &record.properties, materials)?,
            poses,
            points,
        })
    }

    /// Index into `poses` of the given orientation, if it is a candidate pose.
    pub fn pose_index(&self, o: crate::voxel::Orientation) -> Option<usize> {
        self.poses.iter().position(|p| p.orientation == o)
    }
}

#[derive(Clone, Debug)]
pub struct PreparedCatalog {
    objects: Vec<Arc<PreparedObject>>,
    by_id: HashMap<u32, usize>,
    avoidance: AvoidanceMatrix,
}

impl PreparedCatalog {
    pub fn new(catalog: &Catalog, n_points: usize) -> Result<Self, CatalogError> {
        let objects: Vec<Arc<PreparedObject>> = catalog
            .records
            .iter()
            .map(|r| PreparedObject::new(r, &catalog.materials, n_points).map(Arc::new))
            .collect::<Result<_, _>>()?;
        let by_id = objects.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
        Ok(PreparedCatalog {
            objects,
            by_id,
            avoidance: catalog.avoidance.clone(),
        })
    }

    pub fn get(&self, id: u32) -> Option<&Arc<PreparedObject>> {
        self.by_id.get(&id).map(|&i| &self.objects[i])
    }

    pub fn objects(&self) -> &[Arc<PreparedObject>] {
        &self.objects
    }

    pub fn avoidance(&self) -> &AvoidanceMatrix {
        &self.avoidance
    }

    /// Largest number of candidate poses of any object.
    pub fn max_poses(&self) -> usize {
        self.objects.iter().map(|o| o.poses.len()).max().unwrap_or(0)
    }
}

/// An arrival order of catalog objects plus the buffer size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub buffer_capacity: usize,
    pub order: Vec<u32>,
}

impl Scenario {
    pub fn validate(&self, catalog: &Catalog) -> Result<(), CatalogError> {
        if self.buffer_capacity == 0 {
            return Err(CatalogError::BadScenario(format!("{}: buffer capacity 0", self.name)));
        }
        if let Some(id) = self.order.iter().find(|id| catalog.get(**id).is_none()) {
            return Err(CatalogError::BadScenario(format!("{}: unknown object id {id}", self.name)));
        }
        Ok(())
    }
}

/// Draws `n_objects` ids uniformly with replacement.
pub fn make_scenario(catalog: &Catalog, n_objects: usize, buffer_capacity: usize, seed: u64) -> Result<Scenario, CatalogError> {
    if catalog.is_empty() {
        return Err(CatalogError::EmptyCatalog);
    }
    if n_objects == 0 || buffer_capacity == 0 {
        return Err(CatalogError::BadScenario("need at least one object and one buffer slot".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = (0..n_objects)
        .map(|_| catalog.records[rng.gen_range(0..catalog.len())].id)
        .collect();
    Ok(Scenario {
        name: format!("seed-{seed}"),
        seed,
        buffer_capacity,
        order,
    })
}

/// `count` scenarios with seeds `base_seed, base_seed + 1, ...`.
pub fn make_scenarios(
    catalog: &Catalog,
    count: usize,
    n_objects: usize,
    buffer_capacity: usize,
    base_seed: u64,
) -> Result<Vec<Scenario>, CatalogError> {
    (0..count as u64)
        .map(|i| make_scenario(catalog, n_objects, buffer_capacity, base_seed.wrapping_add(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_catalog() -> Catalog {
        let mut soft = ObjectProperties::default();
        soft.soft = true;
        let mut sharp = ObjectProperties::default();
        sharp.sharp = true;
        sharp.density_level = 5;
        Catalog::new(
            vec![
                ObjectRecord {
                    id: 3,
                    class_name: "sponge".into(),
                    tag: None,
                    shape: VoxelShape::solid_box("sponge", 2, 3, 1).unwrap(),
                    properties: soft,
                },
                ObjectRecord {
                    id: 9,
                    class_name: "knife".into(),
                    tag: Some("kitchen".into()),
                    shape: VoxelShape::solid_box("knife", 1, 8, 1).unwrap(),
                    properties: sharp,
                },
            ],
            MaterialTable::default(),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let c = tiny_catalog();
        let mut recs = c.records().to_vec();
        recs[1].id = 3;
        assert!(matches!(Catalog::new(recs, MaterialTable::default()), Err(CatalogError::DuplicateId(3))));
    }

    #[test]
    fn avoidance_is_derived() {
        let c = tiny_catalog();
        assert!(c.avoidance().related(3, 9));
        assert_eq!(c.avoidance().pair_count(), 1);
    }

    #[test]
    fn scenarios_are_seeded() {
        let c = tiny_catalog();
        let a = make_scenario(&c, 10, 5, 11).unwrap();
        assert_eq!(a.order.len(), 10);
        assert_eq!(a.buffer_capacity, 5);
        assert_eq!(a, make_scenario(&c, 10, 5, 11).unwrap());
        assert!(a.order.iter().all(|id| *id == 3 || *id == 9));
        assert_eq!(make_scenario(&c, 1, 10, 0).unwrap().order.len(), 1);
        let empty = Catalog::new(vec![], MaterialTable::default()).unwrap();
        assert!(matches!(make_scenario(&empty, 3, 2, 0), Err(CatalogError::EmptyCatalog)));
        a.validate(&c).unwrap();
    }

    #[test]
    fn prepared_objects() {
        let p = tiny_catalog().prepare().unwrap();
        let knife = p.get(9).unwrap();
        assert_eq!(knife.volume, 8);
        assert!((knife.weight - 8.0 * 7.8 / 1000.0).abs() < 1e-12);
        assert_eq!(knife.points.len(), DEFAULT_SURFACE_POINTS);
        // a flat 1×8×1 bar lies on its side in two headings (and on its edge)
        assert!(knife.poses.len() >= 2);
    }
}
