//! Text formats for catalogs and scenario sets.
//!
//! Both are TOML documents with a `format` tag and integer `version`. Voxel
//! grids are stored per z-slab as run-length strings over the slab in
//! row-major order (x fastest): `<count><symbol>` runs with `#` for occupied
//! and `.` for empty cells.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Catalog, CatalogError, ObjectRecord, Scenario};
use crate::properties::{MaterialEntry, MaterialTable, ObjectProperties, FLAG_NAMES};
use crate::voxel::VoxelShape;

pub const CATALOG_VERSION: u32 = 1;
pub const SCENARIO_VERSION: u32 = 1;
const CATALOG_FORMAT: &str = "packplan-catalog";
const SCENARIO_FORMAT: &str = "packplan-scenarios";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    format: String,
    version: u32,
    resolution_cm: u32,
    object_count: usize,
    avoidance_checksum: String,
    materials: Vec<MaterialEntry>,
    objects: Vec<ObjectEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectEntry {
    id: u32,
    class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    dims: [usize; 3],
    density_level: u8,
    flags: Vec<String>,
    slabs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    format: String,
    version: u32,
    catalog: String,
    scenario_count: usize,
    scenarios: Vec<Scenario>,
}

fn encode_slab(shape: &VoxelShape, z: usize) -> String {
    let [nx, ny, _] = shape.dims();
    let mut out = String::new();
    let mut run: Option<(bool, usize)> = None;
    for y in 0..ny {
        for x in 0..nx {
            let c = shape.get(x, y, z);
            run = match run {
                Some((v, n)) if v == c => Some((v, n + 1)),
                Some((v, n)) => {
                    let _ = write!(out, "{n}{}", if v { '#' } else { '.' });
                    Some((c, 1))
                }
                None => Some((c, 1)),
            };
        }
    }
    if let Some((v, n)) = run {
        let _ = write!(out, "{n}{}", if v { '#' } else { '.' });
    }
    out
}

fn decode_slab(s: &str, len: usize, id: u32, out: &mut Vec<bool>) -> Result<(), CatalogError> {
    let bad = |reason: String| CatalogError::MalformedGrid { id, reason };
    let start = out.len();
    let mut count = String::new();
    for ch in s.chars() {
        match ch {
            '0'..='9' => count.push(ch),
            '#' | '.' => {
                let n: usize = count.parse().map_err(|_| bad(format!("run without count in {s:?}")))?;
                if n == 0 {
                    return Err(bad(format!("zero-length run in {s:?}")));
                }
                if out.len() - start + n > len {
                    return Err(bad(format!("slab {s:?} longer than {len} cells")));
                }
                out.extend(std::iter::repeat_n(ch == '#', n));
                count.clear();
            }
            other => return Err(bad(format!("unexpected symbol {other:?}"))),
        }
    }
    if !count.is_empty() {
        return Err(bad(format!("dangling count in {s:?}")));
    }
    if out.len() - start != len {
        return Err(bad(format!("slab {s:?} has {} cells, expected {len}", out.len() - start)));
    }
    Ok(())
}

/// Serialises a catalog; the output is a pure function of the catalog.
pub fn write_catalog(catalog: &Catalog) -> String {
    let objects = catalog
        .records()
        .iter()
        .map(|r| ObjectEntry {
            id: r.id,
            class_name: r.class_name.clone(),
            tag: r.tag.clone(),
            dims: r.shape.dims(),
            density_level: r.properties.density_level,
            flags: r.properties.flag_names().into_iter().map(String::from).collect(),
            slabs: (0..r.shape.dims()[2]).map(|z| encode_slab(&r.shape, z)).collect(),
        })
        .collect();
    let file = CatalogFile {
        format: CATALOG_FORMAT.into(),
        version: CATALOG_VERSION,
        resolution_cm: 1,
        object_count: catalog.len(),
        avoidance_checksum: catalog.avoidance().checksum(),
        materials: catalog.materials().entries().to_vec(),
        objects,
    };
    toml::to_string(&file).expect("catalog serialises")
}

fn check_header(doc: &toml::Table, format: &str, kind: &'static str, expected: u32) -> Result<(), CatalogError> {
    match doc.get("format").and_then(|v| v.as_str()) {
        Some(f) if f == format => {}
        Some(f) => return Err(CatalogError::Malformed(format!("format tag {f:?}, expected {format:?}"))),
        None => return Err(CatalogError::Malformed("missing format tag".into())),
    }
    match doc.get("version").and_then(|v| v.as_integer()) {
        Some(v) if v == i64::from(expected) => Ok(()),
        Some(v) => Err(CatalogError::VersionMismatch { kind, found: v, expected }),
        None => Err(CatalogError::Malformed("missing version".into())),
    }
}

pub fn parse_catalog(text: &str) -> Result<Catalog, CatalogError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CatalogError::Malformed(e.message().to_string()))?;
    check_header(&doc, CATALOG_FORMAT, "catalog", CATALOG_VERSION)?;
    let file: CatalogFile = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| CatalogError::Malformed(e.message().to_string()))?;
    if file.resolution_cm != 1 {
        return Err(CatalogError::Malformed(format!("resolution {} cm unsupported", file.resolution_cm)));
    }
    if file.objects.len() != file.object_count {
        return Err(CatalogError::Malformed(format!(
            "object_count {} but {} objects present",
            file.object_count,
            file.objects.len()
        )));
    }
    let materials = MaterialTable::new(file.materials)?;
    let mut records = Vec::with_capacity(file.objects.len());
    for o in file.objects {
        let [nx, ny, nz] = o.dims;
        if o.slabs.len() != nz {
            return Err(CatalogError::MalformedGrid {
                id: o.id,
                reason: format!("{} slabs for height {nz}", o.slabs.len()),
            });
        }
        let mut cells = Vec::with_capacity(nx * ny * nz);
        for s in &o.slabs {
            decode_slab(s, nx * ny, o.id, &mut cells)?;
        }
        let shape = VoxelShape::new(format!("{}-{}", o.class_name, o.id), o.dims, cells).map_err(|e| {
            CatalogError::MalformedGrid {
                id: o.id,
                reason: e.to_string(),
            }
        })?;
        let mut properties = ObjectProperties {
            density_level: o.density_level,
            ..Default::default()
        };
        for f in &o.flags {
            if !properties.set_flag(f, true) {
                return Err(CatalogError::Malformed(format!(
                    "object {}: unknown flag {f:?} (known: {})",
                    o.id,
                    FLAG_NAMES.join(", ")
                )));
            }
        }
        records.push(ObjectRecord {
            id: o.id,
            class_name: o.class_name,
            tag: o.tag,
            shape,
            properties,
        });
    }
    let catalog = Catalog::new(records, materials)?;
    let computed = catalog.avoidance().checksum();
    if computed != file.avoidance_checksum {
        return Err(CatalogError::ChecksumMismatch {
            stored: file.avoidance_checksum,
            computed,
        });
    }
    Ok(catalog)
}

pub fn save_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> Result<(), CatalogError> {
    fs::write(path, write_catalog(catalog))?;
    Ok(())
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    parse_catalog(&fs::read_to_string(path)?)
}

/// `catalog` is a free-form reference (usually the catalog path).
pub fn write_scenarios(catalog: &str, scenarios: &[Scenario]) -> String {
    let file = ScenarioFile {
        format: SCENARIO_FORMAT.into(),
        version: SCENARIO_VERSION,
        catalog: catalog.into(),
        scenario_count: scenarios.len(),
        scenarios: scenarios.to_vec(),
    };
    toml::to_string(&file).expect("scenarios serialise")
}

/// Returns the catalog reference and the scenarios.
pub fn parse_scenarios(text: &str) -> Result<(String, Vec<Scenario>), CatalogError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CatalogError::Malformed(e.message().to_string()))?;
    check_header(&doc, SCENARIO_FORMAT, "scenario", SCENARIO_VERSION)?;
    let file: ScenarioFile = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| CatalogError::Malformed(e.message().to_string()))?;
    if file.scenarios.len() != file.scenario_count {
        return Err(CatalogError::Malformed(format!(
            "scenario_count {} but {} scenarios present",
            file.scenario_count,
            file.scenarios.len()
        )));
    }
    for s in &file.scenarios {
        if s.buffer_capacity == 0 {
            return Err(CatalogError::BadScenario(format!("{}: buffer capacity 0", s.name)));
        }
    }
    Ok((file.catalog, file.scenarios))
}

pub fn save_scenarios(catalog: &str, scenarios: &[Scenario], path: impl AsRef<Path>) -> Result<(), CatalogError> {
    fs::write(path, write_scenarios(catalog, scenarios))?;
    Ok(())
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<(String, Vec<Scenario>), CatalogError> {
    parse_scenarios(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_synthetic, make_scenarios, SynthSpec};
    use super::*;

    fn sample() -> Catalog {
        generate_synthetic(&SynthSpec::default(), 9).unwrap()
    }

    #[test]
    fn slab_codec() {
        let s = VoxelShape::from_cells("x", &[[0, 0, 0], [1, 0, 0], [2, 1, 0]]).unwrap();
        assert_eq!(encode_slab(&s, 0), "2#3.1#");
        let mut out = vec![];
        decode_slab("2#3.1#", 6, 0, &mut out).unwrap();
        assert_eq!(out, s.cells());
        for bad in ["2#3.", "#", "2#3.2#", "0#6.", "2x4."] {
            let mut out = vec![];
            assert!(matches!(decode_slab(bad, 6, 0, &mut out), Err(CatalogError::MalformedGrid { .. })), "{bad}");
        }
    }

    #[test]
    fn catalog_round_trip() {
        let c = sample();
        let text = write_catalog(&c);
        let back = parse_catalog(&text).unwrap();
        assert_eq!(back.records().len(), c.records().len());
        for (a, b) in c.records().iter().zip(back.records()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.properties, b.properties);
            assert_eq!(a.shape.dims(), b.shape.dims());
            assert_eq!(a.shape.cells(), b.shape.cells());
        }
        assert_eq!(write_catalog(&back), text);
    }

    #[test]
    fn truncation_is_rejected() {
        let text = write_catalog(&sample());
        for cut in [text.len() / 3, text.len() / 2, text.len() - 40] {
            let r = parse_catalog(&text[..cut]);
            assert!(
                matches!(r, Err(CatalogError::Malformed(_)) | Err(CatalogError::MalformedGrid { .. })),
                "cut at {cut}: {r:?}"
            );
        }
    }

    #[test]
    fn version_mismatch() {
        let text = write_catalog(&sample()).replacen("version = 1", "version = 7", 1);
        assert!(matches!(
            parse_catalog(&text),
            Err(CatalogError::VersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn duplicate_ids() {
        let text = write_catalog(&sample()).replacen("id = 1\n", "id = 0\n", 1);
        assert!(matches!(parse_catalog(&text), Err(CatalogError::DuplicateId(0))));
    }

    #[test]
    fn malformed_grid() {
        let c = generate_synthetic(
            &SynthSpec {
                counts: vec![(super::super::Family::Box, 1)],
                size_range: (2, 2),
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let text = write_catalog(&c).replacen("\"4#\"", "\"5#\"", 1);
        assert!(matches!(parse_catalog(&text), Err(CatalogError::MalformedGrid { id: 0, .. })));
    }

    #[test]
    fn tampered_properties_fail_checksum() {
        let c = sample();
        let pos = c
            .records()
            .iter()
            .position(|r| r.properties.flags().iter().all(|f| !f))
            .expect("some unflagged object");
        let mut recs = c.records().to_vec();
        recs[pos].properties.sharp = true;
        recs[pos].properties.soft = true;
        let altered = Catalog::new(recs, c.materials().clone()).unwrap();
        // keep the flags of `altered` but the checksum of `c`
        let text = write_catalog(&altered).replace(&altered.avoidance().checksum(), &c.avoidance().checksum());
        if altered.avoidance() != c.avoidance() {
            assert!(matches!(parse_catalog(&text), Err(CatalogError::ChecksumMismatch { .. })));
        }
    }

    #[test]
    fn scenario_round_trip() {
        let c = sample();
        let sc = make_scenarios(&c, 3, 12, 5, 100).unwrap();
        let text = write_scenarios("cat.toml", &sc);
        let (cat, back) = parse_scenarios(&text).unwrap();
        assert_eq!(cat, "cat.toml");
        assert_eq!(back, sc);
        let r = parse_scenarios(&text[..text.len() / 2]);
        assert!(matches!(r, Err(CatalogError::Malformed(_))), "{r:?}");
    }
}
