//! Container state and deterministic heightmap placement.
//!
//! Objects are dropped straight down onto the occupancy heightmap: the resting
//! height is the deepest z at which the object's bottom-up profile clears the
//! container's top-down heightmap. There is no settling after placement.

use std::sync::Arc;

use thiserror::Error;

use crate::catalog::PreparedObject;
use crate::properties::{AvoidanceMatrix, ObjectProperties};
use crate::voxel::{Orientation, OrientedShape};

pub const DEFAULT_WIDTH: usize = 32;
pub const DEFAULT_LENGTH: usize = 32;
pub const DEFAULT_HEIGHT: i32 = 30;
/// Bounding-box gap (cm) at or below which an avoidance pair counts as close.
pub const DEFAULT_AVOID_DISTANCE: i32 = 3;
/// Vertical slack (cm) for an object to count as resting on another.
pub const CONTACT_TOLERANCE: i32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlaceError {
    #[error("footprint {fx}×{fy} at ({x}, {y}) leaves the {w}×{l} container")]
    OutOfBounds {
        x: usize,
        y: usize,
        fx: usize,
        fy: usize,
        w: usize,
        l: usize,
    },
    #[error("object would reach {top} cm, container height is {height} cm")]
    TooHigh { top: i32, height: i32 },
}

/// A W×L grid of heights in cm, indexed `x + W * y`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Heightmap {
    width: usize,
    length: usize,
    data: Vec<i32>,
}

impl Heightmap {
    pub fn zeros(width: usize, length: usize) -> Self {
        Heightmap {
            width,
            length,
            data: vec![0; width * length],
        }
    }

    pub fn from_vec(width: usize, length: usize, data: Vec<i32>) -> Self {
        assert_eq!(data.len(), width * length);
        Heightmap { width, length, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.data[x + self.width * y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: i32) {
        self.data[x + self.width * y] = v;
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn max(&self) -> i32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn sum(&self) -> i64 {
        self.data.iter().map(|&v| i64::from(v)).sum()
    }

    /// Plain (ASCII) portable graymap with maxval `max_value`.
    pub fn to_pgm(&self, max_value: i32) -> String {
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.length, max_value.max(1));
        for y in 0..self.length {
            let row: Vec<String> = (0..self.width).map(|x| self.get(x, y).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// One executed placement.
#[derive(Clone, Debug)]
pub struct PlacedObject {
    pub object_id: u32,
    pub x: usize,
    pub y: usize,
    pub z: i32,
    pub shape: Arc<OrientedShape>,
    pub properties: ObjectProperties,
    /// kg
    pub weight: f64,
}

impl PlacedObject {
    pub fn orientation(&self) -> Orientation {
        self.shape.orientation
    }

    /// Occupied container columns `(x, y)` with the object's bottom and top
    /// surface heights there.
    pub fn column_spans(&self) -> impl Iterator<Item = ((usize, usize), i32, i32)> + '_ {
        self.shape.columns().iter().map(move |&(dx, dy)| {
            (
                (self.x + dx, self.y + dy),
                self.z + self.shape.bottom.at(dx, dy),
                self.z + self.shape.top.at(dx, dy),
            )
        })
    }

    /// Axis-aligned bounds `[lo, hi)` per axis.
    pub fn bounds(&self) -> [(i32, i32); 3] {
        let [nx, ny, nz] = self.shape.shape.dims();
        [
            (self.x as i32, (self.x + nx) as i32),
            (self.y as i32, (self.y + ny) as i32),
            (self.z, self.z + nz as i32),
        ]
    }

    pub fn volume(&self) -> usize {
        self.shape.shape.volume()
    }
}

/// Heightmap plus packing history.
#[derive(Clone, Debug)]
pub struct ContainerState {
    height: i32,
    heightmap: Heightmap,
    placed: Vec<PlacedObject>,
}

impl Default for ContainerState {
    fn default() -> Self {
        Self::new(DEFAULT_WIDTH, DEFAULT_LENGTH, DEFAULT_HEIGHT)
    }
}

impl ContainerState {
    pub fn new(width: usize, length: usize, height: i32) -> Self {
        ContainerState {
            height,
            heightmap: Heightmap::zeros(width, length),
            placed: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.heightmap.width
    }

    pub fn length(&self) -> usize {
        self.heightmap.length
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    /// Container volume in cm³.
    pub fn capacity(&self) -> usize {
        self.width() * self.length() * self.height as usize
    }

    pub fn heightmap(&self) -> &Heightmap {
        &self.heightmap
    }

    pub fn placed(&self) -> &[PlacedObject] {
        &self.placed
    }

    pub fn packed_volume(&self) -> usize {
        self.placed.iter().map(PlacedObject::volume).sum()
    }

    /// Ratio of packed volume to container volume.
    pub fn compactness(&self) -> f64 {
        self.packed_volume() as f64 / self.capacity() as f64
    }

    pub fn drop_z(&self, shape: &OrientedShape, x: usize, y: usize) -> Result<i32, PlaceError> {
        drop_z(&self.heightmap, shape, x, y)
    }

    /// Places `object` in pose `shape` at `(x, y)`, returning the resting z.
    /// On error the state is left untouched.
    pub fn place(&mut self, object: &PreparedObject, shape: &Arc<OrientedShape>, x: usize, y: usize) -> Result<i32, PlaceError> {
        self.place_raw(object.id, object.properties, object.weight, shape, x, y)
    }

    pub fn place_raw(
        &mut self,
        object_id: u32,
        properties: ObjectProperties,
        weight: f64,
        shape: &Arc<OrientedShape>,
        x: usize,
        y: usize,
    ) -> Result<i32, PlaceError> {
        let z = self.drop_z(shape, x, y)?;
        let top = z + shape.height();
        if top > self.height {
            return Err(PlaceError::TooHigh { top, height: self.height });
        }
        let placed = PlacedObject {
            object_id,
            x,
            y,
            z,
            shape: Arc::clone(shape),
            properties,
            weight,
        };
        for ((cx, cy), _, t) in placed.column_spans() {
            if t > self.heightmap.get(cx, cy) {
                self.heightmap.set(cx, cy, t);
            }
        }
        self.placed.push(placed);
        Ok(z)
    }

    /// Copy-on-place variant.
    pub fn with_placement(&self, object: &PreparedObject, shape: &Arc<OrientedShape>, x: usize, y: usize) -> Result<(ContainerState, i32), PlaceError> {
        let mut next = self.clone();
        let z = next.place(object, shape, x, y)?;
        Ok((next, z))
    }

    /// The occupancy heightmap rebuilt from the packing history alone.
    pub fn recompute_heightmap(&self) -> Heightmap {
        render_max(self.width(), self.length(), self.placed.iter())
    }
}

/// Deepest resting z of `shape` with its footprint origin at `(x, y)`.
pub fn drop_z(heightmap: &Heightmap, shape: &OrientedShape, x: usize, y: usize) -> Result<i32, PlaceError> {
    let (fx, fy) = shape.footprint();
    if x + fx > heightmap.width || y + fy > heightmap.length {
        return Err(PlaceError::OutOfBounds {
            x,
            y,
            fx,
            fy,
            w: heightmap.width,
            l: heightmap.length,
        });
    }
    let mut z = 0;
    for &(dx, dy) in shape.columns() {
        z = z.max(heightmap.get(x + dx, y + dy) - shape.bottom.at(dx, dy));
    }
    Ok(z)
}

fn render_max<'a>(width: usize, length: usize, objects: impl Iterator<Item = &'a PlacedObject>) -> Heightmap {
    let mut map = Heightmap::zeros(width, length);
    for p in objects {
        for ((cx, cy), _, t) in p.column_spans() {
            if t > map.get(cx, cy) {
                map.set(cx, cy, t);
            }
        }
    }
    map
}

/// Column-wise top heights of fragile placed objects only.
pub fn fragility_map(state: &ContainerState) -> Heightmap {
    render_max(state.width(), state.length(), state.placed.iter().filter(|p| p.properties.fragile))
}

/// Column-wise top heights of placed objects that candidate `object_id`
/// must avoid.
pub fn avoidance_map(state: &ContainerState, object_id: u32, avoidance: &AvoidanceMatrix) -> Heightmap {
    render_max(
        state.width(),
        state.length(),
        state.placed.iter().filter(|p| avoidance.related(object_id, p.object_id)),
    )
}

/// Renders the column-wise maximum over an arbitrary subset of placed objects.
pub fn render_subset(state: &ContainerState, keep: impl Fn(&PlacedObject) -> bool) -> Heightmap {
    render_max(state.width(), state.length(), state.placed.iter().filter(|p| keep(p)))
}

/// Number of distinct fragile objects the new object rests on.
///
/// `placed` is the new object, evaluated against the other objects in
/// `state` (it may or may not already be part of `state`). A fragile object
/// counts when it shares a footprint column with the new object and its top
/// there is within [`CONTACT_TOLERANCE`] below the new object's bottom.
pub fn squeeze_count(state: &ContainerState, placed: &PlacedObject) -> usize {
    let spans: Vec<((usize, usize), i32, i32)> = placed.column_spans().collect();
    state
        .placed
        .iter()
        .filter(|p| !std::ptr::eq(*p, placed) && p.properties.fragile)
        .filter(|p| {
            let below: Vec<((usize, usize), i32, i32)> = p.column_spans().collect();
            spans.iter().any(|&(col, bottom, _)| {
                below
                    .iter()
                    .any(|&(c, _, top)| c == col && top <= bottom && top >= bottom - CONTACT_TOLERANCE)
            })
        })
        .count()
}

/// Pressure (kg) on each fragile object, by index into `state.placed()`, and
/// the mean over fragile objects (0 when there are none).
///
/// Every object `j` above fragile object `i` contributes its weight times the
/// fraction of `j`'s footprint columns that lie over `i`.
pub fn pressure_on_fragile(state: &ContainerState) -> (Vec<(usize, f64)>, f64) {
    let mut out = Vec::new();
    for (i, fragile) in state.placed.iter().enumerate() {
        if !fragile.properties.fragile {
            continue;
        }
        let below: Vec<((usize, usize), i32, i32)> = fragile.column_spans().collect();
        let mut pressure = 0.0;
        for (j, upper) in state.placed.iter().enumerate() {
            if i == j {
                continue;
            }
            let footprint = upper.shape.columns().len();
            let overlap = upper
                .column_spans()
                .filter(|&(col, bottom, _)| below.iter().any(|&(c, _, top)| c == col && bottom >= top))
                .count();
            if overlap > 0 {
                pressure += upper.weight * overlap as f64 / footprint as f64;
            }
        }
        out.push((i, pressure));
    }
    let mean = if out.is_empty() {
        0.0
    } else {
        out.iter().map(|(_, p)| p).sum::<f64>() / out.len() as f64
    };
    (out, mean)
}

/// Per-axis bounding-box gap between two placed objects (0 when touching or
/// overlapping).
pub fn bbox_gap(a: &PlacedObject, b: &PlacedObject) -> [i32; 3] {
    let (ba, bb) = (a.bounds(), b.bounds());
    [0, 1, 2].map(|k| (ba[k].0.max(bb[k].0) - ba[k].1.min(bb[k].1)).max(0))
}

/// Index pairs `(i, j)`, `i < j`, of avoidance-related objects whose
/// bounding boxes are within `distance` on every axis.
pub fn close_pairs(state: &ContainerState, avoidance: &AvoidanceMatrix, distance: i32) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..state.placed.len() {
        for j in (i + 1)..state.placed.len() {
            let (a, b) = (&state.placed[i], &state.placed[j]);
            if avoidance.related(a.object_id, b.object_id) && bbox_gap(a, b).iter().all(|&g| g <= distance) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Whether placed object `index` is close to any of its avoidance partners.
pub fn is_close_to_partner(state: &ContainerState, index: usize, avoidance: &AvoidanceMatrix, distance: i32) -> bool {
    let a = &state.placed[index];
    state.placed.iter().enumerate().any(|(j, b)| {
        j != index && avoidance.related(a.object_id, b.object_id) && bbox_gap(a, b).iter().all(|&g| g <= distance)
    })
}
