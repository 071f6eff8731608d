//! Rigid-object geometry on a 1 cm voxel grid.
//!
//! Shapes are tight boolean occupancy grids. Orientations are restricted to
//! the 24 proper axis-aligned rotations so that the grid is closed under
//! rotation; each orientation also carries a unit quaternion used as the pose
//! encoding of the planner network.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest admissible extent of an object along any axis, in cells.
pub const MAX_OBJECT_EXTENT: usize = 30;

/// Default number of surface points sampled per object.
pub const DEFAULT_SURFACE_POINTS: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("shape dims {0:?} outside 1..={MAX_OBJECT_EXTENT}")]
    BadDims([usize; 3]),
    #[error("cell buffer has {got} entries, expected {expected}")]
    CellCount { expected: usize, got: usize },
    #[error("shape has no occupied cell")]
    Empty,
    #[error("shape is not cropped to its occupied cells")]
    NotTight,
    #[error("at least 8 surface points are required, got {0}")]
    TooFewPoints(usize),
}

/// One of the 24 proper rotations of the cube.
///
/// Index 0 is the identity. The remaining indices enumerate signed axis
/// permutations with determinant +1 in a fixed order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Orientation(u8);

/// Row `i` of the matrix has a single non-zero entry `sign[i]` at column `perm[i]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SignedPerm {
    perm: [usize; 3],
    sign: [i32; 3],
}

impl SignedPerm {
    fn matrix(&self) -> [[i32; 3]; 3] {
        let mut m = [[0; 3]; 3];
        for i in 0..3 {
            m[i][self.perm[i]] = self.sign[i];
        }
        m
    }

    fn from_matrix(m: &[[i32; 3]; 3]) -> Self {
        let mut perm = [0; 3];
        let mut sign = [0; 3];
        for i in 0..3 {
            for j in 0..3 {
                if m[i][j] != 0 {
                    perm[i] = j;
                    sign[i] = m[i][j];
                }
            }
        }
        SignedPerm { perm, sign }
    }
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

const fn build_group() -> [SignedPerm; 24] {
    let mut out = [SignedPerm {
        perm: [0, 1, 2],
        sign: [1, 1, 1],
    }; 24];
    let mut n = 0;
    let mut p = 0;
    while p < 6 {
        let perm = PERMUTATIONS[p];
        // parity of the permutation
        let mut inversions = 0;
        let mut i = 0;
        while i < 3 {
            let mut j = i + 1;
            while j < 3 {
                if perm[i] > perm[j] {
                    inversions += 1;
                }
                j += 1;
            }
            i += 1;
        }
        let parity = if inversions % 2 == 0 { 1 } else { -1 };
        let mut s = 0;
        while s < 8 {
            let sign = [
                if s & 4 == 0 { 1 } else { -1 },
                if s & 2 == 0 { 1 } else { -1 },
                if s & 1 == 0 { 1 } else { -1 },
            ];
            if parity * sign[0] * sign[1] * sign[2] == 1 {
                out[n] = SignedPerm { perm, sign };
                n += 1;
            }
            s += 1;
        }
        p += 1;
    }
    out
}

static GROUP: [SignedPerm; 24] = build_group();

impl Orientation {
    pub const COUNT: usize = 24;
    pub const IDENTITY: Orientation = Orientation(0);

    pub fn new(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(Orientation(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = Orientation> {
        (0..Self::COUNT as u8).map(Orientation)
    }

    /// Integer rotation matrix acting on column vectors.
    pub fn matrix(self) -> [[i32; 3]; 3] {
        GROUP[self.index()].matrix()
    }

    fn from_signed_perm(sp: SignedPerm) -> Self {
        let idx = GROUP
            .iter()
            .position(|g| *g == sp)
            .expect("closed under composition");
        Orientation(idx as u8)
    }

    /// The rotation obtained by applying `self` first and `then` second.
    pub fn then(self, then: Orientation) -> Orientation {
        let a = self.matrix();
        let b = then.matrix();
        let mut m = [[0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| b[i][k] * a[k][j]).sum();
            }
        }
        Self::from_signed_perm(SignedPerm::from_matrix(&m))
    }

    pub fn inverse(self) -> Orientation {
        let m = self.matrix();
        let mut t = [[0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = m[j][i];
            }
        }
        Self::from_signed_perm(SignedPerm::from_matrix(&t))
    }

    pub fn rotate_vector(self, v: [i32; 3]) -> [i32; 3] {
        let m = self.matrix();
        let mut out = [0; 3];
        for i in 0..3 {
            out[i] = (0..3).map(|k| m[i][k] * v[k]).sum();
        }
        out
    }

    /// Unit quaternion `[w, x, y, z]` with a canonical sign (first non-zero
    /// component positive).
    pub fn quaternion(self) -> [f64; 4] {
        let m = self.matrix().map(|r| r.map(f64::from));
        let trace = m[0][0] + m[1][1] + m[2][2];
        let mut q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            [
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            ]
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            [
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            ]
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            [
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            ]
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            [
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            ]
        };
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in &mut q {
            *c /= norm;
        }
        if let Some(first) = q.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                for c in &mut q {
                    *c = -*c;
                }
            }
        }
        q
    }
}

impl fmt::Debug for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Orientation({})", self.0)
    }
}

/// Occupancy grid of one rigid object, 1 cm per cell, cropped tight.
///
/// Cells are stored x-fastest: `x + nx * (y + ny * z)`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoxelShape {
    id: String,
    dims: [usize; 3],
    cells: Vec<bool>,
}

impl fmt::Debug for VoxelShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VoxelShape")
            .field("id", &self.id)
            .field("dims", &self.dims)
            .field("volume", &self.volume())
            .finish()
    }
}

impl VoxelShape {
    pub fn new(id: impl Into<String>, dims: [usize; 3], cells: Vec<bool>) -> Result<Self, ShapeError> {
        if dims.iter().any(|&d| d == 0 || d > MAX_OBJECT_EXTENT) {
            return Err(ShapeError::BadDims(dims));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if cells.len() != expected {
            return Err(ShapeError::CellCount {
                expected,
                got: cells.len(),
            });
        }
        let shape = VoxelShape {
            id: id.into(),
            dims,
            cells,
        };
        if shape.volume() == 0 {
            return Err(ShapeError::Empty);
        }
        if shape.bounding_dims() != dims {
            return Err(ShapeError::NotTight);
        }
        Ok(shape)
    }

    /// Builds a shape from arbitrary integer coordinates, translating them so
    /// that the minimum corner sits at the origin.
    pub fn from_cells(id: impl Into<String>, coords: &[[i32; 3]]) -> Result<Self, ShapeError> {
        if coords.is_empty() {
            return Err(ShapeError::Empty);
        }
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for c in coords {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        if dims.iter().any(|&d| d > MAX_OBJECT_EXTENT) {
            return Err(ShapeError::BadDims(dims));
        }
        let mut cells = vec![false; dims[0] * dims[1] * dims[2]];
        for c in coords {
            let p = [0, 1, 2].map(|a| (c[a] - lo[a]) as usize);
            cells[p[0] + dims[0] * (p[1] + dims[1] * p[2])] = true;
        }
        Self::new(id, dims, cells)
    }

    pub fn solid_box(id: impl Into<String>, nx: usize, ny: usize, nz: usize) -> Result<Self, ShapeError> {
        Self::new(id, [nx, ny, nz], vec![true; nx * ny * nz])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.cells[self.index(x, y, z)]
    }

    /// Checked lookup accepting coordinates outside the grid (reported empty).
    pub fn occupied(&self, x: i32, y: i32, z: i32) -> bool {
        if x < 0 || y < 0 || z < 0 {
            return false;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        x < self.dims[0] && y < self.dims[1] && z < self.dims[2] && self.get(x, y, z)
    }

    /// Occupied cells as integer coordinates, in storage order.
    pub fn occupied_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, _] = self.dims;
        self.cells.iter().enumerate().filter(|(_, &c)| c).map(move |(i, _)| {
            [i % nx, (i / nx) % ny, i / (nx * ny)]
        })
    }

    /// Number of occupied cells; at 1 cm resolution this is the volume in cm³.
    pub fn volume(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    fn bounding_dims(&self) -> [usize; 3] {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for c in self.occupied_cells() {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        if lo[0] == usize::MAX {
            return [0; 3];
        }
        if lo != [0, 0, 0] {
            // shifted content is never tight
            return [usize::MAX; 3];
        }
        [hi[0] + 1, hi[1] + 1, hi[2] + 1]
    }

    /// Mean of occupied cell centres, in cell units.
    pub fn centroid(&self) -> [f64; 3] {
        let mut sum = [0.0; 3];
        let mut n = 0.0;
        for c in self.occupied_cells() {
            for a in 0..3 {
                sum[a] += c[a] as f64 + 0.5;
            }
            n += 1.0;
        }
        sum.map(|s| s / n)
    }
}

/// Rotates a shape and re-crops it to its tight bounding box.
pub fn rotate(shape: &VoxelShape, o: Orientation) -> VoxelShape {
    if o == Orientation::IDENTITY {
        return shape.clone();
    }
    let g = GROUP[o.index()];
    let src = shape.dims;
    let dims = [src[g.perm[0]], src[g.perm[1]], src[g.perm[2]]];
    let mut cells = vec![false; dims[0] * dims[1] * dims[2]];
    for c in shape.occupied_cells() {
        let mut p = [0usize; 3];
        for i in 0..3 {
            let v = c[g.perm[i]];
            p[i] = if g.sign[i] > 0 { v } else { src[g.perm[i]] - 1 - v };
        }
        cells[p[0] + dims[0] * (p[1] + dims[1] * p[2])] = true;
    }
    VoxelShape {
        id: shape.id.clone(),
        dims,
        cells,
    }
}

/// A shape in one fixed orientation together with its height profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedShape {
    pub orientation: Orientation,
    pub shape: VoxelShape,
    pub top: HeightProfile,
    pub bottom: HeightProfile,
    columns: Vec<(usize, usize)>,
}

impl OrientedShape {
    pub fn new(base: &VoxelShape, orientation: Orientation) -> Self {
        let shape = rotate(base, orientation);
        let top = top_profile(&shape);
        let bottom = bottom_profile(&shape);
        let mut columns = Vec::new();
        for dy in 0..top.fy {
            for dx in 0..top.fx {
                if top.at(dx, dy) > 0 {
                    columns.push((dx, dy));
                }
            }
        }
        OrientedShape {
            orientation,
            shape,
            top,
            bottom,
            columns,
        }
    }

    /// Footprint extents `(fx, fy)`.
    pub fn footprint(&self) -> (usize, usize) {
        (self.top.fx, self.top.fy)
    }

    pub fn height(&self) -> i32 {
        self.shape.dims()[2] as i32
    }

    /// Footprint columns that contain at least one cell.
    pub fn columns(&self) -> &[(usize, usize)] {
        &self.columns
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileKind {
    TopDown,
    BottomUp,
}

/// Per-column heights of a shape over its footprint, in cm.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeightProfile {
    pub fx: usize,
    pub fy: usize,
    pub kind: ProfileKind,
    heights: Vec<i32>,
}

impl HeightProfile {
    #[inline]
    pub fn at(&self, dx: usize, dy: usize) -> i32 {
        self.heights[dx + self.fx * dy]
    }

    pub fn heights(&self) -> &[i32] {
        &self.heights
    }
}

/// `1 + max z` of each column, 0 for empty columns.
pub fn top_profile(shape: &VoxelShape) -> HeightProfile {
    let [nx, ny, nz] = shape.dims;
    let mut heights = vec![0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            if let Some(z) = (0..nz).rev().find(|&z| shape.get(x, y, z)) {
                heights[x + nx * y] = z as i32 + 1;
            }
        }
    }
    HeightProfile {
        fx: nx,
        fy: ny,
        kind: ProfileKind::TopDown,
        heights,
    }
}

/// `min z` of each column; empty columns carry the sentinel `nz`.
pub fn bottom_profile(shape: &VoxelShape) -> HeightProfile {
    let [nx, ny, nz] = shape.dims;
    let mut heights = vec![nz as i32; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            if let Some(z) = (0..nz).find(|&z| shape.get(x, y, z)) {
                heights[x + nx * y] = z as i32;
            }
        }
    }
    HeightProfile {
        fx: nx,
        fy: ny,
        kind: ProfileKind::BottomUp,
        heights,
    }
}

pub fn volume(shape: &VoxelShape) -> usize {
    shape.volume()
}

/// Samples `n` points uniformly over the exposed voxel faces, centred on the
/// shape centroid. Points are allocated to faces in equal strata; leftover
/// points go to a seeded random subset of faces.
pub fn sample_surface_points(shape: &VoxelShape, n: usize, seed: u64) -> Result<Vec<[f64; 3]>, ShapeError> {
    if n < 8 {
        return Err(ShapeError::TooFewPoints(n));
    }
    let faces = exposed_faces(shape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = n / faces.len();
    let rem = n % faces.len();
    let mut extra = vec![0usize; faces.len()];
    let mut order: Vec<usize> = (0..faces.len()).collect();
    order.shuffle(&mut rng);
    for &f in order.iter().take(rem) {
        extra[f] = 1;
    }
    let centroid = shape.centroid();
    let mut points = Vec::with_capacity(n);
    for (face, k) in faces.iter().zip(extra) {
        for _ in 0..base + k {
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let p = face.point(u, v);
            points.push([p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]]);
        }
    }
    Ok(points)
}

/// Unit square on the boundary of an occupied cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub cell: [usize; 3],
    /// Outward axis (0, 1, 2) and direction (+1 / -1).
    pub axis: usize,
    pub dir: i32,
}

impl Face {
    /// Point at parameters `(u, v) ∈ [0,1]²` on the face.
    pub fn point(&self, u: f64, v: f64) -> [f64; 3] {
        let mut p = self.cell.map(|c| c as f64);
        let (a, b) = match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        if self.dir > 0 {
            p[self.axis] += 1.0;
        }
        p[a] += u;
        p[b] += v;
        p
    }

    pub fn center(&self) -> [f64; 3] {
        self.point(0.5, 0.5)
    }
}

pub fn exposed_faces(shape: &VoxelShape) -> Vec<Face> {
    let mut faces = Vec::new();
    for c in shape.occupied_cells() {
        for axis in 0..3 {
            for dir in [-1, 1] {
                let mut q = c.map(|v| v as i32);
                q[axis] += dir;
                if !shape.occupied(q[0], q[1], q[2]) {
                    faces.push(Face { cell: c, axis, dir });
                }
            }
        }
    }
    faces
}

/// Orientations in which the shape rests stably on a flat floor, one per
/// distinct resulting cell set, in ascending orientation index.
///
/// Stable means the horizontal projection of the centroid lies inside or on
/// the convex hull of the bottom-layer contact cells. If no orientation
/// qualifies, the one with the lowest centroid is returned.
pub fn stable_orientations(shape: &VoxelShape) -> Vec<Orientation> {
    let mut seen: Vec<VoxelShape> = Vec::new();
    let mut out = Vec::new();
    let mut lowest: Option<(f64, Orientation)> = None;
    for o in Orientation::all() {
        let r = rotate(shape, o);
        let c = r.centroid();
        if lowest.is_none_or(|(h, _)| c[2] < h - 1e-12) {
            lowest = Some((c[2], o));
        }
        if !is_planar_stable(&r) {
            continue;
        }
        if seen.iter().any(|s| s.dims == r.dims && s.cells == r.cells) {
            continue;
        }
        seen.push(r);
        out.push(o);
    }
    if out.is_empty() {
        out.push(lowest.expect("24 orientations").1);
    }
    out
}

/// Centroid-over-support-polygon test for a shape resting on z = 0.
pub fn is_planar_stable(shape: &VoxelShape) -> bool {
    let [nx, ny, _] = shape.dims;
    let mut corners = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            if shape.get(x, y, 0) {
                let (x, y) = (x as i64, y as i64);
                corners.extend([(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]);
            }
        }
    }
    let hull = convex_hull(corners);
    let c = shape.centroid();
    point_in_convex_polygon(&hull, c[0], c[1])
}

/// Andrew's monotone chain; returns counter-clockwise vertices without
/// collinear points.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn point_in_convex_polygon(poly: &[(i64, i64)], px: f64, py: f64) -> bool {
    const EPS: f64 = 1e-9;
    if poly.len() < 3 {
        return false;
    }
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b.0 - a.0) as f64 * (py - a.1 as f64) - (b.1 - a.1) as f64 * (px - a.0 as f64);
        if cross < -EPS {
            return false;
        }
    }
    true
}
