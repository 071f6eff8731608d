//! Feasible placement regions and compact candidate actions.

use crate::catalog::PreparedObject;
use crate::container::ContainerState;
use crate::voxel::{Orientation, OrientedShape};

/// Upper bound on candidates returned per object.
pub const MAX_CANDIDATES: usize = 500;

/// Where a fixed pose can be dropped, with the resting z of each cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasibleMask {
    width: usize,
    length: usize,
    feasible: Vec<bool>,
    z: Vec<i32>,
}

impl FeasibleMask {
    pub fn from_bools(width: usize, length: usize, feasible: Vec<bool>) -> Self {
        assert_eq!(feasible.len(), width * length);
        FeasibleMask {
            width,
            length,
            z: vec![0; feasible.len()],
            feasible,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    #[inline]
    pub fn is_feasible(&self, x: usize, y: usize) -> bool {
        self.feasible[x + self.width * y]
    }

    /// Resting z at `(x, y)`; meaningful only where feasible.
    #[inline]
    pub fn z(&self, x: usize, y: usize) -> i32 {
        self.z[x + self.width * y]
    }

    pub fn count(&self) -> usize {
        self.feasible.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.feasible.iter().any(|&f| f)
    }

    fn at(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.length && self.is_feasible(x as usize, y as usize)
    }

    /// 4-connected components as lists of `(x, y)`, in scan order of their
    /// first cell.
    pub fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let mut label = vec![usize::MAX; self.feasible.len()];
        let mut out = Vec::new();
        for start in 0..self.feasible.len() {
            if !self.feasible[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = Vec::new();
            let mut stack = vec![start];
            label[start] = id;
            while let Some(i) = stack.pop() {
                let (x, y) = (i % self.width, i / self.width);
                comp.push((x, y));
                let mut visit = |nx: usize, ny: usize| {
                    let j = nx + self.width * ny;
                    if self.feasible[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(x - 1, y);
                }
                if x + 1 < self.width {
                    visit(x + 1, y);
                }
                if y > 0 {
                    visit(x, y - 1);
                }
                if y + 1 < self.length {
                    visit(x, y + 1);
                }
            }
            comp.sort_by_key(|&(x, y)| (y, x));
            out.push(comp);
        }
        out
    }
}

/// Feasibility of every footprint origin for one pose: in bounds and not
/// poking out of the container top.
pub fn feasible_mask(state: &ContainerState, shape: &OrientedShape) -> FeasibleMask {
    let (w, l) = (state.width(), state.length());
    let (fx, fy) = shape.footprint();
    let mut feasible = vec![false; w * l];
    let mut zs = vec![0; w * l];
    if fx <= w && fy <= l && shape.height() <= state.height() {
        let hm = state.heightmap();
        let cols: Vec<(usize, usize, i32)> = shape
            .columns()
            .iter()
            .map(|&(dx, dy)| (dx, dy, shape.bottom.at(dx, dy)))
            .collect();
        let limit = state.height() - shape.height();
        for y in 0..=(l - fy) {
            for x in 0..=(w - fx) {
                let mut z = 0;
                for &(dx, dy, b) in &cols {
                    z = z.max(hm.get(x + dx, y + dy) - b);
                    if z > limit {
                        break;
                    }
                }
                if z <= limit {
                    feasible[x + w * y] = true;
                    zs[x + w * y] = z;
                }
            }
        }
    }
    FeasibleMask {
        width: w,
        length: l,
        feasible,
        z: zs,
    }
}

/// Cells where the region boundary turns convexly: a feasible cell whose
/// two axis neighbours towards some diagonal are both infeasible.
/// Returned in `(y, x)` scan order.
pub fn convex_vertices(mask: &FeasibleMask) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..mask.length {
        for x in 0..mask.width {
            if !mask.is_feasible(x, y) {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            let corner = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
                .iter()
                .any(|&(sx, sy)| !mask.at(xi + sx, yi) && !mask.at(xi, yi + sy));
            if corner {
                out.push((x, y));
            }
        }
    }
    out
}

/// A feasible action for one buffered object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CandidateAction {
    pub buffer_index: usize,
    /// Index into the object's stable poses.
    pub pose_index: usize,
    pub orientation: Orientation,
    pub x: usize,
    pub y: usize,
    pub z: i32,
}

impl CandidateAction {
    /// Deterministic ordering key: deepest, then bottom-most, then left-most.
    pub fn key(&self) -> (i32, usize, usize, usize, usize) {
        (self.z, self.y, self.x, self.orientation.index(), self.buffer_index)
    }
}

/// Compact candidates for one object over its stable poses: convex vertices
/// of each pose's feasible region plus the lowest cell of every connected
/// component, sorted by [`CandidateAction::key`] and capped at
/// [`MAX_CANDIDATES`].
pub fn enumerate_candidates(state: &ContainerState, object: &PreparedObject, buffer_index: usize) -> Vec<CandidateAction> {
    let mut out = Vec::new();
    for (pose_index, pose) in object.poses.iter().enumerate() {
        out.extend(pose_candidates(state, pose, pose_index, buffer_index));
    }
    out.sort_by_key(CandidateAction::key);
    out.truncate(MAX_CANDIDATES);
    out
}

pub fn pose_candidates(state: &ContainerState, pose: &OrientedShape, pose_index: usize, buffer_index: usize) -> Vec<CandidateAction> {
    let mask = feasible_mask(state, pose);
    if mask.is_empty() {
        return Vec::new();
    }
    let mut cells = convex_vertices(&mask);
    for comp in mask.components() {
        if let Some(&best) = comp.iter().min_by_key(|&&(x, y)| (mask.z(x, y), y, x)) {
            cells.push(best);
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells
        .into_iter()
        .map(|(x, y)| CandidateAction {
            buffer_index,
            pose_index,
            orientation: pose.orientation,
            x,
            y,
            z: mask.z(x, y),
        })
        .collect()
}
