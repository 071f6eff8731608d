//! Network inputs extracted from a packing state: normalized heightmaps and
//! per-candidate local statistics.

use std::collections::HashMap;
use std::sync::Arc;

use crate::candidates::{enumerate_candidates, CandidateAction};
use crate::catalog::PreparedObject;
use crate::container::{render_subset, ContainerState, Heightmap};
use crate::properties::AvoidanceMatrix;

/// Position (3) plus mean/max under the footprint and max over its
/// neighbourhood for each of the three maps (9).
pub const LOCAL_FEATURES: usize = 12;
/// Cells by which the footprint rectangle is grown for the neighbourhood max.
pub const NEIGHBOURHOOD: usize = 3;

/// Everything the network sees at one decision point. Only buffered
/// objects with at least one candidate placement are listed.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInput {
    /// Catalog ids of the choosable objects.
    pub objects: Vec<u32>,
    /// Position of each choosable object in the buffer.
    pub buffer_slots: Vec<usize>,
    /// Maps normalized by container height: occupancy, fragility, then each
    /// distinct avoidance map.
    pub maps: Vec<Vec<f64>>,
    /// Index into `maps` of each object's avoidance map.
    pub avoid_map: Vec<usize>,
    pub candidates: Vec<Vec<CandidateAction>>,
    pub local: Vec<Vec<[f64; LOCAL_FEATURES]>>,
}

impl StepInput {
    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }
}

fn normalized(map: &Heightmap, height: i32) -> Vec<f64> {
    map.data().iter().map(|&v| f64::from(v) / f64::from(height)).collect()
}

/// Builds the network input for `buffer` in `state`.
pub fn step_input(state: &ContainerState, buffer: &[Arc<PreparedObject>], avoidance: &AvoidanceMatrix) -> StepInput {
    let h = state.height();
    let occupancy = normalized(state.heightmap(), h);
    let fragility = normalized(&crate::container::fragility_map(state), h);
    let mut maps = vec![occupancy, fragility];
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut out = StepInput {
        objects: Vec::new(),
        buffer_slots: Vec::new(),
        maps: Vec::new(),
        avoid_map: Vec::new(),
        candidates: Vec::new(),
        local: Vec::new(),
    };
    for (slot, obj) in buffer.iter().enumerate() {
        let cands = enumerate_candidates(state, obj, slot);
        if cands.is_empty() {
            continue;
        }
        let partners: Vec<usize> = state
            .placed()
            .iter()
            .enumerate()
            .filter(|(_, p)| avoidance.related(obj.id, p.object_id))
            .map(|(i, _)| i)
            .collect();
        let idx = *seen.entry(partners.clone()).or_insert_with(|| {
            let m = render_subset(state, |p| avoidance.related(obj.id, p.object_id));
            maps.push(normalized(&m, h));
            maps.len() - 1
        });
        let local = cands
            .iter()
            .map(|c| local_features(state, obj, c, [&maps[0], &maps[1], &maps[idx]]))
            .collect();
        out.objects.push(obj.id);
        out.buffer_slots.push(slot);
        out.avoid_map.push(idx);
        out.candidates.push(cands);
        out.local.push(local);
    }
    out.maps = maps;
    out
}

/// Static (parameter-free) features of one candidate placement.
pub fn local_features(state: &ContainerState, obj: &PreparedObject, c: &CandidateAction, maps: [&[f64]; 3]) -> [f64; LOCAL_FEATURES] {
    let (w, l) = (state.width(), state.length());
    let pose = &obj.poses[c.pose_index];
    let mut f = [0.0; LOCAL_FEATURES];
    f[0] = c.x as f64 / w as f64;
    f[1] = c.y as f64 / l as f64;
    f[2] = f64::from(c.z) / f64::from(state.height());
    let cols = pose.columns();
    let (fx, fy) = pose.footprint();
    let x0 = c.x.saturating_sub(NEIGHBOURHOOD);
    let y0 = c.y.saturating_sub(NEIGHBOURHOOD);
    let x1 = (c.x + fx + NEIGHBOURHOOD).min(w);
    let y1 = (c.y + fy + NEIGHBOURHOOD).min(l);
    for (k, m) in maps.iter().enumerate() {
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for &(dx, dy) in cols {
            let v = m[c.x + dx + w * (c.y + dy)];
            sum += v;
            max = max.max(v);
        }
        let mut around = 0.0f64;
        for y in y0..y1 {
            for x in x0..x1 {
                around = around.max(m[x + w * y]);
            }
        }
        f[3 + 2 * k] = sum / cols.len() as f64;
        f[4 + 2 * k] = max;
        f[9 + k] = around;
    }
    f
}
