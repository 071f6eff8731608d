//! Baseline packing policies and the interface shared with the learned planner.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::candidates::{enumerate_candidates, feasible_mask, CandidateAction};
use crate::catalog::{PreparedCatalog, PreparedObject};
use crate::container::ContainerState;

/// Everything a policy may look at when choosing the next placement.
#[derive(Clone, Copy)]
pub struct PolicyView<'a> {
    pub state: &'a ContainerState,
    pub buffer: &'a [Arc<PreparedObject>],
    pub catalog: &'a PreparedCatalog,
}

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Picks an object from the buffer and a placement for it, or `None` when
    /// nothing fits.
    fn select(&mut self, view: &PolicyView<'_>) -> Option<CandidateAction>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    FirstFit,
    Dbl,
    MinZ,
    Hm,
    Opa,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::FirstFit,
        PolicyKind::Dbl,
        PolicyKind::MinZ,
        PolicyKind::Hm,
        PolicyKind::Opa,
        PolicyKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::FirstFit => "firstfit",
            PolicyKind::Dbl => "dbl",
            PolicyKind::MinZ => "minz",
            PolicyKind::Hm => "hm",
            PolicyKind::Opa => "opa",
            PolicyKind::Random => "random",
        }
    }

    /// Builds a non-learned policy; `seed` only matters for `random`.
    /// Returns `None` for `opa`, which needs a trained model.
    pub fn heuristic(self, seed: u64) -> Option<Box<dyn Policy>> {
        Some(match self {
            PolicyKind::FirstFit => Box::new(FirstFit),
            PolicyKind::Dbl => Box::new(Dbl),
            PolicyKind::MinZ => Box::new(MinZ),
            PolicyKind::Hm => Box::new(Hm),
            PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
            PolicyKind::Opa => return None,
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown policy '{s}' (expected firstfit, dbl, minz, hm, opa or random)"))
    }
}

/// Candidate lists for every buffered object, concatenated in buffer order.
pub fn buffer_candidates(view: &PolicyView<'_>) -> Vec<CandidateAction> {
    view.buffer
        .iter()
        .enumerate()
        .flat_map(|(b, obj)| enumerate_candidates(view.state, obj, b))
        .collect()
}

/// Whether any buffered object can be placed anywhere.
pub fn any_feasible(state: &ContainerState, buffer: &[Arc<PreparedObject>]) -> bool {
    buffer
        .iter()
        .any(|obj| obj.poses.iter().any(|p| !feasible_mask(state, p).is_empty()))
}

/// Every feasible placement of every buffered object and pose, in
/// `(buffer, y, x, pose)` scan order.
pub fn all_placements(view: &PolicyView<'_>) -> Vec<CandidateAction> {
    let mut out = Vec::new();
    for (b, obj) in view.buffer.iter().enumerate() {
        let masks: Vec<_> = obj.poses.iter().map(|p| feasible_mask(view.state, p)).collect();
        for y in 0..view.state.length() {
            for x in 0..view.state.width() {
                for (k, m) in masks.iter().enumerate() {
                    if m.is_feasible(x, y) {
                        out.push(CandidateAction {
                            buffer_index: b,
                            pose_index: k,
                            orientation: obj.poses[k].orientation,
                            x,
                            y,
                            z: m.z(x, y),
                        });
                    }
                }
            }
        }
    }
    out
}

/// First feasible placement of the first object that fits, scanning rows
/// (y) then columns (x) then poses.
pub struct FirstFit;

impl Policy for FirstFit {
    fn name(&self) -> &str {
        "firstfit"
    }

    fn select(&mut self, view: &PolicyView<'_>) -> Option<CandidateAction> {
        for (b, obj) in view.buffer.iter().enumerate() {
            let masks: Vec<_> = obj.poses.iter().map(|p| feasible_mask(view.state, p)).collect();
            for y in 0..view.state.length() {
                for x in 0..view.state.width() {
                    if let Some(k) = masks.iter().position(|m| m.is_feasible(x, y)) {
                        return Some(CandidateAction {
                            buffer_index: b,
                            pose_index: k,
                            orientation: obj.poses[k].orientation,
                            x,
                            y,
                            z: masks[k].z(x, y),
                        });
                    }
                }
            }
        }
        None
    }
}

/// Deepest, then bottom-most, then left-most candidate.
pub struct Dbl;

impl Policy for Dbl {
    fn name(&self) -> &str {
        "dbl"
    }

    fn select(&mut self, view: &PolicyView<'_>) -> Option<CandidateAction> {
        buffer_candidates(view).into_iter().min_by_key(CandidateAction::key)
    }
}

/// Lowest resting height over every feasible placement.
pub struct MinZ;

impl Policy for MinZ {
    fn name(&self) -> &str {
        "minz"
    }

    fn select(&mut self, view: &PolicyView<'_>) -> Option<CandidateAction> {
        all_placements(view).into_iter().min_by_key(CandidateAction::key)
    }
}

/// Heightmap growth `Σ (new − old)` caused by a placement.
pub fn heightmap_increment(state: &ContainerState, obj: &PreparedObject, a: &CandidateAction) -> i64 {
    let pose = &obj.poses[a.pose_index];
    let hm = state.heightmap();
    pose.columns()
        .iter()
        .map(|&(dx, dy)| {
            let top = a.z + pose.top.at(dx, dy);
            i64::from((top - hm.get(a.x + dx, a.y + dy)).max(0))
        })
        .sum()
}

/// Smallest heightmap increment over every feasible placement.
pub struct Hm;

impl Policy for Hm {
    fn name(&self) -> &str {
        "hm"
    }

    fn select(&mut self, view: &PolicyView<'_>) -> Option<CandidateAction> {
        all_placements(view)
            .into_iter()
            .min_by_key(|a| (heightmap_increment(view.state, &view.buffer[a.buffer_index], a), a.key()))
    }
}

/// Uniform choice among all buffered objects' candidates.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&mut self, view: &PolicyView<'_>) -> Option<CandidateAction> {
        buffer_candidates(view).choose(&mut self.rng).copied()
    }
}
