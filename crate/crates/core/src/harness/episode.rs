//! One packing episode: an arrival stream feeding a bounded buffer, and the
//! step-by-step planner loop.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::CandidateAction;
use crate::catalog::{PreparedCatalog, PreparedObject, Scenario};
use crate::container::{close_pairs, pressure_on_fragile, ContainerState, PlaceError, DEFAULT_AVOID_DISTANCE};
use crate::heuristics::{any_feasible, Policy, PolicyView};
use crate::voxel::Orientation;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("scenario '{scenario}' refers to object {id}, which is not in the catalog")]
    UnknownObject { scenario: String, id: u32 },
    #[error("policy chose an infeasible action {action:?}: {reason}")]
    Contract { action: CandidateAction, reason: String },
}

/// Container geometry and the closeness threshold used for metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub width: usize,
    pub length: usize,
    pub height: i32,
    pub avoid_distance: i32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            width: crate::container::DEFAULT_WIDTH,
            length: crate::container::DEFAULT_LENGTH,
            height: crate::container::DEFAULT_HEIGHT,
            avoid_distance: DEFAULT_AVOID_DISTANCE,
        }
    }
}

impl EnvConfig {
    pub fn sized(width: usize, length: usize, height: i32) -> Self {
        EnvConfig {
            width,
            length,
            height,
            ..Default::default()
        }
    }

    pub fn empty_state(&self) -> ContainerState {
        ContainerState::new(self.width, self.length, self.height)
    }
}

/// An executed placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub object_id: u32,
    pub buffer_index: usize,
    pub orientation: Orientation,
    pub x: usize,
    pub y: usize,
    pub z: i32,
}

#[derive(Clone, Debug)]
pub struct PackingEpisode<'a> {
    catalog: &'a PreparedCatalog,
    state: ContainerState,
    arrivals: VecDeque<Arc<PreparedObject>>,
    buffer: Vec<Arc<PreparedObject>>,
    capacity: usize,
    history: Vec<PlacementRecord>,
}

impl<'a> PackingEpisode<'a> {
    pub fn new(catalog: &'a PreparedCatalog, scenario: &Scenario, env: &EnvConfig) -> Result<Self, EpisodeError> {
        let arrivals = scenario
            .order
            .iter()
            .map(|&id| {
                catalog.get(id).cloned().ok_or_else(|| EpisodeError::UnknownObject {
                    scenario: scenario.name.clone(),
                    id,
                })
            })
            .collect::<Result<VecDeque<_>, _>>()?;
        let mut ep = PackingEpisode {
            catalog,
            state: env.empty_state(),
            arrivals,
            buffer: Vec::new(),
            capacity: scenario.buffer_capacity.max(1),
            history: Vec::new(),
        };
        ep.refill();
        Ok(ep)
    }

    /// Replaces the (initially empty) container, e.g. with a prefilled one.
    pub fn with_state(mut self, state: ContainerState) -> Self {
        self.state = state;
        self
    }

    fn refill(&mut self) {
        while self.buffer.len() < self.capacity {
            match self.arrivals.pop_front() {
                Some(o) => self.buffer.push(o),
                None => break,
            }
        }
    }

    pub fn catalog(&self) -> &'a PreparedCatalog {
        self.catalog
    }

    pub fn state(&self) -> &ContainerState {
        &self.state
    }

    pub fn buffer(&self) -> &[Arc<PreparedObject>] {
        &self.buffer
    }

    pub fn history(&self) -> &[PlacementRecord] {
        &self.history
    }

    pub fn view(&self) -> PolicyView<'_> {
        PolicyView {
            state: &self.state,
            buffer: &self.buffer,
            catalog: self.catalog,
        }
    }

    /// Whether the episode is over: nothing buffered, or nothing buffered
    /// fits anywhere.
    pub fn is_finished(&self) -> bool {
        self.buffer.is_empty() || !any_feasible(&self.state, &self.buffer)
    }

    /// Executes `action`, re-resolving its resting height, then refills the
    /// buffer. Returns the placement as executed.
    pub fn apply(&mut self, action: &CandidateAction) -> Result<PlacementRecord, EpisodeError> {
        let violation = |reason: String| EpisodeError::Contract { action: *action, reason };
        let obj = self
            .buffer
            .get(action.buffer_index)
            .cloned()
            .ok_or_else(|| violation(format!("buffer holds {} objects", self.buffer.len())))?;
        let pose = obj
            .poses
            .get(action.pose_index)
            .ok_or_else(|| violation(format!("object {} has {} poses", obj.id, obj.poses.len())))?;
        if pose.orientation != action.orientation {
            return Err(violation("pose index and orientation disagree".into()));
        }
        let z = self.state.place(&obj, pose, action.x, action.y).map_err(|e: PlaceError| violation(e.to_string()))?;
        self.buffer.remove(action.buffer_index);
        self.refill();
        let rec = PlacementRecord {
            object_id: obj.id,
            buffer_index: action.buffer_index,
            orientation: action.orientation,
            x: action.x,
            y: action.y,
            z,
        };
        self.history.push(rec);
        Ok(rec)
    }
}

/// One planner step: stop (`None`) when the buffer is empty or nothing in it
/// fits; otherwise ask the policy and execute its choice.
pub fn packing_step(ep: &mut PackingEpisode<'_>, policy: &mut dyn Policy) -> Result<Option<PlacementRecord>, EpisodeError> {
    if ep.is_finished() {
        return Ok(None);
    }
    let Some(action) = policy.select(&ep.view()) else {
        return Ok(None);
    };
    ep.apply(&action).map(Some)
}

/// Metrics of one finished episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: String,
    pub placements: Vec<PlacementRecord>,
    pub compactness: f64,
    pub violation: bool,
    pub close_pairs: usize,
    pub pressures: Vec<f64>,
    pub mean_pressure: f64,
    pub steps: usize,
}

/// Metrics of a terminal state.
pub fn episode_metrics(scenario: &str, state: &ContainerState, history: &[PlacementRecord], catalog: &PreparedCatalog, env: &EnvConfig) -> EpisodeResult {
    let pairs = close_pairs(state, catalog.avoidance(), env.avoid_distance).len();
    let (per, mean) = pressure_on_fragile(state);
    EpisodeResult {
        scenario: scenario.to_string(),
        placements: history.to_vec(),
        compactness: state.compactness(),
        violation: pairs > 0,
        close_pairs: pairs,
        pressures: per.into_iter().map(|(_, p)| p).collect(),
        mean_pressure: mean,
        steps: history.len(),
    }
}

pub fn run_episode(catalog: &PreparedCatalog, scenario: &Scenario, policy: &mut dyn Policy, env: &EnvConfig) -> Result<EpisodeResult, EpisodeError> {
    let mut ep = PackingEpisode::new(catalog, scenario, env)?;
    while packing_step(&mut ep, policy)?.is_some() {}
    Ok(episode_metrics(&scenario.name, ep.state(), ep.history(), catalog, env))
}
