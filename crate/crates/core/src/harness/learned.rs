//! Greedy two-stage policy driven by a trained Q-network.

use std::sync::Arc;

use crate::candidates::CandidateAction;
use crate::catalog::PreparedCatalog;
use crate::heuristics::{Policy, PolicyView};
use crate::net::{step_input, Checkpoint, QNet, StepInput};

/// Index of the largest value; the first one on ties.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

/// Picks the object with the highest object-head value, then its placement
/// with the highest placement-head value. Returns `(object, candidate)`
/// indices into `step`.
pub fn greedy_choice(net: &QNet, params: &[f64], catalog: &PreparedCatalog, step: &StepInput) -> Option<(usize, usize)> {
    if step.is_empty() {
        return None;
    }
    let enc = net.encode_step(params, catalog, step);
    let b = argmax(&net.object_q(params, &enc))?;
    let a = argmax(&net.placement_q(params, &enc, b))?;
    Some((b, a))
}

pub struct LearnedPolicy {
    net: QNet,
    params: Arc<Vec<f64>>,
}

impl LearnedPolicy {
    pub fn new(net: QNet, params: Arc<Vec<f64>>) -> Self {
        assert_eq!(net.param_count(), params.len());
        LearnedPolicy { net, params }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Self {
        Self::new(ck.net(), Arc::new(ck.params.clone()))
    }
}

impl Policy for LearnedPolicy {
    fn name(&self) -> &str {
        "opa"
    }

    fn select(&mut self, view: &PolicyView<'_>) -> Option<CandidateAction> {
        let step = step_input(view.state, view.buffer, view.catalog.avoidance());
        let (b, a) = greedy_choice(&self.net, &self.params, view.catalog, &step)?;
        Some(step.candidates[b][a])
    }
}
