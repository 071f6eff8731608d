//! Rewards, Bellman targets, experience replay and the two-head training loop.

use std::collections::BTreeMap;
use std::io;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{PreparedCatalog, Scenario};
use crate::container::{is_close_to_partner, squeeze_count, ContainerState};
use crate::harness::{argmax, EnvConfig, EpisodeError, PackingEpisode};
use crate::net::{step_input, Adam, Checkpoint, DimTable, ObjectCode, ObjectSample, PlacementSample, QNet, StepInput};
use crate::properties::AvoidanceMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Compactness weight.
    pub theta: f64,
    /// Weight of squeezing fragile objects.
    pub lambda: f64,
    /// Weight of packing next to an object to avoid.
    pub beta: f64,
    /// Discount.
    pub gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            theta: 10.0,
            lambda: 20.0,
            beta: 0.2,
            gamma: 0.99,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.theta >= 0.0 && self.lambda >= 0.0 && self.beta >= 0.0) {
            return Err("reward weights must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err("discount must lie in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    /// Packed volume over container volume after the placement.
    pub compactness: f64,
    /// Squeezed fragile objects times the new object's weight.
    pub fragility: f64,
    /// 1 when the new object ends up close to an object it must avoid.
    pub avoidance: f64,
    pub overall: f64,
}

/// Reward of the placement that turned `before` into `after` (the new
/// object is the last one in `after`).
pub fn compute_reward(before: &ContainerState, after: &ContainerState, avoidance: &AvoidanceMatrix, avoid_distance: i32, cfg: &RewardConfig) -> RewardComponents {
    let idx = after.placed().len().checked_sub(1).expect("no placement between the two states");
    assert_eq!(idx, before.placed().len(), "states differ by more than one placement");
    let new = &after.placed()[idx];
    let compactness = after.compactness();
    let fragility = squeeze_count(before, new) as f64 * new.weight;
    let avoid = if is_close_to_partner(after, idx, avoidance, avoid_distance) { 1.0 } else { 0.0 };
    RewardComponents {
        compactness,
        fragility,
        avoidance: avoid,
        overall: cfg.theta * compactness - cfg.lambda * fragility - cfg.beta * avoid,
    }
}

/// `(1 − α)·q_old + α·(R + γ·q_next)`, with `q_next = 0` at terminal states.
pub fn bellman_target(reward: f64, q_next_max: Option<f64>, gamma: f64, alpha: f64, q_old: f64) -> f64 {
    (1.0 - alpha) * q_old + alpha * (reward + gamma * q_next_max.unwrap_or(0.0))
}

/// Object-choice target: the best placement target of that object.
pub fn object_supervision(placement_targets: &[f64]) -> f64 {
    assert!(!placement_targets.is_empty(), "object has no placement targets");
    placement_targets.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub reward: RewardConfig,
    pub env: EnvConfig,
    /// Network sizes; defaults to the desk table for the container.
    pub dims: Option<DimTable>,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which ε decays linearly.
    pub epsilon_decay_steps: usize,
    /// Target mixing rate; 1 gives plain Bellman targets.
    pub alpha: f64,
    /// Optimizer steps between target-network refreshes.
    pub target_sync: usize,
    /// Optimizer steps to run.
    pub train_steps: usize,
    /// Stop after this many episodes as well (0: no limit).
    pub max_episodes: usize,
    /// Transitions collected before the first optimizer step.
    pub warmup: usize,
    /// Environment steps per optimizer step.
    pub train_every: usize,
    /// Worker threads; 1 is the reference single-threaded mode, 0 uses all
    /// cores.
    pub threads: usize,
    pub seed: u64,
    /// Keep every transition's reward in the outcome.
    pub record_transitions: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            reward: RewardConfig::default(),
            env: EnvConfig::default(),
            dims: None,
            replay_capacity: 10_000,
            batch_size: 64,
            step_size: 6e-5,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
            alpha: 1.0,
            target_sync: 500,
            train_steps: 10_000,
            max_episodes: 0,
            warmup: 256,
            train_every: 1,
            threads: 1,
            seed: 0,
            record_transitions: false,
        }
    }
}

impl TrainingConfig {
    pub fn dims(&self) -> DimTable {
        self.dims.unwrap_or_else(|| DimTable::desk(self.env.width, self.env.length))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.reward.validate()?;
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err("batch size must be in 1..=replay capacity".into());
        }
        if !(self.step_size > 0.0) {
            return Err("step size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err("alpha must lie in [0, 1]".into());
        }
        if self.target_sync == 0 || self.train_every == 0 {
            return Err("target_sync and train_every must be positive".into());
        }
        let d = self.dims();
        if (d.width, d.length) != (self.env.width, self.env.length) {
            return Err("network map size differs from the container".into());
        }
        Ok(())
    }

    pub fn epsilon(&self, env_step: usize) -> f64 {
        if self.epsilon_decay_steps == 0 {
            return self.epsilon_end;
        }
        let f = (env_step as f64 / self.epsilon_decay_steps as f64).min(1.0);
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no scenarios to train on")]
    NoScenarios,
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("training diverged at optimizer step {step}: {what}")]
    Diverged { step: u64, what: String },
}

#[derive(Clone, Debug)]
struct Transition {
    step: Arc<StepInput>,
    object: usize,
    action: usize,
    reward: f64,
    next: Option<Arc<StepInput>>,
    /// Targets computed under target snapshot number `.0`.
    cached: Option<(u64, f64, f64)>,
}

/// One line of the learning curve, written after every episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub episode: usize,
    pub compactness: f64,
    pub fragility: f64,
    pub avoidance: f64,
    pub overall: f64,
    pub loss_obj: f64,
    pub loss_place: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub episode: usize,
    pub object_id: u32,
    pub reward: RewardComponents,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurveRow>,
    pub transitions: Vec<TransitionRecord>,
}

pub fn write_curve(w: impl io::Write, rows: &[CurveRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// ε-greedy collector and learner.
pub struct Trainer<'a> {
    cfg: TrainingConfig,
    catalog: &'a PreparedCatalog,
    net: QNet,
    params: Vec<f64>,
    target: Vec<f64>,
    target_codes: BTreeMap<u32, ObjectCode>,
    /// Bumped on every target sync; invalidates cached targets.
    target_epoch: u64,
    adam: Adam,
    replay: Vec<Transition>,
    replay_next: usize,
    rng: ChaCha8Rng,
    env_steps: usize,
    opt_steps: u64,
    initial: Option<ContainerState>,
}

impl<'a> Trainer<'a> {
    pub fn new(catalog: &'a PreparedCatalog, cfg: TrainingConfig) -> Result<Self, TrainError> {
        cfg.validate().map_err(TrainError::Config)?;
        let net = QNet::new(cfg.dims());
        let params = net.init(cfg.seed);
        let adam = Adam::new(params.len(), cfg.step_size);
        let target_codes = net.encode_catalog(&params, catalog);
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_0c8e),
            target: params.clone(),
            cfg,
            catalog,
            net,
            params,
            target_codes,
            target_epoch: 0,
            adam,
            replay: Vec::new(),
            replay_next: 0,
            env_steps: 0,
            opt_steps: 0,
            initial: None,
        })
    }

    /// Starts every episode from `state` instead of an empty container.
    pub fn with_initial_state(mut self, state: ContainerState) -> Self {
        self.initial = Some(state);
        self
    }

    pub fn net(&self) -> &QNet {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.opt_steps
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            dims: *self.net.dims(),
            step: self.opt_steps,
            seed: self.cfg.seed,
            params: self.params.clone(),
        }
    }

    fn push(&mut self, t: Transition) {
        if self.replay.len() < self.cfg.replay_capacity {
            self.replay.push(t);
        } else {
            self.replay[self.replay_next] = t;
        }
        self.replay_next = (self.replay_next + 1) % self.cfg.replay_capacity;
    }

    fn choose(&mut self, step: &StepInput) -> (usize, usize) {
        let eps = self.cfg.epsilon(self.env_steps);
        if self.rng.gen::<f64>() < eps {
            let b = self.rng.gen_range(0..step.len());
            let a = self.rng.gen_range(0..step.candidates[b].len());
            (b, a)
        } else {
            crate::harness::greedy_choice(&self.net, &self.params, self.catalog, step).expect("non-empty step")
        }
    }

    /// Target-network value of the best object/placement in `step`.
    fn next_value(&self, step: &StepInput) -> f64 {
        let enc = self.net.encode_step_cached(&self.target, &self.target_codes, step);
        let b = argmax(&self.net.object_q(&self.target, &enc)).unwrap();
        object_supervision(&self.net.placement_q(&self.target, &enc, b))
    }

    /// Placement target of the executed action and the object target of the
    /// chosen object.
    fn targets(&self, t: &Transition) -> (f64, f64) {
        let q_next = t.next.as_ref().filter(|n| !n.is_empty()).map(|n| self.next_value(n));
        let enc = self.net.encode_step_cached(&self.target, &self.target_codes, &t.step);
        let mut place = self.net.placement_q(&self.target, &enc, t.object);
        let q_old = if self.cfg.alpha < 1.0 {
            let online = self.net.encode_step(&self.params, self.catalog, &t.step);
            self.net.placement_q(&self.params, &online, t.object)[t.action]
        } else {
            0.0
        };
        let y = bellman_target(t.reward, q_next, self.cfg.reward.gamma, self.cfg.alpha, q_old);
        place[t.action] = y;
        (y, object_supervision(&place))
    }

    /// One optimizer step for each head on a uniformly sampled batch.
    /// Returns `(object loss, placement loss)`.
    pub fn train_step(&mut self) -> Result<(f64, f64), TrainError> {
        let n = self.cfg.batch_size;
        let idx: Vec<usize> = (0..n).map(|_| self.rng.gen_range(0..self.replay.len())).collect();
        // With alpha = 1 targets depend only on the target snapshot, so they
        // are computed once per transition and snapshot.
        let epoch = self.target_epoch;
        let reuse = self.cfg.alpha >= 1.0;
        let mut stale: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| !reuse || !matches!(self.replay[i].cached, Some((e, _, _)) if e == epoch))
            .collect();
        stale.sort_unstable();
        stale.dedup();
        let fresh: Vec<(f64, f64)> = stale.par_iter().map(|&i| self.targets(&self.replay[i])).collect();
        let mut lookup: BTreeMap<usize, (f64, f64)> = stale.iter().copied().zip(fresh).collect();
        if reuse {
            for (&i, &(y, yo)) in &lookup {
                self.replay[i].cached = Some((epoch, y, yo));
            }
            for &i in &idx {
                if let Some((_, y, yo)) = self.replay[i].cached {
                    lookup.insert(i, (y, yo));
                }
            }
        }
        let targets: Vec<(f64, f64)> = idx.iter().map(|i| lookup[i]).collect();
        let batch: Vec<&Transition> = idx.iter().map(|&i| &self.replay[i]).collect();
        let step_no = self.opt_steps;
        let diverged = |what: String| TrainError::Diverged { step: step_no, what };
        if targets.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(diverged("non-finite target".into()));
        }

        let place: Vec<PlacementSample> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &(y, _))| PlacementSample {
                step: &t.step,
                buffer_index: t.object,
                action: t.action,
                target: y,
            })
            .collect();
        let (loss_place, grad) = self.net.placement_loss_and_gradients(&self.params, self.catalog, &place);
        if !loss_place.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(diverged(format!("placement loss {loss_place}")));
        }
        let ranges = self.net.placement_ranges();
        self.adam.step(&mut self.params, &grad, &ranges);

        let obj: Vec<ObjectSample> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &(_, y))| ObjectSample {
                step: &t.step,
                buffer_index: t.object,
                target: y,
            })
            .collect();
        let (loss_obj, grad) = self.net.object_loss_and_gradients(&self.params, self.catalog, &obj);
        if !loss_obj.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(diverged(format!("object loss {loss_obj}")));
        }
        let ranges = self.net.object_ranges();
        self.adam.step(&mut self.params, &grad, &ranges);

        self.opt_steps += 1;
        if self.opt_steps.is_multiple_of(self.cfg.target_sync as u64) {
            self.sync_target();
        }
        Ok((loss_obj, loss_place))
    }

    fn sync_target(&mut self) {
        self.target.clone_from(&self.params);
        self.target_epoch += 1;
        self.target_codes = self.net.encode_catalog(&self.target, self.catalog);
    }

    /// Plays one ε-greedy episode, training along the way. Stops early once
    /// the optimizer step budget is spent.
    pub fn run_episode(&mut self, scenario: &Scenario, episode: usize, records: Option<&mut Vec<TransitionRecord>>) -> Result<CurveRow, TrainError> {
        let env = self.cfg.env;
        let mut ep = PackingEpisode::new(self.catalog, scenario, &env)?;
        if let Some(s) = &self.initial {
            ep = ep.with_state(s.clone());
        }
        let avoidance = self.catalog.avoidance();
        let mut cur = Arc::new(step_input(ep.state(), ep.buffer(), avoidance));
        let mut sums = RewardComponents::default();
        let (mut lo, mut lp, mut nl) = (0.0, 0.0, 0usize);
        let mut records = records;
        let eps = self.cfg.epsilon(self.env_steps);
        while !cur.is_empty() && self.opt_steps < self.cfg.train_steps as u64 {
            let (b, a) = self.choose(&cur);
            let action = cur.candidates[b][a];
            let before = ep.state().clone();
            let rec = ep.apply(&action)?;
            let r = compute_reward(&before, ep.state(), avoidance, env.avoid_distance, &self.cfg.reward);
            sums.compactness = r.compactness;
            sums.fragility += r.fragility;
            sums.avoidance += r.avoidance;
            sums.overall += r.overall;
            if let Some(v) = records.as_deref_mut() {
                v.push(TransitionRecord {
                    episode,
                    object_id: rec.object_id,
                    reward: r,
                });
            }
            let next = Arc::new(step_input(ep.state(), ep.buffer(), avoidance));
            self.push(Transition {
                step: Arc::clone(&cur),
                object: b,
                action: a,
                reward: r.overall,
                next: if next.is_empty() { None } else { Some(Arc::clone(&next)) },
                cached: None,
            });
            self.env_steps += 1;
            cur = next;
            if self.replay.len() >= self.cfg.warmup.max(1) && self.env_steps.is_multiple_of(self.cfg.train_every) {
                let (o, p) = self.train_step()?;
                lo += o;
                lp += p;
                nl += 1;
            }
        }
        let avg = |s: f64| if nl == 0 { 0.0 } else { s / nl as f64 };
        Ok(CurveRow {
            step: self.opt_steps,
            episode,
            compactness: sums.compactness,
            fragility: sums.fragility,
            avoidance: sums.avoidance,
            overall: sums.overall,
            loss_obj: avg(lo),
            loss_place: avg(lp),
            epsilon: eps,
        })
    }

    /// Cycles through `scenarios` until the optimizer step budget is spent.
    pub fn run(mut self, scenarios: &[Scenario]) -> Result<TrainOutcome, TrainError> {
        if scenarios.is_empty() {
            return Err(TrainError::NoScenarios);
        }
        let mut curve = Vec::new();
        let mut transitions = Vec::new();
        let mut episode = 0;
        let mut idle = 0;
        while self.opt_steps < self.cfg.train_steps as u64 && (self.cfg.max_episodes == 0 || episode < self.cfg.max_episodes) {
            let s = &scenarios[episode % scenarios.len()];
            let before = self.env_steps;
            let rec = if self.cfg.record_transitions { Some(&mut transitions) } else { None };
            curve.push(self.run_episode(s, episode, rec)?);
            episode += 1;
            // scenarios where nothing ever fits would loop forever
            idle = if self.env_steps == before { idle + 1 } else { 0 };
            if idle >= scenarios.len() {
                break;
            }
        }
        Ok(TrainOutcome {
            checkpoint: self.checkpoint(),
            curve,
            transitions,
        })
    }
}

/// Trains from scratch, in a thread pool of `cfg.threads` workers.
pub fn train(catalog: &PreparedCatalog, scenarios: &[Scenario], cfg: &TrainingConfig) -> Result<TrainOutcome, TrainError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    pool.install(|| Trainer::new(catalog, cfg.clone())?.run(scenarios))
}
