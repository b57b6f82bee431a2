//! Learning agents: the DQN monitor and the tabular Q-learning baseline.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_gamma, Transition};
use crate::error::{Error, Result};
use crate::mews::MewsScore;
use crate::neural::{td_target, QNetwork, Sample, TargetSpec};
use crate::reward::{ActionId, NUM_ACTIONS};
use crate::seeding::StreamRng;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Bounded FIFO experience memory.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "replay memory capacity must be positive".into(),
            ));
        }
        Ok(ReplayMemory {
            capacity,
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn push(&mut self, transition: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(transition);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, idx: usize) -> Option<&Transition> {
        self.buffer.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// `batch_size` distinct indices drawn uniformly, or `None` while the
    /// memory holds fewer than `batch_size` entries.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        batch_size: usize,
    ) -> Option<Vec<usize>> {
        if batch_size == 0 || self.buffer.len() < batch_size {
            return None;
        }
        Some(rand::seq::index::sample(rng, self.buffer.len(), batch_size).into_vec())
    }
}

/// Multiplicative epsilon decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule {
            epsilon: 1.0,
            epsilon_decay: 0.995,
            epsilon_min: 0.01,
        }
    }
}

impl ExplorationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon decay {} outside (0, 1]",
                self.epsilon_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon_min) {
            return Err(Error::Config(format!(
                "epsilon floor {} outside [0, 1]",
                self.epsilon_min
            )));
        }
        Ok(())
    }

    /// `epsilon <- max(epsilon_min, epsilon * epsilon_decay)`, never increasing.
    pub fn decay(&mut self) {
        let next = (self.epsilon * self.epsilon_decay).max(self.epsilon_min);
        self.epsilon = next.min(self.epsilon);
    }
}

/// When the DQN agent trains on its memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayCadence {
    /// Once after each episode's timestep loop.
    PerEpisode,
    /// After every environment step.
    PerStep,
}

impl fmt::Display for ReplayCadence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReplayCadence::PerEpisode => "per_episode",
            ReplayCadence::PerStep => "per_step",
        })
    }
}

impl FromStr for ReplayCadence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_episode" => Ok(ReplayCadence::PerEpisode),
            "per_step" => Ok(ReplayCadence::PerStep),
            other => Err(Error::Config(format!("unknown replay cadence {other:?}"))),
        }
    }
}

/// Epsilon-greedy choice over a row of action values.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> ActionId {
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        ActionId::from_index(rng.gen_range(0..NUM_ACTIONS))
    } else {
        ActionId::from_index(argmax(q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnSettings {
    pub gamma: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub exploration: ExplorationSchedule,
}

/// A DQN agent owning one network, one replay memory and two random streams
/// (exploration and replay sampling).
#[derive(Debug, Clone)]
pub struct DqnAgent {
    net: QNetwork,
    memory: ReplayMemory,
    schedule: ExplorationSchedule,
    gamma: f64,
    batch_size: usize,
    explore_rng: StreamRng,
    replay_rng: StreamRng,
}

impl DqnAgent {
    pub fn new(
        net: QNetwork,
        settings: DqnSettings,
        explore_rng: StreamRng,
        replay_rng: StreamRng,
    ) -> Result<Self> {
        check_gamma(settings.gamma)?;
        settings.exploration.validate()?;
        if settings.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(DqnAgent {
            net,
            memory: ReplayMemory::new(settings.memory_capacity)?,
            schedule: settings.exploration,
            gamma: settings.gamma,
            batch_size: settings.batch_size,
            explore_rng,
            replay_rng,
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn into_network(self) -> QNetwork {
        self.net
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn schedule(&self) -> ExplorationSchedule {
        self.schedule
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.epsilon
    }

    /// Epsilon-greedy action at the current epsilon.
    pub fn act(&mut self, state: &[f64]) -> Result<ActionId> {
        self.act_with_epsilon(state, self.schedule.epsilon)
    }

    pub fn act_with_epsilon(&mut self, state: &[f64], epsilon: f64) -> Result<ActionId> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Domain(format!("epsilon {epsilon} outside [0, 1]")));
        }
        let q = self.net.forward(state)?;
        Ok(epsilon_greedy(&q, epsilon, &mut self.explore_rng))
    }

    pub fn greedy(&self, state: &[f64]) -> Result<ActionId> {
        Ok(ActionId::from_index(argmax(&self.net.forward(state)?)))
    }

    pub fn remember(&mut self, transition: Transition) {
        self.memory.push(transition);
    }

    /// Train on one uniformly sampled mini-batch, then decay epsilon.
    ///
    /// Returns `Ok(None)` without touching anything while the memory holds
    /// fewer than `batch_size` transitions.
    pub fn replay(&mut self) -> Result<Option<f64>> {
        let Some(indices) = self
            .memory
            .sample_indices(&mut self.replay_rng, self.batch_size)
        else {
            return Ok(None);
        };
        let mut targets = Vec::with_capacity(indices.len());
        for &i in &indices {
            let t = &self.memory.buffer[i];
            let next_q = self.net.forward(&t.next_state.features)?;
            targets.push(td_target(&TargetSpec {
                reward: f64::from(t.reward),
                gamma: self.gamma,
                next_q,
                done: t.done,
            }));
        }
        let batch: Vec<Sample<'_>> = indices
            .iter()
            .zip(&targets)
            .map(|(&i, &target)| {
                let t = &self.memory.buffer[i];
                Sample {
                    state: &t.state.features,
                    action: t.action,
                    target,
                }
            })
            .collect();
        let loss = self.net.train_step(&batch)?;
        self.schedule.decay();
        Ok(Some(loss))
    }
}

/// Tabular action values over discrete MEWS states.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    q: [[f64; NUM_ACTIONS]; NUM_ACTIONS],
    alpha: f64,
    gamma: f64,
}

impl QTable {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha {alpha} outside [0, 1]")));
        }
        check_gamma(gamma)?;
        Ok(QTable {
            q: [[0.0; NUM_ACTIONS]; NUM_ACTIONS],
            alpha,
            gamma,
        })
    }

    pub fn from_values(
        q: [[f64; NUM_ACTIONS]; NUM_ACTIONS],
        alpha: f64,
        gamma: f64,
    ) -> Result<Self> {
        if q.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite Q-table entry".into()));
        }
        let mut t = QTable::new(alpha, gamma)?;
        t.q = q;
        Ok(t)
    }

    pub fn get(&self, s: MewsScore, a: ActionId) -> f64 {
        self.q[s.index()][a.index()]
    }

    pub fn row(&self, s: MewsScore) -> &[f64; NUM_ACTIONS] {
        &self.q[s.index()]
    }

    pub fn values(&self) -> &[[f64; NUM_ACTIONS]; NUM_ACTIONS] {
        &self.q
    }

    /// `q[s][a] <- (1 - alpha) q[s][a] + alpha (r + gamma max_a' q[s'][a'])`.
    pub fn update(&mut self, s: MewsScore, a: ActionId, r: f64, s_next: MewsScore) {
        let best_next = self.q[s_next.index()]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let cell = &mut self.q[s.index()][a.index()];
        *cell = (1.0 - self.alpha) * *cell + self.alpha * (r + self.gamma * best_next);
    }

    pub fn act<R: Rng + ?Sized>(&self, s: MewsScore, epsilon: f64, rng: &mut R) -> ActionId {
        epsilon_greedy(&self.q[s.index()], epsilon, rng)
    }

    /// Greedy action for every state, indexed by score.
    pub fn greedy_policy(&self) -> [ActionId; NUM_ACTIONS] {
        std::array::from_fn(|s| ActionId::from_index(argmax(&self.q[s])))
    }
}

/// Functional form of [`QTable::update`].
pub fn q_update(mut table: QTable, s: MewsScore, a: ActionId, r: f64, s_next: MewsScore) -> QTable {
    table.update(s, a, r, s_next);
    table
}
