//! The isolated multi-agent monitoring environment.
//!
//! Every monitored vital gets its own sub-environment. Sub-environments share
//! the time axis (all streams have equal length) but nothing else: an agent's
//! observations and rewards never depend on another agent's actions. The
//! streams are replayed recordings, so transitions do not depend on actions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::normalize;
use crate::error::{Error, Result};
use crate::mews::{MewsBandTable, MewsScore, VitalKind};
use crate::reward::{ActionId, RewardMatrix};

/// What an agent sees at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time_index: usize,
    pub vital: VitalKind,
    pub raw_value: f64,
    pub norm_value: f64,
    /// The last `window` normalized readings, oldest first. Readings before
    /// the start of the stream repeat the first one.
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub monitor_length: usize,
    pub episodes: usize,
    pub gamma: f64,
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    1
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.monitor_length == 0 {
            return Err(Error::Config("monitor_length must be positive".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        check_gamma(self.gamma)?;
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma {gamma} outside [0, 1)")))
    }
}

/// One experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: ActionId,
    pub reward: i32,
    pub next_state: Observation,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Observation,
    pub reward: i32,
    pub done: bool,
}

/// A single vital's view of the environment.
#[derive(Debug, Clone)]
pub struct SubEnv {
    vital: VitalKind,
    raw: Arc<[f64]>,
    norm: Arc<[f64]>,
    scores: Arc<[MewsScore]>,
    rewards: RewardMatrix,
    monitor_length: usize,
    window: usize,
    cursor: usize,
    score: i64,
}

impl SubEnv {
    fn new(
        vital: VitalKind,
        raw: &[f64],
        table: &MewsBandTable,
        rewards: RewardMatrix,
        monitor_length: usize,
        window: usize,
    ) -> Result<Self> {
        let scores = raw
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                table
                    .classify(vital, v)
                    .map_err(|e| Error::Config(format!("{vital} sample {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let norm: Vec<f64> = raw.iter().map(|&v| normalize(vital, v)).collect();
        Ok(SubEnv {
            vital,
            raw: raw.into(),
            norm: norm.into(),
            scores: scores.into(),
            rewards,
            monitor_length,
            window,
            cursor: 0,
            score: 0,
        })
    }

    pub fn vital(&self) -> VitalKind {
        self.vital
    }

    pub fn monitor_length(&self) -> usize {
        self.monitor_length
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.monitor_length
    }

    /// Current time index within the episode.
    pub fn time_index(&self) -> usize {
        self.cursor
    }

    /// MEWS score of the reading at time `t`.
    pub fn score_at(&self, t: usize) -> MewsScore {
        self.scores[t]
    }

    pub fn observation(&self, t: usize) -> Observation {
        let features = (0..self.window)
            .map(|k| {
                let back = self.window - 1 - k;
                self.norm[t.saturating_sub(back)]
            })
            .collect();
        Observation {
            time_index: t,
            vital: self.vital,
            raw_value: self.raw[t],
            norm_value: self.norm[t],
            features,
        }
    }

    pub fn reset(&mut self) -> Observation {
        self.cursor = 0;
        self.score = 0;
        self.observation(0)
    }

    pub fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeComplete {
                agent: self.vital.name(),
            });
        }
        let reward = self.rewards.reward(self.scores[self.cursor], action);
        self.score += i64::from(reward);
        self.cursor += 1;
        Ok(StepOutcome {
            next: self.observation(self.cursor),
            reward,
            done: self.cursor == self.monitor_length,
        })
    }

    /// Undiscounted sum of rewards since the last reset.
    pub fn episode_score(&self) -> i64 {
        self.score
    }
}

/// The multi-agent environment: one [`SubEnv`] per monitored vital.
#[derive(Debug, Clone)]
pub struct MonitoringEnv {
    agents: Vec<SubEnv>,
}

impl MonitoringEnv {
    /// Builds one sub-environment per `(vital, stream)` pair. Streams must
    /// share a length of at least `monitor_length + 1`.
    pub fn new(
        streams: &[(VitalKind, &[f64])],
        config: &EpisodeConfig,
        table: &MewsBandTable,
        rewards: RewardMatrix,
    ) -> Result<Self> {
        config.validate()?;
        let Some((_, first)) = streams.first() else {
            return Err(Error::Config("at least one stream is required".into()));
        };
        let len = first.len();
        if len < config.monitor_length + 1 {
            return Err(Error::Config(format!(
                "stream length {len} too short for monitor_length {} (need {})",
                config.monitor_length,
                config.monitor_length + 1
            )));
        }
        let mut agents = Vec::with_capacity(streams.len());
        for (vital, values) in streams {
            if values.len() != len {
                return Err(Error::Config(format!(
                    "stream {vital} has length {} but {} was expected",
                    values.len(),
                    len
                )));
            }
            if agents.iter().any(|a: &SubEnv| a.vital == *vital) {
                return Err(Error::Config(format!("duplicate stream for {vital}")));
            }
            agents.push(SubEnv::new(
                *vital,
                values,
                table,
                rewards,
                config.monitor_length,
                config.window,
            )?);
        }
        Ok(MonitoringEnv { agents })
    }

    pub fn vitals(&self) -> impl Iterator<Item = VitalKind> + '_ {
        self.agents.iter().map(|a| a.vital)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agent(&self, vital: VitalKind) -> Result<&SubEnv> {
        self.agents
            .iter()
            .find(|a| a.vital == vital)
            .ok_or_else(|| Error::Config(format!("no agent monitors {vital}")))
    }

    pub fn agent_mut(&mut self, vital: VitalKind) -> Result<&mut SubEnv> {
        self.agents
            .iter_mut()
            .find(|a| a.vital == vital)
            .ok_or_else(|| Error::Config(format!("no agent monitors {vital}")))
    }

    /// Hands out the sub-environments so agents can drive them independently.
    pub fn into_agents(self) -> Vec<SubEnv> {
        self.agents
    }

    pub fn reset(&mut self, vital: VitalKind) -> Result<Observation> {
        Ok(self.agent_mut(vital)?.reset())
    }

    pub fn step(&mut self, vital: VitalKind, action: ActionId) -> Result<StepOutcome> {
        self.agent_mut(vital)?.step(action)
    }

    pub fn episode_score(&self, vital: VitalKind) -> Result<i64> {
        Ok(self.agent(vital)?.episode_score())
    }
}

/// `sum_t gamma^t * r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}
