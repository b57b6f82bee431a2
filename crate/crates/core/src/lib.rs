//! Per-vital deep Q-learning agents that learn to raise the right alert
//! level from early warning score bands.
//!
//! The pieces, bottom up: [`mews`] classifies readings, [`reward`] scores
//! alert choices, [`env`] replays recorded streams, [`neural`] and
//! [`agents`] learn, [`data`] loads or synthesizes streams, and
//! [`harness`] drives training runs and sweeps.

pub mod agents;
pub mod cli;
pub mod data;
pub mod env;
pub mod error;
pub mod harness;
pub mod mews;
pub mod neural;
pub mod reward;
pub mod seeding;

pub use agents::{DqnAgent, ExplorationSchedule, QTable, ReplayCadence, ReplayMemory};
pub use data::{SubjectStream, SynthSpec, TempUnit};
pub use env::{EpisodeConfig, MonitoringEnv, Observation, SubEnv, Transition};
pub use error::{Error, Result};
pub use harness::{RunConfig, RunMetrics, SweepGrid, SweepParam};
pub use mews::{classify, MewsBandTable, MewsScore, SedationLevel, VitalKind};
pub use neural::QNetwork;
pub use reward::{ActionId, RewardMatrix};
