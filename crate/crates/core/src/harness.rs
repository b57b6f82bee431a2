//! Multi-episode, multi-agent training runs, greedy evaluation, and
//! hyperparameter sweeps.
//!
//! Subjects are processed one after another with fresh agents. Within a
//! subject every vital's agent runs on its own sub-environment and random
//! streams, so agents are trained in parallel without affecting each other's
//! results.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{argmax, DqnAgent, DqnSettings, ExplorationSchedule, ReplayCadence};
use crate::data::SubjectStream;
use crate::env::{check_gamma, EpisodeConfig, MonitoringEnv, Observation, SubEnv, Transition};
use crate::error::{Error, Result};
use crate::mews::{canonical_table, VitalKind};
use crate::neural::{self, ModelMeta, QNetwork, TrainingSnapshot};
use crate::reward::{ActionId, RewardMatrix};
use crate::seeding::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub episodes: usize,
    pub monitor_length: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub memory_capacity: usize,
    pub window: usize,
    pub exploration: ExplorationSchedule,
    pub replay_cadence: ReplayCadence,
    pub vitals: Vec<VitalKind>,
    pub seed: u64,
    pub reward_matrix: RewardMatrix,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            episodes: 10,
            monitor_length: 500,
            alpha: 0.001,
            gamma: 0.95,
            batch_size: 32,
            hidden: 24,
            memory_capacity: 2000,
            window: 1,
            exploration: ExplorationSchedule::default(),
            replay_cadence: ReplayCadence::PerEpisode,
            vitals: vec![
                VitalKind::HeartRate,
                VitalKind::RespiratoryRate,
                VitalKind::Temperature,
            ],
            seed: 0,
            reward_matrix: RewardMatrix::default(),
        }
    }
}

impl RunConfig {
    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            monitor_length: self.monitor_length,
            episodes: self.episodes,
            gamma: self.gamma,
            seed: self.seed,
            window: self.window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.episode_config().validate()?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if self.memory_capacity == 0 {
            return Err(Error::Config("memory capacity must be at least 1".into()));
        }
        if self.vitals.is_empty() {
            return Err(Error::Config("at least one vital must be monitored".into()));
        }
        self.exploration.validate()
    }

    fn settings(&self) -> DqnSettings {
        DqnSettings {
            gamma: self.gamma,
            batch_size: self.batch_size,
            memory_capacity: self.memory_capacity,
            exploration: self.exploration,
        }
    }

    pub fn snapshot(&self, schedule: ExplorationSchedule) -> TrainingSnapshot {
        TrainingSnapshot {
            gamma: self.gamma,
            batch_size: self.batch_size,
            memory_capacity: self.memory_capacity,
            window: self.window,
            replay_cadence: self.replay_cadence.to_string(),
            episodes: self.episodes,
            monitor_length: self.monitor_length,
            epsilon: schedule.epsilon,
            epsilon_decay: schedule.epsilon_decay,
            epsilon_min: schedule.epsilon_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricRow {
    /// 1-based.
    pub episode: usize,
    pub agent: VitalKind,
    pub subject: String,
    pub score: i64,
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    /// Sorted by (subject, agent, episode).
    pub rows: Vec<MetricRow>,
    pub seed: u64,
    pub wall_time: Duration,
    pub config: RunConfig,
}

impl RunMetrics {
    /// Episode scores of one agent for one subject, in episode order.
    pub fn scores(&self, subject: &str, agent: VitalKind) -> Vec<i64> {
        self.rows
            .iter()
            .filter(|r| r.subject == subject && r.agent == agent)
            .map(|r| r.score)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub subject: String,
    pub vital: VitalKind,
    pub network: QNetwork,
    pub schedule: ExplorationSchedule,
}

#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub metrics: RunMetrics,
    pub models: Vec<TrainedModel>,
}

/// Train one agent on its sub-environment for `config.episodes` episodes.
/// Returns the per-episode scores and the trained agent.
pub fn train_agent(
    env: &mut SubEnv,
    subject: &str,
    config: &RunConfig,
) -> Result<(Vec<i64>, DqnAgent)> {
    let label = format!("init/{subject}/{}", env.vital().name());
    let net = QNetwork::new(
        config.window,
        config.hidden,
        config.alpha,
        &mut substream(config.seed, &label),
    )?;
    train_agent_from(env, subject, config, net)
}

/// Like [`train_agent`] but starting from an existing network.
pub fn train_agent_from(
    env: &mut SubEnv,
    subject: &str,
    config: &RunConfig,
    net: QNetwork,
) -> Result<(Vec<i64>, DqnAgent)> {
    if net.input_dim() != config.window {
        return Err(Error::Shape {
            expected: config.window,
            got: net.input_dim(),
        });
    }
    let vital = env.vital();
    let label = |what: &str| format!("{what}/{subject}/{}", vital.name());
    let mut agent = DqnAgent::new(
        net,
        config.settings(),
        substream(config.seed, &label("explore")),
        substream(config.seed, &label("replay")),
    )?;
    let diverged = |episode: usize, e: Error| -> Error {
        if e.is_numerical() {
            Error::TrainingDiverged {
                episode,
                agent: vital.name(),
                subject: subject.to_string(),
                reason: e.to_string(),
            }
        } else {
            e
        }
    };

    let mut scores = Vec::with_capacity(config.episodes);
    for episode in 1..=config.episodes {
        let mut state = env.reset();
        loop {
            let action = agent
                .act(&state.features)
                .map_err(|e| diverged(episode, e))?;
            let out = env.step(action)?;
            agent.remember(Transition {
                state,
                action,
                reward: out.reward,
                next_state: out.next.clone(),
                done: out.done,
            });
            if config.replay_cadence == ReplayCadence::PerStep {
                agent.replay().map_err(|e| diverged(episode, e))?;
            }
            state = out.next;
            if out.done {
                break;
            }
        }
        if config.replay_cadence == ReplayCadence::PerEpisode {
            agent.replay().map_err(|e| diverged(episode, e))?;
        }
        scores.push(env.episode_score());
    }
    Ok((scores, agent))
}

/// Run the full monitoring loop for every subject and configured vital.
pub fn run_training(subjects: &[SubjectStream], config: &RunConfig) -> Result<TrainingOutput> {
    config.validate()?;
    if subjects.is_empty() {
        return Err(Error::Config("no subjects to train on".into()));
    }
    let started = Instant::now();
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for subject in subjects {
        let mut streams = Vec::with_capacity(config.vitals.len());
        for vital in &config.vitals {
            let series = subject.series(*vital).ok_or_else(|| {
                Error::Config(format!(
                    "subject {} has no {vital} stream",
                    subject.subject_id
                ))
            })?;
            streams.push((*vital, series));
        }
        let env = MonitoringEnv::new(
            &streams,
            &config.episode_config(),
            canonical_table(),
            config.reward_matrix,
        )?;
        let results: Vec<Result<(VitalKind, Vec<i64>, DqnAgent)>> = env
            .into_agents()
            .into_par_iter()
            .map(|mut sub| {
                let (scores, agent) = train_agent(&mut sub, &subject.subject_id, config)?;
                Ok((sub.vital(), scores, agent))
            })
            .collect();
        for result in results {
            let (vital, scores, agent) = result?;
            rows.extend(scores.into_iter().enumerate().map(|(i, score)| MetricRow {
                episode: i + 1,
                agent: vital,
                subject: subject.subject_id.clone(),
                score,
            }));
            models.push(TrainedModel {
                subject: subject.subject_id.clone(),
                vital,
                schedule: agent.schedule(),
                network: agent.into_network(),
            });
        }
    }
    rows.sort_by(|a, b| {
        (a.subject.as_str(), a.agent.name(), a.episode).cmp(&(
            b.subject.as_str(),
            b.agent.name(),
            b.episode,
        ))
    });
    models.sort_by(|a, b| {
        (a.subject.as_str(), a.vital.name()).cmp(&(b.subject.as_str(), b.vital.name()))
    });
    Ok(TrainingOutput {
        metrics: RunMetrics {
            rows,
            seed: config.seed,
            wall_time: started.elapsed(),
            config: config.clone(),
        },
        models,
    })
}

/// Score one episode of `n` steps under an arbitrary policy, without learning.
///
/// The stream needs at least `n` readings; the final observation after the
/// last step repeats the last reading when the stream is exactly `n` long.
pub fn evaluate_policy<F>(
    vital: VitalKind,
    values: &[f64],
    n: usize,
    window: usize,
    rewards: RewardMatrix,
    mut policy: F,
) -> Result<i64>
where
    F: FnMut(&Observation) -> Result<ActionId>,
{
    if n == 0 {
        return Ok(0);
    }
    if values.len() < n {
        return Err(Error::Config(format!(
            "stream has {} readings, evaluation needs {n}",
            values.len()
        )));
    }
    let mut padded;
    let stream = if values.len() == n {
        padded = values.to_vec();
        padded.push(values[n - 1]);
        &padded[..]
    } else {
        values
    };
    let config = EpisodeConfig {
        monitor_length: n,
        episodes: 1,
        gamma: 0.0,
        seed: 0,
        window,
    };
    let env = MonitoringEnv::new(&[(vital, stream)], &config, canonical_table(), rewards)?;
    let mut sub = env.into_agents().pop().expect("one stream");
    let mut obs = sub.reset();
    loop {
        let out = sub.step(policy(&obs)?)?;
        if out.done {
            break;
        }
        obs = out.next;
    }
    Ok(sub.episode_score())
}

/// Greedy (epsilon = 0) episode score of a trained network on a stream.
pub fn evaluate_greedy(
    net: &QNetwork,
    model_vital: VitalKind,
    stream_vital: VitalKind,
    values: &[f64],
    n: usize,
    rewards: RewardMatrix,
) -> Result<i64> {
    if model_vital != stream_vital {
        return Err(Error::Config(format!(
            "model monitors {model_vital} but the stream is {stream_vital}"
        )));
    }
    evaluate_policy(stream_vital, values, n, net.input_dim(), rewards, |obs| {
        Ok(ActionId::new(argmax(&net.forward(&obs.features)?) as u8).expect("five outputs"))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    Gamma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Gamma => "gamma",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "gamma" => Ok(SweepParam::Gamma),
            other => Err(Error::Config(format!(
                "unsupported sweep parameter {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        for &v in &self.values {
            match self.param {
                SweepParam::Alpha if !(v > 0.0 && v.is_finite()) => {
                    return Err(Error::Config(format!("alpha {v} must be positive")))
                }
                SweepParam::Gamma => check_gamma(v)?,
                _ => {}
            }
        }
        Ok(())
    }

    fn apply(&self, base: &RunConfig, value: f64) -> RunConfig {
        let mut cfg = base.clone();
        match self.param {
            SweepParam::Alpha => cfg.alpha = value,
            SweepParam::Gamma => cfg.gamma = value,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub episode: usize,
    pub agent: VitalKind,
    pub score: i64,
}

#[derive(Debug, Clone)]
pub struct SweepMetrics {
    pub param: SweepParam,
    /// Grid order, then agent, then episode.
    pub rows: Vec<SweepRow>,
    /// One entry per grid value, in grid order.
    pub runs: Vec<RunMetrics>,
}

impl SweepMetrics {
    pub fn final_scores(&self, agent: VitalKind) -> Vec<(f64, i64)> {
        self.runs
            .iter()
            .map(|run| {
                let value = match self.param {
                    SweepParam::Alpha => run.config.alpha,
                    SweepParam::Gamma => run.config.gamma,
                };
                let last = run
                    .rows
                    .iter()
                    .filter(|r| r.agent == agent)
                    .max_by_key(|r| r.episode)
                    .map_or(0, |r| r.score);
                (value, last)
            })
            .collect()
    }
}

/// One training run per grid value, everything else (seed included) fixed.
/// Sweeps cover a single subject since the sweep table has no subject column.
pub fn run_sweep(
    subjects: &[SubjectStream],
    base: &RunConfig,
    grid: &SweepGrid,
) -> Result<SweepMetrics> {
    grid.validate()?;
    if subjects.len() != 1 {
        return Err(Error::Config(format!(
            "a sweep runs on exactly one subject, got {}",
            subjects.len()
        )));
    }
    let runs: Vec<Result<RunMetrics>> = grid
        .values
        .par_iter()
        .map(|&value| {
            run_training(subjects, &grid.apply(base, value))
                .map(|out| out.metrics)
                .map_err(|e| Error::SweepPoint {
                    param: grid.param.name(),
                    value,
                    source: Box::new(e),
                })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = grid
        .values
        .iter()
        .zip(&runs)
        .flat_map(|(&value, run)| {
            run.rows.iter().map(move |r| SweepRow {
                param: grid.param,
                value,
                episode: r.episode,
                agent: r.agent,
                score: r.score,
            })
        })
        .collect();
    Ok(SweepMetrics {
        param: grid.param,
        rows,
        runs,
    })
}

pub const METRICS_HEADER: &str = "episode,agent,subject,score";
pub const SWEEP_HEADER: &str = "param,value,episode,agent,score";

pub fn write_metrics_csv<W: Write>(metrics: &RunMetrics, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in &metrics.rows {
        writeln!(out, "{},{},{},{}", r.episode, r.agent, r.subject, r.score)?;
    }
    out.flush()
}

pub fn write_sweep_csv<W: Write>(sweep: &SweepMetrics, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in &sweep.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.param, r.value, r.episode, r.agent, r.score
        )?;
    }
    out.flush()
}

fn expect_header(text: &str, header: &str) -> Result<()> {
    match text.lines().next() {
        Some(h) if h.trim() == header => Ok(()),
        other => Err(Error::Parse {
            path: "header".into(),
            message: format!("expected {header:?}, found {other:?}"),
        }),
    }
}

fn row_err(row: usize, message: impl Into<String>) -> Error {
    Error::Row {
        row: row as u64 + 1,
        message: message.into(),
    }
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricRow>> {
    expect_header(text, METRICS_HEADER)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(row_err(i, "expected 4 fields"));
            }
            Ok(MetricRow {
                episode: f[0].parse().map_err(|_| row_err(i, "bad episode"))?,
                agent: f[1].parse().map_err(|_| row_err(i, "bad agent"))?,
                subject: f[2].to_string(),
                score: f[3].parse().map_err(|_| row_err(i, "bad score"))?,
            })
        })
        .collect()
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    expect_header(text, SWEEP_HEADER)?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(row_err(i, "expected 5 fields"));
            }
            Ok(SweepRow {
                param: f[0].parse().map_err(|_| row_err(i, "bad param"))?,
                value: f[1].parse().map_err(|_| row_err(i, "bad value"))?,
                episode: f[2].parse().map_err(|_| row_err(i, "bad episode"))?,
                agent: f[3].parse().map_err(|_| row_err(i, "bad agent"))?,
                score: f[4].parse().map_err(|_| row_err(i, "bad score"))?,
            })
        })
        .collect()
}

/// Where the training data came from, as recorded in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub source: String,
    pub sha256: String,
}

impl InputRecord {
    pub fn from_bytes(source: impl Into<String>, bytes: &[u8]) -> Self {
        InputRecord {
            source: source.into(),
            sha256: sha256_hex(bytes),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: &'a [InputRecord],
    outputs: ManifestOutputs,
}

#[derive(Debug, Serialize)]
struct ManifestOutputs {
    metrics: Option<String>,
    sweep: Option<String>,
    models: Vec<String>,
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: &RunConfig,
    inputs: &[InputRecord],
    outputs: ManifestOutputs,
) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        inputs,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    text.push('\n');
    write_file(&out_dir.join("manifest.json"), text.as_bytes())
}

/// Write `metrics.csv`, one model document per (subject, vital) under
/// `models/`, and `manifest.json`. Returns the model paths.
pub fn persist_training(
    out_dir: &Path,
    output: &TrainingOutput,
    inputs: &[InputRecord],
) -> Result<Vec<PathBuf>> {
    let models_dir = out_dir.join("models");
    std::fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    let mut metrics = Vec::new();
    write_metrics_csv(&output.metrics, &mut metrics).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("metrics.csv"), &metrics)?;

    let config = &output.metrics.config;
    let mut relative = Vec::new();
    let mut paths = Vec::new();
    for model in &output.models {
        let name = format!("{}__{}.json", file_safe(&model.subject), model.vital.name());
        let text = neural::save(
            &model.network,
            &ModelMeta {
                vital: model.vital,
                subject: model.subject.clone(),
                seed: config.seed,
                training: Some(config.snapshot(model.schedule)),
            },
        )?;
        let path = models_dir.join(&name);
        write_file(&path, text.as_bytes())?;
        relative.push(format!("models/{name}"));
        paths.push(path);
    }
    write_manifest(
        out_dir,
        "train",
        config,
        inputs,
        ManifestOutputs {
            metrics: Some("metrics.csv".into()),
            sweep: None,
            models: relative,
        },
    )?;
    Ok(paths)
}

/// Write `sweep.csv` and `manifest.json` for a sweep.
pub fn persist_sweep(
    out_dir: &Path,
    sweep: &SweepMetrics,
    base: &RunConfig,
    inputs: &[InputRecord],
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut bytes = Vec::new();
    write_sweep_csv(sweep, &mut bytes).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("sweep.csv"), &bytes)?;
    write_manifest(
        out_dir,
        "sweep",
        base,
        inputs,
        ManifestOutputs {
            metrics: None,
            sweep: Some("sweep.csv".into()),
            models: Vec::new(),
        },
    )
}
