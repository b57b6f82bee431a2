//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::agents::{ExplorationSchedule, ReplayCadence};
use crate::data::{
    self, DwellProfile, LoadOptions, ProfileSpec, SubjectStream, SynthSpec, TempUnit,
};
use crate::error::{Error, Result};
use crate::harness::{self, InputRecord, RunConfig, SweepGrid, SweepParam};
use crate::mews::{canonical_table, met_for_score, VitalKind};
use crate::neural;
use crate::reward::RewardMatrix;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "vitalrl",
    version,
    about = "Vital-sign alerting with deep Q-learning agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a single reading into its early warning score.
    Score(ScoreArgs),
    /// Write a synthetic subject CSV.
    Simulate(SimulateArgs),
    /// Train one agent per vital and write metrics, models and a manifest.
    Train(TrainArgs),
    /// Repeat training over a grid of alpha or gamma values.
    Sweep(SweepArgs),
    /// Greedy evaluation of a saved model.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub vital: VitalKind,
    /// Numeric reading, or a sedation label.
    #[arg(long, allow_hyphen_values = true)]
    pub value: String,
    #[arg(long, default_value = "c")]
    pub temp_unit: TempUnit,
}

/// A synthesis profile, optionally for one vital only: `uniform`,
/// `band:K`, `profile:f0,f1,f2,f3,f4`, or `<vital>=<one of those>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileArg {
    pub vital: Option<VitalKind>,
    pub spec: ProfileSpec,
}

impl FromStr for ProfileArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((vital, spec)) => Ok(ProfileArg {
                vital: Some(vital.trim().parse()?),
                spec: spec.parse()?,
            }),
            None => Ok(ProfileArg {
                vital: None,
                spec: s.parse()?,
            }),
        }
    }
}

fn resolve_profiles(
    args: &[ProfileArg],
    vitals: &[VitalKind],
) -> Result<Vec<(VitalKind, DwellProfile)>> {
    vitals
        .iter()
        .map(|&vital| {
            let spec = args
                .iter()
                .rev()
                .find(|a| a.vital == Some(vital))
                .or_else(|| args.iter().rev().find(|a| a.vital.is_none()))
                .map_or(ProfileSpec::Uniform, |a| a.spec);
            Ok((vital, spec.resolve(vital, canonical_table())?))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Repeatable; later flags win. Defaults to `uniform`.
    #[arg(long = "profile")]
    pub profiles: Vec<ProfileArg>,
    /// Extra vitals on top of heart_rate, resp_rate and temperature.
    #[arg(long, value_delimiter = ',')]
    pub vitals: Vec<VitalKind>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub length: u64,
    #[arg(long, env = "VITALRL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value = "synthetic")]
    pub subject: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Subject CSV in the ingestion schema.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    pub data: Option<PathBuf>,
    /// Generate the stream instead; repeatable, same syntax as `simulate --profile`.
    #[arg(long)]
    pub synth: Vec<ProfileArg>,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Subject id for synthetic streams, or the subject to pick from `--data`.
    #[arg(long)]
    pub subject: Option<String>,
    #[arg(long, default_value = "c")]
    pub temp_unit: TempUnit,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "heart_rate,resp_rate,temperature"
    )]
    pub vitals: Vec<VitalKind>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 500)]
    pub length: usize,
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.95)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.995)]
    pub epsilon_decay: f64,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon_min: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 24)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2000)]
    pub memory: usize,
    #[arg(long, env = "VITALRL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Replay after every step instead of once per episode.
    #[arg(long)]
    pub replay_every_step: bool,
    #[arg(long)]
    pub reward_matrix: Option<PathBuf>,
    /// Number of recent readings fed to the network.
    #[arg(long, default_value_t = 1)]
    pub window: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub param: SweepParam,
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Stream vital to evaluate on; defaults to the model's vital.
    #[arg(long)]
    pub vital: Option<VitalKind>,
    #[arg(long, default_value_t = 500)]
    pub length: usize,
    #[arg(long, env = "VITALRL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub reward_matrix: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Exit code for an engine error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let mut text = e.render().to_string();
            if code == EXIT_USAGE && !text.contains("Usage:") {
                text.push('\n');
                text.push_str(&usage_for(&args));
                text.push('\n');
            }
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Score(a) => cmd_score(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Train(a) => cmd_train(&a.flags, stdout, stderr),
        Command::Sweep(a) => cmd_sweep(&a, stdout, stderr),
        Command::Evaluate(a) => cmd_evaluate(&a, stdout, stderr),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Engine(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Usage line of the subcommand named in `args`, or of the whole program.
fn usage_for(args: &[OsString]) -> String {
    let mut cmd = Cli::command();
    let name = args
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find(|a| cmd.find_subcommand(a).is_some())
        .map(str::to_string);
    match name.and_then(|n| cmd.find_subcommand_mut(&n).map(|c| c.render_usage())) {
        Some(usage) => usage.to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn out_err(e: std::io::Error) -> Failure {
    Failure::Engine(Error::io("<stdout>", e))
}

fn cmd_score(a: &ScoreArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let score = if a.vital.is_categorical() {
        canonical_table().classify_label(a.vital, &a.value)?
    } else {
        let raw: f64 = a
            .value
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| {
                Failure::Usage(format!("--value {:?} is not a finite number", a.value))
            })?;
        let value = if a.vital == VitalKind::Temperature {
            a.temp_unit.to_celsius(raw)
        } else {
            raw
        };
        canonical_table().classify(a.vital, value)?
    };
    writeln!(stdout, "score={} met={}", score, met_for_score(score)).map_err(out_err)
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut vitals = vec![
        VitalKind::HeartRate,
        VitalKind::RespiratoryRate,
        VitalKind::Temperature,
    ];
    for v in &a.vitals {
        if !vitals.contains(v) {
            vitals.push(*v);
        }
    }
    let stream = data::synthesize(&SynthSpec {
        subject_id: a.subject.clone(),
        length: a.length as usize,
        profiles: resolve_profiles(&a.profiles, &vitals)?,
        noise_std: a.noise,
        seed: a.seed,
    })?;
    let mut bytes = Vec::new();
    data::write_csv(std::slice::from_ref(&stream), &mut bytes)?;
    std::fs::write(&a.out, &bytes).map_err(|e| Error::io(&a.out, e))?;
    writeln!(stdout, "wrote {} rows to {}", a.length, a.out.display()).map_err(out_err)
}

/// Streams plus a manifest record of where they came from.
fn load_source(
    src: &SourceArgs,
    vitals: &[VitalKind],
    length: usize,
    seed: u64,
    stderr: &mut dyn Write,
) -> CliResult<(Vec<SubjectStream>, InputRecord)> {
    if let Some(path) = &src.data {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ingest = data::load_csv(
            path,
            &LoadOptions {
                temp_unit: src.temp_unit,
                subject: None,
            },
        )?;
        for w in &ingest.warnings {
            let _ = writeln!(stderr, "warning: {w}");
        }
        let mut subjects = ingest.subjects;
        if let Some(id) = &src.subject {
            subjects.retain(|s| &s.subject_id == id);
            if subjects.is_empty() {
                return Err(Error::Config(format!(
                    "subject {id:?} not found in {}",
                    path.display()
                ))
                .into());
            }
        }
        let record = InputRecord::from_bytes(path.display().to_string(), &bytes);
        return Ok((subjects, record));
    }
    // the schema columns are always generated so the stream is a loadable file
    let mut profiles = resolve_profiles(&src.synth, vitals)?;
    for extra in data::REQUIRED_VITALS
        .into_iter()
        .filter(|v| !vitals.contains(v))
    {
        let spec = src
            .synth
            .iter()
            .rev()
            .find(|a| a.vital == Some(extra))
            .map_or(ProfileSpec::Uniform, |a| a.spec);
        profiles.push((extra, spec.resolve(extra, canonical_table())?));
    }
    let stream = data::synthesize(&SynthSpec {
        subject_id: src.subject.clone().unwrap_or_else(|| "synthetic".into()),
        length: length.max(1),
        profiles,
        noise_std: src.noise,
        seed,
    })?;
    let mut bytes = Vec::new();
    data::write_csv(std::slice::from_ref(&stream), &mut bytes)?;
    let label: Vec<String> = src.synth.iter().map(describe_profile).collect();
    let record = InputRecord::from_bytes(format!("synth:{}", label.join(" ")), &bytes);
    Ok((vec![stream], record))
}

fn describe_profile(p: &ProfileArg) -> String {
    let spec = match p.spec {
        ProfileSpec::Uniform => "uniform".to_string(),
        ProfileSpec::Band(s) => format!("band:{s}"),
        ProfileSpec::Fractions(DwellProfile(f)) => {
            let parts: Vec<String> = f.iter().map(|x| x.to_string()).collect();
            format!("profile:{}", parts.join(","))
        }
    };
    match p.vital {
        Some(v) => format!("{v}={spec}"),
        None => spec,
    }
}

fn load_rewards(path: Option<&Path>) -> Result<RewardMatrix> {
    path.map_or(Ok(RewardMatrix::default()), RewardMatrix::load_csv)
}

fn run_config(f: &TrainFlags) -> Result<RunConfig> {
    let config = RunConfig {
        episodes: f.episodes,
        monitor_length: f.length,
        alpha: f.alpha,
        gamma: f.gamma,
        batch_size: f.batch_size,
        hidden: f.hidden,
        memory_capacity: f.memory,
        window: f.window,
        exploration: ExplorationSchedule {
            epsilon: f.epsilon,
            epsilon_decay: f.epsilon_decay,
            epsilon_min: f.epsilon_min,
        },
        replay_cadence: if f.replay_every_step {
            ReplayCadence::PerStep
        } else {
            ReplayCadence::PerEpisode
        },
        vitals: f.vitals.clone(),
        seed: f.seed,
        reward_matrix: load_rewards(f.reward_matrix.as_deref())?,
    };
    config.validate()?;
    Ok(config)
}

fn cmd_train(f: &TrainFlags, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let config = run_config(f)?;
    let (subjects, input) = load_source(
        &f.source,
        &config.vitals,
        config.monitor_length + 1,
        config.seed,
        stderr,
    )?;
    let output = harness::run_training(&subjects, &config)?;
    let models = harness::persist_training(&f.out, &output, &[input])?;
    let _ = writeln!(
        stderr,
        "elapsed {:.3}s",
        output.metrics.wall_time.as_secs_f64()
    );
    writeln!(
        stdout,
        "wrote {} metric rows and {} models to {}",
        output.metrics.rows.len(),
        models.len(),
        f.out.display()
    )
    .map_err(out_err)
}

fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let base = run_config(&a.flags)?;
    let grid = SweepGrid {
        param: a.param,
        values: a.values.clone(),
    };
    grid.validate()?;
    let (subjects, input) = load_source(
        &a.flags.source,
        &base.vitals,
        base.monitor_length + 1,
        base.seed,
        stderr,
    )?;
    let started = std::time::Instant::now();
    let sweep = harness::run_sweep(&subjects, &base, &grid)?;
    harness::persist_sweep(&a.flags.out, &sweep, &base, &[input])?;
    let _ = writeln!(stderr, "elapsed {:.3}s", started.elapsed().as_secs_f64());
    writeln!(
        stdout,
        "wrote {} sweep rows ({} runs) to {}",
        sweep.rows.len(),
        sweep.runs.len(),
        a.flags.out.display()
    )
    .map_err(out_err)
}

fn cmd_evaluate(a: &EvaluateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| Error::io(&a.model, e))?;
    let (net, meta) = neural::load(&text)?;
    let vital = a.vital.unwrap_or(meta.vital);
    let rewards = load_rewards(a.reward_matrix.as_deref())?;
    let (subjects, _) = load_source(&a.source, &[vital], a.length, a.seed, stderr)?;
    let stream = subjects
        .first()
        .ok_or_else(|| Error::Config("no subject to evaluate on".into()))?;
    let values = stream.series(vital).ok_or_else(|| {
        Error::Config(format!(
            "subject {} has no {vital} stream",
            stream.subject_id
        ))
    })?;
    let score = harness::evaluate_greedy(&net, meta.vital, vital, values, a.length, rewards)?;
    let max = i64::from(rewards.max_reward()) * a.length as i64;
    let fraction = if max > 0 {
        score as f64 / max as f64
    } else {
        0.0
    };
    writeln!(stdout, "score={score} max={max} fraction={fraction:.3}").map_err(out_err)
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["vitalrl"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn score_examples() {
        assert_eq!(
            call(&["score", "--vital", "heart_rate", "--value", "139"]).1,
            "score=3 met=3\n"
        );
        assert_eq!(
            call(&[
                "score",
                "--vital",
                "temperature",
                "--value",
                "98.6",
                "--temp-unit",
                "f"
            ])
            .1,
            "score=0 met=0\n"
        );
        assert_eq!(
            call(&["score", "--vital", "sedation", "--value", "severe"]).1,
            "score=4 met=4\n"
        );
        assert_eq!(
            call(&["score", "--vital", "heart_rate", "--value", "abc"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            call(&["score", "--vital", "pulse_pressure", "--value", "1"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            call(&["score", "--vital", "heart_rate", "--value", "NaN"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            call(&["score", "--vital", "heart_rate", "--value", "-5"]).1,
            "score=4 met=4\n"
        );
        assert_eq!(
            call(&["score", "--vital", "sedation", "--value", "drowsy"]).0,
            EXIT_DATA
        );
    }

    #[test]
    fn help_and_bad_flags() {
        assert_eq!(call(&["--help"]).0, EXIT_OK);
        assert_eq!(call(&["train", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn profile_args() {
        let p: ProfileArg = "temperature=band:1".parse().unwrap();
        assert_eq!(p.vital, Some(VitalKind::Temperature));
        let p: ProfileArg = "profile:0.2,0.2,0.2,0.2,0.2".parse().unwrap();
        assert_eq!(describe_profile(&p), "profile:0.2,0.2,0.2,0.2,0.2");
        let resolved = resolve_profiles(
            &[
                "band:2".parse().unwrap(),
                "heart_rate=band:4".parse().unwrap(),
            ],
            &[VitalKind::HeartRate, VitalKind::Temperature],
        )
        .unwrap();
        assert_eq!(resolved[0].1 .0, [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(resolved[1].1 .0, [0.0, 0.0, 1.0, 0.0, 0.0]);
    }
}
