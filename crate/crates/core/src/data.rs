//! Vital-sign streams: CSV ingestion, CSV export, normalization, and a
//! synthetic generator with exact per-band dwell schedules.
//!
//! CSV schema (comma-separated, UTF-8, lower-snake-case header):
//!
//! ```text
//! [subject,]timestamp,heart_rate,resp_rate,temperature[,spo2][,sedation]
//! ```
//!
//! Rows are assumed pre-aligned; the step cadence is row order. Empty cells
//! repeat the subject's last valid value for that column.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mews::{canonical_table, MewsBandTable, MewsScore, SedationLevel, VitalKind};
use crate::seeding::substream;

/// Min-max normalization over the vital's plausible range, clamped to `[0, 1]`.
pub fn normalize(vital: VitalKind, raw_value: f64) -> f64 {
    let (lo, hi) = vital.plausible_range();
    ((raw_value - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Columns in file order.
pub const COLUMN_ORDER: [VitalKind; 5] = [
    VitalKind::HeartRate,
    VitalKind::RespiratoryRate,
    VitalKind::Temperature,
    VitalKind::OxygenSaturation,
    VitalKind::SedationScore,
];

pub const REQUIRED_VITALS: [VitalKind; 3] = [
    VitalKind::HeartRate,
    VitalKind::RespiratoryRate,
    VitalKind::Temperature,
];

/// Aligned per-subject series. Sedation values are category codes (0..=3).
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectStream {
    pub subject_id: String,
    pub timestamps: Vec<f64>,
    pub vitals: BTreeMap<VitalKind, Vec<f64>>,
}

impl SubjectStream {
    pub fn sample_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn series(&self, vital: VitalKind) -> Option<&[f64]> {
        self.vitals.get(&vital).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TempUnit {
    #[default]
    Celsius,
    Fahrenheit,
}

impl TempUnit {
    pub fn to_celsius(self, value: f64) -> f64 {
        match self {
            TempUnit::Celsius => value,
            TempUnit::Fahrenheit => (value - 32.0) * 5.0 / 9.0,
        }
    }
}

impl FromStr for TempUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c" | "celsius" => Ok(TempUnit::Celsius),
            "f" | "fahrenheit" => Ok(TempUnit::Fahrenheit),
            other => Err(Error::Config(format!("unknown temperature unit {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub temp_unit: TempUnit,
    /// Subject id used when the file has no `subject` column; defaults to the file stem.
    pub subject: Option<String>,
}

/// Loaded subjects plus non-fatal findings (out-of-range readings, suspicious units).
#[derive(Debug, Clone, Default)]
pub struct Ingest {
    pub subjects: Vec<SubjectStream>,
    pub warnings: Vec<String>,
}

enum Column {
    Subject,
    Timestamp,
    Vital(VitalKind),
    Ignored,
}

fn parse_column(name: &str) -> Column {
    match name {
        "subject" => Column::Subject,
        "timestamp" => Column::Timestamp,
        other => COLUMN_ORDER
            .into_iter()
            .find(|v| v.name() == other)
            .map_or(Column::Ignored, Column::Vital),
    }
}

struct Builder {
    stream: SubjectStream,
    last: BTreeMap<VitalKind, f64>,
}

pub fn load_csv(path: &Path, options: &LoadOptions) -> Result<Ingest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let default_subject = options.subject.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "subject".into())
    });
    read_csv(file, &default_subject, options.temp_unit)
}

/// Parse CSV text from any reader.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    default_subject: &str,
    temp_unit: TempUnit,
) -> Result<Ingest> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Row {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let columns: Vec<Column> = headers.iter().map(parse_column).collect();
    let mut warnings = Vec::new();
    for (name, col) in headers.iter().zip(&columns) {
        if matches!(col, Column::Ignored) {
            warnings.push(format!("ignoring unknown column {name:?}"));
        }
    }

    let present: Vec<VitalKind> = columns
        .iter()
        .filter_map(|c| match c {
            Column::Vital(v) => Some(*v),
            _ => None,
        })
        .collect();
    let mut missing: Vec<String> = Vec::new();
    if !columns.iter().any(|c| matches!(c, Column::Timestamp)) {
        missing.push("timestamp".into());
    }
    for v in REQUIRED_VITALS {
        if !present.contains(&v) {
            missing.push(v.name().into());
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema { missing });
    }

    let mut order: Vec<String> = Vec::new();
    let mut builders: BTreeMap<String, Builder> = BTreeMap::new();

    for record in rdr.records() {
        let record = record.map_err(|e| Error::Row {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let subject = columns
            .iter()
            .zip(record.iter())
            .find(|(c, _)| matches!(c, Column::Subject))
            .map(|(_, v)| v.to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| default_subject.to_string());
        if !builders.contains_key(&subject) {
            order.push(subject.clone());
            builders.insert(
                subject.clone(),
                Builder {
                    stream: SubjectStream {
                        subject_id: subject.clone(),
                        timestamps: Vec::new(),
                        vitals: present.iter().map(|v| (*v, Vec::new())).collect(),
                    },
                    last: BTreeMap::new(),
                },
            );
        }
        let b = builders.get_mut(&subject).expect("inserted above");

        for (col, cell) in columns.iter().zip(record.iter()) {
            match col {
                Column::Timestamp => {
                    let ts: f64 = cell.parse().map_err(|_| Error::Row {
                        row,
                        message: format!("timestamp {cell:?} is not a number"),
                    })?;
                    if !ts.is_finite() {
                        return Err(Error::Row {
                            row,
                            message: format!("timestamp {cell:?} is not finite"),
                        });
                    }
                    if let Some(&prev) = b.stream.timestamps.last() {
                        if ts <= prev {
                            return Err(Error::Row {
                                row,
                                message: format!(
                                    "timestamp {ts} does not increase (previous {prev})"
                                ),
                            });
                        }
                    }
                    b.stream.timestamps.push(ts);
                }
                Column::Vital(vital) => {
                    let value = if cell.is_empty() {
                        *b.last.get(vital).ok_or_else(|| Error::UnrecoverableGap {
                            column: vital.name().into(),
                            subject: subject.clone(),
                        })?
                    } else {
                        let v = parse_cell(*vital, cell)
                            .map_err(|message| Error::Row { row, message })?;
                        if *vital == VitalKind::Temperature {
                            temp_unit.to_celsius(v)
                        } else {
                            v
                        }
                    };
                    b.last.insert(*vital, value);
                    b.stream
                        .vitals
                        .get_mut(vital)
                        .expect("present column")
                        .push(value);
                }
                Column::Subject | Column::Ignored => {}
            }
        }
    }

    let subjects: Vec<SubjectStream> = order
        .into_iter()
        .map(|s| builders.remove(&s).expect("known subject").stream)
        .collect();
    for s in &subjects {
        range_warnings(s, temp_unit, &mut warnings);
    }
    Ok(Ingest { subjects, warnings })
}

fn parse_cell(vital: VitalKind, cell: &str) -> std::result::Result<f64, String> {
    if vital.is_categorical() {
        if let Ok(level) = cell.parse::<SedationLevel>() {
            return Ok(level.code());
        }
        return match cell.parse::<f64>().ok().and_then(SedationLevel::from_code) {
            Some(level) => Ok(level.code()),
            None => Err(format!("unknown sedation category {cell:?}")),
        };
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| format!("{} value {cell:?} is not a number", vital.name()))?;
    if !v.is_finite() {
        return Err(format!("{} value {cell:?} is not finite", vital.name()));
    }
    Ok(v)
}

fn range_warnings(stream: &SubjectStream, unit: TempUnit, warnings: &mut Vec<String>) {
    for (vital, values) in &stream.vitals {
        let (lo, hi) = vital.plausible_range();
        let outside = values.iter().filter(|v| **v < lo || **v > hi).count();
        if outside > 0 {
            warnings.push(format!(
                "subject {}: {outside} {vital} readings outside plausible range [{lo}, {hi}]",
                stream.subject_id
            ));
        }
        if *vital == VitalKind::Temperature && unit == TempUnit::Celsius && !values.is_empty() {
            let above = values.iter().filter(|v| **v > 80.0).count();
            if above * 2 > values.len() {
                warnings.push(format!(
                    "subject {}: temperatures look like Fahrenheit; pass the fahrenheit unit flag",
                    stream.subject_id
                ));
            }
        }
    }
}

/// Write subjects in the ingestion schema. A `subject` column is added when
/// more than one subject is written.
pub fn write_csv<W: Write>(subjects: &[SubjectStream], out: W) -> Result<()> {
    let Some(first) = subjects.first() else {
        return Err(Error::Config("no subjects to write".into()));
    };
    let vitals: Vec<VitalKind> = COLUMN_ORDER
        .into_iter()
        .filter(|v| first.vitals.contains_key(v))
        .collect();
    let missing: Vec<String> = REQUIRED_VITALS
        .iter()
        .filter(|v| !vitals.contains(v))
        .map(|v| v.name().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema { missing });
    }
    let with_subject = subjects.len() > 1;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<&str> = Vec::new();
    if with_subject {
        header.push("subject");
    }
    header.push("timestamp");
    header.extend(vitals.iter().map(|v| v.name()));
    let csv_err = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for s in subjects {
        let keys: Vec<VitalKind> = COLUMN_ORDER
            .into_iter()
            .filter(|v| s.vitals.contains_key(v))
            .collect();
        if keys != vitals {
            return Err(Error::Config(format!(
                "subject {} has a different set of vitals",
                s.subject_id
            )));
        }
        for (i, ts) in s.timestamps.iter().enumerate() {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            if with_subject {
                row.push(s.subject_id.clone());
            }
            row.push(ts.to_string());
            for v in &vitals {
                let x = s.vitals[v][i];
                row.push(if v.is_categorical() {
                    SedationLevel::from_code(x)
                        .map(|l| l.label().to_string())
                        .unwrap_or_else(|| x.to_string())
                } else {
                    x.to_string()
                });
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()
        .map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    Ok(())
}

/// Fraction of time spent in each MEWS score, indexed by score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellProfile(pub [f64; 5]);

impl DwellProfile {
    pub fn new(fractions: [f64; 5]) -> Result<Self> {
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Spec("dwell fractions must be non-negative".into()));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("dwell fractions sum to {sum}, not 1")));
        }
        Ok(DwellProfile(fractions))
    }

    pub fn single(score: MewsScore) -> Self {
        let mut f = [0.0; 5];
        f[score.index()] = 1.0;
        DwellProfile(f)
    }

    /// Equal time in every score the vital can reach.
    pub fn uniform_for(vital: VitalKind, table: &MewsBandTable) -> Self {
        let reachable: Vec<MewsScore> = MewsScore::all()
            .filter(|s| table.attains(vital, *s))
            .collect();
        let mut f = [0.0; 5];
        for s in &reachable {
            f[s.index()] = 1.0 / reachable.len() as f64;
        }
        DwellProfile(f)
    }

    /// Exact per-score sample counts for `length` samples (largest remainder,
    /// ties to the lower score).
    pub fn counts(&self, length: usize) -> [usize; 5] {
        let exact: Vec<f64> = self.0.iter().map(|f| f * length as f64).collect();
        let mut counts: [usize; 5] = std::array::from_fn(|i| exact[i].floor() as usize);
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..5).filter(|&i| self.0[i] > 0.0).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(length.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }
}

/// How a profile is chosen for each vital on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileSpec {
    /// `uniform`: equal dwell over the vital's reachable scores.
    Uniform,
    /// `band:K`: always in score K.
    Band(MewsScore),
    /// `profile:f0,f1,f2,f3,f4`: explicit fractions.
    Fractions(DwellProfile),
}

impl ProfileSpec {
    pub fn resolve(&self, vital: VitalKind, table: &MewsBandTable) -> Result<DwellProfile> {
        match self {
            ProfileSpec::Uniform => Ok(DwellProfile::uniform_for(vital, table)),
            ProfileSpec::Band(s) => Ok(DwellProfile::single(*s)),
            ProfileSpec::Fractions(p) => Ok(*p),
        }
    }
}

impl FromStr for ProfileSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(ProfileSpec::Uniform);
        }
        if let Some(k) = s.strip_prefix("band:") {
            let k: u8 = k
                .parse()
                .map_err(|_| Error::Spec(format!("bad band index {k:?}")))?;
            return Ok(ProfileSpec::Band(
                MewsScore::new(k).map_err(|e| Error::Spec(e.to_string()))?,
            ));
        }
        if let Some(list) = s.strip_prefix("profile:") {
            let values: Vec<f64> = list
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Spec(format!("bad profile {list:?}")))?;
            let arr: [f64; 5] = values
                .try_into()
                .map_err(|_| Error::Spec("profile needs exactly 5 fractions".into()))?;
            return Ok(ProfileSpec::Fractions(DwellProfile::new(arr)?));
        }
        Err(Error::Spec(format!(
            "unknown synthesis spec {s:?} (expected uniform, band:K or profile:f0,f1,f2,f3,f4)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub subject_id: String,
    pub length: usize,
    pub profiles: Vec<(VitalKind, DwellProfile)>,
    pub noise_std: f64,
    pub seed: u64,
}

/// The band a score is synthesized in: the highest-lying band carrying that
/// score, i.e. the elevated side when a score exists on both sides of normal.
pub fn representative_band(
    vital: VitalKind,
    score: MewsScore,
    table: &MewsBandTable,
) -> Option<(f64, f64)> {
    table
        .bands(vital)
        .iter()
        .rfind(|b| b.score == score)
        .map(|b| b.clipped(vital.plausible_range()))
}

fn sedation_for(score: MewsScore, table: &MewsBandTable) -> Option<SedationLevel> {
    SedationLevel::ALL
        .into_iter()
        .find(|l| table.sedation_score(*l) == score)
}

/// Generate a stream whose per-score dwell matches each profile exactly.
///
/// Samples are laid out in contiguous blocks in ascending score order. Each
/// value is its band's center plus Gaussian noise, clipped back into the band.
pub fn synthesize(spec: &SynthSpec) -> Result<SubjectStream> {
    synthesize_with(spec, canonical_table())
}

pub fn synthesize_with(spec: &SynthSpec, table: &MewsBandTable) -> Result<SubjectStream> {
    if spec.length == 0 {
        return Err(Error::Spec("length must be positive".into()));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::Spec(format!(
            "noise_std {} must be >= 0",
            spec.noise_std
        )));
    }
    if spec.profiles.is_empty() {
        return Err(Error::Spec("no vitals requested".into()));
    }
    let mut vitals = BTreeMap::new();
    for (vital, profile) in &spec.profiles {
        DwellProfile::new(profile.0)?;
        if vitals.contains_key(vital) {
            return Err(Error::Spec(format!("{vital} requested twice")));
        }
        let counts = profile.counts(spec.length);
        let mut rng = substream(
            spec.seed,
            &format!("synth/{}/{}", spec.subject_id, vital.name()),
        );
        let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Spec(e.to_string()))?;
        let mut values = Vec::with_capacity(spec.length);
        for (score, &count) in MewsScore::all().zip(&counts) {
            if count == 0 {
                continue;
            }
            if vital.is_categorical() {
                let level = sedation_for(score, table)
                    .ok_or_else(|| Error::Spec(format!("{vital} never scores {score}")))?;
                values.extend(std::iter::repeat_n(level.code(), count));
                continue;
            }
            let (lo, hi) = representative_band(*vital, score, table)
                .ok_or_else(|| Error::Spec(format!("{vital} never scores {score}")))?;
            let width = hi - lo;
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            let degenerate = !(width > 0.0);
            if degenerate {
                return Err(Error::Spec(format!(
                    "{vital} score {score} band is empty within the plausible range"
                )));
            }
            if spec.noise_std > width {
                return Err(Error::Spec(format!(
                    "noise_std {} exceeds the {width} wide {vital} score-{score} band",
                    spec.noise_std
                )));
            }
            let center = lo + width / 2.0;
            let top = hi - width * 1e-9;
            for _ in 0..count {
                let v = if spec.noise_std > 0.0 {
                    (center + noise.sample(&mut rng)).clamp(lo, top)
                } else {
                    center
                };
                values.push(v);
            }
        }
        vitals.insert(*vital, values);
    }
    Ok(SubjectStream {
        subject_id: spec.subject_id.clone(),
        timestamps: (0..spec.length).map(|i| i as f64).collect(),
        vitals,
    })
}
