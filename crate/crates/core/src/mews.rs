//! Modified Early Warning Score bands.
//!
//! Each vital owns an ordered list of half-open intervals `[lo, hi)` that
//! jointly cover the real line. The printed clinical table only lists integer
//! (or one-decimal) ranges with gaps between them; the canonical table closes
//! those gaps at the midpoint of adjacent printed edges, so every printed value
//! keeps its printed score and every finite reading gets exactly one score.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A monitored physiological signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VitalKind {
    /// beats/min
    HeartRate,
    /// breaths/min
    #[serde(rename = "resp_rate")]
    RespiratoryRate,
    /// percent
    #[serde(rename = "spo2")]
    OxygenSaturation,
    /// degrees Celsius
    Temperature,
    /// categorical, see [`SedationLevel`]
    #[serde(rename = "sedation")]
    SedationScore,
}

impl VitalKind {
    pub const ALL: [VitalKind; 5] = [
        VitalKind::HeartRate,
        VitalKind::RespiratoryRate,
        VitalKind::OxygenSaturation,
        VitalKind::Temperature,
        VitalKind::SedationScore,
    ];

    /// Column / flag spelling, e.g. `heart_rate`.
    pub fn name(self) -> &'static str {
        match self {
            VitalKind::HeartRate => "heart_rate",
            VitalKind::RespiratoryRate => "resp_rate",
            VitalKind::OxygenSaturation => "spo2",
            VitalKind::Temperature => "temperature",
            VitalKind::SedationScore => "sedation",
        }
    }

    /// Physiological plausible envelope `(lo, hi)` used for validation and
    /// min-max normalization. Sedation uses its category code range.
    pub fn plausible_range(self) -> (f64, f64) {
        match self {
            VitalKind::HeartRate => (20.0, 240.0),
            VitalKind::RespiratoryRate => (0.0, 60.0),
            VitalKind::OxygenSaturation => (50.0, 100.0),
            VitalKind::Temperature => (30.0, 43.0),
            VitalKind::SedationScore => (0.0, 3.0),
        }
    }

    pub fn is_categorical(self) -> bool {
        self == VitalKind::SedationScore
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for VitalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VitalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heart_rate" | "hr" => Ok(VitalKind::HeartRate),
            "resp_rate" | "respiratory_rate" | "rr" => Ok(VitalKind::RespiratoryRate),
            "spo2" | "oxygen_saturation" => Ok(VitalKind::OxygenSaturation),
            "temperature" | "temp" => Ok(VitalKind::Temperature),
            "sedation" | "sedation_score" => Ok(VitalKind::SedationScore),
            other => Err(Error::Config(format!("unknown vital {other:?}"))),
        }
    }
}

/// Sedation categories, in increasing severity. The numeric code is the
/// discriminant and is what streams carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SedationLevel {
    Awake = 0,
    Mild = 1,
    Moderate = 2,
    Severe = 3,
}

impl SedationLevel {
    pub const ALL: [SedationLevel; 4] = [
        SedationLevel::Awake,
        SedationLevel::Mild,
        SedationLevel::Moderate,
        SedationLevel::Severe,
    ];

    pub fn code(self) -> f64 {
        self as u8 as f64
    }

    pub fn from_code(code: f64) -> Option<Self> {
        if code.fract() != 0.0 {
            return None;
        }
        match code as i64 {
            0 => Some(SedationLevel::Awake),
            1 => Some(SedationLevel::Mild),
            2 => Some(SedationLevel::Moderate),
            3 => Some(SedationLevel::Severe),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SedationLevel::Awake => "awake",
            SedationLevel::Mild => "mild",
            SedationLevel::Moderate => "moderate",
            SedationLevel::Severe => "severe",
        }
    }
}

impl FromStr for SedationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SedationLevel::ALL
            .into_iter()
            .find(|l| l.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidCategory {
                vital: VitalKind::SedationScore.name(),
                label: s.to_string(),
            })
    }
}

/// A MEWS score in `0..=4`; 4 calls the Medical Emergency Team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct MewsScore(u8);

impl MewsScore {
    pub const MAX: u8 = 4;

    pub fn new(score: u8) -> Result<Self> {
        if score <= Self::MAX {
            Ok(MewsScore(score))
        } else {
            Err(Error::Domain(format!("MEWS score {score} outside 0..=4")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = MewsScore> {
        (0..=Self::MAX).map(MewsScore)
    }
}

impl TryFrom<u8> for MewsScore {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        MewsScore::new(v)
    }
}

impl From<MewsScore> for u8 {
    fn from(s: MewsScore) -> u8 {
        s.0
    }
}

impl fmt::Display for MewsScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The MET tier an alert targets. Action `k` means "alert MET-k".
pub type AlertLevel = u8;

/// Alert target for a score: score `s` maps to MET-`s`.
pub fn met_for_score(score: MewsScore) -> AlertLevel {
    score.value()
}

/// One half-open interval `[lo, hi)` of a vital's band table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub score: MewsScore,
}

impl Band {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.lo && value < self.hi
    }

    /// The band clipped to `(lo, hi)`, for code paths that need a finite width.
    pub fn clipped(&self, range: (f64, f64)) -> (f64, f64) {
        (self.lo.max(range.0), self.hi.min(range.1))
    }
}

const fn band(lo: f64, hi: f64, score: u8) -> Band {
    Band {
        lo,
        hi,
        score: MewsScore(score),
    }
}

const NEG: f64 = f64::NEG_INFINITY;
const POS: f64 = f64::INFINITY;

const HEART_RATE: [Band; 7] = [
    band(NEG, 39.5, 4),
    band(39.5, 49.5, 1),
    band(49.5, 99.5, 0),
    band(99.5, 109.5, 1),
    band(109.5, 129.5, 2),
    band(129.5, 139.5, 3),
    band(139.5, POS, 4),
];

const RESPIRATORY_RATE: [Band; 7] = [
    band(NEG, 4.5, 4),
    band(4.5, 8.5, 3),
    band(8.5, 20.5, 0),
    band(20.5, 24.5, 1),
    band(24.5, 30.5, 2),
    band(30.5, 35.5, 3),
    band(35.5, POS, 4),
];

const OXYGEN_SATURATION: [Band; 5] = [
    band(NEG, 84.5, 4),
    band(84.5, 89.5, 3),
    band(89.5, 92.5, 2),
    band(92.5, 94.5, 1),
    band(94.5, POS, 0),
];

const TEMPERATURE: [Band; 6] = [
    band(NEG, 34.05, 3),
    band(34.05, 35.05, 2),
    band(35.05, 36.05, 1),
    band(36.05, 37.95, 0),
    band(37.95, 38.55, 1),
    band(38.55, POS, 2),
];

const SEDATION: [MewsScore; 4] = [MewsScore(0), MewsScore(2), MewsScore(3), MewsScore(4)];

/// Per-vital band tables plus the sedation category map. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MewsBandTable {
    numeric: [Vec<Band>; 4],
    sedation: [MewsScore; 4],
}

impl MewsBandTable {
    pub fn canonical() -> Self {
        MewsBandTable {
            numeric: [
                HEART_RATE.to_vec(),
                RESPIRATORY_RATE.to_vec(),
                OXYGEN_SATURATION.to_vec(),
                TEMPERATURE.to_vec(),
            ],
            sedation: SEDATION,
        }
    }

    /// Build a table from explicit bands, checking that each vital's bands are
    /// sorted, contiguous and cover the whole real line.
    pub fn from_bands(numeric: [Vec<Band>; 4], sedation: [MewsScore; 4]) -> Result<Self> {
        for (bands, vital) in numeric.iter().zip(VitalKind::ALL) {
            check_cover(vital, bands)?;
        }
        Ok(MewsBandTable { numeric, sedation })
    }

    /// Bands for a numeric vital; empty for sedation.
    pub fn bands(&self, vital: VitalKind) -> &[Band] {
        match vital {
            VitalKind::SedationScore => &[],
            v => &self.numeric[v.index()],
        }
    }

    pub fn sedation_score(&self, level: SedationLevel) -> MewsScore {
        self.sedation[level as usize]
    }

    /// Score of the band containing `value`. Sedation readings are category codes 0..=3.
    pub fn classify(&self, vital: VitalKind, value: f64) -> Result<MewsScore> {
        if !value.is_finite() {
            return Err(Error::InvalidMeasurement {
                vital: vital.name(),
                value,
            });
        }
        if vital.is_categorical() {
            let level = SedationLevel::from_code(value).ok_or_else(|| Error::InvalidCategory {
                vital: vital.name(),
                label: value.to_string(),
            })?;
            return Ok(self.sedation_score(level));
        }
        let bands = self.bands(vital);
        // bands are sorted and contiguous: the containing band is the last one with lo <= value
        let idx = bands.partition_point(|b| b.lo <= value);
        Ok(bands[idx - 1].score)
    }

    /// Classify a textual reading: a number, or a sedation label.
    pub fn classify_label(&self, vital: VitalKind, reading: &str) -> Result<MewsScore> {
        if vital.is_categorical() {
            let level: SedationLevel = reading.parse()?;
            return Ok(self.sedation_score(level));
        }
        let value: f64 = reading.trim().parse().map_err(|_| Error::Parse {
            path: vital.name().to_string(),
            message: format!("not a number: {reading:?}"),
        })?;
        self.classify(vital, value)
    }

    pub fn max_attainable_score(&self, vital: VitalKind) -> MewsScore {
        match vital {
            VitalKind::SedationScore => *self.sedation.iter().max().expect("non-empty"),
            v => self.numeric[v.index()]
                .iter()
                .map(|b| b.score)
                .max()
                .expect("non-empty band table"),
        }
    }

    /// Whether some reading of `vital` maps to `score`.
    pub fn attains(&self, vital: VitalKind, score: MewsScore) -> bool {
        match vital {
            VitalKind::SedationScore => self.sedation.contains(&score),
            v => self.numeric[v.index()].iter().any(|b| b.score == score),
        }
    }
}

fn check_cover(vital: VitalKind, bands: &[Band]) -> Result<()> {
    let first = bands
        .first()
        .ok_or_else(|| Error::Config(format!("{vital}: empty band table")))?;
    if first.lo != f64::NEG_INFINITY {
        return Err(Error::Config(format!(
            "{vital}: first band must start at -inf"
        )));
    }
    if bands.last().map(|b| b.hi) != Some(f64::INFINITY) {
        return Err(Error::Config(format!(
            "{vital}: last band must end at +inf"
        )));
    }
    for pair in bands.windows(2) {
        if pair[0].hi != pair[1].lo {
            return Err(Error::Config(format!(
                "{vital}: bands [{}, {}) and [{}, {}) are not contiguous",
                pair[0].lo, pair[0].hi, pair[1].lo, pair[1].hi
            )));
        }
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let inverted = bands.iter().any(|b| !(b.lo < b.hi));
    if inverted {
        return Err(Error::Config(format!("{vital}: empty or inverted band")));
    }
    Ok(())
}

pub fn canonical_table() -> &'static MewsBandTable {
    static TABLE: OnceLock<MewsBandTable> = OnceLock::new();
    TABLE.get_or_init(MewsBandTable::canonical)
}

/// Classify against the canonical table.
pub fn classify(vital: VitalKind, value: f64) -> Result<MewsScore> {
    canonical_table().classify(vital, value)
}

pub fn max_attainable_score(vital: VitalKind) -> MewsScore {
    canonical_table().max_attainable_score(vital)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: u8) -> MewsScore {
        MewsScore::new(v).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(classify(VitalKind::HeartRate, 139.0).unwrap(), s(3));
        assert_eq!(classify(VitalKind::HeartRate, 75.0).unwrap(), s(0));
        assert_eq!(classify(VitalKind::Temperature, 36.5).unwrap(), s(0));
        assert_eq!(classify(VitalKind::RespiratoryRate, 36.0).unwrap(), s(4));
        assert_eq!(classify(VitalKind::OxygenSaturation, 95.0).unwrap(), s(0));
    }

    #[test]
    fn met_is_identity() {
        for score in MewsScore::all() {
            assert_eq!(met_for_score(score), score.value());
        }
    }

    #[test]
    fn max_attainable() {
        assert_eq!(max_attainable_score(VitalKind::HeartRate), s(4));
        assert_eq!(max_attainable_score(VitalKind::Temperature), s(3));
        assert_eq!(max_attainable_score(VitalKind::OxygenSaturation), s(4));
        assert_eq!(max_attainable_score(VitalKind::SedationScore), s(4));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            classify(VitalKind::HeartRate, f64::NAN),
            Err(Error::InvalidMeasurement { .. })
        ));
        assert!(matches!(
            classify(VitalKind::Temperature, f64::INFINITY),
            Err(Error::InvalidMeasurement { .. })
        ));
    }

    #[test]
    fn sedation_labels_and_codes() {
        let t = canonical_table();
        assert_eq!(
            t.classify_label(VitalKind::SedationScore, "Awake").unwrap(),
            s(0)
        );
        assert_eq!(
            t.classify_label(VitalKind::SedationScore, "mild").unwrap(),
            s(2)
        );
        assert_eq!(t.classify(VitalKind::SedationScore, 3.0).unwrap(), s(4));
        assert!(matches!(
            t.classify_label(VitalKind::SedationScore, "drowsy"),
            Err(Error::InvalidCategory { .. })
        ));
        assert!(matches!(
            t.classify(VitalKind::SedationScore, 1.5),
            Err(Error::InvalidCategory { .. })
        ));
    }

    #[test]
    fn canonical_bands_are_contiguous() {
        let t = canonical_table();
        for vital in VitalKind::ALL.into_iter().filter(|v| !v.is_categorical()) {
            check_cover(vital, t.bands(vital)).unwrap();
        }
    }

    #[test]
    fn gap_in_custom_table_rejected() {
        let mut numeric = MewsBandTable::canonical().numeric.clone();
        numeric[0][1].hi = 49.0;
        assert!(MewsBandTable::from_bands(numeric, SEDATION).is_err());
    }

    #[test]
    fn half_open_boundaries() {
        assert_eq!(classify(VitalKind::HeartRate, 139.5).unwrap(), s(4));
        assert_eq!(classify(VitalKind::HeartRate, 139.499).unwrap(), s(3));
        assert_eq!(classify(VitalKind::Temperature, 37.95).unwrap(), s(1));
        assert_eq!(classify(VitalKind::Temperature, -1e300).unwrap(), s(3));
    }

    #[test]
    fn vital_names_round_trip() {
        for v in VitalKind::ALL {
            assert_eq!(v.name().parse::<VitalKind>().unwrap(), v);
        }
        assert!("blood_pressure".parse::<VitalKind>().is_err());
    }
}
