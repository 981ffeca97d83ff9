//! Epoch-level datasets: CSV ingest and serialization, contiguity
//! filtering, and a synthetic night generator for experiments.
//!
//! The on-disk format is one row per epoch with a `participant_id,
//! epoch_index,activity[,label]` header; epochs for each participant must be
//! consecutive from 1 and grouped in one block. Reading is strict — gaps,
//! interleaved participants, and malformed fields are reported with their
//! line numbers rather than papered over.
//!
//! The simulator produces nights with the structure the bout features are
//! built to exploit: alternating wake/sleep bouts with geometric durations,
//! gamma-distributed activity per state, brief 1-2 epoch arousals inside
//! sleep, and a quiet "inactivity lead-in" of 2-8 wake-labeled epochs before
//! each sleep bout, mirroring the fact that people lie still before they
//! fall asleep.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// One participant-night of epoch-level data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSeries<S> {
    pub participant_id: String,
    /// Epoch length in minutes.
    pub epoch_len: S,
    /// Activity counts, one per epoch, nonnegative.
    pub activity: Vec<S>,
    /// Reference sleep-wake labels (1 = wake), when available.
    pub labels: Option<Vec<S>>,
}

impl<S: Scalar> EpochSeries<S> {
    /// Builds a series after validating the field invariants.
    pub fn new(
        participant_id: impl Into<String>,
        epoch_len: S,
        activity: Vec<S>,
        labels: Option<Vec<S>>,
    ) -> Result<Self> {
        if !(epoch_len > S::zero()) || !epoch_len.is_finite() {
            return Err(Error::NonPositiveEpochLength {
                value: epoch_len.to_f64().unwrap_or(f64::NAN),
            });
        }
        for (i, &x) in activity.iter().enumerate() {
            if !x.is_finite() || x < S::zero() {
                return Err(Error::InvalidConfig(format!(
                    "activity must be finite and nonnegative, got {x} at epoch {}",
                    i + 1
                )));
            }
        }
        if let Some(y) = &labels {
            if y.len() != activity.len() {
                return Err(Error::LengthMismatch { left: activity.len(), right: y.len() });
            }
            for (i, &v) in y.iter().enumerate() {
                if !(v == S::zero() || v == S::one()) {
                    return Err(Error::NonBinaryScore {
                        index: i,
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(EpochSeries { participant_id: participant_id.into(), epoch_len, activity, labels })
    }

    /// Number of epochs.
    pub fn len(&self) -> usize {
        self.activity.len()
    }

    /// True when the night holds no epochs.
    pub fn is_empty(&self) -> bool {
        self.activity.is_empty()
    }

    /// Recorded span in hours.
    pub fn duration_hours(&self) -> S {
        S::from_usize(self.len()).unwrap() * self.epoch_len / S::from_f64(60.0).unwrap()
    }

    /// Labels, or an error naming the night when they are absent.
    pub fn require_labels(&self) -> Result<&[S]> {
        self.labels.as_deref().ok_or_else(|| {
            Error::InvalidConfig(format!("night {} has no labels", self.participant_id))
        })
    }
}

const HEADER: [&str; 3] = ["participant_id", "epoch_index", "activity"];
const LABEL_COLUMN: &str = "label";

/// Reads epoch-level nights from a CSV file.
///
/// The epoch length is not part of the file format and must be supplied by
/// the caller.
pub fn read_nights<S: Scalar>(path: &Path, epoch_len: S) -> Result<Vec<EpochSeries<S>>> {
    read_nights_from(BufReader::new(File::open(path)?), epoch_len)
}

/// Reads epoch-level nights from any reader; see [`read_nights`].
pub fn read_nights_from<S: Scalar, R: Read>(reader: R, epoch_len: S) -> Result<Vec<EpochSeries<S>>> {
    if !(epoch_len > S::zero()) || !epoch_len.is_finite() {
        return Err(Error::NonPositiveEpochLength { value: epoch_len.to_f64().unwrap_or(f64::NAN) });
    }
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let labeled = match header.len() {
        3 if header.iter().eq(HEADER) => false,
        4 if header.iter().take(3).eq(HEADER) && &header[3] == LABEL_COLUMN => true,
        _ => {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!(
                    "expected header participant_id,epoch_index,activity[,label], got {}",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            })
        }
    };

    let mut nights: Vec<EpochSeries<S>> = Vec::new();
    let mut closed: BTreeSet<String> = BTreeSet::new();
    let mut current: Option<EpochSeries<S>> = None;

    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, csv::Position::line);
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let id = field(0).to_string();
        let epoch: usize = field(1).parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("epoch_index {:?} is not a positive integer", field(1)),
        })?;
        let activity = parse_value::<S>(field(2), "activity", line)?;
        if activity < S::zero() {
            return Err(Error::MalformedRow {
                line,
                message: format!("activity {activity} is negative"),
            });
        }

        let switch = current.as_ref().map_or(true, |n| n.participant_id != id);
        if switch {
            if let Some(night) = current.take() {
                closed.insert(night.participant_id.clone());
                nights.push(night);
            }
            if closed.contains(&id) {
                return Err(Error::SplitParticipant { participant: id, line });
            }
            current = Some(EpochSeries {
                participant_id: id.clone(),
                epoch_len,
                activity: Vec::new(),
                labels: labeled.then(Vec::new),
            });
        }
        let night = current.as_mut().unwrap();
        let expected = night.len() + 1;
        if epoch != expected {
            return Err(Error::EpochGap { participant: id, line, expected, found: epoch });
        }
        night.activity.push(activity);
        if labeled {
            let label = parse_value::<S>(field(3), "label", line)?;
            if !(label == S::zero() || label == S::one()) {
                return Err(Error::NonBinaryScore {
                    index: night.len() - 1,
                    value: label.to_f64().unwrap_or(f64::NAN),
                });
            }
            night.labels.as_mut().unwrap().push(label);
        }
    }
    if let Some(night) = current.take() {
        nights.push(night);
    }
    Ok(nights)
}

fn parse_value<S: Scalar>(text: &str, what: &str, line: u64) -> Result<S> {
    let value: f64 = text.parse().map_err(|_| Error::MalformedRow {
        line,
        message: format!("{what} {text:?} is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::MalformedRow { line, message: format!("{what} {text:?} is not finite") });
    }
    Ok(S::from_f64(value).unwrap())
}

/// Writes nights to a CSV file in the format [`read_nights`] accepts.
pub fn write_nights<S: Scalar>(path: &Path, nights: &[EpochSeries<S>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_nights_to(&mut out, nights)?;
    out.flush()?;
    Ok(())
}

/// Writes nights to any writer; see [`write_nights`].
///
/// All nights must agree on whether labels are present, since the label
/// column exists for the whole file or not at all.
pub fn write_nights_to<S: Scalar, W: Write>(out: &mut W, nights: &[EpochSeries<S>]) -> Result<()> {
    let labeled = nights.first().map_or(false, |n| n.labels.is_some());
    if nights.iter().any(|n| n.labels.is_some() != labeled) {
        return Err(Error::InvalidConfig(
            "cannot write labeled and unlabeled nights into one file".into(),
        ));
    }
    if labeled {
        writeln!(out, "participant_id,epoch_index,activity,label")?;
    } else {
        writeln!(out, "participant_id,epoch_index,activity")?;
    }
    for night in nights {
        for (t, &x) in night.activity.iter().enumerate() {
            write!(out, "{},{},{x}", night.participant_id, t + 1)?;
            if let Some(y) = &night.labels {
                write!(out, ",{}", y[t])?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Counts from a [`filter_contiguous`] pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterReport {
    pub kept: usize,
    pub dropped: usize,
}

/// Keeps the nights that carry labels and span at least `min_hours`
/// (inclusive boundary).
pub fn filter_contiguous<S: Scalar>(
    nights: Vec<EpochSeries<S>>,
    min_hours: S,
) -> Result<(Vec<EpochSeries<S>>, FilterReport)> {
    if !(min_hours > S::zero()) || !min_hours.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "min_hours must be positive and finite, got {min_hours}"
        )));
    }
    let total = nights.len();
    let kept: Vec<EpochSeries<S>> = nights
        .into_iter()
        .filter(|n| n.labels.is_some() && n.duration_hours() >= min_hours)
        .collect();
    let report = FilterReport { kept: kept.len(), dropped: total - kept.len() };
    Ok((kept, report))
}

/// Configuration for the synthetic night generator.
///
/// Bout means are in epochs; gamma emission parameters are `[shape, scale]`
/// pairs; `arousal_rate` is the per-interior-sleep-epoch probability of a
/// brief wake blip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_participants: usize,
    pub mean_night_epochs: usize,
    /// Epoch length in minutes.
    pub epoch_len: f64,
    pub mean_sleep_bout: f64,
    pub mean_wake_bout: f64,
    pub wake_gamma: [f64; 2],
    pub sleep_gamma: [f64; 2],
    pub arousal_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_participants: 200,
            mean_night_epochs: 960,
            epoch_len: 0.5,
            mean_sleep_bout: 90.0,
            mean_wake_bout: 12.0,
            wake_gamma: [1.2, 8.0],
            sleep_gamma: [0.6, 1.5],
            arousal_rate: 0.02,
            seed: 7,
        }
    }
}

impl SimConfig {
    /// Validates the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epoch_len", self.epoch_len),
            ("wake_gamma shape", self.wake_gamma[0]),
            ("wake_gamma scale", self.wake_gamma[1]),
            ("sleep_gamma shape", self.sleep_gamma[0]),
            ("sleep_gamma scale", self.sleep_gamma[1]),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.n_participants == 0 {
            return Err(Error::InvalidConfig("n_participants must be at least 1".into()));
        }
        if self.mean_night_epochs == 0 {
            return Err(Error::InvalidConfig("mean_night_epochs must be at least 1".into()));
        }
        for (name, value) in
            [("mean_sleep_bout", self.mean_sleep_bout), ("mean_wake_bout", self.mean_wake_bout)]
        {
            if !(value >= 1.0) || !value.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be at least 1 epoch, got {value}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.arousal_rate) || !self.arousal_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "arousal_rate must lie in [0, 1], got {}",
                self.arousal_rate
            )));
        }
        let wake_mean = self.wake_gamma[0] * self.wake_gamma[1];
        let sleep_mean = self.sleep_gamma[0] * self.sleep_gamma[1];
        if !(wake_mean > sleep_mean) {
            return Err(Error::InvalidConfig(format!(
                "wake emission mean {wake_mean} must exceed sleep emission mean {sleep_mean}"
            )));
        }
        Ok(())
    }

    /// Parses a config from its JSON form.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: SimConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("bad simulator config: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

/// What one simulated epoch is, before emission.
#[derive(Clone, Copy, PartialEq, Eq)]
enum EpochKind {
    /// Ordinary wakefulness: wake label, wake-level activity.
    Wake,
    /// Quiet wakefulness just before sleep onset: wake label, sleep-level
    /// activity.
    LeadIn,
    /// Sleep: sleep label, sleep-level activity.
    Sleep,
    /// Brief arousal inside a sleep bout: wake label, wake-level activity.
    Arousal,
}

/// Number of quiet wake epochs preceding each sleep bout.
const LEAD_IN_EPOCHS: std::ops::RangeInclusive<usize> = 2..=8;

/// Generates labeled synthetic nights.
///
/// Each participant gets an independent generator seeded with
/// `config.seed + participant_index`, so the output is deterministic and
/// participants could be generated in parallel without changing it.
pub fn simulate(config: &SimConfig) -> Result<Vec<EpochSeries<f64>>> {
    config.validate()?;
    let wake_len = Geometric::new(1.0 / config.mean_wake_bout)
        .map_err(|e| Error::InvalidConfig(format!("mean_wake_bout: {e}")))?;
    let sleep_len = Geometric::new(1.0 / config.mean_sleep_bout)
        .map_err(|e| Error::InvalidConfig(format!("mean_sleep_bout: {e}")))?;
    let wake_emission = Gamma::new(config.wake_gamma[0], config.wake_gamma[1])
        .map_err(|e| Error::InvalidConfig(format!("wake_gamma: {e}")))?;
    let sleep_emission = Gamma::new(config.sleep_gamma[0], config.sleep_gamma[1])
        .map_err(|e| Error::InvalidConfig(format!("sleep_gamma: {e}")))?;

    let mean = config.mean_night_epochs as f64;
    let shortest = ((0.9 * mean).round() as usize).max(1);
    let longest = ((1.1 * mean).round() as usize).max(shortest);

    let mut nights = Vec::with_capacity(config.n_participants);
    for index in 0..config.n_participants {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed.wrapping_add(index as u64));
        let length = rng.gen_range(shortest..=longest);

        let mut kinds: Vec<EpochKind> = Vec::with_capacity(length);
        while kinds.len() < length {
            let wake = 1 + wake_len.sample(&mut rng) as usize;
            kinds.extend(std::iter::repeat(EpochKind::Wake).take(wake));
            let lead_in = rng.gen_range(LEAD_IN_EPOCHS);
            kinds.extend(std::iter::repeat(EpochKind::LeadIn).take(lead_in));
            let sleep = 1 + sleep_len.sample(&mut rng) as usize;
            for within in 0..sleep {
                // Brief arousals interrupt the bout strictly inside it, so
                // they never merge with the surrounding wake runs.
                if within > 0 && rng.gen_bool(config.arousal_rate) {
                    let blip = rng.gen_range(1..=2);
                    kinds.extend(std::iter::repeat(EpochKind::Arousal).take(blip));
                }
                kinds.push(EpochKind::Sleep);
            }
        }
        kinds.truncate(length);

        let mut activity = Vec::with_capacity(length);
        let mut labels = Vec::with_capacity(length);
        for kind in &kinds {
            let (emission, label) = match kind {
                EpochKind::Wake | EpochKind::Arousal => (&wake_emission, 1.0),
                EpochKind::LeadIn => (&sleep_emission, 1.0),
                EpochKind::Sleep => (&sleep_emission, 0.0),
            };
            activity.push(emission.sample(&mut rng));
            labels.push(label);
        }

        nights.push(EpochSeries {
            participant_id: format!("sim-{:04}", index + 1),
            epoch_len: config.epoch_len,
            activity,
            labels: Some(labels),
        });
    }
    Ok(nights)
}
