//! Recording data model, time splitting and glove/bin alignment.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dataglove fingers in the fixed on-disk row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Little,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Little => "little",
        }
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Finger {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Finger::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown finger '{s}'")))
    }
}

pub const N_FINGERS: usize = 5;

/// Multi-channel ECoG voltages plus the five dataglove trajectories.
///
/// Storage is column-major with time along rows, so each channel (and each
/// finger) is one contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    subject_id: String,
    ecog: DMatrix<f64>,
    ecog_rate: u32,
    glove: DMatrix<f64>,
    glove_rate: u32,
    channel_labels: Vec<String>,
}

impl Recording {
    /// Builds a recording from channel-major voltage rows and finger-major
    /// glove rows, checking every invariant.
    pub fn new(
        subject_id: impl Into<String>,
        channels: Vec<Vec<f64>>,
        ecog_rate: u32,
        fingers: Vec<Vec<f64>>,
        glove_rate: u32,
        channel_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let n_channels = channels.len();
        if n_channels == 0 {
            return Err(Error::Validation("recording has no channels".into()));
        }
        let n_samples = channels[0].len();
        if n_samples == 0 {
            return Err(Error::Validation("recording has no samples".into()));
        }
        if let Some(c) = channels.iter().position(|c| c.len() != n_samples) {
            return Err(Error::Shape(format!(
                "channel {c} has {} samples, channel 0 has {n_samples}",
                channels[c].len()
            )));
        }
        if fingers.len() != N_FINGERS {
            return Err(Error::Shape(format!(
                "glove must have {N_FINGERS} rows, got {}",
                fingers.len()
            )));
        }
        let n_glove = fingers[0].len();
        if let Some(f) = fingers.iter().position(|f| f.len() != n_glove) {
            return Err(Error::Shape(format!(
                "finger {f} has {} samples, finger 0 has {n_glove}",
                fingers[f].len()
            )));
        }
        let ecog = DMatrix::from_iterator(n_samples, n_channels, channels.into_iter().flatten());
        let glove = DMatrix::from_iterator(n_glove, N_FINGERS, fingers.into_iter().flatten());
        Self::from_matrices(
            subject_id.into(),
            ecog,
            ecog_rate,
            glove,
            glove_rate,
            channel_labels,
        )
    }

    pub(crate) fn from_matrices(
        subject_id: String,
        ecog: DMatrix<f64>,
        ecog_rate: u32,
        glove: DMatrix<f64>,
        glove_rate: u32,
        channel_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let n_channels = ecog.ncols();
        let n_samples = ecog.nrows();
        if n_channels == 0 || n_samples == 0 {
            return Err(Error::Validation("recording is empty".into()));
        }
        if glove.ncols() != N_FINGERS {
            return Err(Error::Shape(format!(
                "glove must have {N_FINGERS} rows, got {}",
                glove.ncols()
            )));
        }
        if ecog_rate == 0 || glove_rate == 0 {
            return Err(Error::Rate("sample rates must be positive".into()));
        }
        if ecog_rate % glove_rate != 0 {
            return Err(Error::Rate(format!(
                "ecog rate {ecog_rate} Hz is not an integer multiple of glove rate {glove_rate} Hz"
            )));
        }
        let implied = n_samples / (ecog_rate / glove_rate) as usize;
        if implied.abs_diff(glove.nrows()) > 1 {
            return Err(Error::Validation(format!(
                "{} glove samples do not match {n_samples} ecog samples (expected {implied} ± 1)",
                glove.nrows()
            )));
        }
        check_finite("ecog", &ecog)?;
        check_finite("glove", &glove)?;
        let channel_labels = match channel_labels {
            Some(labels) if labels.len() != n_channels => {
                return Err(Error::Shape(format!(
                    "{} channel labels for {n_channels} channels",
                    labels.len()
                )))
            }
            Some(labels) => labels,
            None => default_channel_labels(n_channels),
        };
        Ok(Self {
            subject_id,
            ecog,
            ecog_rate,
            glove,
            glove_rate,
            channel_labels,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn n_channels(&self) -> usize {
        self.ecog.ncols()
    }

    pub fn n_ecog_samples(&self) -> usize {
        self.ecog.nrows()
    }

    pub fn n_glove_samples(&self) -> usize {
        self.glove.nrows()
    }

    pub fn ecog_rate(&self) -> u32 {
        self.ecog_rate
    }

    pub fn glove_rate(&self) -> u32 {
        self.glove_rate
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    /// Voltage samples of one channel.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.n_ecog_samples();
        &self.ecog.as_slice()[c * n..(c + 1) * n]
    }

    /// Dataglove trajectory of one finger.
    pub fn finger(&self, finger: Finger) -> &[f64] {
        let n = self.n_glove_samples();
        let f = finger.index();
        &self.glove.as_slice()[f * n..(f + 1) * n]
    }

    /// ECoG as a `[n_samples × n_channels]` matrix.
    pub fn ecog(&self) -> &DMatrix<f64> {
        &self.ecog
    }

    pub fn glove(&self) -> &DMatrix<f64> {
        &self.glove
    }

    /// ECoG samples per feature bin, or a rate error when not integral.
    pub fn samples_per_bin(&self, bin_ms: u32) -> Result<usize> {
        samples_per_bin(self.ecog_rate, bin_ms)
    }

    /// Number of bins shared by the AM features and the glove targets.
    ///
    /// Off-by-one disagreements between the two clocks resolve to the shorter
    /// implied duration.
    pub fn usable_bins(&self, bin_ms: u32) -> Result<usize> {
        let spb = self.samples_per_bin(bin_ms)?;
        Ok((self.n_ecog_samples() / spb).min(self.n_glove_samples()))
    }
}

pub fn default_channel_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("ch{i:02}")).collect()
}

pub fn samples_per_bin(rate_hz: u32, bin_ms: u32) -> Result<usize> {
    let num = rate_hz as u64 * bin_ms as u64;
    if bin_ms == 0 || num % 1000 != 0 {
        return Err(Error::Rate(format!(
            "{bin_ms} ms bins at {rate_hz} Hz do not hold an integer number of samples"
        )));
    }
    Ok((num / 1000) as usize)
}

fn check_finite(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    match m.as_slice().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite {
            what,
            row: i / n,
            index: i % n,
        }),
        None => Ok(()),
    }
}

/// Contiguous train/validation cut along time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 3.0 / 5.0,
        }
    }
}

/// Shortest time axis [`split_time`] accepts.
pub const MIN_SPLIT_LEN: usize = 5;

impl SplitSpec {
    pub fn new(train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(Self { train_fraction })
    }

    /// First validation index for a time axis of length `len`.
    pub fn boundary(&self, len: usize) -> Result<usize> {
        if len < MIN_SPLIT_LEN {
            return Err(Error::TooShort {
                what: "time axis for splitting",
                needed: MIN_SPLIT_LEN,
                got: len,
            });
        }
        // The small epsilon keeps 0.6 * 5 from landing on 2.999...
        Ok(((len as f64) * self.train_fraction + 1e-9).floor() as usize)
    }

    pub fn ranges(&self, len: usize) -> Result<(Range<usize>, Range<usize>)> {
        let b = self.boundary(len)?;
        Ok((0..b, b..len))
    }
}

/// Anything with a time axis that can be cut into contiguous pieces.
pub trait TimeAxis: Sized {
    fn time_len(&self) -> usize;
    fn time_slice(&self, range: Range<usize>) -> Self;
}

impl TimeAxis for Vec<f64> {
    fn time_len(&self) -> usize {
        self.len()
    }

    fn time_slice(&self, range: Range<usize>) -> Self {
        self[range].to_vec()
    }
}

impl TimeAxis for DMatrix<f64> {
    fn time_len(&self) -> usize {
        self.nrows()
    }

    fn time_slice(&self, range: Range<usize>) -> Self {
        self.rows(range.start, range.len()).into_owned()
    }
}

/// Splits along time into (train prefix, validation suffix).
pub fn split_time<T: TimeAxis>(input: &T, spec: &SplitSpec) -> Result<(T, T)> {
    let (train, validation) = spec.ranges(input.time_len())?;
    Ok((input.time_slice(train), input.time_slice(validation)))
}

/// Glove targets resampled onto the AM bin grid, shape `[5 × n_bins]` as
/// one vector per finger.
pub fn align_glove_to_bins(recording: &Recording, bin_ms: u32) -> Result<Vec<Vec<f64>>> {
    if bin_ms as u64 * recording.glove_rate() as u64 != 1000 {
        return Err(Error::Rate(format!(
            "{bin_ms} ms bins do not hold exactly one glove sample at {} Hz",
            recording.glove_rate()
        )));
    }
    let n_bins = recording.usable_bins(bin_ms)?;
    Ok(Finger::ALL
        .iter()
        .map(|&f| recording.finger(f)[..n_bins].to_vec())
        .collect())
}
