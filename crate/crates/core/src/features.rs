//! Amplitude-modulation (AM) features: summed squared voltage per time bin.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterbank::{apply_zero_phase, BandFilter, BandSignal};
use crate::recording::{samples_per_bin, Recording};

/// Default AM bin width, one bin per dataglove sample at 25 Hz.
pub const DEFAULT_BIN_MS: u32 = 40;

/// Where a feature column came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ColumnMeta {
    RawChannel { channel: usize },
    ChannelBand { channel: usize, band: String },
    PrincipalComponent { component: usize },
}

impl ColumnMeta {
    /// Column name used in exported tables: `chNN`, `chNN:band` or `pcNN`.
    pub fn label(&self) -> String {
        match self {
            ColumnMeta::RawChannel { channel } => format!("ch{:02}", channel + 1),
            ColumnMeta::ChannelBand { channel, band } => format!("ch{:02}:{band}", channel + 1),
            ColumnMeta::PrincipalComponent { component } => format!("pc{:02}", component + 1),
        }
    }
}

impl fmt::Display for ColumnMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Time-binned AM features, one column per source series.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: DMatrix<f64>,
    bin_ms: u32,
    columns: Vec<ColumnMeta>,
}

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>, bin_ms: u32, columns: Vec<ColumnMeta>) -> Result<Self> {
        if values.ncols() != columns.len() {
            return Err(Error::Shape(format!(
                "{} value columns but {} column descriptors",
                values.ncols(),
                columns.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation(format!(
                "feature value at (bin {}, column {}) is negative or non-finite",
                i % values.nrows().max(1),
                i / values.nrows().max(1)
            )));
        }
        Ok(Self {
            values,
            bin_ms,
            columns,
        })
    }

    fn from_columns(series: Vec<Vec<f64>>, bin_ms: u32, columns: Vec<ColumnMeta>) -> Result<Self> {
        let n_bins = series.first().map_or(0, Vec::len);
        if series.iter().any(|s| s.len() != n_bins) {
            return Err(Error::Shape("feature columns differ in length".into()));
        }
        let n_cols = series.len();
        let values = DMatrix::from_iterator(n_bins, n_cols, series.into_iter().flatten());
        Self::new(values, bin_ms, columns)
    }

    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    pub fn bin_ms(&self) -> u32 {
        self.bin_ms
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n_bins();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    /// Keeps only the first `n_bins` bins.
    pub fn truncated(&self, n_bins: usize) -> Self {
        let n = n_bins.min(self.n_bins());
        Self {
            values: self.values.rows(0, n).into_owned(),
            bin_ms: self.bin_ms,
            columns: self.columns.clone(),
        }
    }

    /// Writes a TSV with a `bin_index` column followed by one column per feature.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("bin_index");
        for c in &self.columns {
            out.push('\t');
            out.push_str(&c.label());
        }
        out.push('\n');
        for i in 0..self.n_bins() {
            out.push_str(&i.to_string());
            for j in 0..self.n_columns() {
                out.push('\t');
                out.push_str(&format!("{:e}", self.values[(i, j)]));
            }
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

impl crate::recording::TimeAxis for FeatureMatrix {
    fn time_len(&self) -> usize {
        self.n_bins()
    }

    fn time_slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            values: self.values.rows(range.start, range.len()).into_owned(),
            bin_ms: self.bin_ms,
            columns: self.columns.clone(),
        }
    }
}

/// Sum of squared samples over consecutive whole bins; a trailing partial bin
/// is dropped.
pub fn compute_am(samples: &[f64], rate_hz: u32, bin_ms: u32) -> Result<Vec<f64>> {
    let spb = samples_per_bin(rate_hz, bin_ms)?;
    Ok(am_with_bin(samples, spb))
}

fn am_with_bin(samples: &[f64], spb: usize) -> Vec<f64> {
    samples
        .chunks_exact(spb)
        .map(|bin| bin.iter().map(|v| v * v).sum())
        .collect()
}

/// AM of every channel without frequency decomposition.
pub fn raw_am_features(recording: &Recording, bin_ms: u32) -> Result<FeatureMatrix> {
    let spb = recording.samples_per_bin(bin_ms)?;
    let series: Vec<Vec<f64>> = (0..recording.n_channels())
        .into_par_iter()
        .map(|c| am_with_bin(recording.channel(c), spb))
        .collect();
    let columns = (0..recording.n_channels())
        .map(|channel| ColumnMeta::RawChannel { channel })
        .collect();
    FeatureMatrix::from_columns(series, bin_ms, columns)
}

/// AM of already-decomposed band signals, one column per signal in order.
pub fn fd_am_features(
    band_signals: &[BandSignal],
    rate_hz: u32,
    bin_ms: u32,
) -> Result<FeatureMatrix> {
    let first = band_signals.first().ok_or(Error::EmptyFeatures)?;
    let len = first.samples.len();
    if let Some(b) = band_signals.iter().find(|b| b.samples.len() != len) {
        return Err(Error::Shape(format!(
            "band signal (channel {}, {}) has {} samples, expected {len}",
            b.channel,
            b.band.name,
            b.samples.len()
        )));
    }
    let spb = samples_per_bin(rate_hz, bin_ms)?;
    let series = band_signals
        .par_iter()
        .map(|b| am_with_bin(&b.samples, spb))
        .collect();
    let columns = band_signals
        .iter()
        .map(|b| ColumnMeta::ChannelBand {
            channel: b.channel,
            band: b.band.name.clone(),
        })
        .collect();
    FeatureMatrix::from_columns(series, bin_ms, columns)
}

/// AM of one channel filtered into one band.
pub fn band_am(
    recording: &Recording,
    channel: usize,
    bank: &BandFilter,
    bin_ms: u32,
) -> Result<Vec<f64>> {
    let spb = recording.samples_per_bin(bin_ms)?;
    let filtered = apply_zero_phase(&bank.filter, recording.channel(channel))?;
    Ok(am_with_bin(&filtered, spb))
}

/// Band-specific AM for every (channel, band) pair, computed one filtered
/// series at a time. Column order matches [`crate::filterbank::decompose`].
pub fn fd_am_features_streaming(
    recording: &Recording,
    bank: &[BandFilter],
    bin_ms: u32,
) -> Result<FeatureMatrix> {
    if bank.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    for b in bank {
        b.band.validate(recording.ecog_rate())?;
    }
    let pairs: Vec<(usize, &BandFilter)> = (0..recording.n_channels())
        .flat_map(|c| bank.iter().map(move |b| (c, b)))
        .collect();
    let series = pairs
        .par_iter()
        .map(|(c, b)| band_am(recording, *c, b, bin_ms))
        .collect::<Result<Vec<_>>>()?;
    let columns = pairs
        .iter()
        .map(|(c, b)| ColumnMeta::ChannelBand {
            channel: *c,
            band: b.band.name.clone(),
        })
        .collect();
    FeatureMatrix::from_columns(series, bin_ms, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{decompose, default_bands, design_bank};
    use proptest::strategy::Strategy;

    fn recording(n_ch: usize, n: usize, f: impl Fn(usize, usize) -> f64) -> Recording {
        let ch = (0..n_ch).map(|c| (0..n).map(|i| f(c, i)).collect()).collect();
        Recording::new("t", ch, 1000, vec![vec![0.0; n / 40]; 5], 25, None).unwrap()
    }

    #[test]
    fn am_of_zeros_and_constants() {
        assert_eq!(compute_am(&[0.0; 40], 1000, 40).unwrap(), [0.0]);
        assert_eq!(compute_am(&[2.0; 40], 1000, 40).unwrap(), [160.0]);
    }

    #[test]
    fn am_drops_partial_bin() {
        let x: Vec<f64> = (0..100).map(|i| ((i * 7919) % 101) as f64 / 10.0 - 5.0).collect();
        let am = compute_am(&x, 1000, 40).unwrap();
        assert_eq!(am.len(), 2);
        for (k, v) in am.iter().enumerate() {
            let mut oracle = 0.0;
            for i in 40 * k..40 * (k + 1) {
                oracle += x[i] * x[i];
            }
            assert_eq!(*v, oracle);
        }
    }

    #[test]
    fn am_rate_error() {
        assert!(matches!(compute_am(&[1.0; 10], 1001, 40), Err(Error::Rate(_))));
    }

    #[test]
    fn raw_columns_echo_compute_am() {
        let r = recording(3, 4000, |c, i| ((c + 1) * i % 13) as f64);
        let fm = raw_am_features(&r, 40).unwrap();
        assert_eq!((fm.n_bins(), fm.n_columns()), (100, 3));
        for c in 0..3 {
            assert_eq!(fm.column(c), compute_am(r.channel(c), 1000, 40).unwrap());
            assert_eq!(fm.columns()[c], ColumnMeta::RawChannel { channel: c });
        }
    }

    #[test]
    fn fd_streaming_matches_decompose() {
        let r = recording(2, 4000, |c, i| ((i * (c + 3)) as f64 * 0.37).sin() * 5.0);
        let bands = default_bands(1000).unwrap();
        let signals = decompose(&r, &bands).unwrap();
        let a = fd_am_features(&signals, 1000, 40).unwrap();
        let b = fd_am_features_streaming(&r, &design_bank(&bands, 1000).unwrap(), 40).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_columns(), 6);
        assert_eq!(a.columns()[4].label(), "ch02:gamma");
        for (j, s) in signals.iter().enumerate() {
            assert_eq!(a.column(j), compute_am(&s.samples, 1000, 40).unwrap());
        }
    }

    #[test]
    fn fd_empty_and_mismatched() {
        assert!(matches!(fd_am_features(&[], 1000, 40), Err(Error::EmptyFeatures)));
        let band = default_bands(1000).unwrap()[0].clone();
        let s = vec![
            BandSignal { channel: 0, band: band.clone(), samples: vec![1.0; 80] },
            BandSignal { channel: 1, band, samples: vec![1.0; 120] },
        ];
        assert!(matches!(fd_am_features(&s, 1000, 40), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_recording_gives_zero_features() {
        let r = recording(4, 2000, |_, _| 0.0);
        let fm = raw_am_features(&r, 40).unwrap();
        assert!(fm.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn labels() {
        assert_eq!(ColumnMeta::RawChannel { channel: 0 }.label(), "ch01");
        assert_eq!(ColumnMeta::PrincipalComponent { component: 11 }.label(), "pc12");
    }

    #[test]
    fn tsv_export() {
        let r = recording(2, 400, |c, i| (c + i) as f64);
        let fm = raw_am_features(&r, 40).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsv");
        fm.write_tsv(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "bin_index\tch01\tch02");
        assert_eq!(lines.count(), 10);
    }

    proptest::proptest! {
        #[test]
        fn scaling_law(xs in proptest::collection::vec(-1e3f64..1e3, 0..400), c in -50.0f64..50.0) {
            let a = compute_am(&xs, 1000, 40).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|v| c * v).collect();
            let b = compute_am(&scaled, 1000, 40).unwrap();
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert!((c * c * x - y).abs() <= 1e-12 * (c * c * x).abs().max(f64::MIN_POSITIVE));
                proptest::prop_assert!(*y >= 0.0);
            }
        }

        #[test]
        fn concatenation_additivity(
            a in (0usize..6).prop_flat_map(|k| proptest::collection::vec(-10.0f64..10.0, k * 40)),
            b in (0usize..6).prop_flat_map(|k| proptest::collection::vec(-10.0f64..10.0, k * 40)),
        ) {
            let joined: Vec<f64> = a.iter().chain(&b).copied().collect();
            let mut expect = compute_am(&a, 1000, 40).unwrap();
            expect.extend(compute_am(&b, 1000, 40).unwrap());
            proptest::prop_assert_eq!(compute_am(&joined, 1000, 40).unwrap(), expect);
        }
    }
}
