//! Per-finger tap-delay Wiener decoders: training and prediction.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    band_am, fd_am_features_streaming, raw_am_features, ColumnMeta, FeatureMatrix, DEFAULT_BIN_MS,
};
use crate::filterbank::{default_bands, design_bank, BandFilter};
use crate::pca::{fit_pca, pc_am, pca_am_features, PcaBasis};
use crate::recording::{align_glove_to_bins, Finger, Recording};
use crate::selection::{stepwise_select, train_stats, SelectionConfig, SelectionTrace};
use crate::wiener::{embed_tap_delays, fit_wiener};

/// Which AM features feed the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    /// AM of each raw channel.
    Raw,
    /// AM of each principal component of the channels.
    Pca,
    /// AM of each channel in each frequency band.
    Fd,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Raw, Pipeline::Pca, Pipeline::Fd];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Raw => "raw",
            Pipeline::Pca => "pca",
            Pipeline::Fd => "fd",
        }
    }

    /// Display name used in correlation tables.
    pub fn label(self) -> &'static str {
        match self {
            Pipeline::Raw => "Raw ECoG AM",
            Pipeline::Pca => "PCA-ECoG AM",
            Pipeline::Fd => "FD-ECoG AM",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pipeline '{s}'")))
    }
}

/// Everything needed to recompute a model's feature columns from a raw
/// recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pipeline", rename_all = "lowercase")]
pub enum FeatureRecipe {
    Raw {
        bin_ms: u32,
        ecog_rate: u32,
        n_channels: usize,
    },
    Pca {
        bin_ms: u32,
        ecog_rate: u32,
        basis: PcaBasis,
    },
    Fd {
        bin_ms: u32,
        ecog_rate: u32,
        n_channels: usize,
        bands: Vec<BandFilter>,
    },
}

impl FeatureRecipe {
    /// Builds the recipe for `pipeline` on `recording` and the full feature
    /// matrix, truncated to the bins that have glove targets.
    pub fn fit(
        recording: &Recording,
        pipeline: Pipeline,
        bin_ms: u32,
    ) -> Result<(FeatureRecipe, FeatureMatrix)> {
        let n_bins = recording.usable_bins(bin_ms)?;
        let ecog_rate = recording.ecog_rate();
        let n_channels = recording.n_channels();
        let (recipe, features) = match pipeline {
            Pipeline::Raw => (
                FeatureRecipe::Raw {
                    bin_ms,
                    ecog_rate,
                    n_channels,
                },
                raw_am_features(recording, bin_ms)?,
            ),
            Pipeline::Pca => {
                let basis = fit_pca(recording.ecog())?;
                let features = pca_am_features(recording, &basis, bin_ms)?;
                (
                    FeatureRecipe::Pca {
                        bin_ms,
                        ecog_rate,
                        basis,
                    },
                    features,
                )
            }
            Pipeline::Fd => {
                let bands = design_bank(&default_bands(ecog_rate)?, ecog_rate)?;
                let features = fd_am_features_streaming(recording, &bands, bin_ms)?;
                (
                    FeatureRecipe::Fd {
                        bin_ms,
                        ecog_rate,
                        n_channels,
                        bands,
                    },
                    features,
                )
            }
        };
        Ok((recipe, features.truncated(n_bins)))
    }

    pub fn pipeline(&self) -> Pipeline {
        match self {
            FeatureRecipe::Raw { .. } => Pipeline::Raw,
            FeatureRecipe::Pca { .. } => Pipeline::Pca,
            FeatureRecipe::Fd { .. } => Pipeline::Fd,
        }
    }

    pub fn bin_ms(&self) -> u32 {
        match self {
            FeatureRecipe::Raw { bin_ms, .. }
            | FeatureRecipe::Pca { bin_ms, .. }
            | FeatureRecipe::Fd { bin_ms, .. } => *bin_ms,
        }
    }

    fn ecog_rate(&self) -> u32 {
        match self {
            FeatureRecipe::Raw { ecog_rate, .. }
            | FeatureRecipe::Pca { ecog_rate, .. }
            | FeatureRecipe::Fd { ecog_rate, .. } => *ecog_rate,
        }
    }

    pub fn n_channels(&self) -> usize {
        match self {
            FeatureRecipe::Raw { n_channels, .. } | FeatureRecipe::Fd { n_channels, .. } => {
                *n_channels
            }
            FeatureRecipe::Pca { basis, .. } => basis.n_channels(),
        }
    }

    /// Rejects recordings the recipe cannot be applied to.
    pub fn check(&self, recording: &Recording) -> Result<()> {
        if recording.n_channels() != self.n_channels() {
            return Err(Error::Shape(format!(
                "model expects {} channels, recording has {}",
                self.n_channels(),
                recording.n_channels()
            )));
        }
        if recording.ecog_rate() != self.ecog_rate() {
            return Err(Error::Rate(format!(
                "model was built for {} Hz, recording is {} Hz",
                self.ecog_rate(),
                recording.ecog_rate()
            )));
        }
        Ok(())
    }

    /// AM series of one feature column.
    pub fn column(&self, recording: &Recording, column: &ColumnMeta) -> Result<Vec<f64>> {
        self.check(recording)?;
        let bin_ms = self.bin_ms();
        match (self, column) {
            (FeatureRecipe::Raw { .. }, ColumnMeta::RawChannel { channel })
                if *channel < recording.n_channels() =>
            {
                crate::features::compute_am(recording.channel(*channel), recording.ecog_rate(), bin_ms)
            }
            (FeatureRecipe::Pca { basis, .. }, ColumnMeta::PrincipalComponent { component })
                if *component < basis.n_components() =>
            {
                pc_am(recording, basis, *component, bin_ms)
            }
            (FeatureRecipe::Fd { bands, .. }, ColumnMeta::ChannelBand { channel, band })
                if *channel < recording.n_channels() =>
            {
                let bf = bands
                    .iter()
                    .find(|b| &b.band.name == band)
                    .ok_or_else(|| Error::Shape(format!("model has no band named '{band}'")))?;
                band_am(recording, *channel, bf, bin_ms)
            }
            _ => Err(Error::Shape(format!(
                "column {column} is not available in the {} pipeline",
                self.pipeline()
            ))),
        }
    }
}

/// Training settings; defaults are 40 ms bins, 25 taps and a 3/5 training
/// prefix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub bin_ms: u32,
    pub selection: SelectionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bin_ms: DEFAULT_BIN_MS,
            selection: SelectionConfig::default(),
        }
    }
}

/// A trained linear decoder for one finger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderModel {
    pub finger: Finger,
    pub columns: Vec<ColumnMeta>,
    pub taps: usize,
    /// `taps × columns.len()` lagged weights (lag-major) then the intercept.
    pub weights: Vec<f64>,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub recipe: FeatureRecipe,
}

impl DecoderModel {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::Validation("model has zero taps".into()));
        }
        let k = self.columns.len();
        if self.weights.len() != self.taps * k + 1 {
            return Err(Error::Validation(format!(
                "model has {} weights, expected {}",
                self.weights.len(),
                self.taps * k + 1
            )));
        }
        if self.norm_mean.len() != k || self.norm_std.len() != k {
            return Err(Error::Validation("normalisation vectors do not match columns".into()));
        }
        if self.norm_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Validation("normalisation std must be positive".into()));
        }
        if self.weights.iter().chain(&self.norm_mean).any(|v| !v.is_finite()) {
            return Err(Error::Validation("model contains non-finite values".into()));
        }
        Ok(())
    }

    /// Predicted trajectory from pre-computed AM columns (one per model
    /// column, all the same length). Element `i` estimates bin `i + taps - 1`.
    pub fn predict_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>> {
        if columns.len() != self.columns.len() {
            return Err(Error::Shape(format!(
                "model uses {} columns, got {}",
                self.columns.len(),
                columns.len()
            )));
        }
        let n_bins = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_bins) {
            return Err(Error::Shape("feature columns differ in length".into()));
        }
        let z = DMatrix::from_fn(n_bins, columns.len(), |i, j| {
            (columns[j][i] - self.norm_mean[j]) / self.norm_std[j]
        });
        let design = embed_tap_delays(&z, self.taps)?;
        let pred = design * DVector::from_column_slice(&self.weights);
        Ok(pred.iter().copied().collect())
    }

    /// Rebuilds this model's features from `recording` and applies it.
    pub fn predict(&self, recording: &Recording) -> Result<Vec<f64>> {
        self.recipe.check(recording)?;
        let columns = self
            .columns
            .iter()
            .map(|c| self.recipe.column(recording, c))
            .collect::<Result<Vec<_>>>()?;
        self.predict_columns(&columns)
    }
}

/// A model with the selection trace that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDecoder {
    pub model: DecoderModel,
    pub trace: SelectionTrace,
}

/// Fits the Wiener weights for an already selected set of columns on the
/// training prefix of the bins.
pub fn fit_selected(
    features: &FeatureMatrix,
    target: &[f64],
    indices: &[usize],
    config: &TrainConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let taps = config.selection.taps;
    let boundary = config.selection.split().boundary(features.n_bins())?;
    let stats: Vec<(f64, f64)> = indices
        .iter()
        .map(|&j| train_stats(&features.column(j)[..boundary]))
        .collect();
    let z = DMatrix::from_fn(boundary, indices.len(), |i, k| {
        (features.column(indices[k])[i] - stats[k].0) / stats[k].1
    });
    let design = embed_tap_delays(&z, taps)?;
    let weights = fit_wiener(&design, &target[taps - 1..boundary])?;
    Ok((
        weights,
        stats.iter().map(|s| s.0).collect(),
        stats.iter().map(|s| s.1).collect(),
    ))
}

fn train_on_features(
    recipe: &FeatureRecipe,
    features: &FeatureMatrix,
    target: &[f64],
    finger: Finger,
    config: &TrainConfig,
) -> Result<TrainedDecoder> {
    let trace = stepwise_select(features, target, &config.selection)?;
    if trace.final_columns.is_empty() {
        return Err(Error::SelectionFailed);
    }
    let indices: Vec<usize> = trace
        .final_columns
        .iter()
        .map(|c| {
            features
                .columns()
                .iter()
                .position(|f| f == c)
                .expect("selected column comes from the feature matrix")
        })
        .collect();
    let (weights, norm_mean, norm_std) = fit_selected(features, target, &indices, config)?;
    let model = DecoderModel {
        finger,
        columns: trace.final_columns.clone(),
        taps: config.selection.taps,
        weights,
        norm_mean,
        norm_std,
        recipe: recipe.clone(),
    };
    model.validate()?;
    Ok(TrainedDecoder { model, trace })
}

/// Trains one decoder per requested finger, sharing one feature
/// computation.
pub fn train_fingers(
    recording: &Recording,
    fingers: &[Finger],
    pipeline: Pipeline,
    config: &TrainConfig,
) -> Result<Vec<TrainedDecoder>> {
    config.selection.validate()?;
    let taps = config.selection.taps;
    let n_bins = recording.usable_bins(config.bin_ms)?;
    if n_bins < 10 * taps {
        return Err(Error::TooShort {
            what: "bins for training (10 × taps)",
            needed: 10 * taps,
            got: n_bins,
        });
    }
    let targets = align_glove_to_bins(recording, config.bin_ms)?;
    let (recipe, features) = FeatureRecipe::fit(recording, pipeline, config.bin_ms)?;
    fingers
        .iter()
        .map(|&f| train_on_features(&recipe, &features, &targets[f.index()], f, config))
        .collect()
}

/// Trains the decoder for a single finger.
pub fn train(
    recording: &Recording,
    finger: Finger,
    pipeline: Pipeline,
    config: &TrainConfig,
) -> Result<TrainedDecoder> {
    Ok(train_fingers(recording, &[finger], pipeline, config)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(weights: Vec<f64>, taps: usize) -> DecoderModel {
        DecoderModel {
            finger: Finger::Thumb,
            columns: vec![ColumnMeta::RawChannel { channel: 0 }],
            taps,
            weights,
            norm_mean: vec![0.0],
            norm_std: vec![1.0],
            recipe: FeatureRecipe::Raw {
                bin_ms: 40,
                ecog_rate: 1000,
                n_channels: 1,
            },
        }
    }

    fn recording(n_ch: usize, n_bins: usize) -> Recording {
        let ch = (0..n_ch)
            .map(|c| (0..n_bins * 40).map(|i| ((i * (c + 1)) as f64 * 0.01).sin()).collect())
            .collect();
        Recording::new("r", ch, 1000, vec![vec![0.0; n_bins]; 5], 25, None).unwrap()
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = model(vec![0.0; 26], 25);
        let p = m.predict(&recording(1, 100)).unwrap();
        assert_eq!(p.len(), 100 - 24);
        assert!(p.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let m = model(vec![0.0; 26], 25);
        assert!(matches!(m.predict(&recording(2, 100)), Err(Error::Shape(_))));
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(model(vec![0.0; 25], 25).validate().is_err());
        let mut m = model(vec![0.0; 26], 25);
        m.norm_std = vec![0.0];
        assert!(m.validate().is_err());
    }

    #[test]
    fn short_recording_rejected() {
        let r = recording(2, 249);
        assert!(matches!(
            train(&r, Finger::Thumb, Pipeline::Raw, &TrainConfig::default()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn pipeline_names_round_trip() {
        for p in Pipeline::ALL {
            assert_eq!(p.name().parse::<Pipeline>().unwrap(), p);
        }
        assert!("wavelet".parse::<Pipeline>().is_err());
    }

    #[test]
    fn recipe_rejects_foreign_columns() {
        let r = recording(2, 100);
        let recipe = FeatureRecipe::Raw {
            bin_ms: 40,
            ecog_rate: 1000,
            n_channels: 2,
        };
        assert!(recipe.column(&r, &ColumnMeta::PrincipalComponent { component: 0 }).is_err());
        assert!(recipe.column(&r, &ColumnMeta::RawChannel { channel: 5 }).is_err());
        assert_eq!(recipe.column(&r, &ColumnMeta::RawChannel { channel: 1 }).unwrap().len(), 100);
    }
}
