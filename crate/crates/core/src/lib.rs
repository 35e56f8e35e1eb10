//! Finger-flexion decoding from ECoG amplitude-modulation features.
//!
//! The pipeline: a [`Recording`] is split into feature columns (raw-channel
//! AM, PCA-component AM or per-band AM after a zero-phase filter bank), a
//! forward stepwise wrapper picks columns for each finger, and a tap-delay
//! Wiener filter maps the selected columns to the glove trajectory.

pub mod artifact;
pub mod container;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod filterbank;
pub mod pca;
pub mod recording;
pub mod selection;
pub mod synth;
pub mod wiener;

pub use artifact::ModelArtifact;
pub use container::{load_recording, save_recording};
pub use decoder::{train, train_fingers, DecoderModel, Pipeline, TrainConfig, TrainedDecoder};
pub use error::{Error, Result};
pub use eval::{evaluate, pearson, EvaluationReport, ReportRow};
pub use features::{ColumnMeta, FeatureMatrix, DEFAULT_BIN_MS};
pub use filterbank::{default_bands, BandDefinition};
pub use recording::{Finger, Recording, SplitSpec};
pub use selection::{SelectionConfig, SelectionTrace};
pub use synth::{generate_synthetic, GroundTruth, SynthConfig, SynthMode};
