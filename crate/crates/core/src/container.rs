//! On-disk recording container.
//!
//! A container is a directory holding:
//!
//! * `header.json` with `subject_id`, `n_channels`, `n_ecog_samples`,
//!   `n_glove_samples`, `ecog_rate_hz`, `glove_rate_hz`, `dtype` (always
//!   `"f32le"`) and an optional `channel_labels` array;
//! * `ecog.bin`, channel-major little-endian `f32` voltages;
//! * `glove.bin`, finger-major little-endian `f32` positions in the order
//!   thumb, index, middle, ring, little.
//!
//! Converters from other acquisition formats must produce exactly this
//! layout; values are widened to `f64` on load.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::recording::{Recording, N_FINGERS};

pub const HEADER_FILE: &str = "header.json";
pub const ECOG_FILE: &str = "ecog.bin";
pub const GLOVE_FILE: &str = "glove.bin";
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub subject_id: String,
    pub n_channels: usize,
    pub n_ecog_samples: usize,
    pub n_glove_samples: usize,
    pub ecog_rate_hz: u32,
    pub glove_rate_hz: u32,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_labels: Option<Vec<String>>,
}

const REQUIRED_FIELDS: [&str; 7] = [
    "subject_id",
    "n_channels",
    "n_ecog_samples",
    "n_glove_samples",
    "ecog_rate_hz",
    "glove_rate_hz",
    "dtype",
];

fn read_header(dir: &Path) -> Result<ContainerHeader> {
    let path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::format(&path, format!("{HEADER_FILE} not found")),
        _ => Error::io(&path, e),
    })?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::format(&path, "header is not a JSON object"))?;
    if let Some(missing) = REQUIRED_FIELDS.iter().find(|k| !obj.contains_key(**k)) {
        return Err(Error::format(&path, format!("missing field '{missing}'")));
    }
    let header: ContainerHeader =
        serde_json::from_value(value).map_err(|e| Error::format(&path, e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(Error::format(
            &path,
            format!("unsupported dtype '{}', expected '{DTYPE}'", header.dtype),
        ));
    }
    Ok(header)
}

fn read_f32le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(Error::Size {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() / 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_f32le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a container directory into a validated [`Recording`].
pub fn load_recording(dir: impl AsRef<Path>) -> Result<Recording> {
    let dir = dir.as_ref();
    let header = read_header(dir)?;
    let ecog = read_f32le(
        &dir.join(ECOG_FILE),
        header.n_channels * header.n_ecog_samples,
    )?;
    let glove = read_f32le(&dir.join(GLOVE_FILE), N_FINGERS * header.n_glove_samples)?;
    // Channel-major on disk is exactly nalgebra's column-major layout.
    let ecog = DMatrix::from_vec(header.n_ecog_samples, header.n_channels, ecog);
    let glove = DMatrix::from_vec(header.n_glove_samples, N_FINGERS, glove);
    Recording::from_matrices(
        header.subject_id,
        ecog,
        header.ecog_rate_hz,
        glove,
        header.glove_rate_hz,
        header.channel_labels,
    )
}

/// Writes a recording as a container directory, creating it if needed.
///
/// Values are narrowed to `f32`; recordings whose samples are already
/// `f32`-representable round-trip exactly.
pub fn save_recording(recording: &Recording, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = ContainerHeader {
        subject_id: recording.subject_id().to_string(),
        n_channels: recording.n_channels(),
        n_ecog_samples: recording.n_ecog_samples(),
        n_glove_samples: recording.n_glove_samples(),
        ecog_rate_hz: recording.ecog_rate(),
        glove_rate_hz: recording.glove_rate(),
        dtype: DTYPE.to_string(),
        channel_labels: Some(recording.channel_labels().to_vec()),
    };
    let path = dir.join(HEADER_FILE);
    let mut text = serde_json::to_string_pretty(&header).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    write_f32le(&dir.join(ECOG_FILE), recording.ecog().as_slice())?;
    write_f32le(&dir.join(GLOVE_FILE), recording.glove().as_slice())
}
