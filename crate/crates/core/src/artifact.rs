//! JSON model artifact.
//!
//! Floating-point numbers are written with 17 significant digits so that a
//! saved model reloads bit-for-bit and repeated saves are byte-identical.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::decoder::{DecoderModel, Pipeline, TrainConfig, TrainedDecoder};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "ecogdec-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub subject_id: String,
    pub pipeline: Pipeline,
    pub config: TrainConfig,
    pub decoders: Vec<TrainedDecoder>,
}

impl ModelArtifact {
    pub fn new(
        subject_id: impl Into<String>,
        pipeline: Pipeline,
        config: TrainConfig,
        decoders: Vec<TrainedDecoder>,
    ) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            subject_id: subject_id.into(),
            pipeline,
            config,
            decoders,
        }
    }

    pub fn models(&self) -> Vec<DecoderModel> {
        self.decoders.iter().map(|d| d.model.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
        self.serialize(&mut ser).map_err(|source| Error::Json {
            path: "<model>".into(),
            source,
        })?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: ModelArtifact = serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<model>".into(),
            source,
        })?;
        artifact.check()?;
        Ok(artifact)
    }

    fn check(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Validation(format!(
                "unsupported model format '{}', expected '{MODEL_FORMAT}'",
                self.format
            )));
        }
        for d in &self.decoders {
            d.model.validate()?;
            if d.model.recipe.pipeline() != self.pipeline {
                return Err(Error::Validation(format!(
                    "{} model uses the {} pipeline inside a {} artifact",
                    d.model.finger,
                    d.model.recipe.pipeline(),
                    self.pipeline
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

/// Compact JSON with every `f64` printed as `d.dddddddddddddddde±x`.
struct SignificantDigits;

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}
