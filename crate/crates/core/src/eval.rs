//! Pearson scoring, per-subject correlation tables and time-course export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderModel, Pipeline};
use crate::error::{Error, Result};
use crate::recording::{align_glove_to_bins, Finger, Recording, SplitSpec};

/// Sample Pearson correlation; an error when either input is constant.
pub fn pearson(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "correlating {} predictions with {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::TooShort {
            what: "samples for correlation",
            needed: 2,
            got: pred.len(),
        });
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("an input has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One report row: per-finger validation correlations for one
/// subject and feature pipeline. `None` marks an undefined correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub subject_id: String,
    pub pipeline: Pipeline,
    pub r: [Option<f64>; 5],
}

impl ReportRow {
    /// Mean over the five fingers, undefined if any finger is.
    pub fn average(&self) -> Option<f64> {
        let vals: Option<Vec<f64>> = self.r.iter().copied().collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    pub taps: usize,
    pub bin_ms: u32,
    pub train_fraction: f64,
}

pub const REPORT_HEADER: &str = "subject\tpipeline\tthumb\tindex\tmiddle\tring\tlittle\taverage";
pub const NOT_AVAILABLE: &str = "n/a";

fn fmt_r(r: Option<f64>, digits: usize) -> String {
    match r {
        Some(v) => format!("{v:.digits$}"),
        None => NOT_AVAILABLE.to_string(),
    }
}

impl EvaluationReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{}\t{}", row.subject_id, row.pipeline.name());
            for r in row.r {
                let _ = write!(out, "\t{}", fmt_r(r, 4));
            }
            let _ = writeln!(out, "\t{}", fmt_r(row.average(), 4));
        }
        out
    }

    /// Aligned text table in thumb-to-little column order, followed by notes on
    /// how predictions were aligned and how PCA was fitted.
    pub fn to_text(&self) -> String {
        let subj_w = self
            .rows
            .iter()
            .map(|r| r.subject_id.len())
            .max()
            .unwrap_or(0)
            .max("Subj.".len());
        let feat_w = "PCA-ECoG AM".len();
        let mut out = String::new();
        let _ = write!(out, "{:<subj_w$}  {:<feat_w$}", "Subj.", "AM feature");
        for h in ["Thumb", "Index", "Middle", "Ring", "Little", "Av."] {
            let _ = write!(out, "  {h:>6}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<subj_w$}  {:<feat_w$}", row.subject_id, row.pipeline.label());
            for r in row.r.iter().copied().chain([row.average()]) {
                let _ = write!(out, "  {:>6}", fmt_r(r, 2));
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "\nValidation split: last {:.0}% of bins. Prediction i is scored against target bin \
             (validation start + {} + i); the first {} validation bins only seed the tap history.",
            (1.0 - self.train_fraction) * 100.0,
            self.taps - 1,
            self.taps - 1
        );
        let _ = writeln!(out, "Bin width {} ms, {} taps.", self.bin_ms, self.taps);
        if self.rows.iter().any(|r| r.pipeline == Pipeline::Pca) {
            let _ = writeln!(
                out,
                "PCA rows: the basis was fitted on the whole recording, validation samples included."
            );
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Validation-split predictions and targets for one finger, aligned bin for
/// bin. `first_bin` is the target bin of the first element.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationTrace {
    pub first_bin: usize,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
}

/// Predicts with `model` and keeps the part scored on the validation split.
pub fn validation_trace(
    model: &DecoderModel,
    recording: &Recording,
    split: &SplitSpec,
) -> Result<ValidationTrace> {
    let bin_ms = model.recipe.bin_ms();
    let n_bins = recording.usable_bins(bin_ms)?;
    let targets = align_glove_to_bins(recording, bin_ms)?;
    let pred = model.predict(recording)?;
    let taps = model.taps;
    let boundary = split.boundary(n_bins)?;
    if n_bins < boundary + taps {
        return Err(Error::TooShort {
            what: "validation bins for scoring",
            needed: taps,
            got: n_bins - boundary,
        });
    }
    // pred[i] estimates bin i + taps - 1.
    let predicted = pred[boundary..n_bins - taps + 1].to_vec();
    let first_bin = boundary + taps - 1;
    let truth = targets[model.finger.index()][first_bin..n_bins].to_vec();
    Ok(ValidationTrace {
        first_bin,
        predicted,
        truth,
    })
}

/// Scores up to five finger models on the validation split of `recording`.
///
/// Fingers without a model, or whose correlation is undefined, are `None`.
pub fn evaluate(
    models: &[DecoderModel],
    recording: &Recording,
    split: &SplitSpec,
) -> Result<ReportRow> {
    let pipeline = models
        .first()
        .map(|m| m.recipe.pipeline())
        .ok_or_else(|| Error::Config("no models to evaluate".into()))?;
    if models.iter().any(|m| m.recipe.pipeline() != pipeline) {
        return Err(Error::Config("models mix feature pipelines".into()));
    }
    let mut r = [None; 5];
    for finger in Finger::ALL {
        if let Some(model) = models.iter().find(|m| m.finger == finger) {
            let trace = validation_trace(model, recording, split)?;
            r[finger.index()] = pearson(&trace.predicted, &trace.truth).ok();
        }
    }
    Ok(ReportRow {
        subject_id: recording.subject_id().to_string(),
        pipeline,
        r,
    })
}

/// Writes `time_s`, `true`, `predicted` columns; time is `bin × bin_ms`.
pub fn export_timecourse(
    pred: &[f64],
    truth: &[f64],
    bin_ms: u32,
    first_bin: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let mut out = String::from("time_s\ttrue\tpredicted\n");
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        let time = (first_bin + i) as f64 * bin_ms as f64 / 1000.0;
        let _ = writeln!(out, "{time}\t{t}\t{p}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Renders a self-contained SVG line chart of true (dashed blue) and
/// predicted (solid red) trajectories.
pub fn timecourse_svg(pred: &[f64], truth: &[f64], bin_ms: u32, first_bin: usize, title: &str) -> String {
    let (w, h, margin) = (900.0, 300.0, 40.0);
    let n = pred.len().max(1);
    let (lo, hi) = pred
        .iter()
        .chain(truth)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let x = |i: usize| margin + (w - 2.0 * margin) * i as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| h - margin - (h - 2.0 * margin) * (v - lo) / (hi - lo);
    let path = |series: &[f64]| {
        series
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let t0 = first_bin as f64 * bin_ms as f64 / 1000.0;
    let t1 = (first_bin + n - 1) as f64 * bin_ms as f64 / 1000.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{margin}" y="20" font-family="sans-serif" font-size="13">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="grey"/>"#,
        w - 2.0 * margin,
        h - 2.0 * margin
    );
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="blue" stroke-width="1" stroke-dasharray="4 3" points="{}"/>"#,
        path(truth)
    );
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="red" stroke-width="1.2" points="{}"/>"#,
        path(pred)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{margin}" y="{}" font-family="sans-serif" font-size="11">{t0:.2} s</text>"#,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{t1:.2} s</text>"#,
        w - margin,
        h - 12.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
