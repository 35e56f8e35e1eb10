//! Greedy forward selection of feature columns, scored by the validation
//! correlation of a refitted tap-delay Wiener decoder.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::pearson;
use crate::features::{ColumnMeta, FeatureMatrix};
use crate::recording::SplitSpec;
use crate::wiener::{solve_symmetric_pinv, PINV_RTOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub max_features: usize,
    pub min_improvement: f64,
    pub train_fraction: f64,
    pub taps: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            max_features: 10,
            min_improvement: 0.01,
            train_fraction: 3.0 / 5.0,
            taps: 25,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_features == 0 {
            return Err(Error::Config("max_features must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.min_improvement) {
            return Err(Error::Config(format!(
                "min_improvement must lie in [0, 1), got {}",
                self.min_improvement
            )));
        }
        if self.taps == 0 {
            return Err(Error::Config("taps must be at least 1".into()));
        }
        SplitSpec::new(self.train_fraction).map(|_| ())
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub column: ColumnMeta,
    pub validation_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    pub final_columns: Vec<ColumnMeta>,
    pub config: SelectionConfig,
}

impl SelectionTrace {
    /// Final validation correlation, 0 when nothing was selected.
    pub fn final_r(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.validation_r)
    }
}

/// Holds the validation targets; the selection loop only ever sees the
/// scalar it returns.
pub struct ValidationScorer {
    truth: Vec<f64>,
}

impl ValidationScorer {
    fn new(truth: Vec<f64>) -> Result<Self> {
        let mean = truth.iter().sum::<f64>() / truth.len() as f64;
        if truth.len() < 2 || truth.iter().all(|v| *v == mean) {
            return Err(Error::DegenerateTarget(
                "target has zero variance on the validation split".into(),
            ));
        }
        Ok(Self { truth })
    }

    /// Pearson r of `predicted` against the held-out target, `None` when the
    /// prediction is constant.
    pub fn score(&self, predicted: &[f64]) -> Option<f64> {
        pearson(predicted, &self.truth).ok()
    }
}

/// Lagged copies of one z-scored feature column over a bin range, laid out
/// so row `r` is bin `start + r + taps - 1`.
fn lag_block(z: &[f64], start: usize, end: usize, taps: usize) -> DMatrix<f64> {
    let rows = end - start - taps + 1;
    DMatrix::from_fn(rows, taps, |r, lag| z[start + r + taps - 1 - lag])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `lag_block(x)ᵀ · lag_block(y)` over `[start, end)`.
///
/// Lag blocks are shifted copies of one series, so entry (a+1, b+1) differs
/// from (a, b) by one sample entering and one leaving the window. Only the
/// first row and column need full dot products.
fn lag_gram(x: &[f64], y: &[f64], start: usize, end: usize, taps: usize) -> DMatrix<f64> {
    let first = start + taps - 1;
    let rows = end - first;
    let window = |lag: usize| -> std::ops::Range<usize> { first - lag..first - lag + rows };
    let mut g = DMatrix::zeros(taps, taps);
    for b in 0..taps {
        g[(0, b)] = dot(&x[window(0)], &y[window(b)]);
    }
    for a in 1..taps {
        g[(a, 0)] = dot(&x[window(a)], &y[window(0)]);
    }
    let before = first - 1;
    let last = end - 1;
    for a in 1..taps {
        for b in 1..taps {
            g[(a, b)] = g[(a - 1, b - 1)] + x[before - (a - 1)] * y[before - (b - 1)]
                - x[last - (a - 1)] * y[last - (b - 1)];
        }
    }
    g
}

/// `lag_block(x)ᵀ · d`.
fn lag_cross(x: &[f64], d: &[f64], start: usize, taps: usize) -> DVector<f64> {
    let first = start + taps - 1;
    DVector::from_fn(taps, |lag, _| dot(&x[first - lag..first - lag + d.len()], d))
}

/// Column sums of `lag_block(x)`, i.e. its products with the intercept.
fn lag_sums(x: &[f64], start: usize, end: usize, taps: usize) -> DVector<f64> {
    let first = start + taps - 1;
    let rows = end - first;
    DVector::from_fn(taps, |lag, _| x[first - lag..first - lag + rows].iter().sum())
}

fn zscore_with(col: &[f64], train_end: usize) -> Vec<f64> {
    let (mean, std) = train_stats(&col[..train_end]);
    col.iter().map(|v| (v - mean) / std).collect()
}

/// Mean and standard deviation of a training segment; zero spread maps to 1
/// so constant columns stay finite.
pub(crate) fn train_stats(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
}

/// Normal-equation pieces of the currently selected set, intercept first.
struct Selected {
    columns: Vec<usize>,
    validation: DMatrix<f64>,
    gram: DMatrix<f64>,
    cross: DVector<f64>,
}

/// A candidate column's products with itself, the target and each selected
/// block. The last grows by one block per accepted step.
struct Candidate {
    column: usize,
    self_gram: DMatrix<f64>,
    cross: DVector<f64>,
    off: DMatrix<f64>,
}

impl Selected {
    fn intercept_only(train_rows: usize, val_rows: usize, d: &[f64]) -> Self {
        Self {
            columns: Vec::new(),
            validation: DMatrix::from_element(val_rows, 1, 1.0),
            gram: DMatrix::from_element(1, 1, train_rows as f64),
            cross: DVector::from_element(1, d.iter().sum()),
        }
    }

    fn assemble(&self, c: &Candidate) -> (DMatrix<f64>, DVector<f64>) {
        let ps = self.gram.nrows();
        let pc = c.self_gram.nrows();
        let mut gram = DMatrix::zeros(ps + pc, ps + pc);
        gram.view_mut((0, 0), (ps, ps)).copy_from(&self.gram);
        gram.view_mut((0, ps), (ps, pc)).copy_from(&c.off);
        gram.view_mut((ps, 0), (pc, ps)).copy_from(&c.off.transpose());
        gram.view_mut((ps, ps), (pc, pc)).copy_from(&c.self_gram);
        let mut rhs = DVector::zeros(ps + pc);
        rhs.rows_mut(0, ps).copy_from(&self.cross);
        rhs.rows_mut(ps, pc).copy_from(&c.cross);
        (gram, rhs)
    }

    fn score(
        &self,
        c: &Candidate,
        z: &[f64],
        boundary: usize,
        taps: usize,
        scorer: &ValidationScorer,
    ) -> Option<f64> {
        let ps = self.gram.nrows();
        let (gram, rhs) = self.assemble(c);
        let w = solve_symmetric_pinv(gram, &rhs, PINV_RTOL);
        let mut pred = &self.validation * w.rows(0, ps);
        let first = boundary + taps - 1;
        for (r, p) in pred.iter_mut().enumerate() {
            let s = first + r;
            *p += (0..taps).map(|lag| w[ps + lag] * z[s - lag]).sum::<f64>();
        }
        scorer.score(pred.as_slice())
    }

    fn accept(&mut self, c: &Candidate, val_block: &DMatrix<f64>) {
        let (gram, cross) = self.assemble(c);
        self.gram = gram;
        self.cross = cross;
        self.validation = hstack(&self.validation, val_block);
        self.columns.push(c.column);
    }
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Forward stepwise selection over the columns of `features`.
///
/// Each round refits the decoder on the training prefix for every unselected
/// candidate and keeps the one with the best validation correlation, provided
/// it improves on the current score by at least `min_improvement`. Ties go to
/// the lowest column index.
pub fn stepwise_select(
    features: &FeatureMatrix,
    target: &[f64],
    config: &SelectionConfig,
) -> Result<SelectionTrace> {
    config.validate()?;
    let n = features.n_bins();
    let taps = config.taps;
    if n != target.len() {
        return Err(Error::Shape(format!(
            "{n} feature bins but {} target values",
            target.len()
        )));
    }
    if n < 10 * taps {
        return Err(Error::TooShort {
            what: "bins for stepwise selection (10 × taps)",
            needed: 10 * taps,
            got: n,
        });
    }
    let boundary = config.split().boundary(n)?;
    let scorer = ValidationScorer::new(target[boundary + taps - 1..].to_vec())?;

    let z: Vec<Vec<f64>> = (0..features.n_columns())
        .into_par_iter()
        .map(|j| zscore_with(features.column(j), boundary))
        .collect();

    let d_train = &target[taps - 1..boundary];
    let mut selected = Selected::intercept_only(d_train.len(), n - boundary - taps + 1, d_train);
    let mut candidates: Vec<Candidate> = (0..features.n_columns())
        .into_par_iter()
        .map(|j| Candidate {
            column: j,
            self_gram: lag_gram(&z[j], &z[j], 0, boundary, taps),
            cross: lag_cross(&z[j], d_train, 0, taps),
            off: DMatrix::from_row_slice(1, taps, lag_sums(&z[j], 0, boundary, taps).as_slice()),
        })
        .collect();
    let mut steps = Vec::new();
    let mut current = 0.0;

    while selected.columns.len() < config.max_features && !candidates.is_empty() {
        let scores: Vec<Option<f64>> = candidates
            .par_iter()
            .map(|c| selected.score(c, &z[c.column], boundary, taps, &scorer))
            .collect();

        // Candidates stay in column order, so a strict comparison keeps the
        // lowest index on ties.
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in scores.iter().enumerate() {
            if let Some(r) = *s {
                if best.is_none_or(|(_, b)| r > b) {
                    best = Some((i, r));
                }
            }
        }
        let Some((i, r)) = best else { break };
        if r - current < config.min_improvement {
            break;
        }
        let chosen = candidates.remove(i);
        let j = chosen.column;
        selected.accept(&chosen, &lag_block(&z[j], boundary, n, taps));
        candidates.par_iter_mut().for_each(|c| {
            let block = lag_gram(&z[j], &z[c.column], 0, boundary, taps);
            c.off = vstack(&c.off, &block);
        });
        steps.push(SelectionStep {
            column: features.columns()[j].clone(),
            validation_r: r,
        });
        current = r;
    }

    Ok(SelectionTrace {
        final_columns: steps.iter().map(|s| s.column.clone()).collect(),
        steps,
        config: *config,
    })
}
