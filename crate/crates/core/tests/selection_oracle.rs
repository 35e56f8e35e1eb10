use ecogdec::decoder::{FeatureRecipe, Pipeline};
use ecogdec::eval::pearson;
use ecogdec::features::{ColumnMeta, FeatureMatrix};
use ecogdec::recording::Finger;
use ecogdec::selection::{stepwise_select, SelectionConfig, SelectionTrace};
use ecogdec::synth::{generate_synthetic, Planting, SynthConfig, SynthMode};
use ecogdec::wiener::{embed_tap_delays, fit_wiener};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const PLANTED: usize = 7;

fn assert_trace_invariant(trace: &SelectionTrace) {
    let mut prev = 0.0;
    for s in &trace.steps {
        assert!(s.validation_r > prev);
        assert!(s.validation_r - prev >= trace.config.min_improvement);
        prev = s.validation_r;
    }
    assert_eq!(trace.steps.len(), trace.final_columns.len());
    assert!(trace.steps.len() <= trace.config.max_features);
}

fn matrix_from(cols: &[Vec<f64>], metas: Vec<ColumnMeta>) -> FeatureMatrix {
    let n = cols[0].len();
    FeatureMatrix::new(
        DMatrix::from_iterator(n, cols.len(), cols.iter().flatten().copied()),
        40,
        metas,
    )
    .unwrap()
}

/// Twenty FD columns from a noiseless synthetic recording. Column 7 is the
/// AM series the thumb target was generated from; the rest come from
/// channels carrying background only.
fn planted_problem() -> (FeatureMatrix, Vec<f64>) {
    let cfg = SynthConfig {
        duration_s: 240,
        noise_std: 0.0,
        informative: vec![Planting {
            finger: Finger::Thumb,
            channel: 4,
            band: Some("gamma".into()),
            weight: 1.0,
        }],
        ..SynthConfig::new(11, 8, SynthMode::Band)
    };
    let (rec, truth) = generate_synthetic(&cfg).unwrap();
    let (_, fd) = FeatureRecipe::fit(&rec, Pipeline::Fd, 40).unwrap();
    let planted = fd
        .columns()
        .iter()
        .position(|c| *c == ColumnMeta::ChannelBand { channel: 4, band: "gamma".into() })
        .unwrap();
    let mut others = (0..fd.n_columns()).filter(|j| {
        !matches!(&fd.columns()[*j], ColumnMeta::ChannelBand { channel: 4, .. })
    });
    let mut cols = Vec::new();
    let mut metas = Vec::new();
    for slot in 0..20 {
        let j = if slot == PLANTED { planted } else { others.next().unwrap() };
        cols.push(fd.column(j).to_vec());
        metas.push(fd.columns()[j].clone());
    }
    (matrix_from(&cols, metas), truth.noiseless_target[0].clone())
}

/// Validation r of a decoder refitted on one column, computed without the
/// selection module.
fn single_column_score(col: &[f64], target: &[f64], taps: usize, fraction: f64) -> Option<f64> {
    let n = col.len();
    let boundary = (n as f64 * fraction).floor() as usize;
    let train = &col[..boundary];
    let mean = train.iter().sum::<f64>() / boundary as f64;
    let sd = (train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / boundary as f64).sqrt();
    let z = DMatrix::from_iterator(n, 1, col.iter().map(|v| (v - mean) / sd));
    let design = embed_tap_delays(&z, taps).unwrap();
    let train_rows = boundary - taps + 1;
    let w = fit_wiener(&design.rows(0, train_rows).into_owned(), &target[taps - 1..boundary]).unwrap();
    let val = design.rows(boundary, n - taps + 1 - boundary).into_owned();
    let pred: Vec<f64> = (val * nalgebra::DVector::from_vec(w)).iter().copied().collect();
    pearson(&pred, &target[boundary + taps - 1..]).ok()
}

#[test]
fn planted_column_found_first_and_agrees_with_exhaustive_oracle() {
    let (features, target) = planted_problem();
    let config = SelectionConfig::default();
    let trace = stepwise_select(&features, &target, &config).unwrap();
    assert_trace_invariant(&trace);
    assert_eq!(trace.steps[0].column, features.columns()[PLANTED]);
    assert!(trace.steps[0].validation_r >= 0.99, "{}", trace.steps[0].validation_r);

    let scores: Vec<f64> = (0..features.n_columns())
        .map(|j| single_column_score(features.column(j), &target, config.taps, config.train_fraction).unwrap_or(f64::MIN))
        .collect();
    let best = (0..scores.len()).fold(0, |b, j| if scores[j] > scores[b] { j } else { b });
    assert_eq!(best, PLANTED);
    assert!((scores[PLANTED] - trace.steps[0].validation_r).abs() <= 1e-9);
}

#[test]
fn permuting_columns_permutes_the_selection() {
    let (features, target) = planted_problem();
    let n = features.n_columns();
    let perm: Vec<usize> = (0..n).map(|j| (j * 7 + 3) % n).collect();
    let cols: Vec<Vec<f64>> = perm.iter().map(|&j| features.column(j).to_vec()).collect();
    let metas = perm.iter().map(|&j| features.columns()[j].clone()).collect();
    let permuted = matrix_from(&cols, metas);
    let a = stepwise_select(&features, &target, &SelectionConfig::default()).unwrap();
    let b = stepwise_select(&permuted, &target, &SelectionConfig::default()).unwrap();
    assert_eq!(a.final_columns, b.final_columns);
    assert_trace_invariant(&b);
}

#[test]
fn noise_only_runs_respect_the_trace_invariant() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let n = 1200;
        let cols: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..n).map(|_| draw().powi(2)).collect())
            .collect();
        let target: Vec<f64> = (0..n).map(|_| draw()).collect();
        let metas = (0..20).map(|channel| ColumnMeta::RawChannel { channel }).collect();
        let trace = stepwise_select(&matrix_from(&cols, metas), &target, &SelectionConfig::default()).unwrap();
        assert_trace_invariant(&trace);
    }
}

#[test]
fn duplicated_informative_columns_resolve_to_lowest_index() {
    let (features, target) = planted_problem();
    let mut cols: Vec<Vec<f64>> = (0..features.n_columns()).map(|j| features.column(j).to_vec()).collect();
    cols[3] = features.column(PLANTED).to_vec();
    cols[9] = features.column(PLANTED).to_vec();
    let metas = (0..cols.len()).map(|channel| ColumnMeta::RawChannel { channel }).collect();
    let trace = stepwise_select(&matrix_from(&cols, metas), &target, &SelectionConfig::default()).unwrap();
    assert_eq!(trace.steps[0].column, ColumnMeta::RawChannel { channel: 3 });
    assert_trace_invariant(&trace);
}
