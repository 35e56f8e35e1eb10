use ecogdec::decoder::{FeatureRecipe, Pipeline};
use ecogdec::features::compute_am;
use ecogdec::recording::{align_glove_to_bins, samples_per_bin, Recording};
use proptest::collection::vec;
use proptest::prelude::*;

/// Independent sum-of-squares per whole bin.
fn oracle_am(x: &[f64], spb: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0;
    while (k + 1) * spb <= x.len() {
        let mut s = 0.0;
        for i in k * spb..(k + 1) * spb {
            s += x[i] * x[i];
        }
        out.push(s);
        k += 1;
    }
    out
}

fn rate_and_bin() -> impl Strategy<Value = (u32, u32)> {
    prop_oneof![
        Just((1000, 40)),
        Just((1000, 50)),
        Just((500, 40)),
        Just((2000, 25)),
        Just((1200, 10)),
        Just((400, 5)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn scaling_law(xs in vec(-1e4f64..1e4, 0..300), c in -1e3f64..1e3) {
        let base = compute_am(&xs, 1000, 40).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|v| c * v).collect();
        let got = compute_am(&scaled, 1000, 40).unwrap();
        prop_assert_eq!(base.len(), got.len());
        for (b, g) in base.iter().zip(&got) {
            let want = c * c * b;
            prop_assert!((g - want).abs() <= 1e-12 * want.abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn non_negative_and_matches_oracle(
        xs in vec(-1e6f64..1e6, 0..500),
        (rate, bin_ms) in rate_and_bin(),
    ) {
        let spb = samples_per_bin(rate, bin_ms).unwrap();
        let am = compute_am(&xs, rate, bin_ms).unwrap();
        prop_assert!(am.iter().all(|v| *v >= 0.0));
        let oracle = oracle_am(&xs, spb);
        prop_assert_eq!(am.len(), oracle.len());
        for (a, o) in am.iter().zip(&oracle) {
            prop_assert!((a - o).abs() <= 1e-12 * o.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn concatenation_of_whole_bins_is_additive(
        a_bins in 0usize..8,
        b_bins in 0usize..8,
        tail in 0usize..40,
        seed_vals in vec(-100.0f64..100.0, 640 + 40),
    ) {
        let a = &seed_vals[..a_bins * 40];
        let b = &seed_vals[320..320 + b_bins * 40 + tail];
        let joined: Vec<f64> = a.iter().chain(b).copied().collect();
        let mut expect = compute_am(a, 1000, 40).unwrap();
        expect.extend(compute_am(b, 1000, 40).unwrap());
        prop_assert_eq!(compute_am(&joined, 1000, 40).unwrap(), expect);
    }

    #[test]
    fn bin_count_arithmetic(n in 0usize..200_000, (rate, bin_ms) in rate_and_bin()) {
        let spb = (rate as usize * bin_ms as usize) / 1000;
        prop_assert_eq!(samples_per_bin(rate, bin_ms).unwrap(), spb);
        let x = vec![0.5; n];
        prop_assert_eq!(compute_am(&x, rate, bin_ms).unwrap().len(), n / spb);
    }

    #[test]
    fn pipelines_and_targets_agree_on_bin_count(
        n_bins in 2usize..40,
        extra in 0usize..40,
        glove_delta in -1i64..=1,
    ) {
        let n = n_bins * 40 + extra;
        let n_glove = (n_bins as i64 + glove_delta) as usize;
        let channels: Vec<Vec<f64>> = (0..2)
            .map(|c| (0..n).map(|i| (i as f64 * (0.37 + c as f64)).sin()).collect())
            .collect();
        let rec = Recording::new("p", channels, 1000, vec![vec![0.0; n_glove]; 5], 25, None).unwrap();
        let bins = rec.usable_bins(40).unwrap();
        prop_assert_eq!(bins, n_bins.min(n_glove));
        prop_assert_eq!(align_glove_to_bins(&rec, 40).unwrap()[0].len(), bins);
        for pipeline in Pipeline::ALL {
            let (_, feats) = FeatureRecipe::fit(&rec, pipeline, 40).unwrap();
            prop_assert_eq!(feats.n_bins(), bins);
        }
    }
}

#[test]
fn ten_minutes_at_one_kilohertz_is_15000_bins() {
    let x = vec![1.0; 600_000];
    assert_eq!(compute_am(&x, 1000, 40).unwrap().len(), 15000);
    assert_eq!(samples_per_bin(1000, 40).unwrap(), 40);
}
