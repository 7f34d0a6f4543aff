//! Library results checked against independently computed oracles:
//! explicit loops, Monte Carlo estimates and paired training comparisons.

mod common;

use std::sync::Arc;

use ndarray::{Array1, Array2, Array4};
use proptest::prelude::*;
use rand::Rng;

use common::*;
use pipeinv::datasets::loaders::bundled_digits;
use pipeinv::datasets::{
    normalize_and_resize, pixel_variance, rescale_unit_interval, stratified_holdout, stratified_subsample, synthetic_pipeline_views, LabeledImageSet,
    SingleView, TransformSpec, View,
};
use pipeinv::encoders::{EncoderSpec, ModelMetadata, Paradigm, ProjectionHeadSpec, ProjectionKind, TrainedModel};
use pipeinv::evaluation::{
    accuracy, linear_probe_transfer, minibatch_cka, minibatch_cka_with, mutual_agreement, predict, unbiased_hsic, BatchAssignment, CkaConfig,
    PredictionSet, ProbeConfig,
};
use pipeinv::objectives::{contrastive_terms, critic_scores, nce_direction_loss, ObjectiveConfig, ScoreMatrix};
use pipeinv::training::{train_mpsl, train_upsl, EncoderChoice, EncoderPreset, TrainConfig};

// ------------------------------------------------------------------ datasets

proptest! {
    #[test]
    fn rescale_maps_to_unit_interval_preserving_order(values in prop::collection::vec(3.0f32..7.0, 2..40)) {
        prop_assume!(values.iter().any(|&v| v != values[0]));
        let out = rescale_unit_interval(&Array1::from(values.clone())).unwrap();
        let (lo, hi) = out.iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assert_eq!(lo, 0.0);
        prop_assert_eq!(hi, 1.0);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
    }
}

#[test]
fn smoothing_view_has_lower_variance_than_identity() {
    let digits = normalize_and_resize(&bundled_digits().select(&(0..200).collect::<Vec<_>>()), 16).unwrap();
    let views = synthetic_pipeline_views(&digits, &[TransformSpec::GaussianSmooth { sigma: 2.0 }, TransformSpec::Identity], 0).unwrap();
    let (a, b) = (&views.views[0], &views.views[1]);
    assert_ne!(a.images(), b.images());
    // variance by explicit accumulation
    let var = |set: &LabeledImageSet| {
        let v: Vec<f64> = set.images().iter().map(|&x| x as f64).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
    };
    assert!(var(a) < var(b));
    assert!((pixel_variance(a) - var(a)).abs() < 1e-9);
}

// ---------------------------------------------------------------- objectives

#[test]
fn critic_on_first_basis_vector() {
    let mut e = Array2::<f64>::zeros((1, 64));
    e[[0, 0]] = 1.0;
    let s = critic_scores(e.view(), e.view(), &ObjectiveConfig::default()).unwrap();
    let raw = 1.0 / 64f64.sqrt();
    assert_eq!(s.raw[[0, 0]], raw);
    assert!((s.clipped[[0, 0]] - 10.0 * (raw / 10.0).tanh()).abs() < 1e-15);
    assert!((s.clipped[[0, 0]] - 0.12499).abs() < 1e-5);
}

/// `mean_n [log Σ_{m≠n} exp(s_nm) − s_nn]` written as a per-row sum.
fn nce_oracle(s: &Array2<f64>, include_positive: bool) -> f64 {
    let n = s.nrows();
    let mut total = 0.0;
    for r in 0..n {
        let mut denom = 0.0;
        for m in 0..n {
            if include_positive || m != r {
                denom += s[[r, m]].exp();
            }
        }
        total += denom.ln() - s[[r, r]];
    }
    total / n as f64
}

#[test]
fn nce_direction_matches_row_sum_oracle() {
    let mut r = rng(11);
    for include_positive in [false, true] {
        for _ in 0..20 {
            let s = normal_matrix(&mut r, 8, 8) * 3.0;
            let got = nce_direction_loss(&ScoreMatrix::from_scores(s.clone(), include_positive)).unwrap();
            assert!((got - nce_oracle(&s, include_positive)).abs() < 1e-6);
        }
    }
}

#[test]
fn contrastive_composes_both_directions_and_penalty() {
    let mut r = rng(12);
    for _ in 0..20 {
        let n = r.random_range(2..=8);
        let d = r.random_range(1..=16);
        let (hi, hj) = (normal_matrix(&mut r, n, d) * 3.0, normal_matrix(&mut r, n, d) * 3.0);
        let cfg = ObjectiveConfig::default();
        // scores by hand
        let scale = 1.0 / (d as f64).sqrt();
        let raw = Array2::from_shape_fn((n, n), |(a, b)| (0..d).map(|k| hi[[a, k]] * hj[[b, k]]).sum::<f64>() * scale);
        let clipped = raw.mapv(|v| cfg.clip * (v / cfg.clip).tanh());
        let penalty = cfg.penalty_weight * raw.mapv(|v| v * v).sum() / (n * n) as f64;
        let want = nce_oracle(&clipped, false) + nce_oracle(&clipped.t().to_owned(), false) + penalty;
        let got = contrastive_terms(hi.view(), hj.view(), &cfg).unwrap();
        assert!((got.loss - want).abs() < 1e-9, "{} vs {want}", got.loss);
        assert!((got.penalty - penalty).abs() < 1e-12);
    }
}

// ------------------------------------------------------------------- metrics

#[test]
fn independent_random_predictors_agree_at_one_percent() {
    let mut r = rng(13);
    let n = 200_000;
    let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..10)).collect();
    let a: Vec<usize> = (0..n).map(|_| r.random_range(0..10)).collect();
    let b: Vec<usize> = (0..n).map(|_| r.random_range(0..10)).collect();
    let got = mutual_agreement(
        &PredictionSet::from_labels(a.clone(), truth.clone(), "a").unwrap(),
        &PredictionSet::from_labels(b.clone(), truth.clone(), "b").unwrap(),
    )
    .unwrap();
    assert_eq!(got, count_agreement(&a, &b, &truth));
    // Monte Carlo oracle: mean of per-draw indicator, standard error √(p(1−p)/n)
    let se = (0.01f64 * 0.99 / n as f64).sqrt();
    assert!((got - 0.01).abs() < 5.0 * se, "{got}");
}

fn noise_view(n: usize, seed: u64) -> SingleView {
    let mut r = rng(seed);
    let images = Array4::from_shape_fn((n, 8, 8, 1), |_| r.random_range(0.0f32..1.0));
    let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
    SingleView::from_set(Arc::new(LabeledImageSet::new(images, labels, 10).unwrap()))
}

#[test]
fn probe_on_pure_noise_is_at_chance() {
    let spec = EncoderSpec::compact(1, 8);
    let meta = ModelMetadata { paradigm: Paradigm::Upsl, seed: 3, fold: 0, config_hash: String::new(), view: "a".into(), class_count: 10, lambda: None };
    let model = TrainedModel::new(&spec, ProjectionHeadSpec { kind: ProjectionKind::Identity, width: 16 }, meta, 3).unwrap();
    let report = linear_probe_transfer(&model, &noise_view(2000, 1), &noise_view(2000, 2), &ProbeConfig::default()).unwrap();
    assert!((report.accuracy - 0.1).abs() <= 0.03, "{}", report.accuracy);
    assert_eq!(report.hash_before, report.hash_after);
}

// ----------------------------------------------------------------------- CKA

#[test]
fn hsic_matches_u_statistic_and_loop_oracles_at_n4() {
    let mut r = rng(14);
    for _ in 0..50 {
        let n = r.random_range(4..=7);
        let (x, y) = (normal_matrix(&mut r, n, 3), normal_matrix(&mut r, n, 2));
        let (k, l) = (x.dot(&x.t()), y.dot(&y.t()));
        let got = unbiased_hsic(k.view(), l.view()).unwrap();
        assert!((got - hsic_double_loop(k.view(), l.view())).abs() < 1e-10);
        assert!((got - hsic_u_statistic(k.view(), l.view())).abs() < 1e-10 * got.abs().max(1.0));
        assert_eq!(got.to_bits(), unbiased_hsic(l.view(), k.view()).unwrap().to_bits());
    }
}

#[test]
fn hsic_of_independent_representations_is_unbiased() {
    let mut r = rng(15);
    let draws: Vec<f64> = (0..1000)
        .map(|_| {
            let (x, y) = (normal_matrix(&mut r, 8, 4), normal_matrix(&mut r, 8, 4));
            unbiased_hsic(x.dot(&x.t()).view(), y.dot(&y.t()).view()).unwrap()
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let std = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
    assert!(mean.abs() < 0.05 * std, "mean {mean}, std {std}");
}

#[test]
fn independent_wide_representations_have_small_cka() {
    let mut r = rng(16);
    let (x, y) = (normal_matrix(&mut r, 200, 100), normal_matrix(&mut r, 200, 80));
    let v = minibatch_cka(to_f32(&x).view(), to_f32(&y).view(), &CkaConfig::default()).unwrap();
    assert!(v.abs() < 0.1, "{v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cka_is_symmetric_under_a_shared_assignment(seed in 0u64..1000, m in 8usize..40, u1 in 1usize..6, u2 in 1usize..6) {
        let mut r = rng(seed);
        let (x, y) = (to_f32(&normal_matrix(&mut r, m, u1)), to_f32(&normal_matrix(&mut r, m, u2)));
        let batches = BatchAssignment::new(m, &CkaConfig { batch_size: 8, seed }).unwrap();
        let xy = minibatch_cka_with(x.view(), y.view(), &batches).unwrap();
        let yx = minibatch_cka_with(y.view(), x.view(), &batches).unwrap();
        prop_assert_eq!(xy.to_bits(), yx.to_bits());
        prop_assert!((minibatch_cka_with(x.view(), x.view(), &batches).unwrap() - 1.0).abs() < 1e-6);
    }
}

// ------------------------------------------------------------------ training

#[test]
fn mpsl_on_identical_views_matches_upsl() {
    let digits = bundled_digits();
    let keep = stratified_subsample(digits.labels(), 0.3, 0).unwrap();
    let digits = normalize_and_resize(&digits.select(&keep), 16).unwrap();
    let views = synthetic_pipeline_views(&digits, &[TransformSpec::Identity, TransformSpec::Identity], 0).unwrap();
    let (_, holdout) = stratified_holdout(digits.labels(), 30, 0).unwrap();
    let corpus = views.corpus(0, 1, &holdout, 5, 0).unwrap();
    let (train, _) = corpus.fold(0).unwrap();
    let test = corpus.test.distinct_view(View::A);

    let mut cfg = TrainConfig::natural_image(Paradigm::Upsl).with_epochs(12);
    cfg.encoder = EncoderChoice::Preset(EncoderPreset::Compact);
    cfg.batch_size = 32;
    cfg.learning_rate = 1e-3;
    // the merged set holds every image twice, so UPSL gets twice the epochs for an equal step count
    let (mut upsl, mut mpsl) = (Vec::new(), Vec::new());
    for seed in 0..3 {
        let c = TrainConfig { seed, ..cfg.clone() };
        let (u, _) = train_upsl(&train.distinct_view(View::A), None, View::A, &c.clone().with_epochs(24)).unwrap();
        let (m, _) = train_mpsl(&train, None, &TrainConfig { paradigm: Paradigm::Mpsl, ..c }).unwrap();
        upsl.push(accuracy(&predict(&u, &test, "u").unwrap()).unwrap());
        mpsl.push(accuracy(&predict(&m, &test, "m").unwrap()).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (u, m) = (mean(&upsl), mean(&mpsl));
    assert!((u - m).abs() <= 0.02, "UPSL {upsl:?} vs MPSL {mpsl:?}");
}
