mod common;

use common::{random, small_config};
use ngram_forest_core::autodiff::{Mode, ParamStore, Tape, Tensor};
use ngram_forest_core::model::{
    argmax, attention_pool, batch_loss, predict, AttentionParams, ClassifierParams, EncoderKind, MemoryCellVariant,
    Model, NORMALIZATION_TOLERANCE,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn attention(width: usize, da: usize, seed: u64) -> (ParamStore, AttentionParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let projection = store.add("wa", random(da, width, &mut rng)).unwrap();
    let context = store.add("v", random(1, da, &mut rng)).unwrap();
    (store, AttentionParams { projection, context })
}

fn pool(store: &ParamStore, p: &AttentionParams, h: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let (a, t) = attention_pool(&mut tape, store, p, hv).unwrap();
    (tape.value(a).data().to_vec(), tape.value(t).data().to_vec())
}

#[test]
fn single_unit_gets_all_weight() {
    let (store, p) = attention(4, 3, 1);
    let h = random(1, 4, &mut ChaCha8Rng::seed_from_u64(2));
    let (alpha, t) = pool(&store, &p, &h);
    assert_eq!(alpha, vec![1.0]);
    assert_eq!(t, h.row(0));
}

#[test]
fn zero_context_is_uniform() {
    let (mut store, p) = attention(4, 3, 3);
    *store.value_mut(p.context) = Tensor::zeros(1, 3);
    let h = random(6, 4, &mut ChaCha8Rng::seed_from_u64(4));
    let (alpha, _) = pool(&store, &p, &h);
    for a in alpha {
        assert!((a - 1.0 / 6.0).abs() < 1e-15);
    }
}

#[test]
fn identical_rows_share_weight() {
    let (store, p) = attention(3, 2, 5);
    let row = [0.3, -0.2, 0.9];
    let h = Tensor::from_rows(&[&row[..], &[1.0, 1.0, 1.0], &row[..]]).unwrap();
    let (alpha, _) = pool(&store, &p, &h);
    assert_eq!(alpha[0], alpha[2]);
}

#[test]
fn empty_units_rejected() {
    let (store, p) = attention(3, 2, 5);
    let mut tape = Tape::new();
    let hv = tape.constant(Tensor::zeros(0, 3));
    assert!(attention_pool(&mut tape, &store, &p, hv).is_err());
}

#[test]
fn zero_classifier_is_uniform_over_classes() {
    let mut store = ParamStore::new();
    let weight = store.add("w", Tensor::zeros(5, 4)).unwrap();
    let bias = store.add("b", Tensor::zeros(1, 5)).unwrap();
    let mut tape = Tape::new();
    let t = tape.constant(Tensor::row_vector(vec![1.0, -2.0, 3.0, 0.5]));
    let (_, probs) = predict(&mut tape, &store, &ClassifierParams { weight, bias }, t).unwrap();
    for p in tape.value(probs).data() {
        assert!((p - 0.2).abs() < 1e-15);
    }
}

#[test]
fn batch_loss_is_mean() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::row_vector(vec![1.0, 2.0, 0.0]));
    let b = tape.constant(Tensor::row_vector(vec![-1.0, 0.5, 4.0]));
    let la = tape.cross_entropy(a, 0).unwrap();
    let lb = tape.cross_entropy(b, 2).unwrap();
    let mean = batch_loss(&mut tape, &[(a, 0), (b, 2)]).unwrap();
    let expect = (tape.value(la).item().unwrap() + tape.value(lb).item().unwrap()) / 2.0;
    assert!((tape.value(mean).item().unwrap() - expect).abs() < 1e-15);
    assert!(batch_loss(&mut tape, &[]).is_err());
}

fn model_forward(encoder: EncoderKind, n: usize, seed: u64, mode: Mode) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::new(small_config(encoder, 5, 4, 3, MemoryCellVariant::Verbatim), &mut rng).unwrap();
    let x = random(n, 5, &mut rng);
    let parse = common::random_bracket(n, &mut rng);
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &x, Some(&parse), mode, &mut rng).unwrap();
    let out = Model::output(&tape, &fwd);
    assert_eq!(out.alpha.len(), out.units.len());
    (out.alpha, out.logits, out.probs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pooled_vector_matches_brute_force(seed in 0u64..1000, units in 1usize..12, width in 1usize..6) {
        let (store, p) = attention(width, 3, seed);
        let h = random(units, width, &mut ChaCha8Rng::seed_from_u64(seed + 1));
        let (alpha, t) = pool(&store, &p, &h);
        let (wa, v) = (store.value(p.projection), store.value(p.context));
        let scores: Vec<f64> = (0..units)
            .map(|i| (0..3).map(|r| v.get(0, r) * (0..width).map(|c| wa.get(r, c) * h.get(i, c)).sum::<f64>().tanh()).sum())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        for i in 0..units {
            prop_assert!((alpha[i] - (scores[i] - max).exp() / z).abs() < 1e-12);
        }
        for (c, got) in t.iter().enumerate().take(width) {
            let expect: f64 = (0..units).map(|i| alpha[i] * h.get(i, c)).sum();
            prop_assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn outputs_are_distributions(seed in 0u64..1000, n in 1usize..10, which in 0usize..7, train in any::<bool>()) {
        let mode = if train { Mode::Train } else { Mode::Eval };
        let (alpha, logits, probs) = model_forward(EncoderKind::ALL[which], n, seed, mode);
        for dist in [&alpha, &probs] {
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOLERANCE);
            prop_assert!(dist.iter().all(|v| *v >= 0.0));
        }
        prop_assert_eq!(argmax(&probs), argmax(&logits));
    }

    #[test]
    fn softmax_ignores_logit_shift(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random(1, 5, &mut rng);
        let mut shifted = logits.clone();
        shifted.data_mut().iter_mut().for_each(|v| *v += shift);
        let mut tape = Tape::new();
        let a = tape.constant(logits);
        let b = tape.constant(shifted);
        let (pa, pb) = (tape.softmax(a).unwrap(), tape.softmax(b).unwrap());
        for (x, y) in tape.value(pa).data().iter().zip(tape.value(pb).data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn eval_forward_is_deterministic() {
    let a = model_forward(EncoderKind::BiForest, 7, 9, Mode::Eval);
    let b = model_forward(EncoderKind::BiForest, 7, 9, Mode::Eval);
    assert_eq!(a, b);
}

#[test]
fn wrong_embedding_width_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = Model::new(
        small_config(EncoderKind::Cnn, 5, 4, 2, MemoryCellVariant::Verbatim),
        &mut rng,
    )
    .unwrap();
    assert!(model.infer(&Tensor::zeros(3, 6), None).is_err());
    assert!(model.infer(&Tensor::zeros(0, 5), None).is_err());
    let tree = Model::new(
        small_config(EncoderKind::Tree, 5, 4, 2, MemoryCellVariant::Verbatim),
        &mut rng,
    )
    .unwrap();
    assert!(tree.infer(&Tensor::zeros(3, 5), None).is_err());
}
