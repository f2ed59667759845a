use std::collections::BTreeSet;

use ngram_forest::config::TrainConfig;
use ngram_forest::core::model::EncoderKind;
use ngram_forest::embeddings::EmbeddingMatrix;
use ngram_forest::train::{epoch_batches, evaluate, train, EpochRecord, Evaluation, Example};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 40;

fn toy(n: usize, classes: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Example {
            ids: (0..rng.gen_range(3..9)).map(|_| rng.gen_range(1..VOCAB)).collect(),
            label: rng.gen_range(0..classes),
            parse: None,
        })
        .collect()
}

fn small(encoder: EncoderKind) -> TrainConfig {
    TrainConfig {
        encoder,
        embedding_dim: 6,
        hidden_dim: 6,
        attention_dim: 4,
        max_order: 3,
        learning_rate: 0.01,
        batch_size: 8,
        epochs: 6,
        patience: 100,
        ..TrainConfig::default()
    }
}

fn emb() -> EmbeddingMatrix {
    EmbeddingMatrix::random(VOCAB, 6, 11)
}

fn fingerprints(h: &[EpochRecord]) -> Vec<(usize, u64, u64, u64)> {
    h.iter().map(EpochRecord::fingerprint).collect()
}

#[test]
fn fifty_single_class_examples_are_fit() {
    let data: Vec<Example> = toy(50, 1, 3);
    let cfg = TrainConfig {
        epochs: 50,
        ..small(EncoderKind::LeftForest)
    };
    let out = train(&cfg, 2, &data, &data, &emb(), None).unwrap();
    assert!(
        out.history.iter().any(|r| r.train_acc == 1.0),
        "{:?}",
        out.history.last()
    );
    assert_eq!(out.best_dev_acc, 1.0);
}

#[test]
fn same_seed_gives_identical_history() {
    let data = toy(30, 3, 1);
    for encoder in [EncoderKind::BiForest, EncoderKind::Cnn, EncoderKind::BiLstm] {
        let cfg = small(encoder);
        let a = train(&cfg, 3, &data, &data[..10], &emb(), None).unwrap();
        let b = train(&cfg, 3, &data, &data[..10], &emb(), None).unwrap();
        assert_eq!(fingerprints(&a.history), fingerprints(&b.history));
        assert_eq!(a.best.params(), b.best.params());
        let c = train(&TrainConfig { seed: 2, ..cfg }, 3, &data, &data[..10], &emb(), None).unwrap();
        assert_ne!(fingerprints(&a.history), fingerprints(&c.history));
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let data = toy(30, 3, 2);
    let one = train(&small(EncoderKind::Pyramid), 3, &data, &data[..10], &emb(), None).unwrap();
    let cfg = TrainConfig {
        threads: 3,
        ..small(EncoderKind::Pyramid)
    };
    let many = train(&cfg, 3, &data, &data[..10], &emb(), None).unwrap();
    assert_eq!(fingerprints(&one.history), fingerprints(&many.history));
    assert_eq!(one.last.params(), many.last.params());
}

#[test]
fn embeddings_are_untouched_by_training() {
    let data = toy(20, 2, 4);
    let table = emb();
    let before = table.table().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let cfg = TrainConfig {
        epochs: 10,
        ..small(EncoderKind::RightForest)
    };
    train(&cfg, 2, &data, &data, &table, None).unwrap();
    let after = table.table().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(before, after);
}

#[test]
fn selected_checkpoint_is_at_least_as_good_as_last() {
    for seed in 0..4 {
        let data = toy(40, 3, 10 + seed);
        let cfg = TrainConfig {
            seed,
            epochs: 12,
            patience: 3,
            ..small(EncoderKind::LeftForest)
        };
        let out = train(&cfg, 3, &data[..30], &data[30..], &emb(), None).unwrap();
        let last = out.history.last().unwrap().dev_acc;
        assert!(out.best_dev_acc >= last);
        assert_eq!(out.history[out.best_epoch - 1].dev_acc, out.best_dev_acc);
        let best = evaluate(&out.best, &data[30..], &emb(), 3, 1).unwrap().accuracy();
        assert_eq!(best, out.best_dev_acc);
    }
}

#[test]
fn early_stopping_respects_patience() {
    let data = toy(20, 2, 5);
    let cfg = TrainConfig {
        epochs: 100,
        patience: 2,
        ..small(EncoderKind::Cnn)
    };
    let out = train(&cfg, 2, &data, &data[..6], &emb(), None).unwrap();
    assert!(out.history.len() < 100);
    assert!(out.history.len() - out.best_epoch <= 2);
}

#[test]
fn one_batch_loss_decreases_over_first_adam_steps() {
    // a full-batch epoch is one step; epoch t reports the loss before step t
    let seeds = 40;
    let mut monotone = 0;
    for seed in 0..seeds {
        let data = toy(8, 2, 100 + seed);
        let cfg = TrainConfig {
            seed,
            learning_rate: 1e-3,
            batch_size: data.len(),
            dropout: 0.0,
            epochs: 6,
            ..small(EncoderKind::BiForest)
        };
        let out = train(&cfg, 2, &data, &data, &emb(), None).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|r| r.train_loss).collect();
        assert_eq!(losses.len(), 6);
        monotone += losses.windows(2).all(|w| w[1] <= w[0]) as u64;
    }
    assert!(monotone * 100 >= 95 * seeds, "{monotone}/{seeds}");
}

proptest! {
    #[test]
    fn batches_partition_the_examples(
        lengths in prop::collection::vec(1usize..60, 1..300),
        batch in 1usize..20,
        bucket: bool,
        seed: u64,
    ) {
        let batches = epoch_batches(&lengths, batch, bucket, &mut ChaCha8Rng::seed_from_u64(seed));
        let flat: Vec<usize> = batches.iter().flatten().copied().collect();
        prop_assert_eq!(flat.len(), lengths.len());
        prop_assert_eq!(flat.iter().copied().collect::<BTreeSet<_>>().len(), lengths.len());
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
    }

    #[test]
    fn accuracy_matches_recount(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..80)) {
        let (pred, gold): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let ev = Evaluation::from_predictions(pred.clone(), gold.clone(), 4);
        let hits = pairs.iter().filter(|(p, g)| p == g).count();
        prop_assert_eq!(ev.correct(), hits);
        prop_assert_eq!(ev.accuracy(), hits as f64 / pairs.len() as f64);
        for c in 0..4 {
            prop_assert_eq!(ev.per_class[c].gold, gold.iter().filter(|&&g| g == c).count());
            prop_assert_eq!(ev.per_class[c].predicted, pred.iter().filter(|&&p| p == c).count());
        }
    }
}

#[test]
fn bucketed_and_plain_batching_both_learn() {
    // class c draws its tokens from its own half of the vocabulary
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data: Vec<Example> = (0..60)
        .map(|i| {
            let label = i % 2;
            let lo = 1 + label * (VOCAB / 2);
            Example {
                ids: (0..rng.gen_range(2..12))
                    .map(|_| rng.gen_range(lo..lo + VOCAB / 2 - 1))
                    .collect(),
                label,
                parse: None,
            }
        })
        .collect();
    let mut table = emb().table().clone();
    table.scale_mut(10.0);
    let wide = EmbeddingMatrix::from_table(table);
    for bucket in [false, true] {
        let cfg = TrainConfig {
            bucket,
            epochs: 20,
            ..small(EncoderKind::LeftForest)
        };
        let a = train(&cfg, 2, &data, &data, &wide, None).unwrap();
        assert_eq!(a.best_dev_acc, 1.0, "bucket = {bucket}");
        let b = train(&cfg, 2, &data, &data, &wide, None).unwrap();
        assert_eq!(fingerprints(&a.history), fingerprints(&b.history));
    }
}

#[test]
fn perfect_and_constant_predictors() {
    let gold: Vec<usize> = (0..50).map(|i| i % 5).collect();
    assert_eq!(
        Evaluation::from_predictions(gold.clone(), gold.clone(), 5).accuracy(),
        1.0
    );
    let constant = Evaluation::from_predictions(vec![2; 50], gold, 5);
    assert_eq!(constant.accuracy(), 0.2);
    assert_eq!(constant.per_class[2].predicted, 50);
}

#[test]
fn evaluate_agrees_with_per_example_inference() {
    let data = toy(25, 3, 7);
    let out = train(&small(EncoderKind::BiLstm), 3, &data, &data, &emb(), None).unwrap();
    let ev = evaluate(&out.last, &data, &emb(), 3, 2).unwrap();
    let dump: Vec<usize> = data
        .iter()
        .map(|ex| out.last.infer(&emb().lookup(&ex.ids), None).unwrap().predicted())
        .collect();
    assert_eq!(ev.predictions, dump);
    let hits = dump.iter().zip(&data).filter(|(p, e)| **p == e.label).count();
    assert_eq!(ev.accuracy(), hits as f64 / data.len() as f64);
}

#[test]
fn empty_splits_are_errors() {
    let data = toy(5, 2, 8);
    assert!(train(&small(EncoderKind::Cnn), 2, &[], &data, &emb(), None).is_err());
    assert!(train(&small(EncoderKind::Cnn), 2, &data, &[], &emb(), None).is_err());
}
