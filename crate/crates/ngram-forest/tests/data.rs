use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ngram_forest::checkpoint::{encode_checkpoint, load_checkpoint, load_checkpoint_as, save_checkpoint, Checkpoint};
use ngram_forest::core::model::{EncoderKind, ModelConfig};
use ngram_forest::core::MemoryCellVariant;
use ngram_forest::core::Model;
use ngram_forest::corpus::{load_corpus, parse_corpus, save_corpus, split_stratified, tokenize, Corpus};
use ngram_forest::embeddings::{load_embeddings, parse_embeddings, EmbeddingMatrix, MISSING_RANGE};
use ngram_forest::vocab::Vocab;
use ngram_forest::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus_of(sizes: &[usize]) -> Corpus {
    let mut c = Corpus {
        label_names: (0..sizes.len()).map(|i| format!("l{i}")).collect(),
        ..Corpus::default()
    };
    for (label, &m) in sizes.iter().enumerate() {
        for j in 0..m {
            c.documents.push(vec![format!("t{j}")]);
            c.labels.push(label);
        }
    }
    c
}

#[test]
fn three_lines_two_labels() {
    let c = parse_corpus(
        "pos\tGreat movie\nneg\tbad  PLOT\npos\tfine\n",
        Path::new("x.tsv"),
        None,
    )
    .unwrap();
    assert_eq!(c.len(), 3);
    assert_eq!(c.num_classes(), 2);
    assert_eq!(c.label_names, ["neg", "pos"]);
    assert_eq!(c.labels, [1, 0, 1]);
    assert_eq!(c.documents[1], ["bad", "plot"]);
    let stats = c.length_stats();
    assert_eq!((stats.min, stats.max), (1, 2));
    assert!((stats.mean - 5.0 / 3.0).abs() < 1e-12);
}

#[test]
fn corpus_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.tsv");
    let c = parse_corpus("a\tone two\nb\t((x y) z)\na\tthree\n", Path::new("in"), None).unwrap();
    save_corpus(&c, &path).unwrap();
    let back = load_corpus(&path).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.parse(1).unwrap().to_string(), "((x y) z)");
}

#[test]
fn malformed_lines_name_file_and_line() {
    let err = parse_corpus("a\tok\n\nno tab here\n", Path::new("bad.tsv"), None).unwrap_err();
    match &err {
        Error::Parse { line, .. } => assert_eq!(*line, 3),
        e => panic!("unexpected {e:?}"),
    }
    assert!(err.to_string().starts_with("bad.tsv:3:"));

    let err = parse_corpus("a\t(x (y\n", Path::new("t.tsv"), None).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 1, .. }));

    let labels = vec!["a".to_string()];
    let err = parse_corpus("a\tx\nb\ty\n", Path::new("t.tsv"), Some(&labels)).unwrap_err();
    assert!(matches!(err, Error::UnknownLabel { line: 2, .. }));
}

#[test]
fn missing_corpus_error_names_path() {
    let err = load_corpus("/nonexistent/corpus.tsv").unwrap_err();
    assert!(err.to_string().contains("/nonexistent/corpus.tsv"));
    assert_eq!(err.exit_code(), 2);
}

proptest! {
    #[test]
    fn tokenization_is_idempotent(text in "[ a-zA-Z0-9.,\t]{0,60}") {
        let once = tokenize(&text);
        let twice = tokenize(&once.join(" "));
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn hundred_per_class_splits_80_10_10() {
    let c = corpus_of(&[100; 5]);
    let s = split_stratified(&c, 4).unwrap();
    for class in 0..5 {
        let count = |part: &[usize]| part.iter().filter(|&&i| c.labels[i] == class).count();
        assert_eq!((count(&s.train), count(&s.dev), count(&s.test)), (80, 10, 10));
    }
}

#[test]
fn full_scale_split_sizes() {
    // five classes summing to 14,102 documents
    let c = corpus_of(&[3163, 1494, 1925, 3051, 4469]);
    let s = split_stratified(&c, 1).unwrap();
    assert_eq!(s.train.len() + s.dev.len() + s.test.len(), 14_102);
    // dev and test take floor(m / 10) of each class
    assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (11_286, 1_408, 1_408));
}

#[test]
fn split_is_disjoint_complete_and_seeded() {
    let c = corpus_of(&[37, 12, 3, 58]);
    let s = split_stratified(&c, 9).unwrap();
    let all: BTreeSet<usize> = s.train.iter().chain(&s.dev).chain(&s.test).copied().collect();
    assert_eq!(all.len(), c.len());
    assert_eq!(s.train.len() + s.dev.len() + s.test.len(), c.len());
    assert_eq!(split_stratified(&c, 9).unwrap(), s);
    assert_ne!(split_stratified(&c, 10).unwrap(), s);
}

#[test]
fn tiny_class_is_rejected() {
    let err = split_stratified(&corpus_of(&[10, 2]), 0).unwrap_err();
    assert!(matches!(err, Error::SmallClass { count: 2, .. }));
}

fn vocab(words: &[&str]) -> Vocab {
    Vocab::build([words.iter().map(|w| w.to_string()).collect::<Vec<_>>()].iter())
}

#[test]
fn present_rows_are_copied_exactly() {
    let v = vocab(&["cat", "dog", "emu"]);
    let m = parse_embeddings(
        "dog 0.25 -1e-3\ncat 1 2\nzebra 9 9\ndog 7 7\n",
        Path::new("e"),
        &v,
        2,
        3,
    )
    .unwrap();
    assert_eq!(m.table().row(v.id("cat")), [1.0, 2.0]);
    assert_eq!(m.table().row(v.id("dog")), [0.25, -1e-3]);
    assert_eq!(m.found(), 2);
    assert!((m.coverage() - 200.0 / 3.0).abs() < 1e-9);
    let emu = m.table().row(v.id("emu"));
    assert!(emu.iter().all(|x| x.abs() <= MISSING_RANGE));
    let again = parse_embeddings("dog 0.25 -1e-3\n", Path::new("e"), &v, 2, 3).unwrap();
    assert_eq!(again.table().row(v.id("emu")), emu);
}

#[test]
fn empty_file_gives_zero_coverage() {
    let v = vocab(&["a", "b"]);
    let m = parse_embeddings("", Path::new("e"), &v, 4, 0).unwrap();
    assert_eq!(m.coverage(), 0.0);
    assert_eq!(m.table(), EmbeddingMatrix::random(v.len(), 4, 0).table());
}

#[test]
fn dimension_mismatch_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vec.txt");
    fs::write(&path, "a 1 2 3\nb 1 2\n").unwrap();
    let err = load_embeddings(&path, &vocab(&["a", "b"]), 3, 0).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
}

fn small_model(encoder: EncoderKind, hidden: usize, variant: MemoryCellVariant) -> Model {
    let cfg = ModelConfig {
        encoder,
        embedding_dim: 4,
        hidden_dim: hidden,
        attention_dim: 3,
        num_classes: 2,
        max_order: 3,
        dropout: 0.2,
        memory_cell: variant,
    };
    Model::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
}

fn checkpoint(encoder: EncoderKind) -> Checkpoint {
    let v = vocab(&["x", "y", "z"]);
    Checkpoint {
        model: small_model(encoder, 6, MemoryCellVariant::Verbatim),
        labels: vec!["neg".into(), "pos".into()],
        embeddings: EmbeddingMatrix::random(v.len(), 4, 1),
        vocab: v,
    }
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for encoder in EncoderKind::ALL {
        let ck = checkpoint(encoder);
        let path = dir.path().join(format!("{encoder}.bin"));
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(encode_checkpoint(&back), fs::read(&path).unwrap());
    }
}

#[test]
fn hidden_size_mismatch_names_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    save_checkpoint(&checkpoint(EncoderKind::LeftForest), &path).unwrap();
    let wanted = small_model(EncoderKind::LeftForest, 8, MemoryCellVariant::Verbatim)
        .config()
        .clone();
    match load_checkpoint_as(&path, &wanted).unwrap_err() {
        Error::TensorShape { name, expected, found } => {
            assert!(!name.is_empty());
            assert_ne!(expected, found);
        }
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn variant_or_encoder_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    save_checkpoint(&checkpoint(EncoderKind::LeftForest), &path).unwrap();
    let other = small_model(EncoderKind::LeftForest, 6, MemoryCellVariant::ChildMemory)
        .config()
        .clone();
    assert!(
        matches!(load_checkpoint_as(&path, &other).unwrap_err(), Error::ConfigMismatch { key, .. } if key == "memory-cell")
    );
    let other = small_model(EncoderKind::Pyramid, 6, MemoryCellVariant::Verbatim)
        .config()
        .clone();
    assert!(
        matches!(load_checkpoint_as(&path, &other).unwrap_err(), Error::ConfigMismatch { key, .. } if key == "encoder")
    );
    let same = checkpoint(EncoderKind::LeftForest);
    assert_eq!(load_checkpoint_as(&path, same.model.config()).unwrap(), same);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = encode_checkpoint(&checkpoint(EncoderKind::Cnn));
    let path = dir.path().join("ck.bin");
    let cases: Vec<Vec<u8>> = vec![
        bytes[..bytes.len() - 3].to_vec(),
        [&bytes[..], &[0]].concat(),
        [&b"NOTMAGIC"[..], &bytes[8..]].concat(),
        [&bytes[..8], &99u32.to_le_bytes(), &bytes[12..]].concat(),
    ];
    for case in cases {
        fs::write(&path, case).unwrap();
        assert!(matches!(load_checkpoint(&path).unwrap_err(), Error::Checkpoint { .. }));
    }
}
