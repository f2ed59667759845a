//! Planted-trigram corpora: every document is uniform distractor noise
//! around one class signature, a fixed ordering of three shared words.
//! All classes use the same three words, so the label is carried by word
//! order alone and a unigram bag cannot beat chance.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ngram_forest_core::dag::Span;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::vocab::Vocab;

pub const SIGNATURE_WORDS: [&str; 3] = ["sig-a", "sig-b", "sig-c"];
const ORDERINGS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub docs_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub distractors: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 5,
            docs_per_class: 100,
            min_len: 30,
            max_len: 50,
            distractors: 200,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    /// Where each document's signature sits.
    pub planted: Vec<Span>,
}

pub fn signature(class: usize) -> [&'static str; 3] {
    ORDERINGS[class].map(|w| SIGNATURE_WORDS[w])
}

pub fn planted_trigram_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if !(2..=ORDERINGS.len()).contains(&cfg.classes) {
        return Err(Error::Config(format!(
            "planted corpora support 2 to 6 classes, got {}",
            cfg.classes
        )));
    }
    if cfg.min_len < 3 || cfg.min_len > cfg.max_len || cfg.distractors == 0 {
        return Err(Error::Config("need 3 <= min-len <= max-len and distractors > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels: Vec<usize> = (0..cfg.classes)
        .flat_map(|c| std::iter::repeat_n(c, cfg.docs_per_class))
        .collect();
    labels.shuffle(&mut rng);

    let mut corpus = Corpus {
        label_names: (0..cfg.classes).map(|c| format!("c{c}")).collect(),
        ..Corpus::default()
    };
    let mut planted = Vec::new();
    for label in labels {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let at = rng.gen_range(0..=len - 3);
        let mut doc: Vec<String> = (0..len)
            .map(|_| format!("w{:03}", rng.gen_range(0..cfg.distractors)))
            .collect();
        for (j, w) in signature(label).iter().enumerate() {
            doc[at + j] = w.to_string();
        }
        corpus.documents.push(doc);
        corpus.labels.push(label);
        planted.push(Span::new(at, 3));
    }
    Ok(SynthCorpus { corpus, planted })
}

/// Stand-in pretrained vectors: uniform in `[-scale, scale]`.
pub fn synthetic_embeddings(vocab: &Vocab, dim: usize, scale: f64, seed: u64) -> EmbeddingMatrix {
    let mut table = EmbeddingMatrix::random(vocab.len(), dim, seed).table().clone();
    table.scale_mut(scale / crate::embeddings::MISSING_RANGE);
    EmbeddingMatrix::from_table(table)
}

/// Writes `table` rows for every non-reserved vocabulary entry in the text
/// embedding format.
pub fn write_embeddings(path: impl AsRef<Path>, vocab: &Vocab, emb: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (id, token) in vocab.tokens().iter().enumerate().skip(1) {
        out.push_str(token);
        for v in emb.table().row(id) {
            let _ = write!(out, " {v:e}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(Error::io(path))
}
