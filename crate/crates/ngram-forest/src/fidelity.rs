//! How much label information do extracted words carry? Each condition
//! reduces every train and dev document to `n` words, retrains a fresh
//! BiLSTM classifier on the reduced train set and scores it on the reduced
//! dev set.

use std::fmt;
use std::fmt::Write as _;

use ngram_forest_core::explain::{keep_top_words, random_subsequence, REDUCED_WORD_ORDER, WORD_IMPORTANCE_RULE};
use ngram_forest_core::model::{EncoderKind, Model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::corpus::Corpus;
use crate::embeddings::EmbeddingMatrix;
use crate::error::Result;
use crate::train::{derive_seed, examples, train};
use crate::vocab::Vocab;

/// Reduced-text sizes swept by default.
pub const DEFAULT_N_VALUES: [usize; 14] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 30, 40, 50];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    /// The `n` most important words under the explainer's attention.
    Extracted,
    /// A random contiguous `n`-word window.
    Random,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Extracted => "extracted",
            Condition::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidelityRow {
    pub n: usize,
    pub condition: Condition,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidelityReport {
    pub rows: Vec<FidelityRow>,
    /// BiLSTM dev accuracy on unreduced text.
    pub upper_bound: f64,
    pub seed: u64,
}

impl FidelityReport {
    pub fn accuracy(&self, n: usize, condition: Condition) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.condition == condition)
            .map(|r| r.accuracy)
    }

    /// `#`-prefixed metadata, then `n<TAB>condition<TAB>accuracy` records;
    /// the unreduced run is the record `all<TAB>full<TAB>…`.
    pub fn tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# word-importance = {WORD_IMPORTANCE_RULE}");
        let _ = writeln!(out, "# reduced-word-order = {REDUCED_WORD_ORDER}");
        let _ = writeln!(out, "# seed = {}", self.seed);
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{:.4}", r.n, r.condition, r.accuracy);
        }
        let _ = writeln!(out, "all\tfull\t{:.4}", self.upper_bound);
        out
    }
}

/// Everything the harness reads; nothing here is modified.
pub struct FidelitySetup<'a> {
    pub explainer: &'a Model,
    pub vocab: &'a Vocab,
    pub embeddings: &'a EmbeddingMatrix,
    pub train: &'a Corpus,
    pub dev: &'a Corpus,
    /// Hyperparameters of the retrained classifiers; the encoder is forced
    /// to BiLSTM.
    pub classifier: TrainConfig,
}

impl FidelitySetup<'_> {
    fn reduce(&self, corpus: &Corpus, n: usize, condition: Condition, salt: u64) -> Result<Corpus> {
        let mut docs = Vec::with_capacity(corpus.len());
        for (i, doc) in corpus.documents.iter().enumerate() {
            docs.push(match condition {
                Condition::Extracted => {
                    let out = self
                        .explainer
                        .infer(&self.embeddings.lookup(&self.vocab.ids(doc)), corpus.parse(i))?;
                    keep_top_words(doc, &out, n)?
                }
                Condition::Random => {
                    let seed = derive_seed(self.classifier.seed, n as u64, salt + i as u64);
                    random_subsequence(doc, n, &mut ChaCha8Rng::seed_from_u64(seed))
                }
            });
        }
        Ok(corpus.with_documents(docs))
    }

    /// Best dev accuracy of a BiLSTM trained on `train`.
    fn score(&self, train_set: &Corpus, dev_set: &Corpus) -> Result<f64> {
        let cfg = TrainConfig {
            encoder: EncoderKind::BiLstm,
            ..self.classifier.clone()
        };
        let tr = examples(train_set, self.vocab);
        let dv = examples(dev_set, self.vocab);
        Ok(train(&cfg, train_set.num_classes(), &tr, &dv, self.embeddings, None)?.best_dev_acc)
    }

    pub fn run(&self, n_values: &[usize]) -> Result<FidelityReport> {
        let mut rows = Vec::new();
        for &n in n_values {
            for condition in [Condition::Extracted, Condition::Random] {
                let train_set = self.reduce(self.train, n, condition, 0)?;
                let dev_set = self.reduce(self.dev, n, condition, 1 << 32)?;
                rows.push(FidelityRow {
                    n,
                    condition,
                    accuracy: self.score(&train_set, &dev_set)?,
                });
            }
        }
        Ok(FidelityReport {
            rows,
            upper_bound: self.score(self.train, self.dev)?,
            seed: self.classifier.seed,
        })
    }
}
