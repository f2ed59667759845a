//! Frozen word vectors in the whitespace-separated text format
//! (`token v1 v2 … ve` per line).

use std::fs;
use std::path::Path;

use ngram_forest_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vocab::Vocab;

/// Half-width of the uniform range for vectors missing from the file.
pub const MISSING_RANGE: f64 = 0.05;

/// A `V x e` table aligned with a [`Vocab`]; never updated by training.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    table: Tensor,
    found: usize,
}

impl EmbeddingMatrix {
    /// Every row drawn uniformly from `[-0.05, 0.05]`.
    pub fn random(vocab_len: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..vocab_len * dim)
            .map(|_| rng.gen_range(-MISSING_RANGE..=MISSING_RANGE))
            .collect();
        EmbeddingMatrix {
            table: Tensor::from_vec(vocab_len, dim, data).expect("sized"),
            found: 0,
        }
    }

    pub fn from_table(table: Tensor) -> Self {
        EmbeddingMatrix { table, found: 0 }
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn rows(&self) -> usize {
        self.table.rows()
    }

    /// Vocabulary entries (OOV slot excluded) that were found in the file.
    pub fn found(&self) -> usize {
        self.found
    }

    /// Percentage of non-reserved vocabulary entries found in the file.
    pub fn coverage(&self) -> f64 {
        let total = self.table.rows().saturating_sub(1);
        if total == 0 {
            0.0
        } else {
            100.0 * self.found as f64 / total as f64
        }
    }

    /// `n x e` input matrix for a token-id sequence.
    pub fn lookup(&self, ids: &[usize]) -> Tensor {
        let e = self.dim();
        let mut data = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            data.extend_from_slice(self.table.row(id));
        }
        Tensor::from_vec(ids.len(), e, data).expect("sized")
    }
}

/// Reads vectors for `vocab` from `path`. Tokens absent from the file keep
/// a seeded random vector of their own.
pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocab, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_embeddings(&text, path, vocab, dim, seed)
}

pub fn parse_embeddings(text: &str, path: &Path, vocab: &Vocab, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let mut m = EmbeddingMatrix::random(vocab.len(), dim, seed);
    let mut seen = vec![false; vocab.len()];
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let values = fields
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("bad number: {e}")))?;
        if values.len() != dim {
            return Err(bad(format!("expected {dim} values, found {}", values.len())));
        }
        let id = vocab.id(token);
        if id == Vocab::OOV || seen[id] {
            continue;
        }
        seen[id] = true;
        m.found += 1;
        m.table.row_mut(id).copy_from_slice(&values);
    }
    Ok(m)
}
