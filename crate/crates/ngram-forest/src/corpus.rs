//! Labeled corpora in `label<TAB>text` form.
//!
//! Text is lowercased and split on whitespace. A text that starts with `(`
//! is read as a binary bracketing whose leaves are the tokens, for encoders
//! that need a parse.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use ngram_forest_core::Bracket;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const TOKENIZATION: &str = "lowercase-whitespace";

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Vec<String>>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    /// Per-document parses; empty when the corpus carries none.
    pub parses: Vec<Option<Bracket>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthStats {
    pub documents: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn parse(&self, i: usize) -> Option<&Bracket> {
        self.parses.get(i).and_then(Option::as_ref)
    }

    pub fn length_stats(&self) -> LengthStats {
        let lens = self.documents.iter().map(Vec::len);
        let total: usize = lens.clone().sum();
        LengthStats {
            documents: self.len(),
            min: lens.clone().min().unwrap_or(0),
            max: lens.max().unwrap_or(0),
            mean: if self.is_empty() {
                0.0
            } else {
                total as f64 / self.len() as f64
            },
        }
    }

    /// The documents at `indices`, sharing this corpus's label set.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
            parses: if self.parses.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.parses[i].clone()).collect()
            },
        }
    }

    /// Same labels, documents replaced (parses dropped).
    pub fn with_documents(&self, documents: Vec<Vec<String>>) -> Corpus {
        assert_eq!(documents.len(), self.len());
        Corpus {
            documents,
            labels: self.labels.clone(),
            label_names: self.label_names.clone(),
            parses: Vec::new(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, doc) in self.documents.iter().enumerate() {
            out.push_str(&self.label_names[self.labels[i]]);
            out.push('\t');
            match self.parse(i) {
                Some(p) => out.push_str(&p.to_string()),
                None => out.push_str(&doc.join(" ")),
            }
            out.push('\n');
        }
        out
    }
}

/// Loads a corpus, taking the label set from the file (sorted by name).
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus(path.as_ref(), None)
}

/// Loads a corpus whose labels must come from `labels`.
pub fn load_corpus_with_labels(path: impl AsRef<Path>, labels: &[String]) -> Result<Corpus> {
    read_corpus(path.as_ref(), Some(labels))
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(Error::io(path))?;
    f.write_all(corpus.to_tsv().as_bytes()).map_err(Error::io(path))
}

pub fn parse_corpus(text: &str, path: &Path, labels: Option<&[String]>) -> Result<Corpus> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: msg.to_string(),
        };
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected `label<TAB>text`"))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(malformed("empty label"));
        }
        let body = body.trim();
        let (tokens, parse) = if body.starts_with('(') {
            let lowered = body.to_lowercase();
            let parse: Bracket = lowered
                .parse()
                .map_err(|e| malformed(&format!("bad bracketing: {e}")))?;
            let tokens = parse.leaves().into_iter().map(String::from).collect();
            (tokens, Some(parse))
        } else {
            (tokenize(body), None)
        };
        if tokens.is_empty() {
            return Err(malformed("empty document"));
        }
        rows.push((line_no, label.to_string(), tokens, parse));
    }

    let label_names: Vec<String> = match labels {
        Some(l) => l.to_vec(),
        None => rows
            .iter()
            .map(|r| r.1.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let any_parse = rows.iter().any(|r| r.3.is_some());
    let mut corpus = Corpus {
        label_names,
        ..Corpus::default()
    };
    for (line, label, tokens, parse) in rows {
        let id = corpus
            .label_names
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| Error::UnknownLabel {
                path: path.to_path_buf(),
                line,
                label,
            })?;
        corpus.documents.push(tokens);
        corpus.labels.push(id);
        if any_parse {
            corpus.parses.push(parse);
        }
    }
    Ok(corpus)
}

fn read_corpus(path: &Path, labels: Option<&[String]>) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_corpus(&text, path, labels)
}

/// Index sets of a three-way split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class 8:1:1 split. Dev and test each take `max(1, ⌊m/10⌋)` of a
/// class with `m` members; the remainder goes to train.
pub fn split_stratified(corpus: &Corpus, seed: u64) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..corpus.num_classes() {
        let mut members: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.labels[i] == class).collect();
        if members.len() < 3 {
            return Err(Error::SmallClass {
                label: corpus.label_names[class].clone(),
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        let tenth = (members.len() / 10).max(1);
        split.dev.extend_from_slice(&members[..tenth]);
        split.test.extend_from_slice(&members[tenth..2 * tenth]);
        split.train.extend_from_slice(&members[2 * tenth..]);
    }
    for part in [&mut split.train, &mut split.dev, &mut split.test] {
        part.sort_unstable();
    }
    Ok(split)
}
