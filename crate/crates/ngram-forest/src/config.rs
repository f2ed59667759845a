//! Flat `key = value` configuration files. Blank lines and lines starting
//! with `#` are ignored; keys use kebab-case and mirror the CLI flags.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ngram_forest_core::model::{EncoderKind, MemoryCellVariant, ModelConfig};

use crate::error::{Error, Result};

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    parse_pairs(&fs::read_to_string(path).map_err(Error::io(path))?)
}

pub fn render_pairs(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| Error::Config(format!("{key} = {v}: {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub encoder: EncoderKind,
    pub memory_cell: MemoryCellVariant,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub attention_dim: usize,
    pub max_order: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub threads: usize,
    /// Group similar-length documents into the same batch.
    pub bucket: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            encoder: EncoderKind::BiForest,
            memory_cell: MemoryCellVariant::Verbatim,
            learning_rate: 0.001,
            batch_size: 50,
            dropout: 0.2,
            hidden_dim: 100,
            embedding_dim: 300,
            attention_dim: 100,
            max_order: 7,
            epochs: 100,
            patience: 5,
            seed: 1,
            threads: 1,
            bucket: true,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 14] = [
        "encoder",
        "memory-cell",
        "learning-rate",
        "batch-size",
        "dropout",
        "hidden-dim",
        "embedding-dim",
        "attention-dim",
        "max-order",
        "epochs",
        "patience",
        "seed",
        "threads",
        "bucket",
    ];

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "encoder" => self.encoder = value(key, v)?,
            "memory-cell" => self.memory_cell = value(key, v)?,
            "learning-rate" => self.learning_rate = value(key, v)?,
            "batch-size" => self.batch_size = value(key, v)?,
            "dropout" => self.dropout = value(key, v)?,
            "hidden-dim" => self.hidden_dim = value(key, v)?,
            "embedding-dim" => self.embedding_dim = value(key, v)?,
            "attention-dim" => self.attention_dim = value(key, v)?,
            "max-order" => self.max_order = value(key, v)?,
            "epochs" => self.epochs = value(key, v)?,
            "patience" => self.patience = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            "threads" => self.threads = value(key, v)?,
            "bucket" => self.bucket = value(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        let values = [
            self.encoder.to_string(),
            self.memory_cell.to_string(),
            self.learning_rate.to_string(),
            self.batch_size.to_string(),
            self.dropout.to_string(),
            self.hidden_dim.to_string(),
            self.embedding_dim.to_string(),
            self.attention_dim.to_string(),
            self.max_order.to_string(),
            self.epochs.to_string(),
            self.patience.to_string(),
            self.seed.to_string(),
            self.threads.to_string(),
            self.bucket.to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch-size", self.batch_size),
            ("hidden-dim", self.hidden_dim),
            ("embedding-dim", self.embedding_dim),
            ("attention-dim", self.attention_dim),
            ("max-order", self.max_order),
            ("epochs", self.epochs),
            ("patience", self.patience),
            ("threads", self.threads),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning-rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder,
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            attention_dim: self.attention_dim,
            num_classes,
            max_order: self.max_order,
            dropout: self.dropout,
            memory_cell: self.memory_cell,
        }
    }
}
