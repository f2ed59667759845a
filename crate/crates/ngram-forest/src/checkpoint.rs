//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "NGFOREST"
//! version  u32
//! config   str      `key = value` lines
//! labels   u32 count, then str each
//! vocab    u32 count, then str each (id order)
//! tensors  u32 count, then per tensor: str name, u64 rows, u64 cols,
//!          rows*cols f64 row-major
//! ```
//!
//! where `str` is a u32 byte length followed by UTF-8 bytes.

use std::fs;
use std::path::Path;

use ngram_forest_core::model::{Model, ModelConfig};
use ngram_forest_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_pairs, render_pairs};
use crate::corpus::TOKENIZATION;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::vocab::Vocab;

pub const MAGIC: &[u8; 8] = b"NGFOREST";
pub const VERSION: u32 = 1;
const EMBEDDINGS: &str = "embeddings";

/// A trained model with everything needed to apply it to raw text.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub labels: Vec<String>,
    pub vocab: Vocab,
    pub embeddings: EmbeddingMatrix,
}

pub fn config_pairs(cfg: &ModelConfig) -> Vec<(String, String)> {
    [
        ("encoder", cfg.encoder.to_string()),
        ("memory-cell", cfg.memory_cell.to_string()),
        ("embedding-dim", cfg.embedding_dim.to_string()),
        ("hidden-dim", cfg.hidden_dim.to_string()),
        ("attention-dim", cfg.attention_dim.to_string()),
        ("num-classes", cfg.num_classes.to_string()),
        ("max-order", cfg.max_order.to_string()),
        ("dropout", cfg.dropout.to_string()),
        ("tokenization", TOKENIZATION.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn config_from_pairs(pairs: &[(String, String)]) -> std::result::Result<ModelConfig, String> {
    let get = |key: &str| {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| format!("config block lacks `{key}`"))
    };
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
        v.parse().map_err(|_| format!("bad `{key}` value `{v}`"))
    }
    if get("tokenization")? != TOKENIZATION {
        return Err(format!("unsupported tokenization `{}`", get("tokenization")?));
    }
    Ok(ModelConfig {
        encoder: get("encoder")?.parse().map_err(|e| format!("{e}"))?,
        memory_cell: get("memory-cell")?.parse().map_err(|e| format!("{e}"))?,
        embedding_dim: num("embedding-dim", get("embedding-dim")?)?,
        hidden_dim: num("hidden-dim", get("hidden-dim")?)?,
        attention_dim: num("attention-dim", get("attention-dim")?)?,
        num_classes: num("num-classes", get("num-classes")?)?,
        max_order: num("max-order", get("max-order")?)?,
        dropout: num("dropout", get("dropout")?)?,
    })
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_str(out, name);
    out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, &render_pairs(&config_pairs(ck.model.config())));
    out.extend_from_slice(&(ck.labels.len() as u32).to_le_bytes());
    for l in &ck.labels {
        put_str(&mut out, l);
    }
    out.extend_from_slice(&(ck.vocab.len() as u32).to_le_bytes());
    for t in ck.vocab.tokens() {
        put_str(&mut out, t);
    }
    let params = ck.model.params();
    out.extend_from_slice(&(params.len() as u32 + 1).to_le_bytes());
    put_tensor(&mut out, EMBEDDINGS, ck.embeddings.table());
    for id in params.ids() {
        put_tensor(&mut out, params.name(id), params.value(id));
    }
    out
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(ck)).map_err(Error::io(path))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8 string".to_string())
    }

    fn tensor(&mut self) -> std::result::Result<(String, Tensor), String> {
        let name = self.str()?;
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let len = rows.checked_mul(cols).and_then(|n| n.checked_mul(8));
        let raw = self.take(len.ok_or("tensor size overflows")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((name, Tensor::from_vec(rows, cols, data).map_err(|e| e.to_string())?))
    }
}

struct Raw {
    config: ModelConfig,
    labels: Vec<String>,
    vocab: Vec<String>,
    tensors: Vec<(String, Tensor)>,
}

fn decode(bytes: &[u8]) -> std::result::Result<Raw, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| "not a checkpoint (too short)")? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("format version {version}, this build reads {VERSION}"));
    }
    let pairs = parse_pairs(&r.str()?).map_err(|e| e.to_string())?;
    let config = config_from_pairs(&pairs)?;
    let labels = (0..r.u32()?).map(|_| r.str()).collect::<std::result::Result<_, _>>()?;
    let vocab = (0..r.u32()?).map(|_| r.str()).collect::<std::result::Result<_, _>>()?;
    let tensors = (0..r.u32()?)
        .map(|_| r.tensor())
        .collect::<std::result::Result<_, _>>()?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(Raw {
        config,
        labels,
        vocab,
        tensors,
    })
}

/// Loads a checkpoint and rebuilds the model from its recorded config.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    load(path.as_ref(), None)
}

/// Loads a checkpoint into a model built from `config`. Differences in
/// encoder or memory-cell variant are refused; dimension differences
/// surface as tensor shape errors.
pub fn load_checkpoint_as(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Checkpoint> {
    load(path.as_ref(), Some(config))
}

fn load(path: &Path, requested: Option<&ModelConfig>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let fail = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    let raw = decode(&bytes).map_err(fail)?;
    let config = match requested {
        None => raw.config.clone(),
        Some(req) => {
            let pairs = (config_pairs(&raw.config), config_pairs(req));
            for ((key, recorded), (_, wanted)) in pairs.0.iter().zip(&pairs.1) {
                if (key == "encoder" || key == "memory-cell") && recorded != wanted {
                    return Err(Error::ConfigMismatch {
                        key: key.clone(),
                        recorded: recorded.clone(),
                        requested: wanted.clone(),
                    });
                }
            }
            req.clone()
        }
    };
    if raw.labels.len() != config.num_classes {
        return Err(fail(format!(
            "{} labels for {} classes",
            raw.labels.len(),
            config.num_classes
        )));
    }
    let vocab = Vocab::from_tokens(raw.vocab).ok_or_else(|| fail("malformed vocabulary".into()))?;

    let mut model = Model::new(config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut embeddings = None;
    let mut loaded = vec![false; model.params().len()];
    for (name, tensor) in raw.tensors {
        let expected = if name == EMBEDDINGS {
            (vocab.len(), config.embedding_dim)
        } else {
            let id = model
                .params()
                .find(&name)
                .ok_or_else(|| fail(format!("unexpected tensor `{name}`")))?;
            loaded[id.index()] = true;
            model.params().value(id).shape()
        };
        if tensor.shape() != expected {
            return Err(Error::TensorShape {
                name,
                expected,
                found: tensor.shape(),
            });
        }
        if name == EMBEDDINGS {
            embeddings = Some(EmbeddingMatrix::from_table(tensor));
        } else {
            model.params_mut().load(&name, tensor)?;
        }
    }
    if let Some(i) = loaded.iter().position(|l| !l) {
        let id = model.params().ids().nth(i).expect("index in range");
        return Err(fail(format!("missing tensor `{}`", model.params().name(id))));
    }
    Ok(Checkpoint {
        model,
        labels: raw.labels,
        vocab,
        embeddings: embeddings.ok_or_else(|| fail("missing embeddings".into()))?,
    })
}
