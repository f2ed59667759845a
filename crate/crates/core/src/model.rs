//! The full classifier: encoder, additive attention pooling, and a softmax
//! prediction layer.
//!
//! Attention scores each unit row `hᵢ` as `v·tanh(W_a·hᵢ)`, normalizes the
//! scores with a softmax into `α`, and pools `t = Σᵢ αᵢ·hᵢ`. The prediction
//! layer maps `t` to logits `W_c·t + b_c`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::autodiff::{Mode, ParamId, ParamStore, Tape, Tensor, Var};
use crate::dag::{Bracket, NgramDag, Span, StructureKind};
use crate::encoders::{
    bilstm_encode, cnn_encode, encode_bi_forest, encode_dag, glorot, BiLstmParams, CnnParams, EncodeStats,
    EncoderOutput, TreeLstmParams,
};
use crate::{Error, Result};

pub use crate::encoders::MemoryCellVariant;

/// Tolerance on `Σα = 1` and `Σp = 1`, checked on every forward pass.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Tree,
    Pyramid,
    LeftForest,
    RightForest,
    BiForest,
    BiLstm,
    Cnn,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 7] = [
        EncoderKind::Tree,
        EncoderKind::Pyramid,
        EncoderKind::LeftForest,
        EncoderKind::RightForest,
        EncoderKind::BiForest,
        EncoderKind::BiLstm,
        EncoderKind::Cnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Tree => "tree",
            EncoderKind::Pyramid => "pyramid",
            EncoderKind::LeftForest => "left-forest",
            EncoderKind::RightForest => "right-forest",
            EncoderKind::BiForest => "biforest",
            EncoderKind::BiLstm => "bilstm",
            EncoderKind::Cnn => "cnn",
        }
    }

    /// The single DAG layout walked by this encoder, if any.
    pub fn structure(self) -> Option<StructureKind> {
        match self {
            EncoderKind::Tree => Some(StructureKind::Tree),
            EncoderKind::Pyramid => Some(StructureKind::Pyramid),
            EncoderKind::LeftForest => Some(StructureKind::LeftForest),
            EncoderKind::RightForest => Some(StructureKind::RightForest),
            _ => None,
        }
    }

    /// Whether the maximum ngram order changes what the encoder computes.
    pub fn uses_max_order(self) -> bool {
        !matches!(self, EncoderKind::Tree | EncoderKind::BiLstm)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s || k.as_str().replace('-', "") == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown encoder `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub num_classes: usize,
    pub max_order: usize,
    pub dropout: f64,
    pub memory_cell: MemoryCellVariant,
}

impl ModelConfig {
    /// 300-d inputs, 100-d units, 100-d attention, order 7, dropout 0.2.
    pub fn standard(encoder: EncoderKind, num_classes: usize) -> Self {
        Self {
            encoder,
            embedding_dim: 300,
            hidden_dim: 100,
            attention_dim: 100,
            num_classes,
            max_order: 7,
            dropout: 0.2,
            memory_cell: MemoryCellVariant::Verbatim,
        }
    }

    /// Width of the unit rows fed to attention.
    pub fn unit_width(&self) -> usize {
        match self.encoder {
            EncoderKind::BiForest => 2 * self.hidden_dim,
            _ => self.hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.embedding_dim == 0 || self.hidden_dim == 0 || self.attention_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.num_classes < 2 {
            return bad("need at least two classes");
        }
        if self.max_order == 0 {
            return Err(Error::ZeroOrder);
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::DropoutProbability(self.dropout));
        }
        if self.encoder == EncoderKind::BiLstm && !self.hidden_dim.is_multiple_of(2) {
            return bad("bilstm hidden size must be even");
        }
        Ok(())
    }
}

/// Exact trainable-parameter counts; frozen embeddings excluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub encoder: usize,
    pub attention: usize,
    pub classifier: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.encoder + self.attention + self.classifier
    }
}

pub fn count_parameters(config: &ModelConfig) -> ParamCount {
    let (e, d) = (config.embedding_dim, config.hidden_dim);
    let encoder = match config.encoder {
        EncoderKind::Tree | EncoderKind::Pyramid | EncoderKind::LeftForest | EncoderKind::RightForest => {
            TreeLstmParams::count(e, d)
        }
        EncoderKind::BiForest => 2 * TreeLstmParams::count(e, d),
        EncoderKind::BiLstm => BiLstmParams::count(e, d),
        EncoderKind::Cnn => CnnParams::count(e, d, config.max_order),
    };
    let w = config.unit_width();
    ParamCount {
        encoder,
        attention: config.attention_dim * w + config.attention_dim,
        classifier: config.num_classes * w + config.num_classes,
    }
}

/// Number of ngrams of order `1..=min(max_order, n)` in `n` tokens.
pub fn ngram_count(n: usize, max_order: usize) -> usize {
    (1..=max_order.min(n)).map(|k| n - k + 1).sum()
}

/// Closed-form matrix-product multiply-accumulates of one encoder pass over
/// `n` tokens.
///
/// A tree encoder spends `3·e·d` on each leaf (its forget gates act on zero
/// children) and `5·d²` on each distinct child it projects through a
/// left or right recurrent matrix; a child shared by several parents on the
/// same side is projected once.
pub fn encoder_macs(config: &ModelConfig, n: usize) -> u64 {
    let (e, d, k) = (config.embedding_dim as u64, config.hidden_dim as u64, config.max_order);
    let nn = n as u64;
    let internal = ngram_count(n, k) as u64 - nn;
    let dag = |projections: u64| nn * 3 * e * d + projections * 5 * d * d;
    // a forest's shared side is the n - 1 unigrams that follow (or precede)
    // a longer ngram; the other side projects every non-top ngram once
    let forest = if internal == 0 { dag(0) } else { dag(internal + nn - 1) };
    match config.encoder {
        EncoderKind::Tree => dag(2 * (nn - 1)),
        EncoderKind::Pyramid => dag(2 * internal),
        EncoderKind::LeftForest | EncoderKind::RightForest => forest,
        EncoderKind::BiForest => 2 * forest,
        EncoderKind::Cnn => (1..=k.min(n)).map(|o| (n - o + 1) as u64 * o as u64 * e * d).sum(),
        EncoderKind::BiLstm => {
            let h = d / 2;
            2 * (nn * 4 * h * e + (nn - 1) * 4 * h * h)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    /// `d_a x width`
    pub projection: ParamId,
    /// `1 x d_a`
    pub context: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifierParams {
    /// `C x width`
    pub weight: ParamId,
    /// `1 x C`
    pub bias: ParamId,
}

/// Additive attention over unit rows; returns `(α, t)` as `1 x units` and
/// `1 x width` rows.
pub fn attention_pool(
    tape: &mut Tape,
    store: &ParamStore,
    params: &AttentionParams,
    hidden: Var,
) -> Result<(Var, Var)> {
    if tape.try_value(hidden)?.rows() == 0 {
        return Err(Error::Empty("unit matrix"));
    }
    let wa = tape.param(store, params.projection);
    let v = tape.param(store, params.context);
    let proj = tape.matmul_nt(hidden, wa)?;
    let proj = tape.tanh(proj)?;
    let scores = tape.matmul_nt(v, proj)?;
    let alpha = tape.softmax(scores)?;
    let text = tape.weighted_sum(alpha, hidden)?;
    Ok((alpha, text))
}

/// Logits `W_c·t + b_c` and their softmax.
pub fn predict(tape: &mut Tape, store: &ParamStore, params: &ClassifierParams, text: Var) -> Result<(Var, Var)> {
    let w = tape.param(store, params.weight);
    let b = tape.param(store, params.bias);
    let logits = tape.matmul_nt(text, w)?;
    let logits = tape.add_row(logits, b)?;
    let probs = tape.softmax(logits)?;
    Ok((logits, probs))
}

/// Cross-entropy of `gold` under `logits`.
pub fn loss(tape: &mut Tape, logits: Var, gold: usize) -> Result<Var> {
    tape.cross_entropy(logits, gold)
}

/// Mean cross-entropy over a batch of `(logits, gold)` pairs.
pub fn batch_loss(tape: &mut Tape, items: &[(Var, usize)]) -> Result<Var> {
    if items.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total: Option<Var> = None;
    for &(logits, gold) in items {
        let l = tape.cross_entropy(logits, gold)?;
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l)?,
        });
    }
    tape.scale(total.expect("non-empty"), 1.0 / items.len() as f64)
}

fn check_normalized(t: &Tensor, what: &'static str) -> Result<()> {
    let sum = t.sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || t.data().iter().any(|v| *v < 0.0) {
        return Err(Error::NotNormalized { what, sum });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EncoderParams {
    Tree(TreeLstmParams),
    BiForest(TreeLstmParams, TreeLstmParams),
    BiLstm(BiLstmParams),
    Cnn(CnnParams),
}

/// Values recorded by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub alpha: Var,
    pub text: Var,
    pub logits: Var,
    pub probs: Var,
    pub units: Vec<Span>,
    pub stats: EncodeStats,
}

/// Plain numbers read off a [`Forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub alpha: Vec<f64>,
    pub text: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub units: Vec<Span>,
}

impl ModelOutput {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    encoder: EncoderParams,
    attention: AttentionParams,
    classifier: ClassifierParams,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let (e, d) = (config.embedding_dim, config.hidden_dim);
        let encoder = match config.encoder {
            EncoderKind::BiForest => EncoderParams::BiForest(
                TreeLstmParams::register(&mut store, "left", e, d, rng)?,
                TreeLstmParams::register(&mut store, "right", e, d, rng)?,
            ),
            EncoderKind::BiLstm => EncoderParams::BiLstm(BiLstmParams::register(&mut store, "bilstm", e, d, rng)?),
            EncoderKind::Cnn => {
                EncoderParams::Cnn(CnnParams::register(&mut store, "cnn", e, d, config.max_order, rng)?)
            }
            _ => EncoderParams::Tree(TreeLstmParams::register(&mut store, "tree", e, d, rng)?),
        };
        let w = config.unit_width();
        let da = config.attention_dim;
        let attention = AttentionParams {
            projection: store.add("attention.projection", glorot(da, w, da, rng))?,
            context: store.add("attention.context", glorot(1, da, 1, rng))?,
        };
        let c = config.num_classes;
        let classifier = ClassifierParams {
            weight: store.add("classifier.weight", glorot(c, w, c, rng))?,
            bias: store.add("classifier.bias", Tensor::zeros(1, c))?,
        };
        Ok(Self {
            config,
            params: store,
            encoder,
            attention,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoder_params(&self) -> &EncoderParams {
        &self.encoder
    }

    pub fn attention_params(&self) -> &AttentionParams {
        &self.attention
    }

    pub fn classifier_params(&self) -> &ClassifierParams {
        &self.classifier
    }

    /// Runs the encoder on `x` (`n x e` token embeddings).
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        parse: Option<&Bracket>,
    ) -> Result<EncoderOutput> {
        let cfg = &self.config;
        let n = tape.try_value(x)?.rows();
        match &self.encoder {
            EncoderParams::Tree(p) => {
                let kind = cfg.encoder.structure().expect("tree-family encoder");
                let dag = NgramDag::build(kind, n, cfg.max_order, parse)?;
                encode_dag(tape, store, p, &dag, x, cfg.memory_cell)
            }
            EncoderParams::BiForest(l, r) => encode_bi_forest(tape, store, l, r, cfg.max_order, x, cfg.memory_cell),
            EncoderParams::BiLstm(p) => bilstm_encode(tape, store, p, x),
            EncoderParams::Cnn(p) => cnn_encode(tape, store, p, x, cfg.max_order),
        }
    }

    /// Forward pass with the model's own parameters.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        embeddings: &Tensor,
        parse: Option<&Bracket>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward> {
        self.forward_with(&self.params, tape, embeddings, parse, mode, rng)
    }

    /// Forward pass reading parameters from `store`, which must share this
    /// model's layout (used by gradient checks that perturb a copy).
    pub fn forward_with<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        embeddings: &Tensor,
        parse: Option<&Bracket>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Forward> {
        if embeddings.rows() == 0 {
            return Err(Error::Empty("text"));
        }
        if embeddings.cols() != self.config.embedding_dim {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: embeddings.shape(),
                rhs: (embeddings.rows(), self.config.embedding_dim),
            });
        }
        let p = self.config.dropout;
        let x = tape.constant(embeddings.clone());
        let x = tape.dropout(x, p, mode, rng)?;
        let encoded = self.encode(tape, store, x, parse)?;
        let hidden = tape.dropout(encoded.hidden, p, mode, rng)?;
        let (alpha, text) = attention_pool(tape, store, &self.attention, hidden)?;
        let text = tape.dropout(text, p, mode, rng)?;
        let (logits, probs) = predict(tape, store, &self.classifier, text)?;
        check_normalized(tape.value(alpha), "attention weights")?;
        check_normalized(tape.value(probs), "class probabilities")?;
        if !tape.value(logits).is_finite() {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(Forward {
            alpha,
            text,
            logits,
            probs,
            units: encoded.spans,
            stats: encoded.stats,
        })
    }

    pub fn output(tape: &Tape, fwd: &Forward) -> ModelOutput {
        ModelOutput {
            alpha: tape.value(fwd.alpha).data().to_vec(),
            text: tape.value(fwd.text).data().to_vec(),
            logits: tape.value(fwd.logits).data().to_vec(),
            probs: tape.value(fwd.probs).data().to_vec(),
            units: fwd.units.clone(),
        }
    }

    /// Eval-mode forward pass.
    pub fn infer(&self, embeddings: &Tensor, parse: Option<&Bracket>) -> Result<ModelOutput> {
        let mut tape = Tape::new();
        let mut rng = NoRng;
        let fwd = self.forward(&mut tape, embeddings, parse, Mode::Eval, &mut rng)?;
        Ok(Self::output(&tape, &fwd))
    }
}

/// Placeholder generator for eval mode, where dropout draws nothing.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval mode draws no random numbers")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval mode draws no random numbers")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("eval mode draws no random numbers")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> core::result::Result<(), rand::Error> {
        unreachable!("eval mode draws no random numbers")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn count_matches_store() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for encoder in EncoderKind::ALL {
            let cfg = ModelConfig {
                encoder,
                embedding_dim: 6,
                hidden_dim: 4,
                attention_dim: 3,
                num_classes: 5,
                max_order: 3,
                dropout: 0.0,
                memory_cell: MemoryCellVariant::Verbatim,
            };
            let model = Model::new(cfg.clone(), &mut rng).unwrap();
            assert_eq!(
                model.params().trainable_count(),
                count_parameters(&cfg).total(),
                "{encoder}"
            );
        }
    }

    #[test]
    fn full_scale_counts() {
        let forest = ModelConfig::standard(EncoderKind::LeftForest, 5);
        assert_eq!(count_parameters(&forest).encoder, 250_500);
        let k_counts: Vec<_> = (1..=9)
            .map(|k| {
                count_parameters(&ModelConfig {
                    max_order: k,
                    ..forest.clone()
                })
                .total()
            })
            .collect();
        assert!(k_counts.windows(2).all(|w| w[0] == w[1]));
        let cnn = ModelConfig::standard(EncoderKind::Cnn, 5);
        let c_counts: Vec<_> = (1..=9)
            .map(|k| {
                count_parameters(&ModelConfig {
                    max_order: k,
                    ..cnn.clone()
                })
                .total()
            })
            .collect();
        assert!(c_counts.windows(2).all(|w| w[0] < w[1]));
        assert!(c_counts[6] > k_counts[6]);
    }

    #[test]
    fn encoder_names_round_trip() {
        for k in EncoderKind::ALL {
            assert_eq!(k.as_str().parse::<EncoderKind>().unwrap(), k);
        }
        assert_eq!("BiForest".parse::<EncoderKind>().unwrap(), EncoderKind::BiForest);
        assert!("lstm".parse::<EncoderKind>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::standard(EncoderKind::BiLstm, 5);
        cfg.hidden_dim = 7;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::standard(EncoderKind::Cnn, 1);
        assert!(cfg.validate().is_err());
        cfg.num_classes = 2;
        cfg.dropout = 1.0;
        assert_eq!(cfg.validate(), Err(Error::DropoutProbability(1.0)));
    }
}
