#![allow(dead_code)]

use ngram_forest_core::autodiff::{check_gradients, GradCheckReport, Mode, Tensor};
use ngram_forest_core::dag::Bracket;
use ngram_forest_core::model::{EncoderKind, MemoryCellVariant, Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub fn small_config(encoder: EncoderKind, e: usize, d: usize, k: usize, variant: MemoryCellVariant) -> ModelConfig {
    ModelConfig {
        encoder,
        embedding_dim: e,
        hidden_dim: d,
        attention_dim: 5,
        num_classes: 3,
        max_order: k,
        dropout: 0.2,
        memory_cell: variant,
    }
}

/// A random binary bracketing over `n` placeholder words.
pub fn random_bracket(n: usize, rng: &mut ChaCha8Rng) -> Bracket {
    fn go(lo: usize, hi: usize, rng: &mut ChaCha8Rng) -> Bracket {
        if hi - lo == 1 {
            return Bracket::Leaf(format!("w{lo}"));
        }
        let split = rng.gen_range(lo + 1..hi);
        Bracket::pair(go(lo, split, rng), go(split, hi, rng))
    }
    go(0, n, rng)
}

/// Gradient check of the whole model (encoder, attention, classifier)
/// with train-mode dropout replayed from a fixed seed.
pub fn full_model_gradcheck(config: ModelConfig, n: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::new(config.clone(), &mut rng).unwrap();
    let x = random(n, config.embedding_dim, &mut rng);
    let parse = (config.encoder == EncoderKind::Tree).then(|| random_bracket(n, &mut rng));
    let gold = rng.gen_range(0..config.num_classes);
    let mut store = model.params().clone();
    check_gradients(
        &mut store,
        |s, tape| {
            let mut drop = ChaCha8Rng::seed_from_u64(seed ^ 0xd20f);
            let fwd = model.forward_with(s, tape, &x, parse.as_ref(), Mode::Train, &mut drop)?;
            tape.cross_entropy(fwd.logits, gold)
        },
        1e-3,
        1e-4,
        40,
    )
    .unwrap()
}
