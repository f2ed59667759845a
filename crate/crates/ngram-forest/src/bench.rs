//! Timing and operation counts for one training epoch and one evaluation
//! pass per encoder.

use std::time::Instant;

use ngram_forest_core::model::{count_parameters, encoder_macs, EncoderKind, Model, ParamCount};
use ngram_forest_core::optim::Adam;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::train::{evaluate, run_epoch, Example};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub encoder: EncoderKind,
    pub max_order: usize,
    pub params: ParamCount,
    /// Encoder multiply-accumulates counted during the epoch's forward passes.
    pub epoch_macs: u64,
    /// The same quantity from the closed-form cost model.
    pub analytic_macs: u64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

pub const BENCH_HEADER: &str =
    "encoder\tK\tparams\tencoder_params\tepoch_macs\tanalytic_macs\ttrain_seconds\teval_seconds";

impl BenchRow {
    pub fn tsv(&self) -> String {
        let k = if self.encoder.uses_max_order() {
            self.max_order.to_string()
        } else {
            "-".into()
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{:.3}",
            self.encoder,
            k,
            self.params.total(),
            self.params.encoder,
            self.epoch_macs,
            self.analytic_macs,
            self.train_seconds,
            self.eval_seconds
        )
    }
}

/// Runs one unshuffled training epoch and one dev pass per encoder. A short
/// warm-up epoch over the first batch precedes each timed run.
pub fn benchmark(
    config: &TrainConfig,
    encoders: &[EncoderKind],
    num_classes: usize,
    train_set: &[Example],
    dev_set: &[Example],
    emb: &EmbeddingMatrix,
) -> Result<Vec<BenchRow>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let batches: Vec<Vec<usize>> = (0..train_set.len())
        .collect::<Vec<_>>()
        .chunks(config.batch_size)
        .map(<[usize]>::to_vec)
        .collect();
    let mut rows = Vec::new();
    for &encoder in encoders {
        let cfg = TrainConfig {
            encoder,
            ..config.clone()
        };
        let model_cfg = cfg.model_config(num_classes);
        let mut model = Model::new(model_cfg.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;

        let mut warm = model.clone();
        run_epoch(
            &mut warm,
            &mut Adam::new(cfg.learning_rate),
            &batches[..1],
            train_set,
            emb,
            cfg.seed,
            0,
            cfg.threads,
        )?;

        let mut adam = Adam::new(cfg.learning_rate);
        let start = Instant::now();
        let pass = run_epoch(
            &mut model,
            &mut adam,
            &batches,
            train_set,
            emb,
            cfg.seed,
            1,
            cfg.threads,
        )?;
        let train_seconds = start.elapsed().as_secs_f64();

        let start = Instant::now();
        evaluate(&model, dev_set, emb, num_classes, cfg.threads)?;
        let eval_seconds = start.elapsed().as_secs_f64();

        rows.push(BenchRow {
            encoder,
            max_order: cfg.max_order,
            params: count_parameters(&model_cfg),
            epoch_macs: pass.macs,
            analytic_macs: train_set.iter().map(|e| encoder_macs(&model_cfg, e.ids.len())).sum(),
            train_seconds,
            eval_seconds,
        });
    }
    Ok(rows)
}
