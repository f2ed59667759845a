//! Mini-batch training with Adam and dev-set model selection.

use std::io::Write;
use std::thread;
use std::time::Instant;

use ngram_forest_core::autodiff::{Mode, ParamGrads, Tape};
use ngram_forest_core::model::{argmax, Model};
use ngram_forest_core::optim::Adam;
use ngram_forest_core::{Bracket, Error as CoreError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::corpus::Corpus;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::vocab::Vocab;

/// Consecutive shuffled batches whose documents are sorted by length
/// together when bucketing is on.
const BUCKET_BATCHES: usize = 20;

/// Columns of the metrics log; no wall-clock column.
pub const METRICS_HEADER: &str = "epoch\ttrain_loss\ttrain_acc\tdev_acc";

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub ids: Vec<usize>,
    pub label: usize,
    pub parse: Option<Bracket>,
}

pub fn examples(corpus: &Corpus, vocab: &Vocab) -> Vec<Example> {
    (0..corpus.len())
        .map(|i| Example {
            ids: vocab.ids(&corpus.documents[i]),
            label: corpus.labels[i],
            parse: corpus.parse(i).cloned(),
        })
        .collect()
}

/// Derives an independent stream seed from `(seed, a, b)`.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ a) ^ b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_acc: f64,
    pub dev_acc: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.4}\t{:.4}",
            self.epoch, self.train_loss, self.train_acc, self.dev_acc
        )
    }

    /// Everything except wall-clock time, bit for bit.
    pub fn fingerprint(&self) -> (usize, u64, u64, u64) {
        (
            self.epoch,
            self.train_loss.to_bits(),
            self.train_acc.to_bits(),
            self.dev_acc.to_bits(),
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev accuracy.
    pub best: Model,
    pub last: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_acc: f64,
}

/// Shuffled batches for one epoch.
pub fn epoch_batches(lengths: &[usize], batch_size: usize, bucket: bool, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    if !bucket {
        return order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    }
    let mut batches = Vec::new();
    for window in order.chunks(batch_size * BUCKET_BATCHES) {
        let mut window = window.to_vec();
        window.sort_by_key(|&i| lengths[i]);
        batches.extend(window.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

pub(crate) struct ExampleResult {
    pub grads: ParamGrads,
    pub loss: f64,
    pub correct: bool,
    pub macs: u64,
}

pub(crate) fn example_step(
    model: &Model,
    ex: &Example,
    emb: &EmbeddingMatrix,
    dropout_seed: u64,
) -> Result<ExampleResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let mut tape = Tape::new();
    let x = emb.lookup(&ex.ids);
    let fwd = model.forward(&mut tape, &x, ex.parse.as_ref(), Mode::Train, &mut rng)?;
    let loss = tape.cross_entropy(fwd.logits, ex.label)?;
    let value = tape.value(loss).item().expect("scalar loss");
    if !value.is_finite() {
        return Err(CoreError::NonFinite("training loss".into()).into());
    }
    let correct = argmax(tape.value(fwd.probs).data()) == ex.label;
    let grads = tape.backward(loss)?.params();
    Ok(ExampleResult {
        grads,
        loss: value,
        correct,
        macs: fwd.stats.macs,
    })
}

/// Applies `f` to every item, on up to `threads` workers, returning results
/// in input order.
pub(crate) fn map_ordered<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Summary of one pass over a batch sequence.
pub(crate) struct PassStats {
    pub loss: f64,
    pub correct: usize,
    pub macs: u64,
}

/// One optimizer step per batch. Per-example gradients are summed in batch
/// order whatever the thread count.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_epoch(
    model: &mut Model,
    adam: &mut Adam,
    batches: &[Vec<usize>],
    data: &[Example],
    emb: &EmbeddingMatrix,
    seed: u64,
    epoch: usize,
    threads: usize,
) -> Result<PassStats> {
    let mut stats = PassStats {
        loss: 0.0,
        correct: 0,
        macs: 0,
    };
    for batch in batches {
        let results = {
            let m = &*model;
            map_ordered(batch, threads, |&i| {
                example_step(m, &data[i], emb, derive_seed(seed, epoch as u64, i as u64))
            })
        };
        let mut total = ParamGrads::default();
        for r in results {
            let r = r?;
            total.merge(&r.grads);
            stats.loss += r.loss;
            stats.correct += r.correct as usize;
            stats.macs += r.macs;
        }
        total.scale(1.0 / batch.len() as f64);
        let store = model.params_mut();
        store.zero_grads();
        store.accumulate(&total);
        adam.step(store)?;
    }
    Ok(stats)
}

pub fn train(
    config: &TrainConfig,
    num_classes: usize,
    train_set: &[Example],
    dev_set: &[Example],
    emb: &EmbeddingMatrix,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if dev_set.is_empty() {
        return Err(Error::EmptySplit("dev"));
    }
    let mut model = Model::new(
        config.model_config(num_classes),
        &mut ChaCha8Rng::seed_from_u64(config.seed),
    )?;
    let mut adam = Adam::new(config.learning_rate);
    let lengths: Vec<usize> = train_set.iter().map(|e| e.ids.len()).collect();
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::MAX, 0));

    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{METRICS_HEADER}").map_err(Error::io("metrics log"))?;
    }
    let mut history = Vec::new();
    let mut best = (model.clone(), 0, f64::NEG_INFINITY);
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let batches = epoch_batches(&lengths, config.batch_size, config.bucket, &mut shuffle);
        let pass = run_epoch(
            &mut model,
            &mut adam,
            &batches,
            train_set,
            emb,
            config.seed,
            epoch,
            config.threads,
        )?;
        let dev_acc = evaluate(&model, dev_set, emb, num_classes, config.threads)?.accuracy();
        let record = EpochRecord {
            epoch,
            train_loss: pass.loss / train_set.len() as f64,
            train_acc: pass.correct as f64 / train_set.len() as f64,
            dev_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", record.tsv()).map_err(Error::io("metrics log"))?;
        }
        history.push(record);
        // ties move the checkpoint forward but do not reset patience
        if dev_acc >= best.2 {
            stale = if dev_acc > best.2 { 0 } else { stale + 1 };
            best = (model.clone(), epoch, dev_acc);
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        best: best.0,
        last: model,
        history,
        best_epoch: best.1,
        best_dev_acc: best.2,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    /// Documents whose gold label is this class.
    pub gold: usize,
    /// Documents predicted as this class.
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub gold: Vec<usize>,
    pub per_class: Vec<ClassCounts>,
}

impl Evaluation {
    pub fn from_predictions(predictions: Vec<usize>, gold: Vec<usize>, num_classes: usize) -> Self {
        let mut per_class = vec![ClassCounts::default(); num_classes];
        for (&p, &g) in predictions.iter().zip(&gold) {
            per_class[g].gold += 1;
            per_class[p].predicted += 1;
            per_class[g].correct += (p == g) as usize;
        }
        Evaluation {
            predictions,
            gold,
            per_class,
        }
    }

    pub fn correct(&self) -> usize {
        self.per_class.iter().map(|c| c.correct).sum()
    }

    pub fn total(&self) -> usize {
        self.gold.len()
    }

    pub fn accuracy(&self) -> f64 {
        if self.gold.is_empty() {
            0.0
        } else {
            self.correct() as f64 / self.total() as f64
        }
    }
}

/// Eval-mode predictions for every example.
pub fn evaluate(
    model: &Model,
    data: &[Example],
    emb: &EmbeddingMatrix,
    num_classes: usize,
    threads: usize,
) -> Result<Evaluation> {
    let predictions = map_ordered(data, threads, |ex| {
        model
            .infer(&emb.lookup(&ex.ids), ex.parse.as_ref())
            .map(|out| out.predicted())
    })
    .into_iter()
    .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Evaluation::from_predictions(
        predictions,
        data.iter().map(|e| e.label).collect(),
        num_classes,
    ))
}
