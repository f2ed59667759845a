use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ngram_forest::bench::{benchmark, BENCH_HEADER};
use ngram_forest::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use ngram_forest::config::{read_pairs, render_pairs, TrainConfig};
use ngram_forest::core::explain::{extract_evidence, render_highlights, HighlightFormat, DEFAULT_THRESHOLD};
use ngram_forest::core::model::EncoderKind;
use ngram_forest::core::{Bracket, MemoryCellVariant, NgramDag, StructureKind};
use ngram_forest::corpus::{
    load_corpus, load_corpus_with_labels, save_corpus, split_stratified, tokenize, Corpus, Split,
};
use ngram_forest::embeddings::{load_embeddings, EmbeddingMatrix};
use ngram_forest::fidelity::{FidelitySetup, DEFAULT_N_VALUES};
use ngram_forest::synth::{planted_trigram_corpus, synthetic_embeddings, write_embeddings, SynthConfig};
use ngram_forest::train::{evaluate, examples, train, Example};
use ngram_forest::vocab::Vocab;
use ngram_forest::{Error, Result};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Hierarchical ngram text classifiers with attention-based evidence.
#[derive(Parser, Debug)]
#[command(name = "ngram-forest", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on a labelled corpus; writes a checkpoint and a metrics log.
    Train(TrainCmd),
    /// Accuracy and per-class counts of a checkpoint on a corpus.
    Eval(EvalCmd),
    /// Attention evidence for documents.
    Explain(ExplainCmd),
    /// Dev accuracy over a grid of encoders and maximum orders.
    Ablate(AblateCmd),
    /// Timing, multiply-accumulate and parameter report.
    Bench(BenchCmd),
    /// Prints the nodes of a structure as `id start order left right`.
    DumpStructure(DumpCmd),
    /// Retrains BiLSTM classifiers on extracted evidence and random windows.
    Fidelity(FidelityCmd),
    /// Writes a planted-trigram corpus and matching embeddings.
    Synth(SynthCmd),
}

/// Hyperparameters; each flag overrides the same key in `--config`.
#[derive(Args, Debug, Default)]
struct Hyper {
    /// `key = value` file; keys are the flag names below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    memory_cell: Option<MemoryCellVariant>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    attention_dim: Option<usize>,
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    bucket: Option<bool>,
    /// Labelled corpus, `label<TAB>text` per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pretrained vectors, `token v1 … ve` per line. Random vectors otherwise.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[command(flatten)]
    hyper: Hyper,
    /// Output directory for `checkpoint.bin`, `metrics.tsv` and `config.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Part {
    All,
    Train,
    Dev,
    Test,
}

#[derive(Args, Debug)]
struct EvalCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Which stratified split of the corpus to score.
    #[arg(long, value_enum, default_value = "all")]
    split: Part,
    /// Seed of the stratified split.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Tsv,
    Plain,
    Html,
}

#[derive(Args, Debug)]
struct ExplainCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labelled corpus whose documents are explained.
    #[arg(long, conflicts_with = "text")]
    corpus: Option<PathBuf>,
    /// A single document.
    #[arg(long)]
    text: Option<String>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    /// Writes one `doc-<i>.<ext>` file per document instead of stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateCmd {
    #[command(flatten)]
    hyper: Hyper,
    /// Comma-separated encoders.
    #[arg(long, value_delimiter = ',', default_value = "left-forest,cnn,bilstm")]
    encoders: Vec<EncoderKind>,
    /// Comma-separated maximum orders.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9")]
    orders: Vec<usize>,
}

#[derive(Args, Debug)]
struct BenchCmd {
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long, value_delimiter = ',', default_value = "left-forest,cnn,bilstm")]
    encoders: Vec<EncoderKind>,
    /// Comma-separated maximum orders; one row per (encoder, order).
    #[arg(long, value_delimiter = ',')]
    orders: Vec<usize>,
    /// Without `--corpus`: number of random documents.
    #[arg(long, default_value_t = 1000)]
    docs: usize,
    /// Without `--corpus`: tokens per random document.
    #[arg(long, default_value_t = 200)]
    length: usize,
}

#[derive(Args, Debug)]
struct DumpCmd {
    #[arg(long, default_value = "pyramid")]
    structure: StructureKind,
    /// Number of tokens; ignored with `--text` or `--parse`.
    #[arg(long, default_value_t = 4)]
    tokens: usize,
    #[arg(long, default_value_t = 7)]
    max_order: usize,
    #[arg(long)]
    text: Option<String>,
    /// Binary bracketing for `tree`, e.g. `((a b) (c d))`.
    #[arg(long)]
    parse: Option<Bracket>,
}

#[derive(Args, Debug)]
struct FidelityCmd {
    #[command(flatten)]
    hyper: Hyper,
    /// Trained explainer. Its vocabulary and embeddings are reused.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',')]
    n_values: Vec<usize>,
}

#[derive(Args, Debug)]
struct SynthCmd {
    #[arg(long)]
    out_corpus: PathBuf,
    #[arg(long)]
    out_embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    docs_per_class: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Hyperparameters and paths after merging the config file with flags.
struct Effective {
    train: TrainConfig,
    corpus: Option<PathBuf>,
    embeddings: Option<PathBuf>,
}

impl Hyper {
    fn resolve(&self) -> Result<Effective> {
        let mut eff = Effective {
            train: TrainConfig::default(),
            corpus: None,
            embeddings: None,
        };
        if let Some(path) = &self.config {
            for (k, v) in read_pairs(path)? {
                match k.as_str() {
                    "corpus" => eff.corpus = Some(v.into()),
                    "embeddings" => eff.embeddings = Some(v.into()),
                    _ => eff.train.set(&k, &v)?,
                }
            }
        }
        let t = &mut eff.train;
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { t.$f = v; } )* };
        }
        over!(
            encoder,
            memory_cell,
            learning_rate,
            batch_size,
            dropout,
            hidden_dim,
            embedding_dim,
            attention_dim,
            max_order,
            epochs,
            patience,
            seed,
            threads,
            bucket
        );
        if self.corpus.is_some() {
            eff.corpus = self.corpus.clone();
        }
        if self.embeddings.is_some() {
            eff.embeddings = self.embeddings.clone();
        }
        eff.train.validate()?;
        Ok(eff)
    }
}

impl Effective {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut pairs = self.train.pairs();
        for (k, v) in [("corpus", &self.corpus), ("embeddings", &self.embeddings)] {
            if let Some(p) = v {
                pairs.push((k.into(), p.display().to_string()));
            }
        }
        pairs
    }

    /// The effective config on stderr, loadable again with `--config`.
    fn echo(&self) {
        eprint!("{}", render_pairs(&self.pairs()));
    }

    fn corpus_path(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::Config("no corpus given (--corpus or `corpus =` in --config)".into()))
    }

    fn load(&self) -> Result<Data> {
        let corpus = load_corpus(self.corpus_path()?)?;
        let split = split_stratified(&corpus, self.train.seed)?;
        let vocab = Vocab::build(&corpus.documents);
        let embeddings = match &self.embeddings {
            Some(p) => load_embeddings(p, &vocab, self.train.embedding_dim, self.train.seed)?,
            None => EmbeddingMatrix::random(vocab.len(), self.train.embedding_dim, self.train.seed),
        };
        let stats = corpus.length_stats();
        eprintln!(
            "# {} documents, {} classes, lengths {}..{} (mean {:.1}), vocab {}, coverage {:.1}%",
            stats.documents,
            corpus.num_classes(),
            stats.min,
            stats.max,
            stats.mean,
            vocab.len(),
            embeddings.coverage()
        );
        Ok(Data {
            corpus,
            split,
            vocab,
            embeddings,
        })
    }
}

struct Data {
    corpus: Corpus,
    split: Split,
    vocab: Vocab,
    embeddings: EmbeddingMatrix,
}

impl Data {
    fn part(&self, idx: &[usize]) -> Vec<Example> {
        examples(&self.corpus.subset(idx), &self.vocab)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn stdout_err(source: io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source,
    }
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let eff = cmd.hyper.resolve()?;
    eff.echo();
    let out = cmd.out.unwrap_or_else(|| PathBuf::from("run"));
    let data = eff.load()?;
    fs::create_dir_all(&out).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    write_file(&out.join("config.txt"), &render_pairs(&eff.pairs()))?;

    let (tr, dv, te) = (
        data.part(&data.split.train),
        data.part(&data.split.dev),
        data.part(&data.split.test),
    );
    let k = data.corpus.num_classes();
    let mut log = Vec::new();
    let outcome = train(&eff.train, k, &tr, &dv, &data.embeddings, Some(&mut log))?;
    let log = String::from_utf8(log).expect("metrics are ascii");
    write_file(&out.join("metrics.tsv"), &log)?;
    for r in &outcome.history {
        eprintln!("# epoch {} took {:.2}s", r.epoch, r.seconds);
    }

    let test = evaluate(&outcome.best, &te, &data.embeddings, k, eff.train.threads)?;
    let ck = Checkpoint {
        model: outcome.best,
        labels: data.corpus.label_names.clone(),
        vocab: data.vocab,
        embeddings: data.embeddings,
    };
    save_checkpoint(&ck, out.join("checkpoint.bin"))?;
    let mut so = io::stdout().lock();
    write!(so, "{log}").map_err(stdout_err)?;
    writeln!(so, "best_epoch\t{}", outcome.best_epoch).map_err(stdout_err)?;
    writeln!(so, "best_dev_acc\t{:.4}", outcome.best_dev_acc).map_err(stdout_err)?;
    writeln!(so, "test_acc\t{:.4}", test.accuracy()).map_err(stdout_err)?;
    Ok(())
}

fn cmd_eval(cmd: EvalCmd) -> Result<()> {
    eprintln!(
        "checkpoint = {}\ncorpus = {}\nsplit = {}\nseed = {}\nthreads = {}",
        cmd.checkpoint.display(),
        cmd.corpus.display(),
        format!("{:?}", cmd.split).to_lowercase(),
        cmd.seed,
        cmd.threads
    );
    let ck = load_checkpoint(&cmd.checkpoint)?;
    let corpus = load_corpus_with_labels(&cmd.corpus, &ck.labels)?;
    let corpus = match cmd.split {
        Part::All => corpus,
        part => {
            let split = split_stratified(&corpus, cmd.seed)?;
            corpus.subset(match part {
                Part::Train => &split.train,
                Part::Dev => &split.dev,
                _ => &split.test,
            })
        }
    };
    let data = examples(&corpus, &ck.vocab);
    let ev = evaluate(&ck.model, &data, &ck.embeddings, ck.labels.len(), cmd.threads)?;
    let mut so = io::stdout().lock();
    writeln!(so, "accuracy\t{:.4}\t{}/{}", ev.accuracy(), ev.correct(), ev.total()).map_err(stdout_err)?;
    writeln!(so, "label\tgold\tpredicted\tcorrect").map_err(stdout_err)?;
    for (name, c) in ck.labels.iter().zip(&ev.per_class) {
        writeln!(so, "{name}\t{}\t{}\t{}", c.gold, c.predicted, c.correct).map_err(stdout_err)?;
    }
    Ok(())
}

fn cmd_explain(cmd: ExplainCmd) -> Result<()> {
    eprintln!(
        "checkpoint = {}\nthreshold = {}\nformat = {}",
        cmd.checkpoint.display(),
        cmd.threshold,
        format!("{:?}", cmd.format).to_lowercase()
    );
    let ck = load_checkpoint(&cmd.checkpoint)?;
    let docs: Vec<(Vec<String>, Option<Bracket>)> = match (&cmd.corpus, &cmd.text) {
        (Some(p), _) => {
            let c = load_corpus_with_labels(p, &ck.labels)?;
            (0..c.len())
                .map(|i| (c.documents[i].clone(), c.parse(i).cloned()))
                .collect()
        }
        (None, Some(t)) if t.trim_start().starts_with('(') => {
            let b: Bracket = t.parse()?;
            vec![(b.leaves().into_iter().map(str::to_lowercase).collect(), Some(b))]
        }
        (None, Some(t)) => vec![(tokenize(t), None)],
        (None, None) => return Err(Error::Config("explain needs --corpus or --text".into())),
    };
    if let Some(dir) = &cmd.out_dir {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let mut so = io::stdout().lock();
    for (i, (tokens, parse)) in docs.iter().enumerate() {
        let out = ck
            .model
            .infer(&ck.embeddings.lookup(&ck.vocab.ids(tokens)), parse.as_ref())?;
        let report = extract_evidence(&out, tokens, cmd.threshold)?;
        let label = &ck.labels[report.predicted];
        let prob = out.probs[report.predicted];
        let (text, ext) = match cmd.format {
            Format::Tsv => {
                let mut s = format!("# doc {i}\tpredicted {label}\tp {prob:.4}\n");
                for e in &report.evidence {
                    s.push_str(&format!(
                        "{i}\t{}\t{}\t{:.6}\t{}\n",
                        e.span.start, e.span.order, e.weight, e.text
                    ));
                }
                (s, "tsv")
            }
            Format::Plain => (
                format!(
                    "{label}\t{prob:.4}\t{}\n",
                    render_highlights(&report, HighlightFormat::Plain)
                ),
                "txt",
            ),
            Format::Html => (
                format!(
                    "<p data-label=\"{label}\" data-prob=\"{prob:.4}\">{}</p>\n",
                    render_highlights(&report, HighlightFormat::Html)
                ),
                "html",
            ),
        };
        match &cmd.out_dir {
            Some(dir) => write_file(&dir.join(format!("doc-{i}.{ext}")), &text)?,
            None => so.write_all(text.as_bytes()).map_err(stdout_err)?,
        }
    }
    Ok(())
}

fn cmd_ablate(cmd: AblateCmd) -> Result<()> {
    let eff = cmd.hyper.resolve()?;
    eff.echo();
    eprintln!("encoders = {}", join(&cmd.encoders));
    eprintln!("orders = {}", join(&cmd.orders));
    let data = eff.load()?;
    let (tr, dv) = (data.part(&data.split.train), data.part(&data.split.dev));
    let mut so = io::stdout().lock();
    writeln!(so, "encoder\tK\tdev_acc").map_err(stdout_err)?;
    for &encoder in &cmd.encoders {
        let orders: &[usize] = if encoder.uses_max_order() {
            &cmd.orders
        } else {
            &[eff.train.max_order]
        };
        for &k in orders {
            let cfg = TrainConfig {
                encoder,
                max_order: k,
                ..eff.train.clone()
            };
            let acc = train(&cfg, data.corpus.num_classes(), &tr, &dv, &data.embeddings, None)?.best_dev_acc;
            let k = if encoder.uses_max_order() {
                k.to_string()
            } else {
                "-".into()
            };
            writeln!(so, "{encoder}\t{k}\t{acc:.4}").map_err(stdout_err)?;
            so.flush().map_err(stdout_err)?;
        }
    }
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn random_examples(docs: usize, length: usize, vocab: usize, classes: usize, seed: u64) -> Vec<Example> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|i| Example {
            ids: (0..length).map(|_| rng.gen_range(1..vocab)).collect(),
            label: i % classes,
            parse: None,
        })
        .collect()
}

fn cmd_bench(cmd: BenchCmd) -> Result<()> {
    let eff = cmd.hyper.resolve()?;
    eff.echo();
    eprintln!("encoders = {}", join(&cmd.encoders));
    let orders = if cmd.orders.is_empty() {
        vec![eff.train.max_order]
    } else {
        cmd.orders.clone()
    };
    eprintln!("orders = {}", join(&orders));
    let (classes, tr, dv, emb) = if eff.corpus.is_some() {
        let data = eff.load()?;
        let (tr, dv) = (data.part(&data.split.train), data.part(&data.split.dev));
        (data.corpus.num_classes(), tr, dv, data.embeddings)
    } else {
        eprintln!("docs = {}\nlength = {}", cmd.docs, cmd.length);
        if cmd.docs == 0 || cmd.length == 0 {
            return Err(Error::Config("docs and length must be positive".into()));
        }
        let vocab = 5000;
        let tr = random_examples(cmd.docs, cmd.length, vocab, 5, eff.train.seed);
        let dv = tr[..(cmd.docs / 10).max(1)].to_vec();
        (
            5,
            tr,
            dv,
            EmbeddingMatrix::random(vocab, eff.train.embedding_dim, eff.train.seed),
        )
    };
    let mut so = io::stdout().lock();
    writeln!(so, "{BENCH_HEADER}").map_err(stdout_err)?;
    for &k in &orders {
        let cfg = TrainConfig {
            max_order: k,
            ..eff.train.clone()
        };
        let encoders: Vec<EncoderKind> = if k == orders[0] {
            cmd.encoders.clone()
        } else {
            cmd.encoders.iter().copied().filter(|e| e.uses_max_order()).collect()
        };
        for row in benchmark(&cfg, &encoders, classes, &tr, &dv, &emb)? {
            writeln!(so, "{}", row.tsv()).map_err(stdout_err)?;
            so.flush().map_err(stdout_err)?;
        }
    }
    Ok(())
}

fn cmd_dump(cmd: DumpCmd) -> Result<()> {
    let n = match (&cmd.parse, &cmd.text) {
        (Some(b), _) => b.leaf_count(),
        (None, Some(t)) => tokenize(t).len(),
        (None, None) => cmd.tokens,
    };
    eprintln!(
        "structure = {}\ntokens = {n}\nmax-order = {}",
        cmd.structure.as_str(),
        cmd.max_order
    );
    let dag = NgramDag::build(cmd.structure, n, cmd.max_order, cmd.parse.as_ref())?;
    let mut so = io::stdout().lock();
    for node in dag.nodes() {
        let (l, r) = node.children.map_or((-1, -1), |(l, r)| (l as i64, r as i64));
        writeln!(so, "{}\t{}\t{}\t{l}\t{r}", node.id, node.span.start, node.span.order).map_err(stdout_err)?;
    }
    Ok(())
}

fn cmd_fidelity(cmd: FidelityCmd) -> Result<()> {
    let eff = cmd.hyper.resolve()?;
    eff.echo();
    let n_values = if cmd.n_values.is_empty() {
        DEFAULT_N_VALUES.to_vec()
    } else {
        cmd.n_values.clone()
    };
    eprintln!(
        "checkpoint = {}\nn-values = {}",
        cmd.checkpoint.display(),
        join(&n_values)
    );
    let ck = load_checkpoint(&cmd.checkpoint)?;
    let corpus = load_corpus_with_labels(eff.corpus_path()?, &ck.labels)?;
    let split = split_stratified(&corpus, eff.train.seed)?;
    let classifier = TrainConfig {
        embedding_dim: ck.embeddings.dim(),
        ..eff.train.clone()
    };
    let setup = FidelitySetup {
        explainer: &ck.model,
        vocab: &ck.vocab,
        embeddings: &ck.embeddings,
        train: &corpus.subset(&split.train),
        dev: &corpus.subset(&split.dev),
        classifier,
    };
    let report = setup.run(&n_values)?;
    io::stdout()
        .lock()
        .write_all(report.tsv().as_bytes())
        .map_err(stdout_err)
}

fn cmd_synth(cmd: SynthCmd) -> Result<()> {
    eprintln!(
        "classes = {}\ndocs-per-class = {}\ndim = {}\nscale = {}\nseed = {}",
        cmd.classes, cmd.docs_per_class, cmd.dim, cmd.scale, cmd.seed
    );
    let cfg = SynthConfig {
        classes: cmd.classes,
        docs_per_class: cmd.docs_per_class,
        seed: cmd.seed,
        ..SynthConfig::default()
    };
    let synth = planted_trigram_corpus(&cfg)?;
    save_corpus(&synth.corpus, &cmd.out_corpus)?;
    if let Some(path) = &cmd.out_embeddings {
        let vocab = Vocab::build(&synth.corpus.documents);
        write_embeddings(
            path,
            &vocab,
            &synthetic_embeddings(&vocab, cmd.dim, cmd.scale, cmd.seed),
        )?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Explain(c) => cmd_explain(c),
        Command::Ablate(c) => cmd_ablate(c),
        Command::Bench(c) => cmd_bench(c),
        Command::DumpStructure(c) => cmd_dump(c),
        Command::Fidelity(c) => cmd_fidelity(c),
        Command::Synth(c) => cmd_synth(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
