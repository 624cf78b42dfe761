//! Command-line entry points: `train`, `embed`, `eval`.
//!
//! Every flag can also come from a flat `key=value` config file passed with
//! `--config`; explicit flags override file values, unknown keys are
//! rejected. Exit codes: 0 success, 1 runtime/data error, 2 usage error.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::corpus::{self, PairFormat};
use crate::error::Error;
use crate::eval::evaluate;
use crate::objectives::{LossConfig, LossVariant};
use crate::train::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "svae", version, about = "LSTM sentence autoencoders for semantic similarity")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an autoencoder and write a checkpoint
    Train(TrainArgs),
    /// Print sentence embeddings from a checkpoint
    Embed(EmbedArgs),
    /// Score a pair dataset and report Pearson correlation
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value config file mirroring the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training corpus, one sentence per line
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pretrained word embeddings in word2vec text format
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Loss variant: basic | ce-kld | nvi
    #[arg(long)]
    model: Option<String>,
    /// Checkpoint output path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate (default 0.1)
    #[arg(long)]
    lr: Option<f64>,
    /// Batch size (default 32)
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Token-KLD weight (default 1.0)
    #[arg(long)]
    lambda: Option<f64>,
    /// Gaussian-KLD weight (default 1.0)
    #[arg(long)]
    beta: Option<f64>,
    /// Label smoothing of the source distribution (default 0.1)
    #[arg(long)]
    smoothing: Option<f64>,
    /// Hidden units (default: twice the embedding dimension)
    #[arg(long)]
    hidden: Option<usize>,
    /// Sentence truncation length (default 30)
    #[arg(long = "max-len")]
    max_len: Option<usize>,
    /// Gradient clipping norm (default 5.0)
    #[arg(long)]
    clip: Option<f64>,
    /// Keep only the first n embedding rows
    #[arg(long = "vocab-limit")]
    vocab_limit: Option<usize>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sentences to embed, one per line
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write to this file instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Pair file (SICK TSV, or STS tab-separated sentence pairs)
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Dataset format: sick | sts
    #[arg(long)]
    format: Option<String>,
    /// Gold-score file (required for sts)
    #[arg(long)]
    gold: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Embed(args) => cmd_embed(args),
        Cmd::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run 'svae <command> --help' for usage");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

// ── config file handling ─────────────────────────────────────────────

fn read_config_file(path: &Path, allowed: &[&str]) -> CliResult<HashMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "config line {} is not key=value: '{line}'",
                i + 1
            ))
        })?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(CliError::Usage(format!("unknown config key '{k}'")));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Flag wins over config file; config value is parsed with the flag's type.
fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    cfg: &HashMap<String, String>,
    key: &str,
) -> CliResult<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            CliError::Usage(format!("bad value '{raw}' for config key '{key}'"))
        }),
    }
}

fn required<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required --{what} (or {what}= in --config)")))
}

// ── subcommands ──────────────────────────────────────────────────────

const TRAIN_KEYS: [&str; 15] = [
    "corpus", "embeddings", "model", "out", "epochs", "lr", "batch", "seed", "lambda", "beta",
    "smoothing", "hidden", "max-len", "clip", "vocab-limit",
];

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let cfg = match &args.config {
        Some(p) => read_config_file(p, &TRAIN_KEYS)?,
        None => HashMap::new(),
    };
    let corpus_path = required(resolve(args.corpus, &cfg, "corpus")?, "corpus")?;
    let embeddings_path = required(resolve(args.embeddings, &cfg, "embeddings")?, "embeddings")?;
    let model = required(resolve(args.model, &cfg, "model")?, "model")?;
    let out = required(resolve(args.out, &cfg, "out")?, "out")?;

    let variant: LossVariant = model
        .parse()
        .map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let mut loss = LossConfig::new(variant);
    if let Some(v) = resolve(args.lambda, &cfg, "lambda")? {
        loss.lambda_kld = v;
    }
    if let Some(v) = resolve(args.beta, &cfg, "beta")? {
        loss.beta = v;
    }
    if let Some(v) = resolve(args.smoothing, &cfg, "smoothing")? {
        loss.smoothing_eps = v;
    }
    let mut tc = TrainConfig::new(loss);
    if let Some(v) = resolve(args.epochs, &cfg, "epochs")? {
        tc.epochs = v;
    }
    if let Some(v) = resolve(args.lr, &cfg, "lr")? {
        tc.lr = v;
    }
    if let Some(v) = resolve(args.batch, &cfg, "batch")? {
        tc.batch_size = v;
    }
    if let Some(v) = resolve(args.seed, &cfg, "seed")? {
        tc.seed = v;
    }
    if let Some(v) = resolve(args.max_len, &cfg, "max-len")? {
        tc.max_len = v;
    }
    if let Some(v) = resolve(args.clip, &cfg, "clip")? {
        tc.clip_norm = v;
    }
    tc.hidden_dim = resolve(args.hidden, &cfg, "hidden")?;
    let vocab_limit = resolve(args.vocab_limit, &cfg, "vocab-limit")?;
    // reject bad values before doing any file work
    tc.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let (vocab, table) = corpus::load_embeddings(&embeddings_path, vocab_limit)?;
    let lines = corpus::load_corpus(&corpus_path)?;

    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let model = train(&lines, &vocab, &table, &tc, |stats| {
        let _ = writeln!(lock, "{}", stats.tsv());
    })?;
    drop(lock);

    checkpoint::save(&model, &out)?;
    Ok(())
}

const EMBED_KEYS: [&str; 3] = ["checkpoint", "input", "out"];

fn cmd_embed(args: EmbedArgs) -> CliResult<()> {
    let cfg = match &args.config {
        Some(p) => read_config_file(p, &EMBED_KEYS)?,
        None => HashMap::new(),
    };
    let ckpt = required(resolve(args.checkpoint, &cfg, "checkpoint")?, "checkpoint")?;
    let input = required(resolve(args.input, &cfg, "input")?, "input")?;
    let out = resolve(args.out, &cfg, "out")?;

    let model = checkpoint::load(&ckpt)?;
    let text = fs::read_to_string(&input).map_err(Error::from)?;

    let mut buf = String::new();
    for (i, line) in text.lines().enumerate() {
        let embedding = model.embed_sentence(line).map_err(|e| match e {
            Error::EmptyInput(_) => Error::Parse {
                line: i + 1,
                msg: "sentence tokenizes to nothing".into(),
            },
            other => other,
        })?;
        buf.push_str(line);
        buf.push('\t');
        for (j, v) in embedding.iter().enumerate() {
            if j > 0 {
                buf.push(' ');
            }
            // nine significant digits
            buf.push_str(&format!("{v:.8e}"));
        }
        buf.push('\n');
    }
    match out {
        Some(path) => fs::write(path, buf).map_err(Error::from)?,
        None => print!("{buf}"),
    }
    Ok(())
}

const EVAL_KEYS: [&str; 4] = ["checkpoint", "pairs", "format", "gold"];

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let cfg = match &args.config {
        Some(p) => read_config_file(p, &EVAL_KEYS)?,
        None => HashMap::new(),
    };
    let ckpt = required(resolve(args.checkpoint, &cfg, "checkpoint")?, "checkpoint")?;
    let pairs = required(resolve(args.pairs, &cfg, "pairs")?, "pairs")?;
    let format = required(resolve(args.format, &cfg, "format")?, "format")?;
    let gold = resolve(args.gold, &cfg, "gold")?;

    let format = match format.as_str() {
        "sick" => PairFormat::Sick,
        "sts" => PairFormat::Sts,
        other => {
            return Err(CliError::Usage(format!(
                "unknown format '{other}', expected sick|sts"
            )))
        }
    };
    if format == PairFormat::Sts && gold.is_none() {
        return Err(CliError::Usage("sts format needs --gold".into()));
    }

    let model = checkpoint::load(&ckpt)?;
    let dataset = corpus::load_pairs(&pairs, format, gold.as_ref())?;
    let report = evaluate(&model, &dataset)?;

    for idx in &report.excluded {
        eprintln!("warning: pair {idx} excluded, a sentence tokenizes to nothing");
    }
    print!("{}", report.to_tsv());
    eprintln!("{}", report.summary(&model.config.loss.variant.to_string()));
    Ok(())
}
