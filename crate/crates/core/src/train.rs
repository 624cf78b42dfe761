//! SGD training loop: equal-length bucketing, global-norm gradient clipping,
//! per-epoch loss logging. Deterministic given the seed — initialization,
//! shuffling and latent noise all come from one seeded ChaCha8 generator.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EmbeddingTable, Vocabulary, END_ID, START_ID};
use crate::error::{Error, Result};
use crate::lstm::ModelParams;
use crate::model::Model;
use crate::objectives::{batch_loss_on, LossConfig};

/// Upper bound on total parameter elements (model + frozen table); a config
/// above this would not train at desk scale and is rejected up front.
pub const MAX_PARAM_ELEMENTS: usize = 100_000_000;

/// The generator behind every random draw, recorded in checkpoints.
pub const RNG_NAME: &str = "chacha8";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub max_len: usize,
    /// Defaults to twice the embedding dimension when unset.
    pub hidden_dim: Option<usize>,
}

impl TrainConfig {
    pub fn new(loss: LossConfig) -> Self {
        TrainConfig {
            lr: 0.1,
            epochs: 10,
            batch_size: 32,
            clip_norm: 5.0,
            seed: 42,
            loss,
            max_len: 30,
            hidden_dim: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::Config(format!(
                "clip norm must be > 0, got {}",
                self.clip_norm
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be >= 1".into()));
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::Config("hidden dim must be >= 1".into()));
        }
        self.loss.validate()
    }

    pub fn resolve_hidden(&self, embedding_dim: usize) -> usize {
        self.hidden_dim.unwrap_or(2 * embedding_dim)
    }
}

/// One line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub ce: f64,
    pub token_kld: f64,
    pub gaussian_kld: f64,
}

impl EpochStats {
    /// Tab-separated log line: epoch, total, ce, token_kld, gauss_kld.
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch, self.total, self.ce, self.token_kld, self.gaussian_kld
        )
    }
}

/// L2 norm over a flattened list of gradients.
pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Scale factor that caps the global norm at `clip_norm` (1.0 when already
/// within bounds). Rescaling changes magnitude only, never direction.
pub fn clip_scale(norm: f64, clip_norm: f64) -> f64 {
    if norm > clip_norm {
        clip_norm / norm
    } else {
        1.0
    }
}

/// One SGD update: clip the gradient list to `clip_norm` by global L2 norm,
/// then `theta <- theta - lr * grad`. Gradients must align with
/// [`ModelParams::named_mut`] order. A non-finite gradient aborts with the
/// parameter's name.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &[Vec<f64>],
    lr: f64,
    clip_norm: f64,
) -> Result<()> {
    let mut named = params.named_mut();
    if named.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            op: "sgd_step",
            lhs: vec![named.len()],
            rhs: vec![grads.len()],
        });
    }
    for ((name, t), g) in named.iter().zip(grads) {
        if t.numel() != g.len() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                lhs: t.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                param: name.clone(),
            });
        }
    }
    let scale = clip_scale(global_norm(grads), clip_norm) * lr;
    for ((_, t), g) in named.iter_mut().zip(grads) {
        for (p, d) in t.data_mut().iter_mut().zip(g) {
            *p -= scale * d;
        }
    }
    Ok(())
}

fn estimate_param_elements(
    vocab: usize,
    embedding_dim: usize,
    hidden: usize,
    latent: bool,
) -> usize {
    let lstm = 4 * (hidden * embedding_dim + hidden * hidden + hidden);
    let proj = vocab * hidden + vocab;
    let heads = if latent { 2 * (hidden * hidden + hidden) } else { 0 };
    let table = vocab * embedding_dim;
    2 * lstm + proj + 2 * embedding_dim + heads + table
}

/// Train a model on raw sentence lines. Lines that tokenize to nothing are
/// skipped. Emits one [`EpochStats`] per epoch through `on_epoch`.
pub fn train<F: FnMut(&EpochStats)>(
    corpus: &[String],
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<Model> {
    config.validate()?;
    let embedding_dim = table.dim();
    let hidden = config.resolve_hidden(embedding_dim);
    let estimated =
        estimate_param_elements(vocab.len(), embedding_dim, hidden, config.loss.uses_latent());
    if estimated > MAX_PARAM_ELEMENTS {
        return Err(Error::Config(format!(
            "config implies ~{estimated} parameter elements, above the {MAX_PARAM_ELEMENTS} limit"
        )));
    }

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|line| vocab.sentence_to_ids(line, config.max_len))
        .filter(|ids| !ids.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::new(
        vocab.len(),
        embedding_dim,
        hidden,
        table.row(START_ID)?,
        table.row(END_ID)?,
        config.loss.uses_latent(),
        &mut rng,
    )?;

    // equal-length buckets; batches never mix lengths
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in sentences.iter().enumerate() {
        buckets.entry(s.len()).or_default().push(i);
    }

    for epoch in 1..=config.epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for bucket in buckets.values() {
            let mut order = bucket.clone();
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                batches.push(chunk.to_vec());
            }
        }
        batches.shuffle(&mut rng);

        let mut sums = [0.0f64; 4];
        for batch in &batches {
            let batch_sents: Vec<Vec<usize>> =
                batch.iter().map(|&i| sentences[i].clone()).collect();
            let noises: Option<Vec<Vec<f64>>> = config.loss.uses_latent().then(|| {
                batch_sents
                    .iter()
                    .map(|_| (0..hidden).map(|_| standard_normal(&mut rng)).collect())
                    .collect()
            });

            let mut tape = crate::tape::Tape::new();
            let ids = params.bind(&mut tape);
            let (batch_total, exprs) = batch_loss_on(
                &mut tape,
                &ids,
                table,
                &config.loss,
                &batch_sents,
                noises.as_deref(),
            )?;
            tape.backward(batch_total)?;

            let ordered = ids.ordered();
            let grads: Vec<Vec<f64>> = ordered
                .iter()
                .map(|&id| {
                    tape.grad(id)
                        .map(|g| g.to_vec())
                        .unwrap_or_else(|| vec![0.0; tape.tensor(id).numel()])
                })
                .collect();
            sgd_step(&mut params, &grads, config.lr, config.clip_norm)?;

            for expr in &exprs {
                let t = expr.terms(&tape)?;
                sums[0] += t.total;
                sums[1] += t.ce;
                sums[2] += t.token_kld;
                sums[3] += t.gaussian_kld;
            }
        }

        let n = sentences.len() as f64;
        on_epoch(&EpochStats {
            epoch,
            total: sums[0] / n,
            ce: sums[1] / n,
            token_kld: sums[2] / n,
            gaussian_kld: sums[3] / n,
        });
    }

    Ok(Model {
        params,
        vocab: vocab.clone(),
        table: table.clone(),
        config: config.clone(),
    })
}

/// Box-Muller standard normal; two uniform draws per sample keeps the
/// consumption pattern simple and stable.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen_range(0.0..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        if u1 > 0.0 {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab_and_table;
    use crate::objectives::LossVariant;
    use rand::Rng;

    fn toy_setup(dim: usize) -> (Vocabulary, EmbeddingTable, Vec<String>) {
        let words = [
            "the", "a", "cat", "dog", "bird", "sat", "ran", "flew", "on", "under", "mat", "tree",
        ];
        let mut r = ChaCha8Rng::seed_from_u64(1234);
        let entries = words
            .iter()
            .map(|w| {
                let v: Vec<f64> = (0..dim).map(|_| r.gen_range(-0.5..0.5)).collect();
                (w.to_string(), v)
            })
            .collect();
        let (vocab, table) = build_vocab_and_table(entries, dim).unwrap();
        let corpus = vec![
            "the cat sat on mat".to_string(),
            "a dog ran under tree".to_string(),
            "the bird flew".to_string(),
            "a cat ran".to_string(),
        ];
        (vocab, table, corpus)
    }

    #[test]
    fn sgd_step_definition() {
        let mut p = ModelParams::zeros(4, 1, 1);
        for (_, t) in p.named_mut() {
            for v in t.data_mut() {
                *v = 1.0;
            }
        }
        let grads: Vec<Vec<f64>> = p.named().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let before: Vec<f64> = p.named().iter().flat_map(|(_, t)| t.data().to_vec()).collect();
        sgd_step(&mut p, &grads, 0.1, 5.0).unwrap();
        let after: Vec<f64> = p.named().iter().flat_map(|(_, t)| t.data().to_vec()).collect();
        // zero grads: bitwise unchanged
        assert_eq!(
            before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );

        // theta=1.0, grad=0.5, lr=0.1, no clipping -> 0.95
        let mut grads = grads;
        grads[0][0] = 0.5;
        sgd_step(&mut p, &grads, 0.1, 5.0).unwrap();
        let v = p.named()[0].1.data()[0];
        assert!((v - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_clips_to_norm() {
        // single grad of norm 10, clip 5: effective step is lr * 5 * direction
        let mut p = ModelParams::zeros(4, 1, 1);
        let mut grads: Vec<Vec<f64>> =
            p.named().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        grads[0][0] = 10.0;
        sgd_step(&mut p, &grads, 0.1, 5.0).unwrap();
        let v = p.named()[0].1.data()[0];
        assert!((v - (-0.1 * 5.0)).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_rejects_non_finite_naming_param() {
        let mut p = ModelParams::zeros(4, 1, 1);
        let mut grads: Vec<Vec<f64>> =
            p.named().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        grads[3][0] = f64::NAN;
        match sgd_step(&mut p, &grads, 0.1, 5.0) {
            Err(Error::NonFinite { param }) => assert_eq!(param, "enc.w_g"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn clipping_preserves_direction() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let grads: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..17).map(|_| r.gen_range(-3.0..3.0)).collect())
            .collect();
        let norm = global_norm(&grads);
        assert!(norm > 1.0);
        let scale = clip_scale(norm, 1.0);
        let clipped: Vec<Vec<f64>> = grads
            .iter()
            .map(|g| g.iter().map(|v| v * scale).collect())
            .collect();

        let flat = |gs: &[Vec<f64>]| gs.iter().flatten().cloned().collect::<Vec<f64>>();
        let (a, b) = (flat(&grads), flat(&clipped));
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cosine = dot / (na * nb);
        assert!((cosine - 1.0).abs() < 1e-12);
        assert!((nb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (vocab, table, corpus) = toy_setup(6);
        let mut cfg = TrainConfig::new(LossConfig::new(LossVariant::Basic));
        cfg.epochs = 5;
        cfg.seed = 7;
        let run = || {
            let mut log = Vec::new();
            let model = train(&corpus, &vocab, &table, &cfg, |s| log.push(*s)).unwrap();
            (log, model)
        };
        let (log1, m1) = run();
        let (log2, m2) = run();
        assert_eq!(log1.len(), 5);
        for (a, b) in log1.iter().zip(&log2) {
            assert_eq!(a.total.to_bits(), b.total.to_bits());
            assert_eq!(a.ce.to_bits(), b.ce.to_bits());
        }
        for ((_, t1), (_, t2)) in m1.params.named().iter().zip(m2.params.named().iter()) {
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn nvi_with_zero_weights_matches_basic_bitwise() {
        let (vocab, table, corpus) = toy_setup(6);
        let mut basic = TrainConfig::new(LossConfig::new(LossVariant::Basic));
        basic.epochs = 4;
        basic.seed = 11;
        let mut nvi = basic.clone();
        nvi.loss = LossConfig {
            variant: LossVariant::Nvi,
            lambda_kld: 0.0,
            beta: 0.0,
            smoothing_eps: 0.0,
        };

        let mut log_b = Vec::new();
        train(&corpus, &vocab, &table, &basic, |s| log_b.push(*s)).unwrap();
        let mut log_n = Vec::new();
        train(&corpus, &vocab, &table, &nvi, |s| log_n.push(*s)).unwrap();
        for (a, b) in log_b.iter().zip(&log_n) {
            assert_eq!(a.total.to_bits(), b.total.to_bits());
            assert_eq!(a.ce.to_bits(), b.ce.to_bits());
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        let (vocab, table, _) = toy_setup(4);
        let cfg = TrainConfig::new(LossConfig::new(LossVariant::Basic));
        assert!(matches!(
            train(&[], &vocab, &table, &cfg, |_| {}),
            Err(Error::EmptyInput(_))
        ));
        let blank = vec!["   ".to_string()];
        assert!(matches!(
            train(&blank, &vocab, &table, &cfg, |_| {}),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn oversized_config_rejected_up_front() {
        let (vocab, table, corpus) = toy_setup(4);
        let mut cfg = TrainConfig::new(LossConfig::new(LossVariant::Basic));
        cfg.hidden_dim = Some(50_000);
        match train(&corpus, &vocab, &table, &cfg, |_| {}) {
            Err(Error::Config(msg)) => assert!(msg.contains("limit"), "{msg}"),
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn loss_decreases_on_toy_corpus() {
        let (vocab, table, corpus) = toy_setup(6);
        let mut cfg = TrainConfig::new(LossConfig::new(LossVariant::Basic));
        cfg.epochs = 300;
        cfg.seed = 3;
        cfg.batch_size = 1;
        cfg.hidden_dim = Some(16);
        let mut log = Vec::new();
        train(&corpus, &vocab, &table, &cfg, |s| log.push(*s)).unwrap();
        assert!(log.last().unwrap().total < 0.5 * log[0].total);
    }
}
