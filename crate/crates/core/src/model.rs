//! A trained artifact: parameters, vocabulary, frozen embedding table and
//! the config it was trained with, plus sentence-level helpers.

use crate::corpus::{EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::lstm::{
    decode_teacher_forced, encode_ids, greedy_decode, ModelParams,
};
use crate::objectives::sentence_loss_on;
use crate::tape::Tape;
use crate::train::TrainConfig;

#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub table: EmbeddingTable,
    pub config: TrainConfig,
}

impl Model {
    /// Tokenize and map a sentence to ids under the configured `max_len`.
    pub fn sentence_ids(&self, text: &str) -> Vec<usize> {
        self.vocab.sentence_to_ids(text, self.config.max_len)
    }

    /// Fixed-size sentence embedding: the encoder's final hidden state, or
    /// the variational mean when the model has a latent bottleneck.
    pub fn embed_ids(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let ctx = encode_ids(&self.params, &self.table, ids)?;
        match &self.params.variational {
            None => Ok(ctx.values().to_vec()),
            Some(heads) => {
                let mut tape = Tape::new();
                let w = tape.leaf(heads.mu_w.clone());
                let b = tape.leaf(heads.mu_b.clone());
                let c = tape.leaf(crate::tensor::Tensor::vector(ctx.values().to_vec()));
                let wx = tape.matvec(w, c)?;
                let mu = tape.add(wx, b)?;
                Ok(tape.data(mu).to_vec())
            }
        }
    }

    pub fn embed_sentence(&self, text: &str) -> Result<Vec<f64>> {
        let ids = self.sentence_ids(text);
        if ids.is_empty() {
            return Err(Error::EmptyInput("sentence tokenizes to nothing"));
        }
        self.embed_ids(&ids)
    }

    /// Greedy reconstruction of a sentence through the autoencoder.
    pub fn reconstruct_ids(&self, ids: &[usize], max_len: usize) -> Result<Vec<usize>> {
        let ctx = encode_ids(&self.params, &self.table, ids)?;
        greedy_decode(&self.params, &ctx, &self.table, max_len)
    }

    pub fn reconstruct(&self, text: &str, max_len: usize) -> Result<Vec<String>> {
        let ids = self.sentence_ids(text);
        if ids.is_empty() {
            return Err(Error::EmptyInput("sentence tokenizes to nothing"));
        }
        let out = self.reconstruct_ids(&ids, max_len)?;
        Ok(out
            .iter()
            .map(|&id| {
                self.vocab
                    .token(id)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "<?>".into())
            })
            .collect())
    }

    /// Fraction of teacher-forced target tokens whose argmax logit matches
    /// the gold target, over all sentences.
    pub fn teacher_forced_accuracy(&self, sentences: &[Vec<usize>]) -> Result<f64> {
        let mut hits = 0usize;
        let mut total = 0usize;
        for ids in sentences {
            let ctx = encode_ids(&self.params, &self.table, ids)?;
            let logits = decode_teacher_forced(&self.params, &ctx, ids, &self.table)?;
            let targets = crate::lstm::decode_targets(ids);
            for (t, &target) in targets.iter().enumerate() {
                if crate::lstm::argmax_lowest(logits.row(t)) == target {
                    hits += 1;
                }
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyInput("no sentences"));
        }
        Ok(hits as f64 / total as f64)
    }

    /// Mean loss terms over the given sentences, without touching parameters.
    pub fn evaluate_loss(&self, sentences: &[Vec<usize>]) -> Result<crate::objectives::LossTerms> {
        if sentences.is_empty() {
            return Err(Error::EmptyInput("no sentences"));
        }
        let mut acc = crate::objectives::LossTerms::default();
        for ids in sentences {
            let mut tape = Tape::new();
            let pids = self.params.bind(&mut tape);
            // deterministic evaluation: latent path replaced by its mean
            let eval_cfg = if self.config.loss.uses_latent() {
                let zeros = vec![0.0; self.params.hidden_dim()];
                let (expr, _) = sentence_loss_on(
                    &mut tape,
                    &pids,
                    &self.table,
                    &self.config.loss,
                    ids,
                    self.params.vocab_size(),
                    Some(&zeros),
                )?;
                expr.terms(&tape)?
            } else {
                let (expr, _) = sentence_loss_on(
                    &mut tape,
                    &pids,
                    &self.table,
                    &self.config.loss,
                    ids,
                    self.params.vocab_size(),
                    None,
                )?;
                expr.terms(&tape)?
            };
            acc.total += eval_cfg.total;
            acc.ce += eval_cfg.ce;
            acc.token_kld += eval_cfg.token_kld;
            acc.gaussian_kld += eval_cfg.gaussian_kld;
        }
        let n = sentences.len() as f64;
        acc.total /= n;
        acc.ce /= n;
        acc.token_kld /= n;
        acc.gaussian_kld /= n;
        Ok(acc)
    }
}
