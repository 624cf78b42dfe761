//! The three training objectives: plain cross-entropy reconstruction,
//! weighted CE + token-level KL divergence against a label-smoothed source
//! distribution, and the neural-variational loss adding a Gaussian-prior KLD
//! on the context vector.
//!
//! With `smoothing_eps = 0` the token KLD degenerates to cross-entropy
//! exactly; both are computed through the same log-sum-exp so the identity
//! holds to rounding. Zero-weighted terms are not recorded on the tape at
//! all, which is what makes an `nvi` run with `lambda = beta = 0` reproduce
//! the basic trajectory bitwise.

use std::fmt;
use std::str::FromStr;

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::lstm::{decode_rows_on, decode_targets, encode_on, ModelParamIds, VariationalHeadIds};
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    Basic,
    CeKld,
    Nvi,
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LossVariant::Basic => "basic",
            LossVariant::CeKld => "ce-kld",
            LossVariant::Nvi => "nvi",
        };
        f.write_str(s)
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(LossVariant::Basic),
            "ce-kld" => Ok(LossVariant::CeKld),
            "nvi" => Ok(LossVariant::Nvi),
            other => Err(Error::Config(format!(
                "unknown model variant '{other}', expected basic|ce-kld|nvi"
            ))),
        }
    }
}

/// Which terms enter the objective and with what weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Weight of the token-level KLD term.
    pub lambda_kld: f64,
    /// Weight of the Gaussian-prior KLD on the context vector.
    pub beta: f64,
    /// Label smoothing of the source distribution, in [0, 1).
    pub smoothing_eps: f64,
}

impl LossConfig {
    pub fn new(variant: LossVariant) -> Self {
        LossConfig {
            variant,
            lambda_kld: 1.0,
            beta: 1.0,
            smoothing_eps: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_kld < 0.0 || !self.lambda_kld.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda_kld)));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.smoothing_eps) {
            return Err(Error::Config(format!(
                "smoothing must be in [0, 1), got {}",
                self.smoothing_eps
            )));
        }
        Ok(())
    }

    /// The token-KLD term participates only for the KLD variants with a
    /// positive weight.
    pub fn uses_token_kld(&self) -> bool {
        matches!(self.variant, LossVariant::CeKld | LossVariant::Nvi) && self.lambda_kld > 0.0
    }

    /// The reparameterized latent bottleneck (and its Gaussian KLD) is active
    /// only for `nvi` with a positive beta; at beta = 0 the decoder starts
    /// from the plain context vector like the other variants.
    pub fn uses_latent(&self) -> bool {
        self.variant == LossVariant::Nvi && self.beta > 0.0
    }
}

/// A reparameterized Gaussian draw recorded on a tape.
#[derive(Debug, Clone)]
pub struct TapeLatent {
    pub mu: TensorId,
    pub logvar: TensorId,
    pub z: TensorId,
    /// The standard-normal draw used, kept for reproducibility.
    pub noise: Vec<f64>,
}

/// Plain-value snapshot of a latent draw: `z = mu + exp(logvar/2) ⊙ noise`.
#[derive(Debug, Clone)]
pub struct LatentSample {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
    pub noise: Vec<f64>,
}

impl TapeLatent {
    pub fn sample(&self, tape: &Tape) -> LatentSample {
        LatentSample {
            mu: tape.data(self.mu).to_vec(),
            logvar: tape.data(self.logvar).to_vec(),
            z: tape.data(self.z).to_vec(),
            noise: self.noise.clone(),
        }
    }
}

/// mu = W_mu ctx + b_mu, logvar = W_lv ctx + b_lv, z = mu + exp(logvar/2) ⊙ ε.
pub fn reparameterize_on(
    tape: &mut Tape,
    heads: &VariationalHeadIds,
    ctx: TensorId,
    noise: &[f64],
) -> Result<TapeLatent> {
    let mu_wx = tape.matvec(heads.mu_w, ctx)?;
    let mu = tape.add(mu_wx, heads.mu_b)?;
    let lv_wx = tape.matvec(heads.logvar_w, ctx)?;
    let logvar = tape.add(lv_wx, heads.logvar_b)?;
    if noise.len() != tape.data(mu).len() {
        return Err(Error::ShapeMismatch {
            op: "reparameterize",
            lhs: vec![noise.len()],
            rhs: vec![tape.data(mu).len()],
        });
    }
    let half = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half);
    let eps = tape.leaf(Tensor::vector(noise.to_vec()));
    let scaled = tape.mul(sigma, eps)?;
    let z = tape.add(mu, scaled)?;
    Ok(TapeLatent {
        mu,
        logvar,
        z,
        noise: noise.to_vec(),
    })
}

/// log(sum(exp(row))) with the max subtracted as a constant for stability.
fn log_sum_exp(tape: &mut Tape, row: TensorId) -> Result<TensorId> {
    let m = tape
        .data(row)
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = tape.add_scalar(row, -m);
    let e = tape.exp(shifted);
    let s = tape.sum(e);
    let l = tape.log(s)?;
    Ok(tape.add_scalar(l, m))
}

fn check_targets(tape: &Tape, logits: TensorId, targets: &[usize]) -> Result<(usize, usize)> {
    let shape = tape.shape(logits);
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "loss",
            lhs: shape.to_vec(),
            rhs: vec![0, 0],
        });
    }
    let (rows, vocab) = (shape[0], shape[1]);
    if targets.len() != rows {
        return Err(Error::ShapeMismatch {
            op: "loss targets",
            lhs: vec![targets.len()],
            rhs: vec![rows],
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= vocab) {
        return Err(Error::Vocab(format!(
            "target id {t} out of range for vocabulary of {vocab}"
        )));
    }
    Ok((rows, vocab))
}

fn mean_of(tape: &mut Tape, terms: &[TensorId]) -> Result<TensorId> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(tape.scale(acc, 1.0 / terms.len() as f64))
}

/// Mean over rows of `-log softmax(logits_t)[target_t]`, via log-sum-exp.
pub fn cross_entropy(tape: &mut Tape, logits: TensorId, targets: &[usize]) -> Result<TensorId> {
    let (rows, _) = check_targets(tape, logits, targets)?;
    let mut terms = Vec::with_capacity(rows);
    for (t, &target) in targets.iter().enumerate() {
        let row = tape.row(logits, t)?;
        let lse = log_sum_exp(tape, row)?;
        let picked = tape.pick(row, target)?;
        terms.push(tape.sub(lse, picked)?);
    }
    mean_of(tape, &terms)
}

/// Label-smoothed source distribution: `1 - eps` on the target, `eps/(V-1)`
/// spread over the rest.
pub fn smoothed_one_hot(vocab: usize, target: usize, eps: f64) -> Vec<f64> {
    let mut p = vec![if vocab > 1 { eps / (vocab - 1) as f64 } else { 0.0 }; vocab];
    p[target] = 1.0 - eps;
    p
}

/// Mean over rows of `KL(p_t || softmax(logits_t))` where `p_t` is the
/// smoothed one-hot source distribution. With `eps = 0` this equals
/// cross-entropy exactly (the entropy of a one-hot is zero).
pub fn token_kld(
    tape: &mut Tape,
    logits: TensorId,
    targets: &[usize],
    eps: f64,
) -> Result<TensorId> {
    let (rows, vocab) = check_targets(tape, logits, targets)?;
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Config(format!("smoothing must be in [0, 1), got {eps}")));
    }
    if eps > 0.0 && vocab < 2 {
        return Err(Error::Domain(
            "label smoothing needs a vocabulary of at least 2".into(),
        ));
    }
    // Sum_j p_j log p_j, a constant of the source distribution (0 for eps=0).
    let neg_entropy = if eps > 0.0 {
        let off = eps / (vocab - 1) as f64;
        (1.0 - eps) * (1.0 - eps).ln() + (vocab - 1) as f64 * off * off.ln()
    } else {
        0.0
    };
    // KL(p || q) = sum p log p - sum p log q
    //            = neg_entropy + lse(row) - sum_j p_j row_j
    let mut terms = Vec::with_capacity(rows);
    for (t, &target) in targets.iter().enumerate() {
        let row = tape.row(logits, t)?;
        let lse = log_sum_exp(tape, row)?;
        let expected = if eps > 0.0 {
            let p = tape.leaf(Tensor::vector(smoothed_one_hot(vocab, target, eps)));
            let weighted = tape.mul(row, p)?;
            tape.sum(weighted)
        } else {
            tape.pick(row, target)?
        };
        let gap = tape.sub(lse, expected)?;
        terms.push(tape.add_scalar(gap, neg_entropy));
    }
    mean_of(tape, &terms)
}

/// Closed-form `KL(N(mu, diag(exp(logvar))) || N(0, I))`:
/// `-1/2 * sum(1 + logvar - mu^2 - exp(logvar))`.
pub fn gaussian_kld(tape: &mut Tape, mu: TensorId, logvar: TensorId) -> Result<TensorId> {
    if tape.shape(mu) != tape.shape(logvar) {
        return Err(Error::ShapeMismatch {
            op: "gaussian_kld",
            lhs: tape.shape(mu).to_vec(),
            rhs: tape.shape(logvar).to_vec(),
        });
    }
    let mu2 = tape.mul(mu, mu)?;
    let elv = tape.exp(logvar);
    let lv1 = tape.add_scalar(logvar, 1.0);
    let inner = tape.sub(lv1, mu2)?;
    let inner = tape.sub(inner, elv)?;
    let s = tape.sum(inner);
    Ok(tape.scale(s, -0.5))
}

/// Scalar tape handles for the total objective and its terms. Absent terms
/// were skipped (zero weight), not computed-and-discarded.
#[derive(Debug, Clone)]
pub struct LossExpr {
    pub total: TensorId,
    pub ce: TensorId,
    pub token_kld: Option<TensorId>,
    pub gaussian_kld: Option<TensorId>,
}

/// Per-term values read back from a tape, for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub total: f64,
    pub ce: f64,
    pub token_kld: f64,
    pub gaussian_kld: f64,
}

impl LossExpr {
    pub fn terms(&self, tape: &Tape) -> Result<LossTerms> {
        Ok(LossTerms {
            total: tape.value(self.total)?,
            ce: tape.value(self.ce)?,
            token_kld: self.token_kld.map(|t| tape.value(t)).transpose()?.unwrap_or(0.0),
            gaussian_kld: self
                .gaussian_kld
                .map(|t| tape.value(t))
                .transpose()?
                .unwrap_or(0.0),
        })
    }
}

/// Combine terms per the configured variant:
/// basic -> CE; ce-kld -> CE + λ·token_kld; nvi -> CE + λ·token_kld + β·gaussian_kld.
pub fn total_loss(
    tape: &mut Tape,
    config: &LossConfig,
    logits: TensorId,
    targets: &[usize],
    latent: Option<&TapeLatent>,
) -> Result<LossExpr> {
    config.validate()?;
    let ce = cross_entropy(tape, logits, targets)?;
    let mut total = ce;
    let mut tk = None;
    let mut gk = None;
    if config.uses_token_kld() {
        let t = token_kld(tape, logits, targets, config.smoothing_eps)?;
        let scaled = tape.scale(t, config.lambda_kld);
        total = tape.add(total, scaled)?;
        tk = Some(t);
    }
    if config.uses_latent() {
        let latent = latent.ok_or_else(|| {
            Error::Config("nvi objective needs a latent sample".into())
        })?;
        let g = gaussian_kld(tape, latent.mu, latent.logvar)?;
        let scaled = tape.scale(g, config.beta);
        total = tape.add(total, scaled)?;
        gk = Some(g);
    }
    Ok(LossExpr {
        total,
        ce,
        token_kld: tk,
        gaussian_kld: gk,
    })
}

/// Build the full per-sentence objective on the tape: encode, (optionally)
/// reparameterize, teacher-forced decode, and combine loss terms. `noise` is
/// required exactly when the latent path is active and must be held fixed
/// across evaluations for gradient checks.
pub fn sentence_loss_on(
    tape: &mut Tape,
    ids: &ModelParamIds,
    table: &EmbeddingTable,
    config: &LossConfig,
    token_ids: &[usize],
    vocab_size: usize,
    noise: Option<&[f64]>,
) -> Result<(LossExpr, Option<TapeLatent>)> {
    if token_ids.is_empty() {
        return Err(Error::EmptyInput("sentence"));
    }
    if let Some(&t) = token_ids.iter().find(|&&t| t >= vocab_size) {
        return Err(Error::Vocab(format!(
            "token id {t} out of range for vocabulary of {vocab_size}"
        )));
    }
    let embed = |tape: &mut Tape, id: usize| -> Result<TensorId> {
        match id {
            crate::corpus::START_ID => Ok(ids.start_embedding),
            crate::corpus::END_ID => Ok(ids.end_embedding),
            _ => Ok(tape.leaf(Tensor::vector(table.row(id)?.to_vec()))),
        }
    };

    let xs: Vec<TensorId> = token_ids
        .iter()
        .map(|&id| embed(tape, id))
        .collect::<Result<_>>()?;
    let ctx = encode_on(tape, &ids.encoder, &xs)?;

    let (init, latent) = if config.uses_latent() {
        let heads = ids.variational.as_ref().ok_or_else(|| {
            Error::Config("nvi objective needs variational heads in the model".into())
        })?;
        let noise = noise.ok_or_else(|| {
            Error::Config("nvi objective needs a noise draw".into())
        })?;
        let lat = reparameterize_on(tape, heads, ctx, noise)?;
        (lat.z, Some(lat))
    } else {
        (ctx, None)
    };

    let mut inputs = Vec::with_capacity(token_ids.len() + 1);
    inputs.push(ids.start_embedding);
    for &id in token_ids {
        inputs.push(embed(tape, id)?);
    }
    let rows = decode_rows_on(tape, ids, init, &inputs)?;
    let logits = tape.stack_rows(&rows)?;
    let targets = decode_targets(token_ids);
    let expr = total_loss(tape, config, logits, &targets, latent.as_ref())?;
    Ok((expr, latent))
}

/// Mean of per-sentence losses over a batch, on one tape. Noise draws are
/// consumed in sentence order. Returns the batch objective plus per-sentence
/// terms for logging.
pub fn batch_loss_on(
    tape: &mut Tape,
    ids: &ModelParamIds,
    table: &EmbeddingTable,
    config: &LossConfig,
    sentences: &[Vec<usize>],
    noises: Option<&[Vec<f64>]>,
) -> Result<(TensorId, Vec<LossExpr>)> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let mut exprs = Vec::with_capacity(sentences.len());
    let mut totals = Vec::with_capacity(sentences.len());
    for (i, sent) in sentences.iter().enumerate() {
        let noise = noises.map(|n| n[i].as_slice());
        let (expr, _) = sentence_loss_on(tape, ids, table, config, sent, tape_vocab(tape, ids), noise)?;
        totals.push(expr.total);
        exprs.push(expr);
    }
    let batch_total = mean_of(tape, &totals)?;
    Ok((batch_total, exprs))
}

fn tape_vocab(tape: &Tape, ids: &ModelParamIds) -> usize {
    tape.shape(ids.proj_w)[0]
}
