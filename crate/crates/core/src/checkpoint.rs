//! Checkpoint persistence.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  "SVAE"
//! u32    format version (currently 1)
//! u32    config length, then that many bytes of key=value lines
//! u32    vocabulary size, then per token: u32 length + UTF-8 bytes
//! u64    FNV-1a hash of the vocabulary listing
//! u32    tensor count, then per tensor:
//!        u32 name length + name, u8 ndim, u32 dims..., f32 values...
//! ```
//!
//! The frozen embedding table is stored first under the name `embed.table`,
//! followed by every model parameter in [`ModelParams::named`] order. Values
//! are cast to 32-bit on save; a reload therefore reproduces parameters
//! exactly at 32-bit precision, and saving a reloaded model is byte-identical.

use std::fs;
use std::path::Path;

use crate::corpus::{EmbeddingTable, Vocabulary, RESERVED_TOKENS};
use crate::error::{Error, Result};
use crate::lstm::{ModelParams, VariationalHeads};
use crate::model::Model;
use crate::objectives::{LossConfig, LossVariant};
use crate::tensor::Tensor;
use crate::train::{TrainConfig, RNG_NAME};

pub const MAGIC: &[u8; 4] = b"SVAE";
pub const VERSION: u32 = 1;

const TABLE_NAME: &str = "embed.table";

// ── serialization ────────────────────────────────────────────────────

fn config_snapshot(model: &Model) -> String {
    let c = &model.config;
    let hidden = model.params.hidden_dim();
    format!(
        "model={}\nlambda={}\nbeta={}\nsmoothing={}\nlr={}\nepochs={}\nbatch={}\nclip={}\nseed={}\nmax_len={}\nembedding_dim={}\nhidden_dim={}\nrng={}\n",
        c.loss.variant,
        c.loss.lambda_kld,
        c.loss.beta,
        c.loss.smoothing_eps,
        c.lr,
        c.epochs,
        c.batch_size,
        c.clip_norm,
        c.seed,
        c.max_len,
        model.params.embedding_dim(),
        hidden,
        RNG_NAME,
    )
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    push_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn push_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    push_str(out, name);
    out.push(shape.len() as u8);
    for &d in shape {
        push_u32(out, d as u32);
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    push_str(&mut out, &config_snapshot(model));

    let tokens = model.vocab.tokens();
    push_u32(&mut out, tokens.len() as u32);
    for t in tokens {
        push_str(&mut out, t);
    }
    out.extend_from_slice(&model.vocab.hash().to_le_bytes());

    let named = model.params.named();
    push_u32(&mut out, (named.len() + 1) as u32);
    push_tensor(
        &mut out,
        TABLE_NAME,
        &[model.table.rows(), model.table.dim()],
        model.table.data(),
    );
    for (name, t) in named {
        push_tensor(&mut out, &name, t.shape(), t.data());
    }
    out
}

pub fn save<P: AsRef<Path>>(model: &Model, path: P) -> Result<()> {
    Ok(fs::write(path, to_bytes(model))?)
}

// ── deserialization ──────────────────────────────────────────────────

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated file: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Checkpoint("non-UTF-8 string".into()))
    }

    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let name = self.string()?;
        let ndim = self.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let bytes = self.take(numel * 4)?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok((name, Tensor::new(shape, data)?))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn parse_config(text: &str) -> Result<(TrainConfig, usize, usize)> {
    let mut map = std::collections::HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Checkpoint(format!("malformed config line '{line}'"))
        })?;
        map.insert(k.to_string(), v.to_string());
    }
    let known = [
        "model", "lambda", "beta", "smoothing", "lr", "epochs", "batch", "clip", "seed",
        "max_len", "embedding_dim", "hidden_dim", "rng",
    ];
    for k in map.keys() {
        if !known.contains(&k.as_str()) {
            return Err(Error::Checkpoint(format!("unknown config key '{k}'")));
        }
    }
    let get = |k: &str| -> Result<&String> {
        map.get(k)
            .ok_or_else(|| Error::Checkpoint(format!("missing config key '{k}'")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad numeric config value for '{k}'")))
    };
    let int = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad integer config value for '{k}'")))
    };

    let variant: LossVariant = get("model")?.parse()?;
    if get("rng")? != RNG_NAME {
        return Err(Error::Checkpoint(format!(
            "unsupported rng '{}', expected {RNG_NAME}",
            get("rng")?
        )));
    }
    let loss = LossConfig {
        variant,
        lambda_kld: num("lambda")?,
        beta: num("beta")?,
        smoothing_eps: num("smoothing")?,
    };
    let embedding_dim = int("embedding_dim")?;
    let hidden_dim = int("hidden_dim")?;
    let config = TrainConfig {
        lr: num("lr")?,
        epochs: int("epochs")?,
        batch_size: int("batch")?,
        clip_norm: num("clip")?,
        seed: get("seed")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad integer config value for 'seed'".into()))?,
        loss,
        max_len: int("max_len")?,
        hidden_dim: Some(hidden_dim),
    };
    Ok((config, embedding_dim, hidden_dim))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, not a checkpoint file"
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let (config, embedding_dim, hidden_dim) = parse_config(&r.string()?)?;

    let vocab_size = r.u32()? as usize;
    if vocab_size < RESERVED_TOKENS.len() {
        return Err(Error::Checkpoint(format!("vocabulary of {vocab_size} is too small")));
    }
    let mut tokens = Vec::with_capacity(vocab_size);
    for _ in 0..vocab_size {
        tokens.push(r.string()?);
    }
    for (i, reserved) in RESERVED_TOKENS.iter().enumerate() {
        if tokens[i] != *reserved {
            return Err(Error::Checkpoint(format!(
                "reserved token {i} is '{}', expected '{reserved}'",
                tokens[i]
            )));
        }
    }
    let vocab = Vocabulary::from_tokens(tokens[RESERVED_TOKENS.len()..].iter().cloned())?;
    let stored_hash = r.u64()?;
    if vocab.hash() != stored_hash {
        return Err(Error::Checkpoint(
            "vocabulary hash does not match the stored listing".into(),
        ));
    }

    let tensor_count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        tensors.push(r.tensor()?);
    }
    if !r.done() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }

    let mut it = tensors.into_iter();
    let (first_name, table_tensor) = it
        .next()
        .ok_or_else(|| Error::Checkpoint("no tensors in checkpoint".into()))?;
    if first_name != TABLE_NAME {
        return Err(Error::Checkpoint(format!(
            "expected first tensor '{TABLE_NAME}', found '{first_name}'"
        )));
    }
    if table_tensor.shape() != [vocab_size, embedding_dim] {
        return Err(Error::Checkpoint(format!(
            "embedding table shape {:?} does not match vocab {vocab_size} x dim {embedding_dim}",
            table_tensor.shape()
        )));
    }
    let table = EmbeddingTable::from_raw(embedding_dim, table_tensor.data().to_vec());

    let mut params = ModelParams::zeros(vocab_size, embedding_dim, hidden_dim);
    if config.loss.uses_latent() {
        params.variational = Some(VariationalHeads {
            mu_w: Tensor::zeros(vec![hidden_dim, hidden_dim]),
            mu_b: Tensor::zeros(vec![hidden_dim]),
            logvar_w: Tensor::zeros(vec![hidden_dim, hidden_dim]),
            logvar_b: Tensor::zeros(vec![hidden_dim]),
        });
    }
    let mut named = params.named_mut();
    for (expected_name, slot) in named.iter_mut() {
        let (name, tensor) = it.next().ok_or_else(|| {
            Error::Checkpoint(format!("missing parameter '{expected_name}'"))
        })?;
        if &name != expected_name {
            return Err(Error::Checkpoint(format!(
                "parameter order mismatch: expected '{expected_name}', found '{name}'"
            )));
        }
        if tensor.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter '{name}' has shape {:?}, expected {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        **slot = tensor;
    }
    if let Some((name, _)) = it.next() {
        return Err(Error::Checkpoint(format!("unexpected extra tensor '{name}'")));
    }
    drop(named);

    Ok(Model {
        params,
        vocab,
        table,
        config,
    })
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<Model> {
    from_bytes(&fs::read(path)?)
}

/// Reject combining a checkpoint with a vocabulary from a different
/// embedding file.
pub fn ensure_vocab(model: &Model, vocab: &Vocabulary) -> Result<()> {
    if model.vocab.hash() != vocab.hash() {
        return Err(Error::Checkpoint(
            "vocabulary hash mismatch: checkpoint was built from a different embedding file"
                .into(),
        ));
    }
    Ok(())
}
