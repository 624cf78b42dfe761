//! The LSTM cell, the unidirectional encoder producing the context vector,
//! and the decoder + dense projection that reconstructs the token sequence.
//!
//! All forward math is expressed once, as tape ops (`*_on` functions); the
//! plain-value entry points wrap a scratch tape so training and inference
//! cannot drift apart.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EmbeddingTable, END_ID, START_ID};
use crate::error::{Error, Result};
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Gate parameters of one LSTM cell: input-to-gate matrices `w_*`
/// (hidden x input), recurrent matrices `u_*` (hidden x hidden) and bias
/// vectors `b_*` (hidden), for the input/forget/output/candidate gates.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_o: Tensor,
    pub w_g: Tensor,
    pub u_i: Tensor,
    pub u_f: Tensor,
    pub u_o: Tensor,
    pub u_g: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_g: Tensor,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(vec![rows, cols], data).expect("consistent dims")
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Tensor::zeros(vec![hidden_dim, input_dim]);
        let u = || Tensor::zeros(vec![hidden_dim, hidden_dim]);
        let b = || Tensor::zeros(vec![hidden_dim]);
        LstmParams {
            w_i: w(),
            w_f: w(),
            w_o: w(),
            w_g: w(),
            u_i: u(),
            u_f: u(),
            u_o: u(),
            u_g: u(),
            b_i: b(),
            b_f: b(),
            b_o: b(),
            b_g: b(),
        }
    }

    /// Weights uniform in [-1/sqrt(hidden), +1/sqrt(hidden)]; forget-gate
    /// bias 1.0 for early gradient flow, other biases 0.
    pub fn random(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut p = LstmParams::zeros(input_dim, hidden_dim);
        p.w_i = uniform(rng, hidden_dim, input_dim, bound);
        p.w_f = uniform(rng, hidden_dim, input_dim, bound);
        p.w_o = uniform(rng, hidden_dim, input_dim, bound);
        p.w_g = uniform(rng, hidden_dim, input_dim, bound);
        p.u_i = uniform(rng, hidden_dim, hidden_dim, bound);
        p.u_f = uniform(rng, hidden_dim, hidden_dim, bound);
        p.u_o = uniform(rng, hidden_dim, hidden_dim, bound);
        p.u_g = uniform(rng, hidden_dim, hidden_dim, bound);
        for v in p.b_f.data_mut() {
            *v = 1.0;
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_i.shape()[0]
    }

    fn fields(&self) -> [(&'static str, &Tensor); 12] {
        [
            ("w_i", &self.w_i),
            ("w_f", &self.w_f),
            ("w_o", &self.w_o),
            ("w_g", &self.w_g),
            ("u_i", &self.u_i),
            ("u_f", &self.u_f),
            ("u_o", &self.u_o),
            ("u_g", &self.u_g),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_o", &self.b_o),
            ("b_g", &self.b_g),
        ]
    }

    fn fields_mut(&mut self) -> [(&'static str, &mut Tensor); 12] {
        [
            ("w_i", &mut self.w_i),
            ("w_f", &mut self.w_f),
            ("w_o", &mut self.w_o),
            ("w_g", &mut self.w_g),
            ("u_i", &mut self.u_i),
            ("u_f", &mut self.u_f),
            ("u_o", &mut self.u_o),
            ("u_g", &mut self.u_g),
            ("b_i", &mut self.b_i),
            ("b_f", &mut self.b_f),
            ("b_o", &mut self.b_o),
            ("b_g", &mut self.b_g),
        ]
    }

    fn bind(&self, tape: &mut Tape) -> LstmParamIds {
        LstmParamIds {
            w_i: tape.leaf(self.w_i.clone()),
            w_f: tape.leaf(self.w_f.clone()),
            w_o: tape.leaf(self.w_o.clone()),
            w_g: tape.leaf(self.w_g.clone()),
            u_i: tape.leaf(self.u_i.clone()),
            u_f: tape.leaf(self.u_f.clone()),
            u_o: tape.leaf(self.u_o.clone()),
            u_g: tape.leaf(self.u_g.clone()),
            b_i: tape.leaf(self.b_i.clone()),
            b_f: tape.leaf(self.b_f.clone()),
            b_o: tape.leaf(self.b_o.clone()),
            b_g: tape.leaf(self.b_g.clone()),
        }
    }
}

/// Hidden and cell vectors of one LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// The encoder's final hidden state `h_N`: the fixed-size sentence
/// representation. Every component lies in [-1, 1] since `h = o ⊙ tanh(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    values: Vec<f64>,
}

impl ContextVector {
    pub(crate) fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        ContextVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Affine heads mapping the context vector to the mean and log-variance of
/// the variational posterior (latent dim == hidden dim).
#[derive(Debug, Clone)]
pub struct VariationalHeads {
    pub mu_w: Tensor,
    pub mu_b: Tensor,
    pub logvar_w: Tensor,
    pub logvar_b: Tensor,
}

impl VariationalHeads {
    fn random(hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        VariationalHeads {
            mu_w: uniform(rng, hidden_dim, hidden_dim, bound),
            mu_b: Tensor::zeros(vec![hidden_dim]),
            logvar_w: uniform(rng, hidden_dim, hidden_dim, bound),
            logvar_b: Tensor::zeros(vec![hidden_dim]),
        }
    }
}

/// All trainable weights: encoder, decoder, vocabulary projection, learned
/// start/end token embeddings, and (for the variational objective) the
/// mu/logvar heads.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub proj_w: Tensor,
    pub proj_b: Tensor,
    pub start_embedding: Tensor,
    pub end_embedding: Tensor,
    pub variational: Option<VariationalHeads>,
}

impl ModelParams {
    /// Seeded random initialization. `start_init`/`end_init` come from the
    /// embedding table's placeholder rows so the whole model is a function of
    /// (embedding file, seed).
    pub fn new(
        vocab_size: usize,
        embedding_dim: usize,
        hidden_dim: usize,
        start_init: &[f64],
        end_init: &[f64],
        variational: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if vocab_size < 4 || embedding_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config(format!(
                "bad model dims: vocab {vocab_size}, embedding {embedding_dim}, hidden {hidden_dim}"
            )));
        }
        if start_init.len() != embedding_dim || end_init.len() != embedding_dim {
            return Err(Error::Config(
                "start/end initializers must have embedding dim".into(),
            ));
        }
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let encoder = LstmParams::random(embedding_dim, hidden_dim, rng);
        let decoder = LstmParams::random(embedding_dim, hidden_dim, rng);
        let proj_w = uniform(rng, vocab_size, hidden_dim, bound);
        let proj_b = Tensor::zeros(vec![vocab_size]);
        // heads drawn last so basic/variational models share the common init
        let heads = variational.then(|| VariationalHeads::random(hidden_dim, rng));
        Ok(ModelParams {
            encoder,
            decoder,
            proj_w,
            proj_b,
            start_embedding: Tensor::vector(start_init.to_vec()),
            end_embedding: Tensor::vector(end_init.to_vec()),
            variational: heads,
        })
    }

    pub fn zeros(vocab_size: usize, embedding_dim: usize, hidden_dim: usize) -> Self {
        ModelParams {
            encoder: LstmParams::zeros(embedding_dim, hidden_dim),
            decoder: LstmParams::zeros(embedding_dim, hidden_dim),
            proj_w: Tensor::zeros(vec![vocab_size, hidden_dim]),
            proj_b: Tensor::zeros(vec![vocab_size]),
            start_embedding: Tensor::zeros(vec![embedding_dim]),
            end_embedding: Tensor::zeros(vec![embedding_dim]),
            variational: None,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.proj_w.shape()[0]
    }

    pub fn embedding_dim(&self) -> usize {
        self.start_embedding.numel()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim()
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// All parameters in a fixed order; checkpoints, SGD and gradient
    /// collection all iterate this order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(28);
        for (n, t) in self.encoder.fields() {
            out.push((format!("enc.{n}"), t));
        }
        for (n, t) in self.decoder.fields() {
            out.push((format!("dec.{n}"), t));
        }
        out.push(("proj.w".into(), &self.proj_w));
        out.push(("proj.b".into(), &self.proj_b));
        out.push(("start".into(), &self.start_embedding));
        out.push(("end".into(), &self.end_embedding));
        if let Some(v) = &self.variational {
            out.push(("nvi.mu_w".into(), &v.mu_w));
            out.push(("nvi.mu_b".into(), &v.mu_b));
            out.push(("nvi.logvar_w".into(), &v.logvar_w));
            out.push(("nvi.logvar_b".into(), &v.logvar_b));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::with_capacity(28);
        for (n, t) in self.encoder.fields_mut() {
            out.push((format!("enc.{n}"), t));
        }
        for (n, t) in self.decoder.fields_mut() {
            out.push((format!("dec.{n}"), t));
        }
        out.push(("proj.w".into(), &mut self.proj_w));
        out.push(("proj.b".into(), &mut self.proj_b));
        out.push(("start".into(), &mut self.start_embedding));
        out.push(("end".into(), &mut self.end_embedding));
        if let Some(v) = &mut self.variational {
            out.push(("nvi.mu_w".into(), &mut v.mu_w));
            out.push(("nvi.mu_b".into(), &mut v.mu_b));
            out.push(("nvi.logvar_w".into(), &mut v.logvar_w));
            out.push(("nvi.logvar_b".into(), &mut v.logvar_b));
        }
        out
    }

    /// Register every parameter as a tape leaf. Id order matches [`Self::named`].
    pub fn bind(&self, tape: &mut Tape) -> ModelParamIds {
        ModelParamIds {
            encoder: self.encoder.bind(tape),
            decoder: self.decoder.bind(tape),
            proj_w: tape.leaf(self.proj_w.clone()),
            proj_b: tape.leaf(self.proj_b.clone()),
            start_embedding: tape.leaf(self.start_embedding.clone()),
            end_embedding: tape.leaf(self.end_embedding.clone()),
            variational: self.variational.as_ref().map(|v| VariationalHeadIds {
                mu_w: tape.leaf(v.mu_w.clone()),
                mu_b: tape.leaf(v.mu_b.clone()),
                logvar_w: tape.leaf(v.logvar_w.clone()),
                logvar_b: tape.leaf(v.logvar_b.clone()),
            }),
        }
    }

    /// Embedding vector fed to the LSTMs for a token id: the trainable
    /// start/end vectors live here, everything else is a frozen table row.
    pub fn input_embedding<'a>(&'a self, table: &'a EmbeddingTable, id: usize) -> Result<&'a [f64]> {
        match id {
            START_ID => Ok(self.start_embedding.data()),
            END_ID => Ok(self.end_embedding.data()),
            _ => table.row(id),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmParamIds {
    pub w_i: TensorId,
    pub w_f: TensorId,
    pub w_o: TensorId,
    pub w_g: TensorId,
    pub u_i: TensorId,
    pub u_f: TensorId,
    pub u_o: TensorId,
    pub u_g: TensorId,
    pub b_i: TensorId,
    pub b_f: TensorId,
    pub b_o: TensorId,
    pub b_g: TensorId,
}

#[derive(Debug, Clone, Copy)]
pub struct VariationalHeadIds {
    pub mu_w: TensorId,
    pub mu_b: TensorId,
    pub logvar_w: TensorId,
    pub logvar_b: TensorId,
}

/// Tape handles for every model parameter, in [`ModelParams::named`] order.
#[derive(Debug, Clone)]
pub struct ModelParamIds {
    pub encoder: LstmParamIds,
    pub decoder: LstmParamIds,
    pub proj_w: TensorId,
    pub proj_b: TensorId,
    pub start_embedding: TensorId,
    pub end_embedding: TensorId,
    pub variational: Option<VariationalHeadIds>,
}

impl ModelParamIds {
    pub fn ordered(&self) -> Vec<TensorId> {
        let e = &self.encoder;
        let d = &self.decoder;
        let mut out = vec![
            e.w_i, e.w_f, e.w_o, e.w_g, e.u_i, e.u_f, e.u_o, e.u_g, e.b_i, e.b_f, e.b_o, e.b_g,
            d.w_i, d.w_f, d.w_o, d.w_g, d.u_i, d.u_f, d.u_o, d.u_g, d.b_i, d.b_f, d.b_o, d.b_g,
            self.proj_w,
            self.proj_b,
            self.start_embedding,
            self.end_embedding,
        ];
        if let Some(v) = &self.variational {
            out.extend([v.mu_w, v.mu_b, v.logvar_w, v.logvar_b]);
        }
        out
    }
}

// ── tape-level forward ───────────────────────────────────────────────

/// One LSTM step on the tape:
/// i = σ(W_i x + U_i h + b_i), f = σ(W_f x + U_f h + b_f),
/// o = σ(W_o x + U_o h + b_o), g = tanh(W_g x + U_g h + b_g),
/// c' = f ⊙ c + i ⊙ g, h' = o ⊙ tanh(c').
pub fn lstm_step_on(
    tape: &mut Tape,
    p: &LstmParamIds,
    x: TensorId,
    h: TensorId,
    c: TensorId,
) -> Result<(TensorId, TensorId)> {
    let pre = |tape: &mut Tape, w, u, b| -> Result<TensorId> {
        let wx = tape.matvec(w, x)?;
        let uh = tape.matvec(u, h)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, b)
    };
    let zi = pre(tape, p.w_i, p.u_i, p.b_i)?;
    let zf = pre(tape, p.w_f, p.u_f, p.b_f)?;
    let zo = pre(tape, p.w_o, p.u_o, p.b_o)?;
    let zg = pre(tape, p.w_g, p.u_g, p.b_g)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let o = tape.sigmoid(zo);
    let g = tape.tanh(zg);

    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// Fold the encoder over the token embeddings; returns `h_N`.
pub fn encode_on(tape: &mut Tape, p: &LstmParamIds, xs: &[TensorId]) -> Result<TensorId> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("sentence to encode"));
    }
    let hidden = tape.shape(p.b_i)[0];
    let mut h = tape.leaf(Tensor::zeros(vec![hidden]));
    let mut c = tape.leaf(Tensor::zeros(vec![hidden]));
    for &x in xs {
        (h, c) = lstm_step_on(tape, p, x, h, c)?;
    }
    Ok(h)
}

/// Run the decoder from `init_h` (cell state zero) over `inputs`, projecting
/// each hidden state to vocabulary logits. Row t predicts target t.
pub fn decode_rows_on(
    tape: &mut Tape,
    p: &ModelParamIds,
    init_h: TensorId,
    inputs: &[TensorId],
) -> Result<Vec<TensorId>> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("decoder inputs"));
    }
    let hidden = tape.shape(p.decoder.b_i)[0];
    let mut h = init_h;
    let mut c = tape.leaf(Tensor::zeros(vec![hidden]));
    let mut rows = Vec::with_capacity(inputs.len());
    for &x in inputs {
        (h, c) = lstm_step_on(tape, &p.decoder, x, h, c)?;
        let wh = tape.matvec(p.proj_w, h)?;
        let logits = tape.add(wh, p.proj_b)?;
        rows.push(logits);
    }
    Ok(rows)
}

/// Decoder initial hidden state for inference: the mu head applied to the
/// context under the variational objective, the context itself otherwise.
pub fn inference_init_on(
    tape: &mut Tape,
    p: &ModelParamIds,
    ctx: TensorId,
) -> Result<TensorId> {
    match &p.variational {
        Some(v) => {
            let wx = tape.matvec(v.mu_w, ctx)?;
            tape.add(wx, v.mu_b)
        }
        None => Ok(ctx),
    }
}

// ── plain-value entry points ─────────────────────────────────────────

/// Single cell update on plain values.
pub fn lstm_step(params: &LstmParams, x: &[f64], prev: &LstmState) -> Result<LstmState> {
    if x.len() != params.input_dim() || prev.h.len() != params.hidden_dim() {
        return Err(Error::ShapeMismatch {
            op: "lstm_step",
            lhs: vec![x.len(), prev.h.len()],
            rhs: vec![params.input_dim(), params.hidden_dim()],
        });
    }
    let mut tape = Tape::new();
    let ids = params.bind(&mut tape);
    let x = tape.leaf(Tensor::vector(x.to_vec()));
    let h = tape.leaf(Tensor::vector(prev.h.clone()));
    let c = tape.leaf(Tensor::vector(prev.c.clone()));
    let (h2, c2) = lstm_step_on(&mut tape, &ids, x, h, c)?;
    Ok(LstmState {
        h: tape.data(h2).to_vec(),
        c: tape.data(c2).to_vec(),
    })
}

/// Encode a sentence given as an `N x embedding_dim` matrix of token
/// embeddings; the representation is the final hidden state.
pub fn encode(params: &ModelParams, embeddings: &Tensor) -> Result<ContextVector> {
    if embeddings.shape().len() != 2 || embeddings.shape()[1] != params.embedding_dim() {
        return Err(Error::ShapeMismatch {
            op: "encode",
            lhs: embeddings.shape().to_vec(),
            rhs: vec![0, params.embedding_dim()],
        });
    }
    let mut tape = Tape::new();
    let enc = params.encoder.bind(&mut tape);
    let xs: Vec<TensorId> = (0..embeddings.shape()[0])
        .map(|i| tape.leaf(Tensor::vector(embeddings.row(i).to_vec())))
        .collect();
    let h = encode_on(&mut tape, &enc, &xs)?;
    Ok(ContextVector::new(tape.data(h).to_vec()))
}

/// Encode from token ids, resolving embeddings through the table (and the
/// trainable start/end vectors).
pub fn encode_ids(
    params: &ModelParams,
    table: &EmbeddingTable,
    ids: &[usize],
) -> Result<ContextVector> {
    if ids.is_empty() {
        return Err(Error::EmptyInput("sentence to encode"));
    }
    let mut tape = Tape::new();
    let enc = params.encoder.bind(&mut tape);
    let xs: Vec<TensorId> = ids
        .iter()
        .map(|&id| {
            params
                .input_embedding(table, id)
                .map(|e| tape.leaf(Tensor::vector(e.to_vec())))
        })
        .collect::<Result<_>>()?;
    let h = encode_on(&mut tape, &enc, &xs)?;
    Ok(ContextVector::new(tape.data(h).to_vec()))
}

/// Teacher-forced decoding: inputs are the start embedding followed by the
/// gold token embeddings; targets are the gold tokens followed by the end
/// token, so the result has `N + 1` logit rows of vocabulary width.
pub fn decode_teacher_forced(
    params: &ModelParams,
    ctx: &ContextVector,
    gold_ids: &[usize],
    table: &EmbeddingTable,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let ids = params.bind(&mut tape);
    let ctx_id = tape.leaf(Tensor::vector(ctx.values().to_vec()));
    let init = inference_init_on(&mut tape, &ids, ctx_id)?;

    let mut inputs = vec![ids.start_embedding];
    for &g in gold_ids {
        if g >= params.vocab_size() {
            return Err(Error::Vocab(format!(
                "token id {g} out of range for vocabulary of {}",
                params.vocab_size()
            )));
        }
        let e = params.input_embedding(table, g)?.to_vec();
        inputs.push(tape.leaf(Tensor::vector(e)));
    }
    let rows = decode_rows_on(&mut tape, &ids, init, &inputs)?;
    let stacked = tape.stack_rows(&rows)?;
    Ok(tape.tensor(stacked).clone())
}

/// Targets for teacher forcing: the gold ids with the end token appended.
pub fn decode_targets(gold_ids: &[usize]) -> Vec<usize> {
    let mut t = gold_ids.to_vec();
    t.push(END_ID);
    t
}

/// Autoregressive argmax decoding from a context vector. Feeds each
/// predicted token's embedding back in; stops at the end token or `max_len`.
/// Ties break toward the lowest token id.
pub fn greedy_decode(
    params: &ModelParams,
    ctx: &ContextVector,
    table: &EmbeddingTable,
    max_len: usize,
) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::Config("greedy_decode max_len must be >= 1".into()));
    }
    let mut tape = Tape::new();
    let ids = params.bind(&mut tape);
    let ctx_id = tape.leaf(Tensor::vector(ctx.values().to_vec()));
    let mut h = inference_init_on(&mut tape, &ids, ctx_id)?;
    let mut c = tape.leaf(Tensor::zeros(vec![params.hidden_dim()]));
    let mut x = ids.start_embedding;

    let mut out = Vec::new();
    for _ in 0..max_len {
        (h, c) = lstm_step_on(&mut tape, &ids.decoder, x, h, c)?;
        let wh = tape.matvec(ids.proj_w, h)?;
        let logits = tape.add(wh, ids.proj_b)?;
        let best = argmax_lowest(tape.data(logits));
        if best == END_ID {
            break;
        }
        out.push(best);
        let e = params.input_embedding(table, best)?.to_vec();
        x = tape.leaf(Tensor::vector(e));
    }
    Ok(out)
}

/// Index of the maximum value, lowest index on ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
