//! Sentence-embedding evaluation: cosine similarity per pair, Pearson
//! correlation against the gold scores, and TSV report generation.

use std::fmt::Write as _;

use crate::corpus::SentencePairDataset;
use crate::error::{Error, Result};
use crate::model::Model;

/// `u . v / (|u| |v|)`, clamped to [-1, 1] against rounding. Zero vectors
/// have no direction and are an error, not silently 0.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "cosine",
            lhs: vec![u.len()],
            rhs: vec![v.len()],
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (&x, &y) in u.iter().zip(v) {
        dot += x * y;
        nu += x * x;
        nv += y * y;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate("cosine of a zero vector".into()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Two-pass Pearson correlation: means first, then
/// `sum((x - mx)(y - my)) / sqrt(sum((x - mx)^2) sum((y - my)^2))`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "pearson",
            lhs: vec![x.len()],
            rhs: vec![y.len()],
        });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(format!(
            "pearson needs at least 2 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Degenerate("pearson of a zero-variance series".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone)]
pub struct PairRow {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
    pub cosine: f64,
}

/// Per-pair cosines plus the Pearson correlation against gold scores.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub dataset: String,
    pub pair_count: usize,
    pub pearson_r: f64,
    pub rows: Vec<PairRow>,
    /// 1-based dataset indices of pairs excluded because a sentence
    /// tokenized to nothing.
    pub excluded: Vec<usize>,
}

impl EvalReport {
    /// TSV: a header line, one row per pair, then a `pearson` summary line
    /// with four decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("sentence_a\tsentence_b\tgold\tcosine\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}",
                r.sentence_a, r.sentence_b, r.gold, r.cosine
            );
        }
        let _ = writeln!(out, "pearson\t{:.4}", self.pearson_r);
        out
    }

    /// One-line summary in the shape of the results table: model, dataset, r.
    pub fn summary(&self, model_name: &str) -> String {
        format!("{model_name}\t{}\t{:.4}", self.dataset, self.pearson_r)
    }
}

/// Embed both sentences of every pair, score with cosine, and correlate with
/// the gold scores. Pairs that tokenize to nothing are excluded (and listed),
/// never scored as 0. Gold rescaling is irrelevant: Pearson is affine-invariant.
pub fn evaluate(model: &Model, dataset: &SentencePairDataset) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(dataset.pairs.len());
    let mut excluded = Vec::new();
    for (i, pair) in dataset.pairs.iter().enumerate() {
        let ids_a = model.sentence_ids(&pair.sentence_a);
        let ids_b = model.sentence_ids(&pair.sentence_b);
        if ids_a.is_empty() || ids_b.is_empty() {
            excluded.push(i + 1);
            continue;
        }
        let ea = model.embed_ids(&ids_a)?;
        let eb = model.embed_ids(&ids_b)?;
        rows.push(PairRow {
            sentence_a: pair.sentence_a.clone(),
            sentence_b: pair.sentence_b.clone(),
            gold: pair.gold,
            cosine: cosine(&ea, &eb)?,
        });
    }
    let cosines: Vec<f64> = rows.iter().map(|r| r.cosine).collect();
    let golds: Vec<f64> = rows.iter().map(|r| r.gold).collect();
    let pearson_r = pearson(&cosines, &golds)?;
    Ok(EvalReport {
        dataset: dataset.name.clone(),
        pair_count: rows.len(),
        pearson_r,
        rows,
        excluded,
    })
}
