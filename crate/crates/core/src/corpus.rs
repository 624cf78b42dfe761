//! Tokenization, vocabulary construction, pretrained-embedding ingestion
//! (word2vec text format) and parsing of training corpora and SICK/STS-style
//! evaluation files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const START_ID: usize = 2;
pub const END_ID: usize = 3;

pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Fixed seed for the placeholder START/END rows so that loading the same
/// embedding file twice is byte-deterministic.
const TABLE_SEED: u64 = 0x5356_4145; // "SVAE"

const PUNCT: [char; 10] = ['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')'];

/// Lowercase, split on whitespace, and break punctuation characters out into
/// their own tokens. Empty text gives an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        let mut cur = String::new();
        for ch in chunk.chars() {
            if PUNCT.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Token <-> id bijection with the four reserved ids fixed up front.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    lower_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from the non-reserved tokens in order; reserved entries are
    /// prepended automatically. Duplicates are an error here — file loaders
    /// dedupe before calling.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut id_to_token: Vec<String> =
            RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut token_to_id = HashMap::new();
        let mut lower_to_id = HashMap::new();
        for (i, t) in RESERVED_TOKENS.iter().enumerate() {
            token_to_id.insert(t.to_string(), i);
            lower_to_id.insert(t.to_string(), i);
        }
        for t in tokens {
            if token_to_id.contains_key(&t) {
                return Err(Error::Vocab(format!("duplicate token '{t}'")));
            }
            let id = id_to_token.len();
            token_to_id.insert(t.clone(), id);
            // first occurrence wins for case-folded lookup
            lower_to_id.entry(t.to_lowercase()).or_insert(id);
            id_to_token.push(t);
        }
        Ok(Vocabulary {
            token_to_id,
            lower_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Exact match, then case-folded match, then UNK.
    pub fn lookup(&self, token: &str) -> usize {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        if let Some(&id) = self.lower_to_id.get(&token.to_lowercase()) {
            return id;
        }
        UNK_ID
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// FNV-1a over the id-ordered token listing; stored in checkpoints to
    /// catch mixing a model with a different embedding file.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in &self.id_to_token {
            for &b in t.as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= b'\n' as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    /// Map a sentence to token ids: tokenize, truncate to `max_len`, OOV -> UNK.
    pub fn sentence_to_ids(&self, text: &str, max_len: usize) -> Vec<usize> {
        tokenize(text)
            .into_iter()
            .take(max_len)
            .map(|t| self.lookup(&t))
            .collect()
    }
}

/// Frozen pretrained vectors, one row per vocabulary id.
///
/// PAD is all zeros and UNK is the mean of the loaded rows. The START/END
/// rows hold seeded-random initial values; once a model is created it owns
/// the trainable copies, and lookups for those two ids resolve through the
/// model, not this table.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    data: Vec<f64>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, id: usize) -> Result<&[f64]> {
        if id >= self.rows() {
            return Err(Error::Vocab(format!(
                "token id {id} out of range for table of {} rows",
                self.rows()
            )));
        }
        Ok(&self.data[id * self.dim..(id + 1) * self.dim])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn from_raw(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % dim, 0);
        EmbeddingTable { data, dim }
    }
}

/// Assemble a vocabulary and table from `(token, vector)` entries (already
/// deduped, all of dimension `dim`). Shared by the file loader and in-memory
/// construction in tests and examples.
pub fn build_vocab_and_table(
    entries: Vec<(String, Vec<f64>)>,
    dim: usize,
) -> Result<(Vocabulary, EmbeddingTable)> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("embedding entries"));
    }
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut mean = vec![0.0; dim];
    for (tok, v) in &entries {
        if v.len() != dim {
            return Err(Error::Vocab(format!(
                "vector for '{tok}' has {} entries, expected {dim}",
                v.len()
            )));
        }
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= entries.len() as f64;
    }

    let vocab = Vocabulary::from_tokens(entries.iter().map(|(t, _)| t.clone()))?;

    let mut data = Vec::with_capacity(vocab.len() * dim);
    data.extend(std::iter::repeat(0.0).take(dim)); // PAD
    data.extend_from_slice(&mean); // UNK
    let mut rng = ChaCha8Rng::seed_from_u64(TABLE_SEED);
    let bound = 1.0 / (dim as f64).sqrt();
    for _ in 0..2 {
        // START, END placeholders
        for _ in 0..dim {
            data.push(rng.gen_range(-bound..bound));
        }
    }
    for (_, v) in entries {
        data.extend_from_slice(&v);
    }
    Ok((vocab, EmbeddingTable::from_raw(dim, data)))
}

/// Parse a word2vec *text* file: a `<count> <dim>` header, then one
/// `<token> <dim floats>` line per word. `vocab_limit` keeps only the first
/// n distinct tokens (word2vec files are ordered most-frequent-first).
pub fn load_embeddings<P: AsRef<Path>>(
    path: P,
    vocab_limit: Option<usize>,
) -> Result<(Vocabulary, EmbeddingTable)> {
    let file = File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines();

    let header = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty embedding file".into(),
        })??;
    let mut it = header.split_whitespace();
    let (count, dim) = match (it.next(), it.next(), it.next()) {
        (Some(c), Some(d), None) => {
            let count: usize = c.parse().map_err(|_| Error::Parse {
                line: 1,
                msg: format!("malformed header '{header}'"),
            })?;
            let dim: usize = d.parse().map_err(|_| Error::Parse {
                line: 1,
                msg: format!("malformed header '{header}'"),
            })?;
            (count, dim)
        }
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("malformed header '{header}', expected '<count> <dim>'"),
            })
        }
    };

    let keep = vocab_limit.unwrap_or(count).min(count);
    let mut entries: Vec<(String, Vec<f64>)> = Vec::with_capacity(keep);
    let mut seen: HashMap<String, ()> = HashMap::with_capacity(keep);
    for row in 0..count {
        if entries.len() == keep {
            break;
        }
        let line_no = row + 2;
        let line = lines
            .next()
            .ok_or(Error::Parse {
                line: line_no,
                msg: format!("unexpected end of file, header promised {count} rows"),
            })??;
        let mut fields = line.split_whitespace();
        let token = fields
            .next()
            .ok_or(Error::Parse {
                line: line_no,
                msg: "blank embedding row".into(),
            })?
            .to_string();
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("unparseable float '{f}'"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("row has {} values, header says dim {dim}", values.len()),
            });
        }
        if seen.insert(token.clone(), ()).is_some() {
            eprintln!("warning: duplicate token '{token}' at line {line_no}, keeping first");
            continue;
        }
        entries.push((token, values));
    }
    build_vocab_and_table(entries, dim)
}

/// Training corpus: plain UTF-8, one sentence per line. Blank lines skipped.
pub fn load_corpus<P: AsRef<Path>>(path: P) -> Result<Vec<String>> {
    let file = File::open(path.as_ref())?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SentencePair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
}

/// Gold similarity pairs with the score scale the dataset declares.
#[derive(Debug, Clone)]
pub struct SentencePairDataset {
    pub name: String,
    pub pairs: Vec<SentencePair>,
    pub scale: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairFormat {
    Sick,
    Sts,
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn check_pair(a: &str, b: &str, gold: f64, scale: (f64, f64), line: usize) -> Result<SentencePair> {
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(Error::Parse {
            line,
            msg: "empty sentence".into(),
        });
    }
    if !(scale.0..=scale.1).contains(&gold) {
        return Err(Error::Parse {
            line,
            msg: format!("gold score {gold} outside scale [{}, {}]", scale.0, scale.1),
        });
    }
    Ok(SentencePair {
        sentence_a: a.to_string(),
        sentence_b: b.to_string(),
        gold,
    })
}

/// SICK TSV: a header line, then tab-separated
/// `pair_ID  sentence_A  sentence_B  relatedness_score  entailment_judgment`.
pub fn load_sick<P: AsRef<Path>>(path: P) -> Result<SentencePairDataset> {
    let scale = (0.0, 5.0);
    let file = File::open(path.as_ref())?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line_no == 1 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 5 tab-separated columns, got {}", cols.len()),
            });
        }
        let gold: f64 = cols[3].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("unparseable relatedness score '{}'", cols[3]),
        })?;
        pairs.push(check_pair(cols[1], cols[2], gold, scale, line_no)?);
    }
    Ok(SentencePairDataset {
        name: dataset_name(path.as_ref()),
        pairs,
        scale,
    })
}

/// STS: a file of tab-separated sentence pairs plus a sibling gold file with
/// one score per line; a blank gold line marks an unscored pair, which is
/// skipped. Line counts must agree.
pub fn load_sts<P: AsRef<Path>>(pairs_path: P, gold_path: P) -> Result<SentencePairDataset> {
    let scale = (0.0, 5.0);
    let pair_lines: Vec<String> = BufReader::new(File::open(pairs_path.as_ref())?)
        .lines()
        .collect::<std::io::Result<_>>()?;
    let gold_lines: Vec<String> = BufReader::new(File::open(gold_path.as_ref())?)
        .lines()
        .collect::<std::io::Result<_>>()?;
    if pair_lines.len() != gold_lines.len() {
        return Err(Error::Parse {
            line: pair_lines.len().min(gold_lines.len()) + 1,
            msg: format!(
                "pair file has {} lines but gold file has {}",
                pair_lines.len(),
                gold_lines.len()
            ),
        });
    }
    let mut pairs = Vec::new();
    for (i, (pline, gline)) in pair_lines.iter().zip(&gold_lines).enumerate() {
        let line_no = i + 1;
        if gline.trim().is_empty() {
            continue; // unscored pair
        }
        let cols: Vec<&str> = pline.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 2 tab-separated sentences, got {} columns", cols.len()),
            });
        }
        let gold: f64 = gline.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("unparseable gold score '{}'", gline.trim()),
        })?;
        pairs.push(check_pair(cols[0], cols[1], gold, scale, line_no)?);
    }
    Ok(SentencePairDataset {
        name: dataset_name(pairs_path.as_ref()),
        pairs,
        scale,
    })
}

pub fn load_pairs<P: AsRef<Path>>(
    path: P,
    format: PairFormat,
    gold: Option<P>,
) -> Result<SentencePairDataset> {
    match format {
        PairFormat::Sick => load_sick(path),
        PairFormat::Sts => {
            let gold = gold.ok_or_else(|| {
                Error::Config("sts format needs a gold-score file".into())
            })?;
            load_sts(path, gold)
        }
    }
}
