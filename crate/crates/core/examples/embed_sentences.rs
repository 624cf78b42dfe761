//! Train briefly, persist a checkpoint, reload it and compare sentence
//! embeddings by cosine similarity. Reloaded models embed bitwise
//! identically run after run.
//!
//! Run with: cargo run --example embed_sentences

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svae::corpus::{build_vocab_and_table, tokenize};
use svae::objectives::{LossConfig, LossVariant};
use svae::{checkpoint, cosine, train, Result, TrainConfig};

fn main() -> Result<()> {
    let corpus: Vec<String> = [
        "the cat chased the mouse",
        "a cat hunted a mouse",
        "the stock market fell today",
        "shares dropped on the market",
        "the cat slept all day",
        "markets rallied after the news",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let mut words: Vec<String> = corpus.iter().flat_map(|s| tokenize(s)).collect();
    words.sort();
    words.dedup();
    let dim = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let entries = words
        .into_iter()
        .map(|w| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            (w, v)
        })
        .collect();
    let (vocab, table) = build_vocab_and_table(entries, dim)?;

    let mut cfg = TrainConfig::new(LossConfig::new(LossVariant::CeKld));
    cfg.epochs = 150;
    cfg.batch_size = 1;
    cfg.seed = 5;
    let model = train(&corpus, &vocab, &table, &cfg, |_| {})?;

    let dir = std::env::temp_dir().join("svae_embed_example.ckpt");
    checkpoint::save(&model, &dir)?;
    let reloaded = checkpoint::load(&dir)?;
    println!("checkpoint written to {}", dir.display());

    let probes = [
        "the cat chased the mouse",
        "a cat hunted a mouse",
        "the stock market fell today",
    ];
    let embeddings: Vec<Vec<f64>> = probes
        .iter()
        .map(|s| reloaded.embed_sentence(s))
        .collect::<Result<_>>()?;
    for (s, e) in probes.iter().zip(&embeddings) {
        println!("{s:<28} -> [{:+.3} {:+.3} {:+.3} ...]", e[0], e[1], e[2]);
    }
    println!(
        "cosine(cat/cat)    = {:.4}",
        cosine(&embeddings[0], &embeddings[1])?
    );
    println!(
        "cosine(cat/market) = {:.4}",
        cosine(&embeddings[0], &embeddings[2])?
    );
    Ok(())
}
