//! Memorize a 16-sentence toy corpus with the basic autoencoder and read the
//! sentences back out of their context vectors via greedy decoding.
//!
//! Run with: cargo run --release --example train_overfit

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svae::corpus::{build_vocab_and_table, tokenize};
use svae::objectives::{LossConfig, LossVariant};
use svae::{train, Result, TrainConfig};

const CORPUS: [&str; 16] = [
    "the cat sat on the mat",
    "a dog ran in the park",
    "birds fly over the trees",
    "the sun rises in the east",
    "children play near the river",
    "a man reads his book",
    "the woman sings a song",
    "fish swim under the bridge",
    "the train leaves at noon",
    "rain falls on the roof",
    "the farmer plants his corn",
    "stars shine in the night",
    "the baker makes fresh bread",
    "a girl draws a picture",
    "the clock ticks on the wall",
    "waves crash against the rocks",
];

fn main() -> Result<()> {
    let mut words: Vec<String> = CORPUS.iter().flat_map(|s| tokenize(s)).collect();
    words.sort();
    words.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let dim = 12;
    let entries = words
        .into_iter()
        .map(|w| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            (w, v)
        })
        .collect();
    let (vocab, table) = build_vocab_and_table(entries, dim)?;

    let mut cfg = TrainConfig::new(LossConfig::new(LossVariant::Basic));
    cfg.epochs = 500;
    cfg.batch_size = 1;
    cfg.seed = 42;
    cfg.hidden_dim = Some(32);

    let corpus: Vec<String> = CORPUS.iter().map(|s| s.to_string()).collect();
    let model = train(&corpus, &vocab, &table, &cfg, |s| {
        if s.epoch % 100 == 0 {
            println!("epoch {:>3}  mean loss {:.4}", s.epoch, s.total);
        }
    })?;

    let sentences: Vec<Vec<usize>> = corpus.iter().map(|s| model.sentence_ids(s)).collect();
    let accuracy = model.teacher_forced_accuracy(&sentences)?;
    println!("\nteacher-forced token accuracy: {:.1}%", 100.0 * accuracy);

    let mut exact = 0;
    for text in &corpus {
        let rebuilt = model.reconstruct(text, cfg.max_len)?.join(" ");
        if rebuilt == *text {
            exact += 1;
        } else {
            println!("  '{text}' -> '{rebuilt}'");
        }
    }
    println!("greedy decoding reconstructs {exact}/16 sentences exactly");
    Ok(())
}
