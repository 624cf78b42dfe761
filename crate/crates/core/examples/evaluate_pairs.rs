//! Full evaluation pass: train on a small corpus, score a SICK-style pair
//! file with cosine similarity, and correlate against the gold scores with
//! Pearson.
//!
//! Run with: cargo run --example evaluate_pairs

use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svae::corpus::{build_vocab_and_table, load_sick, tokenize};
use svae::objectives::{LossConfig, LossVariant};
use svae::{evaluate, train, Result, TrainConfig};

fn main() -> Result<()> {
    let corpus: Vec<String> = [
        "a man is playing a guitar",
        "a woman is playing a guitar",
        "a man is slicing a tomato",
        "a woman is slicing an onion",
        "a dog is running in the grass",
        "a cat is running in the grass",
        "children are playing in the garden",
        "a band is playing on the stage",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let mut words: Vec<String> = corpus.iter().flat_map(|s| tokenize(s)).collect();
    words.sort();
    words.dedup();
    let dim = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let entries = words
        .into_iter()
        .map(|w| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            (w, v)
        })
        .collect();
    let (vocab, table) = build_vocab_and_table(entries, dim)?;

    // SICK layout: header, then pair_ID / A / B / relatedness / entailment
    let pairs_path = std::env::temp_dir().join("svae_eval_example_sick.txt");
    fs::write(
        &pairs_path,
        "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n\
         1\ta man is playing a guitar\ta woman is playing a guitar\t4.6\tENTAILMENT\n\
         2\ta dog is running in the grass\ta cat is running in the grass\t4.1\tNEUTRAL\n\
         3\ta man is playing a guitar\ta man is slicing a tomato\t1.5\tNEUTRAL\n\
         4\tchildren are playing in the garden\ta band is playing on the stage\t2.2\tNEUTRAL\n\
         5\ta woman is slicing an onion\ta dog is running in the grass\t1.0\tNEUTRAL\n",
    )?;

    let mut cfg = TrainConfig::new(LossConfig::new(LossVariant::CeKld));
    cfg.epochs = 200;
    cfg.batch_size = 1;
    cfg.seed = 17;
    let model = train(&corpus, &vocab, &table, &cfg, |_| {})?;

    let dataset = load_sick(&pairs_path)?;
    let report = evaluate(&model, &dataset)?;
    print!("{}", report.to_tsv());
    println!("\n{} pairs, pearson r = {:.4}", report.pair_count, report.pearson_r);
    Ok(())
}
