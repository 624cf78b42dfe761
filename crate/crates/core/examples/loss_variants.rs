//! The three objectives on one sentence, with the per-term breakdown:
//! basic = CE, ce-kld = CE + lambda * token-KLD,
//! nvi = CE + lambda * token-KLD + beta * Gaussian-KLD on the latent.
//!
//! Run with: cargo run --example loss_variants

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svae::corpus::{build_vocab_and_table, END_ID, START_ID};
use svae::objectives::{sentence_loss_on, LossConfig, LossVariant};
use svae::{ModelParams, Result, Tape};

fn main() -> Result<()> {
    let dim = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let entries = ["ships", "sail", "across", "the", "bay"]
        .iter()
        .map(|w| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            (w.to_string(), v)
        })
        .collect();
    let (vocab, table) = build_vocab_and_table(entries, dim)?;
    let sentence: Vec<usize> = ["ships", "sail", "across", "the", "bay"]
        .iter()
        .map(|w| vocab.lookup(w))
        .collect();

    for variant in [LossVariant::Basic, LossVariant::CeKld, LossVariant::Nvi] {
        let config = LossConfig {
            variant,
            lambda_kld: 1.0,
            beta: 1.0,
            smoothing_eps: 0.1,
        };
        let mut init_rng = ChaCha8Rng::seed_from_u64(42);
        let params = ModelParams::new(
            vocab.len(),
            dim,
            2 * dim,
            table.row(START_ID)?,
            table.row(END_ID)?,
            config.uses_latent(),
            &mut init_rng,
        )?;

        let noise: Vec<f64> = (0..2 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let ids = params.bind(&mut tape);
        let (expr, _) = sentence_loss_on(
            &mut tape,
            &ids,
            &table,
            &config,
            &sentence,
            vocab.len(),
            config.uses_latent().then_some(noise.as_slice()),
        )?;
        let t = expr.terms(&tape)?;
        println!(
            "{variant:<7} total {:>8.4}  =  ce {:.4}  +  {} * token_kld {:.4}  +  {} * gauss_kld {:.4}",
            t.total, t.ce, config.lambda_kld, t.token_kld, config.beta, t.gaussian_kld
        );
    }
    Ok(())
}
