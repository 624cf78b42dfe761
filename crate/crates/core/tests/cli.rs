//! End-to-end tests of the `svae` binary: flags, config files, exit codes,
//! output formats and cross-run determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_svae"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

/// A small word2vec text file plus a matching training corpus.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let words = [
        "the", "a", "cat", "dog", "bird", "man", "sat", "ran", "flew", "read", "on", "in",
        "under", "mat", "park", "tree", "book",
    ];
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let mut vec_text = format!("{} 6\n", words.len());
    for w in words {
        let row: Vec<String> = (0..6).map(|_| format!("{:.6}", r.gen_range(-0.5..0.5))).collect();
        vec_text.push_str(&format!("{w} {}\n", row.join(" ")));
    }
    let vectors = dir.join("vectors.txt");
    write(&vectors, &vec_text);

    let corpus = dir.join("corpus.txt");
    write(
        &corpus,
        "the cat sat on the mat\n\
         a dog ran in the park\n\
         the bird flew under the tree\n\
         a man read a book\n\
         the dog sat under the tree\n\
         a bird ran on the mat\n",
    );
    (corpus, vectors)
}

fn train_args<'a>(corpus: &'a str, vectors: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "train",
        "--corpus",
        corpus,
        "--embeddings",
        vectors,
        "--model",
        "basic",
        "--out",
        out,
        "--epochs",
        "8",
        "--batch",
        "2",
        "--seed",
        "7",
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = run(&["train", "--model", "basic"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("--corpus"), "{err}");
    assert!(err.contains("usage") || err.contains("help"), "{err}");
}

#[test]
fn unknown_flag_and_subcommand_exit_2() {
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bad_flag_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, vectors) = fixture(dir.path());
    let ckpt = dir.path().join("m.ckpt");
    let (c, v, o) = (
        corpus.to_str().unwrap(),
        vectors.to_str().unwrap(),
        ckpt.to_str().unwrap(),
    );
    let out = run(&train_args(c, v, o, &["--lr", "0"]));
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = run(&train_args(c, v, o, &["--smoothing", "1.5"]));
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["train", "--corpus", c, "--embeddings", v, "--model", "blah", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, vectors) = fixture(dir.path());
    let (c, v) = (corpus.to_str().unwrap(), vectors.to_str().unwrap());
    let ck1 = dir.path().join("m1.ckpt");
    let ck2 = dir.path().join("m2.ckpt");

    let out1 = run(&train_args(c, v, ck1.to_str().unwrap(), &[]));
    assert_eq!(out1.status.code(), Some(0), "{}", stderr(&out1));
    let out2 = run(&train_args(c, v, ck2.to_str().unwrap(), &[]));
    assert_eq!(out2.status.code(), Some(0));

    assert_eq!(stdout(&out1), stdout(&out2), "loss logs differ");
    assert_eq!(fs::read(&ck1).unwrap(), fs::read(&ck2).unwrap());

    // log format: epoch, total, ce, token_kld, gauss_kld
    let first = stdout(&out1).lines().next().unwrap().to_string();
    assert_eq!(first.split('\t').count(), 5, "{first}");
    assert!(first.starts_with("1\t"));
}

#[test]
fn nvi_with_zero_weights_logs_match_basic() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, vectors) = fixture(dir.path());
    let (c, v) = (corpus.to_str().unwrap(), vectors.to_str().unwrap());
    let ck_b = dir.path().join("b.ckpt");
    let ck_n = dir.path().join("n.ckpt");

    let basic = run(&train_args(c, v, ck_b.to_str().unwrap(), &[]));
    let nvi = run(&[
        "train",
        "--corpus",
        c,
        "--embeddings",
        v,
        "--model",
        "nvi",
        "--beta",
        "0",
        "--lambda",
        "0",
        "--smoothing",
        "0",
        "--out",
        ck_n.to_str().unwrap(),
        "--epochs",
        "8",
        "--batch",
        "2",
        "--seed",
        "7",
    ]);
    assert_eq!(nvi.status.code(), Some(0), "{}", stderr(&nvi));
    assert_eq!(stdout(&basic), stdout(&nvi));
}

#[test]
fn config_file_supplies_flags_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, vectors) = fixture(dir.path());
    let ck_flag = dir.path().join("flag.ckpt");
    let ck_conf = dir.path().join("conf.ckpt");

    let conf = dir.path().join("train.conf");
    write(
        &conf,
        &format!(
            "# toy run\ncorpus={}\nembeddings={}\nmodel=basic\nout={}\nepochs=8\nbatch=2\nseed=999\n",
            corpus.display(),
            vectors.display(),
            ck_conf.display()
        ),
    );

    // seed from the flag must override seed=999 in the file
    let out = run(&[
        "train",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let reference = run(&train_args(
        corpus.to_str().unwrap(),
        vectors.to_str().unwrap(),
        ck_flag.to_str().unwrap(),
        &[],
    ));
    assert_eq!(stdout(&out), stdout(&reference));
    assert_eq!(fs::read(&ck_conf).unwrap(), fs::read(&ck_flag).unwrap());

    // unknown keys are rejected
    let bad = dir.path().join("bad.conf");
    write(&bad, "corpus=x\nturbo=yes\n");
    let out = run(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("turbo"), "{}", stderr(&out));
}

fn trained_checkpoint(dir: &Path) -> PathBuf {
    let (corpus, vectors) = fixture(dir);
    let ckpt = dir.join("model.ckpt");
    let out = run(&train_args(
        corpus.to_str().unwrap(),
        vectors.to_str().unwrap(),
        ckpt.to_str().unwrap(),
        &[],
    ));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    ckpt
}

#[test]
fn embed_output_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint(dir.path());
    let input = dir.path().join("probe.txt");
    write(&input, "the cat sat\nthe cat sat\na dog ran\n");

    let out = run(&["embed", "--checkpoint", ckpt.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    // duplicate input lines give identical embedding lines
    assert_eq!(lines[0], lines[1]);
    assert_ne!(lines[0], lines[2]);
    for line in &lines {
        let (sentence, vector) = line.split_once('\t').unwrap();
        assert!(!sentence.is_empty());
        // hidden = 2 x embedding dim = 12 columns
        assert_eq!(vector.split(' ').count(), 12);
    }

    // --out writes the same bytes to a file
    let out_file = dir.path().join("emb.tsv");
    let out2 = run(&[
        "embed",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(out2.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&out_file).unwrap(), text);
}

#[test]
fn embed_empty_input_and_bad_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint(dir.path());

    let empty = dir.path().join("empty.txt");
    write(&empty, "");
    let out = run(&["embed", "--checkpoint", ckpt.to_str().unwrap(), "--input", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).is_empty());

    let garbage = dir.path().join("garbage.ckpt");
    write(&garbage, "not a checkpoint");
    let out = run(&["embed", "--checkpoint", garbage.to_str().unwrap(), "--input", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("checkpoint"), "{}", stderr(&out));
}

fn sick_file(dir: &Path, name: &str, rescale: impl Fn(f64) -> f64) -> PathBuf {
    let rows = [
        ("the cat sat on the mat", "a cat sat on a mat", 4.5),
        ("a dog ran in the park", "the bird flew under the tree", 1.2),
        ("a man read a book", "the dog sat under the tree", 2.0),
        ("the bird flew under the tree", "a bird ran on the mat", 3.4),
        ("a man read a book", "a dog ran in the park", 1.0),
    ];
    let mut text =
        String::from("pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n");
    for (i, (a, b, g)) in rows.iter().enumerate() {
        text.push_str(&format!("{}\t{a}\t{b}\t{}\tNEUTRAL\n", i + 1, rescale(*g)));
    }
    let p = dir.join(name);
    write(&p, &text);
    p
}

#[test]
fn eval_sick_report_and_affine_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint(dir.path());
    let pairs = sick_file(dir.path(), "sick.txt", |g| g);

    let out = run(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--pairs", pairs.to_str().unwrap(), "--format", "sick"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sentence_a\tsentence_b\tgold\tcosine");
    assert_eq!(lines.len(), 7); // header + 5 pairs + summary
    let summary = lines.last().unwrap();
    assert!(summary.starts_with("pearson\t"), "{summary}");
    let r: f64 = summary.split('\t').nth(1).unwrap().parse().unwrap();
    assert!(r.abs() <= 1.0);

    // gold rescaled by x2 + 1 within [0, 5]: 0.4 * g + 1 keeps scale, r unchanged
    let rescaled = sick_file(dir.path(), "sick2.txt", |g| 0.4 * g + 1.0);
    let out2 = run(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--pairs", rescaled.to_str().unwrap(), "--format", "sick"]);
    assert_eq!(out2.status.code(), Some(0));
    let text2 = stdout(&out2);
    assert_eq!(
        text.lines().last().unwrap(),
        text2.lines().last().unwrap(),
        "summary r changed under affine gold rescale"
    );
}

#[test]
fn eval_self_pairs_surface_degenerate_variance() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint(dir.path());
    let mut text =
        String::from("pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\n");
    for (i, s) in ["the cat sat", "a dog ran", "a man read"].iter().enumerate() {
        text.push_str(&format!("{}\t{s}\t{s}\t5.0\tENTAILMENT\n", i + 1));
    }
    let pairs = dir.path().join("self.txt");
    write(&pairs, &text);

    let out = run(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--pairs", pairs.to_str().unwrap(), "--format", "sick"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("variance"), "{}", stderr(&out));
}

#[test]
fn eval_sts_format_with_gold_file() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained_checkpoint(dir.path());
    let pairs = dir.path().join("sts.txt");
    write(
        &pairs,
        "the cat sat on the mat\ta cat sat on a mat\n\
         a dog ran in the park\tthe bird flew under the tree\n\
         a man read a book\tthe dog sat under the tree\n\
         the bird flew\ta bird ran\n",
    );
    let gold = dir.path().join("sts.gold");
    write(&gold, "4.5\n\n2.0\n3.1\n");

    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--pairs",
        pairs.to_str().unwrap(),
        "--format",
        "sts",
        "--gold",
        gold.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    // one pair skipped for the blank gold line
    assert_eq!(text.lines().count(), 5); // header + 3 pairs + summary

    // sts without --gold is a usage error
    let out = run(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--pairs", pairs.to_str().unwrap(), "--format", "sts"]);
    assert_eq!(out.status.code(), Some(2));

    // malformed score: row number in the message, exit 1
    let bad_gold = dir.path().join("bad.gold");
    write(&bad_gold, "4.5\nabc\n2.0\n3.1\n");
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--pairs",
        pairs.to_str().unwrap(),
        "--format",
        "sts",
        "--gold",
        bad_gold.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}
