use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semcom::channel::phase_bench;
use semcom::checkpoint::{write_atomic, Checkpoint};
use semcom::config::load_config;
use semcom::corpus::{read_corpus, synthesize};
use semcom::harness::{
    evaluate, summarize, sweep, train_with_progress, EvalCell, ExperimentConfig, SystemVariant, TrainingData,
};
use semcom::metrics::{bleu, BleuConfig, BleuStats};
use semcom::results::{write_results, RunRow};
use semcom::text::{encode_corpus, tokenize, Vocabulary};
use semcom::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ris-semcom",
    version,
    about = "Semantic text transmission over a RIS-assisted fading link"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one checkpoint per variant and seed.
    Train(TrainArgs),
    /// Evaluate one checkpoint at one SNR and CSI error level.
    Eval(EvalArgs),
    /// Evaluate every configured variant, SNR, error level and seed.
    Sweep(SweepArgs),
    /// Compare phase alignment against random surface configurations.
    PhaseBench(PhaseBenchArgs),
    /// Score a candidate file against a reference file, line by line.
    Bleu(BleuArgs),
    /// Write a synthetic corpus, one sentence per line.
    SynthCorpus(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Train only this seed instead of every configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Train only this variant.
    #[arg(long)]
    variant: Option<SystemVariant>,
    /// Checkpoint path; needs a single variant and seed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    variant: SystemVariant,
    #[arg(long)]
    snr: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Write the result row as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Restrict the sweep to one seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Results path, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhaseBenchArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Random configurations tried per realization.
    #[arg(long, default_value_t = 100)]
    configs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BleuArgs {
    reference: PathBuf,
    candidate: PathBuf,
    #[arg(long, default_value_t = 1)]
    order: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    max_words: usize,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Format(_) | Error::Ingest(_) => 3,
        Error::Numerical(_) => 4,
        Error::Contract(_) | Error::Tensor(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::PhaseBench(a) => cmd_phase_bench(a),
        Command::Bleu(a) => cmd_bleu(a),
        Command::SynthCorpus(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("ris-semcom: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        })
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn select<T: Copy + PartialEq + std::fmt::Display>(all: &[T], only: Option<T>, what: &str) -> Result<Vec<T>> {
    match only {
        None => Ok(all.to_vec()),
        Some(x) if all.contains(&x) => Ok(vec![x]),
        Some(x) => Err(Error::Config(format!("{what} {x} is not in the config"))),
    }
}

fn load_vocab(config: &ExperimentConfig) -> Result<Vocabulary> {
    let path = config.paths.vocabulary();
    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
    Vocabulary::parse(&text)
}

fn load_test_set(config: &ExperimentConfig, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
    let lines = read_corpus(&config.paths.test_corpus)?;
    let mut test = encode_corpus(lines.iter().map(String::as_str), vocab, config.shape.max_len)?;
    if let Some(cap) = config.data.max_test_sentences {
        test.truncate(cap);
    }
    if test.is_empty() {
        return Err(Error::Ingest("no test sentence survives the length filter".into()));
    }
    Ok(test)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let variants = select(&config.variants, a.variant, "variant")?;
    let seeds = select(&config.seeds, a.seed, "seed")?;
    if a.out.is_some() && (variants.len() != 1 || seeds.len() != 1) {
        return Err(Error::Config("--out needs a single --variant and --seed".into()));
    }
    require_file(&config.paths.train_corpus)?;
    create_dir(&config.paths.checkpoint_dir)?;
    let lines = read_corpus(&config.paths.train_corpus)?;
    let data = TrainingData::from_lines(&lines, &config)?;
    write_atomic(&config.paths.vocabulary(), data.vocab.to_file_string().as_bytes())?;
    println!(
        "vocabulary {} tokens, {} training and {} validation sentences",
        data.vocab.len(),
        data.train.len(),
        data.validation.len()
    );
    for &variant in &variants {
        for &seed in &seeds {
            let outcome = train_with_progress(&config, variant, &data, seed, |e| {
                println!(
                    "{variant} seed {seed} epoch {} loss {:.4} val {:.4}",
                    e.epoch, e.mean_loss, e.val_loss
                );
            })?;
            let path = a.out.clone().unwrap_or_else(|| config.paths.checkpoint(variant, seed));
            outcome.checkpoint.save(&path)?;
            write_atomic(&config.paths.training_log(variant, seed), outcome.log_csv().as_bytes())?;
            println!(
                "{variant} seed {seed}: best epoch {} -> {}",
                outcome.best_epoch,
                path.display()
            );
        }
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let ckpt_path = config.paths.checkpoint(a.variant, a.seed);
    require_file(&ckpt_path)?;
    require_file(&config.paths.test_corpus)?;
    let vocab = load_vocab(&config)?;
    let test = load_test_set(&config, &vocab)?;
    let checkpoint = Checkpoint::load(&ckpt_path)?;
    let cell = EvalCell {
        variant: a.variant,
        snr_db: a.snr,
        epsilon: a.epsilon,
        seed: a.seed,
    };
    let row = evaluate(&checkpoint, &vocab, &test, cell, &config)?;
    println!("{}", semcom::results::HEADER);
    println!("{}", row.to_csv_line());
    if let Some(out) = a.out {
        write_results(&out, &[row], true)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut config = load_config(&a.config)?;
    config.seeds = select(&config.seeds, a.seed, "seed")?;
    let out = a.out.clone().unwrap_or_else(|| config.paths.results.clone());
    require_file(&config.paths.test_corpus)?;
    for &variant in &config.variants {
        for &seed in &config.seeds {
            let p = config.paths.checkpoint(variant, seed);
            if !p.is_file() {
                return Err(Error::Io {
                    path: p,
                    source: std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("missing checkpoint for variant {variant}, seed {seed}"),
                    ),
                });
            }
        }
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let vocab = load_vocab(&config)?;
    let test = load_test_set(&config, &vocab)?;
    let paths = config.paths.clone();
    let rows = sweep(
        &config,
        &vocab,
        &test,
        |variant, seed| Checkpoint::load(&paths.checkpoint(variant, seed)),
        Some(&out),
        |_: &RunRow| {},
    )?;
    println!(
        "{:<15} {:>7} {:>7} {:>8} {:>8} {:>10} {:>5}",
        "variant", "snr_db", "epsilon", "bleu1", "bleu2", "mean_loss", "seeds"
    );
    for s in summarize(&rows) {
        println!(
            "{:<15} {:>7} {:>7} {:>8.4} {:>8.4} {:>10.4} {:>5}",
            s.variant.label(),
            s.snr_db,
            s.epsilon,
            s.bleu1,
            s.bleu2,
            s.mean_loss,
            s.seeds
        );
    }
    println!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

fn cmd_phase_bench(a: PhaseBenchArgs) -> Result<()> {
    if a.n == 0 || a.trials == 0 {
        return Err(Error::Config("--n and --trials must be at least 1".into()));
    }
    let r = phase_bench(a.n, a.trials, a.configs, a.seed)?;
    println!("elements: {}", r.elements);
    println!("trials: {}", r.trials);
    println!("random_configs_per_trial: {}", r.random_configs);
    println!("mean_aligned_gain: {}", r.mean_aligned_gain);
    println!("mean_direct_gain: {}", r.mean_direct_gain);
    println!("mean_gain_ratio: {}", r.mean_gain_ratio);
    println!("beat_count: {}", r.beat_count);
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(tokenize).collect())
}

fn cmd_bleu(a: BleuArgs) -> Result<()> {
    if a.order == 0 {
        return Err(Error::Config("--order must be at least 1".into()));
    }
    let refs = read_lines(&a.reference)?;
    let cands = read_lines(&a.candidate)?;
    if refs.len() != cands.len() {
        return Err(Error::Format(format!(
            "{} reference lines but {} candidate lines",
            refs.len(),
            cands.len()
        )));
    }
    if refs.is_empty() {
        return Err(Error::Ingest("no lines to score".into()));
    }
    let cfg = BleuConfig::individual(a.order);
    let mut stats = BleuStats::new(a.order);
    let mut sentence_sum = 0.0;
    for (r, c) in refs.iter().zip(&cands) {
        stats.add(r, c);
        sentence_sum += bleu(r, c, &cfg);
    }
    println!("corpus_bleu{}: {}", a.order, stats.score(&cfg));
    println!("mean_sentence_bleu{}: {}", a.order, sentence_sum / refs.len() as f64);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut text = synthesize(a.count, a.max_words, a.seed)?.join("\n");
    text.push('\n');
    write_atomic(&a.out, text.as_bytes())
}
