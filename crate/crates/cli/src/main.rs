//! `nat`: estimate noise, perturb corpora, train and evaluate noise-aware
//! taggers.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nat_core::eval::{error_analysis, evaluate_noisy};
use nat_core::noise::{self, LABEL_PRESERVING_ETA};
use nat_core::rng::derive_seed;
use nat_core::synth::generate_splits;
use nat_core::training::{sensitivity_sweep, train, training_matrix, Objective, SweepSpec, TrainingConfig};
use nat_core::{
    character_error_rate, estimate_natural, parse_conll, parse_pairs, perturb_corpus, vanilla, write_conll, Alphabet,
    ConfusionMatrix, Corpus, NoiseSeed, Scheme, TaggerModel, VanillaNoiseSpec,
};

#[derive(Parser)]
#[command(name = "nat", version, about = "Noise-aware training for sequence labeling")]
struct Cli {
    /// Tagging scheme that corpora are normalized to.
    #[arg(long, global = true, value_enum, default_value_t = SchemeArg::Bioes)]
    scheme: SchemeArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Bio,
    Bioes,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Bio => Scheme::Bio,
            SchemeArg::Bioes => Scheme::Bioes,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Standard,
    Augment,
    Stability,
    Both,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Standard => Objective::Standard,
            ObjectiveArg::Augment => Objective::Augment,
            ObjectiveArg::Stability => Objective::Stability,
            ObjectiveArg::Both => Objective::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a confusion matrix from aligned noisy/clean sentence pairs.
    EstimateNoise(EstimateNoise),
    /// Write the vanilla confusion matrix over a corpus's characters.
    MakeNoise(MakeNoise),
    /// Perturb a corpus with a confusion matrix, keeping its labels.
    Perturb(Perturb),
    /// Train a tagger.
    Train(Train),
    /// Score a model on clean and perturbed test data.
    Eval(Eval),
    /// Token error rates by edit distance and entity class.
    Analyze(Analyze),
    /// Train and score a grid of α and η_train values.
    Sweep(Sweep),
    /// Write a synthetic train/dev/test NER corpus.
    GenerateCorpus(GenerateCorpus),
}

#[derive(Args)]
struct EstimateNoise {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    smoothing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MakeNoise {
    #[arg(long)]
    eta: f64,
    /// Corpus whose characters form the alphabet.
    #[arg(long)]
    alphabet_from: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Perturb {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// TOML training configuration; defaults apply to missing keys.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the configuration file.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    model_out: PathBuf,
    /// Per-epoch report; `<model-out>.report.csv` by default.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// `NAME=FILE`; may be repeated.
    #[arg(long = "matrix", value_parser = parse_named_matrix)]
    matrices: Vec<(String, PathBuf)>,
    /// Number of perturbation seeds per matrix.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long)]
    seed: u64,
    /// Writes `<prefix>.long.csv` and `<prefix>.summary.csv`.
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

#[derive(Args)]
struct Analyze {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated α values.
    #[arg(long, value_delimiter = ',', required = true)]
    alphas: Vec<f64>,
    /// Comma-separated η_train values.
    #[arg(long, value_delimiter = ',', required = true)]
    etas: Vec<f64>,
    #[arg(long, value_enum)]
    objective: ObjectiveArg,
    /// Number of training seeds per cell.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long)]
    seed: u64,
    /// Base training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Test-time noise; vanilla with `--test-eta` when absent.
    #[arg(long)]
    test_matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    test_eta: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateCorpus {
    #[arg(long, default_value_t = 2000)]
    train_sentences: usize,
    #[arg(long, default_value_t = 300)]
    dev_sentences: usize,
    #[arg(long, default_value_t = 500)]
    test_sentences: usize,
    #[arg(long)]
    seed: u64,
    /// Directory receiving `train.conll`, `dev.conll` and `test.conll`.
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_named_matrix(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=FILE, got {s:?}")),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn read_corpus(path: &Path, scheme: Scheme) -> Result<Corpus> {
    parse_conll(&read(path)?, scheme).with_context(|| format!("invalid corpus {}", path.display()))
}

fn read_matrix(path: &Path) -> Result<ConfusionMatrix> {
    noise::load(&read(path)?).with_context(|| format!("invalid confusion matrix {}", path.display()))
}

fn read_model(path: &Path) -> Result<TaggerModel> {
    TaggerModel::from_json(&read(path)?).with_context(|| format!("invalid model {}", path.display()))
}

fn corpus_cer(noisy: &Corpus, clean: &Corpus) -> Result<f64> {
    let pairs = noisy
        .sentences()
        .iter()
        .zip(clean.sentences())
        .flat_map(|(n, c)| n.tokens().iter().zip(c.tokens()).map(|(a, b)| (a.as_str(), b.as_str())));
    Ok(character_error_rate(pairs)?)
}

fn estimate_noise(args: &EstimateNoise) -> Result<()> {
    ensure!(args.smoothing >= 0.0, "--smoothing must be non-negative");
    let pairs = parse_pairs(&read(&args.pairs)?).with_context(|| format!("invalid pairs file {}", args.pairs.display()))?;
    let matrix = estimate_natural(&pairs, args.smoothing)?;
    let cer = character_error_rate(
        pairs.iter().flat_map(|p| p.noisy.iter().zip(&p.clean).map(|(n, c)| (n.as_str(), c.as_str()))),
    )?;
    write(&args.out, &noise::save(&matrix))?;
    println!("alphabet size {}", matrix.alphabet().len());
    println!("CER {cer}");
    Ok(())
}

fn make_noise(args: &MakeNoise, scheme: Scheme) -> Result<()> {
    if !(0.0..=1.0).contains(&args.eta) {
        bail!("--eta must lie in [0, 1], got {}", args.eta);
    }
    if args.eta > LABEL_PRESERVING_ETA {
        eprintln!("warning: eta {} exceeds {LABEL_PRESERVING_ETA}; perturbations may no longer preserve labels", args.eta);
    }
    let corpus = read_corpus(&args.alphabet_from, scheme)?;
    let matrix = vanilla(&VanillaNoiseSpec::new(args.eta, Alphabet::from_corpus(&corpus)?)?)?;
    write(&args.out, &noise::save(&matrix))?;
    println!("alphabet size {}", matrix.alphabet().len());
    Ok(())
}

fn perturb(args: &Perturb, scheme: Scheme) -> Result<()> {
    let corpus = read_corpus(&args.corpus, scheme)?;
    let matrix = read_matrix(&args.matrix)?;
    let noisy = perturb_corpus(&corpus, &matrix, NoiseSeed(args.seed));
    write(&args.out, &write_conll(&noisy))?;
    println!("CER {}", corpus_cer(&noisy, &corpus)?);
    Ok(())
}

fn train_cmd(args: &Train, scheme: Scheme) -> Result<()> {
    let mut config = TrainingConfig::from_toml(&read(&args.config)?).with_context(|| format!("invalid config {}", args.config.display()))?;
    config.seed = args.seed;
    if let Some(m) = &config.matrix {
        if m.is_relative() {
            config.matrix = Some(args.config.parent().unwrap_or(Path::new(".")).join(m));
        }
    }
    let train_corpus = read_corpus(&args.train, scheme)?;
    let dev = read_corpus(&args.dev, scheme)?;
    let (model, report) = train(&train_corpus, &dev, &config)?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut p = args.model_out.clone().into_os_string();
        p.push(".report.csv");
        PathBuf::from(p)
    });
    write(&args.model_out, &model.to_json()?)?;
    write(&report_path, &report.to_csv())?;
    let best = report.best();
    println!(
        "best epoch {} of {}: dev F1 clean {:.4} noisy {:.4} ({:.1}s)",
        report.best_epoch,
        report.epochs.len(),
        best.dev_f1_clean,
        best.dev_f1_noisy,
        report.wall_clock.as_secs_f64()
    );
    Ok(())
}

fn eval_cmd(args: &Eval, scheme: Scheme) -> Result<()> {
    ensure!(args.seeds > 0 || args.matrices.is_empty(), "--seeds must be positive");
    let model = read_model(&args.model)?;
    let test = read_corpus(&args.test, scheme)?;
    let matrices = args
        .matrices
        .iter()
        .map(|(name, path)| Ok((name.clone(), read_matrix(path)?)))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|k| derive_seed(args.seed, k)).collect();
    let table = evaluate_noisy(&model, &test, &matrices, &seeds)?;
    print!("{}", table.to_text());
    if let Some(prefix) = &args.out_prefix {
        let with = |suffix: &str| {
            let mut p = prefix.clone().into_os_string();
            p.push(suffix);
            PathBuf::from(p)
        };
        write(&with(".long.csv"), &table.long_csv())?;
        write(&with(".summary.csv"), &table.summary_csv())?;
    }
    Ok(())
}

fn analyze(args: &Analyze, scheme: Scheme) -> Result<()> {
    let model = read_model(&args.model)?;
    let clean = read_corpus(&args.clean, scheme)?;
    let noisy = read_corpus(&args.noisy, scheme)?;
    let report = error_analysis(&model, &clean, &noisy).context("clean and noisy corpora are not token-aligned")?;
    write(&args.out, &report.to_csv())?;
    let p = report.perturbed();
    println!("tokens {}; perturbed {} with error rate {:.4}", report.total_tokens(), p.tokens, p.rate());
    Ok(())
}

fn sweep(args: &Sweep, scheme: Scheme) -> Result<()> {
    ensure!(args.seeds > 0, "--seeds must be positive");
    let base = match &args.config {
        Some(path) => TrainingConfig::from_toml(&read(path)?).with_context(|| format!("invalid config {}", path.display()))?,
        None => TrainingConfig::default(),
    };
    let train_corpus = read_corpus(&args.train, scheme)?;
    let dev = read_corpus(&args.dev, scheme)?;
    let test = read_corpus(&args.test, scheme)?;
    let test_matrix = match &args.test_matrix {
        Some(path) => read_matrix(path)?,
        None => training_matrix(&TrainingConfig { eta_train: args.test_eta, matrix: None, ..base.clone() }, &test)?,
    };
    let spec = SweepSpec {
        objective: args.objective.into(),
        alphas: args.alphas.clone(),
        etas: args.etas.clone(),
        seeds: (0..args.seeds as u64).map(|k| derive_seed(args.seed, k)).collect(),
        test_matrix,
        eval_seed: derive_seed(args.seed, u64::MAX),
    };
    let table = sensitivity_sweep(&train_corpus, &dev, &test, &base, &spec)?;
    write(&args.out, &table.to_csv())?;
    print!("{}", table.cells_csv());
    Ok(())
}

fn generate_corpus(args: &GenerateCorpus, scheme: Scheme) -> Result<()> {
    let splits = generate_splits(args.train_sentences, args.dev_sentences, args.test_sentences, args.seed, scheme);
    fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    for (name, corpus) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        write(&args.out_dir.join(format!("{name}.conll")), &write_conll(corpus))?;
        println!("{name}: {} sentences, {} tokens", corpus.len(), corpus.token_count());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let scheme = cli.scheme.into();
    match &cli.command {
        Command::EstimateNoise(a) => estimate_noise(a),
        Command::MakeNoise(a) => make_noise(a, scheme),
        Command::Perturb(a) => perturb(a, scheme),
        Command::Train(a) => train_cmd(a, scheme),
        Command::Eval(a) => eval_cmd(a, scheme),
        Command::Analyze(a) => analyze(a, scheme),
        Command::Sweep(a) => sweep(a, scheme),
        Command::GenerateCorpus(a) => generate_corpus(a, scheme),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
