//! Command-line harness: corpus generation, topic fitting, evaluation,
//! sample-complexity sweeps and moment inspection over UCI bag-of-words
//! files. Every run writes a metadata record sufficient to rerun it
//! bit-identically; all randomness is seed-explicit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use eca::eval::{align_columns, sample_complexity_sweep, EvalReport, SweepReport};
use eca::io::{
    read_topics_tsv, read_uci_bagofwords, read_vocab, top_words, write_json, write_topics_tsv,
    write_uci_bagofwords, write_vocab, RecoveryRecord,
};
use eca::model::{DirichletParams, TopicMatrix, TopicMode};
use eca::moments::{accumulate, EstimatorMode, MomentOptions};
use eca::pipeline::{fit_lda, FitOptions, SvdMethod};
use eca::synthetic::{concentrated_topics, generate_lda_corpus, random_probability_topics};

#[derive(Parser)]
#[command(
    name = "eca",
    version,
    about = "Spectral topic recovery from low-order moments",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic LDA corpus with known topics and prior.
    Generate(GenerateArgs),
    /// Fit topics to a UCI bag-of-words corpus.
    Fit(FitArgs),
    /// Compare an estimated topic matrix against a reference.
    Eval(EvalArgs),
    /// Run the sample-complexity experiment on synthetic corpora.
    Sweep(SweepArgs),
    /// Dump empirical moments of a corpus for inspection.
    Moments(MomentsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
enum ModelArg {
    Lda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
enum TopicStyle {
    /// Block-concentrated probability columns (well conditioned).
    Concentrated,
    /// Normalized uniform draws.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
enum SvdMethodArg {
    Dense,
    PowerIteration,
}

impl From<SvdMethodArg> for SvdMethod {
    fn from(v: SvdMethodArg) -> Self {
        match v {
            SvdMethodArg::Dense => SvdMethod::Dense,
            SvdMethodArg::PowerIteration => SvdMethod::PowerIteration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
enum EstimatorArg {
    AllDistinctTriples,
    FirstThreeTokens,
}

impl From<EstimatorArg> for EstimatorMode {
    fn from(v: EstimatorArg) -> Self {
        match v {
            EstimatorArg::AllDistinctTriples => EstimatorMode::AllDistinctTriples,
            EstimatorArg::FirstThreeTokens => EstimatorMode::FirstThreeTokens,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "lda")]
    model: ModelArg,
    /// Vocabulary size.
    #[arg(long)]
    d: usize,
    /// Number of topics.
    #[arg(long)]
    k: usize,
    /// Number of documents.
    #[arg(long)]
    docs: usize,
    #[arg(long, default_value_t = 3)]
    doc_len: usize,
    /// Full Dirichlet parameter vector, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "alpha_uniform")]
    alpha: Option<Vec<f64>>,
    /// Homogeneous Dirichlet parameter applied to every topic.
    #[arg(long)]
    alpha_uniform: Option<f64>,
    #[arg(long, value_enum, default_value = "concentrated")]
    topics: TopicStyle,
    /// Block mass for concentrated topics.
    #[arg(long, default_value_t = 0.8)]
    concentration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes PREFIX.docword.txt, PREFIX.vocab.txt,
    /// PREFIX.truth.tsv and PREFIX.meta.json.
    #[arg(long, default_value = "generated")]
    out_prefix: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct FitArgs {
    /// UCI bag-of-words file.
    docword: PathBuf,
    /// Vocabulary file (one token per line), enables --top-words.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    k: usize,
    /// Sum of the Dirichlet pseudo-counts; 0 selects the single-topic limit.
    #[arg(long, default_value_t = 0.0)]
    alpha0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "dense")]
    svd_method: SvdMethodArg,
    #[arg(long, value_enum, default_value = "all-distinct-triples")]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 5)]
    theta_retries: usize,
    #[arg(long)]
    clip_normalize: bool,
    #[arg(long, default_value_t = 0.01)]
    clip_fraction: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    conv_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    /// Above this vocabulary size the dense pairs matrix is replaced by a
    /// document-backed operator.
    #[arg(long, default_value_t = eca::moments::DEFAULT_DENSE_PAIRS_CAP)]
    dense_pairs_cap: usize,
    /// Emit the top N words per topic (requires --vocab).
    #[arg(long)]
    top_words: Option<usize>,
    #[arg(long, default_value = "fit")]
    out_prefix: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct EvalArgs {
    /// Reference topic matrix (TSV).
    #[arg(long)]
    truth: PathBuf,
    /// Estimated topic matrix (TSV).
    #[arg(long)]
    estimate: PathBuf,
    /// Allow per-column sign flips when matching.
    #[arg(long)]
    allow_sign: bool,
    /// Reference Dirichlet parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    truth_alpha: Option<Vec<f64>>,
    /// Fit metadata record holding the estimated alpha.
    #[arg(long)]
    estimate_meta: Option<PathBuf>,
    /// Write the report here as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SweepArgs {
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.2)]
    alpha_uniform: f64,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 3)]
    doc_len: usize,
    #[arg(long, default_value_t = 0.8)]
    concentration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct MomentsArgs {
    /// UCI bag-of-words file.
    docword: PathBuf,
    #[arg(long, value_enum, default_value = "all-distinct-triples")]
    estimator: EstimatorArg,
    /// Number of random unit probes for third-moment contractions.
    #[arg(long, default_value_t = 3)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "moments")]
    out_prefix: String,
}

/// The metadata record every command writes: command name, full configuration
/// and result summary. Free of timestamps so reruns are bit-identical.
#[derive(Debug, Serialize)]
struct RunRecord<C: Serialize, R: Serialize> {
    command: &'static str,
    version: &'static str,
    config: C,
    result: R,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Fit(args) => run_fit(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Moments(args) => run_moments(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let detail = serde_json::json!({ "error": err.to_string() });
            eprintln!("error: {detail}");
            ExitCode::from(1)
        }
    }
}

fn prefixed(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.{suffix}"))
}

fn resolve_prior(
    alpha: &Option<Vec<f64>>,
    alpha_uniform: Option<f64>,
    k: usize,
) -> eca::Result<DirichletParams> {
    match (alpha, alpha_uniform) {
        (Some(v), _) => {
            if v.len() != k {
                return Err(eca::Error::DimensionMismatch(format!(
                    "--alpha has {} entries for k = {k}",
                    v.len()
                )));
            }
            DirichletParams::new(v.clone())
        }
        (None, Some(a)) => DirichletParams::uniform(k, a),
        (None, None) => DirichletParams::uniform(k, 1.0),
    }
}

fn run_generate(args: GenerateArgs) -> eca::Result<()> {
    let prior = resolve_prior(&args.alpha, args.alpha_uniform, args.k)?;
    let topics = match args.topics {
        TopicStyle::Concentrated => concentrated_topics(args.d, args.k, args.concentration)?,
        TopicStyle::Random => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(eca::derive_seed(args.seed, 1));
            random_probability_topics(args.d, args.k, 0.01, &mut rng)?
        }
    };
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(eca::derive_seed(args.seed, 2));
    let corpus = generate_lda_corpus(&topics, &prior, args.docs, args.doc_len, &mut rng)?;

    write_uci_bagofwords(&corpus, &prefixed(&args.out_prefix, "docword.txt"))?;
    let vocab: Vec<String> = (0..args.d).map(|i| format!("w{i:05}")).collect();
    write_vocab(&vocab, &prefixed(&args.out_prefix, "vocab.txt"))?;
    write_topics_tsv(&topics.columns_vec(), &prefixed(&args.out_prefix, "truth.tsv"))?;
    let result = serde_json::json!({
        "d": args.d,
        "k": args.k,
        "docs": corpus.n_docs(),
        "total_tokens": corpus.total_tokens(),
        "alpha": prior.alpha_slice(),
        "alpha0": prior.alpha0(),
    });
    write_json(
        &RunRecord {
            command: "generate",
            version: env!("CARGO_PKG_VERSION"),
            config: &args,
            result,
        },
        &prefixed(&args.out_prefix, "meta.json"),
    )?;
    println!(
        "generated {} documents over d = {} into {}.docword.txt",
        corpus.n_docs(),
        args.d,
        args.out_prefix
    );
    Ok(())
}

fn fit_options(args: &FitArgs) -> FitOptions {
    let mut opts = FitOptions::new(args.k, args.alpha0).with_seed(args.seed);
    opts.svd_method = args.svd_method.into();
    opts.estimator_mode = args.estimator.into();
    opts.theta_retries = args.theta_retries;
    opts.clip_normalize = args.clip_normalize;
    opts.clip_fraction = args.clip_fraction;
    opts.max_iter = args.max_iter;
    opts.conv_tol = args.conv_tol;
    opts.gap_tol = args.gap_tol;
    opts.dense_pairs_cap = args.dense_pairs_cap;
    opts
}

fn run_fit(args: FitArgs) -> eca::Result<()> {
    let corpus = read_uci_bagofwords(&args.docword)?;
    let vocab = match &args.vocab {
        Some(path) => Some(read_vocab(path, corpus.d())?),
        None => None,
    };
    let opts = fit_options(&args);
    let result = fit_lda(&corpus, &opts)?;

    write_topics_tsv(&result.columns, &prefixed(&args.out_prefix, "topics.tsv"))?;
    let record = RecoveryRecord::from(&result);
    write_json(
        &RunRecord {
            command: "fit",
            version: env!("CARGO_PKG_VERSION"),
            config: serde_json::json!({ "args": &args, "options": &opts }),
            result: &record,
        },
        &prefixed(&args.out_prefix, "meta.json"),
    )?;

    if let Some(n) = args.top_words {
        let vocab = vocab
            .ok_or_else(|| eca::Error::InvalidParameter("--top-words needs --vocab".into()))?;
        let table = top_words(&result.columns, &vocab, n);
        let mut out = String::new();
        for (t, words) in table.iter().enumerate() {
            out.push_str(&format!("topic {t}:"));
            for (w, p) in words {
                out.push_str(&format!(" {w}({p:.4})"));
            }
            out.push('\n');
        }
        std::fs::write(prefixed(&args.out_prefix, "topwords.txt"), out)?;
    }

    println!(
        "fit {} topics (status {:?}, {} skipped docs) -> {}.topics.tsv",
        result.n_columns(),
        result.diagnostics.status,
        result.diagnostics.skipped_documents,
        args.out_prefix
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> eca::Result<()> {
    let truth_cols = read_topics_tsv(&args.truth)?;
    let est_cols = read_topics_tsv(&args.estimate)?;
    let d = truth_cols[0].len();
    let truth = TopicMatrix::with_default_tol(
        nalgebra::DMatrix::from_columns(&truth_cols),
        TopicMode::Raw,
    )?;
    if est_cols.iter().any(|c| c.len() != d) {
        return Err(eca::Error::DimensionMismatch(
            "estimate and truth have different vocabulary sizes".into(),
        ));
    }
    let mut report: EvalReport = align_columns(&truth, &est_cols, args.allow_sign);

    if let (Some(alpha), Some(meta)) = (&args.truth_alpha, &args.estimate_meta) {
        let text = std::fs::read_to_string(meta)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| eca::Error::InvalidParameter(format!("bad meta file: {e}")))?;
        let alpha_hat: Option<Vec<f64>> = value
            .pointer("/result/alpha_hat")
            .and_then(|v| serde_json::from_value(v.clone()).ok());
        if let Some(ah) = alpha_hat {
            let mut worst: f64 = 0.0;
            for (i, &j) in report.permutation.iter().enumerate() {
                if i < ah.len() && j < alpha.len() {
                    worst = worst.max((ah[i] - alpha[j]).abs());
                }
            }
            report.alpha_error = Some(worst);
        }
    }

    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| eca::Error::InvalidParameter(format!("serialization failed: {e}")))?;
    println!("{text}");
    if let Some(path) = &args.out {
        write_json(
            &RunRecord {
                command: "eval",
                version: env!("CARGO_PKG_VERSION"),
                config: &args,
                result: &report,
            },
            path,
        )?;
    }
    Ok(())
}

fn run_sweep(args: SweepArgs) -> eca::Result<()> {
    let truth = concentrated_topics(args.d, args.k, args.concentration)?;
    let prior = DirichletParams::uniform(args.k, args.alpha_uniform)?;
    let report: SweepReport = sample_complexity_sweep(
        &truth,
        &prior,
        args.doc_len,
        &args.ns,
        args.trials,
        &FitOptions::new(args.k, prior.alpha0()),
        args.seed,
    )?;
    for row in &report.rows {
        println!(
            "N = {:>9}: median {:.5}  q1 {:.5}  q3 {:.5}",
            row.n_docs, row.median, row.q1, row.q3
        );
    }
    println!("log-log slope: {:.4}", report.slope);
    if let Some(path) = &args.out {
        write_json(
            &RunRecord {
                command: "sweep",
                version: env!("CARGO_PKG_VERSION"),
                config: &args,
                result: &report,
            },
            path,
        )?;
    }
    Ok(())
}

fn run_moments(args: MomentsArgs) -> eca::Result<()> {
    let corpus = read_uci_bagofwords(&args.docword)?;
    let opts = MomentOptions { estimator_mode: args.estimator.into(), ..Default::default() };
    let acc = accumulate(&corpus, &opts)?;
    let (n_docs, skipped) = (acc.n_docs(), acc.skipped_docs());
    let ms = acc.finalize()?;

    write_topics_tsv(&[ms.mean().clone()], &prefixed(&args.out_prefix, "mean.tsv"))?;
    if let Some(pairs) = ms.pairs_dense() {
        let cols: Vec<nalgebra::DVector<f64>> =
            pairs.column_iter().map(|c| c.into_owned()).collect();
        write_topics_tsv(&cols, &prefixed(&args.out_prefix, "pairs.tsv"))?;
    }
    let probes = eca::eval::default_probes(corpus.d(), args.probes, args.seed);
    if !probes.is_empty() {
        write_topics_tsv(&probes, &prefixed(&args.out_prefix, "probes.tsv"))?;
        for (i, eta) in probes.iter().enumerate() {
            let t = ms.triples_contract(eta);
            let cols: Vec<nalgebra::DVector<f64>> =
                t.column_iter().map(|c| c.into_owned()).collect();
            write_topics_tsv(&cols, &prefixed(&args.out_prefix, &format!("triples{i}.tsv")))?;
        }
    }
    write_json(
        &RunRecord {
            command: "moments",
            version: env!("CARGO_PKG_VERSION"),
            config: &args,
            result: serde_json::json!({
                "d": corpus.d(),
                "documents_used": n_docs,
                "documents_skipped": skipped,
            }),
        },
        &prefixed(&args.out_prefix, "meta.json"),
    )?;
    println!("moments over {n_docs} documents ({skipped} skipped) -> {}.*.tsv", args.out_prefix);
    Ok(())
}
