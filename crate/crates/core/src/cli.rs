//! Command-line surface: fit, eval, report, suggest-links, synthesize.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::baselines::{fit_lda_regression, unigram};
use crate::corpus::{
    generate_synthetic, load_corpus, read_vocab, split_folds, write_corpus, Corpus, Document, SyntheticConfig,
    TopicSpec,
};
use crate::error::{Result, RtmError};
use crate::estimation::{
    fit, load_model, save_model, FitConfig, RegularizationConfig, TrainingPosterior,
};
use crate::inference::{init_state, run_e_step, EStepOptions, ModelParams};
use crate::linkfn::{LinkKind, LinkParams};
use crate::prediction::{evaluate_fold, ranked_order, EvalOptions, HeldoutPredictor, RankReport, TopicPredictor};

#[derive(Debug, Parser)]
#[command(name = "rtm", version, about = "Topic models for document networks")]
pub struct Cli {
    /// Log progress and the ELBO trace to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    /// Worker threads for the parallel E-step (1 keeps the sequential sweep).
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it to a file.
    Fit(FitArgs),
    /// Cross-validated link and word prediction against the baselines.
    Eval(EvalArgs),
    /// Top words per topic.
    Report(ReportArgs),
    /// Rank training documents as link targets for new text.
    SuggestLinks(SuggestArgs),
    /// Sample a corpus from the generative model.
    Synthesize(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub links: PathBuf,
    /// Remove documents without links before fitting.
    #[arg(long)]
    pub drop_isolated: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub topics: u64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_total: f64,
    #[arg(long, default_value = "exponential")]
    pub link_fn: LinkKind,
    /// Pseudo non-link count (default: number of training links).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.01)]
    pub smoothing: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub em_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory for the per-fold reports and summary.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Cutoff for precision at k.
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
    /// Average word ranks over distinct terms rather than occurrences.
    #[arg(long)]
    pub distinct_terms: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Vocabulary file; without it terms print as ids.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct SuggestArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Whitespace-separated tokens of the new document.
    #[arg(long)]
    pub words: String,
    #[arg(long, default_value_t = 8)]
    pub top_k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory that receives docs.txt, vocab.txt and links.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub topics: usize,
    #[arg(long, default_value_t = 20)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 60)]
    pub num_docs: usize,
    #[arg(long, default_value_t = 40)]
    pub doc_length: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha_total: f64,
    #[arg(long, default_value = "exponential")]
    pub link_fn: LinkKind,
    /// Comma-separated link coefficients, one per topic.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub nu: f64,
    /// Weight of the uniform component mixed into each block topic.
    #[arg(long, default_value_t = 0.0)]
    pub block_noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn fit_config(&self, threads: u64) -> FitConfig {
        FitConfig {
            num_topics: self.topics as usize,
            alpha_total: self.alpha_total,
            link: Some(self.link_fn),
            reg: RegularizationConfig {
                rho: self.rho,
                lambda: self.l2,
                smoothing: self.smoothing,
            },
            seed: self.seed,
            em_iters: self.em_iters,
            tol: self.tol,
            estep: EStepOptions {
                tol: self.tol,
                parallel: (threads > 1).then_some(threads as usize),
                ..EStepOptions::default()
            },
            ..FitConfig::default()
        }
    }
}

fn read_corpus(args: &CorpusArgs) -> Result<Corpus> {
    let corpus = load_corpus(&args.docs, &args.vocab, &args.links)?;
    if args.drop_isolated {
        let (kept, ids) = corpus.drop_isolated();
        log::info!("dropped {} isolated documents", corpus.num_docs() - ids.len());
        if kept.num_docs() == 0 {
            return Err(RtmError::InvalidCorpus("no linked documents remain".into()));
        }
        Ok(kept)
    } else {
        Ok(corpus)
    }
}

/// Parses arguments, runs the command, and maps errors to exit codes:
/// 0 on success, 2 for bad input, 1 for numeric failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("rtm: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs a parsed command and returns its standard output.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, cli.threads),
        Command::Eval(a) => cmd_eval(a, cli.threads),
        Command::Report(a) => cmd_report_topics(a),
        Command::SuggestLinks(a) => cmd_suggest_links(a, cli.threads),
        Command::Synthesize(a) => cmd_synthesize(a),
    }
}

pub fn cmd_fit(args: &FitArgs, threads: u64) -> Result<String> {
    let corpus = read_corpus(&args.corpus)?;
    let config = args.model.fit_config(threads);
    let fitted = fit(&corpus, &config)?;
    save_model(&fitted.to_model_file(), &args.out)?;
    Ok(format!(
        "final_elbo\t{:.10e}\niterations\t{}\nconverged\t{}\n",
        fitted.final_elbo(),
        fitted.iterations(),
        fitted.converged
    ))
}

/// Mean metrics of each compared model across folds.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    /// Model name and one report per fold.
    pub reports: Vec<(String, Vec<RankReport>)>,
}

impl CrossValidation {
    pub fn reports_for(&self, model: &str) -> Option<&[RankReport]> {
        self.reports.iter().find(|(m, _)| m == model).map(|(_, r)| r.as_slice())
    }

    /// Mean over folds of the per-fold means, skipping undefined folds.
    pub fn mean_of(&self, model: &str, metric: impl Fn(&RankReport) -> Option<f64>) -> Option<f64> {
        let values: Vec<f64> = self.reports_for(model)?.iter().filter_map(metric).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("model\tfold\tmetric\tvalue\n");
        let metrics: [(&str, fn(&RankReport) -> Option<f64>); 3] = [
            ("mean_link_rank", |r| r.mean_link_rank),
            ("mean_word_rank", |r| r.mean_word_rank),
            ("precision_at_k", |r| r.precision_at_k),
        ];
        for (model, reports) in &self.reports {
            for (name, get) in metrics {
                for (f, r) in reports.iter().enumerate() {
                    if let Some(v) = get(r) {
                        let _ = writeln!(out, "{model}\t{f}\t{name}\t{v:.6}");
                    }
                }
                if let Some(v) = self.mean_of(model, get) {
                    let _ = writeln!(out, "{model}\tmean\t{name}\t{v:.6}");
                }
            }
        }
        out
    }
}

pub const EVAL_MODELS: [&str; 3] = ["rtm", "lda_regression", "unigram"];

/// For every fold: drop the test documents and their links, fit the joint
/// model and both baselines on the rest, and score the held-out documents.
pub fn cross_validate(
    corpus: &Corpus,
    config: &FitConfig,
    folds: usize,
    eval: &EvalOptions,
) -> Result<CrossValidation> {
    let plan = split_folds(corpus, folds, config.seed)?;
    let mut reports: Vec<(String, Vec<RankReport>)> =
        EVAL_MODELS.iter().map(|m| (m.to_string(), Vec::new())).collect();
    for f in 0..plan.num_folds() {
        let split = plan.split(corpus, f);
        let test_docs: Vec<Document> = split.test_ids.iter().map(|&d| corpus.doc(d).clone()).collect();
        log::info!("fold {f}: {} train docs, {} test docs", split.train.num_docs(), test_docs.len());
        let rtm = fit(&split.train, config)?;
        let rtm_pred = TopicPredictor::new(rtm.params.clone(), rtm.posterior.clone());
        let lda_reg = fit_lda_regression(&split.train, config, &config.reg)?;
        let uni = unigram(&split.train, config.reg.smoothing);
        let predictors: [&dyn HeldoutPredictor; 3] = [&rtm_pred, &*lda_reg.predictor(), &*uni.predictor()];
        for (slot, predictor) in reports.iter_mut().zip(predictors) {
            slot.1.push(evaluate_fold(predictor, &split, &test_docs, eval)?);
        }
    }
    Ok(CrossValidation { reports })
}

pub fn cmd_eval(args: &EvalArgs, threads: u64) -> Result<String> {
    let corpus = read_corpus(&args.corpus)?;
    let config = args.model.fit_config(threads);
    let eval = EvalOptions {
        top_k: args.top_k,
        distinct_terms: args.distinct_terms,
    };
    let cv = cross_validate(&corpus, &config, args.folds, &eval)?;
    std::fs::create_dir_all(&args.out).map_err(|e| RtmError::io(&args.out, e))?;
    for (model, reports) in &cv.reports {
        for (f, report) in reports.iter().enumerate() {
            report.write_tsv(&args.out.join(format!("fold{f}_{model}.tsv")))?;
        }
    }
    let summary = cv.summary_tsv();
    let path = args.out.join("summary.tsv");
    std::fs::write(&path, &summary).map_err(|e| RtmError::io(&path, e))?;
    Ok(summary)
}

/// `β_{k,w} (log β_{k,w} − mean_k' log β_{k',w})`, `K × V`.
pub fn word_scores(log_beta: &Array2<f64>) -> Array2<f64> {
    let k = log_beta.nrows() as f64;
    let mut scores = log_beta.clone();
    for w in 0..log_beta.ncols() {
        let col = log_beta.column(w);
        let mean = col.sum() / k;
        for t in 0..log_beta.nrows() {
            scores[[t, w]] = col[t].exp() * (col[t] - mean);
        }
    }
    scores
}

/// Per topic, the `n` highest-scoring term ids with their scores; ties by
/// term id.
pub fn top_words(log_beta: &Array2<f64>, n: usize) -> Vec<Vec<(usize, f64)>> {
    let scores = word_scores(log_beta);
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let row = row.to_vec();
            ranked_order(&row).into_iter().take(n).map(|w| (w, row[w])).collect()
        })
        .collect()
}

pub fn cmd_report_topics(args: &ReportArgs) -> Result<String> {
    let model = load_model(&args.model)?;
    let vocab = match &args.vocab {
        Some(p) => Some(read_vocab(p)?),
        None => None,
    };
    if let Some(v) = &vocab {
        if v.len() != model.log_beta.ncols() {
            return Err(RtmError::InvalidArgument(format!(
                "vocabulary has {} terms but the model has {}",
                v.len(),
                model.log_beta.ncols()
            )));
        }
    }
    let mut out = String::from("topic\trank\tterm\tscore\n");
    for (k, words) in top_words(&model.log_beta, args.top_k).iter().enumerate() {
        for (r, &(w, s)) in words.iter().enumerate() {
            let term = vocab.as_ref().map_or_else(|| w.to_string(), |v| v[w].clone());
            let _ = writeln!(out, "{k}\t{}\t{term}\t{s:.6}", r + 1);
        }
    }
    Ok(out)
}

/// Posterior of the training documents under fixed parameters.
pub fn training_posterior(
    corpus: &Corpus,
    params: &ModelParams,
    seed: u64,
    opts: &EStepOptions,
) -> Result<TrainingPosterior> {
    let mut state = init_state(corpus, params.num_topics(), &params.alpha, seed)?;
    run_e_step(corpus, params, &mut state, opts)?;
    Ok(TrainingPosterior::from_state(&state))
}

/// The `top_k` training documents most likely to be linked from `words`,
/// by descending probability with ties broken by document id.
pub fn suggest_links(predictor: &TopicPredictor, words: &Document, top_k: usize) -> Result<Vec<(usize, f64)>> {
    if words.is_empty() {
        return Err(RtmError::InvalidArgument("no words given".into()));
    }
    let scores = predictor
        .link_scores(words)?
        .ok_or_else(|| RtmError::InvalidArgument("model has no link component".into()))?;
    Ok(ranked_order(&scores).into_iter().take(top_k).map(|d| (d, scores[d])).collect())
}

/// Maps tokens to vocabulary ids; unknown tokens are skipped with a warning.
pub fn words_to_document(vocab: &[String], text: &str) -> Document {
    let index: std::collections::HashMap<&str, usize> =
        vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut ids = Vec::new();
    for tok in text.split_whitespace() {
        match index.get(tok) {
            Some(&i) => ids.push(i),
            None => log::warn!("skipping unknown token '{tok}'"),
        }
    }
    Document::from_tokens(ids)
}

pub fn cmd_suggest_links(args: &SuggestArgs, threads: u64) -> Result<String> {
    let model = load_model(&args.model)?;
    let corpus = read_corpus(&args.corpus)?;
    let params = model.params();
    if params.link.is_none() {
        return Err(RtmError::InvalidArgument(format!("a {} model cannot score links", model.kind)));
    }
    let opts = EStepOptions {
        parallel: (threads > 1).then_some(threads as usize),
        ..EStepOptions::default()
    };
    let posterior = training_posterior(&corpus, &params, args.seed, &opts)?;
    let predictor = TopicPredictor::new(params, posterior);
    let words = words_to_document(corpus.vocab(), &args.words);
    let ranked = suggest_links(&predictor, &words, args.top_k)?;
    let mut out = String::from("rank\tdoc_id\tprobability\n");
    for (r, (d, p)) in ranked.iter().enumerate() {
        let _ = writeln!(out, "{}\t{d}\t{p:.6e}", r + 1);
    }
    Ok(out)
}

pub fn cmd_synthesize(args: &SynthArgs) -> Result<String> {
    let k = args.topics;
    let eta = if args.eta.is_empty() { vec![0.0; k] } else { args.eta.clone() };
    let link = LinkParams::new(args.link_fn, eta, args.nu)?;
    if k == 0 || !(args.alpha_total > 0.0) {
        return Err(RtmError::InvalidArgument("topics and alpha total must be positive".into()));
    }
    let config = SyntheticConfig {
        num_topics: k,
        vocab_size: args.vocab_size,
        num_docs: args.num_docs,
        doc_length: args.doc_length,
        alpha: vec![args.alpha_total / k as f64; k],
        topics: TopicSpec::Blocks {
            noise: args.block_noise,
        },
        link,
        seed: args.seed,
    };
    let (corpus, _) = generate_synthetic(&config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| RtmError::io(&args.out, e))?;
    let paths = corpus_paths(&args.out);
    write_corpus(&corpus, &paths[0], &paths[1], &paths[2])?;
    Ok(format!("documents\t{}\nlinks\t{}\n", corpus.num_docs(), corpus.num_links()))
}

/// `docs.txt`, `vocab.txt` and `links.txt` inside `dir`.
pub fn corpus_paths(dir: &Path) -> [PathBuf; 3] {
    [dir.join("docs.txt"), dir.join("vocab.txt"), dir.join("links.txt")]
}
