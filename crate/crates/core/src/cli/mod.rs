//! Command-line driver: resolves the run configuration, dispatches to the
//! requested mode and writes artifacts plus a manifest into the output
//! directory.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use rand::seq::SliceRandom;

pub use config::{Mode, RunConfig, KEYS};

use crate::embeddings::{self, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, evaluate_model, EvalReport, MatchMode};
use crate::features::{max_length, Example, Featurizer};
use crate::network::checkpoint::Checkpoint;
use crate::network::gradcheck::run_suite;
use crate::network::ModelParams;
use crate::rng::substream;
use crate::synth::{make_synthetic_corpus, synthetic_embeddings};
use crate::text::corpus::{
    normalize_labeled, read_ade, read_labeled, read_unlabeled, save_ade, save_labeled, save_lines,
    tokenize_pool,
};
use crate::text::{AdeExample, LabeledSequence, Token, Vocabulary};
use crate::trainer::{train_joint, train_mtl, train_single_task, Hyperparams, TrainLog};
use crate::weak::{build_joint_corpus, generate_weak_datasets, self_train, SelfTrainConfig, WeakDatasets};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Parser, Debug, Default)]
#[command(name = "adrmtl", version, about = "Multi-task bi-LSTM ADR extraction toolkit", args_override_self = true)]
pub struct Args {
    /// One of: preprocess, train-single, train-mtl, self-train, gen-weak,
    /// train-joint, evaluate, cross-validate, grad-check, synth-gen, ablate.
    #[arg(long)]
    pub mode: Option<String>,
    /// key=value configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub adr_data: Option<String>,
    #[arg(long)]
    pub ade_data: Option<String>,
    #[arg(long)]
    pub pool: Option<String>,
    #[arg(long)]
    pub embeddings: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    /// Model checkpoint to load.
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Pool used during self-training; the fresh pool must not overlap it.
    #[arg(long)]
    pub prior_pool: Option<String>,
    #[arg(long)]
    pub weak_adr: Option<String>,
    #[arg(long)]
    pub weak_ade: Option<String>,
    /// Ablation axis: ade-fraction, pool-fraction or layers.
    #[arg(long)]
    pub axis: Option<String>,
    /// Any other configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Args {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("mode", &self.mode),
            ("adr_data", &self.adr_data),
            ("ade_data", &self.ade_data),
            ("pool", &self.pool),
            ("embeddings", &self.embeddings),
            ("out", &self.out),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("k", &self.k),
            ("lambda", &self.lambda),
            ("tau", &self.tau),
            ("layers", &self.layers),
            ("epochs", &self.epochs),
            ("checkpoint", &self.checkpoint),
            ("prior_pool", &self.prior_pool),
            ("weak_adr", &self.weak_adr),
            ("weak_ade", &self.weak_ade),
            ("axis", &self.axis),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

/// An error together with the stage that produced it.
#[derive(Debug)]
pub struct Failure {
    pub stage: String,
    pub error: Error,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::Config(_) => EXIT_USAGE,
            Error::Numeric { .. } => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

trait Stage<T> {
    fn stage(self, name: &str) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure {
            stage: name.to_string(),
            error,
        })
    }
}

type Run<T> = std::result::Result<T, Failure>;

/// Summary lines appended to the manifest.
type Stats = Vec<(String, String)>;

/// Parses `args`, runs and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("adrmtl: {e}");
            return EXIT_USAGE;
        }
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("adrmtl: {f}");
            f.exit_code()
        }
    }
}

/// Runs one mode. The manifest is written even when the run fails.
pub fn run(cfg: &RunConfig) -> Run<()> {
    let mode = cfg.mode().stage("configuration")?;
    let threads: usize = cfg.parse("threads").stage("configuration")?;
    if threads > 0 {
        // Fails harmlessly if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e)).stage("creating output directory")?;
    let manifest = out.join(MANIFEST);
    let mut text = cfg.to_text();
    fs::write(&manifest, &text).map_err(|e| Error::io(&manifest, e)).stage("writing manifest")?;

    let result = dispatch(mode, cfg, &out);
    match &result {
        Ok(stats) => {
            for (k, v) in stats {
                let _ = writeln!(text, "# {k}: {v}");
            }
            let _ = writeln!(text, "# status: ok");
        }
        Err(f) => {
            let _ = writeln!(text, "# status: failed ({f})");
        }
    }
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e)).stage("writing manifest")?;
    result.map(|_| ())
}

fn dispatch(mode: Mode, cfg: &RunConfig, out: &Path) -> Run<Stats> {
    match mode {
        Mode::Preprocess => preprocess(cfg, out),
        Mode::SynthGen => synth_gen(cfg, out),
        Mode::TrainSingle | Mode::TrainMtl => train(mode, cfg, out),
        Mode::SelfTrain => self_train_mode(cfg, out),
        Mode::GenWeak => gen_weak(cfg, out),
        Mode::TrainJoint => train_joint_mode(cfg, out),
        Mode::Evaluate => evaluate(cfg, out),
        Mode::CrossValidate => cross_validate_mode(cfg, out),
        Mode::GradCheck => grad_check(cfg, out),
        Mode::Ablate => ablate(cfg, out),
    }
}

fn stat(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_adr(path: &Path) -> Result<Vec<LabeledSequence>> {
    let raw = read_labeled(path)?;
    let n = raw.len();
    let seqs: Vec<LabeledSequence> = raw.iter().filter_map(normalize_labeled).collect();
    if seqs.len() < n {
        log::warn!("{}: {} sequences empty after normalization", path.display(), n - seqs.len());
    }
    Ok(seqs)
}

fn load_pool(path: &Path) -> Result<Vec<Vec<Token>>> {
    Ok(tokenize_pool(&read_unlabeled(path)?))
}

fn need(cfg: &RunConfig, key: &str) -> Run<PathBuf> {
    cfg.require_path(key).stage("configuration")
}

fn real_tokens(seq: &LabeledSequence) -> &[Token] {
    &seq.tokens()[..seq.original_length()]
}

/// Vocabulary cap used by the semi-supervised pipeline when none is given.
pub const WEAK_VOCAB_CAP: usize = 40_000;

fn vocab_cap(cfg: &RunConfig, weak: bool) -> Result<usize> {
    match cfg.get("vocab_cap") {
        "auto" if weak => Ok(WEAK_VOCAB_CAP),
        "auto" | "none" => Ok(usize::MAX),
        _ => cfg.parse("vocab_cap"),
    }
}

/// Vocabulary and padded length over every token list the run will see.
fn build_featurizer(cfg: &RunConfig, hyper: &Hyperparams, corpora: &[&[Token]], weak: bool) -> Result<Featurizer> {
    let surfaces: Vec<Vec<&str>> = corpora.iter().map(|t| t.iter().map(Token::surface).collect()).collect();
    let cap = vocab_cap(cfg, weak)?;
    let vocab = Vocabulary::build(surfaces.iter().map(Vec::as_slice), cap);
    let longest = max_length(corpora.iter().map(|t| t.len()));
    let pad_len = match cfg.optional_usize("pad_len", "auto")? {
        None => longest,
        Some(p) if p >= longest => p,
        Some(p) => return Err(Error::Length { len: longest, max: p }),
    };
    let path = cfg.require_path("embeddings")?;
    let oov_seed: u64 = cfg.parse("oov_seed")?;
    let loaded = EmbeddingTable::load(&path, hyper.input_dim, oov_seed)?;
    if loaded.skipped > 0 {
        log::warn!("{}: skipped {} malformed lines", path.display(), loaded.skipped);
    }
    Ok(Featurizer::new(vocab, loaded.table, pad_len))
}

fn save_model(path: &Path, params: &ModelParams, featurizer: &Featurizer, hyper: &Hyperparams) -> Result<()> {
    let mut ckpt = Checkpoint::new(params.clone());
    let meta = [
        ("pad_len", featurizer.pad_len().to_string()),
        ("oov_seed", featurizer.table().seed().to_string()),
        ("max_epochs", hyper.max_epochs.to_string()),
        ("learning_rate", hyper.learning_rate.to_string()),
        ("lambda", hyper.lambda.to_string()),
        ("tau", hyper.tau.to_string()),
    ];
    for (k, v) in meta {
        ckpt.meta.insert(k.to_string(), v);
    }
    ckpt.vocab = featurizer.vocab().words().to_vec();
    ckpt.save(path)
}

fn load_model(cfg: &RunConfig) -> Result<(ModelParams, Featurizer)> {
    let path = cfg.require_path("checkpoint")?;
    let ckpt = Checkpoint::load(&path)?;
    let bad = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));
    let vocab = Vocabulary::from_words(ckpt.vocab).ok_or_else(|| bad("checkpoint carries no valid vocabulary"))?;
    let meta = |k: &str| -> Result<u64> {
        ckpt.meta
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(&format!("checkpoint metadata lacks {k}")))
    };
    let pad_len = meta("pad_len")? as usize;
    let oov_seed = meta("oov_seed")?;
    let emb = cfg.require_path("embeddings")?;
    let loaded = EmbeddingTable::load(&emb, ckpt.params.config.input_dim, oov_seed)?;
    Ok((ckpt.params, Featurizer::new(vocab, loaded.table, pad_len)))
}

fn write_model_outputs(
    out: &Path,
    params: &ModelParams,
    featurizer: &Featurizer,
    hyper: &Hyperparams,
    log: &TrainLog,
) -> Run<Stats> {
    save_model(&out.join("model.ckpt"), params, featurizer, hyper).stage("saving checkpoint")?;
    write_text(&out.join("train_log.tsv"), &log.to_tsv()).stage("writing training log")?;
    Ok(vec![
        stat("vocab_size", featurizer.vocab().len()),
        stat("pad_len", featurizer.pad_len()),
        stat("parameters", params.param_count()),
        stat("epochs_run", log.epochs.len()),
    ])
}

fn preprocess(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let (adr, ade, pool) = (cfg.path("adr_data"), cfg.path("ade_data"), cfg.path("pool"));
    if adr.is_none() && ade.is_none() && pool.is_none() {
        return Err(Error::Config("preprocess needs at least one of --adr-data, --ade-data, --pool".into()))
            .stage("configuration");
    }
    let mut stats = Stats::new();
    let mut corpora: Vec<Vec<String>> = Vec::new();
    if let Some(p) = adr {
        let seqs = load_adr(&p).stage("loading ADR corpus")?;
        save_labeled(&out.join("adr.tsv"), &seqs).stage("writing ADR corpus")?;
        corpora.extend(seqs.iter().map(|s| real_tokens(s).iter().map(|t| t.surface().to_string()).collect()));
        stats.push(stat("adr_sequences", seqs.len()));
        stats.push(stat("adr_with_spans", seqs.iter().filter(|s| s.has_adr()).count()));
    }
    if let Some(p) = ade {
        let exs = read_ade(&p).stage("loading ADE corpus")?;
        save_ade(&out.join("ade.tsv"), &exs).stage("writing ADE corpus")?;
        corpora.extend(exs.iter().map(|e| e.surfaces().iter().map(|s| s.to_string()).collect()));
        stats.push(stat("ade_examples", exs.len()));
        stats.push(stat("ade_positive", exs.iter().filter(|e| e.label == 1).count()));
    }
    if let Some(p) = pool {
        let toks = load_pool(&p).stage("loading unlabeled pool")?;
        let lines: Vec<String> = toks
            .iter()
            .map(|t| t.iter().map(Token::surface).collect::<Vec<_>>().join(" "))
            .collect();
        save_lines(&out.join("pool.txt"), &lines).stage("writing pool")?;
        corpora.extend(toks.iter().map(|t| t.iter().map(|x| x.surface().to_string()).collect()));
        stats.push(stat("pool_tweets", toks.len()));
    }
    let cap = vocab_cap(cfg, false).stage("configuration")?;
    let vocab = Vocabulary::build(corpora.iter().map(Vec::as_slice), cap);
    save_lines(&out.join("vocab.txt"), vocab.words()).stage("writing vocabulary")?;
    stats.push(stat("vocab_size", vocab.len()));
    stats.push(stat("max_length", max_length(corpora.iter().map(Vec::len))));
    Ok(stats)
}

fn synth_gen(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let synth = cfg.synth().stage("configuration")?;
    let seed = cfg.seed().stage("configuration")?;
    let dim: usize = cfg.parse("input_dim").stage("configuration")?;
    let corpus = make_synthetic_corpus(&synth, seed).stage("generating corpus")?;
    let fresh_source = make_synthetic_corpus(&synth, seed.wrapping_add(1)).stage("generating corpus")?;
    let seen: std::collections::HashSet<&String> = corpus.pool.iter().collect();
    let fresh: Vec<&String> = fresh_source.pool.iter().filter(|p| !seen.contains(p)).collect();

    save_labeled(&out.join("adr.tsv"), &corpus.adr).stage("writing ADR corpus")?;
    save_ade(&out.join("ade.tsv"), &corpus.ade).stage("writing ADE corpus")?;
    save_lines(&out.join("pool.txt"), &corpus.pool).stage("writing pool")?;
    save_lines(&out.join("fresh_pool.txt"), &fresh).stage("writing pool")?;
    let emb_path = out.join("embeddings.txt");
    let file = fs::File::create(&emb_path).map_err(|e| Error::io(&emb_path, e)).stage("writing embeddings")?;
    embeddings::write_text(std::io::BufWriter::new(file), &synthetic_embeddings(&synth, dim, seed))
        .map_err(|e| Error::io(&emb_path, e))
        .stage("writing embeddings")?;
    Ok(vec![
        stat("adr_sequences", corpus.adr.len()),
        stat("ade_examples", corpus.ade.len()),
        stat("pool_tweets", corpus.pool.len()),
        stat("fresh_pool_tweets", fresh.len()),
        stat("embedding_dim", dim),
    ])
}

fn train(mode: Mode, cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let hyper = cfg.hyperparams().stage("configuration")?;
    let adr_path = need(cfg, "adr_data")?;
    need(cfg, "embeddings")?;
    let ade_path = if mode == Mode::TrainMtl { Some(need(cfg, "ade_data")?) } else { None };
    let adr = load_adr(&adr_path).stage("loading ADR corpus")?;
    let ade = match &ade_path {
        Some(p) => read_ade(p).stage("loading ADE corpus")?,
        None => Vec::new(),
    };
    let mut corpora: Vec<&[Token]> = adr.iter().map(real_tokens).collect();
    corpora.extend(ade.iter().map(|e| e.tokens.as_slice()));
    let featurizer = build_featurizer(cfg, &hyper, &corpora, false).stage("building features")?;
    let adr_ex = featurizer.adr_examples(&adr).stage("encoding ADR corpus")?;
    let (params, log) = if mode == Mode::TrainMtl {
        let ade_ex = featurizer.ade_examples(&ade).stage("encoding ADE corpus")?;
        train_mtl(&adr_ex, &ade_ex, &hyper).stage("training")?
    } else {
        train_single_task(&adr_ex, &hyper).stage("training")?
    };
    write_model_outputs(out, &params, &featurizer, &hyper, &log)
}

/// Drops pool members that do not fit the model's padded length.
fn fit_pool(pool: Vec<Vec<Token>>, pad_len: usize, what: &str) -> Vec<Vec<Token>> {
    let n = pool.len();
    let kept: Vec<Vec<Token>> = pool.into_iter().filter(|t| t.len() <= pad_len).collect();
    if kept.len() < n {
        log::warn!("{what}: skipped {} tweets longer than {pad_len} tokens", n - kept.len());
    }
    kept
}

fn self_train_mode(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let hyper = cfg.hyperparams().stage("configuration")?;
    let st = cfg.selftrain().stage("configuration")?;
    let adr = load_adr(&need(cfg, "adr_data")?).stage("loading ADR corpus")?;
    let pool = load_pool(&need(cfg, "pool")?).stage("loading unlabeled pool")?;
    need(cfg, "embeddings")?;

    let (initial, featurizer, pool) = if cfg.path("checkpoint").is_some() {
        let (params, f) = load_model(cfg).stage("loading checkpoint")?;
        let pool = fit_pool(pool, f.pad_len(), "pool");
        (params, f, pool)
    } else {
        let mut corpora: Vec<&[Token]> = adr.iter().map(real_tokens).collect();
        corpora.extend(pool.iter().map(Vec::as_slice));
        let f = build_featurizer(cfg, &hyper, &corpora, true).stage("building features")?;
        let ex = f.adr_examples(&adr).stage("encoding ADR corpus")?;
        let (params, _) = train_single_task(&ex, &hyper).stage("initial training")?;
        (params, f, pool)
    };
    let outcome = self_train(initial, &adr, &pool, &featurizer, &st, &hyper).stage("self-training")?;

    let mut iters = String::from("iteration\ttrain_size\tpool_before\tadmitted\tmin_score\tmean_score\n");
    let mut admissions = String::from("iteration\tpool_index\tscore\n");
    for it in &outcome.iterations {
        let scores: Vec<f64> = it.admissions.iter().map(|a| a.score).collect();
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        let _ = writeln!(
            iters,
            "{}\t{}\t{}\t{}\t{}\t{}",
            it.iteration,
            it.train_size,
            it.pool_before,
            scores.len(),
            if scores.is_empty() { "NA".into() } else { format!("{min:.17e}") },
            if scores.is_empty() { "NA".into() } else { format!("{mean:.17e}") },
        );
        for a in &it.admissions {
            let _ = writeln!(admissions, "{}\t{}\t{:.17e}", it.iteration, a.pool_index, a.score);
        }
    }
    write_text(&out.join("selftrain.tsv"), &iters).stage("writing self-training log")?;
    write_text(&out.join("admissions.tsv"), &admissions).stage("writing self-training log")?;
    save_labeled(&out.join("augmented_adr.tsv"), &outcome.corpus).stage("writing augmented corpus")?;
    save_model(&out.join("model.ckpt"), &outcome.params, &featurizer, &hyper).stage("saving checkpoint")?;
    Ok(vec![
        stat("tau", st.tau),
        stat("iterations", outcome.iterations.len()),
        stat("pool_size", pool.len()),
        stat("pool_remaining", outcome.pool_remaining),
        stat("initial_train_size", adr.len()),
        stat("final_train_size", outcome.corpus.len()),
        stat("admitted", outcome.corpus.len() - adr.len()),
    ])
}

fn gen_weak(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let st = cfg.selftrain().stage("configuration")?;
    let fresh = load_pool(&need(cfg, "pool")?).stage("loading fresh pool")?;
    let prior = match cfg.path("prior_pool") {
        Some(p) => Some(load_pool(&p).stage("loading prior pool")?),
        None => None,
    };
    let (params, featurizer) = load_model(cfg).stage("loading checkpoint")?;
    let fresh = fit_pool(fresh, featurizer.pad_len(), "fresh pool");
    let weak = generate_weak_datasets(&params, &featurizer, &fresh, st.tau, st.score_mode, prior.as_deref())
        .stage("generating weak labels")?;
    save_labeled(&out.join("weak_adr.tsv"), &weak.adr).stage("writing weak ADR data")?;
    save_ade(&out.join("weak_ade.tsv"), &weak.ade).stage("writing weak ADE data")?;
    let mut scores = String::from("index\tscore\tlabel\n");
    for (i, (s, ex)) in weak.scores.iter().zip(&weak.ade).enumerate() {
        let s = s.map_or("filtered".to_string(), |v| format!("{v:.17e}"));
        let _ = writeln!(scores, "{i}\t{s}\t{}", ex.label);
    }
    write_text(&out.join("weak_scores.tsv"), &scores).stage("writing scores")?;
    Ok(vec![
        stat("tau", st.tau),
        stat("score_mode", st.score_mode.as_str()),
        stat("fresh_pool_size", fresh.len()),
        stat("prior_pool_size", prior.map_or(0, |p| p.len())),
        stat("weak_adr", weak.adr.len()),
        stat("weak_ade_positive", weak.adr.len()),
        stat("weak_ade_negative", weak.ade.len() - weak.adr.len()),
    ])
}

fn train_joint_mode(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let hyper = cfg.hyperparams().stage("configuration")?;
    let seed = hyper.seed;
    let include_gold: bool = cfg.parse("include_gold").stage("configuration")?;
    let weak_adr = read_labeled(&need(cfg, "weak_adr")?).stage("loading weak ADR data")?;
    let weak_ade = read_ade(&need(cfg, "weak_ade")?).stage("loading weak ADE data")?;
    need(cfg, "embeddings")?;
    let gold = if include_gold {
        load_adr(&need(cfg, "adr_data")?).stage("loading ADR corpus")?
    } else {
        Vec::new()
    };
    let weak = WeakDatasets {
        adr: weak_adr,
        ade: weak_ade,
        scores: Vec::new(),
    };
    let joint = build_joint_corpus(&gold, &weak, include_gold, seed).stage("building joint corpus")?;
    let corpora: Vec<&[Token]> = joint.iter().map(|j| j.tokens.as_slice()).collect();
    let featurizer = build_featurizer(cfg, &hyper, &corpora, true).stage("building features")?;
    let examples: Vec<Example> = joint
        .iter()
        .map(|j| j.encode(&featurizer))
        .collect::<Result<_>>()
        .stage("encoding joint corpus")?;
    let (params, log) = train_joint(&examples, &hyper).stage("training")?;
    let mut stats = write_model_outputs(out, &params, &featurizer, &hyper, &log)?;
    stats.push(stat("joint_examples", joint.len()));
    stats.push(stat("joint_positive", joint.iter().filter(|j| j.ade == 1).count()));
    Ok(stats)
}

fn match_mode(cfg: &RunConfig) -> Result<MatchMode> {
    match cfg.get("match") {
        "approximate" => Ok(MatchMode::Approximate),
        "exact" => Ok(MatchMode::Exact),
        m => Err(Error::Config(format!("invalid match mode {m:?}"))),
    }
}

fn write_report(out: &Path, report: &EvalReport) -> Run<Stats> {
    write_text(&out.join("report.txt"), &report.to_table()).stage("writing report")?;
    write_text(&out.join("report.tsv"), &report.to_tsv()).stage("writing report")?;
    print!("{}", report.to_table());
    Ok(vec![
        stat("precision", format!("{:.6}", report.mean.precision)),
        stat("recall", format!("{:.6}", report.mean.recall)),
        stat("f1", format!("{:.6}", report.mean.f1)),
        stat("folds", report.per_fold.len()),
    ])
}

fn evaluate(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let mode = match_mode(cfg).stage("configuration")?;
    let test = load_adr(&need(cfg, "adr_data")?).stage("loading ADR corpus")?;
    let (params, featurizer) = load_model(cfg).stage("loading checkpoint")?;
    let counts = evaluate_model(&params, &featurizer, &test, mode).stage("evaluating")?;
    let mut report = EvalReport::single(counts, mode);
    report.per_fold[0].test_size = test.len();
    write_report(out, &report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TrainKind {
    Single,
    Mtl,
    SelfTrain,
}

impl TrainKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(TrainKind::Single),
            "mtl" => Ok(TrainKind::Mtl),
            "self-train" => Ok(TrainKind::SelfTrain),
            _ => Err(Error::Config(format!("invalid train procedure {s:?}; expected single, mtl or self-train"))),
        }
    }
}

/// Everything a fold needs besides its training split.
struct Experiment {
    hyper: Hyperparams,
    selftrain: SelfTrainConfig,
    featurizer: Featurizer,
    adr: Vec<LabeledSequence>,
    ade: Vec<AdeExample>,
    pool: Vec<Vec<Token>>,
    k: usize,
    mode: MatchMode,
}

impl Experiment {
    fn load(cfg: &RunConfig, kind: TrainKind) -> Run<Self> {
        let hyper = cfg.hyperparams().stage("configuration")?;
        let selftrain = cfg.selftrain().stage("configuration")?;
        let k: usize = cfg.parse("k").stage("configuration")?;
        let mode = match_mode(cfg).stage("configuration")?;
        let adr = load_adr(&need(cfg, "adr_data")?).stage("loading ADR corpus")?;
        need(cfg, "embeddings")?;
        let ade = match (kind, cfg.path("ade_data")) {
            (TrainKind::Mtl, None) => return Err(Error::Config("MTL training requires --ade-data".into())).stage("configuration"),
            (_, Some(p)) if kind == TrainKind::Mtl => read_ade(&p).stage("loading ADE corpus")?,
            _ => Vec::new(),
        };
        let pool = match (kind, cfg.path("pool")) {
            (TrainKind::SelfTrain, None) => return Err(Error::Config("self-training requires --pool".into())).stage("configuration"),
            (TrainKind::SelfTrain, Some(p)) => load_pool(&p).stage("loading unlabeled pool")?,
            _ => Vec::new(),
        };
        let mut corpora: Vec<&[Token]> = adr.iter().map(real_tokens).collect();
        corpora.extend(ade.iter().map(|e| e.tokens.as_slice()));
        corpora.extend(pool.iter().map(Vec::as_slice));
        let featurizer =
            build_featurizer(cfg, &hyper, &corpora, kind == TrainKind::SelfTrain).stage("building features")?;
        Ok(Experiment {
            hyper,
            selftrain,
            featurizer,
            adr,
            ade,
            pool,
            k,
            mode,
        })
    }

    fn run(&self, kind: TrainKind, hyper: &Hyperparams, ade: &[Example], pool: &[Vec<Token>]) -> Result<EvalReport> {
        let f = &self.featurizer;
        cross_validate(&self.adr, self.k, hyper.seed, f, self.mode, |fold, train| {
            let ex = f.adr_examples(train)?;
            let params = match kind {
                TrainKind::Single => train_single_task(&ex, hyper)?.0,
                TrainKind::Mtl => train_mtl(&ex, ade, hyper)?.0,
                TrainKind::SelfTrain => {
                    let initial = train_single_task(&ex, hyper)?.0;
                    self_train(initial, train, pool, f, &self.selftrain, hyper)?.params
                }
            };
            log::debug!("fold {fold} trained");
            Ok(params)
        })
    }
}

fn cross_validate_mode(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let kind = TrainKind::parse(cfg.get("train")).stage("configuration")?;
    let exp = Experiment::load(cfg, kind)?;
    let ade = exp.featurizer.ade_examples(&exp.ade).stage("encoding ADE corpus")?;
    let report = exp.run(kind, &exp.hyper, &ade, &exp.pool).stage("cross-validation")?;
    let mut stats = write_report(out, &report)?;
    stats.push(stat("train", cfg.get("train")));
    stats.push(stat("corpus_size", exp.adr.len()));
    Ok(stats)
}

fn grad_check(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let seed = cfg.seed().stage("configuration")?;
    let n: usize = cfg.parse("gradcheck_configs").stage("configuration")?;
    let checks = run_suite(seed, n).stage("gradient check")?;
    let mut tsv = String::from("config_block\tloss\tentries\tmax_abs_err\tmax_rel_err\tpassed\n");
    for c in &checks {
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{:.6e}\t{:.6e}\t{}",
            c.block,
            c.kind.as_str(),
            c.entries,
            c.max_abs_err,
            c.max_rel_err,
            c.passed
        );
    }
    write_text(&out.join("gradcheck.tsv"), &tsv).stage("writing gradient check")?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.block.as_str()).collect();
    println!("{} block checks, {} failed", checks.len(), failed.len());
    if let Some(first) = failed.first() {
        return Err(Error::numeric(
            *first,
            format!("{} block gradients disagree with finite differences", failed.len()),
        ))
        .stage("gradient check");
    }
    Ok(vec![stat("configs", n), stat("block_checks", checks.len()), stat("failed", 0)])
}

/// Seeded nested subsets: each fraction takes a prefix of one shuffle.
fn prefix_subset<T: Clone>(items: &[T], fraction: f64, seed: u64, stream: &str) -> Vec<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut substream(seed, stream));
    let n = ((items.len() as f64 * fraction).round() as usize).clamp(1.min(items.len()), items.len());
    let mut take: Vec<usize> = order[..n].to_vec();
    take.sort_unstable();
    take.into_iter().map(|i| items[i].clone()).collect()
}

fn ablate(cfg: &RunConfig, out: &Path) -> Run<Stats> {
    let axis = cfg.get("axis").to_string();
    let kind = match axis.as_str() {
        "ade-fraction" => TrainKind::Mtl,
        "pool-fraction" => TrainKind::SelfTrain,
        "layers" => TrainKind::parse(cfg.get("train")).stage("configuration")?,
        "" => return Err(Error::Config("ablate requires --axis".into())).stage("configuration"),
        other => {
            return Err(Error::Config(format!(
                "unknown ablation axis {other:?}; expected ade-fraction, pool-fraction or layers"
            )))
            .stage("configuration")
        }
    };
    let exp = Experiment::load(cfg, kind)?;
    let seed = exp.hyper.seed;
    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    match axis.as_str() {
        "layers" => {
            let ade = exp.featurizer.ade_examples(&exp.ade).stage("encoding ADE corpus")?;
            for layers in cfg.layer_values().stage("configuration")? {
                let hyper = Hyperparams { layers, ..exp.hyper.clone() };
                hyper.validate().stage("configuration")?;
                let r = exp.run(kind, &hyper, &ade, &exp.pool).stage("cross-validation")?;
                rows.push((layers.to_string(), r));
            }
        }
        "ade-fraction" => {
            for f in cfg.fractions().stage("configuration")? {
                let subset = prefix_subset(&exp.ade, f, seed, "ablate-ade");
                let ade = exp.featurizer.ade_examples(&subset).stage("encoding ADE corpus")?;
                let r = exp.run(kind, &exp.hyper, &ade, &exp.pool).stage("cross-validation")?;
                rows.push((f.to_string(), r));
            }
        }
        _ => {
            for f in cfg.fractions().stage("configuration")? {
                let pool = prefix_subset(&exp.pool, f, seed, "ablate-pool");
                let r = exp.run(kind, &exp.hyper, &[], &pool).stage("cross-validation")?;
                rows.push((f.to_string(), r));
            }
        }
    }
    let mut tsv = String::from("axis\tvalue\tprecision\trecall\tf1\tf1_std\n");
    for (v, r) in &rows {
        let _ = writeln!(
            tsv,
            "{axis}\t{v}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}",
            r.mean.precision, r.mean.recall, r.mean.f1, r.std.f1
        );
    }
    write_text(&out.join("ablation.tsv"), &tsv).stage("writing sweep report")?;
    print!("{tsv}");
    let f1: Vec<f64> = rows.iter().map(|(_, r)| r.mean.f1).collect();
    let spread = f1.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - f1.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(vec![stat("axis", axis), stat("rows", rows.len()), stat("f1_spread", format!("{spread:.6}"))])
}
