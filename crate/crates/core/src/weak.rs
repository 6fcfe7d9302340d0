//! Self-training on unlabeled tweets and automatic generation of weakly
//! labeled tagging and sentence-classification data.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{Example, Featurizer};
use crate::network::{adr_head_forward, bilstm_forward, decode_greedy, ModelParams};
use crate::rng::substream;
use crate::text::{AdeExample, LabeledSequence, Tag, Token};
use crate::trainer::{fit_tagger, Hyperparams, Trainer};

/// How the product of ADR probabilities is normalized by the ADR word count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScoreMode {
    /// k-th root of the product (geometric mean).
    #[default]
    Geometric,
    /// Product divided by k.
    Division,
}

impl ScoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Geometric => "geometric",
            ScoreMode::Division => "division",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "geometric" => Some(ScoreMode::Geometric),
            "division" => Some(ScoreMode::Division),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSample {
    pub sequence: LabeledSequence,
    pub score: f64,
    pub adr_token_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTrainConfig {
    pub tau: f64,
    pub max_iterations: usize,
    pub batch_size: usize,
    /// Epochs of fine-tuning on the current training set per iteration.
    pub finetune_epochs: usize,
    pub score_mode: ScoreMode,
    /// Keep a copy of the parameters used for each iteration's admissions.
    pub keep_snapshots: bool,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            tau: 0.5,
            max_iterations: 5,
            batch_size: 64,
            finetune_epochs: 3,
            score_mode: ScoreMode::Geometric,
            keep_snapshots: false,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.max_iterations == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_iterations and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Confidence of a decoded sequence from the I-ADR probabilities of the
/// tokens tagged I-ADR. `None` when there are no such tokens.
pub fn confidence(adr_probs: &[f64], mode: ScoreMode) -> Option<f64> {
    if adr_probs.is_empty() {
        return None;
    }
    let k = adr_probs.len() as f64;
    Some(match mode {
        ScoreMode::Geometric => (adr_probs.iter().map(|p| p.ln()).sum::<f64>() / k).exp(),
        ScoreMode::Division => adr_probs.iter().product::<f64>() / k,
    })
}

/// Greedy-decodes `dists` and scores the result. Returns the decoded tags and
/// the score, or `None` if no token is tagged I-ADR.
pub fn score_distributions(
    dists: &[Vec<f64>],
    original_length: usize,
    mode: ScoreMode,
) -> Option<(Vec<Tag>, f64, usize)> {
    let tags = decode_greedy(dists, original_length);
    let probs: Vec<f64> = tags
        .iter()
        .zip(dists)
        .filter(|(t, _)| **t == Tag::Adr)
        .map(|(_, d)| d[Tag::Adr.index()])
        .collect();
    let k = probs.len();
    confidence(&probs, mode).map(|s| (tags, s, k))
}

/// Scores one tweet with the current tagger.
pub fn score_sample(
    params: &ModelParams,
    featurizer: &Featurizer,
    tokens: &[Token],
    mode: ScoreMode,
) -> Result<Option<ScoredSample>> {
    let enc = featurizer.encode_tokens(tokens)?;
    let trace = bilstm_forward(params, &enc.inputs, &enc.mask)?;
    let dists = adr_head_forward(params, &trace);
    Ok(score_distributions(&dists, enc.original_length, mode).map(|(tags, score, k)| ScoredSample {
        sequence: LabeledSequence::new(tokens.to_vec(), tags).expect("decoded tags match tokens"),
        score,
        adr_token_count: k,
    }))
}

fn score_all(
    params: &ModelParams,
    featurizer: &Featurizer,
    pool: &[Vec<Token>],
    mode: ScoreMode,
) -> Result<Vec<Option<ScoredSample>>> {
    pool.par_iter()
        .map(|t| score_sample(params, featurizer, t, mode))
        .collect()
}

#[derive(Clone, Debug)]
pub struct Admission {
    /// Index into the original pool.
    pub pool_index: usize,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct IterationStats {
    pub iteration: usize,
    pub train_size: usize,
    pub pool_before: usize,
    pub admissions: Vec<Admission>,
    /// Parameters the admissions were scored with (when requested).
    pub snapshot: Option<ModelParams>,
}

#[derive(Clone, Debug)]
pub struct SelfTrainOutcome {
    pub params: ModelParams,
    pub corpus: Vec<LabeledSequence>,
    pub iterations: Vec<IterationStats>,
    pub pool_remaining: usize,
}

/// Iteratively fine-tunes the tagger on the growing training set and moves
/// confidently tagged pool members into it, until `max_iterations` is reached
/// or the pool runs dry.
pub fn self_train(
    initial: ModelParams,
    adr_data: &[LabeledSequence],
    pool: &[Vec<Token>],
    featurizer: &Featurizer,
    cfg: &SelfTrainConfig,
    hyper: &Hyperparams,
) -> Result<SelfTrainOutcome> {
    cfg.validate()?;
    hyper.validate()?;
    if adr_data.is_empty() {
        return Err(Error::Config("ADR corpus is empty".into()));
    }
    let mut corpus: Vec<LabeledSequence> = adr_data.to_vec();
    let mut examples: Vec<Example> = featurizer.adr_examples(&corpus)?;
    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let mut trainer = Trainer::new(initial, hyper);
    let mut iterations = Vec::new();

    for iteration in 1..=cfg.max_iterations {
        if remaining.is_empty() {
            break;
        }
        let stream = format!("shuffle-selftrain-{iteration}");
        fit_tagger(&mut trainer, &examples, cfg.batch_size, cfg.finetune_epochs, hyper.seed, &stream)?;

        let members: Vec<Vec<Token>> = remaining.iter().map(|&i| pool[i].clone()).collect();
        let scored = score_all(&trainer.params, featurizer, &members, cfg.score_mode)?;
        let mut admissions = Vec::new();
        let mut keep = Vec::with_capacity(remaining.len());
        let train_size = corpus.len();
        for (&idx, s) in remaining.iter().zip(scored) {
            match s {
                Some(s) if s.score >= cfg.tau => {
                    examples.push(featurizer.adr_example(&s.sequence)?);
                    corpus.push(s.sequence);
                    admissions.push(Admission {
                        pool_index: idx,
                        score: s.score,
                    });
                }
                _ => keep.push(idx),
            }
        }
        log::info!(
            "self-training iteration {iteration}: |T| {} -> {}, pool {} -> {}",
            train_size,
            corpus.len(),
            remaining.len(),
            keep.len()
        );
        iterations.push(IterationStats {
            iteration,
            train_size,
            pool_before: remaining.len(),
            admissions,
            snapshot: cfg.keep_snapshots.then(|| trainer.params.clone()),
        });
        remaining = keep;
    }
    Ok(SelfTrainOutcome {
        params: trainer.params,
        corpus,
        iterations,
        pool_remaining: remaining.len(),
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeakDatasets {
    /// Confident pool members with their decoded tags.
    pub adr: Vec<LabeledSequence>,
    /// Every pool member with a weak sentence label.
    pub ade: Vec<AdeExample>,
    /// Score per pool member (`None` when filtered).
    pub scores: Vec<Option<f64>>,
}

fn surface_key(tokens: &[Token]) -> String {
    tokens.iter().map(Token::surface).collect::<Vec<_>>().join(" ")
}

/// Fails if any member of `fresh` has the same normalized text as a member
/// of `prior`.
pub fn check_disjoint(fresh: &[Vec<Token>], prior: &[Vec<Token>]) -> Result<()> {
    let seen: HashSet<String> = prior.iter().map(|t| surface_key(t)).collect();
    if let Some((i, t)) = fresh.iter().enumerate().find(|(_, t)| seen.contains(&surface_key(t))) {
        return Err(Error::Input(format!(
            "fresh pool member {i} ({:?}) also appears in the self-training pool",
            surface_key(t)
        )));
    }
    Ok(())
}

/// Labels a fresh pool: confident members go to both datasets (sentence
/// label 1), everything else only to the sentence dataset with label 0.
pub fn generate_weak_datasets(
    params: &ModelParams,
    featurizer: &Featurizer,
    fresh_pool: &[Vec<Token>],
    tau: f64,
    mode: ScoreMode,
    prior_pool: Option<&[Vec<Token>]>,
) -> Result<WeakDatasets> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    if let Some(prior) = prior_pool {
        check_disjoint(fresh_pool, prior)?;
    }
    let scored = score_all(params, featurizer, fresh_pool, mode)?;
    let mut out = WeakDatasets::default();
    for (tokens, s) in fresh_pool.iter().zip(scored) {
        match s {
            Some(s) if s.score >= tau => {
                out.scores.push(Some(s.score));
                out.adr.push(s.sequence);
                out.ade.push(AdeExample::new(tokens.clone(), 1)?);
            }
            other => {
                out.scores.push(other.map(|s| s.score));
                out.ade.push(AdeExample::new(tokens.clone(), 0)?);
            }
        }
    }
    Ok(out)
}

/// One training example for the joint loss.
#[derive(Clone, Debug, PartialEq)]
pub struct JointExample {
    pub tokens: Vec<Token>,
    /// Tags, present whenever `ade == 1`.
    pub tags: Option<Vec<Tag>>,
    pub ade: usize,
}

impl JointExample {
    pub fn encode(&self, featurizer: &Featurizer) -> Result<Example> {
        match &self.tags {
            Some(tags) => {
                let seq = LabeledSequence::new(self.tokens.clone(), tags.clone())?;
                let mut ex = featurizer.adr_example(&seq)?;
                ex.ade = Some(self.ade);
                Ok(ex)
            }
            None => Ok(Example {
                input: featurizer.encode_tokens(&self.tokens)?,
                tags: None,
                ade: Some(self.ade),
            }),
        }
    }
}

/// Pairs weak sentence labels with weak tag sequences and, when
/// `include_gold` is set, adds the gold tagging data with sentence labels
/// derived from the presence of an I-ADR tag. Shuffled with the run seed.
pub fn build_joint_corpus(
    gold: &[LabeledSequence],
    weak: &WeakDatasets,
    include_gold: bool,
    seed: u64,
) -> Result<Vec<JointExample>> {
    let mut out = Vec::with_capacity(weak.ade.len() + gold.len());
    let mut tagged = weak.adr.iter();
    for ex in &weak.ade {
        if ex.label == 1 {
            let seq = tagged.next().ok_or_else(|| {
                Error::Data("weak ADE corpus has more positives than weak ADR sequences".into())
            })?;
            if seq.surfaces() != ex.surfaces() {
                return Err(Error::Data(format!(
                    "weak ADR sequence {:?} does not match positive ADE example {:?}",
                    seq.surfaces().join(" "),
                    ex.surfaces().join(" ")
                )));
            }
            out.push(JointExample {
                tokens: ex.tokens.clone(),
                tags: Some(seq.tags()[..seq.original_length()].to_vec()),
                ade: 1,
            });
        } else {
            out.push(JointExample {
                tokens: ex.tokens.clone(),
                tags: None,
                ade: 0,
            });
        }
    }
    if tagged.next().is_some() {
        return Err(Error::Data("weak ADR corpus has sequences without a positive ADE example".into()));
    }
    if include_gold {
        for seq in gold {
            let n = seq.original_length();
            out.push(JointExample {
                tokens: seq.tokens()[..n].to_vec(),
                tags: Some(seq.tags()[..n].to_vec()),
                ade: usize::from(seq.has_adr()),
            });
        }
    }
    out.shuffle(&mut substream(seed, "joint"));
    Ok(out)
}
