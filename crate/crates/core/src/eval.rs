//! Lenient span-level precision, recall and F1 over ADR spans, plus the
//! k-fold cross-validation harness.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::Featurizer;
use crate::network::{adr_head_forward, bilstm_forward, decode_greedy, ModelParams};
use crate::rng::substream;
use crate::text::{decode_spans, LabeledSequence, Span, SpanKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MatchMode {
    /// Any shared token position counts as a match.
    #[default]
    Approximate,
    /// Boundaries must agree exactly.
    Exact,
}

impl MatchMode {
    fn matches(self, a: &Span, b: &Span) -> bool {
        match self {
            MatchMode::Approximate => a.overlaps(b),
            MatchMode::Exact => a.start == b.start && a.end == b.end,
        }
    }
}

/// Raw span counts. Add them up across sequences for micro averages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub matched_predicted: usize,
    pub predicted: usize,
    pub matched_gold: usize,
    pub gold: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.matched_predicted += other.matched_predicted;
        self.predicted += other.predicted;
        self.matched_gold += other.matched_gold;
        self.gold += other.gold;
    }

    /// Nothing predicted and nothing to find.
    pub fn is_degenerate(&self) -> bool {
        self.predicted == 0 && self.gold == 0
    }

    pub fn prf(&self) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Prf::new(
            ratio(self.matched_predicted, self.predicted),
            ratio(self.matched_gold, self.gold),
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Counts matches between predicted and gold spans of one sequence. Spans of
/// any kind other than ADR are ignored.
pub fn match_counts(predicted: &[Span], gold: &[Span], mode: MatchMode) -> Counts {
    let pred: Vec<&Span> = predicted.iter().filter(|s| s.kind == SpanKind::Adr).collect();
    let gold: Vec<&Span> = gold.iter().filter(|s| s.kind == SpanKind::Adr).collect();
    Counts {
        matched_predicted: pred.iter().filter(|p| gold.iter().any(|g| mode.matches(p, g))).count(),
        predicted: pred.len(),
        matched_gold: gold.iter().filter(|g| pred.iter().any(|p| mode.matches(p, g))).count(),
        gold: gold.len(),
    }
}

pub fn approx_match_prf(predicted: &[Span], gold: &[Span]) -> (Prf, Counts) {
    let c = match_counts(predicted, gold, MatchMode::Approximate);
    (c.prf(), c)
}

/// Greedy-decoded ADR spans for one sequence.
pub fn predict_spans(params: &ModelParams, featurizer: &Featurizer, seq: &LabeledSequence) -> Result<Vec<Span>> {
    let n = seq.original_length();
    let enc = featurizer.encode_tokens(&seq.tokens()[..n])?;
    let trace = bilstm_forward(params, &enc.inputs, &enc.mask)?;
    let tags = decode_greedy(&adr_head_forward(params, &trace), n);
    Ok(decode_spans(&tags, n))
}

/// Micro-averaged counts over a test corpus.
pub fn evaluate_model(
    params: &ModelParams,
    featurizer: &Featurizer,
    test: &[LabeledSequence],
    mode: MatchMode,
) -> Result<Counts> {
    let per_seq: Vec<Counts> = test
        .par_iter()
        .map(|seq| Ok(match_counts(&predict_spans(params, featurizer, seq)?, &seq.spans(), mode)))
        .collect::<Result<_>>()?;
    let mut total = Counts::default();
    for c in per_seq {
        total.add(c);
    }
    Ok(total)
}

/// Fold index for each of `n` items: a seeded shuffle dealt round-robin, so
/// fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "folds"));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_size: usize,
    pub counts: Counts,
    pub prf: Prf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Means across folds.
    pub mean: Prf,
    /// Population standard deviations across folds.
    pub std: Prf,
    /// Counts summed over folds.
    pub counts: Counts,
    pub per_fold: Vec<FoldResult>,
    /// Some fold had neither predicted nor gold spans.
    pub degenerate: bool,
    pub mode: MatchMode,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_folds(per_fold: Vec<FoldResult>, mode: MatchMode) -> Self {
        let col = |f: fn(&Prf) -> f64| per_fold.iter().map(|r| f(&r.prf)).collect::<Vec<_>>();
        let (mp, sp) = mean_std(&col(|p| p.precision));
        let (mr, sr) = mean_std(&col(|p| p.recall));
        let (mf, sf) = mean_std(&col(|p| p.f1));
        let mut counts = Counts::default();
        for r in &per_fold {
            counts.add(r.counts);
        }
        EvalReport {
            mean: Prf {
                precision: mp,
                recall: mr,
                f1: mf,
            },
            std: Prf {
                precision: sp,
                recall: sr,
                f1: sf,
            },
            counts,
            degenerate: per_fold.iter().any(|r| r.counts.is_degenerate()),
            per_fold,
            mode,
        }
    }

    /// Single-split report.
    pub fn single(counts: Counts, mode: MatchMode) -> Self {
        EvalReport::from_folds(
            vec![FoldResult {
                fold: 0,
                test_size: 0,
                counts,
                prf: counts.prf(),
            }],
            mode,
        )
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fold  size  precision  recall  f1      pred  gold  matched");
        for r in &self.per_fold {
            let _ = writeln!(
                s,
                "{:<5} {:<5} {:<10.4} {:<7.4} {:<7.4} {:<5} {:<5} {}",
                r.fold, r.test_size, r.prf.precision, r.prf.recall, r.prf.f1, r.counts.predicted, r.counts.gold,
                r.counts.matched_predicted
            );
        }
        let _ = writeln!(
            s,
            "mean        {:.4}±{:.4} {:.4}±{:.4} {:.4}±{:.4}",
            self.mean.precision, self.std.precision, self.mean.recall, self.std.recall, self.mean.f1, self.std.f1
        );
        if self.degenerate {
            let _ = writeln!(s, "note: at least one fold had no predicted and no gold spans; its scores are 0");
        }
        s
    }

    /// Tab-separated rows: metric, mean, std, then one value per fold.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tmean\tstd");
        for r in &self.per_fold {
            let _ = write!(s, "\tfold{}", r.fold);
        }
        s.push('\n');
        type Row = (&'static str, f64, f64, fn(&Prf) -> f64);
        let rows: [Row; 3] = [
            ("precision", self.mean.precision, self.std.precision, |p| p.precision),
            ("recall", self.mean.recall, self.std.recall, |p| p.recall),
            ("f1", self.mean.f1, self.std.f1, |p| p.f1),
        ];
        for (name, mean, std, get) in rows {
            let _ = write!(s, "{name}\t{mean:.17e}\t{std:.17e}");
            for r in &self.per_fold {
                let _ = write!(s, "\t{:.17e}", get(&r.prf));
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "# counts predicted={} gold={} matched_predicted={} matched_gold={} degenerate={}",
            self.counts.predicted, self.counts.gold, self.counts.matched_predicted, self.counts.matched_gold,
            self.degenerate
        );
        s
    }
}

/// Trains on all but one fold and evaluates on the held-out fold, for each
/// of `k` folds. `train_fn` receives the fold index and its training split.
pub fn cross_validate<F>(
    corpus: &[LabeledSequence],
    k: usize,
    seed: u64,
    featurizer: &Featurizer,
    mode: MatchMode,
    train_fn: F,
) -> Result<EvalReport>
where
    F: Fn(usize, &[LabeledSequence]) -> Result<ModelParams> + Sync,
{
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
    }
    if corpus.len() < k {
        return Err(Error::Config(format!(
            "cannot split {} sequences into {k} folds",
            corpus.len()
        )));
    }
    let assignment = fold_assignment(corpus.len(), k, seed);
    let per_fold = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<_>, Vec<_>) = corpus
                .iter()
                .zip(&assignment)
                .partition(|(_, &f)| f == fold);
            let train: Vec<LabeledSequence> = train.into_iter().map(|(s, _)| s.clone()).collect();
            let test: Vec<LabeledSequence> = test.into_iter().map(|(s, _)| s.clone()).collect();
            let params = train_fn(fold, &train)?;
            let counts = evaluate_model(&params, featurizer, &test, mode)?;
            log::info!("fold {fold}: f1 {:.4}", counts.prf().f1);
            Ok(FoldResult {
                fold,
                test_size: test.len(),
                counts,
                prf: counts.prf(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_folds(per_fold, mode))
}
