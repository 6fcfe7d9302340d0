//! Seeded synthetic corpora: filler tokens with injected ADR phrases and
//! drug mentions, plus matching sentence labels and an unlabeled pool.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::text::{tokens_from, AdeExample, LabeledSequence, Span, SpanKind};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub filler_vocab: usize,
    /// Distinct single words that ADR phrases are built from.
    pub adr_lexicon: usize,
    pub other_lexicon: usize,
    pub max_phrase_len: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub adr_prob: f64,
    pub other_prob: f64,
    pub n_adr: usize,
    pub n_ade: usize,
    pub n_pool: usize,
    /// Weight of the shared per-class direction in synthetic embeddings; 0
    /// gives independent random vectors.
    pub cluster: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            filler_vocab: 300,
            adr_lexicon: 80,
            other_lexicon: 20,
            max_phrase_len: 2,
            min_len: 6,
            max_len: 14,
            adr_prob: 0.5,
            other_prob: 0.3,
            n_adr: 200,
            n_ade: 2000,
            n_pool: 500,
            cluster: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub adr: Vec<LabeledSequence>,
    pub ade: Vec<AdeExample>,
    pub pool: Vec<String>,
}

pub fn filler_word(i: usize) -> String {
    format!("tok{i}")
}

pub fn adr_word(i: usize) -> String {
    format!("sym{i}")
}

pub fn other_word(i: usize) -> String {
    format!("med{i}")
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("adr_prob", self.adr_prob), ("other_prob", self.other_prob), ("cluster", self.cluster)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.adr_prob > 0.0 && self.adr_lexicon == 0 {
            return Err(Error::Config("ADR injection requested with an empty ADR lexicon".into()));
        }
        if self.other_prob > 0.0 && self.other_lexicon == 0 {
            return Err(Error::Config("drug injection requested with an empty drug lexicon".into()));
        }
        if self.filler_vocab == 0 {
            return Err(Error::Config("filler vocabulary must be non-empty".into()));
        }
        if self.max_phrase_len == 0 {
            return Err(Error::Config("max_phrase_len must be positive".into()));
        }
        // two phrases plus separating fillers must fit
        if self.min_len == 0 || self.min_len > self.max_len || self.max_len < 2 * self.max_phrase_len + 1 {
            return Err(Error::Config(format!(
                "length range {}..={} cannot hold two phrases of up to {} tokens",
                self.min_len, self.max_len, self.max_phrase_len
            )));
        }
        Ok(())
    }

    /// Every word the generator can emit.
    pub fn all_words(&self) -> Vec<String> {
        (0..self.filler_vocab)
            .map(filler_word)
            .chain((0..self.adr_lexicon).map(adr_word))
            .chain((0..self.other_lexicon).map(other_word))
            .collect()
    }
}

fn sample_sequence(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> LabeledSequence {
    let mut entities: Vec<(SpanKind, Vec<String>)> = Vec::new();
    if rng.gen_bool(cfg.adr_prob) {
        let len = rng.gen_range(1..=cfg.max_phrase_len);
        let words = (0..len).map(|_| adr_word(rng.gen_range(0..cfg.adr_lexicon))).collect();
        entities.push((SpanKind::Adr, words));
    }
    if rng.gen_bool(cfg.other_prob) {
        let len = rng.gen_range(1..=cfg.max_phrase_len);
        let words = (0..len).map(|_| other_word(rng.gen_range(0..cfg.other_lexicon))).collect();
        entities.push((SpanKind::Other, words));
    }
    entities.shuffle(rng);
    let entity_tokens: usize = entities.iter().map(|e| e.1.len()).sum();
    let separators = entities.len().saturating_sub(1);
    let min_len = cfg.min_len.max(entity_tokens + separators);
    let total = rng.gen_range(min_len..=cfg.max_len.max(min_len));
    let fillers = total - entity_tokens;

    // gaps before, between and after entities; inner gaps hold at least one filler
    let mut gaps = vec![0usize; entities.len() + 1];
    for g in gaps.iter_mut().take(entities.len()).skip(1) {
        *g = 1;
    }
    for _ in 0..fillers - separators {
        let i = rng.gen_range(0..gaps.len());
        gaps[i] += 1;
    }

    let mut words = Vec::with_capacity(total);
    let mut spans = Vec::new();
    for (i, gap) in gaps.iter().enumerate() {
        for _ in 0..*gap {
            words.push(filler_word(rng.gen_range(0..cfg.filler_vocab)));
        }
        if let Some((kind, phrase)) = entities.get(i) {
            let start = words.len();
            words.extend(phrase.iter().cloned());
            spans.push(Span::new(start, words.len() - 1, *kind));
        }
    }
    LabeledSequence::from_spans(tokens_from(&words), &spans).expect("generated spans are valid")
}

/// Builds ADR sequences, ADE examples (label = ADR phrase present) and an
/// unlabeled pool, all drawn from the same distribution.
pub fn make_synthetic_corpus(cfg: &SynthConfig, seed: u64) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = substream(seed, "synth");
    let adr = (0..cfg.n_adr).map(|_| sample_sequence(cfg, &mut rng)).collect();
    let ade = (0..cfg.n_ade)
        .map(|_| {
            let s = sample_sequence(cfg, &mut rng);
            let label = usize::from(s.has_adr());
            AdeExample::new(s.tokens().to_vec(), label).expect("non-empty")
        })
        .collect();
    let pool = (0..cfg.n_pool)
        .map(|_| sample_sequence(cfg, &mut rng).surfaces().join(" "))
        .collect();
    Ok(SynthCorpus { adr, ade, pool })
}

/// Embedding rows for every synthetic word: a mix of a per-class direction
/// (filler, ADR, drug) and word-specific noise, uniform in [-0.25, 0.25].
pub fn synthetic_embeddings(cfg: &SynthConfig, dim: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = substream(seed, "synth-embeddings");
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-0.25..=0.25)).collect() };
    let centroids: Vec<Vec<f64>> = (0..3).map(|_| draw(&mut rng)).collect();
    let classes = [
        (0, (0..cfg.filler_vocab).map(filler_word).collect::<Vec<_>>()),
        (1, (0..cfg.adr_lexicon).map(adr_word).collect()),
        (2, (0..cfg.other_lexicon).map(other_word).collect()),
    ];
    let mut out = Vec::new();
    for (class, words) in classes {
        for w in words {
            let noise = draw(&mut rng);
            let v = noise
                .iter()
                .zip(&centroids[class])
                .map(|(n, c)| cfg.cluster * c + (1.0 - cfg.cluster) * n)
                .collect();
            out.push((w, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Tag;

    fn small(adr_prob: f64) -> SynthConfig {
        SynthConfig {
            adr_prob,
            n_adr: 50,
            n_ade: 60,
            n_pool: 20,
            ..Default::default()
        }
    }

    #[test]
    fn no_injection_means_no_entities() {
        let c = make_synthetic_corpus(&small(0.0), 1).unwrap();
        assert!(c.adr.iter().all(|s| !s.has_adr()));
        assert!(c.ade.iter().all(|e| e.label == 0));
    }

    #[test]
    fn full_injection_means_every_sequence_has_adr() {
        let c = make_synthetic_corpus(&small(1.0), 1).unwrap();
        assert!(c.adr.iter().all(|s| s.spans().iter().any(|sp| sp.kind == SpanKind::Adr)));
        assert!(c.ade.iter().all(|e| e.label == 1));
    }

    #[test]
    fn deterministic_by_seed() {
        let a = make_synthetic_corpus(&small(0.5), 9).unwrap();
        assert_eq!(a, make_synthetic_corpus(&small(0.5), 9).unwrap());
        assert_ne!(a, make_synthetic_corpus(&small(0.5), 10).unwrap());
    }

    #[test]
    fn degenerate_configs_rejected() {
        let cfg = SynthConfig {
            adr_lexicon: 0,
            ..small(0.3)
        };
        assert!(matches!(make_synthetic_corpus(&cfg, 0), Err(Error::Config(_))));
        let cfg = SynthConfig {
            max_len: 3,
            ..small(0.3)
        };
        assert!(make_synthetic_corpus(&cfg, 0).is_err());
    }

    #[test]
    fn lengths_and_tags_are_consistent() {
        let cfg = small(0.6);
        let c = make_synthetic_corpus(&cfg, 4).unwrap();
        for s in &c.adr {
            assert!((cfg.min_len..=cfg.max_len).contains(&s.len()));
            for (tok, tag) in s.tokens().iter().zip(s.tags()) {
                let expected = if tok.surface().starts_with("sym") {
                    Tag::Adr
                } else if tok.surface().starts_with("med") {
                    Tag::Other
                } else {
                    Tag::O
                };
                assert_eq!(*tag, expected);
            }
        }
        assert_eq!(c.pool.len(), 20);
    }
}
