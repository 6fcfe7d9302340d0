//! Tokens, IO tags, spans and the conversions between raw tweets and padded
//! training sequences.

pub mod corpus;
mod normalize;
mod vocab;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use normalize::{normalize_token, normalize_tweet, tokenize, LINKS_TOKEN, USER_TOKEN};
pub use vocab::{Vocabulary, PAD_TOKEN, RESERVED, UNK_TOKEN};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    surface: String,
    index: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, index: usize) -> Self {
        Token {
            surface: surface.into(),
            index,
        }
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// Builds positionally indexed tokens from surfaces.
pub fn tokens_from<S: AsRef<str>>(surfaces: &[S]) -> Vec<Token> {
    surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| Token::new(s.as_ref(), i))
        .collect()
}

/// IO tag set. The discriminant is the output unit index of the tagging head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Adr = 0,
    Other = 1,
    O = 2,
    Pad = 3,
}

impl Tag {
    pub const COUNT: usize = 4;
    pub const ALL: [Tag; Tag::COUNT] = [Tag::Adr, Tag::Other, Tag::O, Tag::Pad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Adr => "I-ADR",
            Tag::Other => "I-Other",
            Tag::O => "O",
            Tag::Pad => "PAD",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Tag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tag {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpanKind {
    Adr,
    Other,
}

impl SpanKind {
    pub fn tag(self) -> Tag {
        match self {
            SpanKind::Adr => Tag::Adr,
            SpanKind::Other => Tag::Other,
        }
    }
}

/// Inclusive token range carrying one entity kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: SpanKind,
}

impl Span {
    pub fn new(start: usize, end: usize, kind: SpanKind) -> Self {
        Span { start, end, kind }
    }

    pub fn adr(start: usize, end: usize) -> Self {
        Span::new(start, end, SpanKind::Adr)
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Tokens with per-token tags. Positions at or past `original_length` are
/// padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSequence {
    tokens: Vec<Token>,
    tags: Vec<Tag>,
    original_length: usize,
}

impl LabeledSequence {
    /// An unpadded sequence. Tags may not contain `PAD`.
    pub fn new(tokens: Vec<Token>, tags: Vec<Tag>) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::Annotation(format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        if tokens.is_empty() {
            return Err(Error::Annotation("empty sequence".into()));
        }
        if tags.contains(&Tag::Pad) {
            return Err(Error::Annotation("PAD tag inside sequence".into()));
        }
        let original_length = tokens.len();
        Ok(LabeledSequence {
            tokens,
            tags,
            original_length,
        })
    }

    pub fn from_spans(tokens: Vec<Token>, spans: &[Span]) -> Result<Self> {
        let tags = encode_tags(&tokens, spans)?;
        Self::new(tokens, tags)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Surfaces of the unpadded prefix.
    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens[..self.original_length]
            .iter()
            .map(Token::surface)
            .collect()
    }

    pub fn spans(&self) -> Vec<Span> {
        decode_spans(&self.tags, self.original_length)
    }

    pub fn has_adr(&self) -> bool {
        self.tags[..self.original_length].contains(&Tag::Adr)
    }

    /// Extends the sequence to length `n` with padding tokens and `PAD` tags.
    pub fn padded(&self, n: usize) -> Result<Self> {
        if self.original_length > n {
            return Err(Error::Length {
                len: self.original_length,
                max: n,
            });
        }
        let mut tokens = self.tokens[..self.original_length].to_vec();
        let mut tags = self.tags[..self.original_length].to_vec();
        for i in self.original_length..n {
            tokens.push(Token::new(PAD_TOKEN, i));
            tags.push(Tag::Pad);
        }
        Ok(LabeledSequence {
            tokens,
            tags,
            original_length: self.original_length,
        })
    }
}

/// A token sequence with a single adverse-event label (1 = reports an ADE).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdeExample {
    pub tokens: Vec<Token>,
    pub label: usize,
}

impl AdeExample {
    pub fn new(tokens: Vec<Token>, label: usize) -> Result<Self> {
        if label > 1 {
            return Err(Error::Data(format!("ADE label must be 0 or 1, got {label}")));
        }
        if tokens.is_empty() {
            return Err(Error::Data("empty ADE example".into()));
        }
        Ok(AdeExample { tokens, label })
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(Token::surface).collect()
    }
}

/// Tags tokens from span annotations: tokens inside a span take its kind's
/// tag, everything else is `O`.
pub fn encode_tags(tokens: &[Token], spans: &[Span]) -> Result<Vec<Tag>> {
    let mut tags = vec![Tag::O; tokens.len()];
    let mut covered = vec![false; tokens.len()];
    for span in spans {
        if span.start > span.end || span.end >= tokens.len() {
            return Err(Error::Annotation(format!(
                "span {}..={} out of bounds for {} tokens",
                span.start,
                span.end,
                tokens.len()
            )));
        }
        for i in span.start..=span.end {
            if covered[i] {
                return Err(Error::Annotation(format!(
                    "overlapping spans at token {i}"
                )));
            }
            covered[i] = true;
            tags[i] = span.kind.tag();
        }
    }
    Ok(tags)
}

/// Maximal runs of identical `I-*` tags within `original_length` become spans.
///
/// IO encoding cannot separate two adjacent spans of the same kind; they come
/// back as one.
pub fn decode_spans(tags: &[Tag], original_length: usize) -> Vec<Span> {
    let end = original_length.min(tags.len());
    let mut spans = Vec::new();
    let mut i = 0;
    while i < end {
        let kind = match tags[i] {
            Tag::Adr => SpanKind::Adr,
            Tag::Other => SpanKind::Other,
            Tag::O | Tag::Pad => {
                i += 1;
                continue;
            }
        };
        let start = i;
        while i + 1 < end && tags[i + 1] == tags[start] {
            i += 1;
        }
        spans.push(Span::new(start, i, kind));
        i += 1;
    }
    spans
}

/// Id and tag matrices for a batch padded to a common length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedBatch {
    pub ids: Vec<Vec<usize>>,
    pub tags: Vec<Vec<Tag>>,
    pub lengths: Vec<usize>,
    pub width: usize,
}

pub fn pad_batch(
    sequences: &[LabeledSequence],
    n: usize,
    vocab: &Vocabulary,
) -> Result<PaddedBatch> {
    let mut batch = PaddedBatch {
        ids: Vec::with_capacity(sequences.len()),
        tags: Vec::with_capacity(sequences.len()),
        lengths: Vec::with_capacity(sequences.len()),
        width: n,
    };
    for seq in sequences {
        let padded = seq.padded(n)?;
        batch.ids.push(
            padded
                .tokens
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if i < padded.original_length {
                        vocab.id(t.surface())
                    } else {
                        Vocabulary::PAD_ID
                    }
                })
                .collect(),
        );
        batch.tags.push(padded.tags);
        batch.lengths.push(padded.original_length);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<Token> {
        tokenize(s)
    }

    /// Independent run-length scan: walks the tags once, closing a run whenever
    /// the tag changes.
    fn run_length_oracle(tags: &[Tag], len: usize) -> Vec<Span> {
        let mut out = Vec::new();
        let mut open: Option<(usize, Tag)> = None;
        for (i, &t) in tags.iter().take(len).chain(std::iter::once(&Tag::O)).enumerate() {
            if let Some((s, k)) = open {
                if k != t {
                    let kind = if k == Tag::Adr { SpanKind::Adr } else { SpanKind::Other };
                    out.push(Span::new(s, i - 1, kind));
                    open = None;
                }
            }
            if open.is_none() && matches!(t, Tag::Adr | Tag::Other) {
                open = Some((i, t));
            }
        }
        out
    }

    #[test]
    fn tag_set_has_four_labels() {
        assert_eq!(Tag::COUNT, 4);
        for (i, t) in Tag::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.as_str().parse::<Tag>().unwrap(), *t);
        }
        assert_eq!(Tag::from_index(2), Some(Tag::O));
    }

    #[test]
    fn encodes_adr_span() {
        let t = toks("because weight gain is");
        let tags = encode_tags(&t, &[Span::adr(1, 2)]).unwrap();
        assert_eq!(tags, [Tag::O, Tag::Adr, Tag::Adr, Tag::O]);
    }

    #[test]
    fn encodes_edge_cases() {
        let t = toks("a b c d e");
        assert_eq!(encode_tags(&t, &[]).unwrap(), vec![Tag::O; 5]);
        assert_eq!(
            encode_tags(&t, &[Span::new(0, 4, SpanKind::Other)]).unwrap(),
            vec![Tag::Other; 5]
        );
    }

    #[test]
    fn rejects_bad_spans() {
        let t = toks("a b c");
        assert!(matches!(
            encode_tags(&t, &[Span::adr(1, 3)]),
            Err(Error::Annotation(_))
        ));
        assert!(matches!(
            encode_tags(&t, &[Span::adr(0, 1), Span::adr(1, 2)]),
            Err(Error::Annotation(_))
        ));
        assert!(matches!(
            encode_tags(&t, &[Span::adr(2, 1)]),
            Err(Error::Annotation(_))
        ));
    }

    #[test]
    fn decodes_runs() {
        use Tag::*;
        let cases: [&[Tag]; 3] = [&[O, Adr, Adr, O], &[O, O, O], &[Adr, O, Adr]];
        for tags in cases {
            assert_eq!(decode_spans(tags, tags.len()), run_length_oracle(tags, tags.len()));
        }
        assert_eq!(decode_spans(&[O, Adr, Adr, O], 4), vec![Span::adr(1, 2)]);
        assert!(decode_spans(&[O, O], 2).is_empty());
        assert_eq!(
            decode_spans(&[Adr, O, Adr], 3),
            vec![Span::adr(0, 0), Span::adr(2, 2)]
        );
        // different kinds back to back stay separate
        assert_eq!(
            decode_spans(&[Adr, Other, Other], 3),
            vec![Span::adr(0, 0), Span::new(1, 2, SpanKind::Other)]
        );
        // nothing past original_length
        assert_eq!(decode_spans(&[O, Adr, Adr, Pad], 2), vec![Span::adr(1, 1)]);
    }

    #[test]
    fn adjacent_same_kind_spans_merge() {
        let t = toks("a b c d");
        let tags = encode_tags(&t, &[Span::adr(0, 1), Span::adr(2, 3)]).unwrap();
        assert_eq!(decode_spans(&tags, 4), vec![Span::adr(0, 3)]);
    }

    #[test]
    fn padding() {
        let vocab = Vocabulary::build([["x", "y", "z"].as_slice()], 100);
        let seq = LabeledSequence::new(toks("x y z"), vec![Tag::O, Tag::Adr, Tag::O]).unwrap();
        let b = pad_batch(std::slice::from_ref(&seq), 5, &vocab).unwrap();
        assert_eq!(b.tags[0], [Tag::O, Tag::Adr, Tag::O, Tag::Pad, Tag::Pad]);
        assert_eq!(b.ids[0][3..], [Vocabulary::PAD_ID, Vocabulary::PAD_ID]);
        assert_eq!(b.lengths, [3]);

        let five = LabeledSequence::new(toks("a b c d e"), vec![Tag::O; 5]).unwrap();
        let b = pad_batch(&[five.clone(), five.clone()], 5, &vocab).unwrap();
        assert!(b.tags.iter().flatten().all(|&t| t != Tag::Pad));
        assert!(b.ids.iter().flatten().all(|&i| i == Vocabulary::UNK_ID));

        let six = LabeledSequence::new(toks("a b c d e f"), vec![Tag::O; 6]).unwrap();
        assert!(matches!(
            pad_batch(&[six], 5, &vocab),
            Err(Error::Length { len: 6, max: 5 })
        ));
    }

    #[test]
    fn sequence_invariants() {
        assert!(LabeledSequence::new(toks("a b"), vec![Tag::O]).is_err());
        assert!(LabeledSequence::new(vec![], vec![]).is_err());
        assert!(LabeledSequence::new(toks("a"), vec![Tag::Pad]).is_err());
        let s = LabeledSequence::new(toks("a b"), vec![Tag::Adr, Tag::O]).unwrap();
        let p = s.padded(4).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.original_length(), 2);
        assert_eq!(p.tokens()[3].surface(), PAD_TOKEN);
        assert_eq!(p.padded(2).unwrap(), s);
    }

    fn span_sets() -> impl Strategy<Value = (usize, Vec<Span>)> {
        // lengths of alternating gap/span segments; gaps >= 1 keep spans separated
        (1usize..30).prop_flat_map(|len| {
            (
                Just(len),
                proptest::collection::vec((1usize..4, 1usize..4, any::<bool>()), 0..8),
            )
                .prop_map(|(len, segs)| {
                    let mut spans = Vec::new();
                    let mut pos = 0usize;
                    let mut first = true;
                    for (gap, width, adr) in segs {
                        let start = pos + if first { gap - 1 } else { gap };
                        first = false;
                        let end = start + width - 1;
                        if end >= len {
                            break;
                        }
                        let kind = if adr { SpanKind::Adr } else { SpanKind::Other };
                        spans.push(Span::new(start, end, kind));
                        pos = end + 1;
                    }
                    (len, spans)
                })
        })
    }

    proptest! {
        #[test]
        fn encode_then_decode_recovers_separated_spans((len, spans) in span_sets()) {
            let tokens: Vec<Token> = (0..len).map(|i| Token::new(format!("w{i}"), i)).collect();
            let tags = encode_tags(&tokens, &spans).unwrap();
            prop_assert!(!tags.contains(&Tag::Pad));
            prop_assert_eq!(decode_spans(&tags, len), spans);
        }

        #[test]
        fn decode_matches_scan_oracle(tags in proptest::collection::vec(0usize..4, 0..25), cut in 0usize..30) {
            let tags: Vec<Tag> = tags.into_iter().map(|i| Tag::from_index(i).unwrap()).collect();
            let len = cut.min(tags.len());
            prop_assert_eq!(decode_spans(&tags, len), run_length_oracle(&tags, len));
        }

        #[test]
        fn padding_never_precedes_original_length(lens in proptest::collection::vec(1usize..10, 1..6), extra in 0usize..5) {
            let vocab = Vocabulary::build(std::iter::empty::<&[String]>(), 10);
            let n = lens.iter().copied().max().unwrap() + extra;
            let seqs: Vec<_> = lens.iter().map(|&l| {
                let tokens: Vec<Token> = (0..l).map(|i| Token::new("w", i)).collect();
                LabeledSequence::new(tokens, vec![Tag::O; l]).unwrap()
            }).collect();
            let b = pad_batch(&seqs, n, &vocab).unwrap();
            for (row, &l) in b.tags.iter().zip(&b.lengths) {
                prop_assert_eq!(row.len(), n);
                prop_assert!(row[..l].iter().all(|&t| t != Tag::Pad));
                prop_assert!(row[l..].iter().all(|&t| t == Tag::Pad));
            }
        }
    }
}
