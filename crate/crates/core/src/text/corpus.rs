//! Corpus file formats.
//!
//! * Labeled (ADR): one `surface<TAB>tag` per line, blank line between
//!   sequences, tags drawn from `I-ADR`, `I-Other`, `O`.
//! * Unlabeled: one raw tweet per line.
//! * ADE: one `label<TAB>text` per line, label `0` or `1`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{normalize_token, normalize_tweet, tokenize, AdeExample, LabeledSequence, Tag, Token};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn parse_labeled<R: BufRead>(reader: R, path: &Path) -> Result<Vec<LabeledSequence>> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let flush = |tokens: &mut Vec<Token>, tags: &mut Vec<Tag>, out: &mut Vec<LabeledSequence>| {
        if !tokens.is_empty() {
            let seq = LabeledSequence::new(std::mem::take(tokens), std::mem::take(tags))?;
            out.push(seq);
        }
        Ok::<_, Error>(())
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, &mut out)?;
            continue;
        }
        let (surface, tag) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, lineno + 1, "expected surface<TAB>tag"))?;
        let tag: Tag = tag
            .trim()
            .parse()
            .map_err(|e: String| Error::format(path, lineno + 1, e))?;
        if tag == Tag::Pad {
            return Err(Error::format(path, lineno + 1, "PAD is not a corpus tag"));
        }
        if surface.is_empty() {
            return Err(Error::format(path, lineno + 1, "empty token"));
        }
        tokens.push(Token::new(surface, tokens.len()));
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags, &mut out)?;
    Ok(out)
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledSequence>> {
    parse_labeled(open(path)?, path)
}

pub fn write_labeled<W: Write>(mut w: W, seqs: &[LabeledSequence]) -> std::io::Result<()> {
    for (i, seq) in seqs.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        let n = seq.original_length();
        for (tok, tag) in seq.tokens()[..n].iter().zip(&seq.tags()[..n]) {
            writeln!(w, "{}\t{}", tok.surface(), tag)?;
        }
    }
    w.flush()
}

pub fn save_labeled(path: &Path, seqs: &[LabeledSequence]) -> Result<()> {
    write_labeled(create(path)?, seqs).map_err(|e| Error::io(path, e))
}

/// Raw lines of an unlabeled corpus, in file order.
pub fn read_unlabeled(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .map(|l| l.map_err(|e| Error::io(path, e)))
        .collect()
}

pub fn save_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<()> {
    let mut w = create(path)?;
    for l in lines {
        writeln!(w, "{}", l.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Normalizes and tokenizes raw tweets, dropping ones that end up empty.
pub fn tokenize_pool<S: AsRef<str>>(raw: &[S]) -> Vec<Vec<Token>> {
    raw.iter()
        .map(|r| tokenize(&normalize_tweet(r.as_ref())))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Applies token normalization to an annotated sequence, dropping tokens that
/// normalize to nothing together with their tags.
pub fn normalize_labeled(seq: &LabeledSequence) -> Option<LabeledSequence> {
    let n = seq.original_length();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for (tok, &tag) in seq.tokens()[..n].iter().zip(&seq.tags()[..n]) {
        if let Some(s) = normalize_token(tok.surface()) {
            tokens.push(Token::new(s, tokens.len()));
            tags.push(tag);
        }
    }
    LabeledSequence::new(tokens, tags).ok()
}

pub fn parse_ade<R: BufRead>(reader: R, path: &Path) -> Result<Vec<AdeExample>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, lineno + 1, "expected label<TAB>text"))?;
        let label = match label.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::format(
                    path,
                    lineno + 1,
                    format!("ADE label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let tokens = tokenize(&normalize_tweet(text));
        if tokens.is_empty() {
            log::warn!("{}:{}: tweet empty after normalization", path.display(), lineno + 1);
            continue;
        }
        out.push(AdeExample::new(tokens, label)?);
    }
    Ok(out)
}

pub fn read_ade(path: &Path) -> Result<Vec<AdeExample>> {
    parse_ade(open(path)?, path)
}

pub fn write_ade<W: Write>(mut w: W, examples: &[AdeExample]) -> std::io::Result<()> {
    for ex in examples {
        writeln!(w, "{}\t{}", ex.label, ex.surfaces().join(" "))?;
    }
    w.flush()
}

pub fn save_ade(path: &Path, examples: &[AdeExample]) -> Result<()> {
    write_ade(create(path)?, examples).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "because\tO\nweight\tI-ADR\ngain\tI-ADR\n\n\nseroquel\tI-Other\nhelps\tO\n";

    #[test]
    fn parses_labeled_corpus() {
        let seqs = parse_labeled(SAMPLE.as_bytes(), Path::new("x")).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].tags(), [Tag::O, Tag::Adr, Tag::Adr]);
        assert_eq!(seqs[1].surfaces(), ["seroquel", "helps"]);

        let mut buf = Vec::new();
        write_labeled(&mut buf, &seqs).unwrap();
        let again = parse_labeled(buf.as_slice(), Path::new("x")).unwrap();
        assert_eq!(again, seqs);
    }

    #[test]
    fn labeled_errors_carry_line_numbers() {
        let err = parse_labeled("a\tO\nb O\n".as_bytes(), Path::new("c.tsv")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
        let err = parse_labeled("a\tB-ADR\n".as_bytes(), Path::new("c.tsv")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
        let err = parse_labeled("a\tPAD\n".as_bytes(), Path::new("c.tsv")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn parses_ade_corpus() {
        let text = "1\tweight gain from @doc http://x.y\n0\tfine today\n\n1\t:(\n";
        let ex = parse_ade(text.as_bytes(), Path::new("ade")).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].label, 1);
        assert_eq!(ex[0].surfaces(), ["weight", "gain", "from", "⟨USER⟩", "⟨LINKS⟩"]);
        assert!(parse_ade("2\tx\n".as_bytes(), Path::new("ade")).is_err());
    }

    #[test]
    fn normalizes_annotated_tokens() {
        let seq = LabeledSequence::new(
            crate::text::tokens_from(&["@bob", ":)", "headache", "http://x"]),
            vec![Tag::O, Tag::O, Tag::Adr, Tag::O],
        )
        .unwrap();
        let n = normalize_labeled(&seq).unwrap();
        assert_eq!(n.surfaces(), ["⟨USER⟩", "headache", "⟨LINKS⟩"]);
        assert_eq!(n.tags(), [Tag::O, Tag::Adr, Tag::O]);
    }
}
