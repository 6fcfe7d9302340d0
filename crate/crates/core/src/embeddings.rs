//! Frozen word-embedding lookup table read from word2vec text files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::fnv1a;
use crate::text::PAD_TOKEN;

/// Half-width of the uniform range used for out-of-vocabulary vectors.
pub const OOV_SCALE: f64 = 0.25;

pub const DEFAULT_OOV_SEED: u64 = 0x5eed;

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    seed: u64,
}

/// Outcome of reading an embeddings file.
#[derive(Debug)]
pub struct Loaded {
    pub table: EmbeddingTable,
    pub skipped: usize,
}

impl EmbeddingTable {
    /// A table with no stored words; every lookup falls back to the
    /// deterministic generator.
    pub fn empty(dim: usize, seed: u64) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(&word.to_lowercase())
    }

    /// Stores a vector under the lowercased key. The first insertion wins.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Input(format!(
                "vector for {word:?} has {} entries, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite entry in vector for {word:?}")));
        }
        self.vectors.entry(word.to_lowercase()).or_insert(vector);
        Ok(())
    }

    /// Parses word2vec text format with an optional `count dim` header.
    /// Lines of the wrong arity or with unparsable/non-finite values are
    /// skipped and counted.
    pub fn parse<R: BufRead>(reader: R, expected_dim: usize, seed: u64, path: &Path) -> Result<Loaded> {
        let mut table = EmbeddingTable::empty(expected_dim, seed);
        let mut skipped = 0usize;
        let mut data_lines = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                let dim: usize = fields[1].parse().unwrap_or(0);
                if dim != expected_dim {
                    return Err(Error::format(
                        path,
                        1,
                        format!("header declares dimension {dim}, expected {expected_dim}"),
                    ));
                }
                continue;
            }
            data_lines += 1;
            if fields.len() != expected_dim + 1 {
                skipped += 1;
                continue;
            }
            let parsed: Option<Vec<f64>> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            match parsed {
                Some(v) => table.vectors.entry(fields[0].to_lowercase()).or_insert(v),
                None => {
                    skipped += 1;
                    continue;
                }
            };
        }
        if data_lines > 0 && table.vectors.is_empty() {
            return Err(Error::format(
                path,
                0,
                format!("no line has dimension {expected_dim}"),
            ));
        }
        if skipped > 0 {
            log::warn!("{}: skipped {skipped} malformed embedding lines", path.display());
        }
        Ok(Loaded { table, skipped })
    }

    pub fn load(path: &Path, expected_dim: usize, seed: u64) -> Result<Loaded> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file), expected_dim, seed, path)
    }

    /// Known words return their stored vector, the padding token returns
    /// zeros, anything else a uniform vector in `[-0.25, 0.25]` seeded by
    /// `(seed, word)`.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        if word == PAD_TOKEN {
            return vec![0.0; self.dim];
        }
        let key = word.to_lowercase();
        if let Some(v) = self.vectors.get(&key) {
            return v.clone();
        }
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(key.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&bytes));
        (0..self.dim)
            .map(|_| rng.gen_range(-OOV_SCALE..=OOV_SCALE))
            .collect()
    }
}

/// Writes a table's stored vectors in word2vec text format with a header.
pub fn write_text<W: std::io::Write>(mut w: W, entries: &[(String, Vec<f64>)]) -> std::io::Result<()> {
    let dim = entries.first().map_or(0, |e| e.1.len());
    writeln!(w, "{} {}", entries.len(), dim)?;
    for (word, v) in entries {
        write!(w, "{word}")?;
        for x in v {
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, dim: usize) -> Result<Loaded> {
        EmbeddingTable::parse(text.as_bytes(), dim, 1, Path::new("emb.txt"))
    }

    #[test]
    fn parses_header_and_rows() {
        let l = parse("2 3\nfoo 1 2 3\nBar 0.5 -0.5 0\n", 3).unwrap();
        assert_eq!(l.table.len(), 2);
        assert_eq!(l.table.dim(), 3);
        assert_eq!(l.skipped, 0);
        assert_eq!(l.table.lookup("foo"), [1.0, 2.0, 3.0]);
        assert_eq!(l.table.lookup("BAR"), [0.5, -0.5, 0.0]);
    }

    #[test]
    fn skips_wrong_arity() {
        // line-by-line oracle: count rows whose field count != dim + 1
        let mut text = String::new();
        for i in 0..10 {
            if i == 4 {
                text.push_str("bad 1 2\n");
            } else {
                text.push_str(&format!("w{i} {i} 0 1\n"));
            }
        }
        let expected_skips = text
            .lines()
            .filter(|l| l.split_whitespace().count() != 4)
            .count();
        let l = parse(&text, 3).unwrap();
        assert_eq!(expected_skips, 1);
        assert_eq!(l.skipped, expected_skips);
        assert_eq!(l.table.len(), 9);
    }

    #[test]
    fn rejects_wholly_mismatched_file() {
        assert!(matches!(parse("a 1 2\nb 3 4\n", 3), Err(Error::Format { .. })));
        assert!(matches!(parse("2 2\na 1 2\n", 3), Err(Error::Format { .. })));
        assert!(parse("a 1 nan\nb 1 2 3\n", 3).unwrap().skipped == 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = EmbeddingTable::load(Path::new("/nonexistent/emb.txt"), 3, 0).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn padding_is_zero() {
        let t = EmbeddingTable::empty(400, 3);
        let v = t.lookup(PAD_TOKEN);
        assert_eq!(v.len(), 400);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn oov_is_deterministic_and_bounded() {
        let t = EmbeddingTable::empty(50, 11);
        let a = t.lookup("zzyzx");
        let b = t.lookup("zzyzx");
        assert_eq!(a, b);
        assert_eq!(a, t.lookup("ZZYZX"));
        assert_ne!(a, t.lookup("other"));
        assert_ne!(a, EmbeddingTable::empty(50, 12).lookup("zzyzx"));
        assert!(a.iter().all(|x| x.abs() <= OOV_SCALE && x.is_finite()));
    }

    #[test]
    fn text_writer_round_trips() {
        let entries = vec![("a".to_string(), vec![0.1, -2.5]), ("b".to_string(), vec![1e-7, 3.0])];
        let mut buf = Vec::new();
        write_text(&mut buf, &entries).unwrap();
        let l = EmbeddingTable::parse(buf.as_slice(), 2, 0, Path::new("x")).unwrap();
        assert_eq!(l.table.lookup("a"), entries[0].1);
        assert_eq!(l.table.lookup("b"), entries[1].1);
    }
}
