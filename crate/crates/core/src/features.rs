//! Turns token sequences into padded embedding matrices.

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::text::{pad_batch, AdeExample, LabeledSequence, Tag, Token, Vocabulary};

/// Network input for one sequence padded to the run's length.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub inputs: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub original_length: usize,
}

/// An encoded sequence with whatever supervision it carries.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Encoded,
    /// Tags padded to the input length.
    pub tags: Option<Vec<Tag>>,
    pub ade: Option<usize>,
}

/// Vocabulary, embedding table and padded length shared by every sequence
/// of a run.
#[derive(Clone, Debug)]
pub struct Featurizer {
    vocab: Vocabulary,
    table: EmbeddingTable,
    pad_len: usize,
}

impl Featurizer {
    pub fn new(vocab: Vocabulary, table: EmbeddingTable, pad_len: usize) -> Self {
        Featurizer {
            vocab,
            table,
            pad_len,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn pad_len(&self) -> usize {
        self.pad_len
    }

    pub fn input_dim(&self) -> usize {
        self.table.dim()
    }

    fn embed_ids(&self, ids: &[usize], original_length: usize) -> Encoded {
        let inputs = ids
            .iter()
            .map(|&id| self.table.lookup(self.vocab.word(id).expect("id from this vocabulary")))
            .collect();
        Encoded {
            inputs,
            mask: (0..ids.len()).map(|t| t < original_length).collect(),
            original_length,
        }
    }

    pub fn encode_tokens(&self, tokens: &[Token]) -> Result<Encoded> {
        if tokens.is_empty() {
            return Err(Error::Input("cannot encode an empty sequence".into()));
        }
        if tokens.len() > self.pad_len {
            return Err(Error::Length {
                len: tokens.len(),
                max: self.pad_len,
            });
        }
        let mut ids: Vec<usize> = tokens.iter().map(|t| self.vocab.id(t.surface())).collect();
        ids.resize(self.pad_len, Vocabulary::PAD_ID);
        Ok(self.embed_ids(&ids, tokens.len()))
    }

    pub fn adr_example(&self, seq: &LabeledSequence) -> Result<Example> {
        let batch = pad_batch(std::slice::from_ref(seq), self.pad_len, &self.vocab)?;
        Ok(Example {
            input: self.embed_ids(&batch.ids[0], batch.lengths[0]),
            tags: batch.tags.into_iter().next(),
            ade: None,
        })
    }

    pub fn ade_example(&self, ex: &AdeExample) -> Result<Example> {
        Ok(Example {
            input: self.encode_tokens(&ex.tokens)?,
            tags: None,
            ade: Some(ex.label),
        })
    }

    pub fn adr_examples(&self, seqs: &[LabeledSequence]) -> Result<Vec<Example>> {
        seqs.iter().map(|s| self.adr_example(s)).collect()
    }

    pub fn ade_examples(&self, exs: &[AdeExample]) -> Result<Vec<Example>> {
        exs.iter().map(|e| self.ade_example(e)).collect()
    }
}

/// Longest sequence across several token-list collections.
pub fn max_length<'a>(lengths: impl IntoIterator<Item = usize> + 'a) -> usize {
    lengths.into_iter().max().unwrap_or(1).max(1)
}
