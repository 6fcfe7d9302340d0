use std::collections::HashMap;

use super::normalize::{LINKS_TOKEN, USER_TOKEN};

pub const PAD_TOKEN: &str = "⟨PAD⟩";
pub const UNK_TOKEN: &str = "⟨UNK⟩";

/// Tokens that every vocabulary contains, in id order.
pub const RESERVED: [&str; 4] = [PAD_TOKEN, LINKS_TOKEN, USER_TOKEN, UNK_TOKEN];

/// Bijective word/id map with reserved ids for padding, links, mentions and
/// unknown words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const LINKS_ID: usize = 1;
    pub const USER_ID: usize = 2;
    pub const UNK_ID: usize = 3;

    fn reserved_only() -> Self {
        let words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let ids = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        Vocabulary { words, ids }
    }

    /// Builds a vocabulary from the given token lists. Reserved tokens are
    /// always present; the remaining `cap - RESERVED.len()` slots go to the
    /// most frequent corpus words, ties broken by first appearance.
    pub fn build<'a, I, S>(corpus: I, cap: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut vocab = Self::reserved_only();
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut order = 0usize;
        let corpus: Vec<&'a [S]> = corpus.into_iter().collect();
        for seq in &corpus {
            for word in seq.iter() {
                let word = word.as_ref();
                if vocab.ids.contains_key(word) {
                    continue;
                }
                let entry = counts.entry(word).or_insert_with(|| {
                    order += 1;
                    (0, order)
                });
                entry.0 += 1;
            }
        }
        let mut ranked: Vec<(&str, usize, usize)> =
            counts.into_iter().map(|(w, (c, o))| (w, c, o)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let room = cap.saturating_sub(RESERVED.len());
        for (word, _, _) in ranked.into_iter().take(room) {
            vocab.ids.insert(word.to_string(), vocab.words.len());
            vocab.words.push(word.to_string());
        }
        vocab
    }

    /// Rebuilds a vocabulary from its id-ordered word list.
    pub fn from_words(words: Vec<String>) -> Option<Self> {
        if words.len() < RESERVED.len() || words.iter().zip(RESERVED).any(|(w, r)| w != r) {
            return None;
        }
        let mut ids = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if ids.insert(w.clone(), i).is_some() {
                return None;
            }
        }
        Some(Vocabulary { words, ids })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Id of `word`, falling back to the unknown-word id.
    pub fn id(&self, word: &str) -> usize {
        self.ids.get(word).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}
