use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::Instance;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token ↔ id map shared by posts, conversations, and hashtags.
///
/// Ids `0..4` are the reserved specials; ordinary tokens follow in
/// descending frequency order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent tokens; ties break lexicographically.
    pub fn build(instances: &[Instance], max_size: usize) -> Result<Self> {
        if max_size == 0 {
            return Err(Error::Contract("vocabulary max_size must be >= 1".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for inst in instances {
            let words = inst
                .post
                .iter()
                .chain(&inst.conversation)
                .chain(inst.hashtags.iter().flatten());
            for w in words {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::Contract("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(w, _)| !RESERVED.contains(w))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Ok(Self::from_tokens(ranked.into_iter().map(|(w, _)| w.to_string())))
    }

    fn from_tokens(words: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or [`UNK`] when out of vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    /// Ordinary tokens in id order (ids `4..`).
    pub fn words(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    /// One token per line; line `n` (0-based) holds id `n + 4`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for w in self.words() {
            text.push_str(w);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words: Vec<String> = text.lines().map(str::to_string).collect();
        let mut seen = std::collections::HashSet::new();
        for (n, w) in words.iter().enumerate() {
            if w.is_empty() || RESERVED.contains(&w.as_str()) || !seen.insert(w) {
                return Err(Error::Contract(format!(
                    "{}:{}: invalid or duplicate vocabulary entry {w:?}",
                    path.display(),
                    n + 1
                )));
            }
        }
        Ok(Self::from_tokens(words))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(post: &str) -> Instance {
        Instance {
            post: post.split_whitespace().map(str::to_string).collect(),
            conversation: vec![],
            hashtags: vec![],
        }
    }

    #[test]
    fn frequency_order() {
        let v = Vocabulary::build(&[inst("a a b")], 1).unwrap();
        assert_eq!(v.words(), &["a".to_string()]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn lexicographic_tie_break() {
        let v = Vocabulary::build(&[inst("b a")], 5).unwrap();
        assert_eq!(v.words(), &["a".to_string(), "b".to_string()]);
        assert_eq!(v.id("a"), 4);
    }

    #[test]
    fn empty_corpus_and_zero_size_rejected() {
        assert!(Vocabulary::build(&[], 5).is_err());
        assert!(Vocabulary::build(&[inst("a")], 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::build(&[inst("x y y z z z")], 10).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "z\ny\nx\n");
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }
}
