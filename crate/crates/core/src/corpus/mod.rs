//! Dataset ingestion, preprocessing, vocabulary, and training-example expansion.

mod synthetic;
mod vocab;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::component_rng;

pub use synthetic::{generate_synthetic, SignalLocation, SynthConfig};
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// Joins chronologically ordered conversation turns.
pub const TURN_SEP: &str = "<sep>";
pub const DEFAULT_MAX_CONV_LEN: usize = 120;

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub post: Vec<String>,
    #[serde(default)]
    pub conversation: Vec<Vec<String>>,
    #[serde(default)]
    pub hashtags: Vec<Vec<String>>,
}

/// A preprocessed (post, conversation, gold hashtags) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub post: Vec<String>,
    pub conversation: Vec<String>,
    pub hashtags: Vec<Vec<String>>,
}

/// One supervised pair: a single gold hashtag wrapped in BOS … EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub post_ids: Vec<usize>,
    pub conv_ids: Vec<usize>,
    pub target_ids: Vec<usize>,
}

fn is_url(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Replaces links, mentions, and numbers with placeholder tokens and
/// lowercases everything else.
pub fn normalize_tokens<S: AsRef<str>>(raw: &[S]) -> Vec<String> {
    raw.iter()
        .map(|t| {
            let t = t.as_ref();
            if is_url(t) {
                "URL".to_string()
            } else if t.len() > 1 && t.starts_with('@') {
                "MENTION".to_string()
            } else if !t.is_empty() && t.chars().all(|c| c.is_ascii_digit()) {
                "DIGIT".to_string()
            } else {
                t.to_lowercase()
            }
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Surface form of a hashtag: its words joined by single spaces.
pub fn surface(tag: &[String]) -> String {
    tag.join(" ")
}

/// Drops single-character hashtags; an empty result is an error.
pub fn filter_hashtags(tags: &[Vec<String>]) -> Result<Vec<Vec<String>>> {
    let kept: Vec<Vec<String>> = tags
        .iter()
        .filter(|tag| !tag.is_empty() && surface(tag).chars().count() > 1)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::Contract("no gold hashtag survives filtering".into()));
    }
    Ok(kept)
}

impl Instance {
    /// Applies token normalization, hashtag filtering, and turn joining.
    pub fn from_record(record: &RawRecord, max_conv_len: usize) -> Result<Instance> {
        let post = normalize_tokens(&record.post);
        let mut conversation = Vec::new();
        for turn in &record.conversation {
            let turn = normalize_tokens(turn);
            if turn.is_empty() {
                continue;
            }
            if !conversation.is_empty() {
                conversation.push(TURN_SEP.to_string());
            }
            conversation.extend(turn);
        }
        conversation.truncate(max_conv_len);
        if conversation.last().map(String::as_str) == Some(TURN_SEP) {
            conversation.pop();
        }
        if post.is_empty() || conversation.is_empty() {
            return Err(Error::Contract("post and conversation must be nonempty".into()));
        }

        // Hashtag words are only lowercased; digits in a tag are part of its surface form.
        let mut seen = BTreeSet::new();
        let lowered: Vec<Vec<String>> = record
            .hashtags
            .iter()
            .map(|tag| tag.iter().map(|w| w.to_lowercase()).filter(|w| !w.is_empty()).collect::<Vec<_>>())
            .filter(|tag| seen.insert(tag.clone()))
            .collect();
        let hashtags = filter_hashtags(&lowered)?;
        Ok(Instance {
            post,
            conversation,
            hashtags,
        })
    }

    /// Inverse of the turn joining done by [`Instance::from_record`].
    pub fn to_record(&self) -> RawRecord {
        RawRecord {
            post: self.post.clone(),
            conversation: self
                .conversation
                .split(|t| t == TURN_SEP)
                .map(<[String]>::to_vec)
                .collect(),
            hashtags: self.hashtags.clone(),
        }
    }
}

/// One example per gold hashtag, sharing the encoded post and conversation.
pub fn expand_instances(instance: &Instance, vocab: &Vocabulary) -> Vec<TrainingExample> {
    let post_ids = vocab.encode(&instance.post);
    let conv_ids = vocab.encode(&instance.conversation);
    instance
        .hashtags
        .iter()
        .map(|tag| {
            let mut target_ids = Vec::with_capacity(tag.len() + 2);
            target_ids.push(BOS);
            target_ids.extend(vocab.encode(tag));
            target_ids.push(EOS);
            TrainingExample {
                post_ids: post_ids.clone(),
                conv_ids: conv_ids.clone(),
                target_ids,
            }
        })
        .collect()
}

pub fn expand_all(instances: &[Instance], vocab: &Vocabulary) -> Vec<TrainingExample> {
    instances.iter().flat_map(|i| expand_instances(i, vocab)).collect()
}

/// Train/dev/test partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then `floor(0.8n)` / `floor(0.1n)` / remainder.
pub fn split_80_10_10<T>(mut items: Vec<T>, seed: u64) -> Splits<T> {
    items.shuffle(&mut component_rng(seed, "split"));
    let n = items.len();
    let (n_train, n_dev) = (n * 8 / 10, n / 10);
    let test = items.split_off(n_train + n_dev);
    let dev = items.split_off(n_train);
    Splits {
        train: items,
        dev,
        test,
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: n + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Preprocesses records, dropping (with a warning) those that fail validation.
pub fn preprocess(records: &[RawRecord], max_conv_len: usize) -> Vec<Instance> {
    records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| match Instance::from_record(r, max_conv_len) {
            Ok(inst) => Some(inst),
            Err(e) => {
                log::warn!("dropping record {}: {e}", i + 1);
                None
            }
        })
        .collect()
}

pub fn load_dataset(path: &Path, max_conv_len: usize) -> Result<Vec<Instance>> {
    Ok(preprocess(&read_records(path)?, max_conv_len))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("serializable row");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn tags(list: &[&str]) -> Vec<Vec<String>> {
        list.iter().map(|t| toks(t)).collect()
    }

    #[test]
    fn split_sizes() {
        for (n, want) in [(1000, (800, 100, 100)), (10, (8, 1, 1)), (7, (5, 0, 2))] {
            let s = split_80_10_10((0..n).collect::<Vec<_>>(), 3);
            assert_eq!((s.train.len(), s.dev.len(), s.test.len()), want);
            let mut all: Vec<_> = s.train.iter().chain(&s.dev).chain(&s.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert_eq!(split_80_10_10((0..50).collect::<Vec<_>>(), 9), split_80_10_10((0..50).collect::<Vec<_>>(), 9));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_tokens(&["see", "http://t.co/x"]), toks("see URL"));
        assert_eq!(normalize_tokens(&["@nadal", "wins"]), toks("MENTION wins"));
        assert_eq!(normalize_tokens(&["2014"]), toks("DIGIT"));
        assert_eq!(normalize_tokens(&["Nadal", "WWW.x.com", "@", "2k"]), toks("nadal URL @ 2k"));
    }

    #[test]
    fn filter_examples() {
        assert!(filter_hashtags(&tags(&["a"])).is_err());
        assert_eq!(filter_hashtags(&tags(&["aus open"])).unwrap(), tags(&["aus open"]));
        assert_eq!(
            filter_hashtags(&tags(&["x", "deep learning"])).unwrap(),
            tags(&["deep learning"])
        );
    }

    #[test]
    fn record_joins_turns_and_truncates() {
        let record = RawRecord {
            post: toks("Nadal wins @bbc"),
            conversation: vec![toks("great match"), vec![], toks("so good 100")],
            hashtags: tags(&["Aus Open", "aus open", "a"]),
        };
        let inst = Instance::from_record(&record, 120).unwrap();
        assert_eq!(inst.post, toks("nadal wins MENTION"));
        assert_eq!(inst.conversation, toks("great match <sep> so good DIGIT"));
        assert_eq!(inst.hashtags, tags(&["aus open"]));

        let short = Instance::from_record(&record, 3).unwrap();
        assert_eq!(short.conversation, toks("great match"));
        assert_eq!(short.to_record().conversation, vec![toks("great match")]);
    }

    #[test]
    fn empty_sources_rejected() {
        let record = RawRecord {
            post: toks("hello world"),
            conversation: vec![],
            hashtags: tags(&["hi there"]),
        };
        assert!(Instance::from_record(&record, 120).is_err());
    }

    #[test]
    fn expansion_duplicates_per_gold_tag() {
        let inst = Instance {
            post: toks("a b"),
            conversation: toks("b c"),
            hashtags: tags(&["b c", "zz"]),
        };
        let vocab = Vocabulary::build(std::slice::from_ref(&inst), 10).unwrap();
        let ex = expand_instances(&inst, &vocab);
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].post_ids, ex[1].post_ids);
        assert_eq!(ex[0].conv_ids, ex[1].conv_ids);
        assert_eq!(ex[0].target_ids, vec![BOS, vocab.id("b"), vocab.id("c"), EOS]);

        let small = Vocabulary::build(std::slice::from_ref(&inst), 2).unwrap();
        let ex = expand_instances(&inst, &small);
        assert_eq!(ex[1].target_ids, vec![BOS, UNK, EOS]);
        assert_eq!(expand_instances(&Instance { hashtags: tags(&["b c"]), ..inst }, &vocab).len(), 1);
    }
}
