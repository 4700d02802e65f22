//! Deterministic topic-driven corpora for desk-scale experiments.
//!
//! Each topic owns a 1–3 word keyphrase (the gold hashtag) and a handful of
//! indicative words. Indicative words are planted in the post, the
//! conversation, or both; everything else is uniform noise. Keyphrase words
//! never appear in the text.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Instance, TURN_SEP};
use crate::error::{Error, Result};
use crate::rng::component_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalLocation {
    Post,
    Conversation,
    Both,
}

impl SignalLocation {
    fn in_post(self) -> bool {
        matches!(self, SignalLocation::Post | SignalLocation::Both)
    }

    fn in_conversation(self) -> bool {
        matches!(self, SignalLocation::Conversation | SignalLocation::Both)
    }
}

impl FromStr for SignalLocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post" => Ok(SignalLocation::Post),
            "conversation" | "conv" => Ok(SignalLocation::Conversation),
            "both" => Ok(SignalLocation::Both),
            other => Err(Error::Config(format!("unknown signal_location {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_topics: usize,
    pub n_instances: usize,
    /// Number of distinct words the generator may use.
    pub vocab_size: usize,
    pub signal_location: SignalLocation,
    pub seed: u64,
    pub indicative_per_topic: usize,
    pub post_len: (usize, usize),
    pub turns: (usize, usize),
    pub turn_len: (usize, usize),
    /// Indicative words planted per signal-carrying source.
    pub planted: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_topics: 10,
            n_instances: 100,
            vocab_size: 200,
            signal_location: SignalLocation::Both,
            seed: 0,
            indicative_per_topic: 4,
            post_len: (6, 10),
            turns: (2, 4),
            turn_len: (4, 7),
            planted: 2,
        }
    }
}

const SYLLABLES: [&str; 20] = [
    "ba", "ko", "mi", "ru", "te", "sa", "no", "li", "pe", "zu", "da", "fi", "go", "hu", "ja", "ke",
    "lo", "ma", "ne", "vi",
];

/// Distinct three-syllable pseudo-word for `i < 8000`.
fn word(i: usize) -> String {
    let n = SYLLABLES.len();
    format!("{}{}{}", SYLLABLES[i / (n * n) % n], SYLLABLES[i / n % n], SYLLABLES[i % n])
}

struct Topic {
    keyphrase: Vec<String>,
    indicative: Vec<String>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<Instance>> {
    const MAX_KEYPHRASE: usize = 3;
    const MIN_NOISE: usize = 10;
    let reserved = cfg.n_topics * (MAX_KEYPHRASE + cfg.indicative_per_topic);
    if cfg.n_topics == 0 || cfg.indicative_per_topic == 0 {
        return Err(Error::Contract("synthetic corpus needs n_topics >= 1 and indicative words".into()));
    }
    if cfg.vocab_size < reserved + MIN_NOISE {
        return Err(Error::Contract(format!(
            "vocab_size {} too small for {} topics (need at least {})",
            cfg.vocab_size,
            cfg.n_topics,
            reserved + MIN_NOISE
        )));
    }
    if cfg.vocab_size > SYLLABLES.len().pow(3) {
        return Err(Error::Contract(format!("vocab_size {} exceeds word pool", cfg.vocab_size)));
    }
    let ranges = [cfg.post_len, cfg.turns, cfg.turn_len];
    if ranges.iter().any(|&(lo, hi)| lo == 0 || lo > hi) || cfg.planted == 0 || cfg.planted > cfg.post_len.0 {
        return Err(Error::Contract("invalid synthetic length ranges".into()));
    }

    let mut rng = component_rng(cfg.seed, "synthetic");
    let mut pool: Vec<String> = (0..cfg.vocab_size).map(word).collect();
    pool.shuffle(&mut rng);
    let mut rest = &pool[..];
    let mut topics = Vec::with_capacity(cfg.n_topics);
    for _ in 0..cfg.n_topics {
        let len = rng.gen_range(1..=MAX_KEYPHRASE);
        let (keyphrase, tail) = rest.split_at(len);
        let (indicative, tail) = tail.split_at(cfg.indicative_per_topic);
        topics.push(Topic {
            keyphrase: keyphrase.to_vec(),
            indicative: indicative.to_vec(),
        });
        rest = tail;
    }
    let noise = rest.to_vec();

    let fill = |rng: &mut rand_chacha::ChaCha8Rng, len: usize, planted: &[String]| {
        let mut out: Vec<String> = (0..len).map(|_| noise.choose(rng).unwrap().clone()).collect();
        let mut slots: Vec<usize> = (0..len).collect();
        slots.shuffle(rng);
        for (slot, w) in slots.into_iter().zip(planted) {
            out[slot] = w.clone();
        }
        out
    };

    let mut instances = Vec::with_capacity(cfg.n_instances);
    for _ in 0..cfg.n_instances {
        let topic = &topics[rng.gen_range(0..cfg.n_topics)];
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
            (0..cfg.planted)
                .map(|_| topic.indicative.choose(rng).unwrap().clone())
                .collect()
        };

        let post_len = rng.gen_range(cfg.post_len.0..=cfg.post_len.1);
        let planted = if cfg.signal_location.in_post() { pick(&mut rng) } else { vec![] };
        let post = fill(&mut rng, post_len, &planted);

        let n_turns = rng.gen_range(cfg.turns.0..=cfg.turns.1);
        let signal_turn = rng.gen_range(0..n_turns);
        let mut conversation = Vec::new();
        for t in 0..n_turns {
            let len = rng.gen_range(cfg.turn_len.0.max(cfg.planted)..=cfg.turn_len.1.max(cfg.planted));
            let planted = if cfg.signal_location.in_conversation() && t == signal_turn {
                pick(&mut rng)
            } else {
                vec![]
            };
            if t > 0 {
                conversation.push(TURN_SEP.to_string());
            }
            conversation.extend(fill(&mut rng, len, &planted));
        }

        instances.push(Instance {
            post,
            conversation,
            hashtags: vec![topic.keyphrase.clone()],
        });
    }
    Ok(instances)
}
