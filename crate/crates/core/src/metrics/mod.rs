//! Ranking metrics (F1@K, AP@5) and overlap metrics (ROUGE-1, ROUGE-SU4)
//! for generated hashtags.

mod porter;

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::inference::Prediction;

pub use porter::stem;

/// Largest number of words a skip-bigram may jump over.
pub const MAX_SKIP: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    /// Porter-stem ROUGE tokens.
    pub stemming: bool,
    /// Score ROUGE over characters instead of words.
    pub char_mode: bool,
    pub f1_cutoffs: [usize; 2],
    pub map_cutoff: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            stemming: true,
            char_mode: false,
            f1_cutoffs: [1, 5],
            map_cutoff: 5,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.f1_cutoffs.contains(&0) || self.map_cutoff == 0 {
            return Err(Error::Config("metric cutoffs must be >= 1".into()));
        }
        Ok(())
    }
}

fn tag_key<S: AsRef<str>>(tag: &[S]) -> String {
    tag.iter()
        .map(|w| w.as_ref().to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn gold_keys<S: AsRef<str>>(gold: &[Vec<S>]) -> Result<HashSet<String>> {
    if gold.is_empty() {
        return Err(Error::Contract("empty gold hashtag set".into()));
    }
    Ok(gold.iter().map(|g| tag_key(g)).collect())
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `P = hits / k`, `R = hits / |gold|` over the top `k` predictions.
pub fn f1_at_k<S: AsRef<str>, T: AsRef<str>>(predictions: &[Vec<S>], gold: &[Vec<T>], k: usize) -> Result<f64> {
    let gold = gold_keys(gold)?;
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let top: HashSet<String> = predictions.iter().take(k).map(|p| tag_key(p)).collect();
    let hits = top.intersection(&gold).count() as f64;
    Ok(harmonic(hits / k as f64, hits / gold.len() as f64))
}

/// `Σ_{i ≤ k} P@i · rel_i / min(|gold|, k)`.
pub fn average_precision_at_k<S: AsRef<str>, T: AsRef<str>>(
    predictions: &[Vec<S>],
    gold: &[Vec<T>],
    k: usize,
) -> Result<f64> {
    let gold = gold_keys(gold)?;
    let mut seen = HashSet::new();
    let (mut hits, mut total) = (0usize, 0.0);
    for (i, p) in predictions.iter().take(k).enumerate() {
        let key = tag_key(p);
        if gold.contains(&key) && seen.insert(key) {
            hits += 1;
            total += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(total / gold.len().min(k) as f64)
}

pub fn average_precision_at_5<S: AsRef<str>, T: AsRef<str>>(predictions: &[Vec<S>], gold: &[Vec<T>]) -> Result<f64> {
    average_precision_at_k(predictions, gold, 5)
}

/// ROUGE tokens of one hashtag under `cfg`.
pub fn rouge_tokens<S: AsRef<str>>(tag: &[S], cfg: &MatchConfig) -> Vec<String> {
    let words = tag.iter().map(|w| w.as_ref().to_lowercase());
    if cfg.char_mode {
        words.flat_map(|w| w.chars().map(String::from).collect::<Vec<_>>()).collect()
    } else if cfg.stemming {
        words.map(|w| stem(&w)).collect()
    } else {
        words.collect()
    }
}

fn counts<T: std::hash::Hash + Eq>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut out = HashMap::new();
    for x in items {
        *out.entry(x).or_insert(0) += 1;
    }
    out
}

fn clipped_f1<T: std::hash::Hash + Eq>(pred: HashMap<T, usize>, gold: HashMap<T, usize>) -> f64 {
    let (np, ng): (usize, usize) = (pred.values().sum(), gold.values().sum());
    if np == 0 || ng == 0 {
        return 0.0;
    }
    let overlap: usize = pred
        .iter()
        .map(|(u, &c)| c.min(gold.get(u).copied().unwrap_or(0)))
        .sum();
    harmonic(overlap as f64 / np as f64, overlap as f64 / ng as f64)
}

/// Unigram overlap F1 with clipped counts.
pub fn rouge1_f1(pred: &[String], gold: &[String]) -> f64 {
    clipped_f1(counts(pred.iter()), counts(gold.iter()))
}

/// Scoring unit of ROUGE-SU: a unigram or an in-order skip-bigram.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SuUnit<'a> {
    Uni(&'a str),
    Skip(&'a str, &'a str),
}

/// All unigrams plus every pair `(i, j)`, `i < j`, with at most
/// [`MAX_SKIP`] tokens between them.
pub fn su_units(tokens: &[String]) -> Vec<SuUnit<'_>> {
    let mut out: Vec<SuUnit> = tokens.iter().map(|t| SuUnit::Uni(t)).collect();
    for i in 0..tokens.len() {
        for j in i + 1..tokens.len().min(i + MAX_SKIP + 2) {
            out.push(SuUnit::Skip(&tokens[i], &tokens[j]));
        }
    }
    out
}

/// Skip-bigram (max skip 4) plus unigram overlap F1 with clipped counts.
pub fn rouge_su4_f1(pred: &[String], gold: &[String]) -> f64 {
    clipped_f1(counts(su_units(pred)), counts(su_units(gold)))
}

/// Averages a per-gold ROUGE score over every gold hashtag.
fn rouge_vs_golds<S: AsRef<str>, T: AsRef<str>>(
    top: Option<&Vec<S>>,
    gold: &[Vec<T>],
    cfg: &MatchConfig,
    f: fn(&[String], &[String]) -> f64,
) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Contract("empty gold hashtag set".into()));
    }
    let Some(top) = top else {
        return Ok(0.0);
    };
    let pred = rouge_tokens(top, cfg);
    let total: f64 = gold.iter().map(|g| f(&pred, &rouge_tokens(g, cfg))).sum();
    Ok(total / gold.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceScores {
    pub f1_at_1: f64,
    pub f1_at_5: f64,
    pub map_at_5: f64,
    pub rouge1_f1: f64,
    pub rouge_su4_f1: f64,
}

pub fn score_instance<S: AsRef<str>, T: AsRef<str>>(
    predictions: &[Vec<S>],
    gold: &[Vec<T>],
    cfg: &MatchConfig,
) -> Result<InstanceScores> {
    let top = predictions.first();
    Ok(InstanceScores {
        f1_at_1: f1_at_k(predictions, gold, cfg.f1_cutoffs[0])?,
        f1_at_5: f1_at_k(predictions, gold, cfg.f1_cutoffs[1])?,
        map_at_5: average_precision_at_k(predictions, gold, cfg.map_cutoff)?,
        rouge1_f1: rouge_vs_golds(top, gold, cfg, rouge1_f1)?,
        rouge_su4_f1: rouge_vs_golds(top, gold, cfg, rouge_su4_f1)?,
    })
}

/// Macro-averaged scores over a test set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_at_1: f64,
    pub f1_at_5: f64,
    pub map_at_5: f64,
    pub rouge1_f1: f64,
    pub rouge_su4_f1: f64,
    pub instances: usize,
}

impl MetricsReport {
    pub fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("F1@1", self.f1_at_1),
            ("F1@5", self.f1_at_5),
            ("MAP@5", self.map_at_5),
            ("ROUGE-1", self.rouge1_f1),
            ("ROUGE-SU4", self.rouge_su4_f1),
        ]
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        for (name, v) in self.fields() {
            writeln!(out, "{name:<10} {:>7.2}", 100.0 * v).unwrap();
        }
        writeln!(out, "{:<10} {:>7}", "instances", self.instances).unwrap();
        out
    }
}

/// Scores aligned prediction lines against a dataset.
pub fn evaluate(dataset: &[Instance], predictions: &[Prediction], cfg: &MatchConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    if dataset.len() != predictions.len() {
        let first = dataset.len().min(predictions.len()) + 1;
        return Err(Error::Alignment(format!(
            "dataset has {} lines but predictions have {}; line {first} has no counterpart",
            dataset.len(),
            predictions.len()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty dataset".into()));
    }
    let mut sum = InstanceScores::default();
    for (line, (inst, pred)) in dataset.iter().zip(predictions).enumerate() {
        let s = score_instance(&pred.predictions, &inst.hashtags, cfg)
            .map_err(|e| Error::Contract(format!("line {}: {e}", line + 1)))?;
        sum.f1_at_1 += s.f1_at_1;
        sum.f1_at_5 += s.f1_at_5;
        sum.map_at_5 += s.map_at_5;
        sum.rouge1_f1 += s.rouge1_f1;
        sum.rouge_su4_f1 += s.rouge_su4_f1;
    }
    let n = dataset.len() as f64;
    Ok(MetricsReport {
        f1_at_1: sum.f1_at_1 / n,
        f1_at_5: sum.f1_at_5 / n,
        map_at_5: sum.map_at_5 / n,
        rouge1_f1: sum.rouge1_f1 / n,
        rouge_su4_f1: sum.rouge_su4_f1 / n,
        instances: dataset.len(),
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(p);
    }
    Ok(out)
}
