//! Beam-search decoding of ranked hashtag candidates.

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, Vocabulary, BOS, EOS, PAD, UNK};
use crate::error::{Error, Result};
use crate::model::{Graph, Memory, Model, Sources};
use crate::numcore::{log_softmax_in_place, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Decoder steps, counting the step that emits EOS.
    pub max_len: usize,
    pub top_k: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 20,
            max_len: 10,
            top_k: 5,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.max_len == 0 {
            return Err(Error::Config("beam_width and max_len must be >= 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.beam_width {
            return Err(Error::Config(format!(
                "top_k must be in 1..={} (beam width), got {}",
                self.beam_width, self.top_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated ids after BOS, excluding EOS.
    pub tokens: Vec<usize>,
    pub score: f64,
    pub finished: bool,
    state: Vec<f64>,
}

impl Hypothesis {
    pub fn new(tokens: Vec<usize>, score: f64, finished: bool) -> Self {
        Hypothesis {
            tokens,
            score,
            finished,
            state: Vec::new(),
        }
    }
}

/// Higher score first, then shorter, then smaller id sequence.
pub fn score_tiebreak(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    rank_order(&a.tokens, a.score, &b.tokens, b.score)
}

fn rank_order(ta: &[usize], sa: f64, tb: &[usize], sb: f64) -> Ordering {
    sb.total_cmp(&sa)
        .then_with(|| ta.len().cmp(&tb.len()))
        .then_with(|| ta.cmp(tb))
}

/// Ranked, deduplicated candidates for one instance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedOutput {
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl RankedOutput {
    /// Checks ordering, uniqueness, and the length bound.
    pub fn check(&self, k: usize) -> Result<()> {
        if self.entries.len() > k {
            return Err(Error::Contract(format!("{} outputs exceed K = {k}", self.entries.len())));
        }
        if self.entries.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Error::Contract("ranked output scores are not nonincreasing".into()));
        }
        let distinct: HashSet<&Vec<usize>> = self.entries.iter().map(|e| &e.0).collect();
        if distinct.len() != self.entries.len() {
            return Err(Error::Contract("ranked output contains duplicates".into()));
        }
        Ok(())
    }
}

/// Log-probabilities for the next token; barred ids come back as −∞.
fn next_log_probs(logits: &[f64], generated: usize) -> Result<Vec<f64>> {
    let mut row = logits.to_vec();
    for id in [PAD, UNK, BOS] {
        row[id] = f64::NEG_INFINITY;
    }
    if generated == 0 {
        row[EOS] = f64::NEG_INFINITY;
    }
    if row.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::Numeric("decoder produced non-finite logits".into()));
    }
    log_softmax_in_place(&mut row);
    Ok(row)
}

struct Decoder<'m> {
    graph: Graph<'m>,
    memory: Memory,
    width: usize,
}

impl<'m> Decoder<'m> {
    fn new(model: &'m Model, post: &[usize], conv: &[usize]) -> Result<Self> {
        let mut graph = Graph::new(model);
        let memory = graph.encode(&Sources::single(post, conv)?)?;
        Ok(Decoder {
            graph,
            memory,
            width: model.config.hidden,
        })
    }

    fn init_state(&self) -> Vec<f64> {
        self.graph.tape.value(self.memory.init).data().to_vec()
    }

    /// Runs one decoder step for every row; returns (new states, next-token log-probs).
    fn step(&mut self, states: &[&[f64]], prev: &[usize], generated: &[usize]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let rows = states.len();
        let flat: Vec<f64> = states.iter().flat_map(|s| s.iter().copied()).collect();
        let state = self.graph.tape.constant(Tensor::new(&[rows, self.width], flat)?);
        let out = self.graph.decode_step(state, prev, &self.memory)?;
        let s = self.graph.tape.value(out.state);
        let logits = self.graph.tape.value(out.logits);
        (0..rows)
            .map(|r| Ok((s.row(r).to_vec(), next_log_probs(logits.row(r), generated[r])?)))
            .collect()
    }
}

/// Beam search over the decoder; finished hypotheses stay in the beam with
/// their final score, and the best `top_k` distinct sequences are returned.
pub fn beam_search(model: &Model, post: &[usize], conv: &[usize], cfg: &BeamConfig) -> Result<RankedOutput> {
    cfg.validate()?;
    let mut dec = Decoder::new(model, post, conv)?;
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        finished: false,
        state: dec.init_state(),
    }];

    for _ in 0..cfg.max_len {
        let active: Vec<&Hypothesis> = beam.iter().filter(|h| !h.finished).collect();
        if active.is_empty() {
            break;
        }
        let states: Vec<&[f64]> = active.iter().map(|h| h.state.as_slice()).collect();
        let prev: Vec<usize> = active.iter().map(|h| h.tokens.last().copied().unwrap_or(BOS)).collect();
        let generated: Vec<usize> = active.iter().map(|h| h.tokens.len()).collect();
        let stepped = dec.step(&states, &prev, &generated)?;

        let mut candidates: Vec<Hypothesis> = beam.iter().filter(|h| h.finished).cloned().collect();
        for (parent, (state, log_probs)) in active.iter().zip(stepped) {
            let mut allowed: Vec<(usize, f64)> = log_probs
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, lp)| lp.is_finite())
                .collect();
            // only this row's best `beam_width` tokens can survive the global cut
            allowed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            allowed.truncate(cfg.beam_width);
            for (tok, lp) in allowed {
                let score = parent.score + lp;
                if !(score <= parent.score) {
                    return Err(Error::Numeric(format!(
                        "beam score rose from {} to {score}",
                        parent.score
                    )));
                }
                let finished = tok == EOS;
                let mut tokens = parent.tokens.clone();
                if !finished {
                    tokens.push(tok);
                }
                candidates.push(Hypothesis {
                    tokens,
                    score,
                    finished,
                    state: state.clone(),
                });
            }
        }
        candidates.sort_by(|a, b| score_tiebreak(a, b).then(b.finished.cmp(&a.finished)));
        candidates.truncate(cfg.beam_width);
        beam = candidates;
    }

    // truncated hypotheses compete on score; a finished one wins an exact tie
    beam.sort_by(|a, b| score_tiebreak(a, b).then(b.finished.cmp(&a.finished)));
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(cfg.top_k);
    for h in beam {
        if entries.len() == cfg.top_k {
            break;
        }
        if seen.insert(h.tokens.clone()) {
            entries.push((h.tokens, h.score));
        }
    }
    Ok(RankedOutput { entries })
}

/// Token-by-token argmax decoding under the same masking as [`beam_search`].
pub fn greedy_decode(model: &Model, post: &[usize], conv: &[usize], max_len: usize) -> Result<(Vec<usize>, f64)> {
    let mut dec = Decoder::new(model, post, conv)?;
    let mut state = dec.init_state();
    let (mut tokens, mut score) = (Vec::new(), 0.0);
    for _ in 0..max_len {
        let prev = tokens.last().copied().unwrap_or(BOS);
        let (next_state, log_probs) = dec.step(&[&state], &[prev], &[tokens.len()])?.remove(0);
        let (tok, lp) = log_probs
            .iter()
            .copied()
            .enumerate()
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, lp)| if lp > best.1 { (i, lp) } else { best });
        score += lp;
        if tok == EOS {
            break;
        }
        tokens.push(tok);
        state = next_state;
    }
    Ok((tokens, score))
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predictions: Vec<Vec<String>>,
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn from_ranked(ranked: &RankedOutput, vocab: &Vocabulary) -> Self {
        Prediction {
            predictions: ranked.entries.iter().map(|(ids, _)| vocab.decode(ids)).collect(),
            scores: ranked.entries.iter().map(|(_, s)| *s).collect(),
        }
    }
}

/// Decodes every instance in parallel; output order matches input order.
pub fn generate(model: &Model, vocab: &Vocabulary, instances: &[Instance], cfg: &BeamConfig) -> Result<Vec<Prediction>> {
    cfg.validate()?;
    if vocab.len() != model.config.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocabulary has {} entries but the checkpoint expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    instances
        .par_iter()
        .map(|inst| {
            let ranked = beam_search(model, &vocab.encode(&inst.post), &vocab.encode(&inst.conversation), cfg)?;
            ranked.check(cfg.top_k)?;
            Ok(Prediction::from_ranked(&ranked, vocab))
        })
        .collect()
}
