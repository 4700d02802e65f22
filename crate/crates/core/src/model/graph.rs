use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Batch, EncoderSide, Model, Padded, Sources, Variant};
use crate::corpus::PAD;
use crate::error::{Error, Result};
use crate::numcore::{Tape, Tensor, Var};

struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

/// One forward pass of a [`Model`] recorded on a fresh tape.
pub struct Graph<'m> {
    pub tape: Tape,
    model: &'m Model,
    bound: HashMap<&'m str, Var>,
    dropout: Option<Dropout>,
}

/// Top-layer Bi-GRU states and the final state of each direction.
#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    /// `[B × T × d]`
    pub states: Var,
    /// Forward direction after the last real token, `[B × d/2]`.
    pub final_fwd: Var,
    /// Backward direction after the first token, `[B × d/2]`.
    pub final_bwd: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct BiAttention {
    /// Post-aware attention over conversation states, `[B × |x^p| × |x^c|]`.
    pub alpha_c: Var,
    /// `[B × |x^p| × d]`
    pub r_c: Var,
    /// Conversation-aware attention over post states, `[B × |x^c| × |x^p|]`.
    pub alpha_p: Var,
    /// `[B × |x^c| × d]`
    pub r_p: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Merged {
    pub v_p: Option<Var>,
    pub v_c: Option<Var>,
}

/// What the decoder attends over.
#[derive(Debug, Clone)]
pub struct Memory {
    /// `[B × T × d]`, or `[1 × T × d]` shared by every decoder row.
    pub keys: Var,
    /// `B × T` validity, or `T` when the keys are shared.
    pub mask: Vec<bool>,
    pub init: Var,
    pub bi_attention: Option<BiAttention>,
    pub merged: Option<Merged>,
}

impl Memory {
    pub fn span(&self, tape: &Tape) -> usize {
        tape.shape(self.keys)[1]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub state: Var,
    pub context: Var,
    /// Unnormalized scores over the vocabulary, `[B × |V|]`.
    pub logits: Var,
    /// Decoder attention weights, `[B × T]` (or `[B × 1 × T]` when batched).
    pub attention: Var,
}

pub struct Nll {
    /// Summed negative log-likelihood over all target tokens.
    pub sum: Var,
    /// `sum / tokens`
    pub mean: Var,
    pub per_example: Vec<f64>,
    pub tokens: usize,
}

fn expand_mask(mask: &[bool], rows: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(mask.len() * rows);
    for _ in 0..rows {
        out.extend_from_slice(mask);
    }
    out
}

/// `[B × T]` key mask repeated over `q` query positions → `[B × q × T]`.
fn per_query_mask(mask: &[bool], batch: usize, queries: usize) -> Vec<bool> {
    let t = mask.len() / batch;
    let mut out = Vec::with_capacity(batch * queries * t);
    for b in 0..batch {
        for _ in 0..queries {
            out.extend_from_slice(&mask[b * t..(b + 1) * t]);
        }
    }
    out
}

fn concat_time_masks(a: &Padded, b: &Padded) -> Vec<bool> {
    let mut out = Vec::with_capacity(a.mask.len() + b.mask.len());
    for r in 0..a.batch() {
        out.extend_from_slice(&a.mask[r * a.len..(r + 1) * a.len]);
        out.extend_from_slice(&b.mask[r * b.len..(r + 1) * b.len]);
    }
    out
}

impl<'m> Graph<'m> {
    /// Evaluation-mode graph (no dropout).
    pub fn new(model: &'m Model) -> Self {
        Graph {
            tape: Tape::new(),
            model,
            bound: HashMap::new(),
            dropout: None,
        }
    }

    pub fn training(model: &'m Model, rate: f64, rng: ChaCha8Rng) -> Self {
        let mut g = Self::new(model);
        if rate > 0.0 {
            g.dropout = Some(Dropout { rate, rng });
        }
        g
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    /// Binds a parameter to the tape on first use.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let (key, value) = self
            .model
            .params
            .get_key_value(name)
            .ok_or_else(|| Error::Contract(format!("model has no parameter {name}")))?;
        let v = self.tape.param(key, value.clone());
        self.bound.insert(key.as_str(), v);
        Ok(v)
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        let Some(d) = self.dropout.as_mut() else {
            return Ok(x);
        };
        let keep = 1.0 - d.rate;
        let shape = self.tape.shape(x).to_vec();
        let n = shape.iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| if d.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = self.tape.constant(Tensor::new(&shape, mask)?);
        self.tape.mul(x, m)
    }

    /// Embedding rows for `ids`, shaped `[ids.len() × e]`.
    pub fn embed(&mut self, table: &str, ids: &[usize]) -> Result<Var> {
        let vocab = self.model.config.vocab_size;
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Contract(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        let e = self.param(table)?;
        let x = self.tape.gather_rows(e, ids)?;
        self.dropout(x)
    }

    /// One GRU update, gate orientation `h = z ⊙ h_prev + (1 − z) ⊙ h̃`.
    /// `x_proj` is the input already multiplied by `W_x` plus bias, `[B × 3w]`.
    fn gru_cell(&mut self, prefix: &str, x_proj: Var, h: Var, width: usize) -> Result<Var> {
        let u_zr = self.param(&format!("{prefix}.u_zr"))?;
        let u_n = self.param(&format!("{prefix}.u_n"))?;
        let t = &mut self.tape;
        let h_zr = t.matmul_t(h, u_zr)?;
        let x_zr = t.slice(x_proj, 1, 0, 2 * width)?;
        let pre = t.add(x_zr, h_zr)?;
        let zr = t.sigmoid(pre);
        let z = t.slice(zr, 1, 0, width)?;
        let r = t.slice(zr, 1, width, width)?;
        let rh = t.mul(r, h)?;
        let h_n = t.matmul_t(rh, u_n)?;
        let x_n = t.slice(x_proj, 1, 2 * width, width)?;
        let pre_n = t.add(x_n, h_n)?;
        let cand = t.tanh(pre_n);
        let diff = t.sub(h, cand)?;
        let gated = t.mul(z, diff)?;
        t.add(cand, gated)
    }

    fn project_inputs(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let w = self.param(&format!("{prefix}.w_x"))?;
        let b = self.param(&format!("{prefix}.b"))?;
        let proj = self.tape.matmul_t(x, w)?;
        self.tape.add(proj, b)
    }

    /// One direction of one layer; `x` is `[B × T × in]`. Padded steps hold the state.
    fn gru_direction(&mut self, prefix: &str, x: Var, src: &Padded, reverse: bool) -> Result<(Var, Var)> {
        let (batch, len) = (src.batch(), src.len);
        let width = self.model.config.hidden / 2;
        let input = self.tape.shape(x)[2];
        let flat = self.tape.reshape(x, &[batch * len, input])?;
        let proj = self.project_inputs(prefix, flat)?;
        let proj = self.tape.reshape(proj, &[batch, len, 3 * width])?;

        let mut h = self.tape.constant(Tensor::zeros(&[batch, width]));
        let mut outputs = vec![h; len];
        let order: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
        for t in order {
            let xt = self.tape.slice(proj, 1, t, 1)?;
            let xt = self.tape.reshape(xt, &[batch, 3 * width])?;
            let next = self.gru_cell(prefix, xt, h, width)?;
            let valid = src.column_mask(t);
            h = if valid.iter().all(|&m| m) {
                next
            } else {
                let m: Vec<f64> = valid
                    .iter()
                    .flat_map(|&ok| std::iter::repeat_n(if ok { 1.0 } else { 0.0 }, width))
                    .collect();
                let m = self.tape.constant(Tensor::new(&[batch, width], m)?);
                let delta = self.tape.sub(next, h)?;
                let kept = self.tape.mul(m, delta)?;
                self.tape.add(h, kept)?
            };
            outputs[t] = self.tape.reshape(h, &[batch, 1, width])?;
        }
        let stacked = self.tape.concat(&outputs, 1)?;
        Ok((stacked, h))
    }

    /// Stacked Bi-GRU over `src`; each token's state is `[forward; backward]` of the top layer.
    pub fn encode_bigru(&mut self, side: EncoderSide, src: &Padded) -> Result<EncoderOutput> {
        let (batch, len) = (src.batch(), src.len);
        if len == 0 {
            return Err(Error::Contract("cannot encode an empty sequence".into()));
        }
        let emb = self.model.config.source_embedding();
        let x = self.embed(emb, &src.ids)?;
        let mut x = self.tape.reshape(x, &[batch, len, self.model.config.embed])?;
        let mut finals = None;
        for layer in 0..self.model.config.layers {
            let base = format!("{}.l{layer}", side.prefix());
            let (fwd, last_f) = self.gru_direction(&format!("{base}.fwd"), x, src, false)?;
            let (bwd, last_b) = self.gru_direction(&format!("{base}.bwd"), x, src, true)?;
            let joined = self.tape.concat(&[fwd, bwd], 2)?;
            x = self.dropout(joined)?;
            finals = Some((last_f, last_b));
        }
        let (final_fwd, final_bwd) = finals.expect("at least one layer");
        Ok(EncoderOutput {
            states: x,
            final_fwd,
            final_bwd,
        })
    }

    fn rowwise_matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let s = self.tape.shape(x).to_vec();
        let flat = self.tape.reshape(x, &[s[0] * s[1], s[2]])?;
        let y = self.tape.matmul_t(flat, w)?;
        let out = self.tape.shape(y)[1];
        self.tape.reshape(y, &[s[0], s[1], out])
    }

    /// Post-aware attention over conversation states and the symmetric
    /// conversation-aware attention over post states, sharing `W_biatt`.
    pub fn bi_attention(&mut self, h_p: Var, h_c: Var, mask_p: &[bool], mask_c: &[bool]) -> Result<BiAttention> {
        let w = self.param("biatt.w")?;
        let d = self.model.config.hidden;
        let (sp, sc) = (self.tape.shape(h_p).to_vec(), self.tape.shape(h_c).to_vec());
        if sp.len() != 3 || sc.len() != 3 || sp[0] != sc[0] || sp[2] != d || sc[2] != d {
            return Err(Error::shape("bi_attention", &sp, &sc));
        }
        let (batch, tp, tc) = (sp[0], sp[1], sc[1]);

        // score(i, j) = h^p_i · W · h^c_j
        let flat = self.tape.reshape(h_p, &[batch * tp, d])?;
        let hp_w = self.tape.matmul(flat, w)?;
        let hp_w = self.tape.reshape(hp_w, &[batch, tp, d])?;
        let scores = self.tape.bmm(hp_w, h_c, true)?;
        let alpha_c = self.tape.softmax(scores, Some(&per_query_mask(mask_c, batch, tp)))?;
        let r_c = self.tape.bmm(alpha_c, h_c, false)?;

        // score(j, i) = h^c_j · Wᵀ · h^p_i, normalized over post positions
        let hc_w = self.rowwise_matmul_t(h_c, w)?;
        let scores_t = self.tape.bmm(hc_w, h_p, true)?;
        let alpha_p = self.tape.softmax(scores_t, Some(&per_query_mask(mask_p, batch, tc)))?;
        let r_p = self.tape.bmm(alpha_p, h_p, false)?;

        Ok(BiAttention {
            alpha_c,
            r_c,
            alpha_p,
            r_p,
        })
    }

    fn merge_one(&mut self, h: Var, r: Var, w: &str, b: &str) -> Result<Var> {
        let joined = self.tape.concat(&[h, r], 2)?;
        let w = self.param(w)?;
        let b = self.param(b)?;
        let proj = self.rowwise_matmul_t(joined, w)?;
        let pre = self.tape.add(proj, b)?;
        Ok(self.tape.tanh(pre))
    }

    /// `v^p = tanh(W_p [h^p; r^c] + b_p)` and `v^c = tanh(W_c [h^c; r^p] + b_c)`,
    /// each computed only when the wiring uses it.
    pub fn merge(&mut self, h_p: Var, h_c: Var, att: &BiAttention) -> Result<Merged> {
        let variant = self.model.config.variant;
        let v_p = if variant.merges_post() {
            Some(self.merge_one(h_p, att.r_c, "merge.w_p", "merge.b_p")?)
        } else {
            None
        };
        let v_c = if variant.merges_conv() {
            Some(self.merge_one(h_c, att.r_p, "merge.w_c", "merge.b_c")?)
        } else {
            None
        };
        Ok(Merged { v_p, v_c })
    }

    /// `s_0 = tanh(W_init [final encoder states] + b_init)`.
    pub fn init_decoder(&mut self, encoders: &[EncoderOutput]) -> Result<Var> {
        let mut parts = Vec::with_capacity(2 * encoders.len());
        for enc in encoders {
            parts.push(enc.final_fwd);
            parts.push(enc.final_bwd);
        }
        let joined = self.tape.concat(&parts, 1)?;
        let w = self.param("dec.init.w")?;
        let b = self.param("dec.init.b")?;
        let proj = self.tape.matmul_t(joined, w)?;
        let pre = self.tape.add(proj, b)?;
        Ok(self.tape.tanh(pre))
    }

    /// Runs the variant's encoder wiring and returns the decoder's attention memory.
    pub fn encode(&mut self, src: &Sources) -> Result<Memory> {
        let variant = self.model.config.variant;
        match variant {
            Variant::PostOnly | Variant::ConvOnly | Variant::PostPlusConvConcat => {
                let (side, padded) = match variant {
                    Variant::PostOnly => (EncoderSide::Post, src.post.clone()),
                    Variant::ConvOnly => (EncoderSide::Conversation, src.conv.clone()),
                    _ => (EncoderSide::Joint, src.post.concat_rows(&src.conv)?),
                };
                let enc = self.encode_bigru(side, &padded)?;
                let init = self.init_decoder(&[enc])?;
                Ok(Memory {
                    keys: enc.states,
                    mask: padded.mask,
                    init,
                    bi_attention: None,
                    merged: None,
                })
            }
            Variant::Full | Variant::PostAttOnly | Variant::ConvAttOnly => {
                let post = self.encode_bigru(EncoderSide::Post, &src.post)?;
                let conv = self.encode_bigru(EncoderSide::Conversation, &src.conv)?;
                let att = self.bi_attention(post.states, conv.states, &src.post.mask, &src.conv.mask)?;
                let merged = self.merge(post.states, conv.states, &att)?;
                let (keys, mask) = match (merged.v_p, merged.v_c) {
                    (Some(vp), Some(vc)) => (
                        self.tape.concat(&[vp, vc], 1)?,
                        concat_time_masks(&src.post, &src.conv),
                    ),
                    (Some(vp), None) => (vp, src.post.mask.clone()),
                    (None, Some(vc)) => (vc, src.conv.mask.clone()),
                    (None, None) => unreachable!("bi-attention variants merge at least one side"),
                };
                let init = self.init_decoder(&[post, conv])?;
                Ok(Memory {
                    keys,
                    mask,
                    init,
                    bi_attention: Some(att),
                    merged: Some(merged),
                })
            }
        }
    }

    /// One decoder step: GRU update on the previous token, attention over the
    /// memory with `s_t · W_att · v_i`, and vocabulary logits from `[s_t; c_t]`.
    pub fn decode_step(&mut self, state: Var, prev: &[usize], memory: &Memory) -> Result<StepOutput> {
        let d = self.model.config.hidden;
        let rows = self.tape.shape(state)[0];
        if prev.len() != rows {
            return Err(Error::shape("decode_step", self.tape.shape(state), &[prev.len()]));
        }
        let table = self.model.config.target_embedding();
        let x = self.embed(table, prev)?;
        let x_proj = self.project_inputs("dec.gru", x)?;
        let s = self.gru_cell("dec.gru", x_proj, state, d)?;

        let w_att = self.param("dec.att.w")?;
        let q = self.tape.matmul(s, w_att)?;
        let ks = self.tape.shape(memory.keys).to_vec();
        let span = ks[1];
        let (context, attention) = if ks[0] == rows {
            let q3 = self.tape.reshape(q, &[rows, 1, d])?;
            let scores = self.tape.bmm(q3, memory.keys, true)?;
            let alpha = self.tape.softmax(scores, Some(&memory.mask))?;
            let c = self.tape.bmm(alpha, memory.keys, false)?;
            (self.tape.reshape(c, &[rows, d])?, alpha)
        } else if ks[0] == 1 {
            let keys = self.tape.reshape(memory.keys, &[span, d])?;
            let scores = self.tape.matmul_t(q, keys)?;
            let mask = expand_mask(&memory.mask[..span], rows);
            let alpha = self.tape.softmax(scores, Some(&mask))?;
            (self.tape.matmul(alpha, keys)?, alpha)
        } else {
            return Err(Error::shape("decode_step memory", &ks, &[rows]));
        };

        let joined = self.tape.concat(&[s, context], 1)?;
        let joined = self.dropout(joined)?;
        let w_v = self.param("out.w")?;
        let b_v = self.param("out.b")?;
        let proj = self.tape.matmul_t(joined, w_v)?;
        let logits = self.tape.add(proj, b_v)?;
        Ok(StepOutput {
            state: s,
            context,
            logits,
            attention,
        })
    }

    /// Teacher-forced negative log-likelihood of every target token after BOS.
    pub fn forward_nll(&mut self, batch: &Batch) -> Result<Nll> {
        let memory = self.encode(&batch.sources)?;
        let target = &batch.target;
        let rows = target.batch();
        let mut state = memory.init;
        let mut total: Option<Var> = None;
        let mut per_example = vec![0.0; rows];
        for t in 1..target.len {
            let prev = target.column(t - 1);
            let gold = target.column(t);
            let step = self.decode_step(state, &prev, &memory)?;
            state = step.state;
            let logp = self.tape.log_softmax(step.logits, None)?;
            let picked = self.tape.pick(logp, &gold)?;
            let weights: Vec<f64> = gold.iter().map(|&g| if g == PAD { 0.0 } else { 1.0 }).collect();
            for (b, w) in weights.iter().enumerate() {
                per_example[b] -= w * self.tape.value(picked).data()[b];
            }
            let w = self.tape.constant(Tensor::new(&[rows, 1], weights)?);
            let masked = self.tape.mul(picked, w)?;
            let s = self.tape.sum(masked);
            total = Some(match total {
                Some(acc) => self.tape.add(acc, s)?,
                None => s,
            });
        }
        let total = total.expect("targets have length >= 2");
        let sum = self.tape.scale(total, -1.0);
        let tokens = batch.target_tokens();
        let mean = self.tape.scale(sum, 1.0 / tokens as f64);
        Ok(Nll {
            sum,
            mean,
            per_example,
            tokens,
        })
    }
}
