//! Plain-loop reference computations, independent of the tape engine.
#![allow(dead_code)]

use hashgen::model::Model;

pub mod metric_fixtures;
pub mod plumbing;

pub type Mat = Vec<Vec<f64>>;

pub fn param(model: &Model, name: &str) -> Mat {
    let t = &model.params[name];
    let cols = t.last_dim();
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

pub fn vector(model: &Model, name: &str) -> Vec<f64> {
    model.params[name].data().to_vec()
}

/// `W · x` for `W: [out × in]`.
pub fn matvec(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|row| {
            assert_eq!(row.len(), x.len());
            row.iter().zip(x).map(|(a, b)| a * b).sum()
        })
        .collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// GRU step with separate gate matrices sliced out of the fused parameters:
/// z = σ(W_z x + U_z h + b_z), r = σ(W_r x + U_r h + b_r),
/// h̃ = tanh(W x + U (r ⊙ h) + b), h' = z ⊙ h + (1 − z) ⊙ h̃.
pub fn gru_step(model: &Model, prefix: &str, x: &[f64], h: &[f64]) -> Vec<f64> {
    let w = param(model, &format!("{prefix}.w_x"));
    let u_zr = param(model, &format!("{prefix}.u_zr"));
    let u_n = param(model, &format!("{prefix}.u_n"));
    let b = vector(model, &format!("{prefix}.b"));
    let n = h.len();
    let (w_z, w_r, w_n) = (&w[..n].to_vec(), &w[n..2 * n].to_vec(), &w[2 * n..].to_vec());
    let (u_z, u_r) = (&u_zr[..n].to_vec(), &u_zr[n..].to_vec());
    let z: Vec<f64> = add(&add(&matvec(w_z, x), &matvec(u_z, h)), &b[..n])
        .into_iter()
        .map(sigmoid)
        .collect();
    let r: Vec<f64> = add(&add(&matvec(w_r, x), &matvec(u_r, h)), &b[n..2 * n])
        .into_iter()
        .map(sigmoid)
        .collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let cand: Vec<f64> = add(&add(&matvec(w_n, x), &matvec(&u_n, &rh)), &b[2 * n..])
        .into_iter()
        .map(f64::tanh)
        .collect();
    (0..n).map(|i| z[i] * h[i] + (1.0 - z[i]) * cand[i]).collect()
}

pub struct EncOut {
    pub states: Mat,
    pub final_fwd: Vec<f64>,
    pub final_bwd: Vec<f64>,
}

/// Unrolled stacked Bi-GRU over one unpadded sequence.
pub fn bigru(model: &Model, prefix: &str, ids: &[usize]) -> EncOut {
    let emb = param(model, "embedding");
    let width = model.config.hidden / 2;
    let mut xs: Mat = ids.iter().map(|&i| emb[i].clone()).collect();
    let mut finals = (vec![], vec![]);
    for layer in 0..model.config.layers {
        let mut fwd = vec![vec![0.0; width]; xs.len()];
        let mut h = vec![0.0; width];
        for t in 0..xs.len() {
            h = gru_step(model, &format!("{prefix}.l{layer}.fwd"), &xs[t], &h);
            fwd[t] = h.clone();
        }
        let last_f = h;
        let mut bwd = vec![vec![0.0; width]; xs.len()];
        let mut h = vec![0.0; width];
        for t in (0..xs.len()).rev() {
            h = gru_step(model, &format!("{prefix}.l{layer}.bwd"), &xs[t], &h);
            bwd[t] = h.clone();
        }
        xs = fwd.iter().zip(&bwd).map(|(f, b)| [f.clone(), b.clone()].concat()).collect();
        finals = (last_f, h);
    }
    EncOut {
        states: xs,
        final_fwd: finals.0,
        final_bwd: finals.1,
    }
}

/// Attention of every query over `keys` with score `q W k`; returns (weights, summaries).
pub fn attend(queries: &Mat, w: &Mat, keys: &Mat) -> (Mat, Mat) {
    let mut alphas = Vec::new();
    let mut out = Vec::new();
    for q in queries {
        let mut scores = Vec::new();
        for k in keys {
            let mut s = 0.0;
            for (i, qi) in q.iter().enumerate() {
                for (j, kj) in k.iter().enumerate() {
                    s += qi * w[i][j] * kj;
                }
            }
            scores.push(s);
        }
        let a = softmax(&scores);
        let mut r = vec![0.0; keys[0].len()];
        for (aj, k) in a.iter().zip(keys) {
            for (ri, kv) in r.iter_mut().zip(k) {
                *ri += aj * kv;
            }
        }
        alphas.push(a);
        out.push(r);
    }
    (alphas, out)
}

pub fn transpose(m: &Mat) -> Mat {
    (0..m[0].len()).map(|j| m.iter().map(|r| r[j]).collect()).collect()
}

pub fn merge(h: &Mat, r: &Mat, w: &Mat, b: &[f64]) -> Mat {
    h.iter()
        .zip(r)
        .map(|(hi, ri)| {
            add(&matvec(w, &[hi.clone(), ri.clone()].concat()), b)
                .into_iter()
                .map(f64::tanh)
                .collect()
        })
        .collect()
}

pub struct Encoded {
    pub memory: Mat,
    pub init: Vec<f64>,
}

/// Full-variant encoder for one (post, conversation) pair.
pub fn encode_full(model: &Model, post: &[usize], conv: &[usize]) -> Encoded {
    let p = bigru(model, "enc.post", post);
    let c = bigru(model, "enc.conv", conv);
    let w = param(model, "biatt.w");
    let (_, r_c) = attend(&p.states, &w, &c.states);
    let (_, r_p) = attend(&c.states, &transpose(&w), &p.states);
    let v_p = merge(&p.states, &r_c, &param(model, "merge.w_p"), &vector(model, "merge.b_p"));
    let v_c = merge(&c.states, &r_p, &param(model, "merge.w_c"), &vector(model, "merge.b_c"));
    let finals = [p.final_fwd, p.final_bwd, c.final_fwd, c.final_bwd].concat();
    let init = add(&matvec(&param(model, "dec.init.w"), &finals), &vector(model, "dec.init.b"))
        .into_iter()
        .map(f64::tanh)
        .collect();
    Encoded {
        memory: [v_p, v_c].concat(),
        init,
    }
}

/// One decoder step: returns (new state, context, distribution).
pub fn decode_step(model: &Model, state: &[f64], prev: usize, memory: &Mat) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let emb = param(model, "embedding");
    let s = gru_step(model, "dec.gru", &emb[prev], state);
    let (_, ctx) = attend(&vec![s.clone()], &param(model, "dec.att.w"), memory);
    let c = ctx[0].clone();
    let logits = add(&matvec(&param(model, "out.w"), &[s.clone(), c.clone()].concat()), &vector(model, "out.b"));
    (s, c, softmax(&logits))
}

/// Next-token log-probabilities with PAD/UNK/BOS barred, and EOS barred
/// before the first word.
pub fn masked_log_probs(dist: &[f64], generated: usize) -> Vec<f64> {
    use hashgen::corpus::{BOS, EOS, PAD, UNK};
    let barred = |i: usize| i == PAD || i == UNK || i == BOS || (i == EOS && generated == 0);
    let total: f64 = (0..dist.len()).filter(|&i| !barred(i)).map(|i| dist[i]).sum();
    (0..dist.len())
        .map(|i| if barred(i) { f64::NEG_INFINITY } else { (dist[i] / total).ln() })
        .collect()
}

/// Every complete candidate of at most `max_len` decoder steps (EOS-terminated,
/// or cut off at `max_len` words), scored by the plain-loop decoder, best
/// first (score, then shorter, then smaller ids).
pub fn enumerate_candidates(model: &Model, post: &[usize], conv: &[usize], max_len: usize) -> Vec<(Vec<usize>, f64)> {
    use hashgen::corpus::{BOS, EOS};
    fn walk(
        model: &Model,
        memory: &Mat,
        state: &[f64],
        prefix: &mut Vec<usize>,
        score: f64,
        steps_left: usize,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if steps_left == 0 {
            out.push((prefix.clone(), score));
            return;
        }
        let prev = prefix.last().copied().unwrap_or(BOS);
        let (s, _, dist) = decode_step(model, state, prev, memory);
        for (tok, lp) in masked_log_probs(&dist, prefix.len()).into_iter().enumerate() {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            if tok == EOS {
                out.push((prefix.clone(), score + lp));
            } else {
                prefix.push(tok);
                walk(model, memory, &s, prefix, score + lp, steps_left - 1, out);
                prefix.pop();
            }
        }
    }
    let enc = encode_full(model, post, conv);
    let mut out = Vec::new();
    walk(model, &enc.memory, &enc.init, &mut Vec::new(), 0.0, max_len, &mut out);
    out.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(a.0.len().cmp(&b.0.len()))
            .then(a.0.cmp(&b.0))
    });
    out
}
