use std::collections::BTreeMap;
use std::sync::Arc;

use super::tensor::{gemm, outer_inner, Tensor, View};
use crate::error::{Error, Result};

/// Additive surrogate for −∞ used by masked softmax.
pub const MASK_FILL: f64 = -1e9;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, tb: bool },
    BatchMatMul { a: Var, b: Var, tb: bool },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, s: f64 },
    AddScalar { a: Var },
    Tanh { a: Var },
    Sigmoid { a: Var },
    Softmax { a: Var },
    LogSoftmax { a: Var },
    Gather { a: Var, idx: Vec<usize> },
    Pick { a: Var, idx: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { a: Var, axis: usize, start: usize },
    Reshape { a: Var },
    Sum { a: Var },
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run recording of primitive operations.
///
/// Every operation appends one node whose inputs are already on the tape, so
/// node order is a topological order and [`Tape::backward`] is a single
/// reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

fn same_or_suffix(a: &[usize], b: &[usize]) -> bool {
    a == b || (b.len() <= a.len() && a.ends_with(b))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.push_arc(Arc::new(value), op, needs_grad)
    }

    fn push_arc(&mut self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn constant_arc(&mut self, value: Arc<Tensor>) -> Var {
        self.push_arc(value, Op::Leaf, false)
    }

    /// Records a named trainable leaf; its gradient appears in [`Gradients::by_name`].
    pub fn param(&mut self, name: &str, value: Arc<Tensor>) -> Var {
        let v = self.push_arc(value, Op::Leaf, true);
        self.params.push((name.to_string(), v));
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn value_arc(&self, v: Var) -> Arc<Tensor> {
        Arc::clone(&self.nodes[v.0].value)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `a · b` for `a: [m×k]`, `b: [k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(Error::shape("matmul", sa, sb));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            View::plain(self.value(a).data(), k),
            View::maybe_t(self.value(b).data(), sb[1], tb),
            &mut out,
            n,
            1,
            0.0,
        );
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul { a, b, tb }, ng))
    }

    /// Batched product: `a: [B×m×k]` with `b: [B×k×n]`, or `b: [B×n×k]` read transposed.
    pub fn bmm(&mut self, a: Var, b: Var, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::shape("bmm", sa, sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if tb { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != kb {
            return Err(Error::shape("bmm", sa, sb));
        }
        let bcols = sb[2];
        let mut out = vec![0.0; batch * m * n];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    View::plain(&av[i * m * k..(i + 1) * m * k], k),
                    View::maybe_t(&bv[i * k * n..(i + 1) * k * n], bcols, tb),
                    &mut out[i * m * n..(i + 1) * m * n],
                    n,
                    1,
                    0.0,
                );
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(
            Tensor::new(&[batch, m, n], out)?,
            Op::BatchMatMul { a, b, tb },
            ng,
        ))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !same_or_suffix(ta.shape(), tb.shape()) {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let bd = tb.data();
        let n = bd.len();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[i % n]))
            .collect();
        Tensor::new(ta.shape(), data)
    }

    /// Elementwise sum; `b` may be a trailing-shape bias broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add { a, b }, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Sub { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Mul { a, b }, ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(t, Op::Scale { a, s }, ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x + s);
        let ng = self.ng(a);
        self.push(t, Op::AddScalar { a }, ng)
    }

    /// `1 − a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(t, Op::Tanh { a }, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(t, Op::Sigmoid { a }, ng)
    }

    fn masked_rows(&self, a: Var, mask: Option<&[bool]>) -> Result<(Tensor, usize)> {
        let x = self.value(a);
        let cols = x.last_dim();
        let mut shifted = x.clone();
        if let Some(mask) = mask {
            if mask.len() != x.numel() {
                return Err(Error::shape("softmax mask", x.shape(), &[mask.len()]));
            }
            for (row, chunk) in mask.chunks(cols).enumerate() {
                if !chunk.iter().any(|&keep| keep) {
                    return Err(Error::DegenerateMask { row });
                }
            }
            for (v, &keep) in shifted.data_mut().iter_mut().zip(mask) {
                if !keep {
                    *v += MASK_FILL;
                }
            }
        }
        Ok((shifted, cols))
    }

    /// Softmax over the last axis. `mask[i] == false` excludes entry `i`.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (mut t, cols) = self.masked_rows(a, mask)?;
        for row in t.data_mut().chunks_mut(cols) {
            softmax_in_place(row);
        }
        let ng = self.ng(a);
        Ok(self.push(t, Op::Softmax { a }, ng))
    }

    pub fn log_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (mut t, cols) = self.masked_rows(a, mask)?;
        for row in t.data_mut().chunks_mut(cols) {
            log_softmax_in_place(row);
        }
        let ng = self.ng(a);
        Ok(self.push(t, Op::LogSoftmax { a }, ng))
    }

    /// Row lookup: `a` viewed as `[n, c]`, output `[idx.len(), c]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let c = x.last_dim();
        let n = x.numel() / c;
        if idx.is_empty() {
            return Err(Error::Contract("gather_rows with no indices".into()));
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= n {
                return Err(Error::Contract(format!("row index {i} out of range {n}")));
            }
            out.extend_from_slice(x.row(i));
        }
        let t = Tensor::new(&[idx.len(), c], out)?;
        let ng = self.ng(a);
        Ok(self.push(
            t,
            Op::Gather {
                a,
                idx: idx.to_vec(),
            },
            ng,
        ))
    }

    /// Per-row element selection: `a` viewed as `[rows, c]`, output `[rows, 1]`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let c = x.last_dim();
        let rows = x.numel() / c;
        if idx.len() != rows {
            return Err(Error::shape("pick", x.shape(), &[idx.len()]));
        }
        let mut out = Vec::with_capacity(rows);
        for (r, &j) in idx.iter().enumerate() {
            if j >= c {
                return Err(Error::Contract(format!("pick index {j} out of range {c}")));
            }
            out.push(x.data()[r * c + j]);
        }
        let t = Tensor::new(&[rows, 1], out)?;
        let ng = self.ng(a);
        Ok(self.push(
            t,
            Op::Pick {
                a,
                idx: idx.to_vec(),
            },
            ng,
        ))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::Contract("empty concat".into()))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::Contract(format!("concat axis {axis} out of range")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(ax, (x, y))| ax == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &first, s));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, inner) = outer_inner(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::Contract(format!(
                "slice [{start}, {}) on axis {axis} of {s:?}",
                start + len
            )));
        }
        let (outer, inner) = outer_inner(&s, axis);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * s[axis] + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let ng = self.ng(a);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Slice { a, axis, start },
            ng,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshaped(shape)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Reshape { a }, ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(t, Op::Sum { a }, ng)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads)?;
        }

        Ok(Gradients {
            grads,
            params: self.params.clone(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Sums a gradient of `a`'s shape down to the (suffix) shape of `b`.
    fn reduce_broadcast(&self, g: &[f64], b: Var) -> Result<Tensor> {
        let bs = self.shape(b);
        let n: usize = bs.iter().product();
        let mut out = vec![0.0; n];
        for (i, x) in g.iter().enumerate() {
            out[i % n] += x;
        }
        Tensor::new(bs, out)
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, tb } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = g.shape()[1];
                let bcols = bv.shape()[1];
                if self.ng(*a) {
                    // dA = G · op(B)ᵀ
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        View::plain(gd, n),
                        View::maybe_t(bv.data(), bcols, !tb),
                        &mut da,
                        k,
                        1,
                        0.0,
                    );
                    self.accumulate(grads, *a, Tensor::new(av.shape(), da)?);
                }
                if self.ng(*b) {
                    // d op(B) = Aᵀ · G, written transposed into B's layout when tb
                    let mut db = vec![0.0; k * n];
                    let (rs, cs) = if *tb { (1, k) } else { (n, 1) };
                    gemm(
                        k,
                        m,
                        n,
                        View::transposed(av.data(), k),
                        View::plain(gd, n),
                        &mut db,
                        rs,
                        cs,
                        0.0,
                    );
                    self.accumulate(grads, *b, Tensor::new(bv.shape(), db)?);
                }
            }
            Op::BatchMatMul { a, b, tb } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = g.shape()[2];
                let bcols = bv.shape()[2];
                if self.ng(*a) {
                    let mut da = vec![0.0; batch * m * k];
                    for i in 0..batch {
                        gemm(
                            m,
                            n,
                            k,
                            View::plain(&gd[i * m * n..(i + 1) * m * n], n),
                            View::maybe_t(&bv.data()[i * k * n..(i + 1) * k * n], bcols, !tb),
                            &mut da[i * m * k..(i + 1) * m * k],
                            k,
                            1,
                            0.0,
                        );
                    }
                    self.accumulate(grads, *a, Tensor::new(av.shape(), da)?);
                }
                if self.ng(*b) {
                    let mut db = vec![0.0; batch * k * n];
                    let (rs, cs) = if *tb { (1, k) } else { (n, 1) };
                    for i in 0..batch {
                        gemm(
                            k,
                            m,
                            n,
                            View::transposed(&av.data()[i * m * k..(i + 1) * m * k], k),
                            View::plain(&gd[i * m * n..(i + 1) * m * n], n),
                            &mut db[i * k * n..(i + 1) * k * n],
                            rs,
                            cs,
                            0.0,
                        );
                    }
                    self.accumulate(grads, *b, Tensor::new(bv.shape(), db)?);
                }
            }
            Op::Add { a, b } | Op::Sub { a, b } => {
                let sign = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
                if self.ng(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if self.ng(*b) {
                    let mut gb = self.reduce_broadcast(gd, *b)?;
                    if sign < 0.0 {
                        gb = gb.map(|x| -x);
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let nb = bv.numel();
                if self.ng(*a) {
                    let da = gd
                        .iter()
                        .enumerate()
                        .map(|(i, x)| x * bv.data()[i % nb])
                        .collect();
                    self.accumulate(grads, *a, Tensor::new(av.shape(), da)?);
                }
                if self.ng(*b) {
                    let prod: Vec<f64> = gd.iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    let db = self.reduce_broadcast(&prod, *b)?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Scale { a, s } => self.accumulate(grads, *a, g.map(|x| x * s)),
            Op::AddScalar { a } => self.accumulate(grads, *a, g.clone()),
            Op::Tanh { a } => {
                let y = &node.value;
                let d = gd.iter().zip(y.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                self.accumulate(grads, *a, Tensor::new(y.shape(), d)?);
            }
            Op::Sigmoid { a } => {
                let y = &node.value;
                let d = gd.iter().zip(y.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                self.accumulate(grads, *a, Tensor::new(y.shape(), d)?);
            }
            Op::Softmax { a } => {
                let y = &node.value;
                let cols = y.last_dim();
                let mut d = vec![0.0; y.numel()];
                for ((dr, yr), gr) in d
                    .chunks_mut(cols)
                    .zip(y.data().chunks(cols))
                    .zip(gd.chunks(cols))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((dv, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *dv = yv * (gv - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(y.shape(), d)?);
            }
            Op::LogSoftmax { a } => {
                let y = &node.value;
                let cols = y.last_dim();
                let mut d = vec![0.0; y.numel()];
                for ((dr, yr), gr) in d
                    .chunks_mut(cols)
                    .zip(y.data().chunks(cols))
                    .zip(gd.chunks(cols))
                {
                    let total: f64 = gr.iter().sum();
                    for ((dv, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *dv = gv - yv.exp() * total;
                    }
                }
                self.accumulate(grads, *a, Tensor::new(y.shape(), d)?);
            }
            Op::Gather { a, idx } => {
                let av = self.value(*a);
                let c = av.last_dim();
                let mut d = vec![0.0; av.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    for (dst, src) in d[i * c..(i + 1) * c].iter_mut().zip(&gd[r * c..(r + 1) * c]) {
                        *dst += src;
                    }
                }
                self.accumulate(grads, *a, Tensor::new(av.shape(), d)?);
            }
            Op::Pick { a, idx } => {
                let av = self.value(*a);
                let c = av.last_dim();
                let mut d = vec![0.0; av.numel()];
                for (r, &j) in idx.iter().enumerate() {
                    d[r * c + j] = gd[r];
                }
                self.accumulate(grads, *a, Tensor::new(av.shape(), d)?);
            }
            Op::Concat { parts, axis } => {
                let (outer, inner) = outer_inner(g.shape(), *axis);
                let total = g.shape()[*axis];
                let mut offset = 0;
                for &p in parts {
                    let ps = self.shape(p);
                    let chunk = ps[*axis] * inner;
                    if self.ng(p) {
                        let mut d = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            let base = o * total * inner + offset;
                            d.extend_from_slice(&gd[base..base + chunk]);
                        }
                        self.accumulate(grads, p, Tensor::new(ps, d)?);
                    }
                    offset += chunk;
                }
            }
            Op::Slice { a, axis, start } => {
                let s = self.shape(*a);
                let (outer, inner) = outer_inner(s, *axis);
                let len = g.shape()[*axis];
                let mut d = vec![0.0; s.iter().product()];
                for o in 0..outer {
                    let dst = (o * s[*axis] + start) * inner;
                    let src = o * len * inner;
                    d[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
                }
                self.accumulate(grads, *a, Tensor::new(s, d)?);
            }
            Op::Reshape { a } => {
                let s = self.shape(*a);
                self.accumulate(grads, *a, g.reshaped(s)?);
            }
            Op::Sum { a } => {
                let s = self.shape(*a);
                self.accumulate(grads, *a, Tensor::full(s, gd[0]));
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Result of a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(String, Var)>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Total derivative with respect to `v`; zeros when `v` is unreachable from the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    /// Gradients of every named parameter recorded on the tape.
    pub fn by_name(&self) -> BTreeMap<String, Tensor> {
        let mut out: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, v) in &self.params {
            let g = self.wrt(*v);
            match out.get_mut(name) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    out.insert(name.clone(), g);
                }
            }
        }
        out
    }
}
