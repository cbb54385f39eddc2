//! Reverse-mode autodiff over a flat tape of tensor nodes.
//!
//! Values are computed eagerly when a node is appended, so graph node ids
//! already form a topological order and `backward` is a single reverse
//! sweep. Node values are row-major `rows x cols` buffers; vectors use
//! `rows = 1`. Gradient buffers are allocated lazily, which keeps
//! forward-only use (inference) free of backward bookkeeping.

use std::sync::Arc;

use crate::scalar::Scalar;

pub type NodeId = usize;

/// Boolean attention mask: `allowed(i, j)` says whether query row `i` may
/// attend to key row `j`. Disallowed pairs are skipped entirely inside the
/// attention op, which implements the additive `-inf` sentinel exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    allowed: Vec<bool>,
    rows: usize,
    cols: usize,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                allowed.push(f(i, j));
            }
        }
        Self { allowed, rows, cols }
    }

    /// Plain lower-triangular causal mask.
    pub fn causal(n: usize) -> Self {
        Self::new(n, n, |i, j| j <= i)
    }

    #[inline]
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Count of allowed key positions for query row `i`.
    pub fn row_degree(&self, i: usize) -> usize {
        (0..self.cols).filter(|&j| self.allowed(i, j)).count()
    }
}

enum Op<F: Scalar> {
    Leaf,
    GatherRows { src: NodeId, rows: Vec<usize> },
    SliceRows { src: NodeId, start: usize },
    Affine { x: NodeId, w: NodeId, b: Option<NodeId> },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: F },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, stats: Vec<(F, F)> },
    Gelu { x: NodeId },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        mask: Option<Arc<AttentionMask>>,
        weights: Vec<F>,
    },
    LogSoftmaxRows { x: NodeId },
    GatherElems { src: NodeId, idx: Vec<(usize, usize)> },
    Concat { parts: Vec<NodeId> },
    Sum { x: NodeId },
    LogSumExp { x: NodeId },
    Sigmoid { x: NodeId },
    BceMean { s: NodeId, labels: Vec<F> },
}

struct Node<F: Scalar> {
    value: Vec<F>,
    rows: usize,
    cols: usize,
    op: Op<F>,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Grads<F: Scalar> {
    by_node: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Grads<F> {
    /// Gradient buffer for `id`, or `None` if the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&[F]> {
        self.by_node[id].as_deref()
    }
}

pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[F] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> F {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        (self.nodes[id].rows, self.nodes[id].cols)
    }

    /// Row `i` of a 2-D node.
    pub fn row(&self, id: NodeId, i: usize) -> &[F] {
        let cols = self.nodes[id].cols;
        &self.nodes[id].value[i * cols..(i + 1) * cols]
    }

    fn push(&mut self, value: Vec<F>, rows: usize, cols: usize, op: Op<F>) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { value, rows, cols, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Vec<F>, rows: usize, cols: usize) -> NodeId {
        self.push(value, rows, cols, Op::Leaf)
    }

    pub fn gather_rows(&mut self, src: NodeId, rows: Vec<usize>) -> NodeId {
        let cols = self.nodes[src].cols;
        let mut value = Vec::with_capacity(rows.len() * cols);
        for &r in &rows {
            value.extend_from_slice(self.row(src, r));
        }
        let n = rows.len();
        self.push(value, n, cols, Op::GatherRows { src, rows })
    }

    /// Contiguous row window `[start, start + len)` of `src`.
    pub fn slice_rows(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let cols = self.nodes[src].cols;
        let value = self.nodes[src].value[start * cols..(start + len) * cols].to_vec();
        self.push(value, len, cols, Op::SliceRows { src, start })
    }

    /// `y = x * w^T (+ b)`, with `w` stored `out x in` and `b` a length-`out`
    /// row vector.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        let (n, d_in) = self.shape(x);
        let (d_out, wi) = self.shape(w);
        debug_assert_eq!(d_in, wi, "affine input width");
        if let Some(b) = b {
            debug_assert_eq!(self.nodes[b].value.len(), d_out, "affine bias width");
        }
        let mut value = vec![F::zero(); n * d_out];
        for i in 0..n {
            let xi = self.row(x, i);
            for o in 0..d_out {
                let wo = self.row(w, o);
                let mut acc = F::zero();
                for (a, b) in xi.iter().zip(wo) {
                    acc += *a * *b;
                }
                value[i * d_out + o] = acc;
            }
            if let Some(bn) = b {
                for o in 0..d_out {
                    let bias = self.nodes[bn].value[o];
                    value[i * d_out + o] += bias;
                }
            }
        }
        self.push(value, n, d_out, Op::Affine { x, w, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.shape(a), self.shape(b));
        let value: Vec<F> = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| *x + *y)
            .collect();
        let (r, c) = self.shape(a);
        self.push(value, r, c, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.shape(a), self.shape(b));
        let value: Vec<F> = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| *x - *y)
            .collect();
        let (r, c) = self.shape(a);
        self.push(value, r, c, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        debug_assert_eq!(self.shape(a), self.shape(b));
        let value: Vec<F> = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| *x * *y)
            .collect();
        let (r, c) = self.shape(a);
        self.push(value, r, c, Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: NodeId, c: F) -> NodeId {
        let value: Vec<F> = self.nodes[x].value.iter().map(|v| *v * c).collect();
        let (r, co) = self.shape(x);
        self.push(value, r, co, Op::Scale { x, c })
    }

    /// Row-wise layer norm with learned gain and bias, eps 1e-5.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let (n, d) = self.shape(x);
        debug_assert_eq!(self.nodes[gamma].value.len(), d);
        debug_assert_eq!(self.nodes[beta].value.len(), d);
        let eps = F::from_f64(1e-5);
        let inv_d = F::from_f64(1.0 / d as f64);
        let mut value = vec![F::zero(); n * d];
        let mut stats = Vec::with_capacity(n);
        for i in 0..n {
            let xi = self.row(x, i);
            let mut mean = F::zero();
            for v in xi {
                mean += *v;
            }
            mean = mean * inv_d;
            let mut var = F::zero();
            for v in xi {
                let dlt = *v - mean;
                var += dlt * dlt;
            }
            var = var * inv_d;
            let inv_std = (var + eps).sqrt().recip();
            for j in 0..d {
                let norm = (xi[j] - mean) * inv_std;
                value[i * d + j] = norm * self.nodes[gamma].value[j] + self.nodes[beta].value[j];
            }
            stats.push((mean, inv_std));
        }
        self.push(value, n, d, Op::LayerNorm { x, gamma, beta, stats })
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value: Vec<F> = self.nodes[x].value.iter().map(|&v| gelu_fwd(v)).collect();
        let (r, c) = self.shape(x);
        self.push(value, r, c, Op::Gelu { x })
    }

    /// Multi-head scaled dot-product attention. `q` is `nq x d`, `k`/`v` are
    /// `nk x d`; with no mask every query attends every key. Softmax weights
    /// are cached for the backward sweep.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        mask: Option<Arc<AttentionMask>>,
    ) -> NodeId {
        let (nq, d) = self.shape(q);
        let (nk, dk) = self.shape(k);
        debug_assert_eq!(d, dk);
        debug_assert_eq!(self.shape(v), (nk, d));
        debug_assert_eq!(d % heads, 0);
        if let Some(m) = &mask {
            debug_assert_eq!((m.rows(), m.cols()), (nq, nk));
        }
        let hd = d / heads;
        let scale = F::from_f64(1.0 / (hd as f64).sqrt());

        let mut value = vec![F::zero(); nq * d];
        let mut weights = vec![F::zero(); heads * nq * nk];
        let mut logits = vec![F::zero(); nk];
        for h in 0..heads {
            let off = h * hd;
            for i in 0..nq {
                let qi = &self.row(q, i)[off..off + hd];
                let mut maxv = F::neg_infinity();
                for j in 0..nk {
                    if mask.as_ref().is_some_and(|m| !m.allowed(i, j)) {
                        continue;
                    }
                    let kj = &self.row(k, j)[off..off + hd];
                    let mut acc = F::zero();
                    for (a, b) in qi.iter().zip(kj) {
                        acc += *a * *b;
                    }
                    let logit = acc * scale;
                    logits[j] = logit;
                    if logit > maxv {
                        maxv = logit;
                    }
                }
                if maxv == F::neg_infinity() {
                    continue; // fully masked row, output stays zero
                }
                let mut denom = F::zero();
                let wrow = &mut weights[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                for j in 0..nk {
                    if mask.as_ref().is_some_and(|m| !m.allowed(i, j)) {
                        wrow[j] = F::zero();
                        continue;
                    }
                    let e = (logits[j] - maxv).exp();
                    wrow[j] = e;
                    denom += e;
                }
                let inv = denom.recip();
                for j in 0..nk {
                    wrow[j] = wrow[j] * inv;
                }
                let out = &mut value[i * d + off..i * d + off + hd];
                for j in 0..nk {
                    let a = wrow[j];
                    if a == F::zero() {
                        continue;
                    }
                    let vj = &self.nodes[v].value[j * d + off..j * d + off + hd];
                    for (o, x) in out.iter_mut().zip(vj) {
                        *o += a * *x;
                    }
                }
            }
        }
        self.push(value, nq, d, Op::Attention { q, k, v, heads, mask, weights })
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let (n, d) = self.shape(x);
        let mut value = vec![F::zero(); n * d];
        for i in 0..n {
            let xi = self.row(x, i);
            let mut maxv = F::neg_infinity();
            for v in xi {
                if *v > maxv {
                    maxv = *v;
                }
            }
            let mut denom = F::zero();
            for v in xi {
                denom += (*v - maxv).exp();
            }
            let lse = maxv + denom.ln();
            for j in 0..d {
                value[i * d + j] = xi[j] - lse;
            }
        }
        self.push(value, n, d, Op::LogSoftmaxRows { x })
    }

    /// Pick individual elements `(row, col)` of a 2-D node into a vector.
    pub fn gather_elems(&mut self, src: NodeId, idx: Vec<(usize, usize)>) -> NodeId {
        let cols = self.nodes[src].cols;
        let value: Vec<F> = idx
            .iter()
            .map(|&(r, c)| self.nodes[src].value[r * cols + c])
            .collect();
        let n = idx.len();
        self.push(value, 1, n, Op::GatherElems { src, idx })
    }

    /// Concatenate 1-D nodes.
    pub fn concat(&mut self, parts: Vec<NodeId>) -> NodeId {
        let mut value = Vec::new();
        for &p in &parts {
            value.extend_from_slice(&self.nodes[p].value);
        }
        let n = value.len();
        self.push(value, 1, n, Op::Concat { parts })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let mut acc = F::zero();
        for v in &self.nodes[x].value {
            acc += *v;
        }
        self.push(vec![acc], 1, 1, Op::Sum { x })
    }

    /// `log(sum(exp(x)))` over every element, computed stably.
    pub fn log_sum_exp(&mut self, x: NodeId) -> NodeId {
        let mut maxv = F::neg_infinity();
        for v in &self.nodes[x].value {
            if *v > maxv {
                maxv = *v;
            }
        }
        let mut denom = F::zero();
        for v in &self.nodes[x].value {
            denom += (*v - maxv).exp();
        }
        let value = maxv + denom.ln();
        self.push(vec![value], 1, 1, Op::LogSumExp { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value: Vec<F> = self.nodes[x].value.iter().map(|&v| sigmoid_fwd(v)).collect();
        let (r, c) = self.shape(x);
        self.push(value, r, c, Op::Sigmoid { x })
    }

    /// Mean binary cross-entropy against fixed labels, probabilities clamped
    /// to `[1e-7, 1 - 1e-7]`.
    pub fn bce_mean(&mut self, s: NodeId, labels: Vec<F>) -> NodeId {
        debug_assert_eq!(self.nodes[s].value.len(), labels.len());
        let eps = F::from_f64(1e-7);
        let one = F::one();
        let n = labels.len();
        let mut acc = F::zero();
        for (p, y) in self.nodes[s].value.iter().zip(&labels) {
            let pc = clamp(*p, eps, one - eps);
            acc += -(*y * pc.ln() + (one - *y) * (one - pc).ln());
        }
        let value = acc / F::from_f64(n as f64);
        self.push(vec![value], 1, 1, Op::BceMean { s, labels })
    }

    /// Reverse sweep from a scalar `root`; returns per-node gradients.
    pub fn backward(&self, root: NodeId) -> Grads<F> {
        assert_eq!(self.nodes[root].value.len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        grads[root] = Some(vec![F::one()]);

        for id in (0..=root).rev() {
            let Some(gy) = grads[id].take() else { continue };
            self.backward_node(id, &gy, &mut grads);
            grads[id] = Some(gy);
        }
        Grads { by_node: grads }
    }

    fn grad_buf<'a>(
        &self,
        grads: &'a mut Vec<Option<Vec<F>>>,
        id: NodeId,
    ) -> &'a mut Vec<F> {
        let len = self.nodes[id].value.len();
        grads[id].get_or_insert_with(|| vec![F::zero(); len])
    }

    fn backward_node(&self, id: NodeId, gy: &[F], grads: &mut Vec<Option<Vec<F>>>) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::GatherRows { src, rows } => {
                let cols = self.nodes[*src].cols;
                let gsrc = self.grad_buf(grads, *src);
                for (i, &r) in rows.iter().enumerate() {
                    for c in 0..cols {
                        gsrc[r * cols + c] += gy[i * cols + c];
                    }
                }
            }
            Op::SliceRows { src, start } => {
                let cols = self.nodes[*src].cols;
                let gsrc = self.grad_buf(grads, *src);
                for (i, g) in gy.iter().enumerate() {
                    gsrc[start * cols + i] += *g;
                }
            }
            Op::Affine { x, w, b } => {
                let (n, d_in) = self.shape(*x);
                let d_out = self.nodes[*w].rows;
                {
                    let gx = self.grad_buf(grads, *x);
                    for i in 0..n {
                        for o in 0..d_out {
                            let g = gy[i * d_out + o];
                            if g == F::zero() {
                                continue;
                            }
                            let wo = &self.nodes[*w].value[o * d_in..(o + 1) * d_in];
                            let gxi = &mut gx[i * d_in..(i + 1) * d_in];
                            for (gv, wv) in gxi.iter_mut().zip(wo) {
                                *gv += g * *wv;
                            }
                        }
                    }
                }
                {
                    let gw = self.grad_buf(grads, *w);
                    for i in 0..n {
                        let xi = &self.nodes[*x].value[i * d_in..(i + 1) * d_in];
                        for o in 0..d_out {
                            let g = gy[i * d_out + o];
                            if g == F::zero() {
                                continue;
                            }
                            let gwo = &mut gw[o * d_in..(o + 1) * d_in];
                            for (gv, xv) in gwo.iter_mut().zip(xi) {
                                *gv += g * *xv;
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    let gb = self.grad_buf(grads, *b);
                    for i in 0..n {
                        for o in 0..d_out {
                            gb[o] += gy[i * d_out + o];
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for &p in &[*a, *b] {
                    let gp = self.grad_buf(grads, p);
                    for (g, y) in gp.iter_mut().zip(gy) {
                        *g += *y;
                    }
                }
            }
            Op::Sub { a, b } => {
                {
                    let ga = self.grad_buf(grads, *a);
                    for (g, y) in ga.iter_mut().zip(gy) {
                        *g += *y;
                    }
                }
                let gb = self.grad_buf(grads, *b);
                for (g, y) in gb.iter_mut().zip(gy) {
                    *g -= *y;
                }
            }
            Op::Mul { a, b } => {
                {
                    let ga = self.grad_buf(grads, *a);
                    for ((g, y), bv) in ga.iter_mut().zip(gy).zip(&self.nodes[*b].value) {
                        *g += *y * *bv;
                    }
                }
                let gb = self.grad_buf(grads, *b);
                for ((g, y), av) in gb.iter_mut().zip(gy).zip(&self.nodes[*a].value) {
                    *g += *y * *av;
                }
            }
            Op::Scale { x, c } => {
                let gx = self.grad_buf(grads, *x);
                for (g, y) in gx.iter_mut().zip(gy) {
                    *g += *y * *c;
                }
            }
            Op::LayerNorm { x, gamma, beta, stats } => {
                let (n, d) = self.shape(*x);
                let inv_d = F::from_f64(1.0 / d as f64);
                for i in 0..n {
                    let (mean, inv_std) = stats[i];
                    let xi = &self.nodes[*x].value[i * d..(i + 1) * d];
                    let gyi = &gy[i * d..(i + 1) * d];

                    // accumulate the two row reductions over dxhat
                    let mut sum_dxhat = F::zero();
                    let mut sum_dxhat_xhat = F::zero();
                    for j in 0..d {
                        let xhat = (xi[j] - mean) * inv_std;
                        let dxhat = gyi[j] * self.nodes[*gamma].value[j];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    {
                        let gx = self.grad_buf(grads, *x);
                        for j in 0..d {
                            let xhat = (xi[j] - mean) * inv_std;
                            let dxhat = gyi[j] * self.nodes[*gamma].value[j];
                            gx[i * d + j] += inv_std
                                * (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
                        }
                    }
                    {
                        let gg = self.grad_buf(grads, *gamma);
                        for j in 0..d {
                            let xhat = (xi[j] - mean) * inv_std;
                            gg[j] += gyi[j] * xhat;
                        }
                    }
                    let gb = self.grad_buf(grads, *beta);
                    for j in 0..d {
                        gb[j] += gyi[j];
                    }
                }
            }
            Op::Gelu { x } => {
                let gx = self.grad_buf(grads, *x);
                for ((g, y), v) in gx.iter_mut().zip(gy).zip(&self.nodes[*x].value) {
                    *g += *y * gelu_bwd(*v);
                }
            }
            Op::Attention { q, k, v, heads, mask, weights } => {
                let (nq, d) = self.shape(*q);
                let nk = self.nodes[*k].rows;
                let hd = d / heads;
                let scale = F::from_f64(1.0 / (hd as f64).sqrt());
                for h in 0..*heads {
                    let off = h * hd;
                    for i in 0..nq {
                        let wrow = &weights[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                        let gyi = &gy[i * d + off..i * d + off + hd];

                        // da_j = dY_i . V_j ; s = sum_j a_j da_j
                        let mut da = vec![F::zero(); nk];
                        let mut s = F::zero();
                        for j in 0..nk {
                            if wrow[j] == F::zero()
                                && mask.as_ref().is_some_and(|m| !m.allowed(i, j))
                            {
                                continue;
                            }
                            let vj = &self.nodes[*v].value[j * d + off..j * d + off + hd];
                            let mut acc = F::zero();
                            for (a, b) in gyi.iter().zip(vj) {
                                acc += *a * *b;
                            }
                            da[j] = acc;
                            s += wrow[j] * acc;
                        }
                        {
                            let gv = self.grad_buf(grads, *v);
                            for j in 0..nk {
                                let a = wrow[j];
                                if a == F::zero() {
                                    continue;
                                }
                                let gvj = &mut gv[j * d + off..j * d + off + hd];
                                for (g, y) in gvj.iter_mut().zip(gyi) {
                                    *g += a * *y;
                                }
                            }
                        }
                        let qi: Vec<F> = self.row(*q, i)[off..off + hd].to_vec();
                        {
                            let gq = self.grad_buf(grads, *q);
                            let gqi = &mut gq[i * d + off..i * d + off + hd];
                            for j in 0..nk {
                                let a = wrow[j];
                                if a == F::zero() {
                                    continue;
                                }
                                let dlogit = a * (da[j] - s) * scale;
                                let kj = &self.nodes[*k].value[j * d + off..j * d + off + hd];
                                for (g, kv) in gqi.iter_mut().zip(kj) {
                                    *g += dlogit * *kv;
                                }
                            }
                        }
                        let gk = self.grad_buf(grads, *k);
                        for j in 0..nk {
                            let a = wrow[j];
                            if a == F::zero() {
                                continue;
                            }
                            let dlogit = a * (da[j] - s) * scale;
                            let gkj = &mut gk[j * d + off..j * d + off + hd];
                            for (g, qv) in gkj.iter_mut().zip(&qi) {
                                *g += dlogit * *qv;
                            }
                        }
                    }
                }
            }
            Op::LogSoftmaxRows { x } => {
                let (n, d) = self.shape(id);
                let gx = self.grad_buf(grads, *x);
                for i in 0..n {
                    let mut total = F::zero();
                    for j in 0..d {
                        total += gy[i * d + j];
                    }
                    for j in 0..d {
                        let p = self.nodes[id].value[i * d + j].exp();
                        gx[i * d + j] += gy[i * d + j] - p * total;
                    }
                }
            }
            Op::GatherElems { src, idx } => {
                let cols = self.nodes[*src].cols;
                let gsrc = self.grad_buf(grads, *src);
                for (i, &(r, c)) in idx.iter().enumerate() {
                    gsrc[r * cols + c] += gy[i];
                }
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].value.len();
                    let gp = self.grad_buf(grads, p);
                    for (g, y) in gp.iter_mut().zip(&gy[offset..offset + len]) {
                        *g += *y;
                    }
                    offset += len;
                }
            }
            Op::Sum { x } => {
                let gx = self.grad_buf(grads, *x);
                for g in gx.iter_mut() {
                    *g += gy[0];
                }
            }
            Op::LogSumExp { x } => {
                let lse = self.nodes[id].value[0];
                let gx = self.grad_buf(grads, *x);
                for (g, v) in gx.iter_mut().zip(&self.nodes[*x].value) {
                    *g += gy[0] * (*v - lse).exp();
                }
            }
            Op::Sigmoid { x } => {
                let gx = self.grad_buf(grads, *x);
                for ((g, y), s) in gx.iter_mut().zip(gy).zip(&self.nodes[id].value) {
                    *g += *y * *s * (F::one() - *s);
                }
            }
            Op::BceMean { s, labels } => {
                let eps = F::from_f64(1e-7);
                let one = F::one();
                let inv_n = F::from_f64(1.0 / labels.len() as f64);
                let gs = self.grad_buf(grads, *s);
                for ((g, y), p) in gs.iter_mut().zip(labels).zip(&self.nodes[*s].value) {
                    if *p <= eps || *p >= one - eps {
                        continue; // clamped region has zero slope
                    }
                    *g += gy[0] * inv_n * (*p - *y) / (*p * (one - *p));
                }
            }
        }
    }
}

fn clamp<F: Scalar>(v: F, lo: F, hi: F) -> F {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

/// tanh-form GELU.
fn gelu_fwd<F: Scalar>(x: F) -> F {
    let a = F::from_f64(0.7978845608028654); // sqrt(2/pi)
    let b = F::from_f64(0.044715);
    let half = F::from_f64(0.5);
    let u = a * (x + b * x * x * x);
    half * x * (F::one() + u.tanh())
}

fn gelu_bwd<F: Scalar>(x: F) -> F {
    let a = F::from_f64(0.7978845608028654);
    let b = F::from_f64(0.044715);
    let half = F::from_f64(0.5);
    let three = F::from_f64(3.0);
    let u = a * (x + b * x * x * x);
    let t = u.tanh();
    let sech2 = F::one() - t * t;
    half * (F::one() + t) + half * x * sech2 * a * (F::one() + three * b * x * x)
}

fn sigmoid_fwd<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        (F::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences on the leaves of a rebuilt graph.
    fn fd_check(
        leaves: &[Vec<f64>],
        shapes: &[(usize, usize)],
        build: impl Fn(&mut Graph<f64>, &[NodeId]) -> NodeId,
        tol: f64,
    ) {
        let eval = |vals: &[Vec<f64>]| -> f64 {
            let mut g = Graph::new();
            let ids: Vec<NodeId> = vals
                .iter()
                .zip(shapes)
                .map(|(v, &(r, c))| g.leaf(v.clone(), r, c))
                .collect();
            let root = build(&mut g, &ids);
            g.scalar(root)
        };

        let mut g = Graph::new();
        let ids: Vec<NodeId> = leaves
            .iter()
            .zip(shapes)
            .map(|(v, &(r, c))| g.leaf(v.clone(), r, c))
            .collect();
        let root = build(&mut g, &ids);
        let grads = g.backward(root);

        let h = 1e-6;
        for (li, leaf) in leaves.iter().enumerate() {
            let ga = grads.get(ids[li]).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; leaf.len()]);
            for j in 0..leaf.len() {
                let mut plus = leaves.to_vec();
                plus[li][j] += h;
                let mut minus = leaves.to_vec();
                minus[li][j] -= h;
                let gn = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let denom = ga[j].abs().max(gn.abs()).max(1e-6);
                assert!(
                    (ga[j] - gn).abs() / denom < tol,
                    "leaf {li} elem {j}: analytic {} vs numeric {gn}",
                    ga[j]
                );
            }
        }
    }

    fn pseudo(vals: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        (0..vals)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn affine_matches_finite_differences() {
        fd_check(
            &[pseudo(6, 1), pseudo(12, 2), pseudo(4, 3)],
            &[(2, 3), (4, 3), (1, 4)],
            |g, ids| {
                let y = g.affine(ids[0], ids[1], Some(ids[2]));
                g.sum(y)
            },
            1e-6,
        );
    }

    #[test]
    fn layer_norm_matches_finite_differences() {
        fd_check(
            &[pseudo(8, 4), pseudo(4, 5), pseudo(4, 6)],
            &[(2, 4), (1, 4), (1, 4)],
            |g, ids| {
                let y = g.layer_norm(ids[0], ids[1], ids[2]);
                let s = g.gelu(y);
                g.sum(s)
            },
            1e-5,
        );
    }

    #[test]
    fn attention_matches_finite_differences() {
        let mask = Arc::new(AttentionMask::causal(3));
        fd_check(
            &[pseudo(12, 7), pseudo(12, 8), pseudo(12, 9)],
            &[(3, 4), (3, 4), (3, 4)],
            move |g, ids| {
                let y = g.attention(ids[0], ids[1], ids[2], 2, Some(mask.clone()));
                g.sum(y)
            },
            1e-5,
        );
    }

    #[test]
    fn attention_unmasked_rectangular() {
        fd_check(
            &[pseudo(4, 10), pseudo(20, 11), pseudo(20, 12)],
            &[(1, 4), (5, 4), (5, 4)],
            |g, ids| {
                let y = g.attention(ids[0], ids[1], ids[2], 1, None);
                g.sum(y)
            },
            1e-5,
        );
    }

    #[test]
    fn log_softmax_and_gather_match_finite_differences() {
        fd_check(
            &[pseudo(10, 13)],
            &[(2, 5)],
            |g, ids| {
                let ls = g.log_softmax_rows(ids[0]);
                let picked = g.gather_elems(ls, vec![(0, 2), (1, 4)]);
                g.sum(picked)
            },
            1e-6,
        );
    }

    #[test]
    fn lse_sigmoid_bce_match_finite_differences() {
        fd_check(
            &[pseudo(5, 14)],
            &[(1, 5)],
            |g, ids| {
                let s = g.sigmoid(ids[0]);
                let bce = g.bce_mean(s, vec![1.0, 0.0, 0.0, 1.0, 0.0]);
                let lse = g.log_sum_exp(ids[0]);
                g.add(bce, lse)
            },
            1e-6,
        );
    }

    #[test]
    fn gather_slice_concat_match_finite_differences() {
        fd_check(
            &[pseudo(12, 15)],
            &[(4, 3)],
            |g, ids| {
                let ga = g.gather_rows(ids[0], vec![2, 0, 2]);
                let sl = g.slice_rows(ids[0], 1, 2);
                let a = g.sum(ga);
                let b = g.sum(sl);
                let m = g.mul(a, b);
                let sc = g.scale(m, 0.5);
                let d = g.sub(sc, a);
                let cat = g.concat(vec![d, a, b]);
                g.sum(cat)
            },
            1e-6,
        );
    }

    #[test]
    fn fully_masked_query_row_outputs_zero() {
        let mut g: Graph<f64> = Graph::new();
        let q = g.leaf(pseudo(4, 20), 2, 2);
        let k = g.leaf(pseudo(4, 21), 2, 2);
        let v = g.leaf(pseudo(4, 22), 2, 2);
        let mask = Arc::new(AttentionMask::new(2, 2, |i, _| i == 1));
        let y = g.attention(q, k, v, 1, Some(mask));
        assert_eq!(&g.value(y)[0..2], &[0.0, 0.0]);
        assert!(g.value(y)[2..4].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_of_independent_leaf_is_absent() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.leaf(vec![1.0, 2.0], 1, 2);
        let b = g.leaf(vec![3.0, 4.0], 1, 2);
        let s = g.sum(a);
        let grads = g.backward(s);
        assert_eq!(grads.get(a), Some([1.0, 1.0].as_slice()));
        assert!(grads.get(b).is_none());
    }
}
