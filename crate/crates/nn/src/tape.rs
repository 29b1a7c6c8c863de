//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its output value and whatever the backward rule needs (softmax
//! probabilities, layer-norm statistics, dropout masks). [`Tape::backward`]
//! walks the nodes in reverse and accumulates vector-Jacobian products.
//! Parameters are borrowed, not copied: a parameter node reads its value from
//! the [`Parameters`] the tape was built over, and its gradient lands in the
//! returned [`Gradients`] at the same index.
//!
//! All tensors are treated as matrices over their last axis, so a
//! `[batch, len, d]` activation is a `[batch * len, d]` matrix to every op.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::NnError;
use crate::params::{Gradients, ParamId, Parameters};
use crate::tensor::{gemm, MatView, Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Shape and masking of one multi-head attention call.
///
/// Queries are `[batch * q_len, d]`, keys and values `[batch * k_len, d]`.
/// `key_pad[b * k_len + j]` hides key `j` of batch row `b`; `causal` hides
/// keys to the right of each query.
#[derive(Clone, Debug)]
pub struct AttnMask {
    pub batch: usize,
    pub heads: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub causal: bool,
    pub key_pad: Vec<bool>,
}

enum Op<F> {
    Param(ParamId),
    Constant,
    Embedding {
        table: Var,
        ids: Vec<u32>,
        scale: F,
    },
    Add(Var, Var),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Relu(Var),
    Scale(Var, F),
    Dropout(Var, Vec<F>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        mask: AttnMask,
        probs: Vec<F>,
        drop: Option<Vec<F>>,
    },
    SelectRows(Var, Vec<usize>),
    Reshape(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<u32>,
        pad: u32,
        probs: Vec<F>,
        count: usize,
    },
}

impl<F> Op<F> {
    fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Constant => "constant",
            Op::Embedding { .. } => "embedding",
            Op::Add(..) => "add",
            Op::AddBias(..) => "add_bias",
            Op::MatMul(..) => "matmul",
            Op::Relu(_) => "relu",
            Op::Scale(..) => "scale",
            Op::Dropout(..) => "dropout",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Attention { .. } => "attention",
            Op::SelectRows(..) => "select_rows",
            Op::Reshape(_) => "reshape",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node<F> {
    value: Option<Tensor<F>>,
    op: Op<F>,
    needs_grad: bool,
}

pub struct Tape<'p, F: Scalar> {
    params: &'p Parameters<F>,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node<F>>,
    dropout: Option<(f64, ChaCha8Rng)>,
    checked: bool,
    nonfinite: Option<&'static str>,
}

impl<'p, F: Scalar> Tape<'p, F> {
    /// Inference tape: dropout is the identity.
    pub fn new(params: &'p Parameters<F>) -> Self {
        Tape {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
            dropout: None,
            checked: false,
            nonfinite: None,
        }
    }

    /// Training tape: dropout with rate `p`, masks drawn from `rng`.
    pub fn training(params: &'p Parameters<F>, p: f64, rng: ChaCha8Rng) -> Self {
        let mut t = Self::new(params);
        if p > 0.0 {
            t.dropout = Some((p, rng));
        }
        t
    }

    /// Records the first op that produces a non-finite value; `backward`
    /// then fails instead of propagating NaN.
    pub fn checked(mut self, on: bool) -> Self {
        self.checked = on;
        self
    }

    pub fn is_training(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn params(&self) -> &'p Parameters<F> {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    /// Attention probabilities (before dropout) of an attention node, laid
    /// out `[batch, heads, q_len, k_len]`.
    pub fn attention_probs(&self, v: Var) -> Option<&[F]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Every attention node recorded so far, in recording order.
    pub fn attention_nodes(&self) -> Vec<Var> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].op, Op::Attention { .. }))
            .map(Var)
            .collect()
    }

    pub fn check(&self) -> Result<(), NnError> {
        match self.nonfinite {
            Some(op) => Err(NnError::NonFinite(op)),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        if self.checked && self.nonfinite.is_none() && !value.all_finite() {
            self.nonfinite = Some(op.name());
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Row lookup `out[i] = scale * table[ids[i]]`.
    pub fn embedding(&mut self, table: Var, ids: &[u32], scale: F) -> Var {
        let (rows, d) = self.value(table).matrix_dims();
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            assert!(id < rows, "embedding id {id} out of range {rows}");
            out.extend(src[id * d..(id + 1) * d].iter().map(|&x| x * scale));
        }
        let needs = self.needs(table);
        self.push(
            Tensor::new(vec![ids.len(), d], out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
                scale,
            },
            needs,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.len(), tb.len(), "add: size mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(b);
        self.push(t, Op::Add(a, b), needs)
    }

    /// Adds a `[d]` bias to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let ta = self.value(a);
        let tb = self.value(bias);
        let d = tb.len();
        assert_eq!(ta.matrix_dims().1, d, "add_bias: width mismatch");
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(d) {
            for (x, &b) in row.iter_mut().zip(tb.data()) {
                *x = *x + b;
            }
        }
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(bias);
        self.push(t, Op::AddBias(a, bias), needs)
    }

    /// `[n, k] @ [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.value(a).matrix_dims();
        let (k2, m) = self.value(b).matrix_dims();
        assert_eq!(k, k2, "matmul: inner dimension");
        let mut out = vec![F::zero(); n * m];
        gemm(
            F::one(),
            self.value(a).data(),
            MatView::dense(n, k),
            self.value(b).data(),
            MatView::dense(k, m),
            F::zero(),
            &mut out,
            MatView::dense(n, m),
        );
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(vec![n, m], out), Op::MatMul(a, b), needs)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x.max(F::zero())).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a);
        self.push(t, Op::Relu(a), needs)
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x * s).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a);
        self.push(t, Op::Scale(a, s), needs)
    }

    fn dropout_mask(&mut self, n: usize) -> Option<Vec<F>> {
        let (p, rng) = self.dropout.as_mut()?;
        let keep = F::from_f64(1.0 / (1.0 - *p));
        Some(
            (0..n)
                .map(|_| if rng.random::<f64>() < *p { F::zero() } else { keep })
                .collect(),
        )
    }

    /// Inverted dropout; identity on inference tapes.
    pub fn dropout(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let Some(mask) = self.dropout_mask(n) else {
            return a;
        };
        let ta = self.value(a);
        let data = ta.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        let needs = self.needs(a);
        self.push(t, Op::Dropout(a, mask), needs)
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let tx = self.value(x);
        let (rows, d) = tx.matrix_dims();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        assert_eq!(g.len(), d);
        let eps = F::from_f64(LAYER_NORM_EPS);
        let inv_d = F::from_f64(1.0 / d as f64);
        let mut out = vec![F::zero(); rows * d];
        let mut xhat = vec![F::zero(); rows * d];
        let mut rstd = vec![F::zero(); rows];
        for r in 0..rows {
            let row = &tx.data()[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<F>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
            let rs = F::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out);
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            needs,
        )
    }

    /// Scaled dot-product multi-head attention over already projected
    /// queries, keys and values. Attention weights get dropout on training
    /// tapes when `use_dropout` is set.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: AttnMask, use_dropout: bool) -> Var {
        let AttnMask {
            batch,
            heads,
            q_len,
            k_len,
            ..
        } = mask;
        let d = self.value(q).matrix_dims().1;
        assert_eq!(d % heads, 0, "attention: width not divisible by heads");
        assert_eq!(self.value(q).len(), batch * q_len * d, "attention: query shape");
        assert_eq!(self.value(k).len(), batch * k_len * d, "attention: key shape");
        assert_eq!(self.value(v).len(), batch * k_len * d, "attention: value shape");
        assert_eq!(mask.key_pad.len(), batch * k_len, "attention: key mask shape");
        let dh = d / heads;
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let plane = q_len * k_len;
        let mut probs = vec![F::zero(); batch * heads * plane];
        {
            let (tq, tk) = (self.value(q).data(), self.value(k).data());
            for b in 0..batch {
                for h in 0..heads {
                    let off = (b * heads + h) * plane;
                    gemm(
                        scale,
                        tq,
                        head_view(b, h, q_len, d, dh),
                        tk,
                        head_view(b, h, k_len, d, dh).t(),
                        F::zero(),
                        &mut probs,
                        MatView::dense(q_len, k_len).at(off),
                    );
                    for i in 0..q_len {
                        let row = &mut probs[off + i * k_len..off + (i + 1) * k_len];
                        let visible = |j: usize| !mask.key_pad[b * k_len + j] && !(mask.causal && j > i);
                        let mut max = F::neg_infinity();
                        for (j, &s) in row.iter().enumerate() {
                            if visible(j) && s > max {
                                max = s;
                            }
                        }
                        if max == F::neg_infinity() {
                            row.iter_mut().for_each(|x| *x = F::zero());
                            continue;
                        }
                        let mut sum = F::zero();
                        for (j, s) in row.iter_mut().enumerate() {
                            *s = if visible(j) { (*s - max).exp() } else { F::zero() };
                            sum = sum + *s;
                        }
                        let inv = F::one() / sum;
                        row.iter_mut().for_each(|x| *x = *x * inv);
                    }
                }
            }
        }
        let drop = if use_dropout {
            self.dropout_mask(probs.len())
        } else {
            None
        };
        let weights: Vec<F> = match &drop {
            Some(m) => probs.iter().zip(m).map(|(&p, &m)| p * m).collect(),
            None => Vec::new(),
        };
        let w: &[F] = if drop.is_some() { &weights } else { &probs };
        let mut out = vec![F::zero(); batch * q_len * d];
        let tv = self.value(v).data();
        for b in 0..batch {
            for h in 0..heads {
                gemm(
                    F::one(),
                    w,
                    MatView::dense(q_len, k_len).at((b * heads + h) * plane),
                    tv,
                    head_view(b, h, k_len, d, dh),
                    F::zero(),
                    &mut out,
                    head_view(b, h, q_len, d, dh),
                );
            }
        }
        let t = Tensor::new(vec![batch * q_len, d], out);
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        self.push(
            t,
            Op::Attention {
                q,
                k,
                v,
                mask,
                probs,
                drop,
            },
            needs,
        )
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let ta = self.value(a);
        let (n, d) = ta.matrix_dims();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            assert!(r < n, "select_rows: row {r} out of range {n}");
            out.extend_from_slice(&ta.data()[r * d..(r + 1) * d]);
        }
        let needs = self.needs(a);
        self.push(
            Tensor::new(vec![rows.len(), d], out),
            Op::SelectRows(a, rows.to_vec()),
            needs,
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let data = self.value(a).data().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::new(shape.to_vec(), data), Op::Reshape(a), needs)
    }

    /// Mean token-level cross-entropy over rows whose target is not `pad`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32], pad: u32) -> Result<Var, NnError> {
        let tl = self.value(logits);
        let (n, vocab) = tl.matrix_dims();
        if targets.len() != n {
            return Err(NnError::Shape(format!(
                "cross_entropy: {} targets for {n} rows",
                targets.len()
            )));
        }
        let count = targets.iter().filter(|&&t| t != pad).count();
        if count == 0 {
            return Err(NnError::AllPadding);
        }
        let mut probs = vec![F::zero(); n * vocab];
        let mut total = 0.0f64;
        for (r, &t) in targets.iter().enumerate() {
            if t == pad {
                continue;
            }
            if t as usize >= vocab {
                return Err(NnError::TokenOutOfRange { id: t, vocab });
            }
            let row = &tl.data()[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            let pr = &mut probs[r * vocab..(r + 1) * vocab];
            for (p, &x) in pr.iter_mut().zip(row) {
                *p = (x - max).exp();
                sum = sum + *p;
            }
            let inv = F::one() / sum;
            pr.iter_mut().for_each(|p| *p = *p * inv);
            let lse = max + sum.ln();
            total += (lse - row[t as usize]).to_f64();
        }
        let loss = F::from_f64(total / count as f64);
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                pad,
                probs,
                count,
            },
            needs,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    /// Parameters the loss does not depend on get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>, NnError> {
        self.check()?;
        if self.value(loss).len() != 1 {
            return Err(NnError::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), F::one()));
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Param(id) => out.tensors[id.0].add_assign(&g),
                Op::Constant => {}
                Op::Embedding { table, ids, scale } => {
                    if self.needs(*table) {
                        let tt = self.value(*table);
                        let d = tt.matrix_dims().1;
                        let mut gt = Tensor::zeros(tt.shape());
                        for (i, &id) in ids.iter().enumerate() {
                            let dst = &mut gt.data_mut()[id as usize * d..(id as usize + 1) * d];
                            for (x, &y) in dst.iter_mut().zip(&g.data()[i * d..(i + 1) * d]) {
                                *x = *x + y * *scale;
                            }
                        }
                        self.acc(&mut grads, *table, gt);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        let ga = Tensor::new(self.value(*a).shape().to_vec(), g.data().to_vec());
                        self.acc(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = Tensor::new(self.value(*b).shape().to_vec(), g.data().to_vec());
                        self.acc(&mut grads, *b, gb);
                    }
                }
                Op::AddBias(a, bias) => {
                    if self.needs(*bias) {
                        let d = self.value(*bias).len();
                        let mut gb = vec![F::zero(); d];
                        for row in g.data().chunks(d) {
                            for (x, &y) in gb.iter_mut().zip(row) {
                                *x = *x + y;
                            }
                        }
                        let shape = self.value(*bias).shape().to_vec();
                        self.acc(&mut grads, *bias, Tensor::new(shape, gb));
                    }
                    if self.needs(*a) {
                        self.acc(&mut grads, *a, g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, k) = ta.matrix_dims();
                    let m = tb.matrix_dims().1;
                    if self.needs(*a) {
                        let mut ga = vec![F::zero(); n * k];
                        gemm(
                            F::one(),
                            g.data(),
                            MatView::dense(n, m),
                            tb.data(),
                            MatView::dense(k, m).t(),
                            F::zero(),
                            &mut ga,
                            MatView::dense(n, k),
                        );
                        self.acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), ga));
                    }
                    if self.needs(*b) {
                        let mut gb = vec![F::zero(); k * m];
                        gemm(
                            F::one(),
                            ta.data(),
                            MatView::dense(n, k).t(),
                            g.data(),
                            MatView::dense(n, m),
                            F::zero(),
                            &mut gb,
                            MatView::dense(k, m),
                        );
                        self.acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), gb));
                    }
                }
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    let data = ta
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &dy)| if x > F::zero() { dy } else { F::zero() })
                        .collect();
                    self.acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), data));
                }
                Op::Scale(a, s) => {
                    let data = g.data().iter().map(|&x| x * *s).collect();
                    let shape = self.value(*a).shape().to_vec();
                    self.acc(&mut grads, *a, Tensor::new(shape, data));
                }
                Op::Dropout(a, mask) => {
                    let data = g.data().iter().zip(mask).map(|(&x, &m)| x * m).collect();
                    let shape = self.value(*a).shape().to_vec();
                    self.acc(&mut grads, *a, Tensor::new(shape, data));
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gain).data();
                    let d = gv.len();
                    let rows = rstd.len();
                    let mut dgain = vec![F::zero(); d];
                    let mut dbias = vec![F::zero(); d];
                    let mut dx = vec![F::zero(); rows * d];
                    let inv_d = F::from_f64(1.0 / d as f64);
                    for r in 0..rows {
                        let dy = &g.data()[r * d..(r + 1) * d];
                        let xh = &xhat[r * d..(r + 1) * d];
                        let mut mean_dxh = F::zero();
                        let mut mean_dxh_xh = F::zero();
                        for c in 0..d {
                            dgain[c] = dgain[c] + dy[c] * xh[c];
                            dbias[c] = dbias[c] + dy[c];
                            let dxh = dy[c] * gv[c];
                            mean_dxh = mean_dxh + dxh;
                            mean_dxh_xh = mean_dxh_xh + dxh * xh[c];
                        }
                        mean_dxh = mean_dxh * inv_d;
                        mean_dxh_xh = mean_dxh_xh * inv_d;
                        for c in 0..d {
                            let dxh = dy[c] * gv[c];
                            dx[r * d + c] = rstd[r] * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
                        }
                    }
                    if self.needs(*gain) {
                        let shape = self.value(*gain).shape().to_vec();
                        self.acc(&mut grads, *gain, Tensor::new(shape, dgain));
                    }
                    if self.needs(*bias) {
                        let shape = self.value(*bias).shape().to_vec();
                        self.acc(&mut grads, *bias, Tensor::new(shape, dbias));
                    }
                    if self.needs(*x) {
                        let shape = self.value(*x).shape().to_vec();
                        self.acc(&mut grads, *x, Tensor::new(shape, dx));
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    mask,
                    probs,
                    drop,
                } => {
                    let (dq, dk, dv) = self.attention_backward(*q, *k, *v, mask, probs, drop.as_deref(), &g);
                    if self.needs(*q) {
                        self.acc(&mut grads, *q, dq);
                    }
                    if self.needs(*k) {
                        self.acc(&mut grads, *k, dk);
                    }
                    if self.needs(*v) {
                        self.acc(&mut grads, *v, dv);
                    }
                }
                Op::SelectRows(a, rows) => {
                    let ta = self.value(*a);
                    let d = ta.matrix_dims().1;
                    let mut ga = Tensor::zeros(ta.shape());
                    for (i, &r) in rows.iter().enumerate() {
                        let dst = &mut ga.data_mut()[r * d..(r + 1) * d];
                        for (x, &y) in dst.iter_mut().zip(&g.data()[i * d..(i + 1) * d]) {
                            *x = *x + y;
                        }
                    }
                    self.acc(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    self.acc(&mut grads, *a, Tensor::new(shape, g.into_data()));
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    pad,
                    probs,
                    count,
                } => {
                    let tl = self.value(*logits);
                    let vocab = tl.matrix_dims().1;
                    let scale = g.data()[0] / F::from_f64(*count as f64);
                    let mut gl = vec![F::zero(); tl.len()];
                    for (r, &t) in targets.iter().enumerate() {
                        if t == *pad {
                            continue;
                        }
                        let pr = &probs[r * vocab..(r + 1) * vocab];
                        let dst = &mut gl[r * vocab..(r + 1) * vocab];
                        for (x, &p) in dst.iter_mut().zip(pr) {
                            *x = p * scale;
                        }
                        dst[t as usize] = dst[t as usize] - scale;
                    }
                    self.acc(&mut grads, *logits, Tensor::new(tl.shape().to_vec(), gl));
                }
            }
        }
        if self.checked && !out.all_finite() {
            return Err(NnError::NonFinite("gradient"));
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Option<Tensor<F>>], v: Var, g: Tensor<F>) {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        mask: &AttnMask,
        probs: &[F],
        drop: Option<&[F]>,
        g: &Tensor<F>,
    ) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.matrix_dims().1;
        let AttnMask {
            batch,
            heads,
            q_len,
            k_len,
            ..
        } = *mask;
        let dh = d / heads;
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let plane = q_len * k_len;
        let mut dq = Tensor::zeros(tq.shape());
        let mut dk = Tensor::zeros(tk.shape());
        let mut dv = Tensor::zeros(tv.shape());
        let mut dp = vec![F::zero(); plane];
        let mut w = vec![F::zero(); plane];
        let dense = MatView::dense(q_len, k_len);
        for b in 0..batch {
            for h in 0..heads {
                let off = (b * heads + h) * plane;
                let p = &probs[off..off + plane];
                match drop {
                    Some(m) => {
                        for ((x, &pp), &mm) in w.iter_mut().zip(p).zip(&m[off..off + plane]) {
                            *x = pp * mm;
                        }
                    }
                    None => w.copy_from_slice(p),
                }
                let qv = head_view(b, h, q_len, d, dh);
                let kv = head_view(b, h, k_len, d, dh);
                // dV += W^T dO
                gemm(F::one(), &w, dense.t(), g.data(), qv, F::one(), dv.data_mut(), kv);
                // dW = dO V^T
                gemm(F::one(), g.data(), qv, tv.data(), kv.t(), F::zero(), &mut dp, dense);
                if let Some(m) = drop {
                    for (x, &mm) in dp.iter_mut().zip(&m[off..off + plane]) {
                        *x = *x * mm;
                    }
                }
                // softmax backward, folded with the score scale
                for i in 0..q_len {
                    let pr = &p[i * k_len..(i + 1) * k_len];
                    let dr = &mut dp[i * k_len..(i + 1) * k_len];
                    let dot = pr.iter().zip(dr.iter()).fold(F::zero(), |s, (&a, &b)| s + a * b);
                    for (x, &pp) in dr.iter_mut().zip(pr) {
                        *x = pp * (*x - dot) * scale;
                    }
                }
                gemm(F::one(), &dp, dense, tk.data(), kv, F::one(), dq.data_mut(), qv);
                gemm(F::one(), &dp, dense.t(), tq.data(), qv, F::one(), dk.data_mut(), kv);
            }
        }
        (dq, dk, dv)
    }
}

fn head_view(b: usize, h: usize, len: usize, d: usize, dh: usize) -> MatView {
    MatView {
        offset: b * len * d + h * dh,
        rows: len,
        cols: dh,
        row_stride: d,
        col_stride: 1,
    }
}
