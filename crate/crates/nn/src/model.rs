//! Encoder–decoder Transformer with pre-layer-norm residual blocks.
//!
//! Token embeddings are scaled by `sqrt(d_model)` and summed with fixed
//! sinusoidal positions. Encoder and decoder embeddings and the output
//! projection are separate matrices. Dropout, when enabled on the tape, is
//! applied to embedding sums, attention weights and feed-forward activations.
//!
//! Parameter count for vocabulary `V`, width `d`, feed-forward width `f`,
//! `Le` encoder and `Ld` decoder layers:
//!
//! ```text
//! enc_layer = 4d² + 4d  (attention)  + 4d (two norms)   + 2df + f + d
//! dec_layer = 8d² + 8d  (two attns)  + 6d (three norms) + 2df + f + d
//! D = 2Vd + Le·enc_layer + Ld·dec_layer + 4d (final norms) + dV + V
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::params::{ParamId, Parameters};
use crate::tape::{AttnMask, Tape, Var};
use crate::tensor::{Scalar, Tensor};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_ffn: usize,
    pub dropout: f64,
    pub max_len: usize,
    #[serde(default)]
    pub pad_id: u32,
}

impl ModelConfig {
    /// Desk-scale default: 128 wide, 4 heads, 2 + 2 layers.
    pub fn base(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 128,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_ffn: 512,
            dropout: 0.1,
            max_len: 512,
            pad_id: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ffn == 0 {
            return bad("sizes must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if self.max_len == 0 {
            return bad("max_len must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.pad_id as usize >= self.vocab_size {
            return bad("pad_id outside vocabulary");
        }
        Ok(())
    }

    /// Closed-form number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let (v, d, f) = (self.vocab_size, self.d_model, self.d_ffn);
        let ffn = 2 * d * f + f + d;
        let enc = 4 * d * d + 4 * d + 4 * d + ffn;
        let dec = 8 * d * d + 8 * d + 6 * d + ffn;
        2 * v * d + self.n_enc_layers * enc + self.n_dec_layers * dec + 4 * d + d * v + v
    }
}

/// Right-padded `[rows, len]` block of token ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBatch {
    pub ids: Vec<u32>,
    pub rows: usize,
    pub len: usize,
}

impl TokenBatch {
    pub fn new(ids: Vec<u32>, rows: usize, len: usize) -> Result<Self, NnError> {
        if ids.len() != rows * len {
            return Err(NnError::Shape(format!("{} ids for a {rows}x{len} batch", ids.len())));
        }
        Ok(TokenBatch { ids, rows, len })
    }

    pub fn from_rows(rows: &[Vec<u32>], pad: u32) -> Self {
        let len = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(rows.len() * len);
        for r in rows {
            ids.extend_from_slice(r);
            ids.extend(std::iter::repeat_n(pad, len - r.len()));
        }
        TokenBatch {
            ids,
            rows: rows.len(),
            len,
        }
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.len..(i + 1) * self.len]
    }
}

#[derive(Clone, Debug)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Attn {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

#[derive(Clone, Debug)]
struct Ffn {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Clone, Debug)]
struct EncLayer {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ffn: Ffn,
}

#[derive(Clone, Debug)]
struct DecLayer {
    ln1: Norm,
    self_attn: Attn,
    ln2: Norm,
    cross: Attn,
    ln3: Norm,
    ffn: Ffn,
}

#[derive(Clone, Debug)]
struct Layout {
    enc_embed: ParamId,
    dec_embed: ParamId,
    enc: Vec<EncLayer>,
    enc_ln: Norm,
    dec: Vec<DecLayer>,
    dec_ln: Norm,
    out_w: ParamId,
    out_b: ParamId,
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Declares every parameter in a fixed order. `slot` either creates the
/// tensor or resolves an existing one by name.
fn layout<S>(cfg: &ModelConfig, mut slot: S) -> Result<Layout, NnError>
where
    S: FnMut(String, Vec<usize>, Init) -> Result<ParamId, NnError>,
{
    let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ffn);
    let norm = |slot: &mut S, p: &str| -> Result<Norm, NnError> {
        Ok(Norm {
            g: slot(format!("{p}.g"), vec![d], Init::Ones)?,
            b: slot(format!("{p}.b"), vec![d], Init::Zeros)?,
        })
    };
    let attn = |slot: &mut S, p: &str| -> Result<Attn, NnError> {
        Ok(Attn {
            wq: slot(format!("{p}.wq"), vec![d, d], Init::Normal)?,
            bq: slot(format!("{p}.bq"), vec![d], Init::Zeros)?,
            wk: slot(format!("{p}.wk"), vec![d, d], Init::Normal)?,
            bk: slot(format!("{p}.bk"), vec![d], Init::Zeros)?,
            wv: slot(format!("{p}.wv"), vec![d, d], Init::Normal)?,
            bv: slot(format!("{p}.bv"), vec![d], Init::Zeros)?,
            wo: slot(format!("{p}.wo"), vec![d, d], Init::Normal)?,
            bo: slot(format!("{p}.bo"), vec![d], Init::Zeros)?,
        })
    };
    let ffn = |slot: &mut S, p: &str| -> Result<Ffn, NnError> {
        Ok(Ffn {
            w1: slot(format!("{p}.w1"), vec![d, f], Init::Normal)?,
            b1: slot(format!("{p}.b1"), vec![f], Init::Zeros)?,
            w2: slot(format!("{p}.w2"), vec![f, d], Init::Normal)?,
            b2: slot(format!("{p}.b2"), vec![d], Init::Zeros)?,
        })
    };

    let enc_embed = slot("enc.embed".into(), vec![v, d], Init::Normal)?;
    let dec_embed = slot("dec.embed".into(), vec![v, d], Init::Normal)?;
    let mut enc = Vec::new();
    for l in 0..cfg.n_enc_layers {
        enc.push(EncLayer {
            ln1: norm(&mut slot, &format!("enc.{l}.ln1"))?,
            attn: attn(&mut slot, &format!("enc.{l}.attn"))?,
            ln2: norm(&mut slot, &format!("enc.{l}.ln2"))?,
            ffn: ffn(&mut slot, &format!("enc.{l}.ffn"))?,
        });
    }
    let enc_ln = norm(&mut slot, "enc.ln")?;
    let mut dec = Vec::new();
    for l in 0..cfg.n_dec_layers {
        dec.push(DecLayer {
            ln1: norm(&mut slot, &format!("dec.{l}.ln1"))?,
            self_attn: attn(&mut slot, &format!("dec.{l}.self"))?,
            ln2: norm(&mut slot, &format!("dec.{l}.ln2"))?,
            cross: attn(&mut slot, &format!("dec.{l}.cross"))?,
            ln3: norm(&mut slot, &format!("dec.{l}.ln3"))?,
            ffn: ffn(&mut slot, &format!("dec.{l}.ffn"))?,
        });
    }
    let dec_ln = norm(&mut slot, "dec.ln")?;
    let out_w = slot("out.w".into(), vec![d, v], Init::Normal)?;
    let out_b = slot("out.b".into(), vec![v], Init::Zeros)?;
    Ok(Layout {
        enc_embed,
        dec_embed,
        enc,
        enc_ln,
        dec,
        dec_ln,
        out_w,
        out_b,
    })
}

#[derive(Clone, Debug)]
pub struct Transformer<F: Scalar> {
    cfg: ModelConfig,
    params: Parameters<F>,
    layout: Layout,
    positions: Vec<F>,
}

impl<F: Scalar> Transformer<F> {
    /// Random initialization, fully determined by `seed`.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let mut params = Parameters::new();
        let layout = layout(&cfg, |name, shape, init| {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Normal => (0..n).map(|_| F::from_f64(normal.sample(&mut rng))).collect(),
                Init::Zeros => vec![F::zero(); n],
                Init::Ones => vec![F::one(); n],
            };
            Ok(params.push(name, Tensor::new(shape, data)))
        })?;
        Ok(Self::assemble(cfg, params, layout))
    }

    /// Wraps loaded parameters, checking every expected name and shape.
    pub fn from_parameters(cfg: ModelConfig, params: Parameters<F>) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut seen = 0usize;
        let layout = layout(&cfg, |name, shape, _| {
            let id = params
                .find(&name)
                .ok_or_else(|| NnError::Config(format!("missing parameter {name}")))?;
            if params.get(id).shape() != shape.as_slice() {
                return Err(NnError::Shape(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    params.get(id).shape()
                )));
            }
            seen += 1;
            Ok(id)
        })?;
        if seen != params.len() {
            return Err(NnError::Config(format!(
                "{} unexpected parameters",
                params.len() - seen
            )));
        }
        Ok(Self::assemble(cfg, params, layout))
    }

    fn assemble(cfg: ModelConfig, params: Parameters<F>, layout: Layout) -> Self {
        let positions = sinusoidal(cfg.max_len, cfg.d_model);
        Transformer {
            cfg,
            params,
            layout,
            positions,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &Parameters<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters<F> {
        &mut self.params
    }

    pub fn into_params(self) -> Parameters<F> {
        self.params
    }

    pub fn cast<G: Scalar>(&self) -> Transformer<G> {
        Transformer {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            positions: self.positions.iter().map(|&x| G::from_f64(x.to_f64())).collect(),
        }
    }

    /// Rejects empty or ragged batches, over-long rows and unknown ids.
    pub fn check_batch(&self, b: &TokenBatch) -> Result<(), NnError> {
        if b.ids.len() != b.rows * b.len || b.rows == 0 || b.len == 0 {
            return Err(NnError::Shape(format!("empty or ragged {}x{} batch", b.rows, b.len)));
        }
        if b.len > self.cfg.max_len {
            return Err(NnError::SequenceTooLong {
                len: b.len,
                max: self.cfg.max_len,
            });
        }
        if let Some(&id) = b.ids.iter().find(|&&id| id as usize >= self.cfg.vocab_size) {
            return Err(NnError::TokenOutOfRange {
                id,
                vocab: self.cfg.vocab_size,
            });
        }
        Ok(())
    }

    /// Logits of shape `[rows, y.len, vocab]` for a source batch and a
    /// teacher-forced target prefix.
    pub fn forward(&self, tape: &mut Tape<'_, F>, x: &TokenBatch, y: &TokenBatch) -> Result<Var, NnError> {
        self.check_batch(x)?;
        self.check_batch(y)?;
        if x.rows != y.rows {
            return Err(NnError::Shape(format!(
                "source has {} rows, target has {}",
                x.rows, y.rows
            )));
        }
        let memory = self.encode(tape, x);
        let logits = self.decode(tape, memory, x, y);
        Ok(tape.reshape(logits, &[y.rows, y.len, self.cfg.vocab_size]))
    }

    fn embed(&self, tape: &mut Tape<'_, F>, table: ParamId, b: &TokenBatch) -> Var {
        let d = self.cfg.d_model;
        let t = tape.param(table);
        let e = tape.embedding(t, &b.ids, F::from_f64((d as f64).sqrt()));
        let mut pe = Vec::with_capacity(b.ids.len() * d);
        for _ in 0..b.rows {
            pe.extend_from_slice(&self.positions[..b.len * d]);
        }
        let pe = tape.constant(Tensor::new(vec![b.rows * b.len, d], pe));
        let h = tape.add(e, pe);
        tape.dropout(h)
    }

    fn norm(&self, tape: &mut Tape<'_, F>, x: Var, n: &Norm) -> Var {
        let (g, b) = (tape.param(n.g), tape.param(n.b));
        tape.layer_norm(x, g, b)
    }

    fn attend(&self, tape: &mut Tape<'_, F>, xq: Var, xkv: Var, a: &Attn, mask: AttnMask) -> Var {
        let p = |tape: &mut Tape<'_, F>, w, b| (tape.param(w), tape.param(b));
        let (wq, bq) = p(tape, a.wq, a.bq);
        let (wk, bk) = p(tape, a.wk, a.bk);
        let (wv, bv) = p(tape, a.wv, a.bv);
        let (wo, bo) = p(tape, a.wo, a.bo);
        let q = tape.linear(xq, wq, bq);
        let k = tape.linear(xkv, wk, bk);
        let v = tape.linear(xkv, wv, bv);
        let o = tape.attention(q, k, v, mask, true);
        tape.linear(o, wo, bo)
    }

    fn feed_forward(&self, tape: &mut Tape<'_, F>, x: Var, f: &Ffn) -> Var {
        let (w1, b1, w2, b2) = (tape.param(f.w1), tape.param(f.b1), tape.param(f.w2), tape.param(f.b2));
        let h = tape.linear(x, w1, b1);
        let h = tape.relu(h);
        let h = tape.dropout(h);
        tape.linear(h, w2, b2)
    }

    fn pad_mask(&self, b: &TokenBatch) -> Vec<bool> {
        b.ids.iter().map(|&id| id == self.cfg.pad_id).collect()
    }

    /// Encoder output `[rows * x.len, d_model]`.
    pub fn encode(&self, tape: &mut Tape<'_, F>, x: &TokenBatch) -> Var {
        let mask = AttnMask {
            batch: x.rows,
            heads: self.cfg.n_heads,
            q_len: x.len,
            k_len: x.len,
            causal: false,
            key_pad: self.pad_mask(x),
        };
        let mut h = self.embed(tape, self.layout.enc_embed, x);
        for layer in &self.layout.enc {
            let a = self.norm(tape, h, &layer.ln1);
            let a = self.attend(tape, a, a, &layer.attn, mask.clone());
            h = tape.add(h, a);
            let f = self.norm(tape, h, &layer.ln2);
            let f = self.feed_forward(tape, f, &layer.ffn);
            h = tape.add(h, f);
        }
        self.norm(tape, h, &self.layout.enc_ln)
    }

    /// Decoder logits `[rows * y.len, vocab]` given encoder output `memory`
    /// for source batch `x`.
    pub fn decode(&self, tape: &mut Tape<'_, F>, memory: Var, x: &TokenBatch, y: &TokenBatch) -> Var {
        let heads = self.cfg.n_heads;
        let self_mask = AttnMask {
            batch: y.rows,
            heads,
            q_len: y.len,
            k_len: y.len,
            causal: true,
            key_pad: self.pad_mask(y),
        };
        let cross_mask = AttnMask {
            batch: y.rows,
            heads,
            q_len: y.len,
            k_len: x.len,
            causal: false,
            key_pad: self.pad_mask(x),
        };
        let mut h = self.embed(tape, self.layout.dec_embed, y);
        for layer in &self.layout.dec {
            let a = self.norm(tape, h, &layer.ln1);
            let a = self.attend(tape, a, a, &layer.self_attn, self_mask.clone());
            h = tape.add(h, a);
            let c = self.norm(tape, h, &layer.ln2);
            let c = self.attend(tape, c, memory, &layer.cross, cross_mask.clone());
            h = tape.add(h, c);
            let f = self.norm(tape, h, &layer.ln3);
            let f = self.feed_forward(tape, f, &layer.ffn);
            h = tape.add(h, f);
        }
        let h = self.norm(tape, h, &self.layout.dec_ln);
        let (w, b) = (tape.param(self.layout.out_w), tape.param(self.layout.out_b));
        tape.linear(h, w, b)
    }
}

/// Per-row caches for incremental decoding: cross-attention keys and
/// values over the encoder output, and self-attention keys and values of
/// every target position fed so far.
pub struct DecodeState<F: Scalar> {
    src_len: usize,
    src_pad: Vec<Vec<bool>>,
    cross: Vec<Vec<(Vec<F>, Vec<F>)>>,
    past: Vec<Vec<(Vec<F>, Vec<F>)>>,
    past_pad: Vec<Vec<bool>>,
    steps: usize,
}

impl<F: Scalar> DecodeState<F> {
    /// Target positions fed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }
}

fn split_rows<F: Scalar>(t: &Tensor<F>, rows: usize) -> Vec<Vec<F>> {
    let n = t.len() / rows.max(1);
    t.data().chunks(n.max(1)).map(<[F]>::to_vec).collect()
}

fn gather<'a, T: Copy + 'a>(rows: &[usize], part: impl Fn(usize) -> &'a [T]) -> Vec<T> {
    rows.iter().flat_map(|&r| part(r).iter().copied()).collect()
}

impl<F: Scalar> Transformer<F> {
    /// Runs the encoder once and precomputes the cross-attention keys and
    /// values of every decoder layer.
    pub fn begin_decode(&self, x: &TokenBatch) -> Result<DecodeState<F>, NnError> {
        self.check_batch(x)?;
        let mut tape = Tape::new(&self.params);
        let memory = self.encode(&mut tape, x);
        let mut cross = vec![Vec::with_capacity(self.layout.dec.len()); x.rows];
        for layer in &self.layout.dec {
            let a = &layer.cross;
            let (wk, bk, wv, bv) = (tape.param(a.wk), tape.param(a.bk), tape.param(a.wv), tape.param(a.bv));
            let k = tape.linear(memory, wk, bk);
            let v = tape.linear(memory, wv, bv);
            let ks = split_rows(tape.value(k), x.rows);
            let vs = split_rows(tape.value(v), x.rows);
            for (r, (k, v)) in ks.into_iter().zip(vs).enumerate() {
                cross[r].push((k, v));
            }
        }
        Ok(DecodeState {
            src_len: x.len,
            src_pad: (0..x.rows).map(|r| self.pad_mask_row(x.row(r))).collect(),
            cross,
            past: vec![vec![(Vec::new(), Vec::new()); self.layout.dec.len()]; x.rows],
            past_pad: vec![Vec::new(); x.rows],
            steps: 0,
        })
    }

    /// Feeds one token per row in `active` at the next target position and
    /// returns that position's logits, `[active.len() * vocab]`. Equal (up to
    /// rounding) to the matching rows of [`Transformer::decode`] over the
    /// whole prefix. Every active row must have been active at every
    /// earlier step.
    pub fn decode_step(&self, st: &mut DecodeState<F>, active: &[usize], tokens: &[u32]) -> Result<Vec<F>, NnError> {
        let (d, heads) = (self.cfg.d_model, self.cfg.n_heads);
        let pos = st.steps;
        if pos >= self.cfg.max_len {
            return Err(NnError::SequenceTooLong {
                len: pos + 1,
                max: self.cfg.max_len,
            });
        }
        if active.len() != tokens.len() {
            return Err(NnError::Shape(format!(
                "{} rows but {} tokens",
                active.len(),
                tokens.len()
            )));
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(NnError::TokenOutOfRange {
                id,
                vocab: self.cfg.vocab_size,
            });
        }
        let n = active.len();
        for (&r, &t) in active.iter().zip(tokens) {
            st.past_pad[r].push(t == self.cfg.pad_id);
        }
        let mut tape = Tape::new(&self.params);
        let table = tape.param(self.layout.dec_embed);
        let e = tape.embedding(table, tokens, F::from_f64((d as f64).sqrt()));
        let pe: Vec<F> = (0..n)
            .flat_map(|_| self.positions[pos * d..(pos + 1) * d].iter().copied())
            .collect();
        let pe = tape.constant(Tensor::new(vec![n, d], pe));
        let mut h = tape.add(e, pe);

        let k_len = pos + 1;
        let self_mask = AttnMask {
            batch: n,
            heads,
            q_len: 1,
            k_len,
            causal: false,
            key_pad: gather(active, |r| &st.past_pad[r]),
        };
        let cross_mask = AttnMask {
            batch: n,
            heads,
            q_len: 1,
            k_len: st.src_len,
            causal: false,
            key_pad: gather(active, |r| &st.src_pad[r]),
        };
        for (l, layer) in self.layout.dec.iter().enumerate() {
            let a = self.norm(&mut tape, h, &layer.ln1);
            let sa = &layer.self_attn;
            let (wq, bq) = (tape.param(sa.wq), tape.param(sa.bq));
            let (wk, bk) = (tape.param(sa.wk), tape.param(sa.bk));
            let (wv, bv) = (tape.param(sa.wv), tape.param(sa.bv));
            let q = tape.linear(a, wq, bq);
            let k = tape.linear(a, wk, bk);
            let v = tape.linear(a, wv, bv);
            for (i, &r) in active.iter().enumerate() {
                let cache = &mut st.past[r][l];
                cache.0.extend_from_slice(&tape.value(k).data()[i * d..(i + 1) * d]);
                cache.1.extend_from_slice(&tape.value(v).data()[i * d..(i + 1) * d]);
            }
            let ks = tape.constant(Tensor::new(vec![n * k_len, d], gather(active, |r| &st.past[r][l].0)));
            let vs = tape.constant(Tensor::new(vec![n * k_len, d], gather(active, |r| &st.past[r][l].1)));
            let o = tape.attention(q, ks, vs, self_mask.clone(), true);
            let (wo, bo) = (tape.param(sa.wo), tape.param(sa.bo));
            let o = tape.linear(o, wo, bo);
            h = tape.add(h, o);

            let c = self.norm(&mut tape, h, &layer.ln2);
            let ca = &layer.cross;
            let (wq, bq) = (tape.param(ca.wq), tape.param(ca.bq));
            let q = tape.linear(c, wq, bq);
            let ks = tape.constant(Tensor::new(
                vec![n * st.src_len, d],
                gather(active, |r| &st.cross[r][l].0),
            ));
            let vs = tape.constant(Tensor::new(
                vec![n * st.src_len, d],
                gather(active, |r| &st.cross[r][l].1),
            ));
            let o = tape.attention(q, ks, vs, cross_mask.clone(), true);
            let (wo, bo) = (tape.param(ca.wo), tape.param(ca.bo));
            let o = tape.linear(o, wo, bo);
            h = tape.add(h, o);

            let f = self.norm(&mut tape, h, &layer.ln3);
            let f = self.feed_forward(&mut tape, f, &layer.ffn);
            h = tape.add(h, f);
        }
        let h = self.norm(&mut tape, h, &self.layout.dec_ln);
        let (w, b) = (tape.param(self.layout.out_w), tape.param(self.layout.out_b));
        let logits = tape.linear(h, w, b);
        st.steps += 1;
        Ok(tape.value(logits).data().to_vec())
    }

    fn pad_mask_row(&self, row: &[u32]) -> Vec<bool> {
        row.iter().map(|&id| id == self.cfg.pad_id).collect()
    }
}

/// `pe[pos, 2i] = sin(pos / 10000^(2i/d))`, `pe[pos, 2i+1] = cos(..)`.
fn sinusoidal<F: Scalar>(max_len: usize, d: usize) -> Vec<F> {
    let mut pe = vec![F::zero(); max_len * d];
    for pos in 0..max_len {
        for i in 0..d {
            let k = (i / 2) * 2;
            let angle = pos as f64 / 10000f64.powf(k as f64 / d as f64);
            pe[pos * d + i] = F::from_f64(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}
