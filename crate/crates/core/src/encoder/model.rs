use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::autograd::{Graph, Mat, ParamId, ParamStore, Var};
use super::EncoderError;
use crate::corpus::PAD_ID;

const INIT_STD: f64 = 0.02;
const MASKED: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Default sizes: 4 layers, 4 heads, width 128, feed-forward 256.
    pub fn new(vocab_size: usize) -> Self {
        Self { vocab_size, layers: 4, heads: 4, d_model: 128, d_ff: 256, max_len: crate::corpus::DEFAULT_MAX_TOKENS, dropout: 0.1 }
    }

    /// 2 layers, width 16: the size used for gradient checks.
    pub fn tiny(vocab_size: usize) -> Self {
        Self { vocab_size, layers: 2, heads: 2, d_model: 16, d_ff: 32, max_len: 16, dropout: 0.0 }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::InvalidConfig(m.to_string()));
        if self.vocab_size == 0 || self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 || self.max_len == 0 {
            return bad("all sizes must be at least 1");
        }
        if self.d_model % self.heads != 0 {
            return bad("d_model must be divisible by heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Debug, Clone)]
struct Layer {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Pre-norm transformer encoder. Holds parameter ids; the weights live in a
/// [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    tok_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<Layer>,
}

/// Output of [`Encoder::forward`] on a batch.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Hidden states of all sequences stacked row-wise: `[sum of lengths, d_model]`.
    pub hidden: Var,
    /// `(start row, length)` of each sequence in `hidden`.
    pub spans: Vec<(usize, usize)>,
    /// Attention probabilities, per layer, sequence and head.
    pub attention: Vec<Var>,
}

pub(crate) fn normal_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Mat {
    let n = Normal::new(0.0, std).expect("positive std");
    Mat::from_shape_simple_fn((rows, cols), || n.sample(rng))
}

impl Encoder {
    /// Registers freshly initialized weights under the `enc.` prefix.
    pub fn init<R: Rng + ?Sized>(cfg: EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let d = cfg.d_model;
        let tok_emb = store.add("enc.tok_emb", normal_mat(rng, cfg.vocab_size, d, INIT_STD));
        let pos_emb = store.add("enc.pos_emb", normal_mat(rng, cfg.max_len, d, INIT_STD));
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let mut add = |name: &str, m: Mat| store.add(format!("enc.l{l}.{name}"), m);
            layers.push(Layer {
                ln1_g: add("ln1_g", Mat::ones((1, d))),
                ln1_b: add("ln1_b", Mat::zeros((1, d))),
                wq: add("wq", normal_mat(rng, d, d, INIT_STD)),
                bq: add("bq", Mat::zeros((1, d))),
                wk: add("wk", normal_mat(rng, d, d, INIT_STD)),
                bk: add("bk", Mat::zeros((1, d))),
                wv: add("wv", normal_mat(rng, d, d, INIT_STD)),
                bv: add("bv", Mat::zeros((1, d))),
                wo: add("wo", normal_mat(rng, d, d, INIT_STD)),
                bo: add("bo", Mat::zeros((1, d))),
                ln2_g: add("ln2_g", Mat::ones((1, d))),
                ln2_b: add("ln2_b", Mat::zeros((1, d))),
                w1: add("w1", normal_mat(rng, d, cfg.d_ff, INIT_STD)),
                b1: add("b1", Mat::zeros((1, cfg.d_ff))),
                w2: add("w2", normal_mat(rng, cfg.d_ff, d, INIT_STD)),
                b2: add("b2", Mat::zeros((1, d))),
            });
        }
        Ok(Self { cfg, tok_emb, pos_emb, layers })
    }

    /// Binds to weights already present in `store` (e.g. from a checkpoint),
    /// checking every shape against `cfg`.
    pub fn attach(cfg: EncoderConfig, store: &ParamStore) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let d = cfg.d_model;
        let find = |name: String, shape: (usize, usize)| -> Result<ParamId, EncoderError> {
            let id = store.id(&name).ok_or_else(|| EncoderError::Checkpoint(format!("missing tensor {name}")))?;
            if store.get(id).dim() != shape {
                return Err(EncoderError::Checkpoint(format!("tensor {name} has shape {:?}, expected {shape:?}", store.get(id).dim())));
            }
            Ok(id)
        };
        let tok_emb = find("enc.tok_emb".into(), (cfg.vocab_size, d))?;
        let pos_emb = find("enc.pos_emb".into(), (cfg.max_len, d))?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let f = |n: &str, shape| find(format!("enc.l{l}.{n}"), shape);
            layers.push(Layer {
                ln1_g: f("ln1_g", (1, d))?,
                ln1_b: f("ln1_b", (1, d))?,
                wq: f("wq", (d, d))?,
                bq: f("bq", (1, d))?,
                wk: f("wk", (d, d))?,
                bk: f("bk", (1, d))?,
                wv: f("wv", (d, d))?,
                bv: f("bv", (1, d))?,
                wo: f("wo", (d, d))?,
                bo: f("bo", (1, d))?,
                ln2_g: f("ln2_g", (1, d))?,
                ln2_b: f("ln2_b", (1, d))?,
                w1: f("w1", (d, cfg.d_ff))?,
                b1: f("b1", (1, cfg.d_ff))?,
                w2: f("w2", (cfg.d_ff, d))?,
                b2: f("b2", (1, d))?,
            });
        }
        Ok(Self { cfg, tok_emb, pos_emb, layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn token_embedding(&self) -> ParamId {
        self.tok_emb
    }

    /// All parameter ids owned by the encoder.
    pub fn param_ids(&self, store: &ParamStore) -> Vec<ParamId> {
        store.ids_with_prefix("enc.").collect()
    }

    /// Encodes a batch of id sequences. `[PAD]` positions are excluded as
    /// attention keys. Passing an rng enables dropout (training mode).
    pub fn forward(&self, g: &mut Graph, batch: &[&[usize]], mut dropout: Option<&mut dyn RngCore>) -> Result<Encoded, EncoderError> {
        let mut spans = Vec::with_capacity(batch.len());
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        for seq in batch {
            if seq.is_empty() {
                return Err(EncoderError::EmptySequence);
            }
            if seq.len() > self.cfg.max_len {
                return Err(EncoderError::LengthOverflow { len: seq.len(), max: self.cfg.max_len });
            }
            if let Some(&bad) = seq.iter().find(|&&t| t >= self.cfg.vocab_size) {
                return Err(EncoderError::TokenOutOfRange { id: bad, vocab: self.cfg.vocab_size });
            }
            spans.push((ids.len(), seq.len()));
            ids.extend_from_slice(seq);
            positions.extend(0..seq.len());
        }
        let tok = g.gather(self.tok_emb, &ids);
        let pos = g.gather(self.pos_emb, &positions);
        let mut x = g.add(tok, pos);
        x = self.dropout(g, x, &mut dropout);

        let key_masks: Vec<Option<Var>> = batch
            .iter()
            .map(|seq| {
                seq.contains(&(PAD_ID as usize)).then(|| {
                    let row = Mat::from_shape_fn((1, seq.len()), |(_, j)| if seq[j] == PAD_ID as usize { MASKED } else { 0.0 });
                    let full = Mat::from_shape_fn((seq.len(), seq.len()), |(_, j)| row[[0, j]]);
                    g.constant(full)
                })
            })
            .collect();

        let dh = self.cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut attention = Vec::new();
        for layer in &self.layers {
            let (g1, b1) = (g.param(layer.ln1_g), g.param(layer.ln1_b));
            let h = g.layer_norm(x, g1, b1);
            let q = linear(g, h, layer.wq, layer.bq);
            let k = linear(g, h, layer.wk, layer.bk);
            let v = linear(g, h, layer.wv, layer.bv);
            let mut per_seq = Vec::with_capacity(spans.len());
            for (si, &(start, len)) in spans.iter().enumerate() {
                let (qs, ks, vs) = (g.slice_rows(q, start, len), g.slice_rows(k, start, len), g.slice_rows(v, start, len));
                let mut heads = Vec::with_capacity(self.cfg.heads);
                for hd in 0..self.cfg.heads {
                    let qh = g.slice_cols(qs, hd * dh, dh);
                    let kh = g.slice_cols(ks, hd * dh, dh);
                    let vh = g.slice_cols(vs, hd * dh, dh);
                    let scores = g.matmul_bt(qh, kh);
                    let mut scores = g.scale(scores, scale);
                    if let Some(mask) = key_masks[si] {
                        scores = g.add(scores, mask);
                    }
                    let p = g.softmax(scores);
                    attention.push(p);
                    heads.push(g.matmul(p, vh));
                }
                per_seq.push(if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) });
            }
            let att = if per_seq.len() == 1 { per_seq[0] } else { g.concat_rows(&per_seq) };
            let att = linear(g, att, layer.wo, layer.bo);
            let att = self.dropout(g, att, &mut dropout);
            x = g.add(x, att);

            let (g2, b2) = (g.param(layer.ln2_g), g.param(layer.ln2_b));
            let h = g.layer_norm(x, g2, b2);
            let f = linear(g, h, layer.w1, layer.b1);
            let f = g.gelu(f);
            let f = linear(g, f, layer.w2, layer.b2);
            let f = self.dropout(g, f, &mut dropout);
            x = g.add(x, f);
        }
        Ok(Encoded { hidden: x, spans, attention })
    }

    fn dropout(&self, g: &mut Graph, x: Var, rng: &mut Option<&mut dyn RngCore>) -> Var {
        let p = self.cfg.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let (r, c) = g.value(x).dim();
                let mask = Mat::from_shape_simple_fn((r, c), || if rng.random::<f64>() < p { 0.0 } else { keep });
                let m = g.constant(mask);
                g.mul(x, m)
            }
            _ => x,
        }
    }

    /// Inference-mode hidden states for one sequence.
    pub fn hidden_states(&self, store: &ParamStore, ids: &[usize]) -> Result<Mat, EncoderError> {
        let mut g = Graph::new(store);
        let enc = self.forward(&mut g, &[ids], None)?;
        Ok(g.value(enc.hidden).clone())
    }
}

/// `x · W + b`.
pub(crate) fn linear(g: &mut Graph, x: Var, w: ParamId, b: ParamId) -> Var {
    let wv = g.param(w);
    let bv = g.param(b);
    let y = g.matmul(x, wv);
    g.add_row(y, bv)
}
