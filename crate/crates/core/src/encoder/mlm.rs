use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::autograd::{Graph, Mat, ParamId, ParamStore, Var};
use super::model::{normal_mat, Encoder, EncoderConfig};
use super::EncoderError;
use crate::corpus::{MASK_ID, PAD_ID, RESERVED, UNK_ID};

/// Masked-token prediction head: layer norm, then a projection onto the
/// vocabulary.
#[derive(Debug, Clone)]
pub struct MlmHead {
    ln_g: ParamId,
    ln_b: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

impl MlmHead {
    pub fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Self {
        let d = cfg.d_model;
        Self {
            ln_g: store.add("mlm.ln_g", Mat::ones((1, d))),
            ln_b: store.add("mlm.ln_b", Mat::zeros((1, d))),
            w_out: store.add("mlm.w_out", normal_mat(rng, cfg.vocab_size, d, 0.02)),
            b_out: store.add("mlm.b_out", Mat::zeros((1, cfg.vocab_size))),
        }
    }

    pub fn attach(cfg: &EncoderConfig, store: &ParamStore) -> Result<Self, EncoderError> {
        let find = |n: &str, shape: (usize, usize)| {
            store
                .id(n)
                .filter(|&id| store.get(id).dim() == shape)
                .ok_or_else(|| EncoderError::Checkpoint(format!("missing or misshapen tensor {n}")))
        };
        let d = cfg.d_model;
        Ok(Self {
            ln_g: find("mlm.ln_g", (1, d))?,
            ln_b: find("mlm.ln_b", (1, d))?,
            w_out: find("mlm.w_out", (cfg.vocab_size, d))?,
            b_out: find("mlm.b_out", (1, cfg.vocab_size))?,
        })
    }

    /// Vocabulary logits for each row of `hidden`.
    pub fn logits(&self, g: &mut Graph, hidden: Var) -> Var {
        let (lg, lb) = (g.param(self.ln_g), g.param(self.ln_b));
        let h = g.layer_norm(hidden, lg, lb);
        let w = g.param(self.w_out);
        let b = g.param(self.b_out);
        let z = g.matmul_bt(h, w);
        g.add_row(z, b)
    }
}

/// A corrupted batch for masked-language-model training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmBatch {
    pub inputs: Vec<Vec<usize>>,
    /// `(sequence, position, original id)` for every selected position.
    pub targets: Vec<(usize, usize, usize)>,
}

impl MlmBatch {
    pub fn mask_positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets.iter().map(|&(s, p, _)| (s, p))
    }
}

fn is_special(id: usize) -> bool {
    id == PAD_ID as usize || id == MASK_ID as usize || id == UNK_ID as usize
}

/// Selects each non-special position with probability `p_mask`; a selected
/// position becomes `[MASK]` 80% of the time, a random non-reserved id 10%,
/// and stays unchanged 10%.
pub fn mask_batch<R: Rng + ?Sized>(seqs: &[Vec<usize>], p_mask: f64, vocab_size: usize, rng: &mut R) -> Result<MlmBatch, EncoderError> {
    if !(p_mask > 0.0 && p_mask < 1.0) {
        return Err(EncoderError::InvalidConfig(format!("p_mask {p_mask} outside (0, 1)")));
    }
    let mut inputs = seqs.to_vec();
    let mut targets = Vec::new();
    for (s, seq) in inputs.iter_mut().enumerate() {
        for (p, tok) in seq.iter_mut().enumerate() {
            if is_special(*tok) || !rng.random_bool(p_mask) {
                continue;
            }
            targets.push((s, p, *tok));
            let r: f64 = rng.random();
            if r < 0.8 {
                *tok = MASK_ID as usize;
            } else if r < 0.9 && vocab_size > RESERVED {
                *tok = rng.random_range(RESERVED..vocab_size);
            }
        }
    }
    Ok(MlmBatch { inputs, targets })
}

/// Encoder plus MLM head in one parameter store.
#[derive(Debug, Clone)]
pub struct MlmModel {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub head: MlmHead,
}

impl MlmModel {
    pub fn new<R: Rng + ?Sized>(cfg: EncoderConfig, rng: &mut R) -> Result<Self, EncoderError> {
        let mut store = ParamStore::new();
        let encoder = Encoder::init(cfg, &mut store, rng)?;
        let head = MlmHead::init(encoder.config(), &mut store, rng);
        Ok(Self { store, encoder, head })
    }

    pub fn from_store(cfg: EncoderConfig, store: ParamStore) -> Result<Self, EncoderError> {
        let encoder = Encoder::attach(cfg, &store)?;
        let head = MlmHead::attach(encoder.config(), &store)?;
        Ok(Self { store, encoder, head })
    }

    pub fn config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    /// Mean cross-entropy over the masked positions of `batch`.
    pub fn loss(&self, g: &mut Graph, batch: &MlmBatch, dropout: Option<&mut dyn RngCore>) -> Result<Var, EncoderError> {
        mlm_loss(g, &self.encoder, &self.head, batch, dropout)
    }

    /// Probability distribution over the vocabulary at `pos` of `ids`.
    pub fn predict(&self, ids: &[usize], pos: usize) -> Result<Vec<f64>, EncoderError> {
        let mut g = Graph::new(&self.store);
        let enc = self.encoder.forward(&mut g, &[ids], None)?;
        let row = g.slice_rows(enc.hidden, pos, 1);
        let z = self.head.logits(&mut g, row);
        let p = g.softmax(z);
        Ok(g.value(p).iter().copied().collect())
    }
}

/// MLM loss over an explicit encoder and head (which may share a store with
/// other heads).
pub fn mlm_loss(g: &mut Graph, encoder: &Encoder, head: &MlmHead, batch: &MlmBatch, dropout: Option<&mut dyn RngCore>) -> Result<Var, EncoderError> {
    if batch.targets.is_empty() {
        return Err(EncoderError::EmptyMaskSet);
    }
    let refs: Vec<&[usize]> = batch.inputs.iter().map(Vec::as_slice).collect();
    let enc = encoder.forward(g, &refs, dropout)?;
    let total = g.value(enc.hidden).nrows();
    let k = batch.targets.len();
    let mut select = Mat::zeros((k, total));
    for (i, &(s, p, _)) in batch.targets.iter().enumerate() {
        select[[i, enc.spans[s].0 + p]] = 1.0;
    }
    let sel = g.constant(select);
    let rows = g.matmul(sel, enc.hidden);
    let logits = head.logits(g, rows);
    let logp = g.log_softmax(logits);
    let at: Vec<(usize, usize)> = batch.targets.iter().enumerate().map(|(i, &(_, _, t))| (i, t)).collect();
    let picked = g.pick(logp, &at);
    let mean = g.mean_all(picked);
    Ok(g.scale(mean, -1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub p_mask: f64,
    pub seed: u64,
}

impl Default for PretrainSchedule {
    fn default() -> Self {
        Self { epochs: 300, batch_size: 32, lr: 1e-3, p_mask: 0.15, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh encoder and MLM head on `corpus` (id sequences).
pub fn mlm_pretrain(corpus: &[Vec<usize>], cfg: EncoderConfig, schedule: &PretrainSchedule) -> Result<(MlmModel, PretrainReport), EncoderError> {
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut model = MlmModel::new(cfg, &mut rng)?;
    let report = continue_pretraining(&mut model, corpus, schedule, &mut rng)?;
    Ok((model, report))
}

/// Runs `schedule.epochs` more epochs of MLM training on an existing model.
pub fn continue_pretraining<R: Rng>(model: &mut MlmModel, corpus: &[Vec<usize>], schedule: &PretrainSchedule, rng: &mut R) -> Result<PretrainReport, EncoderError> {
    if corpus.is_empty() {
        return Err(EncoderError::EmptyCorpus);
    }
    if schedule.epochs == 0 || schedule.batch_size == 0 {
        return Err(EncoderError::InvalidConfig("epochs and batch_size must be at least 1".into()));
    }
    let ids: Vec<ParamId> = model.store.ids().collect();
    let mut opt = Adam::new(ids, schedule.lr);
    let vocab = model.config().vocab_size;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        order.shuffle(rng);
        let (mut sum, mut n) = (0.0, 0usize);
        for chunk in order.chunks(schedule.batch_size) {
            let seqs: Vec<Vec<usize>> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let batch = mask_batch(&seqs, schedule.p_mask, vocab, rng)?;
            if batch.targets.is_empty() {
                continue;
            }
            let (loss, grads) = {
                let mut g = Graph::new(&model.store);
                let l = model.loss(&mut g, &batch, Some(&mut *rng as &mut dyn RngCore))?;
                (g.scalar(l), g.backward(l))
            };
            if !loss.is_finite() || !grads.all_finite() {
                return Err(EncoderError::NonFinite);
            }
            opt.step(&mut model.store, &grads);
            sum += loss;
            n += 1;
        }
        let mean = if n == 0 { f64::NAN } else { sum / n as f64 };
        info!("mlm epoch {} loss {mean:.4}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(PretrainReport { epoch_losses })
}

/// Top-1 accuracy on masked positions, using `[MASK]` at every selected
/// position.
pub fn masked_accuracy<R: Rng + ?Sized>(model: &MlmModel, corpus: &[Vec<usize>], p_mask: f64, rng: &mut R) -> Result<f64, EncoderError> {
    let (mut hit, mut total) = (0usize, 0usize);
    for seq in corpus {
        let batch = mask_batch(std::slice::from_ref(seq), p_mask, model.config().vocab_size, rng)?;
        let mut input = seq.clone();
        for &(_, p, _) in &batch.targets {
            input[p] = MASK_ID as usize;
        }
        for &(_, p, t) in &batch.targets {
            let probs = model.predict(&input, p)?;
            let best = probs.iter().enumerate().fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0;
            hit += usize::from(best == t);
            total += 1;
        }
    }
    if total == 0 {
        return Err(EncoderError::EmptyMaskSet);
    }
    Ok(hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_layout_is_seeded() {
        let seqs = vec![vec![5, 6, 7, 8, 9, 10]; 20];
        let a = mask_batch(&seqs, 0.3, 20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = mask_batch(&seqs, 0.3, 20, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_rate_matches_probability() {
        let seqs = vec![(5..25).collect::<Vec<usize>>(); 500];
        let b = mask_batch(&seqs, 0.15, 30, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let rate = b.targets.len() as f64 / 10_000.0;
        assert!((rate - 0.15).abs() < 0.01, "{rate}");
        let masked = b.targets.iter().filter(|&&(s, p, _)| b.inputs[s][p] == MASK_ID as usize).count();
        let frac = masked as f64 / b.targets.len() as f64;
        assert!((frac - 0.8).abs() < 0.05, "{frac}");
    }

    #[test]
    fn specials_never_selected_and_bad_p_rejected() {
        let seqs = vec![vec![0, 1, 2]; 100];
        let b = mask_batch(&seqs, 0.9, 10, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(b.targets.is_empty());
        assert!(mask_batch(&seqs, 0.0, 10, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn empty_mask_set_is_an_error() {
        let model = MlmModel::new(EncoderConfig::tiny(10), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let batch = MlmBatch { inputs: vec![vec![5, 6]], targets: vec![] };
        let mut g = Graph::new(&model.store);
        assert!(matches!(model.loss(&mut g, &batch, None), Err(EncoderError::EmptyMaskSet)));
    }

    #[test]
    fn single_payload_is_memorized() {
        let corpus = vec![vec![5, 6, 7, 8, 9]];
        let schedule = PretrainSchedule { epochs: 300, batch_size: 1, lr: 3e-3, p_mask: 0.5, seed: 2 };
        let (model, report) = mlm_pretrain(&corpus, EncoderConfig::tiny(10), &schedule).unwrap();
        let last = report.epoch_losses.iter().rev().filter(|l| l.is_finite()).take(20).sum::<f64>() / 20.0;
        assert!(last < 0.1, "{last}");
        let p = model.predict(&[5, 6, MASK_ID as usize, 8, 9], 2).unwrap();
        assert!(p[7] > 0.8);
    }
}
