use rand::Rng;

use super::AgentError;
use crate::corpus::{MASK_ID, PAD_ID, UNK_ID};
use crate::encoder::{normal_mat, Encoder, EncoderConfig, Graph, Mat, MlmHead, MlmModel, ParamId, ParamStore, Var};
use crate::mutation::{MutationAction, MutationOp};

const MASKED: f64 = -1e9;

/// Action distributions for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    /// Indexed by [`MutationOp::index`].
    pub op: [f64; 3],
    /// One distribution per op, each of length `max_len + 1`; entries past
    /// the op's legal slots are zero.
    pub position: [Vec<f64>; 3],
    pub value: f64,
    /// Length of the state the output was computed for.
    pub len: usize,
}

/// Log-probability and entropy terms for a batch of (state, action) pairs.
pub(crate) struct ActionTerms {
    /// `[B, 1]` log-probability of each action.
    pub logp: Var,
    /// `[B, 1]` entropy of the op, position and token factors along the action.
    pub entropy: Var,
    /// `[B, 1]` state values.
    pub value: Var,
}

/// Encoder plus policy heads (op, per-op position pointers, token via the
/// MLM head) and a value head, all in one parameter store.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub mlm: MlmHead,
    ln_g: ParamId,
    ln_b: ParamId,
    w_op: ParamId,
    b_op: ParamId,
    wq: [ParamId; 3],
    wk: [ParamId; 3],
    w_v: ParamId,
    b_v: ParamId,
}

impl PolicyNet {
    /// Adds freshly initialized heads to a (pretrained) MLM model.
    pub fn from_mlm<R: Rng + ?Sized>(model: MlmModel, rng: &mut R) -> Self {
        let MlmModel { mut store, encoder, head } = model;
        let d = encoder.config().d_model;
        let std = 0.02;
        let ln_g = store.add("pol.ln_g", Mat::ones((1, d)));
        let ln_b = store.add("pol.ln_b", Mat::zeros((1, d)));
        let w_op = store.add("pol.w_op", normal_mat(rng, d, 3, std));
        let b_op = store.add("pol.b_op", Mat::zeros((1, 3)));
        let mut wq = [ParamId(0); 3];
        let mut wk = [ParamId(0); 3];
        for op in MutationOp::ALL {
            wq[op.index()] = store.add(format!("pol.{op}.wq"), normal_mat(rng, d, d, std));
            wk[op.index()] = store.add(format!("pol.{op}.wk"), normal_mat(rng, d, d, std));
        }
        let w_v = store.add("value.w", normal_mat(rng, d, 1, std));
        let b_v = store.add("value.b", Mat::zeros((1, 1)));
        Self { store, encoder, mlm: head, ln_g, ln_b, w_op, b_op, wq, wk, w_v, b_v }
    }

    /// A policy over a randomly initialized (not pretrained) encoder.
    pub fn new<R: Rng + ?Sized>(cfg: EncoderConfig, rng: &mut R) -> Result<Self, AgentError> {
        Ok(Self::from_mlm(MlmModel::new(cfg, rng)?, rng))
    }

    /// Binds to a store that already holds every tensor (agent checkpoint).
    pub fn attach(cfg: EncoderConfig, store: ParamStore) -> Result<Self, AgentError> {
        let encoder = Encoder::attach(cfg, &store)?;
        let mlm = MlmHead::attach(encoder.config(), &store)?;
        let find = |n: String| store.id(&n).ok_or_else(|| AgentError::MissingTensor(n));
        let mut wq = [ParamId(0); 3];
        let mut wk = [ParamId(0); 3];
        for op in MutationOp::ALL {
            wq[op.index()] = find(format!("pol.{op}.wq"))?;
            wk[op.index()] = find(format!("pol.{op}.wk"))?;
        }
        Ok(Self {
            ln_g: find("pol.ln_g".into())?,
            ln_b: find("pol.ln_b".into())?,
            w_op: find("pol.w_op".into())?,
            b_op: find("pol.b_op".into())?,
            wq,
            wk,
            w_v: find("value.w".into())?,
            b_v: find("value.b".into())?,
            store,
            encoder,
            mlm,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    pub fn max_len(&self) -> usize {
        self.config().max_len
    }

    pub fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    /// Parameters trained with the policy learning rate: everything except
    /// the value head.
    pub fn policy_params(&self) -> Vec<ParamId> {
        self.store.ids().filter(|&id| !self.store.name(id).starts_with("value.")).collect()
    }

    pub fn value_params(&self) -> Vec<ParamId> {
        self.store.ids_with_prefix("value.").collect()
    }

    fn op_mask(&self, len: usize) -> [bool; 3] {
        [len < self.max_len(), len > 1, true]
    }

    /// Shared trunk: normalized hidden states, pooled state vectors, masked
    /// op log-probabilities and values.
    fn trunk(&self, g: &mut Graph, states: &[&[usize]]) -> Result<Trunk, AgentError> {
        let enc = self.encoder.forward(g, states, None)?;
        let (lg, lb) = (g.param(self.ln_g), g.param(self.ln_b));
        let h = g.layer_norm(enc.hidden, lg, lb);
        let n = g.value(h).nrows();
        let mut pool = Mat::zeros((states.len(), n));
        let mut op_mask = Mat::zeros((states.len(), 3));
        for (b, &(start, len)) in enc.spans.iter().enumerate() {
            for r in start..start + len {
                pool[[b, r]] = 1.0 / len as f64;
            }
            for (o, ok) in self.op_mask(len).into_iter().enumerate() {
                if !ok {
                    op_mask[[b, o]] = MASKED;
                }
            }
        }
        let pool = g.constant(pool);
        let pooled = g.matmul(pool, h);
        let (w, bias) = (g.param(self.w_op), g.param(self.b_op));
        let z = g.matmul(pooled, w);
        let z = g.add_row(z, bias);
        let m = g.constant(op_mask);
        let op_scores = g.add(z, m);
        let op_logp = g.log_softmax(op_scores);
        let (wv, bv) = (g.param(self.w_v), g.param(self.b_v));
        let v = g.matmul(pooled, wv);
        let value = g.add_row(v, bv);
        Ok(Trunk { h, pooled, spans: enc.spans, op_scores, op_logp, value })
    }

    /// Position log-probabilities `[1, slots]` for state `b` under `op`.
    fn position_logp(&self, g: &mut Graph, t: &Trunk, keys: Var, b: usize, op: MutationOp) -> Var {
        let s = self.position_scores(g, t, keys, b, op);
        g.log_softmax(s)
    }

    /// Unnormalized pointer scores `[1, slots]`.
    fn position_scores(&self, g: &mut Graph, t: &Trunk, keys: Var, b: usize, op: MutationOp) -> Var {
        let (start, len) = t.spans[b];
        let mut k = g.slice_rows(keys, start, len);
        if op == MutationOp::Insert {
            let avg = g.constant(insert_slot_matrix(len));
            k = g.matmul(avg, k);
        }
        let wq = g.param(self.wq[op.index()]);
        let row = g.slice_rows(t.pooled, b, 1);
        let q = g.matmul(row, wq);
        let s = g.matmul_bt(q, k);
        g.scale(s, 1.0 / (self.config().d_model as f64).sqrt())
    }

    fn keys(&self, g: &mut Graph, t: &Trunk, op: MutationOp) -> Var {
        let wk = g.param(self.wk[op.index()]);
        g.matmul(t.h, wk)
    }

    /// Token log-probabilities `[M, vocab]` at the edited slot of each
    /// (state, op, position) triple, read from the MLM head with `[MASK]`
    /// placed at the slot.
    fn token_logp(&self, g: &mut Graph, queries: &[(&[usize], MutationOp, usize)]) -> Result<Var, AgentError> {
        let s = self.token_scores(g, queries)?;
        Ok(g.log_softmax(s))
    }

    /// Masked MLM logits `[M, vocab]` at the edited slots.
    fn token_scores(&self, g: &mut Graph, queries: &[(&[usize], MutationOp, usize)]) -> Result<Var, AgentError> {
        let masked: Vec<Vec<usize>> = queries.iter().map(|&(s, op, p)| masked_state(s, op, p)).collect();
        let refs: Vec<&[usize]> = masked.iter().map(Vec::as_slice).collect();
        let enc = self.encoder.forward(g, &refs, None)?;
        let n = g.value(enc.hidden).nrows();
        let mut select = Mat::zeros((queries.len(), n));
        for (i, &(_, _, p)) in queries.iter().enumerate() {
            select[[i, enc.spans[i].0 + p]] = 1.0;
        }
        let sel = g.constant(select);
        let rows = g.matmul(sel, enc.hidden);
        let logits = self.mlm.logits(g, rows);
        // reserved ids never; for a replacement, not the token already there
        let mut mask = Mat::zeros((queries.len(), self.vocab_size()));
        for (i, &(s, op, p)) in queries.iter().enumerate() {
            for special in [PAD_ID, MASK_ID, UNK_ID] {
                mask[[i, special as usize]] = MASKED;
            }
            if op == MutationOp::Replace {
                mask[[i, s[p]]] = MASKED;
            }
        }
        let mask = g.constant(mask);
        Ok(g.add(logits, mask))
    }

    /// Full action distributions (except tokens) for one state.
    pub fn policy(&self, state: &[usize]) -> Result<PolicyOutput, AgentError> {
        let mut g = Graph::new(&self.store);
        let t = self.trunk(&mut g, &[state])?;
        let len = state.len();
        let op_row = g.value(t.op_logp).row(0).mapv(f64::exp);
        let mut position: [Vec<f64>; 3] = Default::default();
        for op in MutationOp::ALL {
            let keys = self.keys(&mut g, &t, op);
            let lp = self.position_logp(&mut g, &t, keys, 0, op);
            let mut dist = vec![0.0; self.max_len() + 1];
            for (i, x) in g.value(lp).iter().enumerate() {
                dist[i] = x.exp();
            }
            position[op.index()] = dist;
        }
        Ok(PolicyOutput { op: [op_row[0], op_row[1], op_row[2]], position, value: g.scalar(t.value), len })
    }

    /// Token distribution for editing `state` with `op` at `position`.
    pub fn token_distribution(&self, state: &[usize], op: MutationOp, position: usize) -> Result<Vec<f64>, AgentError> {
        if op == MutationOp::Delete || position >= op.slots(state.len()) {
            return Err(AgentError::InvalidAction);
        }
        let mut g = Graph::new(&self.store);
        let lp = self.token_logp(&mut g, &[(state, op, position)])?;
        Ok(g.value(lp).iter().map(|x| x.exp()).collect())
    }

    /// Samples an action; returns it with its log-probability and the state
    /// value.
    pub fn act<R: Rng + ?Sized>(&self, state: &[usize], rng: &mut R) -> Result<(MutationAction, f64, f64), AgentError> {
        let out = self.policy(state)?;
        let (action, logp) = sample_action(&out, |op, p| self.token_distribution(state, op, p), rng)?;
        Ok((action, logp, out.value))
    }

    /// Log-probabilities, entropies and values of `actions` taken in `states`.
    pub(crate) fn action_terms(&self, g: &mut Graph, states: &[&[usize]], actions: &[MutationAction]) -> Result<ActionTerms, AgentError> {
        let bsz = states.len();
        let t = self.trunk(g, states)?;
        let op_at: Vec<(usize, usize)> = actions.iter().enumerate().map(|(b, a)| (b, a.op.index())).collect();
        let op_lp = g.pick(t.op_logp, &op_at);
        let op_p = g.exp(t.op_logp);
        let op_plogp = g.mul(op_p, t.op_logp);
        let ones3 = g.constant(Mat::ones((3, 1)));
        let op_neg_ent = g.matmul(op_plogp, ones3);

        let mut keys: [Option<Var>; 3] = [None; 3];
        let mut pos_lp = Vec::with_capacity(bsz);
        let mut pos_neg_ent = Vec::with_capacity(bsz);
        for (b, a) in actions.iter().enumerate() {
            let k = match keys[a.op.index()] {
                Some(k) => k,
                None => {
                    let k = self.keys(g, &t, a.op);
                    keys[a.op.index()] = Some(k);
                    k
                }
            };
            if a.position >= a.op.slots(states[b].len()) {
                return Err(AgentError::InvalidAction);
            }
            let lp = self.position_logp(g, &t, k, b, a.op);
            pos_lp.push(g.pick(lp, &[(0, a.position)]));
            let p = g.exp(lp);
            let plogp = g.mul(p, lp);
            pos_neg_ent.push(g.sum_all(plogp));
        }
        let pos_lp = g.concat_rows(&pos_lp);
        let pos_neg_ent = g.concat_rows(&pos_neg_ent);

        let mut logp = g.add(op_lp, pos_lp);
        let mut neg_ent = g.add(op_neg_ent, pos_neg_ent);

        let token_rows: Vec<usize> = (0..bsz).filter(|&b| actions[b].op != MutationOp::Delete).collect();
        if !token_rows.is_empty() {
            let queries: Vec<(&[usize], MutationOp, usize)> = token_rows.iter().map(|&b| (states[b], actions[b].op, actions[b].position)).collect();
            let tok_logp = self.token_logp(g, &queries)?;
            let at: Vec<(usize, usize)> = token_rows.iter().enumerate().map(|(i, &b)| (i, actions[b].token as usize)).collect();
            let tok_lp = g.pick(tok_logp, &at);
            let tp = g.exp(tok_logp);
            let tplogp = g.mul(tp, tok_logp);
            let ones_v = g.constant(Mat::ones((self.vocab_size(), 1)));
            let tok_neg_ent = g.matmul(tplogp, ones_v);
            let mut scatter = Mat::zeros((bsz, token_rows.len()));
            for (i, &b) in token_rows.iter().enumerate() {
                scatter[[b, i]] = 1.0;
            }
            let scatter = g.constant(scatter);
            let tl = g.matmul(scatter, tok_lp);
            let te = g.matmul(scatter, tok_neg_ent);
            logp = g.add(logp, tl);
            neg_ent = g.add(neg_ent, te);
        }
        let entropy = g.scale(neg_ent, -1.0);
        Ok(ActionTerms { logp, entropy, value: t.value })
    }
}

impl PolicyNet {
    /// Additive action values: op score + position score + token score
    /// (token term omitted for deletes). Returns `[B, 1]`.
    pub(crate) fn action_scores(&self, g: &mut Graph, states: &[&[usize]], actions: &[MutationAction]) -> Result<Var, AgentError> {
        let bsz = states.len();
        let t = self.trunk(g, states)?;
        let at: Vec<(usize, usize)> = actions.iter().enumerate().map(|(b, a)| (b, a.op.index())).collect();
        let mut q = g.pick(t.op_scores, &at);
        let mut keys: [Option<Var>; 3] = [None; 3];
        let mut pos = Vec::with_capacity(bsz);
        for (b, a) in actions.iter().enumerate() {
            if a.position >= a.op.slots(states[b].len()) {
                return Err(AgentError::InvalidAction);
            }
            let k = match keys[a.op.index()] {
                Some(k) => k,
                None => *keys[a.op.index()].insert(self.keys(g, &t, a.op)),
            };
            let s = self.position_scores(g, &t, k, b, a.op);
            pos.push(g.pick(s, &[(0, a.position)]));
        }
        let pos = g.concat_rows(&pos);
        q = g.add(q, pos);
        let rows: Vec<usize> = (0..bsz).filter(|&b| actions[b].op != MutationOp::Delete).collect();
        if !rows.is_empty() {
            let queries: Vec<(&[usize], MutationOp, usize)> = rows.iter().map(|&b| (states[b], actions[b].op, actions[b].position)).collect();
            let s = self.token_scores(g, &queries)?;
            let at: Vec<(usize, usize)> = rows.iter().enumerate().map(|(i, &b)| (i, actions[b].token as usize)).collect();
            let tok = g.pick(s, &at);
            let mut scatter = Mat::zeros((bsz, rows.len()));
            for (i, &b) in rows.iter().enumerate() {
                scatter[[b, i]] = 1.0;
            }
            let scatter = g.constant(scatter);
            let tok = g.matmul(scatter, tok);
            q = g.add(q, tok);
        }
        Ok(q)
    }

    /// The action maximizing the additive value, chosen factor by factor,
    /// and its value.
    pub(crate) fn greedy(&self, state: &[usize]) -> Result<(MutationAction, f64), AgentError> {
        let mut g = Graph::new(&self.store);
        let t = self.trunk(&mut g, &[state])?;
        let legal = self.op_mask(state.len());
        let mut best: Option<(MutationAction, f64)> = None;
        for op in MutationOp::ALL {
            if !legal[op.index()] {
                continue;
            }
            let mut q = g.value(t.op_scores)[[0, op.index()]];
            let keys = self.keys(&mut g, &t, op);
            let s = self.position_scores(&mut g, &t, keys, 0, op);
            let (position, ps) = argmax(g.value(s).iter().copied());
            q += ps;
            let mut token = 0;
            if op != MutationOp::Delete {
                let mut tg = Graph::new(&self.store);
                let s = self.token_scores(&mut tg, &[(state, op, position)])?;
                let (tk, ts) = argmax(tg.value(s).iter().copied());
                token = tk as u32;
                q += ts;
            }
            if best.as_ref().is_none_or(|b| q > b.1) {
                best = Some((MutationAction { op, position, token }, q));
            }
        }
        Ok(best.expect("replace is always legal"))
    }
}

fn argmax(xs: impl Iterator<Item = f64>) -> (usize, f64) {
    xs.enumerate().fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

struct Trunk {
    h: Var,
    pooled: Var,
    spans: Vec<(usize, usize)>,
    op_scores: Var,
    op_logp: Var,
    value: Var,
}

/// `[len + 1, len]` matrix averaging the neighbours of each insertion slot.
fn insert_slot_matrix(len: usize) -> Mat {
    let mut m = Mat::zeros((len + 1, len));
    for i in 0..=len {
        match (i.checked_sub(1), (i < len).then_some(i)) {
            (Some(l), Some(r)) => {
                m[[i, l]] = 0.5;
                m[[i, r]] = 0.5;
            }
            (Some(l), None) => m[[i, l]] = 1.0,
            (None, Some(r)) => m[[i, r]] = 1.0,
            (None, None) => {}
        }
    }
    m
}

/// The state with `[MASK]` written at (replace) or inserted into (insert)
/// the edited slot.
fn masked_state(state: &[usize], op: MutationOp, position: usize) -> Vec<usize> {
    let mut s = state.to_vec();
    match op {
        MutationOp::Insert => s.insert(position, MASK_ID as usize),
        _ => s[position] = MASK_ID as usize,
    }
    s
}

/// Index drawn from a discrete distribution by inverting its CDF.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let total: f64 = probs.iter().sum();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p / total;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Samples op, then position, then (unless deleting) token. The returned
/// log-probability is the sum of the three factors' log-probabilities.
pub fn sample_action<R: Rng + ?Sized>(
    policy: &PolicyOutput,
    token_dist: impl FnOnce(MutationOp, usize) -> Result<Vec<f64>, AgentError>,
    rng: &mut R,
) -> Result<(MutationAction, f64), AgentError> {
    let op = MutationOp::from_index(sample_categorical(&policy.op, rng)).expect("three ops");
    let pos_dist = &policy.position[op.index()];
    let position = sample_categorical(pos_dist, rng);
    let mut logp = policy.op[op.index()].ln() + pos_dist[position].ln();
    let token = if op == MutationOp::Delete {
        0
    } else {
        let dist = token_dist(op, position)?;
        let t = sample_categorical(&dist, rng);
        logp += dist[t].ln();
        t as u32
    };
    Ok((MutationAction { op, position, token }, logp))
}
