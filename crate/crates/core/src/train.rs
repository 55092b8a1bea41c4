//! Hand-derived backpropagation, lazy sparse Adam, and the epoch loop.
//!
//! Each epoch builds the training set S as every observed positive plus
//! `neg_ratio` freshly sampled negatives per positive, shuffles it, and
//! applies one Adam step per mini-batch with the gradient averaged over the
//! batch. Per-example gradients accumulate into 64-bit buffers and are
//! reduced in example order, so a run is bit-reproducible for any
//! `threads` setting.

use std::collections::BTreeMap;

use crate::data::{sample_negatives, Corpus, InteractionDataset};
use crate::error::PneError;
use crate::model::{forward, ForwardTrace, PneConfig, PneParams};
use crate::numkernel::{matvec_t, DenseMatrix, Real, Rng};

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Negatives sampled per positive, each epoch.
    pub neg_ratio: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub init_stddev: f64,
    /// Worker threads for the per-batch forward/backward passes. Results
    /// are identical for any value.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            neg_ratio: 1,
            epochs: 50,
            seed: 42,
            learning_rate: 0.001,
            init_stddev: 0.01,
            threads: 1,
        }
    }
}

/// Binary cross-entropy from a predicted probability, with the probability
/// clamped to `[1e-7, 1 - 1e-7]` so saturated predictions stay finite.
pub fn loss<T: Real>(y: T, y_hat: T) -> T {
    let eps = T::from_f64(1e-7);
    let p = y_hat.max(eps).min(T::one() - eps);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

/// Binary cross-entropy straight from the logit:
/// `max(l, 0) - l*y + ln(1 + exp(-|l|))`. Exact and finite for any logit;
/// this is the form the training loop reports and the gradient check
/// differentiates.
pub fn loss_from_logit<T: Real>(y: T, logit: T) -> T {
    let zero = T::zero();
    logit.max(zero) - logit * y + (T::one() + (-logit.abs()).exp()).ln()
}

/// Per-example parameter gradients. Dense tensors are full shape; embedding
/// gradients carry only the touched rows, sorted by row index.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub w: DenseMatrix<T>,
    pub b: Vec<T>,
    pub h: Vec<T>,
    pub p_rows: Vec<(u32, Vec<T>)>,
    pub q_rows: Vec<(u32, Vec<T>)>,
    pub a_rows: Vec<(u32, Vec<T>)>,
}

/// Exact gradients of the binary cross-entropy at `trace`, which must come
/// from [`forward`] on the same parameters and inputs.
pub fn backward<T: Real>(
    trace: &ForwardTrace<T>,
    params: &PneParams<T>,
    config: &PneConfig,
    y: T,
    doc: &[u32],
) -> Gradients<T> {
    let d = config.d;
    let hidden = config.hidden;
    debug_assert_eq!(trace.x_ui.len(), 2 * d);
    debug_assert_eq!(trace.preact.len(), hidden);
    debug_assert_eq!(trace.z_tilde.len(), config.output_dim());

    let dlogit = trace.y_hat - y;

    let grad_h: Vec<T> = trace.z_tilde.iter().map(|&v| v * dlogit).collect();
    let dz_tilde: Vec<T> = params.h.iter().map(|&v| v * dlogit).collect();

    // behavior branch
    let dpreact: Vec<T> = dz_tilde[..hidden]
        .iter()
        .zip(&trace.preact)
        .map(|(&g, &pre)| if pre > T::zero() { g } else { T::zero() })
        .collect();
    let mut grad_w = DenseMatrix::zeros(hidden, 2 * d);
    for (r, &g) in dpreact.iter().enumerate() {
        for (out, &x) in grad_w.row_mut(r).iter_mut().zip(&trace.x_ui) {
            *out = g * x;
        }
    }
    let grad_b = dpreact.clone();
    let dx_ui = matvec_t(&params.w, &dpreact);
    let mut dx_u: Vec<T> = dx_ui[..d].to_vec();
    let mut dx_i: Vec<T> = dx_ui[d..].to_vec();

    // semantic branch
    let mut a_rows: BTreeMap<u32, Vec<T>> = BTreeMap::new();
    if config.use_memnet && !doc.is_empty() {
        let d_o = &dz_tilde[hidden..];
        let weights = &trace.attention;
        debug_assert_eq!(weights.len(), doc.len());

        // value path: o = sum_j p_j A_j
        let mut dp = vec![T::zero(); doc.len()];
        for (j, &w) in doc.iter().enumerate() {
            let row = params.a.row(w as usize);
            let mut acc = T::zero();
            for (&g, &a) in d_o.iter().zip(row) {
                acc += g * a;
            }
            dp[j] = acc;
            let slot = a_rows.entry(w).or_insert_with(|| vec![T::zero(); d]);
            for (out, &g) in slot.iter_mut().zip(d_o) {
                *out += weights[j] * g;
            }
        }

        // softmax Jacobian: da_j = p_j (dp_j - sum_k p_k dp_k)
        let weighted_sum: T = weights.iter().zip(&dp).map(|(&p, &g)| p * g).sum();
        let query: Vec<T> = trace.x_u.iter().zip(&trace.x_i).map(|(&a, &b)| a + b).collect();
        for (j, &w) in doc.iter().enumerate() {
            let da = weights[j] * (dp[j] - weighted_sum);
            let row = params.a.row(w as usize);
            let slot = a_rows.get_mut(&w).expect("slot created in value pass");
            for c in 0..d {
                slot[c] += da * query[c];
                let delta = da * row[c];
                dx_u[c] += delta;
                dx_i[c] += delta;
            }
        }
    }

    Gradients {
        w: grad_w,
        b: grad_b,
        h: grad_h,
        p_rows: vec![(trace.user, dx_u)],
        q_rows: vec![(trace.item, dx_i)],
        a_rows: a_rows.into_iter().collect(),
    }
}

/// Adam moment buffers. Embedding moments are updated lazily: only rows
/// that appear in a step's gradient get their moments decayed that step,
/// with bias correction driven by the global step counter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m_w: DenseMatrix<T>,
    v_w: DenseMatrix<T>,
    m_b: Vec<T>,
    v_b: Vec<T>,
    m_h: Vec<T>,
    v_h: Vec<T>,
    m_p: DenseMatrix<T>,
    v_p: DenseMatrix<T>,
    m_q: DenseMatrix<T>,
    v_q: DenseMatrix<T>,
    m_a: DenseMatrix<T>,
    v_a: DenseMatrix<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: &PneConfig, learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m_w: DenseMatrix::zeros(config.hidden, 2 * config.d),
            v_w: DenseMatrix::zeros(config.hidden, 2 * config.d),
            m_b: vec![T::zero(); config.hidden],
            v_b: vec![T::zero(); config.hidden],
            m_h: vec![T::zero(); config.output_dim()],
            v_h: vec![T::zero(); config.output_dim()],
            m_p: DenseMatrix::zeros(config.num_users, config.d),
            v_p: DenseMatrix::zeros(config.num_users, config.d),
            m_q: DenseMatrix::zeros(config.num_items, config.d),
            v_q: DenseMatrix::zeros(config.num_items, config.d),
            m_a: DenseMatrix::zeros(config.vocab_size, config.d),
            v_a: DenseMatrix::zeros(config.vocab_size, config.d),
        }
    }
}

struct AdamCoef<T> {
    beta1: T,
    beta2: T,
    one_minus_beta1: T,
    one_minus_beta2: T,
    inv_bc1: T,
    inv_bc2: T,
    lr: T,
    eps: T,
}

fn update_slice<T: Real>(
    tensor: &'static str,
    coef: &AdamCoef<T>,
    m: &mut [T],
    v: &mut [T],
    param: &mut [T],
    grad: &[T],
) -> Result<(), PneError> {
    for ((m, v), (p, &g)) in m.iter_mut().zip(v.iter_mut()).zip(param.iter_mut().zip(grad)) {
        if !g.is_finite() {
            return Err(PneError::NonFinite { tensor });
        }
        *m = coef.beta1 * *m + coef.one_minus_beta1 * g;
        *v = coef.beta2 * *v + coef.one_minus_beta2 * g * g;
        let m_hat = *m * coef.inv_bc1;
        let v_hat = *v * coef.inv_bc2;
        *p -= coef.lr * m_hat / (v_hat.sqrt() + coef.eps);
        if !p.is_finite() {
            return Err(PneError::NonFinite { tensor });
        }
    }
    Ok(())
}

/// One Adam step with bias correction. `grads` is typically a batch mean.
/// Aborts with an error naming the tensor if a gradient or an updated
/// parameter is non-finite.
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    params: &mut PneParams<T>,
    grads: &Gradients<T>,
) -> Result<(), PneError> {
    state.step += 1;
    let t = state.step as i32;
    let coef = AdamCoef {
        beta1: T::from_f64(state.beta1),
        beta2: T::from_f64(state.beta2),
        one_minus_beta1: T::from_f64(1.0 - state.beta1),
        one_minus_beta2: T::from_f64(1.0 - state.beta2),
        inv_bc1: T::from_f64(1.0 / (1.0 - state.beta1.powi(t))),
        inv_bc2: T::from_f64(1.0 / (1.0 - state.beta2.powi(t))),
        lr: T::from_f64(state.learning_rate),
        eps: T::from_f64(state.epsilon),
    };

    update_slice(
        "W",
        &coef,
        state.m_w.data_mut(),
        state.v_w.data_mut(),
        params.w.data_mut(),
        grads.w.data(),
    )?;
    update_slice("b", &coef, &mut state.m_b, &mut state.v_b, &mut params.b, &grads.b)?;
    update_slice("h", &coef, &mut state.m_h, &mut state.v_h, &mut params.h, &grads.h)?;

    for &(row, ref g) in &grads.p_rows {
        let r = row as usize;
        update_slice(
            "P",
            &coef,
            state.m_p.row_mut(r),
            state.v_p.row_mut(r),
            params.p.row_mut(r),
            g,
        )?;
    }
    for &(row, ref g) in &grads.q_rows {
        let r = row as usize;
        update_slice(
            "Q",
            &coef,
            state.m_q.row_mut(r),
            state.v_q.row_mut(r),
            params.q.row_mut(r),
            g,
        )?;
    }
    for &(row, ref g) in &grads.a_rows {
        let r = row as usize;
        update_slice(
            "A",
            &coef,
            state.m_a.row_mut(r),
            state.v_a.row_mut(r),
            params.a.row_mut(r),
            g,
        )?;
    }
    Ok(())
}

/// 64-bit batch accumulator; examples fold in batch order regardless of how
/// many threads computed them.
struct BatchAccumulator {
    w: Vec<f64>,
    b: Vec<f64>,
    h: Vec<f64>,
    p: BTreeMap<u32, Vec<f64>>,
    q: BTreeMap<u32, Vec<f64>>,
    a: BTreeMap<u32, Vec<f64>>,
    d: usize,
    hidden: usize,
}

impl BatchAccumulator {
    fn new(config: &PneConfig) -> Self {
        BatchAccumulator {
            w: vec![0.0; config.hidden * 2 * config.d],
            b: vec![0.0; config.hidden],
            h: vec![0.0; config.output_dim()],
            p: BTreeMap::new(),
            q: BTreeMap::new(),
            a: BTreeMap::new(),
            d: config.d,
            hidden: config.hidden,
        }
    }

    fn add<T: Real>(&mut self, g: &Gradients<T>) {
        for (acc, &v) in self.w.iter_mut().zip(g.w.data()) {
            *acc += v.as_f64();
        }
        for (acc, &v) in self.b.iter_mut().zip(&g.b) {
            *acc += v.as_f64();
        }
        for (acc, &v) in self.h.iter_mut().zip(&g.h) {
            *acc += v.as_f64();
        }
        let d = self.d;
        for (map, rows) in [(&mut self.p, &g.p_rows), (&mut self.q, &g.q_rows), (&mut self.a, &g.a_rows)] {
            for &(row, ref vals) in rows.iter() {
                let acc = map.entry(row).or_insert_with(|| vec![0.0; d]);
                for (a, &v) in acc.iter_mut().zip(vals) {
                    *a += v.as_f64();
                }
            }
        }
    }

    fn into_mean<T: Real>(self, count: usize) -> Gradients<T> {
        let scale = 1.0 / count as f64;
        let conv = |v: Vec<f64>| -> Vec<T> { v.into_iter().map(|x| T::from_f64(x * scale)).collect() };
        let conv_map = |m: BTreeMap<u32, Vec<f64>>| -> Vec<(u32, Vec<T>)> {
            m.into_iter().map(|(row, v)| (row, conv(v))).collect()
        };
        Gradients {
            w: DenseMatrix::from_vec(self.hidden, 2 * self.d, conv(self.w)),
            b: conv(self.b),
            h: conv(self.h),
            p_rows: conv_map(self.p),
            q_rows: conv_map(self.q),
            a_rows: conv_map(self.a),
        }
    }
}

fn forward_backward<T: Real>(
    params: &PneParams<T>,
    config: &PneConfig,
    corpus: &Corpus,
    example: &(u32, u32, bool),
) -> (Gradients<T>, f64) {
    let &(user, item, positive) = example;
    let doc = corpus.doc(item);
    let trace = forward(params, config, user, item, doc);
    let y = if positive { T::one() } else { T::zero() };
    let example_loss = loss_from_logit(if positive { 1.0 } else { 0.0 }, trace.logit.as_f64());
    (backward(&trace, params, config, y, doc), example_loss)
}

fn compute_batch<T: Real>(
    params: &PneParams<T>,
    config: &PneConfig,
    corpus: &Corpus,
    batch: &[(u32, u32, bool)],
    threads: usize,
) -> Vec<(Gradients<T>, f64)> {
    if threads <= 1 || batch.len() < 2 {
        return batch
            .iter()
            .map(|ex| forward_backward(params, config, corpus, ex))
            .collect();
    }
    let chunk = batch.len().div_ceil(threads);
    let mut slots: Vec<Option<(Gradients<T>, f64)>> = (0..batch.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot_chunk, example_chunk) in slots.chunks_mut(chunk).zip(batch.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, ex) in slot_chunk.iter_mut().zip(example_chunk) {
                    *slot = Some(forward_backward(params, config, corpus, ex));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("batch slot filled")).collect()
}

/// Runs one epoch and returns the mean loss over S.
pub fn train_epoch<T: Real>(
    params: &mut PneParams<T>,
    state: &mut AdamState<T>,
    ds: &InteractionDataset,
    corpus: &Corpus,
    config: &PneConfig,
    tcfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64, PneError> {
    assert!(!ds.train_pairs.is_empty(), "train_epoch: no training pairs");
    assert!(tcfg.batch_size >= 1 && tcfg.neg_ratio >= 1);

    let mut examples: Vec<(u32, u32, bool)> =
        Vec::with_capacity(ds.train_pairs.len() * (1 + tcfg.neg_ratio));
    for &(user, item) in &ds.train_pairs {
        examples.push((user, item, true));
        let negatives = sample_negatives(ds, user, tcfg.neg_ratio, &[], rng);
        for neg in negatives.items {
            examples.push((user, neg, false));
        }
    }
    rng.shuffle(&mut examples);

    let mut total_loss = 0.0f64;
    for batch in examples.chunks(tcfg.batch_size) {
        let results = compute_batch(params, config, corpus, batch, tcfg.threads);
        let mut acc = BatchAccumulator::new(config);
        for (grads, example_loss) in &results {
            acc.add(grads);
            total_loss += example_loss;
        }
        let mean = acc.into_mean::<T>(batch.len());
        adam_step(state, params, &mean)?;
    }
    Ok(total_loss / examples.len() as f64)
}

/// Multi-epoch convenience wrapper: fresh Adam state, one callback per epoch
/// with the epoch index and mean loss.
pub fn fit<T: Real>(
    params: &mut PneParams<T>,
    ds: &InteractionDataset,
    corpus: &Corpus,
    config: &PneConfig,
    tcfg: &TrainConfig,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(), PneError> {
    let mut state = AdamState::new(config, tcfg.learning_rate);
    for epoch in 0..tcfg.epochs {
        let mean_loss = train_epoch(params, &mut state, ds, corpus, config, tcfg, rng)?;
        on_epoch(epoch, mean_loss);
    }
    Ok(())
}
