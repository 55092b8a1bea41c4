//! Model parameters and the forward pass.
//!
//! A (user, item) pair is scored in five steps: embedding lookup and
//! concatenation, a one-hidden-layer ReLU network producing the behavior
//! factor `z`, an attention read over the item's words producing the
//! semantic factor `o`, concatenation `z_tilde = [z, o]`, and a logistic
//! output `y_hat = sigmoid(h . z_tilde)`.
//!
//! One matrix `A` serves as user attention memory, item attention memory,
//! and the external output memory. With the memories shared, the attention
//! logit for token `w_j` collapses from `x_ui . [A_j; A_j]` to
//! `(x_u + x_i) . A_j`, which is what [`memnet_read`] computes; the
//! concatenated form survives only in the test oracle that checks it.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

use crate::numkernel::{dot, gaussian_init, matvec, softmax, DenseMatrix, Real, Rng};

/// Model shape. `hidden` defaults to `d` so the behavior and semantic
/// factors enter the output layer at comparable widths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PneConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub vocab_size: usize,
    /// Per-entity embedding dimension.
    pub d: usize,
    /// Width of the CF hidden layer.
    pub hidden: usize,
    /// When false, the semantic branch is disabled and the model reduces to
    /// the one-hidden-layer neural CF baseline.
    pub use_memnet: bool,
}

impl PneConfig {
    pub fn new(num_users: usize, num_items: usize, vocab_size: usize) -> Self {
        PneConfig {
            num_users,
            num_items,
            vocab_size,
            d: 75,
            hidden: 75,
            use_memnet: true,
        }
    }

    /// Length of `z_tilde` and of the output weight vector `h`.
    pub fn output_dim(&self) -> usize {
        self.hidden + if self.use_memnet { self.d } else { 0 }
    }
}

/// All trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct PneParams<T> {
    /// User embeddings, `num_users x d`.
    pub p: DenseMatrix<T>,
    /// Item embeddings, `num_items x d`.
    pub q: DenseMatrix<T>,
    /// Shared word memory, `vocab_size x d`.
    pub a: DenseMatrix<T>,
    /// CF hidden layer weights, `hidden x 2d`.
    pub w: DenseMatrix<T>,
    /// CF hidden layer bias, length `hidden`.
    pub b: Vec<T>,
    /// Output weights, length `output_dim()`.
    pub h: Vec<T>,
}

impl<T: Real> PneParams<T> {
    /// Gaussian initialization of every tensor, in the fixed order
    /// P, Q, A, W, b, h so a seed fully determines the result.
    pub fn init(config: &PneConfig, stddev: f64, rng: &mut Rng) -> Self {
        let p = gaussian_init(rng, config.num_users, config.d, stddev);
        let q = gaussian_init(rng, config.num_items, config.d, stddev);
        let a = gaussian_init(rng, config.vocab_size, config.d, stddev);
        let w = gaussian_init(rng, config.hidden, 2 * config.d, stddev);
        let b = gaussian_init::<T>(rng, 1, config.hidden, stddev).data().to_vec();
        let h = gaussian_init::<T>(rng, 1, config.output_dim(), stddev)
            .data()
            .to_vec();
        PneParams { p, q, a, w, b, h }
    }

    pub fn cast<U: Real>(&self) -> PneParams<U> {
        PneParams {
            p: self.p.cast(),
            q: self.q.cast(),
            a: self.a.cast(),
            w: self.w.cast(),
            b: self.b.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            h: self.h.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.p.all_finite()
            && self.q.all_finite()
            && self.a.all_finite()
            && self.w.all_finite()
            && self.b.iter().all(|v| v.is_finite())
            && self.h.iter().all(|v| v.is_finite())
    }
}

/// Every intermediate of one forward pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub user: u32,
    pub item: u32,
    pub x_u: Vec<T>,
    pub x_i: Vec<T>,
    pub x_ui: Vec<T>,
    /// `W x_ui + b` before the ReLU.
    pub preact: Vec<T>,
    pub z: Vec<T>,
    /// Attention logits per document token (empty for an empty document or
    /// when the semantic branch is off).
    pub attention_logits: Vec<T>,
    pub attention: Vec<T>,
    pub o: Vec<T>,
    pub z_tilde: Vec<T>,
    pub logit: T,
    pub y_hat: T,
}

/// Looks up the user and item embedding rows and concatenates them.
/// Panics if either index is out of range.
pub fn embed<T: Real>(params: &PneParams<T>, user: u32, item: u32) -> (Vec<T>, Vec<T>, Vec<T>) {
    assert!(
        (user as usize) < params.p.rows(),
        "embed: user {} out of range ({} users)",
        user,
        params.p.rows()
    );
    assert!(
        (item as usize) < params.q.rows(),
        "embed: item {} out of range ({} items)",
        item,
        params.q.rows()
    );
    let x_u = params.p.row(user as usize).to_vec();
    let x_i = params.q.row(item as usize).to_vec();
    let mut x_ui = Vec::with_capacity(x_u.len() + x_i.len());
    x_ui.extend_from_slice(&x_u);
    x_ui.extend_from_slice(&x_i);
    (x_u, x_i, x_ui)
}

/// Behavior factor `z = ReLU(W x_ui + b)`. Returns `(z, preact)`.
pub fn cfnet_forward<T: Real>(params: &PneParams<T>, x_ui: &[T]) -> (Vec<T>, Vec<T>) {
    let mut preact = matvec(&params.w, x_ui);
    for (p, &bias) in preact.iter_mut().zip(&params.b) {
        *p += bias;
    }
    let z = preact
        .iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect();
    (z, preact)
}

/// Result of the attention read.
pub struct MemRead<T> {
    pub o: Vec<T>,
    pub attention: Vec<T>,
    pub attention_logits: Vec<T>,
}

/// Semantic factor by content-based addressing: logits
/// `a_j = (x_u + x_i) . A_{w_j}`, weights by softmax, output
/// `o = sum_j p_j A_{w_j}`. Duplicate tokens occupy separate slots. An empty
/// document reads a zero vector, so text-less items degrade to the pure CF
/// path. Panics if a token id is out of range.
pub fn memnet_read<T: Real>(
    params: &PneParams<T>,
    x_u: &[T],
    x_i: &[T],
    doc: &[u32],
) -> MemRead<T> {
    let d = x_u.len();
    if doc.is_empty() {
        return MemRead {
            o: vec![T::zero(); d],
            attention: Vec::new(),
            attention_logits: Vec::new(),
        };
    }
    let query: Vec<T> = x_u.iter().zip(x_i).map(|(&a, &b)| a + b).collect();
    let logits: Vec<T> = doc
        .iter()
        .map(|&w| {
            assert!(
                (w as usize) < params.a.rows(),
                "memnet_read: token id {} out of range ({} words)",
                w,
                params.a.rows()
            );
            dot(&query, params.a.row(w as usize))
        })
        .collect();
    let attention = softmax(&logits);
    let mut o = vec![T::zero(); d];
    for (&w, &p) in doc.iter().zip(&attention) {
        for (acc, &a) in o.iter_mut().zip(params.a.row(w as usize)) {
            *acc += p * a;
        }
    }
    MemRead {
        o,
        attention,
        attention_logits: logits,
    }
}

/// Full forward pass, caching every intermediate for backprop. With
/// `use_memnet` off, `doc` is ignored and `z_tilde` is just `z`.
pub fn forward<T: Real>(
    params: &PneParams<T>,
    config: &PneConfig,
    user: u32,
    item: u32,
    doc: &[u32],
) -> ForwardTrace<T> {
    let (x_u, x_i, x_ui) = embed(params, user, item);
    let (z, preact) = cfnet_forward(params, &x_ui);

    let (o, attention, attention_logits, z_tilde) = if config.use_memnet {
        let read = memnet_read(params, &x_u, &x_i, doc);
        let mut z_tilde = Vec::with_capacity(z.len() + read.o.len());
        z_tilde.extend_from_slice(&z);
        z_tilde.extend_from_slice(&read.o);
        (read.o, read.attention, read.attention_logits, z_tilde)
    } else {
        (Vec::new(), Vec::new(), Vec::new(), z.clone())
    };

    let logit = dot(&params.h, &z_tilde);
    let y_hat = T::one() / (T::one() + (-logit).exp());

    ForwardTrace {
        user,
        item,
        x_u,
        x_i,
        x_ui,
        preact,
        z,
        attention_logits,
        attention,
        o,
        z_tilde,
        logit,
        y_hat,
    }
}
