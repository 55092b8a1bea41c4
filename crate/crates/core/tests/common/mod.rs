//! Test-only reference implementations, deliberately independent of the
//! library's computation paths: plain loops, no shared kernels.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use pne_core::model::{forward, PneConfig, PneParams};
use pne_core::numkernel::Rng;
use pne_core::train::{backward, loss_from_logit, Gradients};

/// Everything the reference forward pass produces.
pub struct OracleForward {
    pub z: Vec<f64>,
    pub attention: Vec<f64>,
    pub o: Vec<f64>,
    pub logit: f64,
    pub y_hat: f64,
}

/// Reference forward pass, written from the model definition with plain
/// loops and the attention memory in its concatenated form: each token's memory is
/// `[A_j; A_j]` (user and item memories coincide because all memory
/// matrices are shared) and the logit is the full 2d-dimensional inner
/// product with `x_ui`. The library computes the algebraically reduced
/// `(x_u + x_i) . A_j`; agreement here confirms the reduction.
pub fn oracle_forward(
    params: &PneParams<f64>,
    config: &PneConfig,
    user: u32,
    item: u32,
    doc: &[u32],
) -> OracleForward {
    let d = config.d;
    let hidden = config.hidden;

    let mut x_ui = vec![0.0f64; 2 * d];
    for c in 0..d {
        x_ui[c] = params.p.get(user as usize, c);
        x_ui[d + c] = params.q.get(item as usize, c);
    }

    let mut z = vec![0.0f64; hidden];
    for r in 0..hidden {
        let mut pre = params.b[r];
        for c in 0..2 * d {
            pre += params.w.get(r, c) * x_ui[c];
        }
        z[r] = if pre > 0.0 { pre } else { 0.0 };
    }

    let (attention, o) = if config.use_memnet && !doc.is_empty() {
        let mut logits = vec![0.0f64; doc.len()];
        for (j, &w) in doc.iter().enumerate() {
            // concatenated memory [A_w; A_w] against [x_u; x_i]
            let mut a = 0.0f64;
            for c in 0..d {
                a += x_ui[c] * params.a.get(w as usize, c);
                a += x_ui[d + c] * params.a.get(w as usize, c);
            }
            logits[j] = a;
        }
        let mut exps = vec![0.0f64; doc.len()];
        let mut sum = 0.0f64;
        for (e, &l) in exps.iter_mut().zip(&logits) {
            *e = l.exp();
            sum += *e;
        }
        let attention: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let mut o = vec![0.0f64; d];
        for (j, &w) in doc.iter().enumerate() {
            for (c, out) in o.iter_mut().enumerate() {
                *out += attention[j] * params.a.get(w as usize, c);
            }
        }
        (attention, o)
    } else {
        (Vec::new(), vec![0.0f64; if config.use_memnet { d } else { 0 }])
    };

    let mut logit = 0.0f64;
    for (r, zv) in z.iter().enumerate() {
        logit += params.h[r] * zv;
    }
    for (c, ov) in o.iter().enumerate() {
        logit += params.h[hidden + c] * ov;
    }
    let y_hat = 1.0 / (1.0 + (-logit).exp());

    OracleForward {
        z,
        attention,
        o,
        logit,
        y_hat,
    }
}

/// One gradient-check scenario.
pub struct GradCheckCase {
    pub config: PneConfig,
    pub params: PneParams<f64>,
    pub user: u32,
    pub item: u32,
    pub doc: Vec<u32>,
    pub y: f64,
}

/// Draws a random case, rejecting parameter draws that put any CF
/// pre-activation within 1e-3 of the ReLU kink (central differences are
/// meaningless across the kink).
pub fn random_case(
    rng: &mut Rng,
    d: usize,
    hidden: usize,
    doc_len: usize,
    use_memnet: bool,
) -> GradCheckCase {
    let config = PneConfig {
        num_users: 4,
        num_items: 5,
        vocab_size: 6,
        d,
        hidden,
        use_memnet,
    };
    loop {
        let params: PneParams<f64> = PneParams::init(&config, 0.6, rng);
        let user = rng.below(config.num_users as u64) as u32;
        let item = rng.below(config.num_items as u64) as u32;
        let doc: Vec<u32> = (0..doc_len)
            .map(|_| rng.below(config.vocab_size as u64) as u32)
            .collect();
        let y = if rng.next_f64() < 0.5 { 1.0 } else { 0.0 };

        let trace = forward(&params, &config, user, item, &doc);
        if trace.preact.iter().all(|p| p.abs() > 1e-3) {
            return GradCheckCase {
                config,
                params,
                user,
                item,
                doc,
                y,
            };
        }
    }
}

fn tensor_len(params: &PneParams<f64>, name: &str) -> usize {
    match name {
        "P" => params.p.data().len(),
        "Q" => params.q.data().len(),
        "A" => params.a.data().len(),
        "W" => params.w.data().len(),
        "b" => params.b.len(),
        "h" => params.h.len(),
        _ => unreachable!(),
    }
}

fn tensor_slice_mut<'a>(params: &'a mut PneParams<f64>, name: &str) -> &'a mut [f64] {
    match name {
        "P" => params.p.data_mut(),
        "Q" => params.q.data_mut(),
        "A" => params.a.data_mut(),
        "W" => params.w.data_mut(),
        "b" => &mut params.b,
        "h" => &mut params.h,
        _ => unreachable!(),
    }
}

/// Expands the sparse-row gradient representation into a dense flat tensor
/// so every component, including implicit zeros, can be compared.
fn analytic_flat(grads: &Gradients<f64>, params: &PneParams<f64>, name: &str) -> Vec<f64> {
    let mut out = vec![0.0f64; tensor_len(params, name)];
    let fill_rows = |out: &mut Vec<f64>, rows: &[(u32, Vec<f64>)], cols: usize| {
        for &(row, ref vals) in rows {
            let start = row as usize * cols;
            for (c, &v) in vals.iter().enumerate() {
                out[start + c] += v;
            }
        }
    };
    match name {
        "P" => fill_rows(&mut out, &grads.p_rows, params.p.cols()),
        "Q" => fill_rows(&mut out, &grads.q_rows, params.q.cols()),
        "A" => fill_rows(&mut out, &grads.a_rows, params.a.cols()),
        "W" => out.copy_from_slice(grads.w.data()),
        "b" => out.copy_from_slice(&grads.b),
        "h" => out.copy_from_slice(&grads.h),
        _ => unreachable!(),
    }
    out
}

/// Central-difference check of every gradient component of every tensor.
/// Returns the maximum relative error, with the comparison floored at 1e-6
/// so that true zeros compare as zero.
pub fn max_relative_error(case: &GradCheckCase, step: f64) -> f64 {
    let GradCheckCase {
        config,
        params,
        user,
        item,
        doc,
        y,
    } = case;

    let trace = forward(params, config, *user, *item, doc);
    let grads = backward(&trace, params, config, *y, doc);

    let loss_at = |p: &PneParams<f64>| -> f64 {
        loss_from_logit(*y, forward(p, config, *user, *item, doc).logit)
    };

    let mut worst = 0.0f64;
    for name in ["P", "Q", "A", "W", "b", "h"] {
        let analytic = analytic_flat(&grads, params, name);
        for idx in 0..tensor_len(params, name) {
            let mut perturbed = params.clone();
            let original = tensor_slice_mut(&mut perturbed, name)[idx];
            tensor_slice_mut(&mut perturbed, name)[idx] = original + step;
            let plus = loss_at(&perturbed);
            tensor_slice_mut(&mut perturbed, name)[idx] = original - step;
            let minus = loss_at(&perturbed);
            let numeric = (plus - minus) / (2.0 * step);

            let denom = analytic[idx].abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic[idx] - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}
