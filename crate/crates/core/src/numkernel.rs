//! Dense vector/matrix kernels and seeded random number generation.
//!
//! Everything here is pure: the only stateful object is [`Rng`]. Training
//! runs at `f32`; the same kernels instantiate at `f64` for test oracles
//! (finite-difference gradient checks are noise-limited at 32 bits).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point scalar the numeric code is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Display
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("f64 -> Real conversion")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("Real -> f64 conversion")
    }
}

impl<T> Real for T where
    T: Float
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Display
        + Debug
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// Precision conversion (used to lift `f32` parameters to `f64` oracles).
    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Matrix-vector product `m * v`. Panics if `v.len() != m.cols()`.
pub fn matvec<T: Real>(m: &DenseMatrix<T>, v: &[T]) -> Vec<T> {
    assert_eq!(
        v.len(),
        m.cols(),
        "matvec: vector length {} does not match {} columns",
        v.len(),
        m.cols()
    );
    let mut out = vec![T::zero(); m.rows()];
    for (r, out_r) in out.iter_mut().enumerate() {
        let row = m.row(r);
        let mut acc = T::zero();
        for (a, b) in row.iter().zip(v) {
            acc += *a * *b;
        }
        *out_r = acc;
    }
    out
}

/// Transposed product `m^T * v` without materializing the transpose.
/// Panics if `v.len() != m.rows()`.
pub fn matvec_t<T: Real>(m: &DenseMatrix<T>, v: &[T]) -> Vec<T> {
    assert_eq!(
        v.len(),
        m.rows(),
        "matvec_t: vector length {} does not match {} rows",
        v.len(),
        m.rows()
    );
    let mut out = vec![T::zero(); m.cols()];
    for (r, &coef) in v.iter().enumerate() {
        let row = m.row(r);
        for (o, &a) in out.iter_mut().zip(row) {
            *o += coef * a;
        }
    }
    out
}

/// Inner product. Panics on length mismatch.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "dot: length mismatch {} vs {}", a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Numerically stable softmax: subtracts the max before exponentiating, so
/// arbitrarily large finite logits cannot overflow. Panics on empty input.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    assert!(!logits.is_empty(), "softmax: empty input");
    let mut max = logits[0];
    for &v in &logits[1..] {
        if v > max {
            max = v;
        }
    }
    let mut out: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// xoshiro256++ seeded through splitmix64.
///
/// The generator is fixed here rather than taken from a library so that a
/// given seed produces the same stream on every platform and in every build
/// of this crate. Gaussian draws use the Box-Muller transform on two fresh
/// uniforms per call (no spare caching).
#[derive(Clone, Debug)]
pub struct Rng {
    state: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let state = [
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
        ];
        Rng { state }
    }

    /// Deterministic sub-stream `stream` of `base_seed`. Used for per-user
    /// evaluation candidate sampling: the candidates for a user depend only
    /// on `(base_seed, user)`, never on iteration order or thread count.
    pub fn derive(base_seed: u64, stream: u64) -> Self {
        let mut s = base_seed.wrapping_add((stream.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        Rng::new(splitmix64(&mut s))
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)` without modulo bias. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "Rng::below: n must be positive");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    /// Normal(0, stddev^2) via Box-Muller. Sampling happens at `f64` even
    /// when the caller stores `f32`, so both precisions see the same values.
    pub fn gaussian(&mut self, stddev: f64) -> f64 {
        let u1 = 1.0 - self.next_f64(); // in (0, 1]
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        r * (std::f64::consts::TAU * u2).cos() * stddev
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            slice.swap(i, j);
        }
    }
}

/// Matrix with i.i.d. Normal(0, stddev^2) entries, deterministic given the
/// generator state. Panics unless `stddev > 0`.
pub fn gaussian_init<T: Real>(rng: &mut Rng, rows: usize, cols: usize, stddev: f64) -> DenseMatrix<T> {
    assert!(stddev > 0.0, "gaussian_init: stddev must be > 0");
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.gaussian(stddev)))
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}
