#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcrg_model::{ModelConfig, ModelParams, Readout, Scalar, Tokens};

pub fn config(layers: usize, heads: usize, width: usize, readout: Readout) -> ModelConfig {
    ModelConfig { input_dim: 5, width, heads, layers, classes: 3, readout }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random token list; row 0 is always valid, the rest with probability 0.7.
pub fn random_tokens<S: Scalar>(rng: &mut ChaCha8Rng, rows: usize, width: usize) -> Tokens<S> {
    let values = (0..rows * width).map(|_| S::from_f64(rng.gen_range(-1.0..1.0))).collect();
    let mask = (0..rows).map(|r| r == 0 || rng.gen_bool(0.7)).collect();
    Tokens::new(rows, width, values, mask).unwrap()
}

/// Same rows, reordered so that output row `i` is input row `perm[i]`.
pub fn permute<S: Scalar>(tokens: &Tokens<S>, perm: &[usize]) -> Tokens<S> {
    let w = tokens.width;
    let values = perm.iter().flat_map(|&r| tokens.values[r * w..(r + 1) * w].iter().copied()).collect();
    let mask = perm.iter().map(|&r| tokens.mask[r]).collect();
    Tokens::new(tokens.rows, w, values, mask).unwrap()
}

pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn max_abs_diff<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()).fold(0.0, f64::max)
}

pub fn params_diff<S: Scalar>(a: &ModelParams<S>, b: &ModelParams<S>) -> f64 {
    a.tensors.iter().zip(&b.tensors).map(|(x, y)| max_abs_diff(&x.data, &y.data)).fold(0.0, f64::max)
}

/// `x W` for row-major `x: rows x k` and `W: k x n`, straightforward loops.
pub fn naive_matmul(x: &[f64], w: &[f64], rows: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * n];
    for r in 0..rows {
        for c in 0..n {
            out[r * n + c] = (0..k).map(|i| x[r * k + i] * w[i * n + c]).sum();
        }
    }
    out
}
