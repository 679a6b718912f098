//! Encoder forward and backward passes.
//!
//! Each layer is pre-LN:
//! `Z' = MHA(LN1(Z)) + Z`, `Z'' = FFN(LN2(Z')) + Z'` with a GELU FFN of
//! width `4D`. Attention has no biases. Padded rows never influence valid
//! rows: they are dropped before the input projection and, where an API
//! returns per-row outputs, come back as zeros.

use rayon::prelude::*;
use vcrg_core::tokenize::TokenRecord;

use crate::config::Readout;
use crate::error::{Error, Result};
use crate::ops::{
    add_bias, add_into, column_sums_acc, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul,
    matmul_nt, matmul_tn_acc, softmax_row, LnCache,
};
use crate::params::{ModelParams, Slot};
use crate::scalar::Scalar;

/// One node's token list in model precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokens<S> {
    pub rows: usize,
    pub width: usize,
    pub values: Vec<S>,
    pub mask: Vec<bool>,
}

impl<S: Scalar> Tokens<S> {
    pub fn new(rows: usize, width: usize, values: Vec<S>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != rows * width || mask.len() != rows {
            return Err(Error::Shape(format!(
                "{} values and {} mask bits for {rows}x{width} tokens",
                values.len(),
                mask.len()
            )));
        }
        Ok(Self { rows, width, values, mask })
    }

    pub fn from_record(record: &TokenRecord, width: usize) -> Result<Self> {
        let values = record.values.iter().map(|&x| S::from_f64(x as f64)).collect();
        Self::new(record.row_count(), width, values, record.mask.clone())
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// The valid rows only, in order.
    fn compact(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.valid_count() * self.width);
        for (r, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            out.extend_from_slice(&self.values[r * self.width..(r + 1) * self.width]);
        }
        out
    }
}

struct Attention<S> {
    q: Vec<S>,
    k: Vec<S>,
    v: Vec<S>,
    /// `heads x rows x rows`.
    probs: Vec<S>,
    /// Concatenated head outputs before `W_O`.
    o: Vec<S>,
}

struct LayerCache<S> {
    ln1: LnCache<S>,
    a: Vec<S>,
    attn: Attention<S>,
    ln2: LnCache<S>,
    b: Vec<S>,
    f1: Vec<S>,
    g: Vec<S>,
}

struct Cache<S> {
    rows: usize,
    x: Vec<S>,
    layers: Vec<LayerCache<S>>,
    z: Vec<S>,
    pooled: Vec<S>,
    /// Readout weights per row (attention readout only).
    weights: Vec<S>,
}

/// Multi-head attention of layer `layer` on `a` (`rows x D`, all valid).
/// Returns the output after `W_O`.
fn mha<S: Scalar>(params: &ModelParams<S>, layer: usize, a: &[S], rows: usize) -> (Vec<S>, Attention<S>) {
    let cfg = params.config;
    let (d, heads, dh) = (cfg.width, cfg.heads, cfg.head_dim());
    let q = matmul(a, params.layer(layer, Slot::Wq), rows, d, d);
    let k = matmul(a, params.layer(layer, Slot::Wk), rows, d, d);
    let v = matmul(a, params.layer(layer, Slot::Wv), rows, d, d);
    let scale = S::one() / S::from_usize(dh).sqrt();
    let mut probs = vec![S::zero(); heads * rows * rows];
    let mut o = vec![S::zero(); rows * d];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..rows {
            let p = &mut probs[(h * rows + i) * rows..(h * rows + i + 1) * rows];
            let qi = &q[i * d + cols.start..i * d + cols.end];
            for (j, pj) in p.iter_mut().enumerate() {
                *pj = dot(qi, &k[j * d + cols.start..j * d + cols.end]) * scale;
            }
            softmax_row(p);
            let oi = &mut o[i * d + cols.start..i * d + cols.end];
            for (j, &pj) in p.iter().enumerate() {
                for (out, &vj) in oi.iter_mut().zip(&v[j * d + cols.start..j * d + cols.end]) {
                    *out = *out + pj * vj;
                }
            }
        }
    }
    let out = matmul(&o, params.layer(layer, Slot::Wo), rows, d, d);
    (out, Attention { q, k, v, probs, o })
}

/// Returns `dA` and accumulates the projection gradients.
fn mha_backward<S: Scalar>(
    params: &ModelParams<S>,
    grads: &mut ModelParams<S>,
    layer: usize,
    a: &[S],
    cache: &Attention<S>,
    dout: &[S],
    rows: usize,
) -> Vec<S> {
    let cfg = params.config;
    let (d, heads, dh) = (cfg.width, cfg.heads, cfg.head_dim());
    let scale = S::one() / S::from_usize(dh).sqrt();
    let idx = |slot| params.layer_index(layer, slot);

    matmul_tn_acc(&cache.o, dout, rows, d, d, &mut grads.tensors[idx(Slot::Wo)].data);
    let d_o = matmul_nt(dout, params.layer(layer, Slot::Wo), rows, d, d);

    let mut dq = vec![S::zero(); rows * d];
    let mut dk = vec![S::zero(); rows * d];
    let mut dv = vec![S::zero(); rows * d];
    let mut dp = vec![S::zero(); rows];
    for h in 0..heads {
        let c0 = h * dh;
        for i in 0..rows {
            let p = &cache.probs[(h * rows + i) * rows..(h * rows + i + 1) * rows];
            let doi = &d_o[i * d + c0..i * d + c0 + dh];
            for j in 0..rows {
                dp[j] = dot(doi, &cache.v[j * d + c0..j * d + c0 + dh]);
                for (g, &x) in dv[j * d + c0..j * d + c0 + dh].iter_mut().zip(doi) {
                    *g = *g + p[j] * x;
                }
            }
            let inner = dot(p, &dp);
            for j in 0..rows {
                let ds = p[j] * (dp[j] - inner) * scale;
                if ds == S::zero() {
                    continue;
                }
                for c in 0..dh {
                    dq[i * d + c0 + c] = dq[i * d + c0 + c] + ds * cache.k[j * d + c0 + c];
                    dk[j * d + c0 + c] = dk[j * d + c0 + c] + ds * cache.q[i * d + c0 + c];
                }
            }
        }
    }
    let mut da = vec![S::zero(); rows * d];
    for (slot, g) in [(Slot::Wq, &dq), (Slot::Wk, &dk), (Slot::Wv, &dv)] {
        matmul_tn_acc(a, g, rows, d, d, &mut grads.tensors[idx(slot)].data);
        add_into(&mut da, &matmul_nt(g, params.layer(layer, slot), rows, d, d));
    }
    da
}

/// Multi-head self-attention of layer `layer` applied directly to `z`
/// (`rows x D`). Masked rows are ignored as keys and produce zero outputs.
pub fn attention_forward<S: Scalar>(params: &ModelParams<S>, layer: usize, z: &[S], mask: &[bool]) -> Result<Vec<S>> {
    let d = params.config.width;
    if layer >= params.config.layers {
        return Err(Error::Shape(format!("layer {layer} of {}", params.config.layers)));
    }
    if z.len() != mask.len() * d {
        return Err(Error::Shape(format!("{} values for {} rows of width {d}", z.len(), mask.len())));
    }
    let valid: Vec<usize> = (0..mask.len()).filter(|&r| mask[r]).collect();
    if valid.is_empty() {
        return Err(Error::NoValidTokens);
    }
    let compact: Vec<S> = valid.iter().flat_map(|&r| z[r * d..(r + 1) * d].iter().copied()).collect();
    let (out, _) = mha(params, layer, &compact, valid.len());
    let mut full = vec![S::zero(); z.len()];
    for (i, &r) in valid.iter().enumerate() {
        full[r * d..(r + 1) * d].copy_from_slice(&out[i * d..(i + 1) * d]);
    }
    Ok(full)
}

fn check_input<S: Scalar>(params: &ModelParams<S>, tokens: &Tokens<S>) -> Result<()> {
    if tokens.width != params.config.input_dim {
        return Err(Error::Shape(format!(
            "tokens have width {} but the model expects {}",
            tokens.width, params.config.input_dim
        )));
    }
    if tokens.valid_count() == 0 {
        return Err(Error::NoValidTokens);
    }
    Ok(())
}

fn forward<S: Scalar>(params: &ModelParams<S>, tokens: &Tokens<S>) -> Result<(Vec<S>, Cache<S>)> {
    check_input(params, tokens)?;
    let cfg = params.config;
    let (d, hidden) = (cfg.width, cfg.hidden());
    let x = tokens.compact();
    let rows = tokens.valid_count();

    let mut z = matmul(&x, params.input_w(), rows, cfg.input_dim, d);
    add_bias(&mut z, params.input_b());
    let mut layers = Vec::with_capacity(cfg.layers);
    for t in 0..cfg.layers {
        let (a, ln1) = layer_norm(&z, d, params.layer(t, Slot::Ln1G), params.layer(t, Slot::Ln1B));
        let (m, attn) = mha(params, t, &a, rows);
        add_into(&mut z, &m);
        let (b, ln2) = layer_norm(&z, d, params.layer(t, Slot::Ln2G), params.layer(t, Slot::Ln2B));
        let mut f1 = matmul(&b, params.layer(t, Slot::W1), rows, d, hidden);
        add_bias(&mut f1, params.layer(t, Slot::B1));
        let g: Vec<S> = f1.iter().map(|&v| gelu(v)).collect();
        let mut f2 = matmul(&g, params.layer(t, Slot::W2), rows, hidden, d);
        add_bias(&mut f2, params.layer(t, Slot::B2));
        add_into(&mut z, &f2);
        layers.push(LayerCache { ln1, a, attn, ln2, b, f1, g });
    }

    let mut pooled = vec![S::zero(); d];
    let mut weights = Vec::new();
    match cfg.readout {
        Readout::Mean | Readout::Sum => {
            column_sums_acc(&z, d, &mut pooled);
            if cfg.readout == Readout::Mean {
                let inv = S::one() / S::from_usize(rows);
                pooled.iter_mut().for_each(|p| *p = *p * inv);
            }
        }
        Readout::Attention => {
            let q = &params.tensors[params.query_index().unwrap()].data;
            let scale = S::one() / S::from_usize(d).sqrt();
            weights = z.chunks_exact(d).map(|row| dot(row, q) * scale).collect();
            softmax_row(&mut weights);
            for (row, &w) in z.chunks_exact(d).zip(&weights) {
                for (p, &v) in pooled.iter_mut().zip(row) {
                    *p = *p + w * v;
                }
            }
        }
    }
    let ci = params.classifier_index();
    let mut logits = matmul(&pooled, &params.tensors[ci].data, 1, d, cfg.classes);
    add_bias(&mut logits, &params.tensors[ci + 1].data);
    Ok((logits, Cache { rows, x, layers, z, pooled, weights }))
}

fn backward<S: Scalar>(params: &ModelParams<S>, cache: &Cache<S>, dlogits: &[S], grads: &mut ModelParams<S>) {
    let cfg = params.config;
    let (d, hidden, rows) = (cfg.width, cfg.hidden(), cache.rows);
    let ci = params.classifier_index();
    matmul_tn_acc(&cache.pooled, dlogits, 1, d, cfg.classes, &mut grads.tensors[ci].data);
    add_into(&mut grads.tensors[ci + 1].data, dlogits);
    let dpooled = matmul_nt(dlogits, &params.tensors[ci].data, 1, cfg.classes, d);

    let mut dz = vec![S::zero(); rows * d];
    match cfg.readout {
        Readout::Mean | Readout::Sum => {
            let factor = if cfg.readout == Readout::Mean { S::one() / S::from_usize(rows) } else { S::one() };
            for row in dz.chunks_exact_mut(d) {
                for (g, &p) in row.iter_mut().zip(&dpooled) {
                    *g = p * factor;
                }
            }
        }
        Readout::Attention => {
            let qi = params.query_index().unwrap();
            let q = &params.tensors[qi].data;
            let scale = S::one() / S::from_usize(d).sqrt();
            let dw: Vec<S> = cache.z.chunks_exact(d).map(|row| dot(row, &dpooled)).collect();
            let inner = dot(&cache.weights, &dw);
            let mut dq = vec![S::zero(); d];
            for (r, row) in cache.z.chunks_exact(d).enumerate() {
                let w = cache.weights[r];
                let ds = w * (dw[r] - inner) * scale;
                for c in 0..d {
                    dz[r * d + c] = w * dpooled[c] + ds * q[c];
                    dq[c] = dq[c] + ds * row[c];
                }
            }
            add_into(&mut grads.tensors[qi].data, &dq);
        }
    }

    for t in (0..cfg.layers).rev() {
        let lc = &cache.layers[t];
        let idx = |slot| params.layer_index(t, slot);
        // FFN branch.
        matmul_tn_acc(&lc.g, &dz, rows, hidden, d, &mut grads.tensors[idx(Slot::W2)].data);
        column_sums_acc(&dz, d, &mut grads.tensors[idx(Slot::B2)].data);
        let mut df1 = matmul_nt(&dz, params.layer(t, Slot::W2), rows, d, hidden);
        for (g, &x) in df1.iter_mut().zip(&lc.f1) {
            *g = *g * gelu_grad(x);
        }
        matmul_tn_acc(&lc.b, &df1, rows, d, hidden, &mut grads.tensors[idx(Slot::W1)].data);
        column_sums_acc(&df1, hidden, &mut grads.tensors[idx(Slot::B1)].data);
        let db = matmul_nt(&df1, params.layer(t, Slot::W1), rows, hidden, d);
        let (g2, b2) = two_mut(&mut grads.tensors, idx(Slot::Ln2G), idx(Slot::Ln2B));
        add_into(&mut dz, &layer_norm_backward(&db, &lc.ln2, d, params.layer(t, Slot::Ln2G), g2, b2));
        // Attention branch.
        let da = mha_backward(params, grads, t, &lc.a, &lc.attn, &dz, rows);
        let (g1, b1) = two_mut(&mut grads.tensors, idx(Slot::Ln1G), idx(Slot::Ln1B));
        add_into(&mut dz, &layer_norm_backward(&da, &lc.ln1, d, params.layer(t, Slot::Ln1G), g1, b1));
    }

    matmul_tn_acc(&cache.x, &dz, rows, cfg.input_dim, d, &mut grads.tensors[0].data);
    column_sums_acc(&dz, d, &mut grads.tensors[1].data);
}

fn two_mut<S>(tensors: &mut [crate::params::Tensor<S>], a: usize, b: usize) -> (&mut [S], &mut [S]) {
    debug_assert!(a < b);
    let (lo, hi) = tensors.split_at_mut(b);
    (&mut lo[a].data, &mut hi[0].data)
}

/// Class logits and the pooled node embedding.
pub fn encoder_forward<S: Scalar>(params: &ModelParams<S>, tokens: &Tokens<S>) -> Result<(Vec<S>, Vec<S>)> {
    let (logits, cache) = forward(params, tokens)?;
    Ok((logits, cache.pooled))
}

/// Index of the largest logit; ties go to the lower class.
pub fn predict<S: Scalar>(params: &ModelParams<S>, tokens: &Tokens<S>) -> Result<usize> {
    let (logits, _) = encoder_forward(params, tokens)?;
    Ok(argmax(&logits))
}

pub(crate) fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of one sample and its logit gradient (unscaled).
fn cross_entropy<S: Scalar>(logits: &[S], label: usize) -> (S, Vec<S>) {
    let mut p = logits.to_vec();
    softmax_row(&mut p);
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let target = logits[label];
    // When the label already wins, `ln(1 + sum exp(l_j - l_y))` keeps full
    // precision for losses near zero, where `lse - l_y` would cancel.
    let loss = if target == max {
        let rest: S = logits.iter().enumerate().filter(|&(j, _)| j != label).map(|(_, &l)| (l - target).exp()).sum();
        rest.ln_1p()
    } else {
        max + logits.iter().map(|&l| (l - max).exp()).sum::<S>().ln() - target
    };
    p[label] = p[label] - S::one();
    (loss, p)
}

/// Mean cross-entropy over the batch and its exact gradient.
///
/// Samples are processed in parallel; the per-sample gradients are summed
/// in batch order, so the result does not depend on the thread count.
pub fn loss_and_backward<S: Scalar>(
    params: &ModelParams<S>,
    batch: &[(&Tokens<S>, usize)],
) -> Result<(S, ModelParams<S>)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let classes = params.config.classes;
    if let Some(&(_, label)) = batch.iter().find(|(_, l)| *l >= classes) {
        return Err(Error::Label { label, classes });
    }
    let per_sample: Vec<(S, ModelParams<S>)> = batch
        .par_iter()
        .map(|&(tokens, label)| {
            let (logits, cache) = forward(params, tokens)?;
            let (loss, dlogits) = cross_entropy(&logits, label);
            let mut g = params.zeros_like();
            backward(params, &cache, &dlogits, &mut g);
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let inv = S::one() / S::from_usize(batch.len());
    let mut grads = params.zeros_like();
    let mut loss = S::zero();
    for (l, g) in &per_sample {
        loss = loss + *l;
        grads.add_scaled(g, S::one());
    }
    grads.scale(inv);
    Ok((loss * inv, grads))
}

/// Mean cross-entropy without gradients.
pub fn batch_loss<S: Scalar>(params: &ModelParams<S>, batch: &[(&Tokens<S>, usize)]) -> Result<S> {
    let mut total = S::zero();
    for &(tokens, label) in batch {
        if label >= params.config.classes {
            return Err(Error::Label { label, classes: params.config.classes });
        }
        let (logits, _) = forward(params, tokens)?;
        total = total + cross_entropy(&logits, label).0;
    }
    Ok(total / S::from_usize(batch.len().max(1)))
}
