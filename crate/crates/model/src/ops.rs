//! Dense row-major kernels on small matrices.

use crate::scalar::Scalar;

/// `a[m x k] * b[k x n]`.
pub(crate) fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x == S::zero() {
                continue;
            }
            for (o, &w) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o = *o + x * w;
            }
        }
    }
    out
}

/// `out[k x n] += a[m x k]^T * b[m x n]`.
pub(crate) fn matmul_tn_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for (p, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x == S::zero() {
                continue;
            }
            for (o, &g) in out[p * n..(p + 1) * n].iter_mut().zip(brow) {
                *o = *o + x * g;
            }
        }
    }
}

/// `a[m x n] * b[k x n]^T`, a `m x k` matrix.
pub(crate) fn matmul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, k: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            out[i * k + j] = dot(arow, &b[j * n..(j + 1) * n]);
        }
    }
    out
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn add_bias<S: Scalar>(x: &mut [S], bias: &[S]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
}

pub(crate) fn column_sums_acc<S: Scalar>(x: &[S], cols: usize, out: &mut [S]) {
    for row in x.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

pub(crate) fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Softmax over the entries whose mask bit is set; the others get zero.
/// Returns `None` when no entry is valid.
pub fn softmax_masked<S: Scalar>(scores: &[S], mask: &[bool]) -> Option<Vec<S>> {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(None, |acc: Option<S>, s| Some(acc.map_or(s, |a| a.max(s))))?;
    let mut out: Vec<S> =
        scores.iter().zip(mask).map(|(&s, &m)| if m { (s - max).exp() } else { S::zero() }).collect();
    let total: S = out.iter().copied().sum();
    out.iter_mut().for_each(|x| *x = *x / total);
    Some(out)
}

/// In-place softmax of a dense row.
pub(crate) fn softmax_row<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total = total + *x;
    }
    row.iter_mut().for_each(|x| *x = *x / total);
}

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) struct LnCache<S> {
    pub xhat: Vec<S>,
    pub rstd: Vec<S>,
}

pub(crate) fn layer_norm<S: Scalar>(x: &[S], d: usize, gain: &[S], shift: &[S]) -> (Vec<S>, LnCache<S>) {
    let rows = x.len() / d;
    let mut y = vec![S::zero(); x.len()];
    let mut xhat = vec![S::zero(); x.len()];
    let mut rstd = Vec::with_capacity(rows);
    let inv_d = S::one() / S::from_usize(d);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<S>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() * inv_d;
        let rs = S::one() / (var + S::from_f64(LN_EPS)).sqrt();
        rstd.push(rs);
        for c in 0..d {
            let h = (row[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = gain[c] * h + shift[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Returns `dx`; accumulates the scale and shift gradients.
pub(crate) fn layer_norm_backward<S: Scalar>(
    dy: &[S],
    cache: &LnCache<S>,
    d: usize,
    gain: &[S],
    dgain: &mut [S],
    dshift: &mut [S],
) -> Vec<S> {
    let mut dx = vec![S::zero(); dy.len()];
    let inv_d = S::one() / S::from_usize(d);
    for (r, &rs) in cache.rstd.iter().enumerate() {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_g = S::zero();
        let mut mean_gx = S::zero();
        for c in 0..d {
            let g = dyr[c] * gain[c];
            dgain[c] = dgain[c] + dyr[c] * xh[c];
            dshift[c] = dshift[c] + dyr[c];
            mean_g = mean_g + g;
            mean_gx = mean_gx + g * xh[c];
        }
        mean_g = mean_g * inv_d;
        mean_gx = mean_gx * inv_d;
        for c in 0..d {
            dx[r * d + c] = rs * (dyr[c] * gain[c] - mean_g - xh[c] * mean_gx);
        }
    }
    dx
}

const GELU_C: f64 = 0.044715;

/// Tanh approximation of GELU.
pub(crate) fn gelu<S: Scalar>(x: S) -> S {
    let k = S::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let half = S::from_f64(0.5);
    half * x * (S::one() + (k * (x + S::from_f64(GELU_C) * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<S: Scalar>(x: S) -> S {
    let k = S::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let c = S::from_f64(GELU_C);
    let half = S::from_f64(0.5);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * k * (S::one() + S::from_f64(3.0) * c * x * x)
}
