//! Central finite-difference gradient checking (f64 only).

use serde::Serialize;

use crate::error::Result;
use crate::model::{batch_loss, loss_and_backward, Tokens};
use crate::params::ModelParams;

/// Blocks whose gradients are smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub name: String,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    pub max_abs_diff: f64,
    /// `max|a - n| / max(max|a|, max|n|, REL_FLOOR)`.
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.blocks.iter().filter(|b| !b.passed).map(|b| b.name.as_str()).collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max)
    }
}

/// `(L(θ + h e_i) - L(θ - h e_i)) / 2h` for every parameter.
pub fn numeric_gradients(params: &ModelParams<f64>, batch: &[(&Tokens<f64>, usize)], h: f64) -> Result<ModelParams<f64>> {
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    for t in 0..probe.tensors.len() {
        for i in 0..probe.tensors[t].data.len() {
            let original = probe.tensors[t].data[i];
            probe.tensors[t].data[i] = original + h;
            let plus = batch_loss(&probe, batch)?;
            probe.tensors[t].data[i] = original - h;
            let minus = batch_loss(&probe, batch)?;
            probe.tensors[t].data[i] = original;
            out.tensors[t].data[i] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(out)
}

pub fn compare_gradients(analytic: &ModelParams<f64>, numeric: &ModelParams<f64>, tolerance: f64) -> Result<GradCheckReport> {
    analytic.check_same_layout(numeric)?;
    let max_abs = |xs: &[f64]| xs.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let blocks = analytic
        .tensors
        .iter()
        .zip(&numeric.tensors)
        .map(|(a, n)| {
            let max_abs_diff = a.data.iter().zip(&n.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let (ma, mn) = (max_abs(&a.data), max_abs(&n.data));
            let rel_error = max_abs_diff / ma.max(mn).max(REL_FLOOR);
            BlockError {
                name: a.name.clone(),
                max_abs_analytic: ma,
                max_abs_numeric: mn,
                max_abs_diff,
                rel_error,
                passed: rel_error < tolerance,
            }
        })
        .collect();
    Ok(GradCheckReport { tolerance, blocks })
}

pub fn gradient_check(
    params: &ModelParams<f64>,
    batch: &[(&Tokens<f64>, usize)],
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_backward(params, batch)?;
    let numeric = numeric_gradients(params, batch, h)?;
    compare_gradients(&analytic, &numeric, tolerance)
}
