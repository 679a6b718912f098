//! Seeded numerical checks of the PPR solvers and the rewiring / filter
//! identities, reported as JSON.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vcrg_core::ppr::{ppr_cpi, ppr_power, ppr_push, DEFAULT_ALPHA, DEFAULT_MAX_ITERS};
use vcrg_core::rewire::{add_super_nodes, partition};
use vcrg_core::synth::{generate_sbm, random_connected_graph, FeatureMode, SbmSpec};
use vcrg_core::theory::{mass_transfer, verify_gcn_equivalence, verify_ppr_series};
use vcrg_core::tokenize::{tokenize_graph, TokenizeConfig};
use vcrg_core::{normalize, Graph, Matrix, NormKind};

use crate::error::Result;

/// Tolerance of the exact solvers used as references.
pub const REFERENCE_TOL: f64 = 1e-13;
pub const CPI_VS_POWER_TOL: f64 = 1e-10;
/// Slack allowed when comparing push mass against the exact vector.
pub const PUSH_SLACK: f64 = 1e-12;
pub const MASS_IDENTITY_TOL: f64 = 1e-8;
pub const MASS_SUM_TOL: f64 = 1e-10;
pub const SERIES_TOL: f64 = 1e-10;
pub const SERIES_STEPS: usize = 20;
/// Hop rows are stored as f32.
pub const GCN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Mass transfer, filter series and hop-row identities.
    Theorems,
    /// Exact solvers against each other and push against exact.
    Ppr,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub instance: usize,
    pub nodes: usize,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `deviation <= tolerance`.
    fn at_most(name: &'static str, instance: usize, nodes: usize, deviation: f64, tolerance: f64) -> Self {
        Self { name, instance, nodes, deviation, tolerance, passed: deviation <= tolerance }
    }

    /// Passes when `deviation < tolerance`.
    fn below(name: &'static str, instance: usize, nodes: usize, deviation: f64, tolerance: f64) -> Self {
        Self { name, instance, nodes, deviation, tolerance, passed: deviation < tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn worst(&self, name: &str) -> f64 {
        self.checks.iter().filter(|c| c.name == name).map(|c| c.deviation).fold(0.0, f64::max)
    }
}

fn instance_rng(seed: u64, salt: u64, instance: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt << 32 | instance as u64);
    rng
}

/// Connected random graph with `min_n..=max_n` nodes and mean degree 2–8.
fn random_instance(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize) -> Result<Graph> {
    let n = rng.gen_range(min_n..=max_n);
    let mean_degree = rng.gen_range(2.0..8.0);
    Ok(random_connected_graph(n, (mean_degree / n as f64).min(1.0), rng.gen())?)
}

/// Exact solvers agree; push never overshoots and leaves residual/degree
/// below `eps` everywhere.
pub fn ppr_checks(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for i in 0..instances {
        let mut rng = instance_rng(seed, 1, i);
        let g = random_instance(&mut rng, 10, 200)?;
        let n = g.node_count();
        let source = rng.gen_range(0..n);
        let eps = 10f64.powf(rng.gen_range(-6.0..-2.0));
        let t = normalize(&g, NormKind::Column);
        let power = ppr_power(&t, source, DEFAULT_ALPHA, REFERENCE_TOL, 100 * DEFAULT_MAX_ITERS)?.to_dense(n);
        let cpi = ppr_cpi(&t, source, DEFAULT_ALPHA, REFERENCE_TOL)?.to_dense(n);
        let gap = power.iter().zip(&cpi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("cpi_vs_power", i, n, gap, CPI_VS_POWER_TOL));

        let push = ppr_push(&g, source, DEFAULT_ALPHA, eps)?;
        let overshoot = (0..n).map(|v| push.get(v) - power[v]).fold(0.0, f64::max);
        checks.push(Check::at_most("push_below_exact", i, n, overshoot, PUSH_SLACK));
        let ratio = (0..n).map(|v| push.residual_at(v) / g.degree(v) as f64).fold(0.0, f64::max);
        checks.push(Check::below("push_residual_per_degree", i, n, ratio, eps));
    }
    Ok(checks)
}

/// `c + r = r̃` and `Σc = 0` after adding 2–5 structure super nodes.
pub fn mass_transfer_checks(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for i in 0..instances {
        let mut rng = instance_rng(seed, 2, i);
        let g = random_instance(&mut rng, 20, 100)?;
        let n = g.node_count();
        let groups = rng.gen_range(2..=5);
        let clusters = partition(&g, groups, rng.gen())?;
        let rewired = add_super_nodes(&g, &clusters)?.graph;
        let padded = g.extended_with_isolated(groups);
        let source = rng.gen_range(0..n);
        let report = mass_transfer(
            &normalize(&padded, NormKind::Column),
            &normalize(&rewired, NormKind::Column),
            source,
            DEFAULT_ALPHA,
            1e-15,
        )?;
        checks.push(Check::at_most("mass_transfer_identity", i, n, report.identity_error, MASS_IDENTITY_TOL));
        checks.push(Check::at_most("mass_transfer_sum", i, n, report.sum_c.abs(), MASS_SUM_TOL));
    }
    Ok(checks)
}

/// Recurrence against the closed-form filter series for `t <= 20`, under
/// both the symmetric and the self-loop-augmented normalization.
pub fn series_checks(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for i in 0..instances {
        let mut rng = instance_rng(seed, 3, i);
        let g = random_instance(&mut rng, 10, 150)?;
        let n = g.node_count();
        let d = rng.gen_range(1..=6);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        for kind in [NormKind::Symmetric, NormKind::GcnAugmented] {
            let gap = verify_ppr_series(&normalize(&g, kind), &x, 1.0 - DEFAULT_ALPHA, SERIES_STEPS)?;
            checks.push(Check::below("ppr_series", i, n, gap, SERIES_TOL));
        }
    }
    Ok(checks)
}

/// Hop rows of freshly tokenized SBM graphs against dense matrix powers.
pub fn gcn_checks(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for i in 0..instances {
        let mut rng = instance_rng(seed, 4, i);
        let spec = SbmSpec {
            n: rng.gen_range(40..=120),
            blocks: rng.gen_range(2..=4),
            p_in: 0.15,
            p_out: 0.02,
            dim: 4,
            feature_mode: FeatureMode::LabelAligned,
            sigma_sep: 2.0,
            seed: rng.gen(),
        };
        let data = generate_sbm(&spec)?;
        for hop_norm in [NormKind::Symmetric, NormKind::GcnAugmented] {
            let config = TokenizeConfig { hops: 3, structure_k: 4, content_k: 4, hop_norm, seed, ..TokenizeConfig::default() };
            let store = tokenize_graph(&data.graph, &data.features, &data.labels, &data.splits.train, &config)?;
            let gap = verify_gcn_equivalence(&store, &normalize(&data.graph, hop_norm), data.features.as_matrix())?;
            checks.push(Check::at_most("gcn_equivalence", i, spec.n, gap, GCN_TOL));
        }
    }
    Ok(checks)
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut checks = Vec::new();
    if matches!(suite, Suite::Ppr | Suite::All) {
        checks.extend(ppr_checks(seed, 10)?);
    }
    if matches!(suite, Suite::Theorems | Suite::All) {
        checks.extend(mass_transfer_checks(seed, 5)?);
        checks.extend(series_checks(seed, 5)?);
        checks.extend(gcn_checks(seed, 2)?);
    }
    log::info!("{suite:?} suite: {} checks in {:.2?}", checks.len(), start.elapsed());
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { suite, seed, passed, checks })
}
