//! End-to-end acceptance checks. Every criterion prints one PASS/FAIL line;
//! the process exits non-zero when any of them fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcrg::verify::{mass_transfer_checks, series_checks, Check, GCN_TOL};
use vcrg_core::ppr::{ppr_cpi, ppr_power, ppr_push, DEFAULT_ALPHA};
use vcrg_core::synth::{generate_sbm, random_connected_graph, FeatureMode, SbmDataset, SbmSpec};
use vcrg_core::theory::verify_gcn_equivalence;
use vcrg_core::tokenize::{tokenize_graph, ContentMode, TokenStore, TokenizeConfig};
use vcrg_core::{normalize, Graph, NormKind};
use vcrg_model::gradcheck::{DEFAULT_STEP, DEFAULT_TOLERANCE};
use vcrg_model::{
    encoder_forward, gradient_check, loss_and_backward, train, Adam, Dataset, ModelConfig, ModelParams, Readout,
    TrainConfig, Tokens,
};

const SEED: u64 = 20_240_101;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// Hop-row deviations of every store built by the end-to-end criteria.
#[derive(Default)]
struct Built {
    gcn: Vec<(String, f64)>,
}

impl Built {
    fn tokenize(&mut self, label: &str, data: &SbmDataset, config: &TokenizeConfig) -> TokenStore {
        let store = tokenize_graph(&data.graph, &data.features, &data.labels, &data.splits.train, config).unwrap();
        let gap =
            verify_gcn_equivalence(&store, &normalize(&data.graph, config.hop_norm), data.features.as_matrix()).unwrap();
        self.gcn.push((label.to_string(), gap));
        store
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// Dense oracle: solves (I - αP) r = (1 - α) e_s with P = A D^{-1} by
// Gaussian elimination with partial pivoting.
fn exact_ppr(g: &Graph, source: usize, alpha: f64) -> Vec<f64> {
    let n = g.node_count();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for j in 0..n {
        let deg = g.degree(j) as f64;
        for &i in g.neighbors(j) {
            a[i * n + j] -= alpha / deg;
        }
    }
    let mut b = vec![0.0; n];
    b[source] = 1.0 - alpha;
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs())).unwrap();
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x
}

fn ppr_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut cpi_gap, mut exact_gap, mut overshoot, mut worst_ratio) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut residual_ok = true;
    for _ in 0..50 {
        let n = rng.gen_range(10..=200);
        let p = (rng.gen_range(2.0..8.0) / n as f64).min(1.0);
        let g = random_connected_graph(n, p, rng.gen()).unwrap();
        let source = rng.gen_range(0..n);
        let eps = 10f64.powf(rng.gen_range(-6.0..-2.0));
        let t = normalize(&g, NormKind::Column);
        let power = ppr_power(&t, source, DEFAULT_ALPHA, 1e-13, 100_000).unwrap().to_dense(n);
        let cpi = ppr_cpi(&t, source, DEFAULT_ALPHA, 1e-13).unwrap().to_dense(n);
        let exact = exact_ppr(&g, source, DEFAULT_ALPHA);
        let push = ppr_push(&g, source, DEFAULT_ALPHA, eps).unwrap();
        for v in 0..n {
            cpi_gap = cpi_gap.max((cpi[v] - power[v]).abs());
            exact_gap = exact_gap.max((power[v] - exact[v]).abs());
            overshoot = overshoot.max(push.get(v) - exact[v]);
            let ratio = push.residual_at(v) / g.degree(v) as f64;
            worst_ratio = worst_ratio.max(ratio / eps);
            residual_ok &= ratio < eps;
        }
    }
    let elapsed = start.elapsed();
    let passed = cpi_gap <= 1e-10 && exact_gap <= 1e-10 && overshoot <= 1e-12 && residual_ok && elapsed.as_secs() < 30;
    Verdict::new(
        passed,
        format!(
            "50 graphs: |cpi-power| {cpi_gap:.1e}, |power-dense| {exact_gap:.1e}, push overshoot {overshoot:.1e}, \
             max residual/(deg*eps) {worst_ratio:.3}, {:.2}s",
            secs(elapsed)
        ),
    )
}

fn worst(checks: &[Check], name: &str) -> f64 {
    checks.iter().filter(|c| c.name == name).map(|c| c.deviation).fold(0.0, f64::max)
}

fn mass_transfer() -> Verdict {
    let start = Instant::now();
    let checks = mass_transfer_checks(SEED, 20).unwrap();
    let elapsed = start.elapsed();
    let identity = worst(&checks, "mass_transfer_identity");
    let sum = worst(&checks, "mass_transfer_sum");
    let passed = checks.len() == 40 && identity <= 1e-8 && sum <= 1e-10 && elapsed.as_secs() < 60;
    Verdict::new(passed, format!("20 instances: max|c+r-r~| {identity:.1e}, max|sum c| {sum:.1e}, {:.2}s", secs(elapsed)))
}

fn gcn_and_series(built: &Built) -> Verdict {
    let checks = series_checks(SEED, 10).unwrap();
    let series = worst(&checks, "ppr_series");
    let (store, gap) =
        built.gcn.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|(s, g)| (s.as_str(), *g)).unwrap_or(("none", 0.0));
    let passed = !built.gcn.is_empty() && gap <= GCN_TOL && series < 1e-10;
    Verdict::new(
        passed,
        format!("{} stores: worst hop-row deviation {gap:.1e} ({store}); series t<=20 on 10 graphs {series:.1e}", built.gcn.len()),
    )
}

fn random_tokens(rng: &mut ChaCha8Rng, rows: usize, width: usize) -> Tokens<f64> {
    let values = (0..rows * width).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mask = (0..rows).map(|r| r == 0 || rng.gen_bool(0.7)).collect();
    Tokens::new(rows, width, values, mask).unwrap()
}

fn gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_err = 0.0f64;
    let mut failing = Vec::new();
    for (layers, heads, width) in [(1, 2, 8), (2, 4, 16)] {
        for readout in [Readout::Mean, Readout::Sum, Readout::Attention] {
            let config = ModelConfig { input_dim: 5, width, heads, layers, classes: 3, readout };
            let mut params = ModelParams::<f64>::init(config, rng.gen()).unwrap();
            let tokens: Vec<_> = [6, 3, 9, 12].iter().map(|&r| random_tokens(&mut rng, r, 5)).collect();
            let samples: Vec<_> = tokens.iter().zip([0, 2, 1, 2]).collect();
            let mut adam = Adam::new(&params, &TrainConfig::default());
            for stage in ["init", "after 10 steps"] {
                if stage != "init" {
                    for _ in 0..10 {
                        let (_, g) = loss_and_backward(&params, &samples).unwrap();
                        adam.step(&mut params, &g);
                    }
                }
                let report = gradient_check(&params, &samples, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
                worst_err = worst_err.max(report.max_rel_error());
                if !report.passed() {
                    failing.push(format!("({layers},{heads},{width}) {readout:?} {stage}: {:?}", report.failing()));
                }
            }
        }
    }
    let passed = failing.is_empty() && worst_err < 1e-4;
    Verdict::new(passed, format!("(T,H,D) in {{(1,2,8),(2,4,16)}} x 3 readouts: max rel error {worst_err:.1e} {failing:?}"))
}

fn invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let width = 7;
    let mut worst_perm = 0.0f64;
    let mut worst_pad = 0.0f64;
    for _ in 0..100 {
        let config = ModelConfig { input_dim: width, width: 16, heads: 4, layers: 2, classes: 4, readout: Readout::Mean };
        let params = ModelParams::<f32>::init(config, rng.gen()).unwrap();
        let rows = rng.gen_range(1..=20);
        let values: Vec<f32> = (0..rows * width).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tokens = Tokens::new(rows, width, values.clone(), vec![true; rows]).unwrap();
        let (base, _) = encoder_forward(&params, &tokens).unwrap();

        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(&mut rng);
        let permuted: Vec<f32> = order.iter().flat_map(|&r| values[r * width..(r + 1) * width].to_vec()).collect();
        let (p, _) = encoder_forward(&params, &Tokens::new(rows, width, permuted, vec![true; rows]).unwrap()).unwrap();

        // Masked rows with arbitrary contents, interleaved at random positions.
        let pad = rng.gen_range(1..=10);
        let mut slots: Vec<Option<usize>> = (0..rows).map(Some).chain((0..pad).map(|_| None)).collect();
        slots.shuffle(&mut rng);
        let mut padded = Vec::new();
        let mut mask = Vec::new();
        for slot in &slots {
            match slot {
                Some(r) => padded.extend_from_slice(&values[r * width..(r + 1) * width]),
                None => padded.extend((0..width).map(|_| rng.gen_range(-50.0f32..50.0))),
            }
            mask.push(slot.is_some());
        }
        let (q, _) = encoder_forward(&params, &Tokens::new(rows + pad, width, padded, mask).unwrap()).unwrap();
        for ((b, x), y) in base.iter().zip(&p).zip(&q) {
            worst_perm = worst_perm.max((b - x).abs() as f64);
            worst_pad = worst_pad.max((b - y).abs() as f64);
        }
    }
    let passed = worst_perm <= 1e-6 && worst_pad <= 1e-6;
    Verdict::new(passed, format!("100 inputs (f32, mean): permutation {worst_perm:.1e}, padding {worst_pad:.1e}"))
}

/// Best-validation test accuracy.
fn fit(store: &TokenStore, data: &SbmDataset, config: &TrainConfig) -> f64 {
    let dataset = Dataset::<f32>::new(store, &data.labels).unwrap();
    let outcome = train(&dataset, &data.splits, config, |_, _, _| Ok(())).unwrap();
    outcome.best_metrics().and_then(|m| m.test_acc).unwrap()
}

fn ablation(config: &TokenizeConfig, hops: usize, structure_k: usize, content_k: usize) -> TokenizeConfig {
    TokenizeConfig { hops, structure_k, content_k, ..config.clone() }
}

fn homophilous(built: &mut Built) -> Verdict {
    let start = Instant::now();
    let spec = SbmSpec {
        n: 1000,
        blocks: 5,
        p_in: 0.02,
        p_out: 0.002,
        dim: 5,
        feature_mode: FeatureMode::LabelAligned,
        sigma_sep: 3.0,
        seed: 1,
    };
    let data = generate_sbm(&spec).unwrap();
    let tokenize = TokenizeConfig { seed: 1, ..TokenizeConfig::default() };
    let train_config = TrainConfig { readout: Readout::Attention, epochs: 40, seed: 1, ..TrainConfig::default() };

    let full = built.tokenize("homophilous L=4 k=16/16", &data, &tokenize);
    let full_acc = fit(&full, &data, &train_config);
    let base = built.tokenize("homophilous feature-only", &data, &ablation(&tokenize, 0, 0, 0));
    let base_acc = fit(&base, &data, &train_config);
    let elapsed = start.elapsed();
    let passed = full_acc >= 0.90 && full_acc - base_acc >= 0.05 && elapsed.as_secs() < 600;
    Verdict::new(
        passed,
        format!("test acc {full_acc:.3} vs feature-only {base_acc:.3} ({} epochs), {:.0}s", train_config.epochs, secs(elapsed)),
    )
}

// Heterophilous setting; see the project notes for how it was chosen.
const HET_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const HET_HOPS: usize = 4;
const HET_EPOCHS: usize = 30;

fn heterophilous(built: &mut Built) -> Verdict {
    let start = Instant::now();
    let mut acc = [0.0f64; 3];
    let mut per_seed = Vec::new();
    for &seed in &HET_SEEDS {
        let spec = SbmSpec {
            n: 1000,
            blocks: 5,
            p_in: 0.0005,
            p_out: 0.003,
            dim: 5,
            feature_mode: FeatureMode::LabelAligned,
            sigma_sep: 2.5,
            seed,
        };
        let data = generate_sbm(&spec).unwrap();
        let tokenize = TokenizeConfig { hops: HET_HOPS, content: ContentMode::TrainLabels, seed, ..TokenizeConfig::default() };
        let train_config =
            TrainConfig { readout: Readout::Attention, epochs: HET_EPOCHS, seed, ..TrainConfig::default() };
        let mut row = [0.0; 3];
        for (i, (s, c)) in [(10, 10), (10, 0), (0, 0)].into_iter().enumerate() {
            let store = built.tokenize(&format!("heterophilous seed {seed} ({s},{c})"), &data, &ablation(&tokenize, HET_HOPS, s, c));
            row[i] = fit(&store, &data, &train_config);
            acc[i] += row[i] / HET_SEEDS.len() as f64;
        }
        per_seed.push(format!("{:.2}/{:.2}/{:.2}", row[0], row[1], row[2]));
    }
    let passed = acc[0] - acc[1] >= 0.03 && acc[0] - acc[2] >= 0.05;
    Verdict::new(
        passed,
        format!(
            "mean test acc (10,10) {:.3}, (10,0) {:.3}, (0,0) {:.3}; per seed [{}], {:.0}s",
            acc[0],
            acc[1],
            acc[2],
            per_seed.join(" "),
            secs(start.elapsed())
        ),
    )
}

fn scaling(built: &mut Built) -> Verdict {
    let tokenize = TokenizeConfig::default();
    let mut ratios = Vec::new();
    for trial in 0..3u64 {
        let mut times = Vec::new();
        for scale in [1.0, 2.0] {
            let spec = SbmSpec {
                n: 2000,
                blocks: 5,
                p_in: 0.01 * scale,
                p_out: 0.001 * scale,
                dim: 8,
                feature_mode: FeatureMode::LabelAligned,
                sigma_sep: 3.0,
                seed: 100 + trial,
            };
            let data = generate_sbm(&spec).unwrap();
            let config = TokenizeConfig { seed: trial, ..tokenize.clone() };
            let start = Instant::now();
            let store = tokenize_graph(&data.graph, &data.features, &data.labels, &data.splits.train, &config).unwrap();
            times.push((data.graph.edge_count(), secs(start.elapsed())));
            if trial == 0 {
                let gap = verify_gcn_equivalence(&store, &normalize(&data.graph, config.hop_norm), data.features.as_matrix())
                    .unwrap();
                built.gcn.push((format!("scaling m={}", data.graph.edge_count()), gap));
            }
        }
        ratios.push((times[0].0, times[1].0, times[1].1 / times[0].1));
    }
    let passed = ratios.iter().all(|r| r.2 <= 3.0);
    let shown: Vec<String> = ratios.iter().map(|(m1, m2, r)| format!("m {m1}->{m2}: {r:.2}")).collect();
    Verdict::new(passed, format!("time ratios {}", shown.join(", ")))
}

fn vcrg(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_vcrg"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .arg("--jobs")
        .arg("1")
        .env("RAYON_NUM_THREADS", "1")
        .env_remove("VCRG_SEED")
        .output()
        .unwrap();
    assert!(out.status.success(), "vcrg {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn determinism() -> Verdict {
    let runs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let common = ["--seed", "9", "--set", "synth.n=300", "--set", "synth.p_in=0.05"];
            vcrg(dir.path(), &[&["synth"][..], &common].concat());
            vcrg(dir.path(), &[&["tokenize"][..], &common].concat());
            vcrg(dir.path(), &[&["train", "--set", "train.epochs=5", "--set", "train.width=16"][..], &common].concat());
            (fs::read(dir.path().join("tokens.vcrt")).unwrap(), fs::read(dir.path().join("metrics.jsonl")).unwrap())
        })
        .collect();
    let store_same = runs[0].0 == runs[1].0;
    let metrics_same = runs[0].1 == runs[1].1;
    Verdict::new(
        store_same && metrics_same,
        format!("store {} bytes identical: {store_same}; metrics {} bytes identical: {metrics_same}", runs[0].0.len(), runs[0].1.len()),
    )
}

fn main() {
    // `cargo test -- --list` and filters come through here too.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }

    let mut built = Built::default();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |id: usize, name: &'static str, verdict: Verdict| {
        println!("criterion {id} {name}: {} — {}", if verdict.passed { "PASS" } else { "FAIL" }, verdict.detail);
        results.push((id, name, verdict));
    };

    record(1, "ppr oracle suite", ppr_oracle());
    record(2, "mass transfer", mass_transfer());
    record(4, "gradient correctness", gradients());
    record(5, "readout invariance", invariance());
    record(6, "homophilous end-to-end", homophilous(&mut built));
    record(7, "heterophilous ablation", heterophilous(&mut built));
    record(8, "tokenization scaling", scaling(&mut built));
    record(9, "determinism", determinism());
    let verdict = gcn_and_series(&built);
    record(3, "hop rows and filter series", verdict);

    results.sort_by_key(|r| r.0);
    println!("\nsummary:");
    for (id, name, verdict) in &results {
        println!("  {id}. {name}: {}", if verdict.passed { "PASS" } else { "FAIL" });
    }
    if results.iter().any(|r| !r.2.passed) {
        std::process::exit(1);
    }
}
