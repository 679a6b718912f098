mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use vcrg_model::ops::softmax_masked;
use vcrg_model::{
    attention_forward, batch_loss, encoder_forward, loss_and_backward, Error, ModelParams, Readout, Tokens,
};

#[test]
fn single_valid_token_attends_to_itself() {
    let params = ModelParams::<f64>::init(config(1, 2, 8, Readout::Mean), 3).unwrap();
    let mut r = rng(1);
    let z: Vec<f64> = (0..4 * 8).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mask = [false, false, true, false];
    let out = attention_forward(&params, 0, &z, &mask).unwrap();

    let wv = &params.get("layer0.wv").unwrap().data;
    let wo = &params.get("layer0.wo").unwrap().data;
    let expected = naive_matmul(&naive_matmul(&z[16..24], wv, 1, 8, 8), wo, 1, 8, 8);
    assert!(max_abs_diff(&out[16..24], &expected) < 1e-12);
    for r in [0, 1, 3] {
        assert!(out[r * 8..(r + 1) * 8].iter().all(|&x| x == 0.0));
    }
}

#[test]
fn all_masked_is_an_error() {
    let params = ModelParams::<f64>::init(config(1, 2, 8, Readout::Mean), 0).unwrap();
    assert!(matches!(attention_forward(&params, 0, &[0.0; 16], &[false, false]), Err(Error::NoValidTokens)));
    let tokens = Tokens::new(2, 5, vec![1.0; 10], vec![false, false]).unwrap();
    assert!(matches!(encoder_forward(&params, &tokens), Err(Error::NoValidTokens)));
}

#[test]
fn shape_and_label_errors() {
    let params = ModelParams::<f64>::init(config(1, 2, 8, Readout::Mean), 0).unwrap();
    let wrong = Tokens::new(1, 4, vec![0.0; 4], vec![true]).unwrap();
    assert!(matches!(encoder_forward(&params, &wrong), Err(Error::Shape(_))));
    let ok = Tokens::new(1, 5, vec![0.0; 5], vec![true]).unwrap();
    assert!(matches!(loss_and_backward(&params, &[(&ok, 3)]), Err(Error::Label { label: 3, classes: 3 })));
    assert!(matches!(attention_forward(&params, 1, &[0.0; 8], &[true]), Err(Error::Shape(_))));
    assert!(ModelParams::<f64>::init(config(1, 3, 8, Readout::Mean), 0).is_err());
}

#[test]
fn zero_layers_is_projection_mean_and_classifier() {
    let params = ModelParams::<f64>::init(config(0, 2, 8, Readout::Mean), 7).unwrap();
    let mut r = rng(2);
    let tokens: Tokens<f64> = random_tokens(&mut r, 6, 5);
    let (logits, pooled) = encoder_forward(&params, &tokens).unwrap();

    let w_in = &params.get("input.w").unwrap().data;
    let b_in = &params.get("input.b").unwrap().data;
    let mut mean = vec![0.0; 8];
    for row in (0..6).filter(|&r| tokens.mask[r]) {
        let z = naive_matmul(&tokens.values[row * 5..(row + 1) * 5], w_in, 1, 5, 8);
        for c in 0..8 {
            mean[c] += (z[c] + b_in[c]) / tokens.valid_count() as f64;
        }
    }
    let w_c = &params.get("classifier.w").unwrap().data;
    let b_c = &params.get("classifier.b").unwrap().data;
    let expected: Vec<f64> = naive_matmul(&mean, w_c, 1, 8, 3).iter().zip(b_c).map(|(a, b)| a + b).collect();
    assert!(max_abs_diff(&pooled, &mean) < 1e-12);
    assert!(max_abs_diff(&logits, &expected) < 1e-12);
}

#[test]
fn zero_classifier_gives_log_class_count() {
    let mut params = ModelParams::<f64>::init(config(1, 2, 8, Readout::Attention), 1).unwrap();
    for name in ["classifier.w", "classifier.b"] {
        params.get_mut(name).unwrap().data.fill(0.0);
    }
    let mut r = rng(3);
    let a: Tokens<f64> = random_tokens(&mut r, 5, 5);
    let b: Tokens<f64> = random_tokens(&mut r, 3, 5);
    let loss = batch_loss(&params, &[(&a, 0), (&b, 2)]).unwrap();
    assert!((loss - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn duplicated_batch_has_same_loss_and_gradients() {
    let params = ModelParams::<f64>::init(config(2, 2, 8, Readout::Mean), 4).unwrap();
    let mut r = rng(4);
    let t: Vec<Tokens<f64>> = (0..3).map(|_| random_tokens(&mut r, 7, 5)).collect();
    let once: Vec<_> = t.iter().zip([0, 1, 2]).collect();
    let twice: Vec<_> = once.iter().chain(&once).copied().collect();
    let (l1, g1) = loss_and_backward(&params, &once).unwrap();
    let (l2, g2) = loss_and_backward(&params, &twice).unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    assert!(params_diff(&g1, &g2) < 1e-14);
}

fn check_invariance(readout: Readout, seed: u64) {
    let params = ModelParams::<f32>::init(config(1, 4, 16, readout), seed).unwrap();
    let mut r = rng(seed);
    let tokens: Tokens<f32> = random_tokens(&mut r, 9, 5);
    let (base, _) = encoder_forward(&params, &tokens).unwrap();

    // Mean logits stay O(1); sum logits grow with the row count, so their
    // bound scales with the logit magnitude (same number of f32 ulps).
    let scale = match readout {
        Readout::Mean => 1.0,
        _ => base.iter().fold(1.0f64, |m, &x| m.max(x.abs() as f64)),
    };
    let perm = shuffled(&mut r, 9);
    let (permuted, _) = encoder_forward(&params, &permute(&tokens, &perm)).unwrap();
    assert!(max_abs_diff(&base, &permuted) <= 1e-6 * scale, "{readout:?} permutation");

    let mut padded = tokens.clone();
    for _ in 0..4 {
        padded.values.extend((0..5).map(|_| r.gen_range(-5.0f32..5.0)));
        padded.mask.push(false);
        padded.rows += 1;
    }
    let (with_padding, _) = encoder_forward(&params, &padded).unwrap();
    assert!(max_abs_diff(&base, &with_padding) <= 1e-6 * scale, "{readout:?} padding");
}

#[test]
fn readouts_are_permutation_and_padding_invariant() {
    for seed in 0..20 {
        for readout in [Readout::Mean, Readout::Sum, Readout::Attention] {
            check_invariance(readout, seed);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_is_permutation_equivariant(seed in 0u64..10_000, rows in 1usize..7) {
        let params = ModelParams::<f64>::init(config(1, 2, 8, Readout::Mean), seed).unwrap();
        let mut r = rng(seed);
        let z: Vec<f64> = (0..rows * 8).map(|_| r.gen_range(-2.0..2.0)).collect();
        let mut mask: Vec<bool> = (0..rows).map(|_| r.gen_bool(0.7)).collect();
        mask[0] = true;
        let perm = shuffled(&mut r, rows);
        let out = attention_forward(&params, 0, &z, &mask).unwrap();
        let pz: Vec<f64> = perm.iter().flat_map(|&i| z[i * 8..(i + 1) * 8].to_vec()).collect();
        let pmask: Vec<bool> = perm.iter().map(|&i| mask[i]).collect();
        let pout = attention_forward(&params, 0, &pz, &pmask).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            prop_assert!(max_abs_diff(&pout[i * 8..(i + 1) * 8], &out[src * 8..(src + 1) * 8]) < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_sums_to_one(scores in proptest::collection::vec(-30.0f64..30.0, 1..20), bits in any::<u32>()) {
        let mask: Vec<bool> = (0..scores.len()).map(|i| i == 0 || bits >> (i % 32) & 1 == 1).collect();
        let p = softmax_masked(&scores, &mask).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().zip(&mask).all(|(&x, &m)| m || x == 0.0));
        let s32: Vec<f32> = scores.iter().map(|&x| x as f32).collect();
        let p32 = softmax_masked(&s32, &mask).unwrap();
        prop_assert!((p32.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
