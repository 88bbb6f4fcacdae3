mod common;

use candle_core::{DType, Device, Tensor};
use common::random_tensor;
use imageddi::encoders::{BackboneConfig, ImageEncoder};
use imageddi::fusion::{Attention, FusionConfig, TransformerLayer};
use imageddi::nn::{to_f64_vec, ParamStore};
use imageddi::predictor::{compute_metrics, cross_entropy};

type Mat = Vec<Vec<f64>>;

fn cfg(hidden: usize, heads: usize, per_drug_len: usize) -> FusionConfig {
    FusionConfig {
        num_layers: 1,
        num_heads: heads,
        hidden,
        per_drug_len,
        vocab_size: 4,
        num_classes: 2,
        visual_dim: 2,
        dropout: 0.0,
    }
}

fn set(store: &ParamStore, name: &str, rows: &[&[f64]]) {
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let dims = store.get(name).unwrap().dims().to_vec();
    store
        .assign(name, &Tensor::from_slice(&flat, dims, &Device::Cpu).unwrap())
        .unwrap();
}

fn matrix(store: &ParamStore, name: &str) -> Mat {
    store.get(name).unwrap().as_tensor().to_vec2().unwrap()
}

fn vector(store: &ParamStore, name: &str) -> Vec<f64> {
    store.get(name).unwrap().as_tensor().to_vec1().unwrap()
}

/// y = W x + b with W stored (out, in).
fn affine(w: &Mat, b: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
    w.iter()
        .enumerate()
        .map(|(o, row)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b.map_or(0.0, |b| b[o]))
        .collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "element {i}: {x} vs {y}");
    }
}

/// Loop-based multi-head attention with additive key bias and key mask.
fn attention_by_hand(store: &ParamStore, prefix: &str, x: &Mat, bias: &[Vec<f64>], keep: &[bool], heads: usize) -> Mat {
    let wq = matrix(store, &format!("{prefix}.wq.weight"));
    let wk = matrix(store, &format!("{prefix}.wk.weight"));
    let wv = matrix(store, &format!("{prefix}.wv.weight"));
    let wo = matrix(store, &format!("{prefix}.wo.weight"));
    let bo = vector(store, &format!("{prefix}.wo.bias"));
    let n = x.len();
    let d = x[0].len();
    let dk = d / heads;
    let q: Mat = x.iter().map(|r| affine(&wq, None, r)).collect();
    let k: Mat = x.iter().map(|r| affine(&wk, None, r)).collect();
    let v: Mat = x.iter().map(|r| affine(&wv, None, r)).collect();
    let mut mixed = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        for i in 0..n {
            let mut scores = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                if keep[j] {
                    let dot: f64 = cols.clone().map(|c| q[i][c] * k[j][c]).sum();
                    scores[j] = dot / (dk as f64).sqrt() + bias[h][j];
                }
            }
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in cols.clone() {
                mixed[i][c] = (0..n).map(|j| e[j] / z * v[j][c]).sum();
            }
        }
    }
    mixed.iter().map(|r| affine(&wo, Some(&bo), r)).collect()
}

fn layer_norm_by_hand(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * gamma[i] + beta[i])
        .collect()
}

#[test]
fn two_token_single_head_attention_matches_brute_force() {
    let c = cfg(2, 1, 1);
    let mut store = ParamStore::new(DType::F64, 0);
    let attn = Attention::new(&mut store, "a", &c).unwrap();
    set(&store, "a.wq.weight", &[&[1.0, 0.5], &[-0.5, 2.0]]);
    set(&store, "a.wk.weight", &[&[0.3, -1.0], &[1.5, 0.2]]);
    set(&store, "a.wv.weight", &[&[2.0, 0.0], &[1.0, -1.0]]);
    set(&store, "a.wo.weight", &[&[0.5, 1.0], &[-1.0, 0.25]]);
    set(&store, "a.wo.bias", &[&[0.1, -0.2]]);
    let x = Tensor::new(&[[[0.4f64, -0.3], [1.2, 0.7]]], &Device::Cpu).unwrap();
    let bias = Tensor::new(&[[[0.8f64, -0.6]]], &Device::Cpu).unwrap();
    let mask = Tensor::ones((1, 2), DType::F64, &Device::Cpu).unwrap();
    let (out, w) = attn.forward(&x, Some(&bias), &mask).unwrap();

    // Scalar arithmetic written out for the two tokens.
    let (x0, x1) = ([0.4, -0.3], [1.2, 0.7]);
    let lin = |w: [[f64; 2]; 2], x: [f64; 2]| [w[0][0] * x[0] + w[0][1] * x[1], w[1][0] * x[0] + w[1][1] * x[1]];
    let wq = [[1.0, 0.5], [-0.5, 2.0]];
    let wk = [[0.3, -1.0], [1.5, 0.2]];
    let wv = [[2.0, 0.0], [1.0, -1.0]];
    let (q0, q1) = (lin(wq, x0), lin(wq, x1));
    let (k0, k1) = (lin(wk, x0), lin(wk, x1));
    let (v0, v1) = (lin(wv, x0), lin(wv, x1));
    let s = 2f64.sqrt();
    let mut expected = Vec::new();
    let mut weights = Vec::new();
    for q in [q0, q1] {
        let l0 = (q[0] * k0[0] + q[1] * k0[1]) / s + 0.8;
        let l1 = (q[0] * k1[0] + q[1] * k1[1]) / s - 0.6;
        let a0 = 1.0 / (1.0 + (l1 - l0).exp());
        let a1 = 1.0 - a0;
        weights.extend([a0, a1]);
        let m = [a0 * v0[0] + a1 * v1[0], a0 * v0[1] + a1 * v1[1]];
        expected.push(0.5 * m[0] + 1.0 * m[1] + 0.1);
        expected.push(-1.0 * m[0] + 0.25 * m[1] - 0.2);
    }
    close(&to_f64_vec(&out).unwrap(), &expected, 1e-10);
    close(&to_f64_vec(&w).unwrap(), &weights, 1e-10);
}

#[test]
fn masked_multi_head_layer_matches_loop_oracle() {
    let c = cfg(4, 2, 2);
    let mut store = ParamStore::new(DType::F64, 3);
    let layer = TransformerLayer::new(&mut store, "l", &c).unwrap();
    // non-trivial affine parameters so that the oracle exercises them
    set(&store, "l.norm1.gamma", &[&[1.1, 0.9, 1.3, 0.7]]);
    set(&store, "l.norm1.beta", &[&[0.1, -0.1, 0.2, 0.0]]);
    set(&store, "l.norm2.gamma", &[&[0.8, 1.2, 1.0, 0.6]]);
    set(&store, "l.norm2.beta", &[&[-0.3, 0.0, 0.05, 0.4]]);
    let x = random_tensor(&[1, 4, 4], 4);
    let bias = random_tensor(&[1, 2, 4], 5);
    let keep = [true, true, true, false];
    let mask = Tensor::new(&[[1.0f64, 1.0, 1.0, 0.0]], &Device::Cpu).unwrap();
    let (out, _) = layer.forward(&x, Some(&bias), &mask, false).unwrap();

    let xs: Mat = x.squeeze(0).unwrap().to_vec2().unwrap();
    let bs: Mat = bias.squeeze(0).unwrap().to_vec2().unwrap();
    let a = attention_by_hand(&store, "l.attn", &xs, &bs, &keep, 2);
    let (g1, b1) = (vector(&store, "l.norm1.gamma"), vector(&store, "l.norm1.beta"));
    let (g2, b2) = (vector(&store, "l.norm2.gamma"), vector(&store, "l.norm2.beta"));
    let (w1, c1) = (matrix(&store, "l.ffn1.weight"), vector(&store, "l.ffn1.bias"));
    let (w2, c2) = (matrix(&store, "l.ffn2.weight"), vector(&store, "l.ffn2.bias"));
    let mut expected = Vec::new();
    for (xi, ai) in xs.iter().zip(&a) {
        let res: Vec<f64> = xi.iter().zip(ai).map(|(p, q)| p + q).collect();
        let z = layer_norm_by_hand(&res, &g1, &b1);
        let h: Vec<f64> = affine(&w1, Some(&c1), &z).into_iter().map(|v| v.max(0.0)).collect();
        let f = affine(&w2, Some(&c2), &h);
        let res2: Vec<f64> = z.iter().zip(&f).map(|(p, q)| p + q).collect();
        expected.extend(layer_norm_by_hand(&res2, &g2, &b2));
    }
    close(&to_f64_vec(&out).unwrap(), &expected, 1e-10);
}

#[test]
fn confusion_matrix_metrics_match_hand_values() {
    // rows are true classes, columns predictions: [[2,1,0],[0,1,1],[1,0,2]]
    let labels = [0, 0, 0, 1, 1, 2, 2, 2];
    let predicted = [0, 0, 1, 1, 2, 0, 2, 2];
    let r = compute_metrics(&predicted, &labels).unwrap();
    let counts: Vec<(usize, usize)> = r.per_class.iter().map(|c| (c.support, c.predicted)).collect();
    assert_eq!(counts, vec![(3, 3), (2, 2), (3, 3)]);
    // per class F1 = 2TP / (2TP + FP + FN): 4/6, 2/4, 4/6
    let f1 = [4.0 / 6.0, 2.0 / 4.0, 4.0 / 6.0];
    for (c, want) in r.per_class.iter().zip(f1) {
        assert_eq!(c.f1, want, "class {}", c.class);
        assert_eq!(c.precision, want, "class {}", c.class);
        assert_eq!(c.recall, want, "class {}", c.class);
    }
    assert_eq!(r.accuracy, 5.0 / 8.0);
    let macro_f1 = 11.0 / 18.0;
    assert_eq!(r.macro_f1, macro_f1);
    assert_eq!(r.macro_recall, macro_f1);
    assert_eq!(r.macro_precision, macro_f1);
}

#[test]
fn perfect_predictions_score_one() {
    let labels = [3, 1, 4, 1, 5, 9, 2, 6];
    let r = compute_metrics(&labels, &labels).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.macro_f1, 1.0);
    assert_eq!(r.macro_precision, 1.0);
    assert_eq!(r.macro_recall, 1.0);
}

#[test]
fn uniform_four_way_cross_entropy_is_ln_four() {
    let probs = vec![vec![0.25; 4]; 3];
    let ce = cross_entropy(&probs, &[0, 3, 2]).unwrap();
    assert!((ce - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn stub_backbone_forward_matches_hand_arithmetic() {
    let stub = BackboneConfig {
        in_channels: 3,
        stem_channels: 2,
        stem_kernel: 1,
        stem_stride: 1,
        stem_maxpool: false,
        stage_channels: vec![],
        blocks_per_stage: 0,
        embed_dim: 2,
    };
    let mut store = ParamStore::new(DType::F64, 0);
    let enc = ImageEncoder::new(&mut store, "stub", &stub).unwrap();
    set(&store, "stub.stem.conv.weight", &[&[1.0, -1.0, 0.5], &[-0.5, 0.25, 1.0]]);
    set(&store, "stub.fc.weight", &[&[1.0, 2.0], &[-1.0, 0.5]]);
    set(&store, "stub.fc.bias", &[&[0.1, -0.2]]);
    let img = Tensor::new(
        &[[
            [[0.1f64, 0.2], [0.3, 0.4]],
            [[0.5, 0.6], [0.7, 0.8]],
            [[0.9, 1.0], [0.0, 0.5]],
        ]],
        &Device::Cpu,
    )
    .unwrap();
    let out = to_f64_vec(&enc.encode_images(&img, false).unwrap()).unwrap();
    // 1x1 conv per pixel:
    //   channel 0: 0.05, 0.1, -0.4, -0.15 -> relu mean 0.0375
    //   channel 1: 0.975, 1.05, 0.025, 0.5 -> mean 0.6375
    // eval batch norm with unit running variance scales by 1/sqrt(1 + 1e-5)
    let s = 1.0 / (1.0f64 + 1e-5).sqrt();
    let expected = [
        1.0 * 0.0375 * s + 2.0 * 0.6375 * s + 0.1,
        -1.0 * 0.0375 * s + 0.5 * 0.6375 * s - 0.2,
    ];
    close(&out, &expected, 1e-12);
}
