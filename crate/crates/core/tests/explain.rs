mod common;

use candle_core::{DType, Device, Tensor};
use common::{image_bank_2d, tiny_config};
use imageddi::data::{DdiDataset, Interaction};
use imageddi::harness::{
    explain_attention, explain_gradcam, grad_cam_map, normalize_and_threshold, silhouette, tsne_2d, DdiModel,
    Modality, RunConfig, TsneParams, Workspace,
};
use imageddi::tokenizer::{build_vocabulary, DrugRecord};
use imageddi::Error;

/// Ethanol is a single motif; the other two drugs fragment into several.
fn small_dataset() -> DdiDataset {
    let drugs = vec![
        DrugRecord::new("ETH", "CCO"),
        DrugRecord::new("ASA", "CC(=O)Oc1ccccc1C(=O)O"),
        DrugRecord::new("PRC", "CCN(CC)CCOC(=O)c1ccc(N)cc1"),
    ];
    let pair = |x: &str, y: &str, e: u32| Interaction {
        drug_x: x.into(),
        drug_y: y.into(),
        event: e,
    };
    DdiDataset::new(drugs, vec![pair("ETH", "ASA", 0), pair("ASA", "PRC", 1), pair("ETH", "PRC", 0)], Some(2)).unwrap()
}

fn workspace_for(cfg: &RunConfig) -> Workspace {
    let ds = small_dataset();
    let vocab = build_vocabulary(&ds.drugs).unwrap();
    let bank = match cfg.modality {
        Modality::TwoD => Some(image_bank_2d(&ds, cfg.image_size)),
        _ => None,
    };
    Workspace::from_parts(cfg, ds, vocab, bank).unwrap()
}

fn model_for(cfg: &RunConfig, ws: &Workspace) -> DdiModel {
    DdiModel::new(cfg, ws.vocab.size(), ws.num_classes(), 5).unwrap()
}

#[test]
fn attention_rows_and_blocks_are_normalized() {
    let cfg = tiny_config(Modality::TwoD);
    let ws = workspace_for(&cfg);
    let model = model_for(&cfg, &ws);
    let exp = explain_attention(&model, &ws, "ETH", "PRC").unwrap();
    assert!(!exp.query_rows.is_empty());
    for row in &exp.query_rows {
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-6, "query row sums to {s}");
    }
    let eth: Vec<_> = exp.motifs.iter().filter(|m| m.segment == 0).collect();
    assert_eq!(eth.len(), 1, "ethanol is one motif");
    assert!((eth[0].block_weight - 1.0).abs() < 1e-12);
    let prc: f64 = exp.motifs.iter().filter(|m| m.segment == 1).map(|m| m.block_weight).sum();
    assert!((prc - 1.0).abs() < 1e-9);
    assert!(exp.motifs.iter().filter(|m| m.segment == 1).count() > 1);
}

#[test]
fn visual_bias_changes_the_attention_pattern() {
    let cfg = tiny_config(Modality::TwoD);
    let ws = workspace_for(&cfg);
    let model = model_for(&cfg, &ws);
    let biased = explain_attention(&model, &ws, "ASA", "PRC").unwrap();
    for name in ["fusion.bias_projector.weight", "fusion.bias_projector.bias"] {
        let dims = model.store.get(name).unwrap().dims().to_vec();
        model
            .store
            .assign(name, &Tensor::zeros(dims, DType::F32, &Device::Cpu).unwrap())
            .unwrap();
    }
    let plain = explain_attention(&model, &ws, "ASA", "PRC").unwrap();
    let diff: f64 = biased
        .motifs
        .iter()
        .zip(&plain.motifs)
        .map(|(a, b)| (a.weight - b.weight).abs())
        .sum();
    assert!(diff > 1e-4, "bias had no effect ({diff})");
}

#[test]
fn unknown_drug_in_explanation_is_an_error() {
    let cfg = tiny_config(Modality::None);
    let ws = workspace_for(&cfg);
    let model = model_for(&cfg, &ws);
    assert!(explain_attention(&model, &ws, "ETH", "NOPE").is_err());
}

#[test]
fn grad_cam_requires_the_multi_view_model() {
    let cfg = tiny_config(Modality::TwoD);
    let ws = workspace_for(&cfg);
    let model = model_for(&cfg, &ws);
    let err = explain_gradcam(&model, &ws, "ETH", "ASA", None, &[0]).unwrap_err();
    assert!(matches!(err, Error::ModalityMismatch { .. }), "{err:?}");
}

#[test]
fn grad_cam_maps_are_thresholded_unit_maps() {
    let cfg = RunConfig {
        image_size: 32,
        ..tiny_config(Modality::ThreeD)
    };
    let ws = workspace_for(&cfg);
    let model = model_for(&cfg, &ws);
    let maps = explain_gradcam(&model, &ws, "ASA", "PRC", Some(1), &[0, 4, 9]).unwrap();
    assert_eq!(maps.iter().map(|m| m.frame).collect::<Vec<_>>(), vec![0, 4, 9]);
    for m in &maps {
        assert_eq!(m.class, 1);
        assert_eq!(m.values.len(), m.width * m.height);
        for &v in &m.values {
            assert!(v == 0.0 || (0.5..=1.0).contains(&v), "value {v}");
        }
    }
    assert!(matches!(
        explain_gradcam(&model, &ws, "ASA", "PRC", None, &[10]),
        Err(Error::IndexOutOfRange { index: 10, .. })
    ));
    assert!(matches!(
        explain_gradcam(&model, &ws, "ASA", "PRC", Some(7), &[0]),
        Err(Error::IndexOutOfRange { index: 7, .. })
    ));
}

#[test]
fn grad_cam_map_matches_hand_values() {
    // two channels over a 2x2 plane
    let acts = [1.0, 2.0, 0.0, 4.0, 3.0, 0.0, 1.0, 1.0];
    let grads = [0.5, 0.5, 0.5, 0.5, -1.0, 0.0, 0.0, -1.0];
    // channel weights: 0.5 and -0.5
    // map: 0.5*[1,2,0,4] - 0.5*[3,0,1,1] = [-1, 1, -0.5, 1.5] -> relu
    let map = grad_cam_map(&acts, &grads, 2).unwrap();
    assert_eq!(map, vec![0.0, 1.0, 0.0, 1.5]);
    let scaled = normalize_and_threshold(&map, 0.5);
    assert_eq!(scaled, vec![0.0, 1.0 / 1.5, 0.0, 1.0]);
}

fn clusters() -> (Vec<Vec<f64>>, Vec<usize>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let centers = [[0.0, 0.0, 0.0, 0.0], [10.0, 0.0, 0.0, 5.0], [0.0, 10.0, -5.0, 0.0]];
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..15 {
            pts.push(c.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect());
            labels.push(k);
        }
    }
    (pts, labels)
}

#[test]
fn tsne_separates_well_separated_clusters() {
    let (pts, labels) = clusters();
    let params = TsneParams {
        seed: 1,
        epochs: 500,
        ..TsneParams::default()
    };
    let y = tsne_2d(&pts, &params).unwrap();
    let s = silhouette(&y, &labels);
    assert!(s > 0.5, "silhouette {s}");
}

#[test]
fn tsne_is_deterministic_for_a_seed() {
    let (pts, _) = clusters();
    let params = TsneParams {
        seed: 9,
        epochs: 200,
        ..TsneParams::default()
    };
    let a = tsne_2d(&pts, &params).unwrap();
    let b = tsne_2d(&pts, &params).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tsne_tolerates_duplicate_points() {
    let mut pts = vec![vec![1.0, 2.0, 3.0]; 6];
    pts.extend(vec![vec![-4.0, 0.0, 1.0]; 6]);
    let y = tsne_2d(&pts, &TsneParams { epochs: 200, ..TsneParams::default() }).unwrap();
    assert!(y.iter().flatten().all(|v| v.is_finite()));
    assert!(matches!(tsne_2d(&pts[..1], &TsneParams::default()), Err(Error::TooFewSamples(1))));
}
