mod common;

use candle_core::{DType, Device, Tensor};
use common::{image_bank_2d, memorize_split, tiny_config, toy_dataset, workspace};
use imageddi::harness::{
    evaluate, infer, parameter_snapshot, train, Checkpoint, DdiModel, Modality, RunConfig, Workspace,
};
use imageddi::tokenizer::build_vocabulary;
use imageddi::Error;

fn workspace_2d(cfg: &RunConfig, n: usize, classes: usize) -> Workspace {
    let ds = toy_dataset(n, classes);
    let vocab = build_vocabulary(&ds.drugs).unwrap();
    let bank = image_bank_2d(&ds, cfg.image_size);
    Workspace::from_parts(cfg, ds, vocab, Some(bank)).unwrap()
}

#[test]
fn twenty_pairs_are_memorized_without_images() {
    let cfg = RunConfig {
        epochs: 100,
        ..tiny_config(Modality::None)
    };
    let ws = workspace(&cfg, toy_dataset(20, 3));
    let out = train(&ws, &memorize_split(20), 0, None).unwrap();
    let all: Vec<usize> = (0..20).collect();
    let acc = evaluate(&out.model, &ws, &all).unwrap().accuracy;
    assert!(acc >= 0.95, "training accuracy {acc} after {} epochs", out.log.len());
}

#[test]
fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
    let cfg = RunConfig {
        lr: 0.0,
        epochs: 2,
        ..tiny_config(Modality::TwoD)
    };
    let ws = workspace_2d(&cfg, 12, 3);
    let fresh = parameter_snapshot(&DdiModel::new(&cfg, ws.vocab.size(), ws.num_classes(), 0).unwrap()).unwrap();
    let out = train(&ws, &memorize_split(12), 0, None).unwrap();
    let after = parameter_snapshot(&out.model).unwrap();
    assert_eq!(fresh.len(), after.len());
    for (name, before) in &fresh {
        let a = &after[name];
        assert!(
            before.iter().zip(a).all(|(x, y)| x.to_bits() == y.to_bits()),
            "{name} moved with lr 0"
        );
    }
}

#[test]
fn same_seed_gives_the_same_loss_curve() {
    let cfg = RunConfig {
        epochs: 3,
        ..tiny_config(Modality::TwoD)
    };
    let ws = workspace_2d(&cfg, 12, 3);
    let split = memorize_split(12);
    let a = train(&ws, &split, 7, None).unwrap();
    let b = train(&ws, &split, 7, None).unwrap();
    let curve = |o: &imageddi::harness::TrainOutcome| o.log.iter().map(|e| e.train_loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(curve(&a), curve(&b));
    let c = train(&ws, &split, 8, None).unwrap();
    assert_ne!(curve(&a), curve(&c), "a different seed should change the run");
}

#[test]
fn restored_model_reproduces_the_logged_best_validation_score() {
    let cfg = RunConfig {
        epochs: 6,
        ..tiny_config(Modality::None)
    };
    let ws = workspace(&cfg, toy_dataset(24, 3));
    let split = imageddi::data::make_split(&ws.dataset, imageddi::data::SplitMode::Transductive, 0.1, 3).unwrap();
    let out = train(&ws, &split, 3, None).unwrap();
    let valid = split.bucket("valid").unwrap();
    let f1 = evaluate(&out.model, &ws, valid).unwrap().macro_f1;
    assert_eq!(f1, out.best_valid_macro_f1());
    assert_eq!(f1, out.log[out.best_epoch() - 1].valid_macro_f1);
    let best = out.log.iter().map(|e| e.valid_macro_f1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(f1, best);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let cfg = RunConfig {
        epochs: 2,
        ..tiny_config(Modality::TwoD)
    };
    let ws = workspace_2d(&cfg, 12, 3);
    let dir = tempfile::tempdir().unwrap();
    let out = train(&ws, &memorize_split(12), 0, Some(dir.path())).unwrap();
    let (ckpt, vocab) = Checkpoint::load(&dir.path().join("checkpoint")).unwrap();
    assert_eq!(vocab.hash(), ws.vocab.hash());
    assert_eq!(ckpt.meta.epoch, out.best_epoch());
    let reloaded = ckpt.to_model().unwrap();
    let all: Vec<usize> = (0..12).collect();
    let p0 = infer(&out.model, &ws, &all).unwrap().probs;
    let p1 = infer(&reloaded, &ws, &all).unwrap().probs;
    for (r0, r1) in p0.iter().zip(&p1) {
        for (a, b) in r0.iter().zip(r1) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
    assert!(dir.path().join("train_log.json").exists());
}

#[test]
fn zeroed_projector_reduces_to_the_text_only_model() {
    let cfg = tiny_config(Modality::TwoD);
    let ws = workspace_2d(&cfg, 12, 3);
    let with_images = DdiModel::new(&cfg, ws.vocab.size(), ws.num_classes(), 1).unwrap();
    for name in ["fusion.bias_projector.weight", "fusion.bias_projector.bias"] {
        let dims = with_images.store.get(name).unwrap().dims().to_vec();
        with_images
            .store
            .assign(name, &Tensor::zeros(dims, DType::F32, &Device::Cpu).unwrap())
            .unwrap();
    }
    let text_cfg = RunConfig {
        modality: Modality::None,
        ..cfg.clone()
    };
    let text_only = DdiModel::new(&text_cfg, ws.vocab.size(), ws.num_classes(), 2).unwrap();
    for (name, _) in text_only.store.vars() {
        text_only
            .store
            .assign(name, with_images.store.get(name).unwrap().as_tensor())
            .unwrap();
    }
    let text_ws = workspace(&text_cfg, toy_dataset(12, 3));
    let idx: Vec<usize> = (0..12).collect();
    let a = with_images.forward(&ws.batch(&idx, None).unwrap(), false).unwrap().logits;
    let b = text_only.forward(&text_ws.batch(&idx, None).unwrap(), false).unwrap().logits;
    let diff = (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
    assert!(diff < 1e-6, "max logit difference {diff}");
}

#[test]
fn training_updates_both_encoder_and_transformer() {
    let cfg = RunConfig {
        epochs: 1,
        ..tiny_config(Modality::TwoD)
    };
    let ws = workspace_2d(&cfg, 12, 3);
    let fresh = parameter_snapshot(&DdiModel::new(&cfg, ws.vocab.size(), ws.num_classes(), 0).unwrap()).unwrap();
    let out = train(&ws, &memorize_split(12), 0, None).unwrap();
    let after = parameter_snapshot(&out.model).unwrap();
    let moved = |prefix: &str| {
        fresh
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .any(|(k, v)| v != &after[k])
    };
    assert!(moved("image_encoder.stem"), "backbone stem did not change");
    assert!(moved("image_encoder.fc"), "image embedding layer did not change");
    assert!(moved("fusion.bias_projector"), "projector did not change");
    assert!(moved("fusion.layer0.attn"), "attention did not change");
    assert!(moved("head."), "head did not change");
}

#[test]
fn frozen_backbone_stays_fixed() {
    let cfg = RunConfig {
        epochs: 1,
        freeze_backbone: true,
        ..tiny_config(Modality::TwoD)
    };
    let ws = workspace_2d(&cfg, 12, 3);
    let fresh = parameter_snapshot(&DdiModel::new(&cfg, ws.vocab.size(), ws.num_classes(), 0).unwrap()).unwrap();
    let out = train(&ws, &memorize_split(12), 0, None).unwrap();
    let after = parameter_snapshot(&out.model).unwrap();
    for (k, v) in &fresh {
        if k.starts_with("image_encoder.") {
            assert_eq!(v, &after[k], "{k} changed while frozen");
        }
    }
    assert_ne!(fresh["fusion.bias_projector.weight"], after["fusion.bias_projector.weight"]);
}

#[test]
fn stalled_validation_stops_early() {
    let cfg = RunConfig {
        lr: 0.0,
        epochs: 10,
        patience: 2,
        ..tiny_config(Modality::None)
    };
    let ws = workspace(&cfg, toy_dataset(12, 3));
    let out = train(&ws, &memorize_split(12), 0, None).unwrap();
    assert_eq!(out.log.len(), 3);
    assert!(out.stopped_early);
    assert_eq!(out.best_epoch(), 1);
}

#[test]
fn empty_buckets_are_reported() {
    let cfg = tiny_config(Modality::None);
    let ws = workspace(&cfg, toy_dataset(12, 3));
    let model = DdiModel::new(&cfg, ws.vocab.size(), ws.num_classes(), 0).unwrap();
    assert!(matches!(evaluate(&model, &ws, &[]), Err(Error::EmptyInput)));
    let split = imageddi::data::SplitManifest::Transductive {
        seed: 0,
        ratios: (0.7, 0.1, 0.2),
        train: (0..12).collect(),
        valid: vec![],
        test: vec![],
    };
    assert!(matches!(train(&ws, &split, 0, None), Err(Error::EmptyPartition(_))));
}

#[test]
fn three_view_modality_trains_one_epoch() {
    let cfg = RunConfig {
        epochs: 1,
        image_size: 24,
        ..tiny_config(Modality::ThreeD)
    };
    let ds = toy_dataset(6, 2);
    let vocab = build_vocabulary(&ds.drugs).unwrap();
    let ws = Workspace::from_parts(&cfg, ds, vocab, None).unwrap();
    let batch = ws.batch(&[0, 1], None).unwrap();
    assert_eq!(batch.images.as_ref().unwrap().dims()[1..], [10, 3, 24, 24]);
    let out = train(&ws, &memorize_split(6), 0, None).unwrap();
    assert!(out.log[0].train_loss.is_finite());
}
