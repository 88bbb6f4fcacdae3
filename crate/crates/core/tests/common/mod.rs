#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use imageddi::data::{DdiDataset, Interaction, SplitManifest};
use imageddi::harness::{BackboneKind, ImageBank, Modality, RunConfig, Workspace};
use imageddi::imaging::{render_2d, RenderParams};
use imageddi::tokenizer::{build_vocabulary, DrugRecord};

/// Largest relative error between the analytic gradient of `loss` with
/// respect to `var` and a central finite difference, over every element.
pub fn max_grad_error(var: &Var, loss: &dyn Fn() -> Tensor) -> f64 {
    let l = loss();
    let grads = l.backward().unwrap();
    let analytic: Vec<f64> = grads
        .get(var.as_tensor())
        .expect("gradient reaches the variable")
        .flatten_all()
        .unwrap()
        .to_vec1()
        .unwrap();
    let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
    let shape = var.as_tensor().dims().to_vec();
    let h = 1e-6;
    let eval_at = |vals: &[f64]| -> f64 {
        var.set(&Tensor::from_slice(vals, shape.clone(), &Device::Cpu).unwrap()).unwrap();
        loss().to_scalar::<f64>().unwrap()
    };
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        let up = eval_at(&p);
        p[i] -= 2.0 * h;
        let down = eval_at(&p);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        let err = if scale > 1e-7 { (a - numeric).abs() / scale } else { (a - numeric).abs() };
        worst = worst.max(err);
    }
    var.set(&Tensor::from_slice(&base, shape, &Device::Cpu).unwrap()).unwrap();
    worst
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_slice(&v, shape.to_vec(), &Device::Cpu).unwrap()
}

pub const SMILES: [&str; 12] = [
    "CC(=O)Oc1ccccc1C(=O)O",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "CC(=O)Nc1ccc(O)cc1",
    "OC(=O)c1ccccc1O",
    "CCN(CC)CCOC(=O)c1ccc(N)cc1",
    "CN(C)CCCN1c2ccccc2CCc2ccccc21",
    "Clc1ccc(cc1)C(c1ccccc1)N1CCNCC1",
    "CCOC(=O)C1=C(C)NC(C)=C(C1c1ccccc1[N+](=O)[O-])C(=O)OC",
    "NC(=O)c1cccnc1",
    "CC(C)NCC(O)COc1cccc2ccccc12",
    "OCC1OC(O)C(O)C(O)C1O",
];

/// Small model settings that train quickly on one CPU core.
pub fn tiny_config(modality: Modality) -> RunConfig {
    RunConfig {
        num_layers: 2,
        num_heads: 2,
        node_hidden: 16,
        per_drug_len: 4,
        embed_dim: 8,
        backbone: BackboneKind::Tiny,
        image_size: 32,
        batch_size: 8,
        epochs: 5,
        patience: 100,
        modality,
        seeds: vec![0],
        ..RunConfig::default()
    }
}

/// `n` distinct pairs over the drug list with labels cycling through `classes`.
pub fn toy_dataset(n: usize, classes: usize) -> DdiDataset {
    let drugs: Vec<DrugRecord> = SMILES
        .iter()
        .enumerate()
        .map(|(i, s)| DrugRecord::new(format!("D{i:02}"), *s))
        .collect();
    let mut inter = Vec::new();
    'outer: for a in 0..drugs.len() {
        for b in a + 1..drugs.len() {
            if inter.len() == n {
                break 'outer;
            }
            inter.push(Interaction {
                drug_x: drugs[a].drug_id.clone(),
                drug_y: drugs[b].drug_id.clone(),
                event: (inter.len() % classes) as u32,
            });
        }
    }
    assert_eq!(inter.len(), n, "not enough distinct pairs");
    DdiDataset::new(drugs, inter, Some(classes)).unwrap()
}

pub fn workspace(cfg: &RunConfig, ds: DdiDataset) -> Workspace {
    let vocab = build_vocabulary(&ds.drugs).unwrap();
    Workspace::from_parts(cfg, ds, vocab, None).unwrap()
}

/// Every interaction in both train and valid.
pub fn memorize_split(n: usize) -> SplitManifest {
    let all: Vec<usize> = (0..n).collect();
    SplitManifest::Transductive {
        seed: 0,
        ratios: (0.7, 0.1, 0.2),
        train: all.clone(),
        valid: all.clone(),
        test: all,
    }
}

pub fn image_bank_2d(ds: &DdiDataset, size: u32) -> ImageBank {
    let mut bank = ImageBank::empty(Modality::TwoD, size);
    for d in &ds.drugs {
        bank.insert_2d(&d.drug_id, render_2d(&d.smiles, &RenderParams::with_size(size)).unwrap());
    }
    bank
}

pub fn f64_scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}
