//! Prepared run inputs, the training loop, inference and aggregation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::config::RunConfig;
use super::model::{DdiModel, ImageBank, PairBatch};
use crate::data::{load_dataset, DdiDataset, SplitManifest};
use crate::encoders::channel_statistics;
use crate::error::{Error, Result};
use crate::fusion::SequenceBatch;
use crate::nn::{softmax_last, to_f64_vec, Adam};
use crate::predictor::{compute_metrics, cross_entropy_logits, MetricsReport};
use crate::tokenizer::{build_vocabulary, encode_drug_with_id, join_pair, MotifVocabulary, PairSequence};

/// Dataset, vocabulary, per-interaction sequences and images for one config.
pub struct Workspace {
    pub config: RunConfig,
    pub dataset: DdiDataset,
    pub vocab: MotifVocabulary,
    pub pairs: Vec<PairSequence>,
    pub images: ImageBank,
    drug_index: HashMap<String, usize>,
}

impl Workspace {
    /// Loads the configured dataset, builds the vocabulary and images.
    pub fn prepare(config: &RunConfig) -> Result<Self> {
        let dataset = load_dataset(&config.drugs_path, &config.interactions_path, config.num_events)?;
        let vocab = build_vocabulary(&dataset.drugs)?;
        Self::from_parts(config, dataset, vocab, None)
    }

    /// Uses the given vocabulary; images are rendered unless `images` is supplied.
    pub fn from_parts(
        config: &RunConfig,
        dataset: DdiDataset,
        vocab: MotifVocabulary,
        images: Option<ImageBank>,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(expected) = config.vocab_size {
            if expected != vocab.size() {
                return Err(Error::ConfigError(format!(
                    "configured vocab_size {expected} but the vocabulary has {} entries",
                    vocab.size()
                )));
            }
        }
        let mut seqs = HashMap::new();
        for d in &dataset.drugs {
            seqs.insert(
                d.drug_id.clone(),
                encode_drug_with_id(&d.drug_id, &d.smiles, &vocab, config.per_drug_len)?,
            );
        }
        let pairs = dataset
            .interactions
            .iter()
            .map(|it| join_pair(&seqs[&it.drug_x], &seqs[&it.drug_y]))
            .collect::<Result<Vec<_>>>()?;
        let images = match images {
            Some(bank) => bank,
            None => ImageBank::build(
                config.modality,
                config.image_size,
                dataset.drugs.iter().map(|d| (d.drug_id.as_str(), d.smiles.as_str())),
                config.image_dir.as_deref(),
            )?,
        };
        let drug_index = dataset
            .drugs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.drug_id.clone(), i))
            .collect();
        Ok(Workspace {
            config: config.clone(),
            dataset,
            vocab,
            pairs,
            images,
            drug_index,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.dataset.num_events
    }

    /// Mini-batch over interaction indices. With `augment = Some((seed,
    /// epoch))` every distinct 2D image gets its own augmentation draw.
    pub fn batch(&self, indices: &[usize], augment: Option<(u64, usize)>) -> Result<PairBatch> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        let refs: Vec<&PairSequence> = indices.iter().map(|&i| &self.pairs[i]).collect();
        let sequences = SequenceBatch::from_pairs(&refs)?;
        let mut drugs: Vec<&str> = Vec::new();
        let mut rows: HashMap<&str, u32> = HashMap::new();
        let mut x_rows = Vec::with_capacity(indices.len());
        let mut y_rows = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let it = &self.dataset.interactions[i];
            for (d, out) in [(&it.drug_x, &mut x_rows), (&it.drug_y, &mut y_rows)] {
                let row = *rows.entry(d.as_str()).or_insert_with(|| {
                    drugs.push(d.as_str());
                    (drugs.len() - 1) as u32
                });
                out.push(row);
            }
            labels.push(it.event);
        }
        let seeds: Option<Vec<u64>> = augment.map(|(seed, epoch)| {
            drugs
                .iter()
                .map(|d| augmentation_seed(seed, epoch, self.drug_index[*d]))
                .collect()
        });
        let images = self.images.stack(&drugs, seeds.as_deref())?;
        Ok(PairBatch {
            sequences,
            images,
            x_rows,
            y_rows,
            labels,
        })
    }

    /// Drug ids appearing in the given interactions, in first-seen order.
    pub fn drugs_of(&self, indices: &[usize]) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for &i in indices {
            let it = &self.dataset.interactions[i];
            for d in [it.drug_x.as_str(), it.drug_y.as_str()] {
                if seen.insert(d) {
                    out.push(d);
                }
            }
        }
        out
    }
}

/// Distinct stream per (run seed, epoch, drug).
pub fn augmentation_seed(seed: u64, epoch: usize, drug: usize) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((epoch as u64) << 32)
        .wrapping_add(drug as u64);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_macro_f1: f64,
    pub valid_accuracy: f64,
    pub seconds: f64,
}

pub struct TrainOutcome {
    /// Model holding the best-validation weights.
    pub model: DdiModel,
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn best_epoch(&self) -> usize {
        self.checkpoint.meta.epoch
    }

    pub fn best_valid_macro_f1(&self) -> f64 {
        self.checkpoint.meta.best_valid_macro_f1
    }
}

/// Mini-batch Adam on the train bucket with early stopping on validation
/// Macro-F1. When `out` is given the best checkpoint and the epoch log are
/// written there as they are produced.
pub fn train(ws: &Workspace, split: &SplitManifest, seed: u64, out: Option<&Path>) -> Result<TrainOutcome> {
    let cfg = &ws.config;
    let train_idx = split.bucket("train").ok_or(Error::EmptyPartition("train"))?.to_vec();
    let valid_idx = split.bucket("valid").ok_or(Error::EmptyPartition("valid"))?.to_vec();
    if train_idx.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if valid_idx.is_empty() {
        return Err(Error::EmptyPartition("valid"));
    }
    let model = DdiModel::new(cfg, ws.vocab.size(), ws.num_classes(), seed)?;
    if let Some(enc) = &model.encoder {
        if cfg.pretrained_backbone.is_none() || !cfg.freeze_backbone {
            let drugs = ws.drugs_of(&train_idx);
            let bufs = ws.images.chw_buffers(&drugs)?;
            let (mean, std) = channel_statistics(bufs.iter().map(|b| b.as_slice()), 3)?;
            enc.set_normalization(&mean, &std)?;
        }
    }
    let mut adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7E57_0000);
    let mut order = train_idx.clone();
    let mut log = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let aug = (cfg.augment && cfg.modality == super::config::Modality::TwoD).then_some((seed, epoch));
            let batch = ws.batch(chunk, aug)?;
            let out = model.forward(&batch, true)?;
            let loss = cross_entropy_logits(&out.logits, &batch.labels)?;
            let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("loss {value} over {} pairs, lr {}", chunk.len(), cfg.lr),
                });
            }
            let grads = loss.backward()?;
            adam.step(&model.store, &grads, |name| model.is_trainable(name, cfg.freeze_backbone))?;
            loss_sum += value * chunk.len() as f64;
            let logits = out.logits.to_dtype(candle_core::DType::F64)?.to_vec2::<f64>()?;
            for (row, &y) in logits.iter().zip(&batch.labels) {
                if crate::predictor::argmax(row) == y as usize {
                    correct += 1;
                }
            }
        }
        let valid = evaluate(&model, ws, &valid_idx)?;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            train_accuracy: correct as f64 / train_idx.len() as f64,
            valid_macro_f1: valid.macro_f1,
            valid_accuracy: valid.accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "seed {seed} epoch {epoch}: loss {:.4} train acc {:.3} valid F1 {:.4}",
            entry.train_loss,
            entry.train_accuracy,
            entry.valid_macro_f1
        );
        let improved = best.as_ref().is_none_or(|c| valid.macro_f1 > c.meta.best_valid_macro_f1);
        log.push(entry);
        if improved {
            since_best = 0;
            let ckpt = Checkpoint {
                meta: CheckpointMeta {
                    config: cfg.clone(),
                    config_hash: cfg.hash(),
                    seed,
                    epoch,
                    best_valid_macro_f1: valid.macro_f1,
                    vocab_hash: ws.vocab.hash(),
                    vocab_size: ws.vocab.size(),
                    num_classes: ws.num_classes(),
                    modality: cfg.modality,
                    optimizer_step: adam.step,
                },
                tensors: model.store.named_tensors()?,
                optimizer: adam.named_state(),
            };
            if let Some(dir) = out {
                ckpt.save(&dir.join("checkpoint"), &ws.vocab)?;
            }
            best = Some(ckpt);
        } else {
            since_best += 1;
        }
        if let Some(dir) = out {
            write_json(&dir.join("train_log.json"), &log)?;
        }
        if since_best >= cfg.patience {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    let checkpoint = best.expect("at least one epoch ran");
    model.store.load_named(&checkpoint.tensors)?;
    Ok(TrainOutcome {
        model,
        checkpoint,
        log,
        stopped_early,
    })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(Error::io(path))
}

/// Eval-mode outputs for a list of interactions.
pub struct Inference {
    pub probs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Pooled pair representations, one row per interaction.
    pub pooled: Vec<Vec<f64>>,
}

pub fn infer(model: &DdiModel, ws: &Workspace, indices: &[usize]) -> Result<Inference> {
    let mut out = Inference {
        probs: Vec::with_capacity(indices.len()),
        labels: Vec::with_capacity(indices.len()),
        pooled: Vec::with_capacity(indices.len()),
    };
    for chunk in indices.chunks(ws.config.batch_size.max(1)) {
        let batch = ws.batch(chunk, None)?;
        let o = model.forward(&batch, false)?;
        let p = softmax_last(&o.logits)?.to_dtype(candle_core::DType::F64)?.to_vec2::<f64>()?;
        let z = o.fusion.pooled.to_dtype(candle_core::DType::F64)?.to_vec2::<f64>()?;
        out.probs.extend(p);
        out.pooled.extend(z);
        out.labels.extend(batch.labels.iter().map(|&y| y as usize));
    }
    Ok(out)
}

/// Deterministic metrics on a bucket; an empty bucket is `EmptyInput`.
pub fn evaluate(model: &DdiModel, ws: &Workspace, indices: &[usize]) -> Result<MetricsReport> {
    if indices.is_empty() {
        return compute_metrics(&[], &[]);
    }
    let inf = infer(model, ws, indices)?;
    let pred: Vec<usize> = inf.probs.iter().map(|p| crate::predictor::argmax(p)).collect();
    compute_metrics(&pred, &inf.labels)
}

/// Evaluates a saved checkpoint on a named bucket of a split manifest.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    vocab: &MotifVocabulary,
    ws: &Workspace,
    split: &SplitManifest,
    bucket: &str,
) -> Result<MetricsReport> {
    ckpt.check_vocabulary(vocab)?;
    ckpt.check_vocabulary(&ws.vocab)?;
    let indices = split
        .bucket(bucket)
        .ok_or_else(|| Error::ConfigError(format!("split has no bucket {bucket:?}")))?;
    let model = ckpt.to_model()?;
    evaluate(&model, ws, indices)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub metrics: BTreeMap<String, MeanStd>,
}

/// Per-metric mean and sample standard deviation (0 for a single run).
/// Values are sorted before summation so the result ignores input order.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let fields: [(&str, fn(&MetricsReport) -> f64); 4] = [
        ("accuracy", |r| r.accuracy),
        ("macro_f1", |r| r.macro_f1),
        ("macro_precision", |r| r.macro_precision),
        ("macro_recall", |r| r.macro_recall),
    ];
    let n = reports.len() as f64;
    let mut metrics = BTreeMap::new();
    for (name, get) in fields {
        let mut v: Vec<f64> = reports.iter().map(get).collect();
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / n;
        let std = if reports.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        metrics.insert(name.to_string(), MeanStd { mean, std });
    }
    Ok(AggregateReport {
        runs: reports.len(),
        metrics,
    })
}

/// Flattened parameter values by name, for change detection.
pub fn parameter_snapshot(model: &DdiModel) -> Result<BTreeMap<String, Vec<f64>>> {
    model
        .store
        .vars()
        .map(|(k, v)| Ok((k.to_string(), to_f64_vec(v.as_tensor())?)))
        .collect()
}
