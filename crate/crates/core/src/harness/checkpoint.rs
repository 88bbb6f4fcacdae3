//! Checkpoint directories: `model.safetensors`, `meta.json`, `vocab.json`.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use super::config::{Modality, RunConfig};
use super::model::DdiModel;
use crate::error::{Error, Result};
use crate::tokenizer::MotifVocabulary;

pub const MODEL_FILE: &str = "model.safetensors";
pub const META_FILE: &str = "meta.json";
pub const VOCAB_FILE: &str = "vocab.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    pub best_valid_macro_f1: f64,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub num_classes: usize,
    pub modality: Modality,
    pub optimizer_step: u64,
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    /// Parameters and buffers as produced by `ParamStore::named_tensors`.
    pub tensors: HashMap<String, Tensor>,
    /// Optimizer moments as produced by `Adam::named_state`.
    pub optimizer: HashMap<String, Tensor>,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path, vocab: &MotifVocabulary) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let mut all = self.tensors.clone();
        for (k, t) in &self.optimizer {
            all.insert(k.clone(), t.clone());
        }
        candle_core::safetensors::save(&all, dir.join(MODEL_FILE))?;
        let meta = dir.join(META_FILE);
        std::fs::write(&meta, serde_json::to_string_pretty(&self.meta)?).map_err(Error::io(&meta))?;
        vocab.save(&dir.join(VOCAB_FILE))
    }

    pub fn load(dir: &Path) -> Result<(Self, MotifVocabulary)> {
        let meta_path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(Error::io(&meta_path))?;
        let meta: CheckpointMeta = serde_json::from_str(&text)?;
        let vocab = MotifVocabulary::load(&dir.join(VOCAB_FILE))?;
        if vocab.hash() != meta.vocab_hash {
            return Err(Error::VocabularyMismatch {
                expected: meta.vocab_hash.clone(),
                found: vocab.hash(),
            });
        }
        let all = candle_core::safetensors::load(dir.join(MODEL_FILE), &Device::Cpu)?;
        let (optimizer, tensors): (HashMap<_, _>, HashMap<_, _>) =
            all.into_iter().partition(|(k, _)| k.starts_with("adam."));
        Ok((
            Checkpoint {
                meta,
                tensors,
                optimizer,
            },
            vocab,
        ))
    }

    /// Rebuilds the model and restores every parameter and buffer.
    pub fn to_model(&self) -> Result<DdiModel> {
        let cfg = RunConfig {
            pretrained_backbone: None,
            ..self.meta.config.clone()
        };
        let model = DdiModel::new(&cfg, self.meta.vocab_size, self.meta.num_classes, self.meta.seed)?;
        model.store.load_named(&self.tensors)?;
        Ok(model)
    }

    /// Errors unless `vocab` is the vocabulary the checkpoint was trained with.
    pub fn check_vocabulary(&self, vocab: &MotifVocabulary) -> Result<()> {
        let found = vocab.hash();
        if found != self.meta.vocab_hash {
            return Err(Error::VocabularyMismatch {
                expected: self.meta.vocab_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}
