//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SplitMode;
use crate::encoders::BackboneConfig;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::imaging::hex_sha1;

/// Hard ceiling on the number of training epochs.
pub const MAX_EPOCHS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
    #[serde(rename = "none")]
    None,
}

impl Modality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::TwoD => "2d",
            Modality::ThreeD => "3d",
            Modality::None => "none",
        }
    }

    pub fn uses_images(&self) -> bool {
        !matches!(self, Modality::None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Resnet18,
    Tiny,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Transformer layers T.
    pub num_layers: usize,
    /// Attention heads K.
    pub num_heads: usize,
    pub node_hidden: usize,
    /// Number of event classes |R|; inferred from the data when absent.
    pub num_events: Option<usize>,
    pub lr: f64,
    /// Expected vocabulary size; checked against the built vocabulary when set.
    pub vocab_size: Option<usize>,
    /// Motifs kept per drug L.
    pub per_drug_len: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation Macro-F1 improvement before stopping.
    pub patience: usize,
    pub dropout: f64,
    pub modality: Modality,
    pub seeds: Vec<u64>,
    pub split_mode: SplitMode,
    pub new_fraction: f64,
    /// Draw a fresh split per seed rather than reusing the first seed's split.
    pub resplit_per_seed: bool,
    pub drugs_path: PathBuf,
    pub interactions_path: PathBuf,
    pub out_dir: PathBuf,
    pub image_size: u32,
    pub backbone: BackboneKind,
    pub embed_dim: usize,
    pub augment: bool,
    pub freeze_backbone: bool,
    pub pretrained_backbone: Option<PathBuf>,
    /// Directory of cached images (`<drug>.png` or `<drug>.npy`); rendered on demand when absent.
    pub image_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_layers: 6,
            num_heads: 8,
            node_hidden: 512,
            num_events: None,
            lr: 1e-3,
            vocab_size: None,
            per_drug_len: 16,
            weight_decay: 1e-6,
            epochs: MAX_EPOCHS,
            batch_size: 128,
            patience: 20,
            dropout: 0.0,
            modality: Modality::TwoD,
            seeds: vec![0, 1, 2, 3, 4],
            split_mode: SplitMode::Transductive,
            new_fraction: 0.1,
            resplit_per_seed: true,
            drugs_path: PathBuf::from("data/drugs.tsv"),
            interactions_path: PathBuf::from("data/interactions.tsv"),
            out_dir: PathBuf::from("runs"),
            image_size: 224,
            backbone: BackboneKind::Resnet18,
            embed_dim: 512,
            augment: true,
            freeze_backbone: false,
            pretrained_backbone: None,
            image_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative data paths are taken relative to the config file
        if let Some(base) = path.parent() {
            for p in [&mut cfg.drugs_path, &mut cfg.interactions_path] {
                if p.is_relative() && !p.exists() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::ConfigError(m));
        if self.epochs == 0 || self.epochs > MAX_EPOCHS {
            return fail(format!("epochs {} must lie in 1..={MAX_EPOCHS}", self.epochs));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("lr and weight_decay must be finite and non-negative".into());
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if !(self.new_fraction > 0.0 && self.new_fraction < 1.0) {
            return fail(format!("new_fraction {} must lie in (0,1)", self.new_fraction));
        }
        if self.image_size < 16 {
            return fail(format!("image_size {} is too small", self.image_size));
        }
        if self.embed_dim == 0 {
            return fail("embed_dim must be positive".into());
        }
        self.fusion_config(2, 1).validate()
    }

    pub fn fusion_config(&self, vocab_size: usize, num_classes: usize) -> FusionConfig {
        FusionConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            hidden: self.node_hidden,
            per_drug_len: self.per_drug_len,
            vocab_size,
            num_classes,
            visual_dim: 2 * self.embed_dim,
            dropout: self.dropout,
        }
    }

    pub fn backbone_config(&self) -> BackboneConfig {
        match self.backbone {
            BackboneKind::Resnet18 => BackboneConfig {
                embed_dim: self.embed_dim,
                ..BackboneConfig::resnet18()
            },
            BackboneKind::Tiny => BackboneConfig::tiny(self.embed_dim),
        }
    }

    /// SHA-1 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex_sha1(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_table() {
        let c = RunConfig::default();
        assert_eq!((c.num_layers, c.num_heads, c.node_hidden, c.per_drug_len), (6, 8, 512, 16));
        assert_eq!((c.lr, c.weight_decay, c.epochs, c.batch_size), (1e-3, 1e-6, 100, 128));
        assert_eq!(c.patience, 20);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::from_toml("modality = \"none\"\nepochs = 5\nseeds = [7]\n").unwrap();
        assert_eq!(c.modality, Modality::None);
        assert_eq!(c.epochs, 5);
        assert_eq!(c.num_heads, 8);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["epochs = 101", "batch_size = 0", "node_hidden = 30", "lr = -1.0", "bogus = 1"] {
            let e = RunConfig::from_toml(text).unwrap_err();
            assert_eq!(e.kind(), "ConfigError", "{text}");
        }
    }
}
