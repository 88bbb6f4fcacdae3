//! Full pair classifier: image encoder, fusion transformer and head.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Tensor};

use super::config::{Modality, RunConfig};
use crate::encoders::{pair_visual, ImageEncoder};
use crate::error::{Error, Result};
use crate::fusion::{FusionEncoder, FusionOutput, SequenceBatch};
use crate::imaging::{
    augment_2d, render_2d, render_3d_views, Image2D, MoleculeViews3D, RenderParams, ViewParams, NUM_FRAMES,
};
use crate::nn::ParamStore;
use crate::predictor::Head;

pub const ENCODER_PREFIX: &str = "image_encoder";

pub struct DdiModel {
    pub store: ParamStore,
    pub modality: Modality,
    pub encoder: Option<ImageEncoder>,
    pub fusion: FusionEncoder,
    pub head: Head,
}

pub struct ModelOutput {
    pub logits: Tensor,
    pub fusion: FusionOutput,
}

/// One mini-batch: sequences, the distinct drug images it needs and, per
/// pair, the row of each drug in that image stack.
pub struct PairBatch {
    pub sequences: SequenceBatch,
    /// (U, 3, H, W) for 2D, (U, 10, 3, H, W) for 3D, absent without images.
    pub images: Option<Tensor>,
    pub x_rows: Vec<u32>,
    pub y_rows: Vec<u32>,
    pub labels: Vec<u32>,
}

impl DdiModel {
    pub fn new(cfg: &RunConfig, vocab_size: usize, num_classes: usize, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(DType::F32, seed);
        let encoder = if cfg.modality.uses_images() {
            Some(ImageEncoder::new(&mut store, ENCODER_PREFIX, &cfg.backbone_config())?)
        } else {
            None
        };
        let fusion = FusionEncoder::new(&mut store, &cfg.fusion_config(vocab_size, num_classes))?;
        let head = Head::new(&mut store, cfg.node_hidden, num_classes)?;
        if let (Some(path), Some(_)) = (&cfg.pretrained_backbone, &encoder) {
            let n = store.load_pretrained(path, ENCODER_PREFIX)?;
            log::info!("loaded {n} pretrained backbone tensors from {}", path.display());
        }
        Ok(DdiModel {
            store,
            modality: cfg.modality,
            encoder,
            fusion,
            head,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    /// Per-drug embeddings for a stack of distinct drugs.
    pub fn embed_drugs(&self, images: &Tensor, train: bool) -> Result<Tensor> {
        let enc = self.encoder.as_ref().ok_or_else(|| Error::ModalityMismatch {
            expected: "2d or 3d".into(),
            found: self.modality.as_str().into(),
        })?;
        match self.modality {
            Modality::ThreeD => enc.encode_views(images, train),
            _ => enc.encode_images(images, train),
        }
    }

    /// Concatenated (x, y) visual vectors (B, 2e) from drug embeddings (U, e).
    pub fn pair_visuals(&self, drug_embeddings: &Tensor, x_rows: &[u32], y_rows: &[u32]) -> Result<Tensor> {
        let dev = drug_embeddings.device();
        let xi = Tensor::from_slice(x_rows, x_rows.len(), dev)?;
        let yi = Tensor::from_slice(y_rows, y_rows.len(), dev)?;
        pair_visual(&drug_embeddings.index_select(&xi, 0)?, &drug_embeddings.index_select(&yi, 0)?)
    }

    pub fn forward_with_visual(
        &self,
        sequences: &SequenceBatch,
        visual: Option<&Tensor>,
        train: bool,
    ) -> Result<ModelOutput> {
        let fusion = self.fusion.encode(sequences, visual, train)?;
        let logits = self.head.logits(&fusion.pooled)?;
        Ok(ModelOutput { logits, fusion })
    }

    pub fn forward(&self, batch: &PairBatch, train: bool) -> Result<ModelOutput> {
        let visual = match (&batch.images, self.modality.uses_images()) {
            (Some(images), true) => {
                let e = self.embed_drugs(images, train)?;
                Some(self.pair_visuals(&e, &batch.x_rows, &batch.y_rows)?)
            }
            (None, false) => None,
            (Some(_), false) => {
                return Err(Error::ModalityMismatch {
                    expected: "none".into(),
                    found: "image batch".into(),
                })
            }
            (None, true) => {
                return Err(Error::ModalityMismatch {
                    expected: self.modality.as_str().into(),
                    found: "batch without images".into(),
                })
            }
        };
        self.forward_with_visual(&batch.sequences, visual.as_ref(), train)
    }

    /// Parameter names updated by the optimizer.
    pub fn is_trainable(&self, name: &str, freeze_backbone: bool) -> bool {
        !(freeze_backbone && name.starts_with(ENCODER_PREFIX))
    }
}

/// Per-drug image source. 2D pictures are kept unaugmented and augmented
/// on request; 3D frame stacks are rendered once.
pub struct ImageBank {
    pub modality: Modality,
    pub size: u32,
    images_2d: HashMap<String, Image2D>,
    views_3d: HashMap<String, MoleculeViews3D>,
}

impl ImageBank {
    pub fn empty(modality: Modality, size: u32) -> Self {
        ImageBank {
            modality,
            size,
            images_2d: HashMap::new(),
            views_3d: HashMap::new(),
        }
    }

    /// Loads `<dir>/<drug>.png` / `<dir>/<drug>.npy` when present, renders otherwise.
    pub fn build<'a>(
        modality: Modality,
        size: u32,
        drugs: impl IntoIterator<Item = (&'a str, &'a str)>,
        cache_dir: Option<&Path>,
    ) -> Result<Self> {
        let mut bank = Self::empty(modality, size);
        for (id, smiles) in drugs {
            match modality {
                Modality::None => {}
                Modality::TwoD => {
                    let params = RenderParams::with_size(size);
                    let cached = cache_dir.map(|d| d.join(format!("{id}.png"))).filter(|p| p.exists());
                    let img = match cached {
                        Some(p) => crate::imaging::load_png(&p, params)?,
                        None => render_2d(smiles, &params).map_err(|e| with_drug(e, id))?,
                    };
                    if img.width() != size || img.height() != size {
                        return Err(Error::DataError(format!(
                            "cached image for {id} is {}x{}, expected {size}",
                            img.width(),
                            img.height()
                        )));
                    }
                    bank.images_2d.insert(id.to_string(), img);
                }
                Modality::ThreeD => {
                    let cached = cache_dir.map(|d| d.join(format!("{id}.npy"))).filter(|p| p.exists());
                    let views = match cached {
                        Some(p) => crate::imaging::load_views(&p)?.0,
                        None => render_views(smiles, size).map_err(|e| with_drug(e, id))?,
                    };
                    if views.size != size as usize {
                        return Err(Error::DataError(format!(
                            "cached views for {id} are {}px, expected {size}",
                            views.size
                        )));
                    }
                    bank.views_3d.insert(id.to_string(), views);
                }
            }
        }
        Ok(bank)
    }

    pub fn insert_2d(&mut self, drug: &str, image: Image2D) {
        self.images_2d.insert(drug.to_string(), image);
    }

    pub fn insert_3d(&mut self, drug: &str, views: MoleculeViews3D) {
        self.views_3d.insert(drug.to_string(), views);
    }

    pub fn image_2d(&self, drug: &str) -> Option<&Image2D> {
        self.images_2d.get(drug)
    }

    pub fn views_3d(&self, drug: &str) -> Option<&MoleculeViews3D> {
        self.views_3d.get(drug)
    }

    /// Unaugmented CHW buffers of the given drugs (every frame for 3D).
    pub fn chw_buffers(&self, drugs: &[&str]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::new();
        for d in drugs {
            match self.modality {
                Modality::TwoD => out.push(self.get_2d(d)?.to_chw()),
                Modality::ThreeD => {
                    let v = self.get_3d(d)?;
                    out.extend((0..NUM_FRAMES).map(|i| v.frame(i).to_vec()));
                }
                Modality::None => {}
            }
        }
        Ok(out)
    }

    fn get_2d(&self, drug: &str) -> Result<&Image2D> {
        self.images_2d
            .get(drug)
            .ok_or_else(|| Error::DataError(format!("no 2D image for drug {drug}")))
    }

    fn get_3d(&self, drug: &str) -> Result<&MoleculeViews3D> {
        self.views_3d
            .get(drug)
            .ok_or_else(|| Error::DataError(format!("no 3D views for drug {drug}")))
    }

    /// Stacks the images of `drugs`. `augment_seeds` gives one augmentation
    /// seed per drug (2D only).
    pub fn stack(&self, drugs: &[&str], augment_seeds: Option<&[u64]>) -> Result<Option<Tensor>> {
        let s = self.size as usize;
        match self.modality {
            Modality::None => Ok(None),
            Modality::TwoD => {
                let mut buf = Vec::with_capacity(drugs.len() * 3 * s * s);
                for (k, d) in drugs.iter().enumerate() {
                    let img = self.get_2d(d)?;
                    match augment_seeds {
                        Some(seeds) => buf.extend(augment_2d(img, self.size, seeds[k])?.to_chw()),
                        None => buf.extend(img.to_chw()),
                    }
                }
                Ok(Some(Tensor::from_vec(buf, (drugs.len(), 3, s, s), &candle_core::Device::Cpu)?))
            }
            Modality::ThreeD => {
                let mut buf = Vec::with_capacity(drugs.len() * NUM_FRAMES * 3 * s * s);
                for d in drugs {
                    buf.extend_from_slice(&self.get_3d(d)?.frames);
                }
                Ok(Some(Tensor::from_vec(
                    buf,
                    (drugs.len(), NUM_FRAMES, 3, s, s),
                    &candle_core::Device::Cpu,
                )?))
            }
        }
    }
}

fn with_drug(e: Error, drug: &str) -> Error {
    match e {
        Error::InvalidSmiles { source, .. } => Error::InvalidSmiles {
            drug: Some(drug.to_string()),
            source,
        },
        other => other,
    }
}

/// Conformer plus ten ball-and-stick frames at `size` pixels.
pub fn render_views(smiles: &str, size: u32) -> Result<MoleculeViews3D> {
    let conf = crate::imaging::generate_conformer(smiles)?;
    let params = ViewParams {
        out_size: size,
        ..ViewParams::default()
    };
    render_3d_views(&conf, smiles, &params, &crate::imaging::BallStickRenderer::default())
}
