//! Motif attention tables and Grad-CAM saliency over rendered frames.

use std::path::Path;

use candle_core::{DType, IndexOp, Tensor, Var, D};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::config::Modality;
use super::model::DdiModel;
use super::run::Workspace;
use crate::error::{Error, Result};
use crate::fusion::SequenceBatch;
use crate::imaging::NUM_FRAMES;
use crate::nn::to_f64_vec;
use crate::predictor::argmax;
use crate::tokenizer::{encode_drug_with_id, join_pair, PairSequence};

/// Saliency below this value (after min-max scaling) is set to zero.
pub const SALIENCY_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotifWeight {
    pub position: usize,
    /// 0 for the first drug, 1 for the second.
    pub segment: u32,
    pub token_id: u32,
    pub motif: String,
    /// Final-layer attention averaged over heads and unmasked queries.
    pub weight: f64,
    /// `weight` renormalized within its drug's block.
    pub block_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionExplanation {
    pub drug_x: String,
    pub drug_y: String,
    pub modality: Modality,
    pub predicted_event: usize,
    pub motifs: Vec<MotifWeight>,
    /// Head-averaged final-layer rows (one per unmasked query, one column per position).
    pub query_rows: Vec<Vec<f64>>,
}

/// Sequences and visual input for a single drug pair.
pub struct PairInput {
    pub pair: PairSequence,
    pub batch: SequenceBatch,
    pub images: Option<Tensor>,
    pub x_row: u32,
    pub y_row: u32,
}

pub fn pair_input(ws: &Workspace, drug_x: &str, drug_y: &str) -> Result<PairInput> {
    let smiles = |d: &str| {
        ws.dataset
            .smiles_of(d)
            .ok_or_else(|| Error::DataError(format!("unknown drug {d}")))
    };
    let l = ws.config.per_drug_len;
    let sx = encode_drug_with_id(drug_x, smiles(drug_x)?, &ws.vocab, l)?;
    let sy = encode_drug_with_id(drug_y, smiles(drug_y)?, &ws.vocab, l)?;
    let pair = join_pair(&sx, &sy)?;
    let batch = SequenceBatch::from_pairs(&[&pair])?;
    let (drugs, y_row) = if drug_x == drug_y {
        (vec![drug_x], 0)
    } else {
        (vec![drug_x, drug_y], 1)
    };
    let images = if ws.config.modality.uses_images() {
        ws.images.stack(&drugs, None)?
    } else {
        None
    };
    Ok(PairInput {
        pair,
        batch,
        images,
        x_row: 0,
        y_row,
    })
}

fn visual_for(model: &DdiModel, input: &PairInput) -> Result<Option<Tensor>> {
    match &input.images {
        Some(images) if model.modality.uses_images() => {
            let e = model.embed_drugs(images, false)?;
            Ok(Some(model.pair_visuals(&e, &[input.x_row], &[input.y_row])?))
        }
        _ => Ok(None),
    }
}

/// Per-motif attention mass of the final layer for one pair.
pub fn explain_attention(model: &DdiModel, ws: &Workspace, drug_x: &str, drug_y: &str) -> Result<AttentionExplanation> {
    let input = pair_input(ws, drug_x, drug_y)?;
    let visual = visual_for(model, &input)?;
    let out = model.forward_with_visual(&input.batch, visual.as_ref(), false)?;
    let logits = to_f64_vec(&out.logits)?;
    let last = out
        .fusion
        .attention
        .last()
        .ok_or_else(|| Error::ConfigError("model has no transformer layers".into()))?;
    // (1, K, N, N) -> (N, N)
    let avg = last.mean(1)?.squeeze(0)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
    let mask = &input.pair.key_mask;
    let rows: Vec<Vec<f64>> = avg.iter().zip(mask).filter(|(_, m)| **m).map(|(r, _)| r.clone()).collect();
    let n = mask.len();
    let mut weights = vec![0.0; n];
    for r in &rows {
        for (w, v) in weights.iter_mut().zip(r) {
            *w += v / rows.len() as f64;
        }
    }
    let mut block_sum = [0.0f64; 2];
    for j in 0..n {
        if mask[j] {
            block_sum[input.pair.segment_ids[j] as usize] += weights[j];
        }
    }
    let motifs = (0..n)
        .filter(|&j| mask[j])
        .map(|j| {
            let seg = input.pair.segment_ids[j];
            let s = block_sum[seg as usize];
            let token = input.pair.token_ids[j];
            MotifWeight {
                position: j,
                segment: seg,
                token_id: token,
                motif: ws.vocab.label(token).to_string(),
                weight: weights[j],
                block_weight: if s > 0.0 { weights[j] / s } else { 0.0 },
            }
        })
        .collect();
    Ok(AttentionExplanation {
        drug_x: drug_x.to_string(),
        drug_y: drug_y.to_string(),
        modality: model.modality,
        predicted_event: argmax(&logits),
        motifs,
        query_rows: rows,
    })
}

/// Class-gradient-weighted activation map: ReLU(sum_c mean(grad_c) * act_c)
/// over one (C, h, w) feature block.
pub fn grad_cam_map(activations: &[f64], gradients: &[f64], channels: usize) -> Result<Vec<f64>> {
    if activations.len() != gradients.len() || channels == 0 || activations.len() % channels != 0 {
        return Err(Error::ShapeMismatch(format!(
            "activations {} / gradients {} over {channels} channels",
            activations.len(),
            gradients.len()
        )));
    }
    let plane = activations.len() / channels;
    let mut map = vec![0.0; plane];
    for c in 0..channels {
        let g = &gradients[c * plane..(c + 1) * plane];
        let alpha = g.iter().sum::<f64>() / plane as f64;
        for (m, a) in map.iter_mut().zip(&activations[c * plane..(c + 1) * plane]) {
            *m += alpha * a;
        }
    }
    Ok(map.into_iter().map(|v| v.max(0.0)).collect())
}

/// Min-max scaling to [0,1] (a constant map becomes all zeros), then values
/// below `threshold` are set to 0.
pub fn normalize_and_threshold(map: &[f64], threshold: f64) -> Vec<f64> {
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    map.iter()
        .map(|v| {
            let s = if range > 0.0 { (v - lo) / range } else { 0.0 };
            if s < threshold {
                0.0
            } else {
                s
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub frame: usize,
    pub class: usize,
    pub width: usize,
    pub height: usize,
    /// Row-major values in [0,1] at feature-map resolution.
    pub values: Vec<f64>,
}

/// Grad-CAM over the first drug's frames for the target class (the
/// predicted class when `class` is None).
pub fn explain_gradcam(
    model: &DdiModel,
    ws: &Workspace,
    drug_x: &str,
    drug_y: &str,
    class: Option<usize>,
    frames: &[usize],
) -> Result<Vec<SaliencyMap>> {
    if model.modality != Modality::ThreeD {
        return Err(Error::ModalityMismatch {
            expected: "3d".into(),
            found: model.modality.as_str().into(),
        });
    }
    if let Some(&bad) = frames.iter().find(|&&f| f >= NUM_FRAMES) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            size: NUM_FRAMES,
        });
    }
    let enc = model.encoder.as_ref().expect("3d model has an encoder");
    let input = pair_input(ws, drug_x, drug_y)?;
    let images = input.images.as_ref().expect("3d workspace has images");
    let views_x = images.i(input.x_row as usize)?;
    let views_y = images.i(input.y_row as usize)?;
    let feats = enc.features(&views_x, false)?.detach();
    let (_, c, h, w) = feats.dims4()?;
    let act = Var::from_tensor(&feats)?;
    let emb_x = enc.backbone.head(act.as_tensor())?.mean_keepdim(0)?;
    let emb_y = enc.encode_views(&views_y.unsqueeze(0)?, false)?.detach();
    let visual = Tensor::cat(&[&emb_x, &emb_y], D::Minus1)?;
    let out = model.forward_with_visual(&input.batch, Some(&visual), false)?;
    let logits = to_f64_vec(&out.logits)?;
    let target = class.unwrap_or_else(|| argmax(&logits));
    if target >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            size: logits.len(),
        });
    }
    let score = out.logits.i((0, target))?;
    let grads = score.backward()?;
    let g = grads
        .get(act.as_tensor())
        .ok_or_else(|| Error::DataError("no gradient reached the feature maps".into()))?;
    let mut maps = Vec::with_capacity(frames.len());
    for &f in frames {
        let a = to_f64_vec(&act.as_tensor().i(f)?)?;
        let gf = to_f64_vec(&g.i(f)?)?;
        let raw = grad_cam_map(&a, &gf, c)?;
        maps.push(SaliencyMap {
            frame: f,
            class: target,
            width: w,
            height: h,
            values: normalize_and_threshold(&raw, SALIENCY_THRESHOLD),
        });
    }
    Ok(maps)
}

/// Bilinear resize of a row-major map (align-corners off).
pub fn upsample(values: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_w * out_h];
    for y in 0..out_h {
        let sy = ((y as f64 + 0.5) * h as f64 / out_h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for x in 0..out_w {
            let sx = ((x as f64 + 0.5) * w as f64 / out_w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let top = values[y0 * w + x0] * (1.0 - fx) + values[y0 * w + x1] * fx;
            let bot = values[y1 * w + x0] * (1.0 - fx) + values[y1 * w + x1] * fx;
            out[y * out_w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Blends a red heat layer over a CHW frame in [0,1] and writes a PNG.
pub fn write_overlay(frame_chw: &[f32], size: usize, map: &SaliencyMap, path: &Path) -> Result<()> {
    let heat = upsample(&map.values, map.width, map.height, size, size);
    let plane = size * size;
    let mut img = RgbImage::new(size as u32, size as u32);
    for (i, h) in heat.iter().enumerate() {
        let a = 0.6 * h;
        let px = |c: usize, target: f64| {
            let base = frame_chw[c * plane + i] as f64;
            (((1.0 - a) * base + a * target) * 255.0).round().clamp(0.0, 255.0) as u8
        };
        img.put_pixel(
            (i % size) as u32,
            (i / size) as u32,
            Rgb([px(0, 1.0), px(1, 0.0), px(2, 0.0)]),
        );
    }
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_cam_is_weighted_sum_with_relu() {
        // two channels on a 1x2 map; alphas are 0.5 and -1
        let acts = [1.0, 3.0, 2.0, 0.0];
        let grads = [0.0, 1.0, -1.0, -1.0];
        let map = grad_cam_map(&acts, &grads, 2).unwrap();
        assert_eq!(map, vec![0.0, 1.5]);
    }

    #[test]
    fn constant_map_normalizes_to_zero() {
        assert_eq!(normalize_and_threshold(&[2.0; 4], 0.5), vec![0.0; 4]);
        let t = normalize_and_threshold(&[0.0, 0.4, 0.6, 1.0], 0.5);
        assert_eq!(t, vec![0.0, 0.0, 0.6, 1.0]);
    }

    #[test]
    fn upsample_preserves_constants() {
        let up = upsample(&[0.25; 4], 2, 2, 5, 5);
        assert!(up.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }
}
