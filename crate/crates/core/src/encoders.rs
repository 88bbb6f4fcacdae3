//! Residual CNN image encoder, view pooling and pair concatenation.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Linear, ParamStore};

/// Shape of the residual backbone. The default is an 18-layer network
/// (stem + 4 stages of 2 basic blocks) followed by a 512-wide linear layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stem_maxpool: bool,
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub embed_dim: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig::resnet18()
    }
}

impl BackboneConfig {
    pub fn resnet18() -> Self {
        BackboneConfig {
            in_channels: 3,
            stem_channels: 64,
            stem_kernel: 7,
            stem_stride: 2,
            stem_maxpool: true,
            stage_channels: vec![64, 128, 256, 512],
            blocks_per_stage: 2,
            embed_dim: 512,
        }
    }

    /// Same topology with narrow stages, for tests.
    pub fn tiny(embed_dim: usize) -> Self {
        BackboneConfig {
            in_channels: 3,
            stem_channels: 4,
            stem_kernel: 3,
            stem_stride: 1,
            stem_maxpool: true,
            stage_channels: vec![4, 8],
            blocks_per_stage: 1,
            embed_dim,
        }
    }

    pub fn feature_channels(&self) -> usize {
        *self.stage_channels.last().unwrap_or(&self.stem_channels)
    }
}

struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    down: Option<(Conv2d, BatchNorm2d)>,
}

impl BasicBlock {
    fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        let down = if stride != 1 || c_in != c_out {
            Some((
                Conv2d::new(store, &format!("{name}.down.conv"), c_in, c_out, 1, stride, 0)?,
                BatchNorm2d::new(store, &format!("{name}.down.bn"), c_out)?,
            ))
        } else {
            None
        };
        Ok(BasicBlock {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), c_in, c_out, 3, stride, 1)?,
            bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), c_out)?,
            conv2: Conv2d::new(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, 1)?,
            bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), c_out)?,
            down,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let h = self.bn1.forward(&self.conv1.forward(x)?, train)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?, train)?;
        let skip = match &self.down {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, train)?,
            None => x.clone(),
        };
        Ok((h + skip)?.relu()?)
    }
}

pub struct Backbone {
    pub config: BackboneConfig,
    stem: Conv2d,
    stem_bn: BatchNorm2d,
    stages: Vec<Vec<BasicBlock>>,
    pub fc: Linear,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, prefix: &str, config: &BackboneConfig) -> Result<Self> {
        let stem = Conv2d::new(
            store,
            &format!("{prefix}.stem.conv"),
            config.in_channels,
            config.stem_channels,
            config.stem_kernel,
            config.stem_stride,
            config.stem_kernel / 2,
        )?;
        let stem_bn = BatchNorm2d::new(store, &format!("{prefix}.stem.bn"), config.stem_channels)?;
        let mut stages = Vec::new();
        let mut c_in = config.stem_channels;
        for (s, &c_out) in config.stage_channels.iter().enumerate() {
            let mut blocks = Vec::new();
            for b in 0..config.blocks_per_stage {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(
                    store,
                    &format!("{prefix}.stage{s}.block{b}"),
                    c_in,
                    c_out,
                    stride,
                )?);
                c_in = c_out;
            }
            stages.push(blocks);
        }
        let fc = Linear::new(store, &format!("{prefix}.fc"), c_in, config.embed_dim, true)?;
        Ok(Backbone {
            config: config.clone(),
            stem,
            stem_bn,
            stages,
            fc,
        })
    }

    /// Activations of the last convolutional stage, (B, C, h, w).
    pub fn forward_features(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        if x.rank() != 4 || x.dim(1)? != self.config.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "backbone expects (B,{},H,W), got {:?}",
                self.config.in_channels,
                x.dims()
            )));
        }
        let mut h = self.stem_bn.forward(&self.stem.forward(x)?, train)?.relu()?;
        if self.config.stem_maxpool && h.dim(2)? >= 2 && h.dim(3)? >= 2 {
            // 3x3/2 max pool with padding 1; relu output is >= 0 so zero padding is neutral
            h = h.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
            h = crate::nn::max_pool_3x3_s2(&h)?;
        }
        for stage in &self.stages {
            for block in stage {
                h = block.forward(&h, train)?;
            }
        }
        Ok(h)
    }

    /// Global average pooling followed by the final linear layer.
    pub fn head(&self, features: &Tensor) -> Result<Tensor> {
        let pooled = features.mean((2, 3))?;
        self.fc.forward(&pooled)
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.head(&self.forward_features(x, train)?)
    }
}

/// Backbone plus per-channel input normalization (stored as buffers so that
/// checkpoints carry the statistics).
pub struct ImageEncoder {
    pub backbone: Backbone,
    pub prefix: String,
    mean: candle_core::Var,
    std: candle_core::Var,
}

impl ImageEncoder {
    pub fn new(store: &mut ParamStore, prefix: &str, config: &BackboneConfig) -> Result<Self> {
        let c = config.in_channels;
        let mean = store.buffer(&format!("{prefix}.norm.mean"), &[c], 0.0)?;
        let std = store.buffer(&format!("{prefix}.norm.std"), &[c], 1.0)?;
        Ok(ImageEncoder {
            backbone: Backbone::new(store, prefix, config)?,
            prefix: prefix.to_string(),
            mean,
            std,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.backbone.config.embed_dim
    }

    pub fn set_normalization(&self, mean: &[f64], std: &[f64]) -> Result<()> {
        let c = self.backbone.config.in_channels;
        if mean.len() != c || std.len() != c {
            return Err(Error::ShapeMismatch(format!("normalization needs {c} channels")));
        }
        let dt = self.mean.dtype();
        let dev = self.mean.device().clone();
        self.mean.set(&Tensor::from_slice(mean, c, &dev)?.to_dtype(dt)?)?;
        let std: Vec<f64> = std.iter().map(|s| s.max(1e-6)).collect();
        self.std.set(&Tensor::from_slice(&std, c, &dev)?.to_dtype(dt)?)?;
        Ok(())
    }

    pub fn normalization(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            crate::nn::to_f64_vec(self.mean.as_tensor())?,
            crate::nn::to_f64_vec(self.std.as_tensor())?,
        ))
    }

    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.backbone.config.in_channels;
        if x.rank() != 4 || x.dim(1)? != c {
            return Err(Error::ShapeMismatch(format!("expected (B,{c},H,W), got {:?}", x.dims())));
        }
        let x = x.to_dtype(self.mean.dtype())?;
        let m = self.mean.as_tensor().reshape((1, c, 1, 1))?;
        let s = self.std.as_tensor().reshape((1, c, 1, 1))?;
        Ok(x.broadcast_sub(&m)?.broadcast_div(&s)?)
    }

    /// (B, 3, H, W) images in [0,1] to (B, embed_dim).
    pub fn encode_images(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.backbone.forward(&self.normalize(x)?, train)
    }

    /// Last-stage activations of normalized images.
    pub fn features(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.backbone.forward_features(&self.normalize(x)?, train)
    }

    /// (B, V, 3, H, W) view stacks to (B, embed_dim) by averaging the V
    /// per-frame embeddings.
    pub fn encode_views(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        if x.rank() != 5 {
            return Err(Error::ShapeMismatch(format!("view stack must be 5-D, got {:?}", x.dims())));
        }
        let (b, v, c, h, w) = x.dims5()?;
        let flat = x.reshape((b * v, c, h, w))?;
        let e = self.encode_images(&flat, train)?;
        Ok(e.reshape((b, v, self.embed_dim()))?.mean(1)?)
    }
}

/// Single 2D image (3, H, W) to its embedding vector.
pub fn encode_image_2d(encoder: &ImageEncoder, image: &Tensor) -> Result<Tensor> {
    if image.rank() != 3 {
        return Err(Error::ShapeMismatch(format!("expected (3,H,W), got {:?}", image.dims())));
    }
    Ok(encoder.encode_images(&image.unsqueeze(0)?, false)?.squeeze(0)?)
}

/// View stack (V, 3, H, W) to the mean of its per-frame embeddings.
pub fn encode_views_3d(encoder: &ImageEncoder, views: &Tensor) -> Result<Tensor> {
    if views.rank() != 4 || views.dim(0)? != crate::imaging::NUM_FRAMES {
        return Err(Error::ShapeMismatch(format!(
            "expected ({},3,H,W), got {:?}",
            crate::imaging::NUM_FRAMES,
            views.dims()
        )));
    }
    Ok(encoder.encode_views(&views.unsqueeze(0)?, false)?.squeeze(0)?)
}

/// Concatenation along the last axis in (x, y) order.
pub fn pair_visual(ix: &Tensor, iy: &Tensor) -> Result<Tensor> {
    if ix.dims() != iy.dims() {
        return Err(Error::ShapeMismatch(format!(
            "pair halves differ: {:?} vs {:?}",
            ix.dims(),
            iy.dims()
        )));
    }
    let last = ix.rank().checked_sub(1).ok_or_else(|| Error::ShapeMismatch("scalar embedding".into()))?;
    Ok(Tensor::cat(&[ix, iy], last)?)
}

/// Per-channel mean and standard deviation over CHW float images.
pub fn channel_statistics<'a>(images: impl IntoIterator<Item = &'a [f32]>, channels: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut sum = vec![0.0f64; channels];
    let mut sq = vec![0.0f64; channels];
    let mut count = 0usize;
    for img in images {
        if img.len() % channels != 0 {
            return Err(Error::ShapeMismatch("image buffer not divisible by channels".into()));
        }
        let plane = img.len() / channels;
        for c in 0..channels {
            for &v in &img[c * plane..(c + 1) * plane] {
                sum[c] += v as f64;
                sq[c] += (v as f64) * (v as f64);
            }
        }
        count += plane;
    }
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n - m * m).max(0.0).sqrt())
        .collect();
    Ok((mean, std))
}

pub fn image_tensor(chw: &[f32], size: usize, dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_slice(chw, (3, size, size), &candle_core::Device::Cpu)?.to_dtype(dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::to_f64_vec;
    use candle_core::Device;

    fn tiny_encoder(dtype: DType, seed: u64) -> (ParamStore, ImageEncoder) {
        let mut store = ParamStore::new(dtype, seed);
        let enc = ImageEncoder::new(&mut store, "enc", &BackboneConfig::tiny(6)).unwrap();
        (store, enc)
    }

    #[test]
    fn resnet18_has_expected_parameter_count() {
        let mut store = ParamStore::new(DType::F32, 0);
        let cfg = BackboneConfig::resnet18();
        Backbone::new(&mut store, "b", &cfg).unwrap();
        // conv+bn trunk of the reference 18-layer network has 11,176,512
        // parameters; the 512x512 linear layer adds 262,656
        assert_eq!(store.num_parameters(), 11_176_512 + 262_656);
    }

    #[test]
    fn output_width_and_determinism() {
        let (_s, enc) = tiny_encoder(DType::F32, 5);
        let (_s2, enc2) = tiny_encoder(DType::F32, 5);
        let x = Tensor::rand(0f32, 1f32, (3, 16, 16), &Device::Cpu).unwrap();
        let a = encode_image_2d(&enc, &x).unwrap();
        let b = encode_image_2d(&enc2, &x).unwrap();
        assert_eq!(a.dims(), &[6]);
        assert_eq!(a.to_vec1::<f32>().unwrap(), b.to_vec1::<f32>().unwrap());
    }

    #[test]
    fn zero_image_with_zero_bias_is_finite() {
        let (store, enc) = tiny_encoder(DType::F64, 1);
        store
            .assign("enc.fc.bias", &Tensor::zeros(6, DType::F64, &Device::Cpu).unwrap())
            .unwrap();
        enc.set_normalization(&[0.5, 0.4, 0.3], &[0.2, 0.2, 0.2]).unwrap();
        let x = Tensor::zeros((3, 8, 8), DType::F64, &Device::Cpu).unwrap();
        let e = to_f64_vec(&encode_image_2d(&enc, &x).unwrap()).unwrap();
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn view_pooling_laws() {
        let (_s, enc) = tiny_encoder(DType::F64, 2);
        let a = Tensor::rand(0f64, 1f64, (3, 12, 12), &Device::Cpu).unwrap();
        let b = Tensor::rand(0f64, 1f64, (3, 12, 12), &Device::Cpu).unwrap();
        let same = Tensor::stack(&vec![a.clone(); 10], 0).unwrap();
        let pooled = to_f64_vec(&encode_views_3d(&enc, &same).unwrap()).unwrap();
        let single = to_f64_vec(&encode_image_2d(&enc, &a).unwrap()).unwrap();
        for (p, s) in pooled.iter().zip(&single) {
            assert!((p - s).abs() < 1e-9);
        }
        let mixed: Vec<Tensor> = (0..10).map(|i| if i % 2 == 0 { a.clone() } else { b.clone() }).collect();
        let m = to_f64_vec(&encode_views_3d(&enc, &Tensor::stack(&mixed, 0).unwrap()).unwrap()).unwrap();
        let eb = to_f64_vec(&encode_image_2d(&enc, &b).unwrap()).unwrap();
        for k in 0..m.len() {
            assert!((m[k] - 0.5 * (single[k] + eb[k])).abs() < 1e-9);
        }
        let mut perm = mixed.clone();
        perm.reverse();
        perm.swap(0, 3);
        let p = to_f64_vec(&encode_views_3d(&enc, &Tensor::stack(&perm, 0).unwrap()).unwrap()).unwrap();
        for k in 0..m.len() {
            assert!((m[k] - p[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn pair_visual_concatenates_in_order() {
        let a = Tensor::new(&[1f32, 2.0], &Device::Cpu).unwrap();
        let b = Tensor::new(&[3f32, 4.0], &Device::Cpu).unwrap();
        assert_eq!(pair_visual(&a, &b).unwrap().to_vec1::<f32>().unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pair_visual(&b, &a).unwrap().to_vec1::<f32>().unwrap(), vec![3.0, 4.0, 1.0, 2.0]);
        let z = Tensor::zeros(512, DType::F32, &Device::Cpu).unwrap();
        let zz = pair_visual(&z, &z).unwrap();
        assert_eq!(zz.dims(), &[1024]);
        assert!(zz.to_vec1::<f32>().unwrap().iter().all(|v| *v == 0.0));
        let c = Tensor::new(&[1f32], &Device::Cpu).unwrap();
        assert!(pair_visual(&a, &c).is_err());
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        let (_s, enc) = tiny_encoder(DType::F32, 0);
        let x = Tensor::zeros((1, 8, 8), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(encode_image_2d(&enc, &x).unwrap_err().kind(), "ShapeMismatch");
        let v = Tensor::zeros((9, 3, 8, 8), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(encode_views_3d(&enc, &v).unwrap_err().kind(), "ShapeMismatch");
    }

    #[test]
    fn channel_statistics_match_direct_formula() {
        let img: Vec<f32> = vec![0.0, 1.0, 0.5, 0.5, 0.2, 0.4];
        let (m, s) = channel_statistics([img.as_slice()], 3).unwrap();
        assert_eq!(&m[..2], &[0.5, 0.5]);
        assert!((m[2] - 0.3).abs() < 1e-7);
        assert!((s[0] - 0.5).abs() < 1e-12 && s[1] == 0.0);
    }
}
