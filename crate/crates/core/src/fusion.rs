//! Motif-sequence transformer whose attention logits carry a key-wise bias
//! projected from the pair's visual embedding.

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_last, Dropout, Embedding, LayerNorm, Linear, ParamStore};
use crate::tokenizer::PairSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden: usize,
    pub per_drug_len: usize,
    pub vocab_size: usize,
    pub num_classes: usize,
    pub visual_dim: usize,
    pub dropout: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            num_layers: 6,
            num_heads: 8,
            hidden: 512,
            per_drug_len: 16,
            vocab_size: 2,
            num_classes: 65,
            visual_dim: 1024,
            dropout: 0.0,
        }
    }
}

impl FusionConfig {
    pub fn joint_len(&self) -> usize {
        2 * self.per_drug_len
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.hidden % self.num_heads != 0 {
            return Err(Error::ConfigError(format!(
                "hidden {} is not divisible by {} heads",
                self.hidden, self.num_heads
            )));
        }
        if self.per_drug_len == 0 || self.vocab_size < 2 || self.num_classes == 0 {
            return Err(Error::ConfigError(
                "per_drug_len, vocab_size and num_classes must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::ConfigError("dropout must lie in [0,1)".into()));
        }
        Ok(())
    }
}

/// A batch of joint sequences as tensors: ids (B,N) u32, segments (B,N) u32,
/// mask (B,N) u8 with 1 at real tokens.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u32>,
    pub key_mask: Vec<bool>,
    pub batch: usize,
    pub len: usize,
}

impl SequenceBatch {
    pub fn from_pairs(pairs: &[&PairSequence]) -> Result<Self> {
        let len = pairs.first().map(|p| p.len()).ok_or(Error::EmptyInput)?;
        let mut b = SequenceBatch {
            token_ids: Vec::new(),
            segment_ids: Vec::new(),
            key_mask: Vec::new(),
            batch: pairs.len(),
            len,
        };
        for p in pairs {
            if p.len() != len {
                return Err(Error::LengthMismatch {
                    left: len,
                    right: p.len(),
                });
            }
            b.token_ids.extend(&p.token_ids);
            b.segment_ids.extend(&p.segment_ids);
            b.key_mask.extend(&p.key_mask);
        }
        Ok(b)
    }

    pub fn mask_tensor(&self, dtype: DType) -> Result<Tensor> {
        let m: Vec<f64> = self.key_mask.iter().map(|b| f64::from(u8::from(*b))).collect();
        Ok(Tensor::from_vec(m, (self.batch, self.len), &Device::Cpu)?.to_dtype(dtype)?)
    }

    fn check_not_all_masked(&self) -> Result<()> {
        for row in self.key_mask.chunks(self.len.max(1)) {
            if !row.iter().any(|m| *m) {
                return Err(Error::AllMasked);
            }
        }
        Ok(())
    }
}

pub struct EmbeddingTables {
    pub token: Embedding,
    pub position: Embedding,
    pub segment: Embedding,
}

impl EmbeddingTables {
    pub fn new(store: &mut ParamStore, cfg: &FusionConfig) -> Result<Self> {
        Ok(EmbeddingTables {
            token: Embedding::new(store, "fusion.embed.token", cfg.vocab_size, cfg.hidden)?,
            position: Embedding::new(store, "fusion.embed.position", cfg.joint_len(), cfg.hidden)?,
            segment: Embedding::new(store, "fusion.embed.segment", 2, cfg.hidden)?,
        })
    }

    /// Row t = token[id_t] + position[t] + segment[seg_t]; output (B,N,d).
    pub fn embed(&self, batch: &SequenceBatch) -> Result<Tensor> {
        let (b, n) = (batch.batch, batch.len);
        if n > self.position.rows() {
            return Err(Error::IndexOutOfRange {
                index: n - 1,
                size: self.position.rows(),
            });
        }
        let d = self.token.table.dims()[1];
        let tok = self.token.lookup(&batch.token_ids)?.reshape((b, n, d))?;
        let seg = self.segment.lookup(&batch.segment_ids)?.reshape((b, n, d))?;
        let positions: Vec<u32> = (0..n as u32).collect();
        let pos = self.position.lookup(&positions)?.unsqueeze(0)?;
        Ok(tok.add(&seg)?.broadcast_add(&pos)?)
    }
}

/// Linear map from the pair visual vector to K x 2L key biases.
pub struct BiasProjector {
    pub linear: Linear,
    pub heads: usize,
    pub joint_len: usize,
}

impl BiasProjector {
    pub fn new(store: &mut ParamStore, cfg: &FusionConfig) -> Result<Self> {
        Ok(BiasProjector {
            linear: Linear::new(
                store,
                "fusion.bias_projector",
                cfg.visual_dim,
                cfg.num_heads * cfg.joint_len(),
                true,
            )?,
            heads: cfg.num_heads,
            joint_len: cfg.joint_len(),
        })
    }

    /// (B, visual_dim) to (B, K, 2L).
    pub fn forward(&self, visual: &Tensor) -> Result<Tensor> {
        let want = self.linear.weight.dims()[1];
        if visual.rank() != 2 || visual.dim(1)? != want {
            return Err(Error::ShapeMismatch(format!(
                "visual embedding must be (B,{want}), got {:?}",
                visual.dims()
            )));
        }
        let b = visual.dim(0)?;
        Ok(self.linear.forward(visual)?.reshape((b, self.heads, self.joint_len))?)
    }
}

pub struct Attention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &FusionConfig) -> Result<Self> {
        let d = cfg.hidden;
        Ok(Attention {
            wq: Linear::new(store, &format!("{name}.wq"), d, d, false)?,
            wk: Linear::new(store, &format!("{name}.wk"), d, d, false)?,
            wv: Linear::new(store, &format!("{name}.wv"), d, d, false)?,
            wo: Linear::new(store, &format!("{name}.wo"), d, d, true)?,
            heads: cfg.num_heads,
        })
    }

    /// softmax(QK^T/sqrt(d_k) + b) V per head with b broadcast over query
    /// rows and masked keys at -inf; returns the mixed output (B,N,d) and
    /// the attention weights (B,K,N,N).
    pub fn forward(
        &self,
        x: &Tensor,
        bias: Option<&Tensor>,
        mask: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let (b, n, d) = x.dims3()?;
        let k = self.heads;
        if d % k != 0 {
            return Err(Error::ShapeMismatch(format!("hidden {d} not divisible by {k} heads")));
        }
        let dk = d / k;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((b, n, k, dk))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.wq.forward(x)?)?;
        let kk = split(self.wk.forward(x)?)?;
        let v = split(self.wv.forward(x)?)?;
        let mut logits = (q.matmul(&kk.transpose(2, 3)?.contiguous()?)? / (dk as f64).sqrt())?;
        if let Some(bias) = bias {
            if bias.dims() != [b, k, n] {
                return Err(Error::ShapeMismatch(format!(
                    "bias must be ({b},{k},{n}), got {:?}",
                    bias.dims()
                )));
            }
            logits = logits.broadcast_add(&bias.unsqueeze(2)?)?;
        }
        if mask.dims() != [b, n] {
            return Err(Error::ShapeMismatch(format!("mask must be ({b},{n}), got {:?}", mask.dims())));
        }
        let keep = mask
            .to_dtype(DType::U8)?
            .reshape((b, 1, 1, n))?
            .broadcast_as((b, k, n, n))?;
        let neg = Tensor::full(f64::NEG_INFINITY, (b, k, n, n), x.device())?.to_dtype(x.dtype())?;
        let logits = keep.where_cond(&logits, &neg)?;
        let weights = softmax_last(&logits)?;
        let out = weights.matmul(&v)?.transpose(1, 2)?.reshape((b, n, d))?;
        Ok((self.wo.forward(&out)?, weights))
    }
}

pub struct TransformerLayer {
    pub attention: Attention,
    pub norm1: LayerNorm,
    pub ffn1: Linear,
    pub ffn2: Linear,
    pub norm2: LayerNorm,
    dropout: Dropout,
}

impl TransformerLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &FusionConfig) -> Result<Self> {
        let d = cfg.hidden;
        let rng = store.fork_rng();
        Ok(TransformerLayer {
            attention: Attention::new(store, &format!("{name}.attn"), cfg)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d)?,
            ffn1: Linear::new(store, &format!("{name}.ffn1"), d, d, true)?,
            ffn2: Linear::new(store, &format!("{name}.ffn2"), d, d, true)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d)?,
            dropout: Dropout::new(cfg.dropout, rng),
        })
    }

    pub fn ffn(&self, z: &Tensor) -> Result<Tensor> {
        self.ffn2.forward(&self.ffn1.forward(z)?.relu()?)
    }

    /// Z = LN(X + Attn(X)); X' = LN(Z + FFN(Z)). Also returns the weights.
    pub fn forward(
        &self,
        x: &Tensor,
        bias: Option<&Tensor>,
        mask: &Tensor,
        train: bool,
    ) -> Result<(Tensor, Tensor)> {
        let (a, w) = self.attention.forward(x, bias, mask)?;
        let z = self.norm1.forward(&(x + self.dropout.forward(&a, train)?)?)?;
        let f = self.dropout.forward(&self.ffn(&z)?, train)?;
        Ok((self.norm2.forward(&(&z + f)?)?, w))
    }
}

#[derive(Debug)]
pub struct FusionOutput {
    /// Pooled pair representation (B, d).
    pub pooled: Tensor,
    /// Final hidden states (B, N, d).
    pub hidden: Tensor,
    /// Attention weights of every layer, each (B, K, N, N).
    pub attention: Vec<Tensor>,
}

pub struct FusionEncoder {
    pub config: FusionConfig,
    pub tables: EmbeddingTables,
    pub projector: BiasProjector,
    pub layers: Vec<TransformerLayer>,
}

impl FusionEncoder {
    pub fn new(store: &mut ParamStore, cfg: &FusionConfig) -> Result<Self> {
        cfg.validate()?;
        let tables = EmbeddingTables::new(store, cfg)?;
        let projector = BiasProjector::new(store, cfg)?;
        let layers = (0..cfg.num_layers)
            .map(|i| TransformerLayer::new(store, &format!("fusion.layer{i}"), cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(FusionEncoder {
            config: cfg.clone(),
            tables,
            projector,
            layers,
        })
    }

    /// Embeds, runs every layer with the same visual bias (none when
    /// `visual` is absent) and mean-pools over unmasked positions.
    pub fn encode(&self, batch: &SequenceBatch, visual: Option<&Tensor>, train: bool) -> Result<FusionOutput> {
        batch.check_not_all_masked()?;
        let x0 = self.tables.embed(batch)?;
        let dtype = x0.dtype();
        let mask = batch.mask_tensor(dtype)?;
        let bias = match visual {
            Some(v) => {
                let bias = self.projector.forward(&v.to_dtype(dtype)?)?;
                if bias.dim(2)? != batch.len {
                    return Err(Error::ShapeMismatch(format!(
                        "projector covers {} positions, sequence has {}",
                        bias.dim(2)?,
                        batch.len
                    )));
                }
                Some(bias)
            }
            None => None,
        };
        let mut x = x0;
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, w) = layer.forward(&x, bias.as_ref(), &mask, train)?;
            x = next;
            attention.push(w);
        }
        let pooled = masked_mean(&x, &mask)?;
        Ok(FusionOutput {
            pooled,
            hidden: x,
            attention,
        })
    }
}

/// Mean over positions where `mask` (B,N) is 1.
pub fn masked_mean(x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let m = mask.unsqueeze(D::Minus1)?;
    let sum = x.broadcast_mul(&m)?.sum(1)?;
    let count = mask.sum_keepdim(1)?;
    Ok(sum.broadcast_div(&count)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::to_f64_vec;
    use crate::tokenizer::{join_pair, MotifSequence};

    fn tiny_cfg() -> FusionConfig {
        FusionConfig {
            num_layers: 2,
            num_heads: 2,
            hidden: 8,
            per_drug_len: 3,
            vocab_size: 7,
            num_classes: 3,
            visual_dim: 6,
            dropout: 0.0,
        }
    }

    fn seq(ids: &[u32]) -> MotifSequence {
        MotifSequence {
            drug_id: String::new(),
            token_ids: ids.to_vec(),
            raw_length: ids.iter().filter(|i| **i != 0).count(),
        }
    }

    fn batch(x: &[u32], y: &[u32]) -> SequenceBatch {
        let p = join_pair(&seq(x), &seq(y)).unwrap();
        SequenceBatch::from_pairs(&[&p]).unwrap()
    }

    #[test]
    fn embedding_is_additive() {
        let mut s = ParamStore::new(DType::F64, 1);
        let cfg = tiny_cfg();
        let t = EmbeddingTables::new(&mut s, &cfg).unwrap();
        let b = batch(&[2, 2, 0], &[3, 0, 0]);
        let e = t.embed(&b).unwrap().squeeze(0).unwrap().to_vec2::<f64>().unwrap();
        let tok = t.token.table.as_tensor().to_vec2::<f64>().unwrap();
        let pos = t.position.table.as_tensor().to_vec2::<f64>().unwrap();
        let seg = t.segment.table.as_tensor().to_vec2::<f64>().unwrap();
        for (row, (id, sg)) in [(2usize, 0usize), (2, 0), (0, 0), (3, 1), (0, 1), (0, 1)].iter().enumerate() {
            for c in 0..8 {
                let want = tok[*id][c] + pos[row][c] + seg[*sg][c];
                assert!((e[row][c] - want).abs() < 1e-12);
            }
        }
        // identical tokens at rows 0 and 1 differ only through position
        for c in 0..8 {
            let diff = e[1][c] - e[0][c];
            assert!((diff - (pos[1][c] - pos[0][c])).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_token_is_rejected() {
        let mut s = ParamStore::new(DType::F32, 1);
        let enc = FusionEncoder::new(&mut s, &tiny_cfg()).unwrap();
        let b = batch(&[9, 0, 0], &[2, 0, 0]);
        assert_eq!(enc.encode(&b, None, false).unwrap_err().kind(), "IndexOutOfRange");
    }

    #[test]
    fn all_pad_pair_is_all_masked() {
        let mut s = ParamStore::new(DType::F32, 1);
        let enc = FusionEncoder::new(&mut s, &tiny_cfg()).unwrap();
        let b = batch(&[0, 0, 0], &[0, 0, 0]);
        assert!(matches!(enc.encode(&b, None, false), Err(Error::AllMasked)));
    }

    #[test]
    fn attention_rows_sum_to_one_and_ignore_pads() {
        let mut s = ParamStore::new(DType::F64, 4);
        let cfg = tiny_cfg();
        let enc = FusionEncoder::new(&mut s, &cfg).unwrap();
        let v = Tensor::randn(0f64, 3.0, (1, 6), &Device::Cpu).unwrap();
        let b = batch(&[2, 3, 0], &[4, 0, 0]);
        let out = enc.encode(&b, Some(&v), false).unwrap();
        for w in &out.attention {
            let w = to_f64_vec(w).unwrap();
            for row in w.chunks(6) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert_eq!(row[2], 0.0);
                assert_eq!(row[4], 0.0);
                assert_eq!(row[5], 0.0);
            }
        }
        let b2 = batch(&[2, 3, 5], &[4, 0, 0]);
        let mut b2 = b2;
        b2.key_mask[2] = false;
        let out2 = enc.encode(&b2, Some(&v), false).unwrap();
        let p1 = to_f64_vec(&out.pooled).unwrap();
        let p2 = to_f64_vec(&out2.pooled).unwrap();
        for (a, c) in p1.iter().zip(&p2) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_projector_matches_unbiased() {
        let mut s = ParamStore::new(DType::F64, 9);
        let cfg = tiny_cfg();
        let enc = FusionEncoder::new(&mut s, &cfg).unwrap();
        s.assign("fusion.bias_projector.weight", &Tensor::zeros((12, 6), DType::F64, &Device::Cpu).unwrap())
            .unwrap();
        s.assign("fusion.bias_projector.bias", &Tensor::zeros(12, DType::F64, &Device::Cpu).unwrap())
            .unwrap();
        let v = Tensor::randn(0f64, 1.0, (1, 6), &Device::Cpu).unwrap();
        let b = batch(&[2, 3, 0], &[4, 5, 6]);
        let with = to_f64_vec(&enc.encode(&b, Some(&v), false).unwrap().pooled).unwrap();
        let without = to_f64_vec(&enc.encode(&b, None, false).unwrap().pooled).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn layer_output_rows_are_normalized_before_affine() {
        let mut s = ParamStore::new(DType::F64, 2);
        let cfg = tiny_cfg();
        let enc = FusionEncoder::new(&mut s, &cfg).unwrap();
        let b = batch(&[2, 3, 0], &[4, 5, 6]);
        let h = enc.encode(&b, None, false).unwrap().hidden.squeeze(0).unwrap().to_vec2::<f64>().unwrap();
        // gamma = 1, beta = 0 at init
        for row in h {
            let m = row.iter().sum::<f64>() / 8.0;
            let v = row.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 8.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut s = ParamStore::new(DType::F32, 0);
        let cfg = FusionConfig {
            hidden: 10,
            num_heads: 3,
            ..tiny_cfg()
        };
        assert_eq!(FusionEncoder::new(&mut s, &cfg).err().unwrap().kind(), "ConfigError");
    }
}
