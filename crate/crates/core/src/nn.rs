//! Minimal layer library on top of candle tensors: a named parameter store,
//! the handful of layers the model needs, and Adam.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Named trainable variables plus non-trainable buffers (running statistics).
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    buffers: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
    rng: RefCell<ChaCha8Rng>,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            buffers: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn tensor_from(&self, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?)
    }

    fn add_var(&mut self, name: &str, t: Tensor) -> Result<Var> {
        if self.vars.contains_key(name) {
            return Err(Error::ConfigError(format!("duplicate parameter {name}")));
        }
        let v = Var::from_tensor(&t)?;
        self.vars.insert(name.to_string(), v.clone());
        Ok(v)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = if bound > 0.0 {
            let dist = Uniform::new(-bound, bound).expect("bound is positive");
            let mut rng = self.rng.borrow_mut();
            (0..n).map(|_| dist.sample(&mut *rng)).collect()
        } else {
            vec![0.0; n]
        };
        let t = self.tensor_from(data, shape)?;
        self.add_var(name, t)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::ConfigError(e.to_string()))?;
        let data: Vec<f64> = {
            let mut rng = self.rng.borrow_mut();
            (0..n).map(|_| dist.sample(&mut *rng)).collect()
        };
        let t = self.tensor_from(data, shape)?;
        self.add_var(name, t)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let t = self.tensor_from(vec![value; n], shape)?;
        self.add_var(name, t)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let v = Var::from_tensor(&self.tensor_from(vec![value; n], shape)?)?;
        self.buffers.insert(name.to_string(), v.clone());
        Ok(v)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Overwrites an existing parameter or buffer, converting dtype.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let target = self
            .vars
            .get(name)
            .or_else(|| self.buffers.get(name))
            .ok_or_else(|| Error::DataError(format!("unknown parameter {name}")))?;
        if target.dims() != value.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{name}: expected {:?}, got {:?}",
                target.dims(),
                value.dims()
            )));
        }
        target.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    /// Copies of all parameters and buffers, keyed `param.<name>` /
    /// `buffer.<name>`. Copies are needed because variables update in place.
    pub fn named_tensors(&self) -> Result<HashMap<String, Tensor>> {
        let mut out = HashMap::new();
        for (k, v) in &self.vars {
            out.insert(format!("param.{k}"), v.as_tensor().copy()?);
        }
        for (k, v) in &self.buffers {
            out.insert(format!("buffer.{k}"), v.as_tensor().copy()?);
        }
        Ok(out)
    }

    /// Restores parameters and buffers from `named_tensors` output. Every
    /// registered name must be present.
    pub fn load_named(&self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        for (prefix, map) in [("param", &self.vars), ("buffer", &self.buffers)] {
            for name in map.keys() {
                let key = format!("{prefix}.{name}");
                let t = tensors
                    .get(&key)
                    .ok_or_else(|| Error::DataError(format!("checkpoint lacks {key}")))?;
                self.assign(name, t)?;
            }
        }
        Ok(())
    }

    /// Loads externally trained weights for every parameter whose name starts
    /// with `prefix`; names in the file are relative to that prefix.
    pub fn load_pretrained(&self, path: &Path, prefix: &str) -> Result<usize> {
        let tensors = candle_core::safetensors::load(path, &self.device)?;
        let mut n = 0;
        for (name, t) in &tensors {
            let full = format!("{prefix}{name}");
            if self.vars.contains_key(&full) || self.buffers.contains_key(&full) {
                self.assign(&full, t)?;
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub(crate) fn fork_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng.borrow_mut().random())
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl Linear {
    /// Weight stored as (out, in), uniform in ±1/sqrt(in).
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let weight = store.uniform(&format!("{name}.weight"), &[d_out, d_in], bound)?;
        let bias = if bias {
            Some(store.uniform(&format!("{name}.bias"), &[d_out], bound)?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = self.weight.as_tensor().t()?;
        let y = match x.rank() {
            2 => x.matmul(&w)?,
            _ => x.broadcast_matmul(&w)?,
        };
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b.as_tensor())?,
            None => y,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Var,
    pub beta: Var,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.constant(&format!("{name}.gamma"), &[d], 1.0)?,
            beta: store.constant(&format!("{name}.beta"), &[d], 0.0)?,
            eps: 1e-5,
        })
    }

    /// Normalization over the last axis before the affine step.
    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm_plain(x, self.eps)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self
            .normalize(x)?
            .broadcast_mul(self.gamma.as_tensor())?
            .broadcast_add(self.beta.as_tensor())?)
    }
}

pub fn layer_norm_plain(x: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(centered.broadcast_div(&(var + eps)?.sqrt()?)?)
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: Var,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, rows: usize, d: usize) -> Result<Self> {
        Ok(Embedding {
            table: store.normal(&format!("{name}.table"), &[rows, d], 1.0)?,
        })
    }

    pub fn rows(&self) -> usize {
        self.table.dims()[0]
    }

    /// Looks up rows for a flat id list, checking range first.
    pub fn lookup(&self, ids: &[u32]) -> Result<Tensor> {
        let size = self.rows();
        if let Some(bad) = ids.iter().find(|i| **i as usize >= size) {
            return Err(Error::IndexOutOfRange {
                index: *bad as usize,
                size,
            });
        }
        let idx = Tensor::from_slice(ids, ids.len(), self.table.device())?;
        Ok(self.table.as_tensor().index_select(&idx, 0)?)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Var,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// Bias-free convolution, He-normal init over fan-out.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let std = (2.0 / (c_out * kernel * kernel) as f64).sqrt();
        let weight = store.normal(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], std)?;
        Ok(Conv2d {
            weight,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.conv2d(self.weight.as_tensor(), self.padding, self.stride, 1, 1)?)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Var,
    pub beta: Var,
    pub running_mean: Var,
    pub running_var: Var,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: store.constant(&format!("{name}.gamma"), &[c], 1.0)?,
            beta: store.constant(&format!("{name}.beta"), &[c], 0.0)?,
            running_mean: store.buffer(&format!("{name}.running_mean"), &[c], 0.0)?,
            running_var: store.buffer(&format!("{name}.running_var"), &[c], 1.0)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    /// Batch statistics in training mode (updating the running estimates),
    /// running statistics otherwise.
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let c = x.dim(1)?;
        let shape = (1, c, 1, 1);
        let (mean, var) = if train {
            let n = x.dim(0)? * x.dim(2)? * x.dim(3)?;
            let mean = x.mean_keepdim((0, 2, 3))?;
            let var = x.broadcast_sub(&mean)?.sqr()?.mean_keepdim((0, 2, 3))?;
            let m = self.momentum;
            let unbiased = if n > 1 {
                (var.detach() * (n as f64 / (n - 1) as f64))?
            } else {
                var.detach()
            };
            let rm = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean.detach().flatten_all()? * m)?)?;
            let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased.flatten_all()? * m)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().reshape(shape)?,
                self.running_var.as_tensor().reshape(shape)?,
            )
        };
        let xhat = x
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(xhat
            .broadcast_mul(&self.gamma.as_tensor().reshape(shape)?)?
            .broadcast_add(&self.beta.as_tensor().reshape(shape)?)?)
    }
}

/// Inverted dropout with its own seeded stream. `p = 0` is the identity.
pub struct Dropout {
    pub p: f64,
    rng: RefCell<ChaCha8Rng>,
}

impl Dropout {
    pub fn new(p: f64, rng: ChaCha8Rng) -> Self {
        Dropout {
            p,
            rng: RefCell::new(rng),
        }
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        if !train || self.p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - self.p;
        let n = x.elem_count();
        let mask: Vec<f64> = {
            let mut rng = self.rng.borrow_mut();
            (0..n)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        };
        let mask = Tensor::from_vec(mask, x.dims(), x.device())?.to_dtype(x.dtype())?;
        Ok((x * mask)?)
    }
}

/// 3x3 max pooling with stride 2 over an already padded (B,C,H,W) input.
/// Built from strided views and elementwise maxima so that it has a
/// backward pass (the fused kernel only differentiates when kernel = stride).
pub fn max_pool_3x3_s2(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if h < 3 || w < 3 {
        return Err(Error::ShapeMismatch(format!("3x3 pooling needs at least 3x3, got {h}x{w}")));
    }
    let (ho, wo) = ((h - 3) / 2 + 1, (w - 3) / 2 + 1);
    // one trailing row and column let every offset take an even-length run;
    // the padded entries land on odd positions and are never selected
    let x = x.pad_with_zeros(2, 0, 1)?.pad_with_zeros(3, 0, 1)?;
    let mut out: Option<Tensor> = None;
    for dy in 0..3 {
        let rows = x
            .narrow(2, dy, 2 * ho)?
            .reshape((b, c, ho, 2, w + 1))?
            .narrow(3, 0, 1)?
            .squeeze(3)?;
        for dx in 0..3 {
            let v = rows
                .narrow(3, dx, 2 * wo)?
                .reshape((b, c, ho, wo, 2))?
                .narrow(4, 0, 1)?
                .squeeze(4)?;
            out = Some(match out {
                Some(m) => m.maximum(&v)?,
                None => v,
            });
        }
    }
    Ok(out.expect("nine windows"))
}

/// Numerically stable softmax over the last axis.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let s = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&s)?)
}

/// Adam with L2 weight decay folded into the gradient.
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Updates every variable accepted by `trainable` that received a gradient.
    pub fn step(
        &mut self,
        store: &ParamStore,
        grads: &candle_core::backprop::GradStore,
        trainable: impl Fn(&str) -> bool,
    ) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, var) in store.vars() {
            if !trainable(name) {
                continue;
            }
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            // detached so the stored moments do not chain op graphs across steps
            let theta = var.as_tensor().detach();
            let g = if self.weight_decay != 0.0 {
                (g + (&theta * self.weight_decay)?)?
            } else {
                g.clone()
            };
            let m_prev = match self.m.get(name) {
                Some(m) => m.clone(),
                None => theta.zeros_like()?,
            };
            let v_prev = match self.v.get(name) {
                Some(v) => v.clone(),
                None => theta.zeros_like()?,
            };
            let m = ((m_prev * self.beta1)? + (&g * (1.0 - self.beta1))?)?;
            let v = ((v_prev * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let mhat = (&m / bc1)?;
            let vhat = (&v / bc2)?;
            let delta = (mhat / (vhat.sqrt()? + self.eps)?)?;
            var.set(&(theta - (delta * self.lr)?)?)?;
            self.m.insert(name.to_string(), m.detach());
            self.v.insert(name.to_string(), v.detach());
        }
        Ok(())
    }

    pub fn named_state(&self) -> HashMap<String, Tensor> {
        let mut out = HashMap::new();
        for (k, t) in &self.m {
            out.insert(format!("adam.m.{k}"), t.clone());
        }
        for (k, t) in &self.v {
            out.insert(format!("adam.v.{k}"), t.clone());
        }
        out
    }

    pub fn load_state(&mut self, tensors: &HashMap<String, Tensor>, step: u64) {
        self.step = step;
        self.m.clear();
        self.v.clear();
        for (k, t) in tensors {
            if let Some(name) = k.strip_prefix("adam.m.") {
                self.m.insert(name.to_string(), t.clone());
            } else if let Some(name) = k.strip_prefix("adam.v.") {
                self.v.insert(name.to_string(), t.clone());
            }
        }
    }
}

/// Flattens a tensor into f64 values regardless of its dtype.
pub fn to_f64_vec(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}
