//! Classification head, cross-entropy and macro metrics.

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_last, Linear, ParamStore};

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// rho(z) = z + W z + b, then Linear -> ReLU -> Linear to |R| logits.
pub struct Head {
    pub residual: Linear,
    pub hidden: Linear,
    pub out: Linear,
}

impl Head {
    pub fn new(store: &mut ParamStore, d: usize, num_classes: usize) -> Result<Self> {
        Ok(Head {
            residual: Linear::new(store, "head.residual", d, d, true)?,
            hidden: Linear::new(store, "head.mlp1", d, d, true)?,
            out: Linear::new(store, "head.mlp2", d, num_classes, true)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.residual.weight.dims()[1]
    }

    pub fn num_classes(&self) -> usize {
        self.out.weight.dims()[0]
    }

    /// (B, d) to (B, |R|) logits.
    pub fn logits(&self, z: &Tensor) -> Result<Tensor> {
        if z.rank() != 2 || z.dim(1)? != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "head expects (B,{}), got {:?}",
                self.input_dim(),
                z.dims()
            )));
        }
        let r = (z + self.residual.forward(z)?)?;
        self.out.forward(&self.hidden.forward(&r)?.relu()?)
    }

    pub fn probs(&self, z: &Tensor) -> Result<Tensor> {
        softmax_last(&self.logits(z)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub label: usize,
}

impl Prediction {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let label = argmax(&probs);
        Prediction { probs, label }
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Predictions for a batch of pair representations.
pub fn predict(z: &Tensor, head: &Head) -> Result<Vec<Prediction>> {
    let p = head.probs(z)?.to_dtype(candle_core::DType::F64)?.to_vec2::<f64>()?;
    Ok(p.into_iter().map(Prediction::from_probs).collect())
}

/// Mean of -ln(max(p_true, 1e-12)). Rows must be probability vectors.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::DomainError(format!("label {y} outside {} classes", row.len())));
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::DomainError("probabilities must be finite and non-negative".into()));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::DomainError(format!("probabilities sum to {s}")));
        }
        total -= row[y].max(PROB_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

/// Differentiable mean cross-entropy from logits via log-softmax.
pub fn cross_entropy_logits(logits: &Tensor, labels: &[u32]) -> Result<Tensor> {
    let (b, _) = logits.dims2()?;
    if b != labels.len() {
        return Err(Error::LengthMismatch {
            left: b,
            right: labels.len(),
        });
    }
    let max = logits.max_keepdim(D::Minus1)?.detach();
    let shifted = logits.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    let logp = shifted.broadcast_sub(&lse)?;
    let idx = Tensor::from_slice(labels, (b, 1), logits.device())?;
    let picked = logp.gather(&idx, 1)?;
    Ok((picked.mean_all()? * -1.0)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub num_samples: usize,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of the fractions `num/den` (0/0 counted as 0) summed as exact
/// rationals and rounded once; falls back to float summation if the common
/// denominator overflows.
fn mean_of_ratios(fracs: &[(usize, usize)]) -> f64 {
    let exact = fracs.iter().try_fold((0u128, 1u128), |(n, d), &(a, b)| {
        if b == 0 || a == 0 {
            return Some((n, d));
        }
        let (a, b) = (a as u128, b as u128);
        let g = gcd(d, b);
        let den = (d / g).checked_mul(b)?;
        let num = n.checked_mul(b / g)?.checked_add(a.checked_mul(d / g)?)?;
        let r = gcd(num, den);
        Some((num / r, den / r))
    });
    let k = fracs.len();
    match exact.and_then(|(n, d)| Some((n, d.checked_mul(k as u128)?))) {
        Some((n, d)) => {
            let r = gcd(n, d).max(1);
            (n / r) as f64 / (d / r) as f64
        }
        None => fracs.iter().map(|&(a, b)| ratio(a, b)).sum::<f64>() / k as f64,
    }
}

/// Macro scores over the classes present in `labels`, 0/0 taken as 0.
pub fn compute_metrics(predicted: &[usize], labels: &[usize]) -> Result<MetricsReport> {
    if predicted.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    let counts: Vec<(usize, usize, usize, usize)> = classes
        .iter()
        .map(|&c| {
            let tp = predicted.iter().zip(labels).filter(|(p, y)| **p == c && **y == c).count();
            let support = labels.iter().filter(|y| **y == c).count();
            let npred = predicted.iter().filter(|p| **p == c).count();
            (c, tp, support, npred)
        })
        .collect();
    // F1 = 2TP / (2TP + FP + FN) = 2TP / (support + predicted)
    let per_class: Vec<ClassMetrics> = counts
        .iter()
        .map(|&(class, tp, support, npred)| ClassMetrics {
            class,
            support,
            predicted: npred,
            precision: ratio(tp, npred),
            recall: ratio(tp, support),
            f1: ratio(2 * tp, support + npred),
        })
        .collect();
    let macro_of = |f: fn(&(usize, usize, usize, usize)) -> (usize, usize)| {
        mean_of_ratios(&counts.iter().map(f).collect::<Vec<_>>())
    };
    Ok(MetricsReport {
        accuracy: correct as f64 / labels.len() as f64,
        macro_f1: macro_of(|&(_, tp, s, p)| (2 * tp, s + p)),
        macro_recall: macro_of(|&(_, tp, s, _)| (tp, s)),
        macro_precision: macro_of(|&(_, tp, _, p)| (tp, p)),
        num_samples: labels.len(),
        per_class,
    })
}

pub fn compute_metrics_from_predictions(preds: &[Prediction], labels: &[usize]) -> Result<MetricsReport> {
    let p: Vec<usize> = preds.iter().map(|p| p.label).collect();
    compute_metrics(&p, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn zero_head_is_uniform() {
        let mut s = ParamStore::new(DType::F64, 0);
        let head = Head::new(&mut s, 3, 4).unwrap();
        for name in ["head.residual", "head.mlp1", "head.mlp2"] {
            for part in ["weight", "bias"] {
                let key = format!("{name}.{part}");
                let dims = s.get(&key).unwrap().dims().to_vec();
                s.assign(&key, &Tensor::zeros(dims, DType::F64, &Device::Cpu).unwrap()).unwrap();
            }
        }
        let z = Tensor::new(&[[1.0f64, -2.0, 0.5]], &Device::Cpu).unwrap();
        let p = predict(&z, &head).unwrap();
        assert_eq!(p[0].probs, vec![0.25; 4]);
    }

    #[test]
    fn probs_sum_to_one_and_label_is_argmax() {
        let mut s = ParamStore::new(DType::F64, 11);
        let head = Head::new(&mut s, 5, 3).unwrap();
        let z = Tensor::randn(0f64, 2.0, (7, 5), &Device::Cpu).unwrap();
        for p in predict(&z, &head).unwrap() {
            assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(p.label, argmax(&p.probs));
        }
        let bad = Tensor::zeros((1, 4), DType::F64, &Device::Cpu).unwrap();
        assert_eq!(predict(&bad, &head).unwrap_err().kind(), "ShapeMismatch");
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&[vec![0.0, 1.0]], &[1]).unwrap(), 0.0);
        let u = cross_entropy(&[vec![0.25; 4]], &[2]).unwrap();
        assert!((u - 4f64.ln()).abs() < 1e-12);
        let floored = cross_entropy(&[vec![1.0, 0.0]], &[1]).unwrap();
        assert!((floored + PROB_FLOOR.ln()).abs() < 1e-9);
        assert_eq!(cross_entropy(&[vec![0.5, 0.6]], &[0]).unwrap_err().kind(), "DomainError");
        assert_eq!(cross_entropy(&[vec![0.5, 0.5]], &[2]).unwrap_err().kind(), "DomainError");
        assert_eq!(cross_entropy(&[], &[]).unwrap_err().kind(), "EmptyInput");
    }

    #[test]
    fn logits_loss_agrees_with_probability_loss() {
        let logits = Tensor::new(&[[0.3f64, -1.0, 2.0], [1.0, 1.0, 1.0]], &Device::Cpu).unwrap();
        let l = cross_entropy_logits(&logits, &[2, 0]).unwrap().to_scalar::<f64>().unwrap();
        let probs = softmax_last(&logits).unwrap().to_vec2::<f64>().unwrap();
        let want = cross_entropy(&probs, &[2, 0]).unwrap();
        assert!((l - want).abs() < 1e-12);
    }

    #[test]
    fn metrics_with_unpredicted_class() {
        let m = compute_metrics(&[0, 0, 1, 1], &[0, 2, 1, 1]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        let c2 = m.per_class.iter().find(|c| c.class == 2).unwrap();
        assert_eq!((c2.precision, c2.recall, c2.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.per_class.len(), 3);
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn rational_mean_is_exact_and_survives_overflow() {
        assert_eq!(mean_of_ratios(&[(2, 3), (1, 2), (2, 3)]), 11.0 / 18.0);
        assert_eq!(mean_of_ratios(&[(0, 0), (1, 1)]), 0.5);
        // pairwise coprime denominators near 2^40 overflow the common denominator
        let big = [1_099_511_627_689usize, 1_099_511_627_691, 1_099_511_627_701, 1_099_511_627_723];
        let fracs: Vec<(usize, usize)> = big.iter().map(|&d| (d / 3, d)).collect();
        let m = mean_of_ratios(&fracs);
        assert!((m - 1.0 / 3.0).abs() < 1e-9, "{m}");
    }
}
