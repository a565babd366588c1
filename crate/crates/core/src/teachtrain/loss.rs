use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;
use crate::nn::loss::{bce_with_logits, softmax_cross_entropy};

/// Segmentation half of a joint-loss instance: logits laid out like the mask.
#[derive(Debug, Clone, Copy)]
pub struct SegTerm<'a> {
    pub logits: &'a [f64],
    pub target: &'a BinaryMask,
}

/// The loss value split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss {
    pub total: f64,
    pub cls: f64,
    pub seg: Option<f64>,
}

/// Log-sum-exp stabilized softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check(cls_logits: &[f64], true_class: usize, seg: Option<SegTerm>) -> Result<()> {
    if cls_logits.is_empty() || true_class >= cls_logits.len() {
        return Err(Error::Argument(format!(
            "class {true_class} outside 0..{}",
            cls_logits.len()
        )));
    }
    if let Some(s) = seg {
        if s.logits.len() != s.target.values().len() {
            return Err(Error::shape(
                format!("{} seg logits", s.target.values().len()),
                format!("{}", s.logits.len()),
            ));
        }
    }
    Ok(())
}

fn cross_entropy(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[class]
}

fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `cls + lambda * seg`, where cls is softmax cross-entropy and seg the mean
/// per-pixel sigmoid BCE. Without a seg term, or with `lambda == 0`, the
/// result is exactly the classification loss.
pub fn joint_loss(cls_logits: &[f64], true_class: usize, seg: Option<SegTerm>, lambda: f64) -> Result<JointLoss> {
    check(cls_logits, true_class, seg)?;
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda must be >= 0, got {lambda}")));
    }
    let cls = cross_entropy(cls_logits, true_class);
    let seg = seg.map(|s| {
        let n = s.logits.len().max(1) as f64;
        s.logits
            .iter()
            .zip(s.target.values())
            .map(|(z, y)| bce(*z, *y as f64))
            .sum::<f64>()
            / n
    });
    let total = match seg {
        Some(v) if lambda != 0.0 => cls + lambda * v,
        _ => cls,
    };
    Ok(JointLoss { total, cls, seg })
}

/// Analytic gradient of [`joint_loss`]'s total with respect to the class
/// logits and the seg logits.
pub fn joint_loss_grad(
    cls_logits: &[f64],
    true_class: usize,
    seg: Option<SegTerm>,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check(cls_logits, true_class, seg)?;
    let mut g_cls = softmax(cls_logits);
    g_cls[true_class] -= 1.0;
    let g_seg = match seg {
        Some(s) => {
            let n = s.logits.len().max(1) as f64;
            s.logits
                .iter()
                .zip(s.target.values())
                .map(|(z, y)| lambda * (sigmoid(*z) - *y as f64) / n)
                .collect()
        }
        None => Vec::new(),
    };
    Ok((g_cls, g_seg))
}

/// Batched training form: mean cross-entropy over (N, C) logits plus
/// `lambda` times mean BCE over (N, 1, H, W) seg logits.
pub fn joint_loss_tensor(
    cls_logits: &Tensor,
    labels: &Tensor,
    seg: Option<(&Tensor, &Tensor)>,
    lambda: f64,
) -> candle_core::Result<Tensor> {
    let cls = softmax_cross_entropy(cls_logits, labels)?;
    match seg {
        Some((logits, targets)) if lambda != 0.0 => cls + (bce_with_logits(logits, targets)? * lambda)?,
        _ => Ok(cls),
    }
}
