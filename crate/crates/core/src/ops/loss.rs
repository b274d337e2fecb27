use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tolerance on a target row's sum and entries for it to count as a
/// distribution; mixing rounding can push an entry one ulp past 1.
pub const TARGET_SUM_TOL: f64 = 1e-9;

/// Mean soft-label cross-entropy and its gradient w.r.t. the logits.
///
/// `loss = -(1/n) Σ_n Σ_i t[n,i] · log softmax(z[n])_i`, evaluated with the
/// log-sum-exp shift; `dlogits = (softmax(z) - t) / n`.
pub fn softmax_xent_soft(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    targets.expect_shape("softmax_xent_soft", logits.shape())?;
    let n = logits.shape().n;
    let classes = logits.shape().per_sample();
    if n == 0 || classes == 0 {
        return Err(Error::dim("softmax_xent_soft", "empty logits"));
    }
    for (r, row) in targets.data().chunks_exact(classes).enumerate() {
        check_distribution(row).map_err(|detail| {
            Error::invalid("target row", format!("row {r}: {detail}"))
        })?;
    }

    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.shape());
    for ((z, t), g) in logits
        .data()
        .chunks_exact(classes)
        .zip(targets.data().chunks_exact(classes))
        .zip(grad.data_mut().chunks_exact_mut(classes))
    {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        for i in 0..classes {
            loss += t[i] * (lse - z[i]);
            g[i] = ((z[i] - lse).exp() - t[i]) * scale;
        }
    }
    Ok((loss * scale, grad))
}

pub(crate) fn check_distribution(row: &[f64]) -> Result<(), String> {
    let range = -TARGET_SUM_TOL..=1.0 + TARGET_SUM_TOL;
    if let Some(v) = row.iter().find(|v| !range.contains(*v)) {
        return Err(format!("entry {v} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > TARGET_SUM_TOL {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}
