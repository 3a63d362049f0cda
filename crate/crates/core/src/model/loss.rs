use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default Charbonnier smoothing constant.
pub const CHARBONNIER_EPS: f64 = 1e-3;

fn check(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!("loss inputs differ: {} vs {}", pred.shape(), target.shape())));
    }
    Ok(())
}

/// Mean absolute error over every element.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target)?;
    let sum: f64 = pred.data().iter().zip(target.data()).map(|(&p, &t)| (p as f64 - t as f64).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Elementwise Charbonnier penalty `√(d² + ε²)`.
pub fn charbonnier_term(d: f64, eps: f64) -> f64 {
    (d * d + eps * eps).sqrt()
}

/// Derivative of [`charbonnier_term`] with respect to `d`.
pub fn charbonnier_term_grad(d: f64, eps: f64) -> f64 {
    d / charbonnier_term(d, eps)
}

/// Mean Charbonnier penalty over every element.
pub fn charbonnier_loss(pred: &Tensor, target: &Tensor, eps: f64) -> Result<f64> {
    check(pred, target)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::config(format!("charbonnier eps must be positive, got {eps}")));
    }
    let sum: f64 =
        pred.data().iter().zip(target.data()).map(|(&p, &t)| charbonnier_term(p as f64 - t as f64, eps)).sum();
    Ok(sum / pred.len() as f64)
}
