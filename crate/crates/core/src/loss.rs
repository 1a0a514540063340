//! Numerically stable binary cross-entropy over logits.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Overflow-safe logistic function.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Mean over classes of the fused sigmoid + BCE loss.
///
/// Uses the log-sum-exp closed form `max(z, 0) - z*y + ln(1 + exp(-|z|))`,
/// which stays finite for logit magnitudes far beyond anything a sigmoid
/// followed by a separate log could survive.
pub fn bce_with_logits<T: Scalar>(logits: &Tensor<T>, targets: &Tensor<T>) -> Result<T> {
    if logits.shape() != targets.shape() || logits.rank() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "bce_with_logits: logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let mut acc = T::zero();
    for (&z, &y) in logits.data().iter().zip(targets.data()) {
        acc += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
    }
    Ok(acc / T::from_f64_lossy(logits.numel() as f64))
}

/// Gradient of [`bce_with_logits`] with respect to the logits:
/// `(sigmoid(z) - y) / C` per class.
pub fn bce_with_logits_grad<T: Scalar>(
    logits: &Tensor<T>,
    targets: &Tensor<T>,
) -> Result<Tensor<T>> {
    if logits.shape() != targets.shape() || logits.rank() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "bce_with_logits_grad: logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let inv_c = T::one() / T::from_f64_lossy(logits.numel() as f64);
    logits.zip_map(targets, |z, y| (sigmoid(z) - y) * inv_c)
}
