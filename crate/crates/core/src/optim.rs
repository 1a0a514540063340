//! Adam with classical L2 weight decay.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam optimizer state over a fixed list of parameter tensors.
///
/// Weight decay is the classical coupled form: `wd * theta` is added to the
/// raw gradient before the moment updates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    moments: Option<Vec<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            moments: None,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. `params` and `grads` must stay in the same order
    /// and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: {} parameter tensors vs {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        let moments = self.moments.get_or_insert_with(|| {
            params
                .iter()
                .map(|p| (p.zeros_like(), p.zeros_like()))
                .collect()
        });
        if moments.len() != params.len() {
            return Err(Error::ShapeMismatch(
                "adam: parameter list changed between steps".into(),
            ));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let bias1 = one - b1.powi(t);
        let bias2 = one - b2.powi(t);
        let lr = T::from_f64_lossy(self.lr);
        let wd = T::from_f64_lossy(self.weight_decay);
        let eps = T::from_f64_lossy(self.eps);

        for ((param, grad), (m, v)) in params.iter_mut().zip(grads).zip(moments.iter_mut()) {
            if param.shape() != grad.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "adam: parameter {:?} vs gradient {:?}",
                    param.shape(),
                    grad.shape()
                )));
            }
            let pd = param.data_mut();
            let gd = grad.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = gd[i] + wd * pd[i];
                md[i] = b1 * md[i] + (one - b1) * g;
                vd[i] = b2 * vd[i] + (one - b2) * g * g;
                let m_hat = md[i] / bias1;
                let v_hat = vd[i] / bias2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn first_step_magnitude_is_the_learning_rate() {
        // Bias correction makes m_hat / sqrt(v_hat) the gradient sign on the
        // first step, so the update magnitude is lr for any gradient scale.
        for &g in &[1e-3, 1.0, 100.0] {
            let mut p = t(&[0.5]);
            let mut adam = Adam::new(0.001, 0.0);
            adam.step(&mut [&mut p], &[t(&[g])]).unwrap();
            let delta = (0.5 - p.data()[0]).abs();
            assert!((delta - 0.001).abs() / 0.001 < 1e-4, "g={g} delta={delta}");
        }
    }

    #[test]
    fn first_step_moves_against_gradient_sign() {
        let mut p = t(&[0.0, 0.0]);
        let mut adam = Adam::new(0.01, 0.0);
        adam.step(&mut [&mut p], &[t(&[3.0, -3.0])]).unwrap();
        assert!(p.data()[0] < 0.0);
        assert!(p.data()[1] > 0.0);
    }

    #[test]
    fn zero_gradient_no_decay_is_a_no_op() {
        let mut p = t(&[1.0, -2.0, 0.25]);
        let before = p.clone();
        let mut adam = Adam::new(0.001, 0.0);
        for _ in 0..5 {
            adam.step(&mut [&mut p], &[t(&[0.0, 0.0, 0.0])]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn weight_decay_pulls_parameters_toward_zero() {
        let mut p = t(&[1.0]);
        let mut adam = Adam::new(0.001, 0.1);
        adam.step(&mut [&mut p], &[t(&[0.0])]).unwrap();
        assert!(p.data()[0] < 1.0);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut p = t(&[0.3, -0.7]);
            let mut adam = Adam::new(0.001, 0.0001);
            for i in 0..50 {
                let g = t(&[(i as f64).sin(), (i as f64).cos()]);
                adam.step(&mut [&mut p], &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_shape_drift() {
        let mut p = t(&[1.0]);
        let mut adam = Adam::new(0.001, 0.0);
        assert!(adam.step(&mut [&mut p], &[t(&[1.0, 2.0])]).is_err());
    }
}
