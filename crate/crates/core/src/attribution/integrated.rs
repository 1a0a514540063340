//! Integrated gradients: path integral of input gradients from a reference
//! input to the actual input, approximated with the midpoint rule.

use super::{
    check_class, check_input, squeeze_spatial, AttributionMap, MapMetadata, Method, TargetSpace,
};
use crate::autodiff::BackwardMode;
use crate::error::{Error, Result};
use crate::graph::ModelGraph;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Midpoint-rule approximation of
/// `(x - x_ref) * integral_0^1 grad F(x_ref + t (x - x_ref)) dt`:
/// the gradient is evaluated at `t = (k - 1/2) / steps` for `k = 1..steps`
/// and averaged.
///
/// Generic over the gradient oracle so the quadrature itself can be checked
/// against closed-form integrals.
pub fn midpoint_path_integral<T: Scalar>(
    mut grad_at: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>,
    x: &Tensor<T>,
    x_ref: &Tensor<T>,
    steps: usize,
) -> Result<Tensor<T>> {
    if steps == 0 {
        return Err(Error::Config("integration steps must be >= 1".into()));
    }
    if x.shape() != x_ref.shape() {
        return Err(Error::ShapeMismatch(format!(
            "input {:?} vs baseline {:?}",
            x.shape(),
            x_ref.shape()
        )));
    }
    let diff = x.sub(x_ref)?;
    let mut grad_sum = x.zeros_like();
    for k in 1..=steps {
        let t = T::from_f64_lossy((k as f64 - 0.5) / steps as f64);
        let point = x_ref.add(&diff.scale(t))?;
        grad_sum.add_assign(&grad_at(&point)?)?;
    }
    let mean = grad_sum.scale(T::one() / T::from_f64_lossy(steps as f64));
    diff.mul(&mean)
}

/// Integrated gradients of the class logit against `baseline` (all-zeros
/// when absent). The completeness residual
/// `sum(map) - (F(x) - F(baseline))` is recorded in the metadata.
pub fn integrated_gradients<T: Scalar>(
    graph: &ModelGraph<T>,
    x: &Tensor<T>,
    baseline: Option<&Tensor<T>>,
    steps: usize,
    class_index: usize,
) -> Result<AttributionMap<T>> {
    check_input(graph, x)?;
    check_class(graph, class_index)?;
    let zeros;
    let x_ref = match baseline {
        Some(b) => b,
        None => {
            zeros = x.zeros_like();
            &zeros
        }
    };

    let attr = midpoint_path_integral(
        |point| {
            let record = graph.forward(point)?;
            graph.backward_input(&record, class_index, BackwardMode::Vanilla)
        },
        x,
        x_ref,
        steps,
    )?;

    let f_x = graph.forward(x)?.logits().data()[class_index];
    let f_ref = graph.forward(x_ref)?.logits().data()[class_index];
    let residual = attr.sum().to_f64_lossy() - (f_x - f_ref).to_f64_lossy();

    Ok(AttributionMap {
        values: squeeze_spatial(&attr),
        method: Method::IntegratedGradients,
        class_index,
        metadata: MapMetadata {
            steps: Some(steps),
            baseline: Some(
                if baseline.is_some() {
                    "custom"
                } else {
                    "zeros"
                }
                .into(),
            ),
            completeness_residual: Some(residual),
            ..MapMetadata::bare(TargetSpace::Logit)
        },
    })
}
