//! Gradient-based maps: saliency, input x gradient, guided backpropagation.

use super::{
    check_class, check_input, squeeze_spatial, AttributionMap, MapMetadata, Method, TargetSpace,
};
use crate::autodiff::BackwardMode;
use crate::error::Result;
use crate::graph::ModelGraph;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn input_gradient<T: Scalar>(
    graph: &ModelGraph<T>,
    x: &Tensor<T>,
    class_index: usize,
    mode: BackwardMode,
) -> Result<Tensor<T>> {
    check_input(graph, x)?;
    check_class(graph, class_index)?;
    let record = graph.forward(x)?;
    Ok(squeeze_spatial(&graph.backward_input(
        &record,
        class_index,
        mode,
    )?))
}

/// Raw gradient of the class logit with respect to the input pixels.
pub fn saliency<T: Scalar>(
    graph: &ModelGraph<T>,
    x: &Tensor<T>,
    class_index: usize,
) -> Result<AttributionMap<T>> {
    Ok(AttributionMap {
        values: input_gradient(graph, x, class_index, BackwardMode::Vanilla)?,
        method: Method::Saliency,
        class_index,
        metadata: MapMetadata::bare(TargetSpace::Logit),
    })
}

/// Elementwise `x * saliency(x)`.
pub fn input_x_gradient<T: Scalar>(
    graph: &ModelGraph<T>,
    x: &Tensor<T>,
    class_index: usize,
) -> Result<AttributionMap<T>> {
    let grad = saliency(graph, x, class_index)?;
    let values = squeeze_spatial(x).mul(&grad.values)?;
    Ok(AttributionMap {
        values,
        method: Method::InputXGradient,
        class_index,
        metadata: MapMetadata::bare(TargetSpace::Logit),
    })
}

/// Backward pass with the guided ReLU rule: negative upstream signals are
/// zeroed at every ReLU in addition to the forward gate.
pub fn guided_backprop<T: Scalar>(
    graph: &ModelGraph<T>,
    x: &Tensor<T>,
    class_index: usize,
) -> Result<AttributionMap<T>> {
    Ok(AttributionMap {
        values: input_gradient(graph, x, class_index, BackwardMode::Guided)?,
        method: Method::GuidedBackprop,
        class_index,
        metadata: MapMetadata::bare(TargetSpace::Logit),
    })
}
