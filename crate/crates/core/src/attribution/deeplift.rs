//! DeepLIFT with the rescale rule: multipliers propagate from the output to
//! the input, comparing each activation against its reference activation.

use super::{
    check_class, check_input, squeeze_spatial, AttributionMap, MapMetadata, Method, TargetSpace,
};
use crate::autodiff::{op_backward_for_multipliers, PairRecord};
use crate::error::{Error, Result};
use crate::graph::{LayerOp, ModelGraph, NodeInput};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

// Below this delta-input magnitude the rescale ratio falls back to the
// local gradient to avoid division blow-up.
const DELTA_EPS: f64 = 1e-9;

/// Multiplier propagation with the rescale rule at ReLU nodes
/// (`m = delta_out / delta_in`, local gradient when `|delta_in| < 1e-9`).
/// Linear ops propagate multipliers exactly like gradients; `Add` thereby
/// splits contributions proportionally to each branch's delta and `Concat`
/// slices. The final map is `m_input * (x - x_ref)`.
///
/// Max-pooling has no rescale multiplier and is rejected.
pub fn deeplift_rescale<T: Scalar>(
    graph: &ModelGraph<T>,
    x: &Tensor<T>,
    baseline: Option<&Tensor<T>>,
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
    let pair = graph.forward_pair(x, x_ref)?;

    let mut seed = Tensor::zeros(vec![graph.num_classes()]);
    seed.data_mut()[class_index] = T::one();
    let input_mult = propagate_multipliers(graph, &pair, &seed)?;

    let attr = input_mult.mul(&x.sub(x_ref)?)?;
    let f_x = pair.actual.logits().data()[class_index];
    let f_ref = pair.reference.logits().data()[class_index];
    let residual = attr.sum().to_f64_lossy() - (f_x - f_ref).to_f64_lossy();

    Ok(AttributionMap {
        values: squeeze_spatial(&attr),
        method: Method::DeepLift,
        class_index,
        metadata: MapMetadata {
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

fn propagate_multipliers<T: Scalar>(
    graph: &ModelGraph<T>,
    pair: &PairRecord<T>,
    seed: &Tensor<T>,
) -> Result<Tensor<T>> {
    let eps = T::from_f64_lossy(DELTA_EPS);
    let mut node_mults: Vec<Option<Tensor<T>>> = vec![None; graph.nodes().len()];
    let mut input_mult = Tensor::zeros(graph.input_shape().to_vec());
    node_mults[graph.output_node()] = Some(seed.clone());

    for id in (0..graph.nodes().len()).rev() {
        let Some(m_out) = node_mults[id].take() else {
            continue;
        };
        let node = &graph.nodes()[id];
        let acts: Vec<&Tensor<T>> = node
            .inputs
            .iter()
            .map(|input| pair.actual.activation(*input))
            .collect();

        let input_mults: Vec<Tensor<T>> = match &node.op {
            LayerOp::Relu => {
                let actual_in = acts[0];
                let ref_in = pair.reference.activation(node.inputs[0]);
                let relu = |v: T| if v > T::zero() { v } else { T::zero() };
                let mut m_in = m_out.clone();
                for i in 0..m_in.numel() {
                    let a = actual_in.data()[i];
                    let r = ref_in.data()[i];
                    let delta_in = a - r;
                    let ratio = if delta_in.abs() < eps {
                        // Local gradient at the actual pre-activation.
                        if a > T::zero() {
                            T::one()
                        } else {
                            T::zero()
                        }
                    } else {
                        (relu(a) - relu(r)) / delta_in
                    };
                    m_in.data_mut()[i] = m_out.data()[i] * ratio;
                }
                vec![m_in]
            }
            LayerOp::MaxPool2x2 => {
                return Err(Error::UnsupportedNode {
                    kind: "MaxPool2x2",
                    operation: "deeplift-rescale",
                })
            }
            op => op_backward_for_multipliers(op, &acts, &m_out),
        };

        for (input_ref, mi) in node.inputs.iter().zip(input_mults) {
            match input_ref {
                NodeInput::GraphInput => input_mult.add_assign(&mi)?,
                NodeInput::Node(pred) => match &mut node_mults[*pred] {
                    Some(existing) => existing.add_assign(&mi)?,
                    slot @ None => *slot = Some(mi),
                },
            }
        }
    }
    Ok(input_mult)
}
