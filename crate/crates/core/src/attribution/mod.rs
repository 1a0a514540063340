//! Per-pixel relevance maps for one (image, class) pair.
//!
//! Six methods: occlusion, saliency, input x gradient, guided
//! backpropagation, integrated gradients and DeepLIFT (rescale rule).
//! Occlusion attributes the class *probability* change; the gradient-based
//! methods attribute the class *logit*. The choice is recorded in each map's
//! metadata.

mod deeplift;
mod gradients;
mod integrated;
mod occlusion;

pub use deeplift::deeplift_rescale;
pub use gradients::{guided_backprop, input_x_gradient, saliency};
pub use integrated::{integrated_gradients, midpoint_path_integral};
pub use occlusion::occlusion;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ModelGraph;
use crate::labels::LabelSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The attribution methods, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Occlusion,
    Saliency,
    InputXGradient,
    GuidedBackprop,
    IntegratedGradients,
    DeepLift,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Occlusion,
        Method::Saliency,
        Method::InputXGradient,
        Method::GuidedBackprop,
        Method::IntegratedGradients,
        Method::DeepLift,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Occlusion => "occlusion",
            Method::Saliency => "saliency",
            Method::InputXGradient => "input-x-gradient",
            Method::GuidedBackprop => "guided-backprop",
            Method::IntegratedGradients => "integrated-gradients",
            Method::DeepLift => "deeplift",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; expected one of {:?}",
                    Method::ALL.map(|m| m.name())
                ))
            })
    }
}

/// Sliding-window occlusion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionConfig {
    pub window: usize,
    pub stride: usize,
    /// Mid-grey in `[0, 1]` intensity space by default.
    pub fill_value: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            window: 16,
            stride: 8,
            fill_value: 0.5,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self, input_side: usize) -> Result<()> {
        if self.stride < 1 || self.stride > self.window {
            return Err(Error::Config(format!(
                "occlusion stride must satisfy 1 <= stride <= window, got stride {} window {}",
                self.stride, self.window
            )));
        }
        if self.window > input_side {
            return Err(Error::Config(format!(
                "occlusion window {} larger than image side {input_side}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Whether a map scores logit or probability changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSpace {
    Logit,
    Probability,
}

/// Method parameters and diagnostics attached to a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub target_space: TargetSpace,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fill_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// `"zeros"` for the default baseline, `"custom"` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    /// `sum(values) - (F(x) - F(baseline))` where the method promises
    /// completeness / summation-to-delta.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completeness_residual: Option<f64>,
}

impl MapMetadata {
    pub(crate) fn bare(target_space: TargetSpace) -> Self {
        MapMetadata {
            target_space,
            window: None,
            stride: None,
            fill_value: None,
            steps: None,
            baseline: None,
            completeness_residual: None,
        }
    }
}

/// Relevance scores for one (input, class) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap<T> {
    /// Signed scores with the input's spatial shape `[H, W]`.
    pub values: Tensor<T>,
    pub method: Method,
    pub class_index: usize,
    pub metadata: MapMetadata,
}

/// Per-method knobs used by [`attribute_all`].
#[derive(Debug, Clone)]
pub struct AttributionConfig<T> {
    pub occlusion: OcclusionConfig,
    pub ig_steps: usize,
    /// Shared reference input for integrated gradients and DeepLIFT;
    /// all-zeros when absent.
    pub baseline: Option<Tensor<T>>,
}

impl<T> Default for AttributionConfig<T> {
    fn default() -> Self {
        AttributionConfig {
            occlusion: OcclusionConfig::default(),
            ig_steps: 64,
            baseline: None,
        }
    }
}

// Shared guards: single-channel input matching the graph, valid class.
pub(crate) fn check_input<T: Scalar>(graph: &ModelGraph<T>, x: &Tensor<T>) -> Result<()> {
    if x.shape() != graph.input_shape() {
        return Err(Error::ShapeMismatch(format!(
            "input {:?} does not match graph input {:?}",
            x.shape(),
            graph.input_shape()
        )));
    }
    if graph.input_shape()[0] != 1 {
        return Err(Error::Config(
            "attribution maps are defined for single-channel inputs".into(),
        ));
    }
    Ok(())
}

pub(crate) fn check_class<T: Scalar>(graph: &ModelGraph<T>, class_index: usize) -> Result<()> {
    if class_index >= graph.num_classes() {
        return Err(Error::ClassIndex {
            index: class_index,
            num_classes: graph.num_classes(),
        });
    }
    Ok(())
}

/// `[1, H, W]` -> `[H, W]`.
pub(crate) fn squeeze_spatial<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    t.reshaped(vec![t.shape()[1], t.shape()[2]])
        .expect("channel squeeze")
}

/// Runs every requested method for every requested label, in deterministic
/// (label, method) order: labels ascending, methods in the given order.
pub fn attribute_all<T: Scalar>(
    graph: &ModelGraph<T>,
    x: &Tensor<T>,
    labels: &LabelSet,
    methods: &[Method],
    cfg: &AttributionConfig<T>,
) -> Result<Vec<AttributionMap<T>>> {
    check_input(graph, x)?;
    let mut out = Vec::with_capacity(labels.len() * methods.len());
    for class_index in labels.iter() {
        check_class(graph, class_index)?;
        for method in methods {
            let map = match method {
                Method::Occlusion => occlusion(graph, x, class_index, &cfg.occlusion)?,
                Method::Saliency => saliency(graph, x, class_index)?,
                Method::InputXGradient => input_x_gradient(graph, x, class_index)?,
                Method::GuidedBackprop => guided_backprop(graph, x, class_index)?,
                Method::IntegratedGradients => integrated_gradients(
                    graph,
                    x,
                    cfg.baseline.as_ref(),
                    cfg.ig_steps,
                    class_index,
                )?,
                Method::DeepLift => deeplift_rescale(graph, x, cfg.baseline.as_ref(), class_index)?,
            };
            out.push(map);
        }
    }
    Ok(out)
}
