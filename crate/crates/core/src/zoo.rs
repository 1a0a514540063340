//! Toy architectures exercising each connectivity mechanism: sequential,
//! residual add, parallel multi-size branches, branches + residual, and
//! dense concatenation.

use crate::error::{Error, Result};
use crate::graph::{conv2d, dense, GraphBuilder, LayerOp, ModelGraph, NodeInput};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The five zoo architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchId {
    PlainCnn,
    MiniRes,
    MiniInception,
    MiniInceptionRes,
    MiniDense,
}

impl ArchId {
    pub const ALL: [ArchId; 5] = [
        ArchId::PlainCnn,
        ArchId::MiniRes,
        ArchId::MiniInception,
        ArchId::MiniInceptionRes,
        ArchId::MiniDense,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ArchId::PlainCnn => "plain-cnn",
            ArchId::MiniRes => "mini-res",
            ArchId::MiniInception => "mini-inception",
            ArchId::MiniInceptionRes => "mini-inception-res",
            ArchId::MiniDense => "mini-dense",
        }
    }
}

impl std::fmt::Display for ArchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown architecture {s:?}; expected one of {:?}",
                    ArchId::ALL.map(|a| a.name())
                ))
            })
    }
}

/// Architecture plus sizing knobs.
///
/// `widths` semantics per architecture:
/// - `plain-cnn`: `[c1, c2, c3]` conv channels;
/// - `mini-res`: `[stem, down]` channels of the two residual stages;
/// - `mini-inception` / `mini-inception-res`: `[stem, b1, b2, b3]` stem and
///   1x1/3x3/5x5 branch widths;
/// - `mini-dense`: `[growth, transition]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArchSpec {
    pub arch: ArchId,
    pub input_side: usize,
    pub num_classes: usize,
    pub widths: Vec<usize>,
}

impl ArchSpec {
    /// Spec with the default widths for `arch`.
    pub fn new(arch: ArchId, input_side: usize, num_classes: usize) -> Self {
        let widths = match arch {
            ArchId::PlainCnn => vec![8, 16, 16],
            ArchId::MiniRes => vec![8, 16],
            ArchId::MiniInception | ArchId::MiniInceptionRes => vec![8, 4, 8, 4],
            ArchId::MiniDense => vec![6, 16],
        };
        ArchSpec {
            arch,
            input_side,
            num_classes,
            widths,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side < 8 {
            return Err(Error::Config(format!(
                "input side must be >= 8, got {}",
                self.input_side
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        let expected = match self.arch {
            ArchId::PlainCnn => 3,
            ArchId::MiniRes | ArchId::MiniDense => 2,
            ArchId::MiniInception | ArchId::MiniInceptionRes => 4,
        };
        if self.widths.len() != expected || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "{} expects {expected} positive widths, got {:?}",
                self.arch, self.widths
            )));
        }
        Ok(())
    }
}

// He-style initialization: normal with std sqrt(2 / fan_in), biases zero.
struct Init {
    rng: SplitMix64,
}

impl Init {
    fn conv<T: Scalar>(&mut self, out_c: usize, in_c: usize, k: usize) -> (Tensor<T>, Tensor<T>) {
        let std = (2.0 / (in_c * k * k) as f64).sqrt();
        let data = (0..out_c * in_c * k * k)
            .map(|_| T::from_f64_lossy(self.rng.next_normal() * std))
            .collect();
        (
            Tensor::new(vec![out_c, in_c, k, k], data).expect("conv weight shape"),
            Tensor::zeros(vec![out_c]),
        )
    }

    fn dense<T: Scalar>(&mut self, out: usize, inp: usize) -> (Tensor<T>, Tensor<T>) {
        let std = (2.0 / inp as f64).sqrt();
        let data = (0..out * inp)
            .map(|_| T::from_f64_lossy(self.rng.next_normal() * std))
            .collect();
        (
            Tensor::new(vec![out, inp], data).expect("dense weight shape"),
            Tensor::zeros(vec![out]),
        )
    }
}

/// Builds a zoo architecture with deterministic seed-derived weights.
///
/// `labels.len()` must equal `spec.num_classes`; the labels travel with the
/// graph into the serialized model container.
pub fn build<T: Scalar>(spec: &ArchSpec, labels: &[String], seed: u64) -> Result<ModelGraph<T>> {
    spec.validate()?;
    if labels.len() != spec.num_classes {
        return Err(Error::Config(format!(
            "{} labels provided for {} classes",
            labels.len(),
            spec.num_classes
        )));
    }
    let mut init = Init {
        rng: SplitMix64::new(seed),
    };
    let mut b = GraphBuilder::new([1, spec.input_side, spec.input_side]);
    let w = &spec.widths;

    let conv_relu = |b: &mut GraphBuilder<T>,
                     init: &mut Init,
                     input: NodeInput,
                     out_c: usize,
                     in_c: usize,
                     k: usize,
                     stride: usize,
                     padding: usize|
     -> NodeInput {
        let (weight, bias) = init.conv(out_c, in_c, k);
        let c = b.push(conv2d(weight, bias, stride, padding), vec![input]);
        NodeInput::Node(b.push(LayerOp::Relu, vec![NodeInput::Node(c)]))
    };

    let head_channels;
    match spec.arch {
        ArchId::PlainCnn => {
            let mut cur = conv_relu(&mut b, &mut init, NodeInput::GraphInput, w[0], 1, 3, 1, 1);
            cur = conv_relu(&mut b, &mut init, cur, w[1], w[0], 3, 2, 1);
            let _last = conv_relu(&mut b, &mut init, cur, w[2], w[1], 3, 2, 1);
            head_channels = w[2];
        }
        ArchId::MiniRes => {
            // Two stages of: residual block (two 3x3 convs on the branch,
            // identity skip) followed by ReLU; a strided conv between stages.
            let stem = conv_relu(&mut b, &mut init, NodeInput::GraphInput, w[0], 1, 3, 1, 1);
            let res_block =
                |b: &mut GraphBuilder<T>, init: &mut Init, skip: NodeInput, c: usize| {
                    let mid = conv_relu(b, init, skip, c, c, 3, 1, 1);
                    let (wt, bs) = init.conv(c, c, 3);
                    let branch = b.push(conv2d(wt, bs, 1, 1), vec![mid]);
                    let add = b.push(LayerOp::Add, vec![skip, NodeInput::Node(branch)]);
                    NodeInput::Node(b.push(LayerOp::Relu, vec![NodeInput::Node(add)]))
                };
            let r1 = res_block(&mut b, &mut init, stem, w[0]);
            let down = conv_relu(&mut b, &mut init, r1, w[1], w[0], 3, 2, 1);
            let _r2 = res_block(&mut b, &mut init, down, w[1]);
            head_channels = w[1];
        }
        ArchId::MiniInception | ArchId::MiniInceptionRes => {
            let residual = spec.arch == ArchId::MiniInceptionRes;
            let stem = conv_relu(&mut b, &mut init, NodeInput::GraphInput, w[0], 1, 3, 1, 1);
            // Parallel 1x1 / 3x3 / 5x5 branches on the same input, then
            // channel concatenation; the residual variant adds a 1x1
            // expansion (no activation) back to the block input width before
            // the skip addition.
            let block = |b: &mut GraphBuilder<T>,
                         init: &mut Init,
                         input: NodeInput,
                         in_c: usize|
             -> (NodeInput, usize) {
                let b1 = conv_relu(b, init, input, w[1], in_c, 1, 1, 0);
                let b2 = conv_relu(b, init, input, w[2], in_c, 3, 1, 1);
                let b3 = conv_relu(b, init, input, w[3], in_c, 5, 1, 2);
                let cat = b.push(LayerOp::Concat, vec![b1, b2, b3]);
                let cat_c = w[1] + w[2] + w[3];
                if residual {
                    let (wt, bs) = init.conv(in_c, cat_c, 1);
                    let expand = b.push(conv2d(wt, bs, 1, 0), vec![NodeInput::Node(cat)]);
                    let add = b.push(LayerOp::Add, vec![input, NodeInput::Node(expand)]);
                    let relu = b.push(LayerOp::Relu, vec![NodeInput::Node(add)]);
                    (NodeInput::Node(relu), in_c)
                } else {
                    (NodeInput::Node(cat), cat_c)
                }
            };
            let (x1, c1) = block(&mut b, &mut init, stem, w[0]);
            let down_c = 2 * w[0];
            let down = conv_relu(&mut b, &mut init, x1, down_c, c1, 3, 2, 1);
            let (_x2, c2) = block(&mut b, &mut init, down, down_c);
            head_channels = c2;
        }
        ArchId::MiniDense => {
            // Every block sees the concatenation of the stem and all earlier
            // block outputs.
            let growth = w[0];
            let stem = conv_relu(&mut b, &mut init, NodeInput::GraphInput, growth, 1, 3, 1, 1);
            let mut features = vec![stem];
            for k in 0..3 {
                let in_c = growth * (k + 1);
                let input = if features.len() == 1 {
                    features[0]
                } else {
                    NodeInput::Node(b.push(LayerOp::Concat, features.clone()))
                };
                let out = conv_relu(&mut b, &mut init, input, growth, in_c, 3, 1, 1);
                features.push(out);
            }
            let final_cat = NodeInput::Node(b.push(LayerOp::Concat, features.clone()));
            let in_c = growth * 4;
            let _t = conv_relu(&mut b, &mut init, final_cat, w[1], in_c, 3, 2, 1);
            head_channels = w[1];
        }
    }

    b.push_seq(LayerOp::GlobalAvgPool);
    let (wt, bs) = init.dense(spec.num_classes, head_channels);
    b.push_seq(dense(wt, bs));
    b.finish(labels.to_vec())
}

/// Exact count of scalar parameters in a graph.
pub fn count_parameters<T: Scalar>(graph: &ModelGraph<T>) -> usize {
    graph.count_parameters()
}
