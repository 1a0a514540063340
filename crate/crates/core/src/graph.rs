//! Layer DAGs: node kinds, graph construction and validation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Reference to where a node reads its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeInput {
    /// The graph's external input image.
    GraphInput,
    /// Output of an earlier node.
    Node(usize),
}

/// One layer of the DAG, with its parameters embedded where applicable.
///
/// Convolution weights are `[out_c, in_c, k, k]` (square kernels, stride 1
/// or 2, zero padding); dense weights are `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp<T> {
    Conv2d {
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: usize,
    },
    Dense {
        weight: Tensor<T>,
        bias: Tensor<T>,
    },
    Relu,
    MaxPool2x2,
    GlobalAvgPool,
    Add,
    Concat,
    Flatten,
}

impl<T> LayerOp<T> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerOp::Conv2d { .. } => "Conv2d",
            LayerOp::Dense { .. } => "Dense",
            LayerOp::Relu => "ReLU",
            LayerOp::MaxPool2x2 => "MaxPool2x2",
            LayerOp::GlobalAvgPool => "GlobalAvgPool",
            LayerOp::Add => "Add",
            LayerOp::Concat => "Concat",
            LayerOp::Flatten => "Flatten",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode<T> {
    pub op: LayerOp<T>,
    pub inputs: Vec<NodeInput>,
}

/// Identifies one parameter tensor inside a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamKey {
    pub node: usize,
    /// `"weight"` or `"bias"`.
    pub name: &'static str,
}

/// An immutable, validated DAG of layers with exactly one output node.
///
/// Graphs are cheap to share (`&ModelGraph` is `Send + Sync`); forward and
/// backward passes keep all mutable state in per-call records.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph<T> {
    input_shape: [usize; 3],
    nodes: Vec<LayerNode<T>>,
    labels: Vec<String>,
    output: usize,
    /// Output shape per node, fixed at validation time.
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> ModelGraph<T> {
    /// Validates and freezes a graph.
    ///
    /// Nodes may only reference earlier nodes (the graph is acyclic by
    /// construction), exactly one node must be a sink, and every node's
    /// input shapes must be compatible with its op. The sink must produce
    /// `[labels.len()]` logits.
    pub fn new(
        input_shape: [usize; 3],
        nodes: Vec<LayerNode<T>>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::InvalidGraph(format!(
                "zero extent in input shape {input_shape:?}"
            )));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidGraph("graph has no output labels".into()));
        }

        let mut consumed = vec![false; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            for input in &node.inputs {
                if let NodeInput::Node(pred) = input {
                    if *pred >= id {
                        return Err(Error::InvalidGraph(format!(
                            "node {id} references node {pred}, which is not an earlier node"
                        )));
                    }
                    consumed[*pred] = true;
                }
            }
        }
        let sinks: Vec<usize> = consumed
            .iter()
            .enumerate()
            .filter(|(_, &c)| !c)
            .map(|(id, _)| id)
            .collect();
        if sinks.len() != 1 {
            return Err(Error::InvalidGraph(format!(
                "expected exactly one output node, found sinks {sinks:?}"
            )));
        }
        let output = sinks[0];

        // Shape inference doubles as per-node parameter validation.
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(nodes.len());
        let input_shape_vec = input_shape.to_vec();
        for (id, node) in nodes.iter().enumerate() {
            let in_shapes: Vec<&[usize]> = node
                .inputs
                .iter()
                .map(|input| match input {
                    NodeInput::GraphInput => input_shape_vec.as_slice(),
                    NodeInput::Node(pred) => shapes[*pred].as_slice(),
                })
                .collect();
            let out = infer_shape(&node.op, &in_shapes).map_err(|message| Error::Node {
                node: id,
                kind: node.op.kind_name(),
                message,
            })?;
            shapes.push(out);
        }

        let logits_shape = &shapes[output];
        if logits_shape.as_slice() != [labels.len()] {
            return Err(Error::InvalidGraph(format!(
                "output node {output} produces shape {logits_shape:?}, expected [{}] for {} labels",
                labels.len(),
                labels.len()
            )));
        }

        Ok(ModelGraph {
            input_shape,
            nodes,
            labels,
            output,
            shapes,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn nodes(&self) -> &[LayerNode<T>] {
        &self.nodes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn output_node(&self) -> usize {
        self.output
    }

    pub fn node_shape(&self, id: usize) -> &[usize] {
        &self.shapes[id]
    }

    pub fn has_relu(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.op, LayerOp::Relu))
    }

    /// Total number of scalar parameters.
    pub fn count_parameters(&self) -> usize {
        let mut total = 0;
        self.visit_params(|_, t| total += t.numel());
        total
    }

    /// Visits every parameter tensor in a fixed order (node id ascending,
    /// weight before bias). This order defines optimizer state layout and
    /// the serialization layout.
    pub fn visit_params(&self, mut f: impl FnMut(ParamKey, &Tensor<T>)) {
        for (id, node) in self.nodes.iter().enumerate() {
            match &node.op {
                LayerOp::Conv2d { weight, bias, .. } | LayerOp::Dense { weight, bias } => {
                    f(
                        ParamKey {
                            node: id,
                            name: "weight",
                        },
                        weight,
                    );
                    f(
                        ParamKey {
                            node: id,
                            name: "bias",
                        },
                        bias,
                    );
                }
                _ => {}
            }
        }
    }

    /// Mutable parameter references in `visit_params` order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for node in self.nodes.iter_mut() {
            match &mut node.op {
                LayerOp::Conv2d { weight, bias, .. } | LayerOp::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Parameter keys in `visit_params` order.
    pub fn param_keys(&self) -> Vec<ParamKey> {
        let mut keys = Vec::new();
        self.visit_params(|k, _| keys.push(k));
        keys
    }
}

/// Output shape of `op` given its input shapes, or a message on mismatch.
pub(crate) fn infer_shape<T: Scalar>(
    op: &LayerOp<T>,
    inputs: &[&[usize]],
) -> std::result::Result<Vec<usize>, String> {
    let arity_one = |inputs: &[&[usize]]| -> std::result::Result<(), String> {
        if inputs.len() != 1 {
            return Err(format!("expects 1 input, got {}", inputs.len()));
        }
        Ok(())
    };
    match op {
        LayerOp::Conv2d {
            weight,
            bias,
            stride,
            padding,
        } => {
            arity_one(inputs)?;
            let x = inputs[0];
            if x.len() != 3 {
                return Err(format!("expects [C,H,W] input, got {x:?}"));
            }
            let ws = weight.shape();
            if ws.len() != 4 || ws[2] != ws[3] {
                return Err(format!("weight must be [out_c, in_c, k, k], got {ws:?}"));
            }
            if !(*stride == 1 || *stride == 2) {
                return Err(format!("stride must be 1 or 2, got {stride}"));
            }
            let (out_c, in_c, k) = (ws[0], ws[1], ws[2]);
            if bias.shape() != [out_c] {
                return Err(format!(
                    "bias shape {:?} does not match {out_c} output channels",
                    bias.shape()
                ));
            }
            if x[0] != in_c {
                return Err(format!(
                    "input has {} channels, weight expects {in_c}",
                    x[0]
                ));
            }
            let (h, w) = (x[1], x[2]);
            if h + 2 * padding < k || w + 2 * padding < k {
                return Err(format!(
                    "kernel {k} larger than padded input {}x{}",
                    h + 2 * padding,
                    w + 2 * padding
                ));
            }
            let oh = (h + 2 * padding - k) / stride + 1;
            let ow = (w + 2 * padding - k) / stride + 1;
            Ok(vec![out_c, oh, ow])
        }
        LayerOp::Dense { weight, bias } => {
            arity_one(inputs)?;
            let x = inputs[0];
            if x.len() != 1 {
                return Err(format!("expects flat [n] input, got {x:?}; add Flatten"));
            }
            let ws = weight.shape();
            if ws.len() != 2 {
                return Err(format!("weight must be [out, in], got {ws:?}"));
            }
            if ws[1] != x[0] {
                return Err(format!("input width {} != weight in-dim {}", x[0], ws[1]));
            }
            if bias.shape() != [ws[0]] {
                return Err(format!(
                    "bias shape {:?} does not match {} outputs",
                    bias.shape(),
                    ws[0]
                ));
            }
            Ok(vec![ws[0]])
        }
        LayerOp::Relu => {
            arity_one(inputs)?;
            Ok(inputs[0].to_vec())
        }
        LayerOp::MaxPool2x2 => {
            arity_one(inputs)?;
            let x = inputs[0];
            if x.len() != 3 {
                return Err(format!("expects [C,H,W] input, got {x:?}"));
            }
            if x[1] < 2 || x[2] < 2 {
                return Err(format!("spatial extent too small to pool: {x:?}"));
            }
            Ok(vec![x[0], x[1] / 2, x[2] / 2])
        }
        LayerOp::GlobalAvgPool => {
            arity_one(inputs)?;
            let x = inputs[0];
            if x.len() != 3 {
                return Err(format!("expects [C,H,W] input, got {x:?}"));
            }
            Ok(vec![x[0]])
        }
        LayerOp::Add => {
            if inputs.len() < 2 {
                return Err(format!("expects >= 2 inputs, got {}", inputs.len()));
            }
            let first = inputs[0];
            for x in &inputs[1..] {
                if *x != first {
                    return Err(format!("summand shapes differ: {first:?} vs {x:?}"));
                }
            }
            Ok(first.to_vec())
        }
        LayerOp::Concat => {
            if inputs.len() < 2 {
                return Err(format!("expects >= 2 inputs, got {}", inputs.len()));
            }
            let first = inputs[0];
            if first.is_empty() {
                return Err("cannot concat rank-0 inputs".into());
            }
            let mut channels = first[0];
            for x in &inputs[1..] {
                if x.len() != first.len() || x[1..] != first[1..] {
                    return Err(format!(
                        "branches must agree on all but the channel axis: {first:?} vs {x:?}"
                    ));
                }
                channels += x[0];
            }
            let mut out = first.to_vec();
            out[0] = channels;
            Ok(out)
        }
        LayerOp::Flatten => {
            arity_one(inputs)?;
            Ok(vec![inputs[0].iter().product()])
        }
    }
}

/// Incremental graph construction; `push` returns the node id.
pub struct GraphBuilder<T> {
    input_shape: [usize; 3],
    nodes: Vec<LayerNode<T>>,
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new(input_shape: [usize; 3]) -> Self {
        GraphBuilder {
            input_shape,
            nodes: Vec::new(),
        }
    }

    pub fn push(&mut self, op: LayerOp<T>, inputs: Vec<NodeInput>) -> usize {
        self.nodes.push(LayerNode { op, inputs });
        self.nodes.len() - 1
    }

    /// Convenience for sequential layers: wires to the previous node, or to
    /// the graph input if the graph is empty.
    pub fn push_seq(&mut self, op: LayerOp<T>) -> usize {
        let input = if self.nodes.is_empty() {
            NodeInput::GraphInput
        } else {
            NodeInput::Node(self.nodes.len() - 1)
        };
        self.push(op, vec![input])
    }

    pub fn last(&self) -> NodeInput {
        assert!(!self.nodes.is_empty(), "empty builder has no last node");
        NodeInput::Node(self.nodes.len() - 1)
    }

    pub fn finish(self, labels: Vec<String>) -> Result<ModelGraph<T>> {
        ModelGraph::new(self.input_shape, self.nodes, labels)
    }
}

/// Convolution op with explicit parameters; used by builders and tests.
pub fn conv2d<T: Scalar>(
    weight: Tensor<T>,
    bias: Tensor<T>,
    stride: usize,
    padding: usize,
) -> LayerOp<T> {
    LayerOp::Conv2d {
        weight,
        bias,
        stride,
        padding,
    }
}

pub fn dense<T: Scalar>(weight: Tensor<T>, bias: Tensor<T>) -> LayerOp<T> {
    LayerOp::Dense { weight, bias }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn rejects_two_sinks() {
        let mut b = GraphBuilder::<f64>::new([1, 2, 2]);
        b.push(LayerOp::Flatten, vec![NodeInput::GraphInput]);
        b.push(LayerOp::Flatten, vec![NodeInput::GraphInput]);
        let err = b.finish(labels(4)).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)), "{err}");
    }

    #[test]
    fn rejects_forward_reference() {
        let nodes = vec![LayerNode {
            op: LayerOp::<f64>::Relu,
            inputs: vec![NodeInput::Node(5)],
        }];
        let err = ModelGraph::new([1, 2, 2], nodes, labels(4)).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
    }

    #[test]
    fn shape_error_names_the_node() {
        let mut b = GraphBuilder::<f64>::new([1, 4, 4]);
        b.push_seq(LayerOp::Flatten);
        // Dense expects in-dim 16, give it 8.
        b.push_seq(dense(Tensor::zeros(vec![3, 8]), Tensor::zeros(vec![3])));
        let err = b.finish(labels(3)).unwrap_err();
        match err {
            Error::Node { node, kind, .. } => {
                assert_eq!(node, 1);
                assert_eq!(kind, "Dense");
            }
            other => panic!("expected node error, got {other}"),
        }
    }

    #[test]
    fn add_requires_identical_shapes() {
        let mut b = GraphBuilder::<f64>::new([2, 4, 4]);
        let a = b.push(LayerOp::MaxPool2x2, vec![NodeInput::GraphInput]);
        b.push(
            LayerOp::Add,
            vec![NodeInput::GraphInput, NodeInput::Node(a)],
        );
        assert!(b.finish(labels(2)).is_err());
    }

    #[test]
    fn concat_counts_channels() {
        let shapes: Vec<&[usize]> = vec![&[4, 8, 8], &[8, 8, 8], &[4, 8, 8]];
        let out = infer_shape(&LayerOp::<f64>::Concat, &shapes).unwrap();
        assert_eq!(out, vec![16, 8, 8]);
    }

    #[test]
    fn conv_stride_must_be_1_or_2() {
        let op = conv2d::<f64>(
            Tensor::zeros(vec![1, 1, 3, 3]),
            Tensor::zeros(vec![1]),
            3,
            1,
        );
        let err = infer_shape(&op, &[&[1, 8, 8]]).unwrap_err();
        assert!(err.contains("stride"));
    }

    #[test]
    fn output_must_match_label_count() {
        let mut b = GraphBuilder::<f64>::new([1, 2, 2]);
        b.push_seq(LayerOp::Flatten);
        b.push_seq(dense(Tensor::zeros(vec![3, 4]), Tensor::zeros(vec![3])));
        assert!(b.finish(labels(2)).is_err());
    }

    #[test]
    fn graphs_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<ModelGraph<f64>>();
        assert_send_sync::<ModelGraph<f32>>();
    }

    #[test]
    fn parameter_count_examples() {
        // Dense 10 -> 5 with bias.
        let mut b = GraphBuilder::<f64>::new([1, 1, 10]);
        b.push_seq(LayerOp::Flatten);
        b.push_seq(dense(Tensor::zeros(vec![5, 10]), Tensor::zeros(vec![5])));
        let g = b.finish(labels(5)).unwrap();
        assert_eq!(g.count_parameters(), 55);

        // Conv2d 3x3, 1 -> 8 channels with bias.
        let mut b = GraphBuilder::<f64>::new([1, 8, 8]);
        b.push_seq(conv2d(
            Tensor::zeros(vec![8, 1, 3, 3]),
            Tensor::zeros(vec![8]),
            1,
            1,
        ));
        b.push_seq(LayerOp::GlobalAvgPool);
        let g = b.finish(labels(8)).unwrap();
        assert_eq!(g.count_parameters(), 80);
    }
}
