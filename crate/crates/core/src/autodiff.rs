//! Forward evaluation and reverse-mode differentiation over layer DAGs.

use crate::error::{Error, Result};
use crate::graph::{LayerOp, ModelGraph, NodeInput};
use crate::loss::sigmoid;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// ReLU rule used by the backward pass.
///
/// `Guided` differs from `Vanilla` only at ReLU nodes: negative upstream
/// signals are zeroed in addition to the forward gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardMode {
    Vanilla,
    Guided,
}

/// Every node's output from one forward pass, retained for backward passes.
#[derive(Debug, Clone)]
pub struct ActivationRecord<T> {
    input: Tensor<T>,
    outputs: Vec<Tensor<T>>,
    output_node: usize,
}

impl<T: Scalar> ActivationRecord<T> {
    pub fn input(&self) -> &Tensor<T> {
        &self.input
    }

    pub fn node_output(&self, id: usize) -> &Tensor<T> {
        &self.outputs[id]
    }

    /// Pre-sigmoid logits, one per class.
    pub fn logits(&self) -> &Tensor<T> {
        &self.outputs[self.output_node]
    }

    /// Activation seen at a node input: the graph input itself or an
    /// earlier node's output.
    pub fn activation(&self, input: NodeInput) -> &Tensor<T> {
        match input {
            NodeInput::GraphInput => &self.input,
            NodeInput::Node(id) => &self.outputs[id],
        }
    }
}

/// Actual and reference activations from one paired forward pass, for
/// reference-difference propagation (DeepLIFT).
#[derive(Debug, Clone)]
pub struct PairRecord<T> {
    pub actual: ActivationRecord<T>,
    pub reference: ActivationRecord<T>,
}

impl<T: Scalar> PairRecord<T> {
    /// Elementwise activation difference at a node.
    pub fn delta(&self, id: usize) -> Result<Tensor<T>> {
        self.actual.outputs[id].sub(&self.reference.outputs[id])
    }
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct BackwardResult<T> {
    /// Gradient with respect to the graph input.
    pub input_grad: Tensor<T>,
    /// Gradients per parameter tensor in `visit_params` order, when requested.
    pub param_grads: Option<Vec<Tensor<T>>>,
}

impl<T: Scalar> ModelGraph<T> {
    /// Runs the graph on `x`, retaining every node output.
    pub fn forward(&self, x: &Tensor<T>) -> Result<ActivationRecord<T>> {
        if x.shape() != self.input_shape() {
            return Err(Error::ShapeMismatch(format!(
                "graph expects input {:?}, got {:?}",
                self.input_shape(),
                x.shape()
            )));
        }
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.nodes().len());
        for (id, node) in self.nodes().iter().enumerate() {
            let acts: Vec<&Tensor<T>> = node
                .inputs
                .iter()
                .map(|input| match input {
                    NodeInput::GraphInput => x,
                    NodeInput::Node(pred) => &outputs[*pred],
                })
                .collect();
            let out = eval_op(&node.op, &acts).map_err(|message| Error::Node {
                node: id,
                kind: node.op.kind_name(),
                message,
            })?;
            outputs.push(out);
        }
        Ok(ActivationRecord {
            input: x.clone(),
            outputs,
            output_node: self.output_node(),
        })
    }

    /// Sigmoid of the logits: per-class probabilities.
    pub fn predict_probs(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x)?.logits().map(sigmoid))
    }

    /// Gradient of the chosen class logit with respect to the input image.
    pub fn backward_input(
        &self,
        record: &ActivationRecord<T>,
        class_index: usize,
        mode: BackwardMode,
    ) -> Result<Tensor<T>> {
        if class_index >= self.num_classes() {
            return Err(Error::ClassIndex {
                index: class_index,
                num_classes: self.num_classes(),
            });
        }
        let mut seed = Tensor::zeros(vec![self.num_classes()]);
        seed.data_mut()[class_index] = T::one();
        Ok(self.backward(record, &seed, mode, false)?.input_grad)
    }

    /// Reverse-mode pass from an arbitrary logit-space upstream gradient.
    ///
    /// `want_params` additionally produces parameter gradients (training).
    pub fn backward(
        &self,
        record: &ActivationRecord<T>,
        logit_grad: &Tensor<T>,
        mode: BackwardMode,
        want_params: bool,
    ) -> Result<BackwardResult<T>> {
        if logit_grad.shape() != [self.num_classes()] {
            return Err(Error::ShapeMismatch(format!(
                "logit gradient shape {:?}, expected [{}]",
                logit_grad.shape(),
                self.num_classes()
            )));
        }
        if record.outputs.len() != self.nodes().len() {
            return Err(Error::ShapeMismatch(
                "activation record does not belong to this graph".into(),
            ));
        }

        // Flat index of each node's weight gradient in visit_params order.
        let mut param_slot: Vec<Option<usize>> = vec![None; self.nodes().len()];
        let mut param_grads: Vec<Tensor<T>> = Vec::new();
        if want_params {
            self.visit_params(|key, t| {
                if key.name == "weight" {
                    param_slot[key.node] = Some(param_grads.len());
                }
                param_grads.push(t.zeros_like());
            });
        }

        let mut node_grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes().len()];
        let mut input_grad = Tensor::zeros(self.input_shape().to_vec());
        node_grads[self.output_node()] = Some(logit_grad.clone());

        for id in (0..self.nodes().len()).rev() {
            let Some(grad_out) = node_grads[id].take() else {
                continue;
            };
            let node = &self.nodes()[id];
            let acts: Vec<&Tensor<T>> = node
                .inputs
                .iter()
                .map(|input| record.activation(*input))
                .collect();

            let mut weight_grad_slot = param_slot[id].map(|w| (w, w + 1));
            let input_grads = op_backward(
                &node.op,
                &acts,
                &grad_out,
                mode,
                weight_grad_slot.take().map(|(w, b)| {
                    // Safety by construction: w and b are adjacent distinct slots.
                    let (left, right) = param_grads.split_at_mut(b);
                    (&mut left[w], &mut right[0])
                }),
            );

            for (input_ref, gi) in node.inputs.iter().zip(input_grads) {
                match input_ref {
                    NodeInput::GraphInput => input_grad.add_assign(&gi)?,
                    NodeInput::Node(pred) => match &mut node_grads[*pred] {
                        Some(existing) => existing.add_assign(&gi)?,
                        slot @ None => *slot = Some(gi),
                    },
                }
            }
        }

        Ok(BackwardResult {
            input_grad,
            param_grads: want_params.then_some(param_grads),
        })
    }

    /// Forward on `x` and `x_ref` together, producing the paired record used
    /// by reference-difference attribution.
    pub fn forward_pair(&self, x: &Tensor<T>, x_ref: &Tensor<T>) -> Result<PairRecord<T>> {
        if x.shape() != x_ref.shape() {
            return Err(Error::ShapeMismatch(format!(
                "input {:?} and reference {:?} differ",
                x.shape(),
                x_ref.shape()
            )));
        }
        Ok(PairRecord {
            actual: self.forward(x)?,
            reference: self.forward(x_ref)?,
        })
    }
}

/// Evaluates one op. Shape errors are reported as plain messages; callers
/// attach the node id.
pub(crate) fn eval_op<T: Scalar>(
    op: &LayerOp<T>,
    inputs: &[&Tensor<T>],
) -> std::result::Result<Tensor<T>, String> {
    let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape()).collect();
    let out_shape = crate::graph::infer_shape(op, &shapes)?;
    let out = match op {
        LayerOp::Conv2d {
            weight,
            bias,
            stride,
            padding,
        } => conv2d_forward(inputs[0], weight, bias, *stride, *padding, &out_shape),
        LayerOp::Dense { weight, bias } => {
            let x = inputs[0].data();
            let (m, n) = (weight.shape()[0], weight.shape()[1]);
            let w = weight.data();
            let mut out = Vec::with_capacity(m);
            for row in 0..m {
                let mut acc = bias.data()[row];
                let wr = &w[row * n..(row + 1) * n];
                for (wv, xv) in wr.iter().zip(x) {
                    acc += *wv * *xv;
                }
                out.push(acc);
            }
            Tensor::new(out_shape, out).expect("inferred shape")
        }
        LayerOp::Relu => inputs[0].map(|v| if v > T::zero() { v } else { T::zero() }),
        LayerOp::MaxPool2x2 => {
            let x = inputs[0];
            let (c, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
            let mut out = Tensor::zeros(out_shape.clone());
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = x.at3(ch, 2 * oy, 2 * ox);
                        for (ky, kx) in [(0, 1), (1, 0), (1, 1)] {
                            let v = x.at3(ch, 2 * oy + ky, 2 * ox + kx);
                            if v > best {
                                best = v;
                            }
                        }
                        out.set3(ch, oy, ox, best);
                    }
                }
            }
            out
        }
        LayerOp::GlobalAvgPool => {
            let x = inputs[0];
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let area = T::from_f64_lossy((h * w) as f64);
            let mut out = Vec::with_capacity(c);
            for ch in 0..c {
                let plane = &x.data()[ch * h * w..(ch + 1) * h * w];
                let mut acc = T::zero();
                for v in plane {
                    acc += *v;
                }
                out.push(acc / area);
            }
            Tensor::new(out_shape, out).expect("inferred shape")
        }
        LayerOp::Add => {
            let mut out = inputs[0].clone();
            for x in &inputs[1..] {
                out.add_assign(x).expect("validated shapes");
            }
            out
        }
        LayerOp::Concat => {
            let mut data = Vec::with_capacity(out_shape.iter().product());
            for x in inputs {
                data.extend_from_slice(x.data());
            }
            Tensor::new(out_shape, data).expect("inferred shape")
        }
        LayerOp::Flatten => inputs[0].reshaped(out_shape).expect("inferred shape"),
    };
    Ok(out)
}

// Output-x range touched by kernel column `kx`, plus the first input x it
// reads: every `ox` in `lo..hi` reads input `ix_start + (ox - lo) * stride`.
#[inline]
fn ox_range(
    kx: usize,
    padding: usize,
    stride: usize,
    in_w: usize,
    out_w: usize,
) -> (usize, usize, usize) {
    let lo = if kx >= padding {
        0
    } else {
        (padding - kx).div_ceil(stride)
    };
    let bound = in_w + padding; // exclusive bound on ox * stride + kx
    let hi = if kx >= bound {
        0
    } else {
        ((bound - 1 - kx) / stride + 1).min(out_w)
    };
    let ix_start = if hi > lo {
        lo * stride + kx - padding
    } else {
        0
    };
    (lo, hi, ix_start)
}

fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
    out_shape: &[usize],
) -> Tensor<T> {
    let (in_c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = weight.shape()[2];
    let (out_c, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    let xd = x.data();
    let wd = weight.data();
    let mut out = vec![T::zero(); out_c * oh * ow];
    for oc in 0..out_c {
        for v in &mut out[oc * oh * ow..(oc + 1) * oh * ow] {
            *v = bias.data()[oc];
        }
        for ic in 0..in_c {
            let x_plane = &xd[ic * h * w..(ic + 1) * h * w];
            let w_base = (oc * in_c + ic) * k * k;
            for ky in 0..k {
                let w_row = &wd[w_base + ky * k..w_base + (ky + 1) * k];
                for oy in 0..oh {
                    let iy = oy * stride + ky;
                    if iy < padding || iy >= h + padding {
                        continue;
                    }
                    let x_row = &x_plane[(iy - padding) * w..(iy - padding + 1) * w];
                    let out_row = &mut out[(oc * oh + oy) * ow..(oc * oh + oy + 1) * ow];
                    for (kx, &wv) in w_row.iter().enumerate() {
                        let (lo, hi, ix_start) = ox_range(kx, padding, stride, w, ow);
                        if hi <= lo {
                            continue;
                        }
                        if stride == 1 {
                            let xs = &x_row[ix_start..ix_start + (hi - lo)];
                            for (o, &xv) in out_row[lo..hi].iter_mut().zip(xs) {
                                *o += wv * xv;
                            }
                        } else {
                            let mut ix = ix_start;
                            for o in &mut out_row[lo..hi] {
                                *o += wv * x_row[ix];
                                ix += stride;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(out_shape.to_vec(), out).expect("inferred shape")
}

/// Backward transport of multipliers through a linear op: identical to the
/// gradient rules. ReLU and MaxPool are handled by the caller.
pub(crate) fn op_backward_for_multipliers<T: Scalar>(
    op: &LayerOp<T>,
    acts: &[&Tensor<T>],
    upstream: &Tensor<T>,
) -> Vec<Tensor<T>> {
    debug_assert!(!matches!(op, LayerOp::Relu | LayerOp::MaxPool2x2));
    op_backward(op, acts, upstream, BackwardMode::Vanilla, None)
}

/// Per-op backward: upstream gradient in, one gradient per input out.
/// Parameter gradients accumulate into `param_out` when present.
fn op_backward<T: Scalar>(
    op: &LayerOp<T>,
    acts: &[&Tensor<T>],
    grad_out: &Tensor<T>,
    mode: BackwardMode,
    param_out: Option<(&mut Tensor<T>, &mut Tensor<T>)>,
) -> Vec<Tensor<T>> {
    match op {
        LayerOp::Conv2d {
            weight,
            stride,
            padding,
            ..
        } => {
            let x = acts[0];
            let (in_c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let k = weight.shape()[2];
            let (stride, padding) = (*stride, *padding);
            let (out_c, oh, ow) = (
                grad_out.shape()[0],
                grad_out.shape()[1],
                grad_out.shape()[2],
            );
            let mut gx = Tensor::zeros(x.shape().to_vec());
            let xd = x.data();
            let wd = weight.data();
            let god = grad_out.data();
            let gxd = gx.data_mut();
            let (mut gwd, mut gbd) = match param_out {
                Some((gw, gb)) => (Some(gw.data_mut()), Some(gb.data_mut())),
                None => (None, None),
            };
            for oc in 0..out_c {
                let g_plane = &god[oc * oh * ow..(oc + 1) * oh * ow];
                if let Some(gbd) = gbd.as_deref_mut() {
                    let mut acc = T::zero();
                    for &g in g_plane {
                        acc += g;
                    }
                    gbd[oc] += acc;
                }
                for ic in 0..in_c {
                    let x_plane = &xd[ic * h * w..(ic + 1) * h * w];
                    let gx_plane = &mut gxd[ic * h * w..(ic + 1) * h * w];
                    let w_base = (oc * in_c + ic) * k * k;
                    for ky in 0..k {
                        for oy in 0..oh {
                            let iy = oy * stride + ky;
                            if iy < padding || iy >= h + padding {
                                continue;
                            }
                            let iy = iy - padding;
                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                            let x_row = &x_plane[iy * w..(iy + 1) * w];
                            let gx_row = &mut gx_plane[iy * w..(iy + 1) * w];
                            for kx in 0..k {
                                let (lo, hi, ix_start) = ox_range(kx, padding, stride, w, ow);
                                if hi <= lo {
                                    continue;
                                }
                                let wv = wd[w_base + ky * k + kx];
                                if stride == 1 {
                                    let n = hi - lo;
                                    for (i, &g) in g_row[lo..hi].iter().enumerate() {
                                        gx_row[ix_start + i] += g * wv;
                                    }
                                    if let Some(gwd) = gwd.as_deref_mut() {
                                        let mut acc = T::zero();
                                        for (&g, &xv) in
                                            g_row[lo..hi].iter().zip(&x_row[ix_start..ix_start + n])
                                        {
                                            acc += g * xv;
                                        }
                                        gwd[w_base + ky * k + kx] += acc;
                                    }
                                } else {
                                    let mut ix = ix_start;
                                    let mut w_acc = T::zero();
                                    for &g in &g_row[lo..hi] {
                                        gx_row[ix] += g * wv;
                                        w_acc += g * x_row[ix];
                                        ix += stride;
                                    }
                                    if let Some(gwd) = gwd.as_deref_mut() {
                                        gwd[w_base + ky * k + kx] += w_acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            vec![gx]
        }
        LayerOp::Dense { weight, .. } => {
            let x = acts[0];
            let (m, n) = (weight.shape()[0], weight.shape()[1]);
            let wd = weight.data();
            let g = grad_out.data();
            let mut gx = vec![T::zero(); n];
            for row in 0..m {
                let gr = g[row];
                let wr = &wd[row * n..(row + 1) * n];
                for (gxv, wv) in gx.iter_mut().zip(wr) {
                    *gxv += gr * *wv;
                }
            }
            if let Some((gw, gb)) = param_out {
                let gwd = gw.data_mut();
                for row in 0..m {
                    let gr = g[row];
                    for (col, xv) in x.data().iter().enumerate() {
                        gwd[row * n + col] += gr * *xv;
                    }
                }
                gb.add_assign(grad_out).expect("bias grad shape");
            }
            vec![Tensor::new(vec![n], gx).expect("dense input shape")]
        }
        LayerOp::Relu => {
            let pre = acts[0];
            let gated = match mode {
                // Sub-gradient 0 at exactly-zero pre-activations.
                BackwardMode::Vanilla => grad_out
                    .zip_map(pre, |g, p| if p > T::zero() { g } else { T::zero() })
                    .expect("relu shapes"),
                BackwardMode::Guided => grad_out
                    .zip_map(pre, |g, p| {
                        if p > T::zero() && g > T::zero() {
                            g
                        } else {
                            T::zero()
                        }
                    })
                    .expect("relu shapes"),
            };
            vec![gated]
        }
        LayerOp::MaxPool2x2 => {
            let x = acts[0];
            let (c, oh, ow) = (
                grad_out.shape()[0],
                grad_out.shape()[1],
                grad_out.shape()[2],
            );
            let mut gx = Tensor::zeros(x.shape().to_vec());
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        // First maximum in scan order receives the gradient.
                        let (mut by, mut bx) = (2 * oy, 2 * ox);
                        let mut best = x.at3(ch, by, bx);
                        for (ky, kx) in [(0, 1), (1, 0), (1, 1)] {
                            let v = x.at3(ch, 2 * oy + ky, 2 * ox + kx);
                            if v > best {
                                best = v;
                                by = 2 * oy + ky;
                                bx = 2 * ox + kx;
                            }
                        }
                        let g = grad_out.at3(ch, oy, ox);
                        let cur = gx.at3(ch, by, bx);
                        gx.set3(ch, by, bx, cur + g);
                    }
                }
            }
            vec![gx]
        }
        LayerOp::GlobalAvgPool => {
            let x = acts[0];
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let area = T::from_f64_lossy((h * w) as f64);
            let mut gx = Tensor::zeros(x.shape().to_vec());
            for ch in 0..c {
                let g = grad_out.data()[ch] / area;
                for v in &mut gx.data_mut()[ch * h * w..(ch + 1) * h * w] {
                    *v = g;
                }
            }
            vec![gx]
        }
        // Upstream gradient passes unchanged to every summand.
        LayerOp::Add => acts.iter().map(|_| grad_out.clone()).collect(),
        // Upstream gradient slices back to each branch; slices along the
        // leading axis are contiguous in row-major order.
        LayerOp::Concat => {
            let mut grads = Vec::with_capacity(acts.len());
            let mut offset = 0;
            for x in acts {
                let n = x.numel();
                let chunk = grad_out.data()[offset..offset + n].to_vec();
                grads.push(Tensor::new(x.shape().to_vec(), chunk).expect("concat slice"));
                offset += n;
            }
            grads
        }
        LayerOp::Flatten => {
            vec![grad_out
                .reshaped(acts[0].shape().to_vec())
                .expect("flatten shapes")]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{conv2d, dense, GraphBuilder};
    use crate::rng::SplitMix64;

    fn t(shape: Vec<usize>, v: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, v).unwrap()
    }

    fn eval(op: &LayerOp<f64>, inputs: &[&Tensor<f64>]) -> Tensor<f64> {
        eval_op(op, inputs).unwrap()
    }

    #[test]
    fn identity_1x1_conv_reproduces_the_image() {
        let op = conv2d(t(vec![1, 1, 1, 1], vec![1.0]), t(vec![1], vec![0.0]), 1, 0);
        let img = t(
            vec![1, 3, 4],
            (0..12).map(|i| i as f64 * 0.7 - 2.0).collect(),
        );
        assert_eq!(eval(&op, &[&img]), img);
    }

    #[test]
    fn zero_weight_dense_outputs_the_bias() {
        let op = dense(Tensor::zeros(vec![3, 5]), t(vec![3], vec![1.0, -2.0, 0.5]));
        let x = t(vec![5], vec![9.0, -3.0, 2.0, 0.1, 4.0]);
        assert_eq!(eval(&op, &[&x]).data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn all_ones_3x3_conv_on_ones_counts_coverage() {
        // Stride 1, zero padding 1 on a 3x3 image of ones: the output counts
        // how many taps land inside the image.
        let op = conv2d(
            Tensor::full(vec![1, 1, 3, 3], 1.0),
            Tensor::zeros(vec![1]),
            1,
            1,
        );
        let img = Tensor::full(vec![1, 3, 3], 1.0);
        let out = eval(&op, &[&img]);
        assert_eq!(out.at3(0, 1, 1), 9.0);
        for (y, x) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(out.at3(0, y, x), 4.0, "corner ({y},{x})");
        }
        for (y, x) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            assert_eq!(out.at3(0, y, x), 6.0, "edge ({y},{x})");
        }
    }

    #[test]
    fn strided_conv_shapes_and_values() {
        let op = conv2d(t(vec![1, 1, 1, 1], vec![1.0]), Tensor::zeros(vec![1]), 2, 0);
        let img = t(vec![1, 4, 4], (0..16).map(f64::from).collect());
        let out = eval(&op, &[&img]);
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn scalar_doubling_dense_has_gradient_two_in_both_modes() {
        let mut b = GraphBuilder::new([1, 1, 1]);
        b.push_seq(LayerOp::Flatten);
        b.push_seq(dense(t(vec![1, 1], vec![2.0]), Tensor::zeros(vec![1])));
        let g = b.finish(vec!["y".into()]).unwrap();
        let x = t(vec![1, 1, 1], vec![1.7]);
        let rec = g.forward(&x).unwrap();
        for mode in [BackwardMode::Vanilla, BackwardMode::Guided] {
            let grad = g.backward_input(&rec, 0, mode).unwrap();
            assert_eq!(grad.data(), &[2.0]);
        }
    }

    fn smooth_random_point(g: &ModelGraph<f64>, seed: u64) -> (Tensor<f64>, ActivationRecord<f64>) {
        let shape = g.input_shape();
        let numel = shape[0] * shape[1] * shape[2];
        let mut rng = SplitMix64::new(seed);
        loop {
            let x = Tensor::new(
                shape.to_vec(),
                (0..numel).map(|_| rng.next_f64() * 2.0 - 1.0).collect(),
            )
            .unwrap();
            let rec = g.forward(&x).unwrap();
            if point_is_smooth(g, &rec) {
                return (x, rec);
            }
        }
    }

    // No ReLU pre-activation within 1e-3 of zero, no near-tied pool window.
    fn point_is_smooth(g: &ModelGraph<f64>, rec: &ActivationRecord<f64>) -> bool {
        for node in g.nodes() {
            match node.op {
                LayerOp::Relu => {
                    let pre = rec.activation(node.inputs[0]);
                    if pre.data().iter().any(|v| v.abs() < 1e-3) {
                        return false;
                    }
                }
                LayerOp::MaxPool2x2 => {
                    let x = rec.activation(node.inputs[0]);
                    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                    for ch in 0..c {
                        for oy in 0..h / 2 {
                            for ox in 0..w / 2 {
                                let mut vals = [
                                    x.at3(ch, 2 * oy, 2 * ox),
                                    x.at3(ch, 2 * oy, 2 * ox + 1),
                                    x.at3(ch, 2 * oy + 1, 2 * ox),
                                    x.at3(ch, 2 * oy + 1, 2 * ox + 1),
                                ];
                                vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                                // An all-gated window (max exactly 0 from an
                                // upstream ReLU) is locally constant, hence
                                // smooth; only a contested maximum is not.
                                if vals[0] - vals[1] < 1e-3 && vals[0] != 0.0 {
                                    return false;
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        true
    }

    fn assert_gradient_matches_fd(g: &ModelGraph<f64>, seed: u64, class: usize, coords: &[usize]) {
        let (x, rec) = smooth_random_point(g, seed);
        let grad = g
            .backward_input(&rec, class, BackwardMode::Vanilla)
            .unwrap();
        let h = 1e-5;
        for &i in coords {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (g.forward(&xp).unwrap().logits().data()[class]
                - g.forward(&xm).unwrap().logits().data()[class])
                / (2.0 * h);
            let bp = grad.data()[i];
            let denom = fd.abs().max(bp.abs()).max(1e-6);
            assert!(
                (fd - bp).abs() / denom < 1e-4,
                "coord {i}: fd={fd} backward={bp}"
            );
        }
    }

    fn random_conv_relu_net(seed: u64) -> ModelGraph<f64> {
        let mut rng = SplitMix64::new(seed);
        let mut rand_t = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.next_normal() * 0.5).collect()).unwrap()
        };
        let mut b = GraphBuilder::new([1, 6, 6]);
        b.push_seq(conv2d(rand_t(vec![3, 1, 3, 3]), rand_t(vec![3]), 1, 1));
        b.push_seq(LayerOp::Relu);
        b.push_seq(LayerOp::Flatten);
        b.push_seq(dense(rand_t(vec![2, 108]), rand_t(vec![2])));
        b.finish(vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn conv_relu_net_gradient_matches_central_differences() {
        let g = random_conv_relu_net(11);
        for seed in 0..3 {
            assert_gradient_matches_fd(&g, 50 + seed, (seed % 2) as usize, &[0, 7, 19, 35]);
        }
    }

    // One graph touching every layer kind; its gradient must survive the
    // finite-difference check at smooth points.
    fn kitchen_sink_graph(seed: u64) -> ModelGraph<f64> {
        let mut rng = SplitMix64::new(seed);
        let mut rand_t = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.next_normal() * 0.4).collect()).unwrap()
        };
        let mut b = GraphBuilder::new([1, 8, 8]);
        let c0 = b.push(
            conv2d(rand_t(vec![4, 1, 3, 3]), rand_t(vec![4]), 1, 1),
            vec![NodeInput::GraphInput],
        );
        let r0 = b.push(LayerOp::Relu, vec![NodeInput::Node(c0)]);
        let p0 = b.push(LayerOp::MaxPool2x2, vec![NodeInput::Node(r0)]);
        let c1 = b.push(
            conv2d(rand_t(vec![4, 4, 3, 3]), rand_t(vec![4]), 1, 1),
            vec![NodeInput::Node(p0)],
        );
        let a0 = b.push(LayerOp::Add, vec![NodeInput::Node(p0), NodeInput::Node(c1)]);
        let r1 = b.push(LayerOp::Relu, vec![NodeInput::Node(a0)]);
        let cat = b.push(
            LayerOp::Concat,
            vec![NodeInput::Node(r1), NodeInput::Node(p0)],
        );
        let p1 = b.push(LayerOp::MaxPool2x2, vec![NodeInput::Node(cat)]);
        let fl = b.push(LayerOp::Flatten, vec![NodeInput::Node(p1)]);
        let d0 = b.push(
            dense(rand_t(vec![3, 32]), rand_t(vec![3])),
            vec![NodeInput::Node(fl)],
        );
        let gap = b.push(LayerOp::GlobalAvgPool, vec![NodeInput::Node(cat)]);
        let d1 = b.push(
            dense(rand_t(vec![3, 8]), rand_t(vec![3])),
            vec![NodeInput::Node(gap)],
        );
        b.push(LayerOp::Add, vec![NodeInput::Node(d0), NodeInput::Node(d1)]);
        b.finish(vec!["x".into(), "y".into(), "z".into()]).unwrap()
    }

    #[test]
    fn every_layer_kind_gradient_matches_central_differences() {
        let g = kitchen_sink_graph(3);
        for seed in 0..3 {
            assert_gradient_matches_fd(&g, 80 + seed, seed as usize % 3, &[1, 13, 30, 62]);
        }
    }

    #[test]
    fn guided_equals_vanilla_without_relu_nodes() {
        let mut rng = SplitMix64::new(2);
        let mut b = GraphBuilder::new([1, 4, 4]);
        b.push_seq(conv2d(
            Tensor::new(
                vec![2, 1, 3, 3],
                (0..18).map(|_| rng.next_normal()).collect(),
            )
            .unwrap(),
            Tensor::zeros(vec![2]),
            1,
            1,
        ));
        b.push_seq(LayerOp::GlobalAvgPool);
        b.push_seq(dense(
            Tensor::new(vec![2, 2], (0..4).map(|_| rng.next_normal()).collect()).unwrap(),
            Tensor::zeros(vec![2]),
        ));
        let g = b.finish(vec!["a".into(), "b".into()]).unwrap();
        assert!(!g.has_relu());
        let x = t(vec![1, 4, 4], (0..16).map(|i| (i as f64).sin()).collect());
        let rec = g.forward(&x).unwrap();
        let v = g.backward_input(&rec, 1, BackwardMode::Vanilla).unwrap();
        let gd = g.backward_input(&rec, 1, BackwardMode::Guided).unwrap();
        assert_eq!(v.data(), gd.data());
    }

    #[test]
    fn class_index_out_of_range_is_rejected() {
        let g = random_conv_relu_net(0);
        let x = Tensor::zeros(vec![1, 6, 6]);
        let rec = g.forward(&x).unwrap();
        let err = g
            .backward_input(&rec, 2, BackwardMode::Vanilla)
            .unwrap_err();
        assert!(matches!(err, Error::ClassIndex { .. }));
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let g = random_conv_relu_net(0);
        let err = g.forward(&Tensor::zeros(vec![1, 5, 5])).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
        // A shape error inside the graph names the offending node.
        let op = conv2d::<f64>(
            Tensor::zeros(vec![1, 2, 3, 3]),
            Tensor::zeros(vec![1]),
            1,
            1,
        );
        let msg = eval_op(&op, &[&Tensor::<f64>::zeros(vec![1, 4, 4])]).unwrap_err();
        assert!(msg.contains("channels"), "{msg}");
    }

    #[test]
    fn add_backward_passes_gradient_unchanged_to_every_summand() {
        let a = t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let bb = t(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        let c = t(vec![2, 2], vec![0.0, 0.0, 0.0, 0.0]);
        let g = t(vec![2, 2], vec![0.1, -0.2, 0.3, -0.4]);
        let grads = op_backward(
            &LayerOp::Add,
            &[&a, &bb, &c],
            &g,
            BackwardMode::Vanilla,
            None,
        );
        assert_eq!(grads.len(), 3);
        for gi in grads {
            assert_eq!(gi, g);
        }
    }

    #[test]
    fn concat_backward_slices_without_overlap_or_loss() {
        let a = Tensor::<f64>::zeros(vec![2, 2, 2]);
        let bb = Tensor::<f64>::zeros(vec![3, 2, 2]);
        let upstream = t(vec![5, 2, 2], (0..20).map(f64::from).collect());
        let grads = op_backward(
            &LayerOp::Concat,
            &[&a, &bb],
            &upstream,
            BackwardMode::Vanilla,
            None,
        );
        assert_eq!(grads[0].shape(), &[2, 2, 2]);
        assert_eq!(grads[1].shape(), &[3, 2, 2]);
        assert_eq!(
            grads[0].numel() + grads[1].numel(),
            upstream.numel(),
            "no loss"
        );
        assert_eq!(grads[0].data(), &upstream.data()[..8]);
        assert_eq!(grads[1].data(), &upstream.data()[8..]);
    }

    #[test]
    fn maxpool_routes_gradient_to_first_maximum() {
        let x = t(vec![1, 2, 2], vec![3.0, 3.0, 1.0, 2.0]);
        let g = t(vec![1, 1, 1], vec![5.0]);
        let grads = op_backward(&LayerOp::MaxPool2x2, &[&x], &g, BackwardMode::Vanilla, None);
        // Tie between the two 3.0s: scan order puts the gradient on the first.
        assert_eq!(grads[0].data(), &[5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_forward_ignores_trailing_odd_row_and_column() {
        let x = t(vec![1, 3, 3], (0..9).map(f64::from).collect());
        let out = eval(&LayerOp::MaxPool2x2, &[&x]);
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn global_avg_pool_averages_per_channel() {
        let x = t(
            vec![2, 2, 2],
            vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0],
        );
        let out = eval(&LayerOp::GlobalAvgPool, &[&x]);
        assert_eq!(out.data(), &[2.5, 25.0]);
        let g = t(vec![2], vec![4.0, 8.0]);
        let grads = op_backward(
            &LayerOp::GlobalAvgPool,
            &[&x],
            &g,
            BackwardMode::Vanilla,
            None,
        );
        assert_eq!(grads[0].data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn scaling_the_head_scales_the_input_gradient() {
        let base = random_conv_relu_net(21);
        let mut scaled = base.clone();
        {
            let mut params = scaled.params_mut();
            // Head dense is the last weight/bias pair.
            let n = params.len();
            for p in &mut params[n - 2..] {
                for v in p.data_mut() {
                    *v *= 3.5;
                }
            }
        }
        let (x, rec) = smooth_random_point(&base, 33);
        let rec_scaled = scaled.forward(&x).unwrap();
        let g1 = base.backward_input(&rec, 0, BackwardMode::Vanilla).unwrap();
        let g2 = scaled
            .backward_input(&rec_scaled, 0, BackwardMode::Vanilla)
            .unwrap();
        for (a, b) in g1.data().iter().zip(g2.data()) {
            let denom = a.abs().max(1e-12);
            assert!((3.5 * a - b).abs() / denom < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn forward_pair_with_identical_inputs_has_zero_deltas() {
        let g = kitchen_sink_graph(1);
        let (x, _) = smooth_random_point(&g, 4);
        let pair = g.forward_pair(&x, &x).unwrap();
        for id in 0..g.nodes().len() {
            let delta = pair.delta(id).unwrap();
            assert!(delta.data().iter().all(|&v| v == 0.0), "node {id}");
        }
    }

    #[test]
    fn forward_pair_zero_reference_gives_bias_only_logits_on_linear_graph() {
        let mut b = GraphBuilder::new([1, 1, 3]);
        b.push_seq(LayerOp::Flatten);
        b.push_seq(dense(
            t(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.25]),
            t(vec![2], vec![0.75, -1.5]),
        ));
        let g = b.finish(vec!["a".into(), "b".into()]).unwrap();
        let x = t(vec![1, 1, 3], vec![0.3, 0.6, 0.9]);
        let pair = g.forward_pair(&x, &x.zeros_like()).unwrap();
        assert_eq!(pair.reference.logits().data(), &[0.75, -1.5]);
    }

    #[test]
    fn forward_pair_rejects_shape_mismatch() {
        let g = random_conv_relu_net(0);
        let x = Tensor::zeros(vec![1, 6, 6]);
        assert!(g.forward_pair(&x, &Tensor::zeros(vec![1, 5, 5])).is_err());
    }

    #[test]
    fn forward_and_backward_are_deterministic() {
        let g = kitchen_sink_graph(9);
        let (x, rec) = smooth_random_point(&g, 14);
        let rec2 = g.forward(&x).unwrap();
        assert_eq!(rec.logits().data(), rec2.logits().data());
        let g1 = g.backward_input(&rec, 2, BackwardMode::Vanilla).unwrap();
        let g2 = g.backward_input(&rec2, 2, BackwardMode::Vanilla).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn finite_outputs_on_finite_inputs() {
        let g = kitchen_sink_graph(5);
        let (x, rec) = smooth_random_point(&g, 6);
        assert!(rec.logits().all_finite());
        let grads = g
            .backward(
                &rec,
                &Tensor::full(vec![3], 1.0),
                BackwardMode::Vanilla,
                true,
            )
            .unwrap();
        assert!(grads.input_grad.all_finite());
        for p in grads.param_grads.unwrap() {
            assert!(p.all_finite());
        }
        let _ = x;
    }

    #[test]
    fn param_gradients_match_finite_differences() {
        let g = random_conv_relu_net(17);
        let (x, rec) = smooth_random_point(&g, 90);
        let seed_grad = t(vec![2], vec![1.0, 0.0]);
        let grads = g
            .backward(&rec, &seed_grad, BackwardMode::Vanilla, true)
            .unwrap()
            .param_grads
            .unwrap();
        // Probe a few weights of the first conv (param tensor 0).
        let h = 1e-5;
        for &wi in &[0usize, 4, 10] {
            let mut gp = g.clone();
            gp.params_mut()[0].data_mut()[wi] += h;
            let mut gm = g.clone();
            gm.params_mut()[0].data_mut()[wi] -= h;
            let fp = gp.forward(&x).unwrap().logits().data()[0];
            let fm = gm.forward(&x).unwrap().logits().data()[0];
            let fd = (fp - fm) / (2.0 * h);
            let bp = grads[0].data()[wi];
            let denom = fd.abs().max(bp.abs()).max(1e-6);
            assert!((fd - bp).abs() / denom < 1e-4, "w{wi}: fd={fd} bp={bp}");
        }
    }
}
