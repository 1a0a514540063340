//! Self-describing binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ALABMDL\0" | u32 version | labels | input shape (3 x u32) | nodes
//! labels:  u32 count, then per label u32 byte-length + UTF-8 bytes
//! node:    u8 kind | u32 n_inputs | n_inputs x u32 (0xFFFF_FFFF = graph input)
//!          | kind-specific: Conv2d -> u32 stride, u32 padding, weight, bias
//!                           Dense  -> weight, bias
//! tensor:  u32 rank | rank x u32 dims | numel x u64 (f64 bit patterns)
//! ```
//!
//! Parameters are stored as raw f64 bit patterns, so save/load round-trips
//! bit-exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{LayerNode, LayerOp, ModelGraph, NodeInput};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ALABMDL\0";
const VERSION: u32 = 1;
const GRAPH_INPUT: u32 = u32::MAX;

fn kind_tag(op: &LayerOp<f64>) -> u8 {
    match op {
        LayerOp::Conv2d { .. } => 0,
        LayerOp::Dense { .. } => 1,
        LayerOp::Relu => 2,
        LayerOp::MaxPool2x2 => 3,
        LayerOp::GlobalAvgPool => 4,
        LayerOp::Add => 5,
        LayerOp::Concat => 6,
        LayerOp::Flatten => 7,
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn tensor(&mut self, t: &Tensor<f64>) {
        self.u32(t.rank() as u32);
        for &d in t.shape() {
            self.u32(d as u32);
        }
        for &v in t.data() {
            self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
}

/// Serializes a graph (topology, parameters, labels) to bytes.
pub fn model_to_bytes(graph: &ModelGraph<f64>) -> Vec<u8> {
    let mut w = Writer {
        buf: MAGIC.to_vec(),
    };
    w.u32(VERSION);
    w.u32(graph.labels().len() as u32);
    for label in graph.labels() {
        w.u32(label.len() as u32);
        w.buf.extend_from_slice(label.as_bytes());
    }
    for d in graph.input_shape() {
        w.u32(d as u32);
    }
    w.u32(graph.nodes().len() as u32);
    for node in graph.nodes() {
        w.buf.push(kind_tag(&node.op));
        w.u32(node.inputs.len() as u32);
        for input in &node.inputs {
            match input {
                NodeInput::GraphInput => w.u32(GRAPH_INPUT),
                NodeInput::Node(id) => w.u32(*id as u32),
            }
        }
        match &node.op {
            LayerOp::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                w.u32(*stride as u32);
                w.u32(*padding as u32);
                w.tensor(weight);
                w.tensor(bias);
            }
            LayerOp::Dense { weight, bias } => {
                w.tensor(weight);
                w.tensor(bias);
            }
            _ => {}
        }
    }
    w.buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse("truncated model container".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor<f64>> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Parse(format!("implausible tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let bits = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
            data.push(f64::from_bits(bits));
        }
        Tensor::new(shape, data)
    }
}

/// Deserializes and re-validates a model container.
pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelGraph<f64>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Parse("not a model container (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Parse(format!(
            "unsupported model container version {version}, expected {VERSION}"
        )));
    }
    let n_labels = r.u32()? as usize;
    let mut labels = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        let len = r.u32()? as usize;
        let s = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Parse("label is not UTF-8".into()))?;
        labels.push(s.to_string());
    }
    let input_shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let n_nodes = r.u32()? as usize;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let tag = r.u8()?;
        let n_inputs = r.u32()? as usize;
        let mut inputs = Vec::with_capacity(n_inputs);
        for _ in 0..n_inputs {
            let v = r.u32()?;
            inputs.push(if v == GRAPH_INPUT {
                NodeInput::GraphInput
            } else {
                NodeInput::Node(v as usize)
            });
        }
        let op = match tag {
            0 => {
                let stride = r.u32()? as usize;
                let padding = r.u32()? as usize;
                let weight = r.tensor()?;
                let bias = r.tensor()?;
                LayerOp::Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                }
            }
            1 => LayerOp::Dense {
                weight: r.tensor()?,
                bias: r.tensor()?,
            },
            2 => LayerOp::Relu,
            3 => LayerOp::MaxPool2x2,
            4 => LayerOp::GlobalAvgPool,
            5 => LayerOp::Add,
            6 => LayerOp::Concat,
            7 => LayerOp::Flatten,
            other => return Err(Error::Parse(format!("unknown node kind tag {other}"))),
        };
        nodes.push(LayerNode { op, inputs });
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse(format!(
            "{} trailing bytes after model container",
            bytes.len() - r.pos
        )));
    }
    ModelGraph::new(input_shape, nodes, labels)
}

pub fn save_model(path: &Path, graph: &ModelGraph<f64>) -> Result<()> {
    std::fs::write(path, model_to_bytes(graph)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelGraph<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
