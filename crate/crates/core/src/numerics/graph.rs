//! Tape-style reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation eagerly: each builder method computes
//! its output immediately and appends a node. Node ids are handed out in
//! creation order, so the node list is already topologically sorted and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! ```
//! use riskmin::numerics::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let w = g.param(Tensor::vector(vec![1.0, 2.0]));
//! let sq = g.square(w).unwrap();
//! let loss = g.sum(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(w).data(), &[2.0, 4.0]);
//! ```

use crate::error::{Error, Result};

use super::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded at a node.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Constant input; receives no gradient.
    Input,
    /// Trainable leaf.
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `[n, k] + [k]`, the row vector added to every row.
    AddRow(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Relu(NodeId),
    /// Softmax over the last axis.
    Softmax(NodeId),
    /// Log-softmax over the last axis.
    LogSoftmax(NodeId),
    /// Natural log; `log(0) = -inf` is the only non-finite output.
    Log(NodeId),
    Square(NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    Concat(Vec<NodeId>, usize),
    Reshape(NodeId, Vec<usize>),
    /// Non-overlapping `window × window` max pooling on `[n, c, h, w]`.
    MaxPool2d(NodeId, usize),
    /// Valid-padding convolution, input `[n, c, h, w]`, weight `[o, c, k, k]`, bias `[o]`.
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
    },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MatMul(..) => "matmul",
            Op::Relu(_) => "relu",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Concat(..) => "concat",
            Op::Reshape(..) => "reshape",
            Op::MaxPool2d(..) => "max_pool2d",
            Op::Conv2d { .. } => "conv2d",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    /// Flat argmax positions for max pooling.
    argmax: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], one slot per node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`; zeros when `id` does not
    /// influence the loss.
    pub fn get(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    pub fn take(&mut self, id: NodeId) -> Tensor {
        self.grads[id.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.0]))
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push_raw(Op::Input, value, Vec::new())
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_raw(Op::Param, value, Vec::new())
    }

    /// Replaces the value held by a leaf node.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Input | Op::Param) {
            return Err(Error::InvalidTensor(format!(
                "node {} is a {} node, not a leaf",
                id.0,
                node.op.kind()
            )));
        }
        node.value.same_shape(&value, "set_leaf")?;
        node.value = value;
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.push(Op::AddRow(a, row))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::LogSoftmax(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Log(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square(a))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(a, factor)).expect("scale is shape-preserving")
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a)).expect("sum accepts any shape")
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a)).expect("mean accepts any shape")
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        self.push(Op::Concat(parts.to_vec(), axis))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.push(Op::Reshape(a, shape))
    }

    pub fn max_pool2d(&mut self, a: NodeId, window: usize) -> Result<NodeId> {
        self.push(Op::MaxPool2d(a, window))
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
    ) -> Result<NodeId> {
        self.push(Op::Conv2d {
            input,
            weight,
            bias,
            stride,
        })
    }

    fn push_raw(&mut self, op: Op, value: Tensor, argmax: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, value, argmax });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let (value, argmax) = self.eval(&op)?;
        Ok(self.push_raw(op, value, argmax))
    }

    /// Re-executes every recorded operation from the current leaf values and
    /// returns the resulting graph. Kernels are deterministic, so replaying
    /// with unchanged leaves reproduces every value bit for bit.
    pub fn replay(&self) -> Result<Graph> {
        let mut out = Graph {
            nodes: Vec::with_capacity(self.nodes.len()),
        };
        for node in &self.nodes {
            match node.op {
                Op::Input | Op::Param => {
                    out.push_raw(node.op.clone(), node.value.clone(), Vec::new());
                }
                _ => {
                    out.push(node.op.clone())?;
                }
            }
        }
        Ok(out)
    }

    fn eval(&self, op: &Op) -> Result<(Tensor, Vec<usize>)> {
        let v = |id: NodeId| &self.nodes[id.0].value;
        let plain = |t: Tensor| Ok((t, Vec::new()));
        match op {
            Op::Input | Op::Param => unreachable!("leaves are pushed directly"),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (v(*a), v(*b));
                x.same_shape(y, op.kind())?;
                let out = match op {
                    Op::Add(..) => x.zip_with(y, |p, q| p + q),
                    Op::Sub(..) => x.zip_with(y, |p, q| p - q),
                    _ => x.zip_with(y, |p, q| p * q),
                };
                plain(out)
            }
            Op::AddRow(a, r) => {
                let (x, row) = (v(*a), v(*r));
                if x.rank() != 2 || row.rank() != 1 || row.len() != x.cols() {
                    return Err(mismatch("add_row", x, row));
                }
                let c = x.cols();
                let mut out = x.clone();
                for chunk in out.data_mut().chunks_mut(c) {
                    for (o, b) in chunk.iter_mut().zip(row.data()) {
                        *o += b;
                    }
                }
                plain(out)
            }
            Op::MatMul(a, b) => {
                let (x, y) = (v(*a), v(*b));
                if x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0] {
                    return Err(mismatch("matmul", x, y));
                }
                let (n, k, m) = (x.shape()[0], x.shape()[1], y.shape()[1]);
                plain(Tensor::new(vec![n, m], matmul_raw(x.data(), y.data(), n, k, m))?)
            }
            Op::Relu(a) => plain(v(*a).map(|p| p.max(0.0))),
            Op::Softmax(a) => plain(softmax_rows(v(*a))),
            Op::LogSoftmax(a) => plain(log_softmax_rows(v(*a))),
            Op::Log(a) => plain(v(*a).map(f64::ln)),
            Op::Square(a) => plain(v(*a).map(|p| p * p)),
            Op::Scale(a, f) => plain(v(*a).map(|p| p * f)),
            Op::Sum(a) => plain(Tensor::scalar(v(*a).sum())),
            Op::Mean(a) => {
                let x = v(*a);
                if x.is_empty() {
                    return Err(Error::InvalidTensor("mean of empty tensor".into()));
                }
                plain(Tensor::scalar(x.sum() / x.len() as f64))
            }
            Op::Concat(parts, axis) => {
                let tensors: Vec<&Tensor> = parts.iter().map(|p| v(*p)).collect();
                plain(concat(&tensors, *axis)?)
            }
            Op::Reshape(a, shape) => plain(v(*a).clone().reshape(shape.clone())?),
            Op::MaxPool2d(a, window) => max_pool_forward(v(*a), *window),
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
            } => plain(conv2d_forward(v(*input), v(*weight), v(*bias), *stride)?),
        }
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let v = |id: NodeId| &self.nodes[id.0].value;
        let mut acc = |id: NodeId, delta: Tensor| match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Input | Op::Param => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|p| -p));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_with(v(*b), |p, q| p * q));
                acc(*b, g.zip_with(v(*a), |p, q| p * q));
            }
            Op::AddRow(a, r) => {
                let c = g.cols();
                let mut col_sum = vec![0.0; c];
                for chunk in g.data().chunks(c) {
                    for (s, x) in col_sum.iter_mut().zip(chunk) {
                        *s += x;
                    }
                }
                acc(*a, g.clone());
                acc(*r, Tensor::vector(col_sum));
            }
            Op::MatMul(a, b) => {
                let (x, y) = (v(*a), v(*b));
                let (n, k, m) = (x.shape()[0], x.shape()[1], y.shape()[1]);
                let ga = matmul_nt(g.data(), y.data(), n, m, k);
                let gb = matmul_tn(x.data(), g.data(), n, k, m);
                acc(*a, Tensor::new(vec![n, k], ga).expect("matmul grad shape"));
                acc(*b, Tensor::new(vec![k, m], gb).expect("matmul grad shape"));
            }
            Op::Relu(a) => acc(*a, g.zip_with(v(*a), |p, x| if x > 0.0 { p } else { 0.0 })),
            Op::Softmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut out = Vec::with_capacity(y.len());
                for (gr, yr) in g.data().chunks(c).zip(y.data().chunks(c)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                    out.extend(gr.iter().zip(yr).map(|(p, q)| q * (p - dot)));
                }
                acc(*a, Tensor::new(y.shape().to_vec(), out).expect("softmax grad"));
            }
            Op::LogSoftmax(a) => {
                let soft = softmax_rows(v(*a));
                let c = soft.cols();
                let mut out = Vec::with_capacity(soft.len());
                for (gr, sr) in g.data().chunks(c).zip(soft.data().chunks(c)) {
                    let total: f64 = gr.iter().sum();
                    out.extend(gr.iter().zip(sr).map(|(p, s)| p - s * total));
                }
                acc(*a, Tensor::new(soft.shape().to_vec(), out).expect("log_softmax grad"));
            }
            Op::Log(a) => acc(*a, g.zip_with(v(*a), |p, x| p / x)),
            Op::Square(a) => acc(*a, g.zip_with(v(*a), |p, x| 2.0 * x * p)),
            Op::Scale(a, f) => acc(*a, g.map(|p| p * f)),
            Op::Sum(a) => acc(*a, Tensor::full(v(*a).shape(), g.data()[0])),
            Op::Mean(a) => {
                let x = v(*a);
                acc(*a, Tensor::full(x.shape(), g.data()[0] / x.len() as f64));
            }
            Op::Concat(parts, axis) => {
                let outer: usize = node.value.shape()[..*axis].iter().product();
                let total_inner: usize = node.value.shape()[*axis..].iter().product();
                let mut offset = 0;
                for p in parts {
                    let x = v(*p);
                    let inner: usize = x.shape()[*axis..].iter().product();
                    let mut data = Vec::with_capacity(x.len());
                    for o in 0..outer {
                        let start = o * total_inner + offset;
                        data.extend_from_slice(&g.data()[start..start + inner]);
                    }
                    offset += inner;
                    acc(*p, Tensor::new(x.shape().to_vec(), data).expect("concat grad"));
                }
            }
            Op::Reshape(a, _) => {
                let shape = v(*a).shape().to_vec();
                acc(*a, g.clone().reshape(shape).expect("reshape grad"));
            }
            Op::MaxPool2d(a, _) => {
                let mut out = Tensor::zeros(v(*a).shape());
                let data = out.data_mut();
                for (&pos, &gv) in node.argmax.iter().zip(g.data()) {
                    data[pos] += gv;
                }
                acc(*a, out);
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
            } => {
                let (gi, gw, gb) = conv2d_backward(v(*input), v(*weight), g, *stride);
                acc(*input, gi);
                acc(*weight, gw);
                acc(*bias, gb);
            }
        }
    }
}

pub fn softmax_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = x.clone();
    if c == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            total += *r;
        }
        for r in row.iter_mut() {
            *r /= total;
        }
    }
    out
}

pub fn log_softmax_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = x.clone();
    if c == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|r| (r - max).exp()).sum::<f64>().ln();
        for r in row.iter_mut() {
            *r -= lse;
        }
    }
    out
}

fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidTensor("concat of zero tensors".into()))?;
    if axis >= first.rank() {
        return Err(Error::InvalidTensor(format!(
            "concat axis {axis} out of range for rank {}",
            first.rank()
        )));
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = 0;
    for p in parts {
        let compatible = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(mismatch("concat", first, p));
        }
        shape[axis] += p.shape()[axis];
    }
    let outer: usize = shape[..axis].iter().product();
    let mut data = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for p in parts {
            let inner: usize = p.shape()[axis..].iter().product();
            data.extend_from_slice(&p.data()[o * inner..(o + 1) * inner]);
        }
    }
    Tensor::new(shape, data)
}

fn dims4(t: &Tensor, op: &'static str) -> Result<[usize; 4]> {
    match t.shape() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        s => Err(Error::ShapeMismatch {
            op,
            lhs: s.to_vec(),
            rhs: vec![0; 4],
        }),
    }
}

fn max_pool_forward(x: &Tensor, window: usize) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = dims4(x, "max_pool2d")?;
    if window == 0 || h < window || w < window {
        return Err(Error::InvalidTensor(format!(
            "pool window {window} does not fit {h}x{w}"
        )));
    }
    let (oh, ow) = (h / window, w / window);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_pos = base + i * window * w + j * window;
                for di in 0..window {
                    for dj in 0..window {
                        let pos = base + (i * window + di) * w + j * window + dj;
                        // strict comparison: ties go to the first position scanned
                        if data[pos] > best {
                            best = data[pos];
                            best_pos = pos;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_pos);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, argmax))
}

fn conv_out_dims(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Result<[usize; 7]> {
    let [n, c, h, wd] = dims4(x, "conv2d")?;
    let [o, wc, kh, kw] = dims4(w, "conv2d")?;
    if wc != c || b.shape() != [o] || stride == 0 || kh > h || kw > wd {
        return Err(mismatch("conv2d", x, w));
    }
    let oh = (h - kh) / stride + 1;
    let ow = (wd - kw) / stride + 1;
    Ok([n, c, h, wd, o, oh, ow])
}

fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
    let [n, c, h, wd, o, oh, ow] = conv_out_dims(x, w, b, stride)?;
    let (kh, kw) = (w.shape()[2], w.shape()[3]);
    let (xd, wdat) = (x.data(), w.data());
    let mut out = vec![0.0; n * o * oh * ow];
    for ni in 0..n {
        for oc in 0..o {
            let out_plane = &mut out[(ni * o + oc) * oh * ow..(ni * o + oc + 1) * oh * ow];
            out_plane.fill(b.data()[oc]);
            for ci in 0..c {
                let in_base = (ni * c + ci) * h * wd;
                let w_base = (oc * c + ci) * kh * kw;
                for ki in 0..kh {
                    for kj in 0..kw {
                        let wv = wdat[w_base + ki * kw + kj];
                        for i in 0..oh {
                            let row = in_base + (i * stride + ki) * wd + kj;
                            let dst = &mut out_plane[i * ow..(i + 1) * ow];
                            for (j, d) in dst.iter_mut().enumerate() {
                                *d += wv * xd[row + j * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, o, oh, ow], out)
}

fn conv2d_backward(x: &Tensor, w: &Tensor, g: &Tensor, stride: usize) -> (Tensor, Tensor, Tensor) {
    let [n, c, h, wd] = dims4(x, "conv2d").expect("validated in forward");
    let [o, _, kh, kw] = dims4(w, "conv2d").expect("validated in forward");
    let (oh, ow) = (g.shape()[2], g.shape()[3]);
    let (xd, wdat, gd) = (x.data(), w.data(), g.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wdat.len()];
    let mut gb = vec![0.0; o];
    for ni in 0..n {
        for oc in 0..o {
            let g_plane = &gd[(ni * o + oc) * oh * ow..(ni * o + oc + 1) * oh * ow];
            gb[oc] += g_plane.iter().sum::<f64>();
            for ci in 0..c {
                let in_base = (ni * c + ci) * h * wd;
                let w_base = (oc * c + ci) * kh * kw;
                for ki in 0..kh {
                    for kj in 0..kw {
                        let wv = wdat[w_base + ki * kw + kj];
                        let mut wacc = 0.0;
                        for i in 0..oh {
                            let row = in_base + (i * stride + ki) * wd + kj;
                            for j in 0..ow {
                                let gv = g_plane[i * ow + j];
                                wacc += gv * xd[row + j * stride];
                                gx[row + j * stride] += gv * wv;
                            }
                        }
                        gw[w_base + ki * kw + kj] += wacc;
                    }
                }
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), gx).expect("conv grad"),
        Tensor::new(w.shape().to_vec(), gw).expect("conv grad"),
        Tensor::vector(gb),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_node(g: &mut Graph, v: &[f64]) -> NodeId {
        g.input(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let z = vec_node(&mut g, &[0.0, 0.0]);
        let s = g.softmax(z).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn relu_clips_negatives() {
        let mut g = Graph::new();
        let z = vec_node(&mut g, &[-1.0, 2.0]);
        let r = g.relu(z).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 2.0]);
    }

    #[test]
    fn matmul_of_ones_gives_row_sums() {
        let mut g = Graph::new();
        let a = g.input(Tensor::full(&[2, 3], 1.0));
        let b = g.input(Tensor::full(&[3, 1], 1.0));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        assert_eq!(g.value(c).data(), &[3.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_names_operands() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 3]));
        match g.matmul(a, b) {
            Err(Error::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
        let v = g.input(Tensor::zeros(&[4]));
        assert!(matches!(g.add(a, v), Err(Error::ShapeMismatch { op: "add", .. })));
    }

    #[test]
    fn square_sum_gradient() {
        let mut g = Graph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.square(w).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).data(), &[2.0, 4.0]);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut g = Graph::new();
        let z = g.param(Tensor::vector(vec![0.0, 0.0]));
        let target = vec_node(&mut g, &[1.0, 0.0]);
        let logp = g.log_softmax(z).unwrap();
        let prod = g.mul(target, logp).unwrap();
        let s = g.sum(prod);
        let loss = g.scale(s, -1.0);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(z).data(), &[-0.5, 0.5]);

        // same loss through softmax then log
        let mut g = Graph::new();
        let z = g.param(Tensor::vector(vec![0.0, 0.0]));
        let target = vec_node(&mut g, &[1.0, 0.0]);
        let p = g.softmax(z).unwrap();
        let logp = g.log(p).unwrap();
        let prod = g.mul(target, logp).unwrap();
        let s = g.sum(prod);
        let loss = g.scale(s, -1.0);
        let grads = g.backward(loss).unwrap();
        for (a, b) in grads.get(z).data().iter().zip([-0.5, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(w), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let mut g = Graph::new();
        let used = g.param(Tensor::vector(vec![3.0]));
        let unused = g.param(Tensor::full(&[2, 2], 7.0));
        let loss = g.sum(used);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(used).data(), &[1.0]);
        assert_eq!(grads.get(unused), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn concat_along_last_axis_interleaves_rows() {
        let mut g = Graph::new();
        let a = g.input(Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap());
        let b = g.input(Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 3]);
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn max_pool_picks_window_maxima() {
        let mut g = Graph::new();
        let x = g.param(
            Tensor::new(
                vec![1, 1, 2, 4],
                vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 1.0],
            )
            .unwrap(),
        );
        let p = g.max_pool2d(x, 2).unwrap();
        assert_eq!(g.value(p).data(), &[5.0, 8.0]);
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).data(), &[0., 1., 0., 0., 0., 0., 1., 0.]);
    }

    #[test]
    fn conv2d_matches_hand_computation() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap());
        let w = g.param(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, -1.0]).unwrap());
        let b = g.param(Tensor::vector(vec![0.5]));
        let y = g.conv2d(x, w, b, 1).unwrap();
        // x[i][j] - x[i+1][j+1] = -4 everywhere
        assert_eq!(g.value(y).data(), &[-3.5; 4]);
        let y2 = g.conv2d(x, w, b, 2).unwrap();
        assert_eq!(g.value(y2).shape(), &[1, 1, 1, 1]);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.3, 0.7, 0.11, -0.5]).unwrap());
        let w = g.param(Tensor::new(vec![3, 2], vec![0.3, -0.1, 0.2, 0.9, -0.4, 0.25]).unwrap());
        let h = g.matmul(x, w).unwrap();
        let s = g.softmax(h).unwrap();
        let l = g.log(s).unwrap();
        let m = g.mean(l);
        let replayed = g.replay().unwrap();
        for id in g.node_ids() {
            let a: Vec<u64> = g.value(id).data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = replayed.value(id).data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        assert_eq!(g.value(m).data()[0].to_bits(), replayed.value(m).data()[0].to_bits());
    }
}
