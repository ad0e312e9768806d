use std::cell::{Cell, RefCell};

use crate::error::AutodiffError;
use crate::kernels;
use crate::tensor::Tensor;
use crate::Result;

/// Recorded operation. Each variant carries the node ids of its inputs plus
/// whatever metadata the backward pass needs.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `mul * x + add`, elementwise with scalar constants. Only the slope
    /// matters to the backward pass.
    Affine {
        x: usize,
        mul: f64,
    },
    Abs(usize),
    Sum(usize),
    Mean(usize),
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    /// Stack 2-D blocks along the row (channel) axis.
    ConcatRows {
        parts: Vec<usize>,
        rows: Vec<usize>,
        cols: usize,
    },
    LeakyRelu {
        x: usize,
        slope: f64,
    },
    Sigmoid(usize),
    Ln(usize),
    Clamp {
        x: usize,
        lo: f64,
        hi: f64,
    },
    /// Global max over the time axis: `[C, T] -> [C]`. Gradient routes to the
    /// first maximizing index of each row.
    MaxPoolTime {
        x: usize,
        cols: usize,
        argmax: Vec<usize>,
    },
    /// Nearest-neighbor 2x upsampling along time: `[C, T] -> [C, 2T]`.
    Upsample2 {
        x: usize,
        cols: usize,
    },
    ReflectPad {
        x: usize,
        cols: usize,
        pad: usize,
    },
    Conv1d {
        input: usize,
        kernel: usize,
        bias: Option<usize>,
        stride: usize,
        padding: usize,
        c_in: usize,
        t_in: usize,
        c_out: usize,
        k: usize,
        t_out: usize,
    },
    /// Treats the rows of `[3J, T]` as J xyz triples and maps each through a
    /// fixed 2x3 matrix, producing `[2J, T]`. Linear, so the backward pass is
    /// the transposed map.
    RotateProject {
        x: usize,
        rot: [[f64; 3]; 2],
        joints: usize,
        cols: usize,
    },
    /// Broadcast a vector along a new time axis: `[C] -> [C, reps]`.
    RepeatCols {
        x: usize,
        reps: usize,
    },
    /// Extract column `index` of `[C, T]` as a `[C]` vector.
    TimeSlice {
        x: usize,
        cols: usize,
        index: usize,
    },
    /// Cosine similarity of two equally-shaped tensors viewed as flat vectors.
    Cosine(usize, usize),
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Option<Vec<f64>>,
    /// Whether gradients should flow into (and through) this node.
    requires_grad: bool,
}

/// Wengert-list tape: append-only record of a forward computation.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    cosine_zero_hits: Cell<usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`]. Cheap to copy; all arithmetic methods
/// record new nodes.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            cosine_zero_hits: Cell::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of cosine-similarity evaluations that saw a zero vector and
    /// returned the defined value 0 with zero gradient.
    pub fn cosine_zero_hits(&self) -> usize {
        self.cosine_zero_hits.get()
    }

    /// Record a trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// Record a constant leaf; no gradient is tracked through it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let shape = value.shape().to_vec();
        self.push(Op::Leaf, shape, value.into_data(), requires_grad)
    }

    /// Re-create a handle from a raw node id (for storing ids across borrows).
    pub fn var(&self, id: usize) -> Var<'_> {
        assert!(id < self.len(), "stale node id");
        Var { tape: self, id }
    }

    fn push(&self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            shape,
            value,
            grad: None,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Clear all accumulated gradients.
    pub fn zero_grad(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad = None;
        }
    }

    /// Reverse sweep from a scalar loss node. Gradients accumulate into the
    /// tape additively across calls.
    fn backward_from(&self, loss: usize) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        if nodes[loss].value.len() != 1 {
            return Err(AutodiffError::NonScalarLoss {
                numel: nodes[loss].value.len(),
            });
        }
        // Local gradient buffers for this sweep; merged into the persistent
        // per-node accumulators at the end.
        let mut sweep: Vec<Option<Vec<f64>>> = (0..=loss).map(|_| None).collect();
        sweep[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            let Some(gout) = sweep[id].take() else {
                continue;
            };
            if !nodes[id].requires_grad {
                continue;
            }
            // Merge into the persistent accumulator.
            let node = &mut nodes[id];
            match node.grad.as_mut() {
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&gout) {
                        *a += g;
                    }
                }
                None => {
                    node.grad = Some(gout.clone());
                }
            }
            let op = node.op.clone();
            backprop_op(&op, &gout, &nodes, &mut sweep);
        }
        Ok(())
    }
}

fn add_into(sweep: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, contrib: &[f64]) {
    if !nodes[id].requires_grad {
        return;
    }
    match sweep[id].as_mut() {
        Some(buf) => {
            for (b, c) in buf.iter_mut().zip(contrib) {
                *b += c;
            }
        }
        None => sweep[id] = Some(contrib.to_vec()),
    }
}

fn grad_buf<'a>(
    sweep: &'a mut [Option<Vec<f64>>],
    nodes: &[Node],
    id: usize,
) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    if sweep[id].is_none() {
        sweep[id] = Some(vec![0.0; nodes[id].value.len()]);
    }
    sweep[id].as_mut()
}

fn backprop_op(op: &Op, gout: &[f64], nodes: &[Node], sweep: &mut [Option<Vec<f64>>]) {
    match *op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            add_into(sweep, nodes, a, gout);
            add_into(sweep, nodes, b, gout);
        }
        Op::Sub(a, b) => {
            add_into(sweep, nodes, a, gout);
            if let Some(buf) = grad_buf(sweep, nodes, b) {
                for (g, o) in buf.iter_mut().zip(gout) {
                    *g -= o;
                }
            }
        }
        Op::Mul(a, b) => {
            if nodes[a].requires_grad {
                let bv = &nodes[b].value;
                if let Some(buf) = grad_buf(sweep, nodes, a) {
                    for i in 0..gout.len() {
                        buf[i] += gout[i] * bv[i];
                    }
                }
            }
            if nodes[b].requires_grad {
                let av = &nodes[a].value;
                if let Some(buf) = grad_buf(sweep, nodes, b) {
                    for i in 0..gout.len() {
                        buf[i] += gout[i] * av[i];
                    }
                }
            }
        }
        Op::Affine { x, mul } => {
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for (g, o) in buf.iter_mut().zip(gout) {
                    *g += mul * o;
                }
            }
        }
        Op::Abs(x) => {
            let xv = &nodes[x].value;
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for i in 0..gout.len() {
                    let s = if xv[i] > 0.0 {
                        1.0
                    } else if xv[i] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    buf[i] += gout[i] * s;
                }
            }
        }
        Op::Sum(x) => {
            let g = gout[0];
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for b in buf.iter_mut() {
                    *b += g;
                }
            }
        }
        Op::Mean(x) => {
            let n = nodes[x].value.len() as f64;
            let g = gout[0] / n;
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for b in buf.iter_mut() {
                    *b += g;
                }
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            if nodes[a].requires_grad {
                let bv = &nodes[b].value;
                if let Some(buf) = grad_buf(sweep, nodes, a) {
                    // dA = dC . B^T
                    for i in 0..m {
                        for j in 0..n {
                            let g = gout[i * n + j];
                            for kk in 0..k {
                                buf[i * k + kk] += g * bv[kk * n + j];
                            }
                        }
                    }
                }
            }
            if nodes[b].requires_grad {
                let av = &nodes[a].value;
                if let Some(buf) = grad_buf(sweep, nodes, b) {
                    // dB = A^T . dC
                    for i in 0..m {
                        for kk in 0..k {
                            let a_ik = av[i * k + kk];
                            for j in 0..n {
                                buf[kk * n + j] += a_ik * gout[i * n + j];
                            }
                        }
                    }
                }
            }
        }
        Op::ConcatRows {
            ref parts,
            ref rows,
            cols,
        } => {
            let mut offset = 0;
            for (part, &r) in parts.iter().zip(rows) {
                let span = r * cols;
                add_into(sweep, nodes, *part, &gout[offset..offset + span]);
                offset += span;
            }
        }
        Op::LeakyRelu { x, slope } => {
            let xv = &nodes[x].value;
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for i in 0..gout.len() {
                    buf[i] += gout[i] * if xv[i] > 0.0 { 1.0 } else { slope };
                }
            }
        }
        Op::Sigmoid(x) => {
            // d sigma = sigma (1 - sigma); the forward value is on this node,
            // but we only have the input id here, so recompute from input.
            let xv = &nodes[x].value;
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for i in 0..gout.len() {
                    let s = sigmoid(xv[i]);
                    buf[i] += gout[i] * s * (1.0 - s);
                }
            }
        }
        Op::Ln(x) => {
            let xv = &nodes[x].value;
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for i in 0..gout.len() {
                    buf[i] += gout[i] / xv[i];
                }
            }
        }
        Op::Clamp { x, lo, hi } => {
            let xv = &nodes[x].value;
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for i in 0..gout.len() {
                    if xv[i] >= lo && xv[i] <= hi {
                        buf[i] += gout[i];
                    }
                }
            }
        }
        Op::MaxPoolTime {
            x,
            cols,
            ref argmax,
        } => {
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for (c, &t) in argmax.iter().enumerate() {
                    buf[c * cols + t] += gout[c];
                }
            }
        }
        Op::Upsample2 { x, cols } => {
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                let rows = nodes[x].value.len() / cols;
                for c in 0..rows {
                    for t in 0..cols {
                        buf[c * cols + t] +=
                            gout[c * 2 * cols + 2 * t] + gout[c * 2 * cols + 2 * t + 1];
                    }
                }
            }
        }
        Op::ReflectPad { x, cols, pad } => {
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                let rows = nodes[x].value.len() / cols;
                let padded = cols + 2 * pad;
                for c in 0..rows {
                    for i in 0..padded {
                        let src = kernels::reflect_index(i as isize - pad as isize, cols);
                        buf[c * cols + src] += gout[c * padded + i];
                    }
                }
            }
        }
        Op::Conv1d {
            input,
            kernel,
            bias,
            stride,
            padding,
            c_in,
            t_in,
            c_out,
            k,
            t_out,
        } => {
            if nodes[input].requires_grad {
                let kv = nodes[kernel].value.clone();
                if let Some(buf) = grad_buf(sweep, nodes, input) {
                    kernels::conv1d_backward_input(
                        gout, &kv, c_in, t_in, c_out, k, stride, padding, t_out, buf,
                    );
                }
            }
            if nodes[kernel].requires_grad {
                let iv = nodes[input].value.clone();
                if let Some(buf) = grad_buf(sweep, nodes, kernel) {
                    kernels::conv1d_backward_kernel(
                        gout, &iv, c_in, t_in, c_out, k, stride, padding, t_out, buf,
                    );
                }
            }
            if let Some(b) = bias {
                if let Some(buf) = grad_buf(sweep, nodes, b) {
                    kernels::conv1d_backward_bias(gout, c_out, t_out, buf);
                }
            }
        }
        Op::RotateProject {
            x,
            rot,
            joints,
            cols,
        } => {
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for j in 0..joints {
                    for r in 0..2 {
                        let grow = &gout[(2 * j + r) * cols..(2 * j + r + 1) * cols];
                        for a in 0..3 {
                            let w = rot[r][a];
                            let irow = &mut buf[(3 * j + a) * cols..(3 * j + a + 1) * cols];
                            for (gi, &g) in irow.iter_mut().zip(grow) {
                                *gi += w * g;
                            }
                        }
                    }
                }
            }
        }
        Op::RepeatCols { x, reps } => {
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for (c, b) in buf.iter_mut().enumerate() {
                    for r in 0..reps {
                        *b += gout[c * reps + r];
                    }
                }
            }
        }
        Op::TimeSlice { x, cols, index } => {
            if let Some(buf) = grad_buf(sweep, nodes, x) {
                for (c, &g) in gout.iter().enumerate() {
                    buf[c * cols + index] += g;
                }
            }
        }
        Op::Cosine(a, b) => {
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            let dot: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
            let na: f64 = av.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = bv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return; // defined as 0 with zero gradient
            }
            let g = gout[0];
            if nodes[a].requires_grad {
                let bvc = bv.clone();
                let avc = av.clone();
                if let Some(buf) = grad_buf(sweep, nodes, a) {
                    for i in 0..buf.len() {
                        buf[i] += g * (bvc[i] / (na * nb) - dot * avc[i] / (na * na * na * nb));
                    }
                }
            }
            if nodes[b].requires_grad {
                let bvc = bv.clone();
                let avc = av.clone();
                if let Some(buf) = grad_buf(sweep, nodes, b) {
                    for i in 0..buf.len() {
                        buf[i] += g * (avc[i] / (na * nb) - dot * bvc[i] / (nb * nb * nb * na));
                    }
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn shape(self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].shape.clone()
    }

    pub fn numel(self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    /// Copy out the node's value.
    pub fn value(self) -> Tensor {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        Tensor::new(node.shape.clone(), node.value.clone()).expect("node value consistent")
    }

    pub fn item(self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        assert_eq!(node.value.len(), 1, "item() on non-scalar var");
        node.value[0]
    }

    /// Accumulated gradient, if any backward pass has reached this node.
    pub fn grad(self) -> Option<Tensor> {
        let nodes = self.tape.nodes.borrow();
        let node = &nodes[self.id];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.shape.clone(), g.clone()).expect("grad shape consistent"))
    }

    /// Gradient as a tensor, zeros when the node was never reached.
    pub fn grad_or_zero(self) -> Tensor {
        self.grad().unwrap_or_else(|| {
            let nodes = self.tape.nodes.borrow();
            Tensor::zeros(nodes[self.id].shape.clone())
        })
    }

    pub fn backward(self) -> crate::Result<()> {
        self.tape.backward_from(self.id)
    }

    fn nodes(self) -> std::cell::Ref<'t, Vec<Node>> {
        self.tape.nodes.borrow()
    }

    fn unop(
        self,
        op: Op,
        shape: Vec<usize>,
        value: Vec<f64>,
        requires: bool,
    ) -> Var<'t> {
        self.tape.push(op, shape, value, requires)
    }

    fn same_shape(self, other: Var<'t>, op: &'static str) {
        let nodes = self.nodes();
        assert_eq!(
            nodes[self.id].shape, nodes[other.id].shape,
            "{op}: operand shapes differ"
        );
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        self.same_shape(other, "add");
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id]
                .value
                .iter()
                .zip(&nodes[other.id].value)
                .map(|(a, b)| a + b)
                .collect();
            (v, nodes[self.id].requires_grad || nodes[other.id].requires_grad)
        };
        self.unop(Op::Add(self.id, other.id), self.shape(), value, req)
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        self.same_shape(other, "sub");
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id]
                .value
                .iter()
                .zip(&nodes[other.id].value)
                .map(|(a, b)| a - b)
                .collect();
            (v, nodes[self.id].requires_grad || nodes[other.id].requires_grad)
        };
        self.unop(Op::Sub(self.id, other.id), self.shape(), value, req)
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        self.same_shape(other, "mul");
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id]
                .value
                .iter()
                .zip(&nodes[other.id].value)
                .map(|(a, b)| a * b)
                .collect();
            (v, nodes[self.id].requires_grad || nodes[other.id].requires_grad)
        };
        self.unop(Op::Mul(self.id, other.id), self.shape(), value, req)
    }

    /// `mul * x + add` elementwise.
    pub fn affine(self, mul: f64, add: f64) -> Var<'t> {
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id].value.iter().map(|a| mul * a + add).collect();
            (v, nodes[self.id].requires_grad)
        };
        self.unop(Op::Affine { x: self.id, mul }, self.shape(), value, req)
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        self.affine(factor, 0.0)
    }

    pub fn neg(self) -> Var<'t> {
        self.affine(-1.0, 0.0)
    }

    pub fn abs(self) -> Var<'t> {
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id].value.iter().map(|a| a.abs()).collect();
            (v, nodes[self.id].requires_grad)
        };
        self.unop(Op::Abs(self.id), self.shape(), value, req)
    }

    pub fn sum(self) -> Var<'t> {
        let (value, req) = {
            let nodes = self.nodes();
            (
                vec![nodes[self.id].value.iter().sum::<f64>()],
                nodes[self.id].requires_grad,
            )
        };
        self.unop(Op::Sum(self.id), vec![1], value, req)
    }

    pub fn mean(self) -> Var<'t> {
        let (value, req) = {
            let nodes = self.nodes();
            let n = nodes[self.id].value.len() as f64;
            (
                vec![nodes[self.id].value.iter().sum::<f64>() / n],
                nodes[self.id].requires_grad,
            )
        };
        self.unop(Op::Mean(self.id), vec![1], value, req)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id]
                .value
                .iter()
                .map(|&a| if a > 0.0 { a } else { slope * a })
                .collect();
            (v, nodes[self.id].requires_grad)
        };
        self.unop(
            Op::LeakyRelu {
                x: self.id,
                slope,
            },
            self.shape(),
            value,
            req,
        )
    }

    pub fn relu(self) -> Var<'t> {
        self.leaky_relu(0.0)
    }

    pub fn sigmoid(self) -> Var<'t> {
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id].value.iter().map(|&a| sigmoid(a)).collect();
            (v, nodes[self.id].requires_grad)
        };
        self.unop(Op::Sigmoid(self.id), self.shape(), value, req)
    }

    pub fn ln(self) -> Var<'t> {
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id].value.iter().map(|&a| a.ln()).collect();
            (v, nodes[self.id].requires_grad)
        };
        self.unop(Op::Ln(self.id), self.shape(), value, req)
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let (value, req) = {
            let nodes = self.nodes();
            let v = nodes[self.id].value.iter().map(|&a| a.clamp(lo, hi)).collect();
            (v, nodes[self.id].requires_grad)
        };
        self.unop(
            Op::Clamp {
                x: self.id,
                lo,
                hi,
            },
            self.shape(),
            value,
            req,
        )
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let (m, k) = self.value().rows_cols();
        let (k2, n) = other.value().rows_cols();
        assert_eq!(k, k2, "matmul: inner dimensions differ");
        let (value, req) = {
            let nodes = self.nodes();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for kk in 0..k {
                    let aik = a[i * k + kk];
                    for j in 0..n {
                        out[i * n + j] += aik * b[kk * n + j];
                    }
                }
            }
            (
                out,
                nodes[self.id].requires_grad || nodes[other.id].requires_grad,
            )
        };
        self.unop(
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
            vec![m, n],
            value,
            req,
        )
    }

    /// Concatenate `[C_i, T]` blocks along the channel axis.
    pub fn concat_rows(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat_rows: empty input");
        let tape = parts[0].tape;
        let mut rows = Vec::with_capacity(parts.len());
        let mut cols = None;
        let mut value = Vec::new();
        let mut req = false;
        {
            let nodes = tape.nodes.borrow();
            for p in parts {
                let (r, c) = match nodes[p.id].shape.len() {
                    2 => (nodes[p.id].shape[0], nodes[p.id].shape[1]),
                    other => panic!("concat_rows: rank {} input", other),
                };
                match cols {
                    None => cols = Some(c),
                    Some(c0) => assert_eq!(c0, c, "concat_rows: column counts differ"),
                }
                rows.push(r);
                value.extend_from_slice(&nodes[p.id].value);
                req |= nodes[p.id].requires_grad;
            }
        }
        let cols = cols.unwrap();
        let total_rows: usize = rows.iter().sum();
        tape.push(
            Op::ConcatRows {
                parts: parts.iter().map(|p| p.id).collect(),
                rows,
                cols,
            },
            vec![total_rows, cols],
            value,
            req,
        )
    }

    pub fn maxpool_time(self) -> Var<'t> {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "maxpool_time: expected [C, T]");
        let (rows, cols) = (shape[0], shape[1]);
        let (value, argmax, req) = {
            let nodes = self.nodes();
            let v = &nodes[self.id].value;
            let mut out = Vec::with_capacity(rows);
            let mut arg = Vec::with_capacity(rows);
            for c in 0..rows {
                let row = &v[c * cols..(c + 1) * cols];
                let mut best = row[0];
                let mut best_t = 0;
                for (t, &x) in row.iter().enumerate().skip(1) {
                    if x > best {
                        best = x;
                        best_t = t;
                    }
                }
                out.push(best);
                arg.push(best_t);
            }
            (out, arg, nodes[self.id].requires_grad)
        };
        self.unop(
            Op::MaxPoolTime {
                x: self.id,
                cols,
                argmax,
            },
            vec![rows],
            value,
            req,
        )
    }

    pub fn upsample2(self) -> Var<'t> {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "upsample2: expected [C, T]");
        let (rows, cols) = (shape[0], shape[1]);
        let (value, req) = {
            let nodes = self.nodes();
            let v = &nodes[self.id].value;
            let mut out = Vec::with_capacity(rows * cols * 2);
            for c in 0..rows {
                for t in 0..cols {
                    let x = v[c * cols + t];
                    out.push(x);
                    out.push(x);
                }
            }
            (out, nodes[self.id].requires_grad)
        };
        self.unop(
            Op::Upsample2 { x: self.id, cols },
            vec![rows, cols * 2],
            value,
            req,
        )
    }

    pub fn reflect_pad(self, pad: usize) -> Var<'t> {
        if pad == 0 {
            return self;
        }
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "reflect_pad: expected [C, T]");
        let (rows, cols) = (shape[0], shape[1]);
        assert!(cols >= 2, "reflect_pad: row too short");
        let padded = cols + 2 * pad;
        let (value, req) = {
            let nodes = self.nodes();
            let v = &nodes[self.id].value;
            let mut out = Vec::with_capacity(rows * padded);
            for c in 0..rows {
                let row = &v[c * cols..(c + 1) * cols];
                for i in 0..padded {
                    out.push(row[kernels::reflect_index(i as isize - pad as isize, cols)]);
                }
            }
            (out, nodes[self.id].requires_grad)
        };
        self.unop(
            Op::ReflectPad {
                x: self.id,
                cols,
                pad,
            },
            vec![rows, padded],
            value,
            req,
        )
    }

    /// 1-D cross-correlation over the time axis with zero padding.
    ///
    /// `self` is `[C_in, T]`, `kernel` is `[C_out, C_in, k]`, the result is
    /// `[C_out, T']` with `T' = floor((T + 2*padding - k)/stride) + 1`.
    pub fn conv1d(
        self,
        kernel: Var<'t>,
        bias: Option<Var<'t>>,
        stride: usize,
        padding: usize,
    ) -> crate::Result<Var<'t>> {
        let in_shape = self.shape();
        let k_shape = kernel.shape();
        if in_shape.len() != 2 || k_shape.len() != 3 {
            return Err(AutodiffError::shape(
                "conv1d",
                format!("input {:?}, kernel {:?}", in_shape, k_shape),
            ));
        }
        let (c_in, t_in) = (in_shape[0], in_shape[1]);
        let (c_out, kc_in, k) = (k_shape[0], k_shape[1], k_shape[2]);
        if kc_in != c_in {
            return Err(AutodiffError::shape(
                "conv1d",
                format!("kernel expects {} input channels, input has {}", kc_in, c_in),
            ));
        }
        if let Some(b) = bias {
            if b.numel() != c_out {
                return Err(AutodiffError::shape(
                    "conv1d",
                    format!("bias length {} != {} output channels", b.numel(), c_out),
                ));
            }
        }
        let Some(t_out) = kernels::conv1d_out_len(t_in, k, stride, padding) else {
            return Err(AutodiffError::invalid(
                "conv1d",
                format!("no output positions for T={t_in}, k={k}, stride={stride}, pad={padding}"),
            ));
        };
        let (value, req) = {
            let nodes = self.nodes();
            let mut out = vec![0.0; c_out * t_out];
            let bias_slice = bias.map(|b| nodes[b.id].value.clone());
            kernels::conv1d_forward(
                &nodes[self.id].value,
                c_in,
                t_in,
                &nodes[kernel.id].value,
                c_out,
                k,
                bias_slice.as_deref(),
                stride,
                padding,
                &mut out,
                t_out,
            );
            let mut req = nodes[self.id].requires_grad || nodes[kernel.id].requires_grad;
            if let Some(b) = bias {
                req |= nodes[b.id].requires_grad;
            }
            (out, req)
        };
        Ok(self.unop(
            Op::Conv1d {
                input: self.id,
                kernel: kernel.id,
                bias: bias.map(|b| b.id),
                stride,
                padding,
                c_in,
                t_in,
                c_out,
                k,
                t_out,
            },
            vec![c_out, t_out],
            value,
            req,
        ))
    }

    /// Apply a fixed 2x3 matrix to every (x, y, z) channel triple of a
    /// `[3J, T]` tensor, yielding `[2J, T]`.
    pub fn rotate_project(self, rot: [[f64; 3]; 2]) -> Var<'t> {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "rotate_project: expected [3J, T]");
        assert_eq!(shape[0] % 3, 0, "rotate_project: rows not a multiple of 3");
        let joints = shape[0] / 3;
        let cols = shape[1];
        let (value, req) = {
            let nodes = self.nodes();
            let v = &nodes[self.id].value;
            let mut out = vec![0.0; 2 * joints * cols];
            for j in 0..joints {
                for r in 0..2 {
                    let orow = &mut out[(2 * j + r) * cols..(2 * j + r + 1) * cols];
                    for a in 0..3 {
                        let w = rot[r][a];
                        let irow = &v[(3 * j + a) * cols..(3 * j + a + 1) * cols];
                        for (o, &x) in orow.iter_mut().zip(irow) {
                            *o += w * x;
                        }
                    }
                }
            }
            (out, nodes[self.id].requires_grad)
        };
        self.unop(
            Op::RotateProject {
                x: self.id,
                rot,
                joints,
                cols,
            },
            vec![2 * joints, cols],
            value,
            req,
        )
    }

    /// Broadcast a `[C]` vector to `[C, reps]` columns.
    pub fn repeat_cols(self, reps: usize) -> Var<'t> {
        let shape = self.shape();
        assert_eq!(shape.len(), 1, "repeat_cols: expected [C]");
        let rows = shape[0];
        let (value, req) = {
            let nodes = self.nodes();
            let v = &nodes[self.id].value;
            let mut out = Vec::with_capacity(rows * reps);
            for &x in v {
                out.extend(std::iter::repeat(x).take(reps));
            }
            (out, nodes[self.id].requires_grad)
        };
        self.unop(
            Op::RepeatCols { x: self.id, reps },
            vec![rows, reps],
            value,
            req,
        )
    }

    /// Extract column `index` of a `[C, T]` tensor as a `[C]` vector.
    pub fn time_slice(self, index: usize) -> Var<'t> {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "time_slice: expected [C, T]");
        let (rows, cols) = (shape[0], shape[1]);
        assert!(index < cols, "time_slice: index out of range");
        let (value, req) = {
            let nodes = self.nodes();
            let v = &nodes[self.id].value;
            let out = (0..rows).map(|c| v[c * cols + index]).collect();
            (out, nodes[self.id].requires_grad)
        };
        self.unop(
            Op::TimeSlice {
                x: self.id,
                cols,
                index,
            },
            vec![rows],
            value,
            req,
        )
    }

    /// Cosine similarity of two tensors viewed as flat vectors. A zero vector
    /// on either side yields 0 with zero gradient and bumps the tape's
    /// zero-hit counter.
    pub fn cosine_similarity(self, other: Var<'t>) -> Var<'t> {
        self.same_shape(other, "cosine_similarity");
        let (value, req) = {
            let nodes = self.nodes();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v = if na == 0.0 || nb == 0.0 {
                self.tape
                    .cosine_zero_hits
                    .set(self.tape.cosine_zero_hits.get() + 1);
                0.0
            } else {
                dot / (na * nb)
            };
            (
                vec![v],
                nodes[self.id].requires_grad || nodes[other.id].requires_grad,
            )
        };
        self.unop(Op::Cosine(self.id, other.id), vec![1], value, req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_product_gradient_is_other_factor() {
        let tape = Tape::new();
        let w = tape.param(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let x = tape.constant(Tensor::new(vec![3], vec![4.0, 5.0, 6.0]).unwrap());
        let loss = w.mul(x).sum();
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap().data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn disconnected_parameter_has_zero_gradient() {
        let tape = Tape::new();
        let w = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let lonely = tape.param(Tensor::new(vec![2], vec![9.0, 9.0]).unwrap());
        let loss = w.sum();
        loss.backward().unwrap();
        assert!(lonely.grad().is_none());
        assert_eq!(lonely.grad_or_zero().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let w = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        assert!(w.backward().is_err());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let tape = Tape::new();
        let w = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let loss = w.sum();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap().data(), &[2.0, 2.0]);
        tape.zero_grad();
        assert!(w.grad().is_none());
    }

    #[test]
    fn leaky_relu_matches_definition() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1], vec![-2.0]).unwrap());
        let y = x.leaky_relu(0.2);
        assert!((y.item() - (-0.4)).abs() < 1e-15);
    }

    #[test]
    fn maxpool_of_constant_row_is_constant_and_first_index_wins() {
        let tape = Tape::new();
        let x = tape.param(Tensor::new(vec![1, 4], vec![0.5; 4]).unwrap());
        let y = x.maxpool_time();
        assert_eq!(y.value().data(), &[0.5]);
        y.sum().backward().unwrap();
        // Tie broken toward the first time index.
        assert_eq!(x.grad().unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cosine_self_similarity_is_one_and_zero_vector_flagged() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![3], vec![0.3, -0.4, 1.1]).unwrap());
        assert!((a.cosine_similarity(a).item() - 1.0).abs() < 1e-12);
        let z = tape.constant(Tensor::zeros(vec![3]));
        assert_eq!(a.cosine_similarity(z).item(), 0.0);
        assert_eq!(tape.cosine_zero_hits(), 1);
    }

    #[test]
    fn identity_conv_kernel_passes_input_through() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 5], vec![1.0, -2.0, 3.0, 0.5, 4.0]).unwrap());
        let k = tape.constant(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
        let y = x.conv1d(k, None, 1, 0).unwrap();
        assert_eq!(y.value().data(), x.value().data());
    }

    #[test]
    fn three_stride2_layers_downsample_64_to_8() {
        let tape = Tape::new();
        let mut h = tape.constant(Tensor::zeros(vec![2, 64]));
        let k = tape.constant(Tensor::zeros(vec![2, 2, 8]));
        for _ in 0..3 {
            h = h.reflect_pad(3).conv1d(k, None, 2, 0).unwrap();
        }
        assert_eq!(h.shape(), vec![2, 8]);
    }
}
