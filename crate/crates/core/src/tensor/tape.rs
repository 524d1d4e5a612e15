use super::gemm::{gemm, Operand};
use super::lstm::{self, LstmSaved};
use super::{check_shape, matrix_dims, OpKind, Tensor, TensorError};

/// Floor applied to probabilities inside the log of the cross-entropy.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Transpose { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    MulConst { x: Var, factor: Vec<f64> },
    AddConst { x: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    GatherRows { x: Var, rows: Vec<usize> },
    SoftmaxRows { x: Var },
    CrossEntropy { p: Var, target: Vec<f64>, mask: Vec<f64> },
    Sum { x: Var },
    Lstm { xproj: Var, w_hidden: Var, saved: Box<LstmSaved> },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::Transpose { .. } => OpKind::Transpose,
            Op::Add { .. } => OpKind::Add,
            Op::Mul { .. } => OpKind::Mul,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::Sigmoid { .. } => OpKind::Sigmoid,
            Op::Tanh { .. } => OpKind::Tanh,
            Op::MulConst { .. } => OpKind::MulConst,
            Op::AddConst { .. } => OpKind::AddConst,
            Op::Concat { .. } => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::GatherRows { .. } => OpKind::GatherRows,
            Op::SoftmaxRows { .. } => OpKind::SoftmaxRows,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::Sum { .. } => OpKind::Sum,
            Op::Lstm { .. } => OpKind::LstmRecurrence,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b } | Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::AddBias { x, bias } => vec![*x, *bias],
            Op::Transpose { x }
            | Op::Sigmoid { x }
            | Op::Tanh { x }
            | Op::MulConst { x, .. }
            | Op::AddConst { x }
            | Op::Slice { x, .. }
            | Op::GatherRows { x, .. }
            | Op::SoftmaxRows { x }
            | Op::Sum { x } => vec![*x],
            Op::CrossEntropy { p, .. } => vec![*p],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Lstm {
                xproj, w_hidden, ..
            } => vec![*xproj, *w_hidden],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Records operations in execution order and replays their backward rules.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Vec<f64>>,
    fault: Option<OpKind>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `(outer, extent, inner)` of a row-major shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose backward rule for `kind` is deliberately wrong.
    ///
    /// Used by the gradient checker's negative control.
    #[doc(hidden)]
    pub fn with_fault(kind: OpKind) -> Self {
        Tape {
            fault: Some(kind),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        self.leaf_grads.push(Vec::new());
        Var(self.nodes.len() - 1)
    }

    /// Records a copy of `tensor` as a leaf.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: tensor.shape().to_vec(),
            value: tensor.values().to_vec(),
            requires_grad: tensor.requires_grad(),
            op: Op::Leaf,
        });
        self.leaf_grads.push(Vec::new());
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var, TensorError> {
        let t = Tensor::new(shape, values)?;
        Ok(self.leaf(&t))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Copy of a recorded value, carrying its gradient when it is a leaf.
    pub fn tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        let mut t = Tensor::new(node.shape.clone(), node.value.clone())
            .expect("recorded shapes are valid")
            .with_grad(node.requires_grad);
        if let Some(g) = self.grad(v) {
            t.grad_mut().copy_from_slice(g);
        }
        t
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        let g = &self.leaf_grads[v.0];
        (!g.is_empty()).then_some(g.as_slice())
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(Vec::clear);
    }

    fn dims(&self, op: &'static str, v: Var) -> Result<(usize, usize), TensorError> {
        matrix_dims(self.shape(v)).ok_or_else(|| TensorError::Shape {
            op,
            message: format!("expected a matrix, got shape {:?}", self.shape(v)),
        })
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Dimension {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims("matmul", a)?;
        let (k2, n) = self.dims("matmul", b)?;
        if k != k2 || self.shape(a).len() != 2 || self.shape(b).len() != 2 {
            return Err(TensorError::Dimension {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            Operand::new(self.value(a), m, k),
            Operand::new(self.value(b), k, n),
            &mut out,
            false,
        );
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims("transpose", x)?;
        let src = self.value(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(vec![n, m], out, Op::Transpose { x }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul { a, b }))
    }

    /// Adds a length-`n` bias to every row of an `m × n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (_, n) = self.dims("add_bias", x)?;
        if self.value(bias).len() != n {
            return Err(TensorError::Dimension {
                op: "add_bias",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % n])
            .collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias { x, bias }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::Sigmoid { x }))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::Tanh { x }))
    }

    /// Elementwise product with a constant (used for dropout masks).
    pub fn mul_const(&mut self, x: Var, factor: Vec<f64>) -> Result<Var, TensorError> {
        if factor.len() != self.value(x).len() {
            return Err(TensorError::Dimension {
                op: "mul_const",
                lhs: self.shape(x).to_vec(),
                rhs: vec![factor.len()],
            });
        }
        let out = self
            .value(x)
            .iter()
            .zip(&factor)
            .map(|(v, f)| v * f)
            .collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::MulConst { x, factor }))
    }

    /// Elementwise sum with a constant (used for additive attention masks).
    pub fn add_const(&mut self, x: Var, offset: &[f64]) -> Result<Var, TensorError> {
        if offset.len() != self.value(x).len() {
            return Err(TensorError::Dimension {
                op: "add_const",
                lhs: self.shape(x).to_vec(),
                rhs: vec![offset.len()],
            });
        }
        let out = self
            .value(x)
            .iter()
            .zip(offset)
            .map(|(v, c)| v + c)
            .collect();
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddConst { x }))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = *inputs.first().ok_or_else(|| TensorError::Shape {
            op: "concat",
            message: "no inputs".into(),
        })?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Shape {
                op: "concat",
                message: format!("axis {axis} out of range for shape {base:?}"),
            });
        }
        let mut extent = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(TensorError::Dimension {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            extent += s[axis];
        }
        let mut shape = base;
        shape[axis] = extent;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * extent * inner);
        for o in 0..outer {
            for &v in inputs {
                let block = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v)[o * block..(o + 1) * block]);
            }
        }
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        let src_shape = self.shape(x).to_vec();
        if axis >= src_shape.len() || start >= end || end > src_shape[axis] {
            return Err(TensorError::Shape {
                op: "slice",
                message: format!("range {start}..{end} on axis {axis} of {src_shape:?}"),
            });
        }
        let (outer, extent, inner) = split_axis(&src_shape, axis);
        let len = end - start;
        let src = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner;
            out.extend_from_slice(&src[base + start * inner..base + end * inner]);
        }
        let mut shape = src_shape;
        shape[axis] = len;
        Ok(self.push(shape, out, Op::Slice { x, axis, start }))
    }

    /// Selects rows of a matrix by index; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, TensorError> {
        let (m, n) = self.dims("gather_rows", x)?;
        if rows.is_empty() {
            return Err(TensorError::Shape {
                op: "gather_rows",
                message: "empty index list".into(),
            });
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(TensorError::Index { index: r, size: m });
            }
            out.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        Ok(self.push(
            vec![rows.len(), n],
            out,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Row-wise softmax with max subtraction. Entries of `-inf` receive zero
    /// weight; a row must keep at least one finite entry.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims("softmax_rows", x)?;
        let src = self.value(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(TensorError::Domain {
                    op: "softmax_rows",
                    message: format!("row {i} has no finite maximum"),
                });
            }
            let dst = &mut out[i * n..(i + 1) * n];
            let mut total = 0.0;
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - max).exp();
                total += *d;
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        Ok(self.push(self.shape(x).to_vec(), out, Op::SoftmaxRows { x }))
    }

    /// `-Σ_t Σ_l mask_t · y_{t,l} · ln max(p_{t,l}, ε)` over an `m × L` matrix.
    pub fn cross_entropy(&mut self, p: Var, target: &[f64], mask: &[f64]) -> Result<Var, TensorError> {
        let (m, n) = self.dims("cross_entropy", p)?;
        if target.len() != m * n || mask.len() != m {
            return Err(TensorError::Dimension {
                op: "cross_entropy",
                lhs: self.shape(p).to_vec(),
                rhs: vec![target.len(), mask.len()],
            });
        }
        let probs = self.value(p);
        if let Some(bad) = probs.iter().find(|v| **v < 0.0 || v.is_nan()) {
            return Err(TensorError::Domain {
                op: "cross_entropy",
                message: format!("probability {bad} is negative"),
            });
        }
        let mut loss = 0.0;
        for t in 0..m {
            if mask[t] == 0.0 {
                continue;
            }
            for l in 0..n {
                let y = target[t * n + l];
                if y != 0.0 {
                    loss -= mask[t] * y * probs[t * n + l].max(LOG_CLAMP).ln();
                }
            }
        }
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                p,
                target: target.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let total = self.value(x).iter().sum();
        Ok(self.push(vec![1], vec![total], Op::Sum { x }))
    }

    /// LSTM recurrence over `batch` sequences stored example-major in
    /// `xproj` (`[batch*steps × 4h]`, already holding `x·W_x + b`), with
    /// recurrent weights `w_hidden` (`[h × 4h]`). Returns `[batch*steps × h]`.
    pub fn lstm_recurrence(
        &mut self,
        xproj: Var,
        w_hidden: Var,
        batch: usize,
        reverse: bool,
    ) -> Result<Var, TensorError> {
        let (rows, g4) = self.dims("lstm_recurrence", xproj)?;
        let (hidden, g4w) = self.dims("lstm_recurrence", w_hidden)?;
        if g4 != 4 * hidden || g4w != g4 || batch == 0 || rows % batch != 0 {
            return Err(TensorError::Dimension {
                op: "lstm_recurrence",
                lhs: self.shape(xproj).to_vec(),
                rhs: self.shape(w_hidden).to_vec(),
            });
        }
        let steps = rows / batch;
        let (h, saved) = lstm::forward(
            self.value(xproj),
            self.value(w_hidden),
            batch,
            steps,
            hidden,
            reverse,
        );
        check_shape(&[rows, hidden])?;
        Ok(self.push(
            vec![rows, hidden],
            h,
            Op::Lstm {
                xproj,
                w_hidden,
                saved: Box::new(saved),
            },
        ))
    }

    /// Accumulates `∂loss/∂leaf` into every reachable leaf that requires a
    /// gradient. Gradients from repeated calls add up until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        self.backward_from(loss, vec![1.0])
    }

    /// Vector-Jacobian product: backpropagates `seed` as the gradient of
    /// `loss`, accumulating into the leaves like [`Tape::backward`].
    pub fn backward_from(&mut self, loss: Var, seed: Vec<f64>) -> Result<(), TensorError> {
        if seed.len() != self.nodes[loss.0].value.len() {
            return Err(TensorError::Dimension {
                op: "backward",
                lhs: self.nodes[loss.0].shape.clone(),
                rhs: vec![seed.len()],
            });
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        if !nodes[loss.0].requires_grad {
            return Ok(());
        }
        grads[loss.0] = seed;

        for id in (0..=loss.0).rev() {
            if grads[id].is_empty() {
                continue;
            }
            let mut g = std::mem::take(&mut grads[id]);
            let node = &nodes[id];
            if self.fault == Some(node.op.kind()) {
                g.iter_mut().for_each(|v| *v *= 1.5);
            }
            propagate(nodes, node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                let dst = &mut self.leaf_grads[id];
                if dst.is_empty() {
                    *dst = g;
                } else {
                    add_into(dst, &g);
                }
            }
        }
        Ok(())
    }
}

fn slot<'g>(grads: &'g mut [Vec<f64>], nodes: &[Node], v: Var) -> Option<&'g mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let buf = &mut grads[v.0];
    if buf.is_empty() {
        *buf = vec![0.0; node.value.len()];
    }
    Some(buf)
}

fn propagate(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Vec<f64>]) {
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
            let n = nodes[b.0].shape[1];
            if let Some(ga) = slot(grads, nodes, *a) {
                gemm(
                    Operand::new(g, m, n),
                    Operand::new(&nodes[b.0].value, k, n).t(),
                    ga,
                    true,
                );
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                gemm(
                    Operand::new(&nodes[a.0].value, m, k).t(),
                    Operand::new(g, m, n),
                    gb,
                    true,
                );
            }
        }
        Op::Transpose { x } => {
            let (m, n) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
            if let Some(gx) = slot(grads, nodes, *x) {
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] += g[j * m + i];
                    }
                }
            }
        }
        Op::Add { a, b } => {
            for v in [a, b] {
                if let Some(gv) = slot(grads, nodes, *v) {
                    add_into(gv, g);
                }
            }
        }
        Op::Mul { a, b } => {
            if let Some(ga) = slot(grads, nodes, *a) {
                for ((d, gi), bi) in ga.iter_mut().zip(g).zip(&nodes[b.0].value) {
                    *d += gi * bi;
                }
            }
            if let Some(gb) = slot(grads, nodes, *b) {
                for ((d, gi), ai) in gb.iter_mut().zip(g).zip(&nodes[a.0].value) {
                    *d += gi * ai;
                }
            }
        }
        Op::AddBias { x, bias } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                add_into(gx, g);
            }
            if let Some(gb) = slot(grads, nodes, *bias) {
                let n = gb.len();
                for (i, gi) in g.iter().enumerate() {
                    gb[i % n] += gi;
                }
            }
        }
        Op::Sigmoid { x } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                for ((d, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
        }
        Op::Tanh { x } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                for ((d, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                    *d += gi * (1.0 - yi * yi);
                }
            }
        }
        Op::MulConst { x, factor } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                for ((d, gi), f) in gx.iter_mut().zip(g).zip(factor) {
                    *d += gi * f;
                }
            }
        }
        Op::AddConst { x } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                add_into(gx, g);
            }
        }
        Op::Concat { inputs, axis } => {
            let (outer, extent, inner) = split_axis(&node.shape, *axis);
            let mut offset = 0;
            for v in inputs {
                let e = nodes[v.0].shape[*axis];
                if let Some(gv) = slot(grads, nodes, *v) {
                    for o in 0..outer {
                        let src = o * extent * inner + offset * inner;
                        add_into(&mut gv[o * e * inner..(o + 1) * e * inner], &g[src..src + e * inner]);
                    }
                }
                offset += e;
            }
        }
        Op::Slice { x, axis, start } => {
            let (outer, extent, inner) = split_axis(&nodes[x.0].shape, *axis);
            let len = node.shape[*axis];
            if let Some(gx) = slot(grads, nodes, *x) {
                for o in 0..outer {
                    let dst = o * extent * inner + start * inner;
                    add_into(&mut gx[dst..dst + len * inner], &g[o * len * inner..(o + 1) * len * inner]);
                }
            }
        }
        Op::GatherRows { x, rows } => {
            let n = node.shape[1];
            if let Some(gx) = slot(grads, nodes, *x) {
                for (i, &r) in rows.iter().enumerate() {
                    add_into(&mut gx[r * n..(r + 1) * n], &g[i * n..(i + 1) * n]);
                }
            }
        }
        Op::SoftmaxRows { x } => {
            let n = *node.shape.last().expect("rank >= 1");
            if let Some(gx) = slot(grads, nodes, *x) {
                for ((gr, yr), dr) in g.chunks(n).zip(y.chunks(n)).zip(gx.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += yi * (gi - dot);
                    }
                }
            }
        }
        Op::CrossEntropy { p, target, mask } => {
            let n = nodes[p.0].shape[1];
            let probs = &nodes[p.0].value;
            if let Some(gp) = slot(grads, nodes, *p) {
                for (i, (d, yv)) in gp.iter_mut().zip(target).enumerate() {
                    let pv = probs[i];
                    if *yv != 0.0 && pv > LOG_CLAMP {
                        *d -= g[0] * mask[i / n] * yv / pv;
                    }
                }
            }
        }
        Op::Sum { x } => {
            if let Some(gx) = slot(grads, nodes, *x) {
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Lstm {
            xproj,
            w_hidden,
            saved,
        } => {
            let (dx, dw) = lstm::backward(saved, &nodes[w_hidden.0].value, y, g);
            if let Some(gx) = slot(grads, nodes, *xproj) {
                add_into(gx, &dx);
            }
            if let Some(gw) = slot(grads, nodes, *w_hidden) {
                add_into(gw, &dw);
            }
        }
    }
}
