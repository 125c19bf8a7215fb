use super::rng::DropoutKey;
use super::tensor::{matmul_nt, matmul_raw, matmul_tn};
use super::{NumError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add {
        a: Var,
        b: Var,
        ia: Vec<usize>,
        ib: Vec<usize>,
    },
    Sub {
        a: Var,
        b: Var,
        ia: Vec<usize>,
        ib: Vec<usize>,
    },
    Mul {
        a: Var,
        b: Var,
        ia: Vec<usize>,
        ib: Vec<usize>,
    },
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Transpose {
        x: Var,
        rows: usize,
        cols: usize,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    LayerNorm {
        x: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        width: usize,
    },
    Softmax {
        x: Var,
        layout: AxisLayout,
    },
    Mean {
        x: Var,
        layout: AxisLayout,
    },
    Sum {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
        layouts: Vec<AxisLayout>,
        outer: usize,
        inner: usize,
    },
    Narrow {
        x: Var,
        layout: AxisLayout,
        start: usize,
        len: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
        width: usize,
    },
    Reshape {
        x: Var,
    },
    Bce {
        p: Var,
        label: f64,
        clamped: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Outer/axis/inner decomposition of a shape around one axis.
#[derive(Clone, Copy, Debug)]
struct AxisLayout {
    outer: usize,
    len: usize,
    inner: usize,
}

impl AxisLayout {
    fn of(shape: &[usize], axis: usize) -> Result<Self, NumError> {
        if axis >= shape.len() {
            return Err(NumError::Shape(format!(
                "axis {axis} out of range for shape {shape:?}"
            )));
        }
        Ok(Self {
            outer: shape[..axis].iter().product(),
            len: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        })
    }

    fn at(&self, o: usize, a: usize, i: usize) -> usize {
        (o * self.len + a) * self.inner + i
    }
}

/// Lower bound applied to probabilities before taking logs in the BCE loss.
pub const BCE_CLAMP: f64 = 1e-7;

/// Reverse-mode computation tape.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order and backward is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient; `None` until a backward pass has reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ----- elementwise with broadcasting -----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (shape, ia, ib) = broadcast_plan(self.value(a).shape(), self.value(b).shape())?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data = ia.iter().zip(&ib).map(|(&i, &j)| da[i] + db[j]).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Add { a, b, ia, ib }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (shape, ia, ib) = broadcast_plan(self.value(a).shape(), self.value(b).shape())?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data = ia.iter().zip(&ib).map(|(&i, &j)| da[i] - db[j]).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Sub { a, b, ia, ib }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (shape, ia, ib) = broadcast_plan(self.value(a).shape(), self.value(b).shape())?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data = ia.iter().zip(&ib).map(|(&i, &j)| da[i] * db[j]).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul { a, b, ia, ib }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(&[x]);
        self.push(value, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.rg(&[x]);
        self.push(value, Op::Sigmoid { x }, rg)
    }

    /// Inverted dropout. In eval mode (`train == false`) this returns `x`
    /// itself, so no node is recorded.
    pub fn dropout(
        &mut self,
        x: Var,
        p: f64,
        key: DropoutKey,
        train: bool,
    ) -> Result<Var, NumError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumError::Config(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.value(x).numel();
        let mask: Vec<f64> = key
            .uniforms(n)
            .into_iter()
            .map(|u| if u < p { 0.0 } else { keep })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    /// Normalizes the last axis to zero mean and unit variance (no affine part).
    pub fn layernorm(&mut self, x: Var, eps: f64) -> Result<Var, NumError> {
        let src = self.value(x);
        let width = *src
            .shape()
            .last()
            .ok_or_else(|| NumError::Shape("layernorm needs rank >= 1".into()))?;
        if width == 0 {
            return Err(NumError::EmptyInput("layernorm over an empty axis".into()));
        }
        let rows = src.numel() / width;
        let mut xhat = vec![0.0; src.numel()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &src.data()[r * width..(r + 1) * width];
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for (o, v) in xhat[r * width..(r + 1) * width].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let value = Tensor::new(src.shape().to_vec(), xhat.clone())?;
        let rg = self.rg(&[x]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                xhat,
                inv_std,
                width,
            },
            rg,
        ))
    }

    // ----- reductions and softmax -----

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, NumError> {
        let src = self.value(x);
        if src.data().iter().any(|v| v.is_nan()) {
            return Err(NumError::Numeric("softmax input contains NaN".into()));
        }
        let layout = AxisLayout::of(src.shape(), axis)?;
        let mut out = vec![0.0; src.numel()];
        for o in 0..layout.outer {
            for i in 0..layout.inner {
                let max = (0..layout.len)
                    .map(|a| src.data()[layout.at(o, a, i)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for a in 0..layout.len {
                    let idx = layout.at(o, a, i);
                    let e = (src.data()[idx] - max).exp();
                    out[idx] = e;
                    total += e;
                }
                for a in 0..layout.len {
                    out[layout.at(o, a, i)] /= total;
                }
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Softmax { x, layout }, rg))
    }

    /// Arithmetic mean over `axis`, which is removed from the shape.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var, NumError> {
        let src = self.value(x);
        let layout = AxisLayout::of(src.shape(), axis)?;
        if layout.len == 0 {
            return Err(NumError::EmptyInput("mean over an empty axis".into()));
        }
        let mut out = vec![0.0; layout.outer * layout.inner];
        for o in 0..layout.outer {
            for i in 0..layout.inner {
                let s: f64 = (0..layout.len)
                    .map(|a| src.data()[layout.at(o, a, i)])
                    .sum();
                out[o * layout.inner + i] = s / layout.len as f64;
            }
        }
        let mut shape = src.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Mean { x, layout }, rg))
    }

    /// Mean over rows of an `n×d` matrix.
    pub fn mean_pool(&mut self, x: Var) -> Result<Var, NumError> {
        if self.value(x).rank() != 2 {
            return Err(NumError::Shape(format!(
                "mean_pool expects a matrix, got {:?}",
                self.value(x).shape()
            )));
        }
        self.mean(x, 0)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    // ----- linear algebra and layout -----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(NumError::Shape(format!(
                "matmul inner dimensions differ: {m}×{k} · {k2}×{n}"
            )));
        }
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![m, n], data)?,
            Op::MatMul { a, b, m, k, n },
            rg,
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, NumError> {
        let (rows, cols) = self.value(x).dims2()?;
        let src = self.value(x).data();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = src[r * cols + c];
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(vec![cols, rows], data)?,
            Op::Transpose { x, rows, cols },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumError> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NumError> {
        let first = parts
            .first()
            .ok_or_else(|| NumError::EmptyInput("concat of zero tensors".into()))?;
        let base = self.value(*first).shape().to_vec();
        let mut layouts = Vec::with_capacity(parts.len());
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(NumError::Shape(format!(
                    "cannot concat {s:?} with {base:?} along axis {axis}"
                )));
            }
            let layout = AxisLayout::of(s, axis)?;
            total += layout.len;
            layouts.push(layout);
        }
        let outer = layouts[0].outer;
        let inner = layouts[0].inner;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, l) in parts.iter().zip(&layouts) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[o * l.len * inner..(o + 1) * l.len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                layouts,
                outer,
                inner,
            },
            rg,
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(
        &mut self,
        x: Var,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<Var, NumError> {
        let src = self.value(x);
        let layout = AxisLayout::of(src.shape(), axis)?;
        if start + len > layout.len {
            return Err(NumError::Shape(format!(
                "narrow [{start}, {}) exceeds axis length {}",
                start + len,
                layout.len
            )));
        }
        let mut data = Vec::with_capacity(layout.outer * len * layout.inner);
        for o in 0..layout.outer {
            let from = layout.at(o, start, 0);
            data.extend_from_slice(&src.data()[from..from + len * layout.inner]);
        }
        let mut shape = src.shape().to_vec();
        shape[axis] = len;
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Narrow {
                x,
                layout,
                start,
                len,
            },
            rg,
        ))
    }

    /// Row lookup into an embedding table `[rows×width]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumError> {
        let (rows, width) = self.value(table).dims2()?;
        if let Some(bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(NumError::Shape(format!(
                "row {bad} out of range for {rows} rows"
            )));
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * width);
        for &i in ids {
            data.extend_from_slice(&src[i * width..(i + 1) * width]);
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Tensor::new(vec![ids.len(), width], data)?,
            Op::Gather {
                table,
                ids: ids.to_vec(),
                width,
            },
            rg,
        ))
    }

    /// Binary cross-entropy of a single probability against a {0, 1} label.
    ///
    /// The probability is clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`; the
    /// gradient is evaluated at the clamped point and passed straight
    /// through to `p`.
    pub fn bce(&mut self, p: Var, label: f64) -> Result<Var, NumError> {
        if label != 0.0 && label != 1.0 {
            return Err(NumError::Label(label));
        }
        let prob = self.value(p).item()?;
        let clamped = prob.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let loss = bce_value(clamped, label);
        let rg = self.rg(&[p]);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { p, label, clamped }, rg))
    }

    // ----- backward -----

    /// Accumulates d(loss)/d(node) into every node that requires grad.
    ///
    /// Gradients add onto whatever a previous call left behind; call
    /// [`Tape::zero_grad`] between independent passes.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumError> {
        if self.value(loss).numel() != 1 {
            return Err(NumError::Rank(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut adj);
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(existing) => {
                    for (e, v) in existing.data_mut().iter_mut().zip(&g) {
                        *e += v;
                    }
                }
                None => node.grad = Some(Tensor::new(node.value.shape().to_vec(), g)?),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => {
                    for (a, c) in acc.iter_mut().zip(&contrib) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let numel = |v: Var| self.nodes[v.0].value.numel();

        match &node.op {
            Op::Leaf => {}
            Op::Add { a, b, ia, ib } | Op::Sub { a, b, ia, ib } => {
                let sign = if matches!(node.op, Op::Sub { .. }) {
                    -1.0
                } else {
                    1.0
                };
                let mut ga = vec![0.0; numel(*a)];
                let mut gb = vec![0.0; numel(*b)];
                for ((&i, &j), &gv) in ia.iter().zip(ib).zip(g) {
                    ga[i] += gv;
                    gb[j] += sign * gv;
                }
                send(*a, ga);
                send(*b, gb);
            }
            Op::Mul { a, b, ia, ib } => {
                let (da, db) = (val(*a), val(*b));
                let mut ga = vec![0.0; da.len()];
                let mut gb = vec![0.0; db.len()];
                for ((&i, &j), &gv) in ia.iter().zip(ib).zip(g) {
                    ga[i] += gv * db[j];
                    gb[j] += gv * da[i];
                }
                send(*a, ga);
                send(*b, gb);
            }
            Op::MatMul { a, b, m, k, n } => {
                if self.nodes[a.0].requires_grad {
                    send(*a, matmul_nt(g, val(*b), *m, *n, *k));
                }
                if self.nodes[b.0].requires_grad {
                    send(*b, matmul_tn(val(*a), g, *m, *k, *n));
                }
            }
            Op::Transpose { x, rows, cols } => {
                let mut gx = vec![0.0; rows * cols];
                for r in 0..*rows {
                    for c in 0..*cols {
                        gx[r * cols + c] = g[c * rows + r];
                    }
                }
                send(*x, gx);
            }
            Op::Relu { x } => {
                let gx = val(*x)
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                send(*x, gx);
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                send(
                    *x,
                    y.iter()
                        .zip(g)
                        .map(|(&s, &gv)| gv * s * (1.0 - s))
                        .collect(),
                );
            }
            Op::Scale { x, factor } => send(*x, g.iter().map(|v| v * factor).collect()),
            Op::Dropout { x, mask } => send(*x, g.iter().zip(mask).map(|(a, b)| a * b).collect()),
            Op::LayerNorm {
                x,
                xhat,
                inv_std,
                width,
            } => {
                let w = *width as f64;
                let mut gx = vec![0.0; g.len()];
                for (r, &is) in inv_std.iter().enumerate() {
                    let span = r * width..(r + 1) * width;
                    let gr = &g[span.clone()];
                    let xr = &xhat[span.clone()];
                    let sum_g: f64 = gr.iter().sum();
                    let sum_gx: f64 = gr.iter().zip(xr).map(|(a, b)| a * b).sum();
                    for ((o, &gv), &xv) in gx[span].iter_mut().zip(gr).zip(xr) {
                        *o = is / w * (w * gv - sum_g - xv * sum_gx);
                    }
                }
                send(*x, gx);
            }
            Op::Softmax { x, layout } => {
                let y = node.value.data();
                let mut gx = vec![0.0; y.len()];
                for o in 0..layout.outer {
                    for i in 0..layout.inner {
                        let dot: f64 = (0..layout.len)
                            .map(|a| {
                                let k = layout.at(o, a, i);
                                g[k] * y[k]
                            })
                            .sum();
                        for a in 0..layout.len {
                            let k = layout.at(o, a, i);
                            gx[k] = y[k] * (g[k] - dot);
                        }
                    }
                }
                send(*x, gx);
            }
            Op::Mean { x, layout } => {
                let mut gx = vec![0.0; numel(*x)];
                let scale = 1.0 / layout.len as f64;
                for o in 0..layout.outer {
                    for i in 0..layout.inner {
                        let gv = g[o * layout.inner + i] * scale;
                        for a in 0..layout.len {
                            gx[layout.at(o, a, i)] = gv;
                        }
                    }
                }
                send(*x, gx);
            }
            Op::Sum { x } => send(*x, vec![g[0]; numel(*x)]),
            Op::Concat {
                parts,
                layouts,
                outer,
                inner,
            } => {
                let total: usize = layouts.iter().map(|l| l.len).sum();
                let mut offset = 0;
                for (&p, l) in parts.iter().zip(layouts) {
                    let mut gp = Vec::with_capacity(numel(p));
                    for o in 0..*outer {
                        let from = (o * total + offset) * inner;
                        gp.extend_from_slice(&g[from..from + l.len * inner]);
                    }
                    offset += l.len;
                    send(p, gp);
                }
            }
            Op::Narrow {
                x,
                layout,
                start,
                len,
            } => {
                let mut gx = vec![0.0; numel(*x)];
                for o in 0..layout.outer {
                    let to = layout.at(o, *start, 0);
                    let from = o * len * layout.inner;
                    gx[to..to + len * layout.inner]
                        .copy_from_slice(&g[from..from + len * layout.inner]);
                }
                send(*x, gx);
            }
            Op::Gather { table, ids, width } => {
                let mut gt = vec![0.0; numel(*table)];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..*width {
                        gt[id * width + c] += g[r * width + c];
                    }
                }
                send(*table, gt);
            }
            Op::Reshape { x } => send(*x, g.to_vec()),
            Op::Bce { p, label, clamped } => {
                let d = -label / clamped + (1.0 - label) / (1.0 - clamped);
                send(*p, vec![g[0] * d]);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−[y·ln p + (1−y)·ln(1−p)]` with `p` clamped away from 0 and 1.
pub fn bce_value(p: f64, label: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Output shape, then per-element source indices into each operand.
type BroadcastPlan = (Vec<usize>, Vec<usize>, Vec<usize>);

/// Right-aligned (numpy-style) broadcast. Returns the output shape and, for
/// every output element, the flat source index into each operand.
fn broadcast_plan(a: &[usize], b: &[usize]) -> Result<BroadcastPlan, NumError> {
    if a == b {
        let n: usize = a.iter().product();
        let idx: Vec<usize> = (0..n).collect();
        return Ok((a.to_vec(), idx.clone(), idx));
    }
    let rank = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a), pad(b));
    let mut out = Vec::with_capacity(rank);
    for (&x, &y) in pa.iter().zip(&pb) {
        out.push(match (x, y) {
            _ if x == y => x,
            (1, _) => y,
            (_, 1) => x,
            _ => {
                return Err(NumError::Shape(format!(
                    "shapes {a:?} and {b:?} do not broadcast"
                )))
            }
        });
    }
    let strides = |s: &[usize]| {
        let mut st = vec![0; rank];
        let mut acc = 1;
        for d in (0..rank).rev() {
            st[d] = if s[d] == 1 { 0 } else { acc };
            acc *= s[d];
        }
        st
    };
    let (sa, sb) = (strides(&pa), strides(&pb));
    let n: usize = out.iter().product();
    let mut ia = Vec::with_capacity(n);
    let mut ib = Vec::with_capacity(n);
    let mut counter = vec![0usize; rank];
    for _ in 0..n {
        ia.push(counter.iter().zip(&sa).map(|(c, s)| c * s).sum());
        ib.push(counter.iter().zip(&sb).map(|(c, s)| c * s).sum());
        for d in (0..rank).rev() {
            counter[d] += 1;
            if counter[d] < out[d] {
                break;
            }
            counter[d] = 0;
        }
    }
    Ok((out, ia, ib))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_cases() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::eye(2));
        let m = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let out = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2, 1], &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[11.0]);

        let bad = tape.constant(t(&[3, 1], &[0.0; 3]));
        assert!(matches!(tape.matmul(a, bad), Err(NumError::Shape(_))));
    }

    #[test]
    fn elementwise_definitions() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z);
        assert_eq!(tape.value(s).item().unwrap(), 0.5);
    }

    #[test]
    fn broadcasting_bias_and_incompatible_shapes() {
        let mut tape = Tape::new();
        let m = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = tape.constant(Tensor::vector(vec![10.0, 20.0, 30.0]));
        let s = tape.add(m, b).unwrap();
        assert_eq!(tape.value(s).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let col = tape.constant(t(&[2, 1], &[1.0, 2.0]));
        let p = tape.mul(m, col).unwrap();
        assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 8.0, 10.0, 12.0]);
        let bad = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.add(m, bad), Err(NumError::Shape(_))));
    }

    #[test]
    fn layernorm_rows_have_zero_mean_unit_variance() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 4], &[1.0, 2.0, 3.0, 10.0, -5.0, 0.5, 7.0, 2.0]));
        let y = tape.layernorm(x, 1e-14).unwrap();
        for row in tape.value(y).data().chunks(4) {
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_symmetry_stability_and_nan() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let s = tape.softmax(x, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);

        let big = tape.constant(Tensor::vector(vec![1000.0, 0.0]));
        let s = tape.softmax(big, 0).unwrap();
        let v = tape.value(s).data();
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1] >= 0.0 && v[1] < 1e-300);

        let nan = tape.constant(Tensor::vector(vec![f64::NAN, 1.0]));
        assert!(matches!(tape.softmax(nan, 0), Err(NumError::Numeric(_))));
    }

    #[test]
    fn softmax_along_first_axis_sums_columns() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3, 2], &[0.3, -1.0, 2.0, 0.0, -0.5, 4.0]));
        let s = tape.softmax(x, 0).unwrap();
        let v = tape.value(s);
        for c in 0..2 {
            let total: f64 = (0..3).map(|r| v.get2(r, c)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_pool_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 2], &[1.0, 3.0, 3.0, 5.0]));
        let m = tape.mean_pool(x).unwrap();
        assert_eq!(tape.value(m).data(), &[2.0, 4.0]);
        let one = tape.constant(t(&[1, 3], &[1.5, -2.0, 7.0]));
        let m = tape.mean_pool(one).unwrap();
        assert_eq!(tape.value(m).data(), &[1.5, -2.0, 7.0]);
        let empty = tape.constant(Tensor::zeros(&[0, 3]));
        assert!(matches!(
            tape.mean_pool(empty),
            Err(NumError::EmptyInput(_))
        ));
    }

    #[test]
    fn bce_values_and_label_check() {
        assert!((bce_value(0.5, 1.0) - 2f64.ln()).abs() < 1e-12);
        assert!((bce_value(1.0 - 1e-7, 1.0) - 1e-7).abs() < 1e-12);
        assert!((bce_value(0.9, 0.0) - std::f64::consts::LN_10).abs() < 1e-6);
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::scalar(0.4));
        assert!(matches!(tape.bce(p, 0.5), Err(NumError::Label(_))));
    }

    #[test]
    fn backward_on_sum_and_accumulation() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = tape.add(x, x).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn rerunning_backward_without_reset_doubles() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.5, -1.5]));
        let w = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let y = tape.mul(x, w).unwrap();
        let y = tape.sigmoid(y);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        let once = tape.grad(x).unwrap().clone();
        tape.backward(s).unwrap();
        let twice = tape.grad(x).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
        tape.zero_grad();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &once);
        assert!(tape.grad(w).is_none(), "constants never accumulate");
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(NumError::Rank(_))));
    }

    #[test]
    fn dropout_eval_is_identity_and_train_is_seeded() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::full(&[4, 8], 1.0));
        let key = DropoutKey::new(7, 1, 3);
        assert_eq!(tape.dropout(x, 0.3, key, false).unwrap(), x);
        let a = tape.dropout(x, 0.3, key, true).unwrap();
        let b = tape.dropout(x, 0.3, key, true).unwrap();
        assert_eq!(tape.value(a), tape.value(b));
        let keep = 1.0 / 0.7;
        assert!(tape
            .value(a)
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - keep).abs() < 1e-15));
        let other = tape
            .dropout(x, 0.3, DropoutKey::new(7, 1, 4), true)
            .unwrap();
        assert_ne!(tape.value(a), tape.value(other));
        assert!(tape.dropout(x, 1.0, key, true).is_err());
    }

    #[test]
    fn concat_and_narrow_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(t(&[2, 1], &[5.0, 6.0]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 3]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let n = tape.narrow(c, 1, 1, 2).unwrap();
        assert_eq!(tape.value(n).data(), &[2.0, 5.0, 4.0, 6.0]);
        let r = tape.concat(&[a, a], 0).unwrap();
        assert_eq!(tape.value(r).shape(), &[4, 2]);
        assert!(tape.concat(&[a, b], 0).is_err());
    }
}
