//! Reverse-mode gradient tape.
//!
//! Every operation appends a node holding its forward value; `backward` walks
//! the node list once in reverse. Parameter leaves borrow their values from a
//! [`ParamStore`] instead of copying them onto the tape.

use std::collections::HashMap;

use super::kernels;
use super::{NumericsError, ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    /// `b` is either the same shape as `a` or a `1×d` row broadcast over `a`'s rows.
    Binary { kind: BinaryKind, a: Var, b: Var, broadcast: bool },
    Scale { a: Var, factor: f64 },
    Relu { a: Var },
    Tanh { a: Var },
    Concat { inputs: Vec<Var>, outer: usize, inner: usize, widths: Vec<usize> },
    GatherRows { a: Var, indices: Vec<usize>, cols: usize },
    Reshape { a: Var },
    ReduceAll { a: Var, how: Reduction },
    ReduceAxis { a: Var, how: Reduction, axis: usize, rows: usize, cols: usize },
    MinOverRows { a: Var, argmin: Vec<usize>, cols: usize },
    MaxOverRows { a: Var, argmax: Vec<Option<usize>>, cols: usize },
    Conv2d { input: Var, kernel: Var, geom: kernels::ConvGeometry },
    AddChannelBias { a: Var, bias: Var, plane: usize },
    PairedDistance { a: Var, b: Var, a_to_b: Vec<usize>, b_to_a: Vec<usize> },
}

struct Node {
    op: Op,
    value: Option<Tensor>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    leaves: HashMap<usize, Tensor>,
}

impl Gradients {
    /// Gradient for a parameter, `None` if the loss does not depend on it.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a plain leaf created with [`Graph::leaf`].
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.leaves.get(&var.0)
    }

    pub fn param_slots(&self) -> &[Option<Tensor>] {
        &self.params
    }

    /// Gradient map keyed by parameter name. Parameters the loss does not
    /// touch get an all-zero gradient of matching shape.
    pub fn by_name(&self, store: &ParamStore) -> HashMap<String, Tensor> {
        store
            .iter()
            .map(|(id, p)| {
                let g = self.param(id).cloned().unwrap_or_else(|| Tensor::zeros(p.tensor.shape()));
                (p.name.clone(), g)
            })
            .collect()
    }

    /// Dense per-parameter gradients with zeros for untouched parameters.
    pub fn into_dense(self, store: &ParamStore) -> Vec<Tensor> {
        let mut slots = self.params;
        slots.resize_with(store.len(), || None);
        slots
            .into_iter()
            .zip(store.iter())
            .map(|(g, (_, p))| g.unwrap_or_else(|| Tensor::zeros(p.tensor.shape())))
            .collect()
    }
}

/// Single-use gradient tape.
pub struct Graph<'p> {
    nodes: Vec<Node>,
    params: Option<&'p ParamStore>,
    param_vars: HashMap<ParamId, Var>,
    frozen: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> NumericsError {
    NumericsError::Shape { op, detail: format!("{a:?} vs {b:?}") }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), params: None, param_vars: HashMap::new(), frozen: false }
    }

    pub fn with_params(params: &'p ParamStore) -> Self {
        Self { nodes: Vec::new(), params: Some(params), param_vars: HashMap::new(), frozen: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => &self.params.expect("param node without store").get(*id).tensor,
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var, NumericsError> {
        if self.frozen {
            return Err(NumericsError::Contract("tape is frozen after backward".into()));
        }
        self.nodes.push(Node { op, value: Some(value) });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Non-parameter input. Its gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t).expect("leaf on frozen tape")
    }

    /// Parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Result<Var, NumericsError> {
        if let Some(v) = self.param_vars.get(&id) {
            return Ok(*v);
        }
        let store = self
            .params
            .ok_or_else(|| NumericsError::Contract("graph has no parameter store".into()))?;
        if id.0 >= store.len() {
            return Err(NumericsError::Contract(format!("unknown parameter {}", id.0)));
        }
        if self.frozen {
            return Err(NumericsError::Contract("tape is frozen after backward".into()));
        }
        self.nodes.push(Node { op: Op::Param(id), value: None });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(shape_err("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        self.push(Op::MatMul { a, b, m, k, n }, Tensor::new(vec![m, n], out)?)
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let broadcast = if ta.shape() == tb.shape() {
            false
        } else {
            match (ta.shape(), tb.shape()) {
                ([_, d], [1, d2]) if d == d2 => true,
                _ => return Err(shape_err("elementwise", ta.shape(), tb.shape())),
            }
        };
        let bd = tb.data();
        let cols = if broadcast { bd.len() } else { ta.len().max(1) };
        let f = match kind {
            BinaryKind::Add => |x: f64, y: f64| x + y,
            BinaryKind::Sub => |x: f64, y: f64| x - y,
            BinaryKind::Mul => |x: f64, y: f64| x * y,
        };
        let mut data = Vec::with_capacity(ta.len());
        for row in ta.data().chunks(cols) {
            data.extend(row.iter().zip(bd).map(|(&x, &y)| f(x, y)));
        }
        let shape = ta.shape().to_vec();
        self.push(Op::Binary { kind, a, b, broadcast }, Tensor::new(shape, data)?)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x * factor).collect();
        let shape = t.shape().to_vec();
        self.push(Op::Scale { a, factor }, Tensor::new(shape, data)?)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let shape = t.shape().to_vec();
        self.push(Op::Relu { a }, Tensor::new(shape, data)?)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x.tanh()).collect();
        let shape = t.shape().to_vec();
        self.push(Op::Tanh { a }, Tensor::new(shape, data)?)
    }

    /// `x·W + b` with `b` a `1×out` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
        let h = self.matmul(x, w)?;
        self.add(h, b)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, NumericsError> {
        let first = inputs
            .first()
            .ok_or_else(|| NumericsError::Domain("concat of zero tensors".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(NumericsError::Shape {
                op: "concat",
                detail: format!("axis {axis} out of range for {base:?}"),
            });
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut widths = Vec::with_capacity(inputs.len());
        for v in inputs {
            let s = self.value(*v).shape();
            let same_rank = s.len() == base.len();
            if !same_rank || s[..axis] != base[..axis] || s[axis + 1..] != base[axis + 1..] {
                return Err(shape_err("concat", &base, s));
            }
            widths.push(s[axis]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, w) in inputs.iter().zip(&widths) {
                let chunk = w * inner;
                data.extend_from_slice(&self.value(*v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(Op::Concat { inputs: inputs.to_vec(), outer, inner, widths }, Tensor::new(shape, data)?)
    }

    /// Rows of a matrix selected by index (duplicates allowed).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let (rows, cols) = t.dims2()?;
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(NumericsError::Shape {
                    op: "gather_rows",
                    detail: format!("row {i} out of range for {:?}", t.shape()),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(vec![indices.len(), cols], data)?;
        self.push(Op::GatherRows { a, indices: indices.to_vec(), cols }, out)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let idx: Vec<usize> = (start..end).collect();
        self.gather_rows(a, &idx)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        self.push(Op::Reshape { a }, t)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.reduce_all(a, Reduction::Sum)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.reduce_all(a, Reduction::Mean)
    }

    fn reduce_all(&mut self, a: Var, how: Reduction) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(NumericsError::Domain("reduction over an empty tensor".into()));
        }
        let s: f64 = t.data().iter().sum();
        let v = match how {
            Reduction::Sum => s,
            Reduction::Mean => s / t.len() as f64,
        };
        self.push(Op::ReduceAll { a, how }, Tensor::scalar(v))
    }

    /// Sum or mean of a matrix along `axis` (0 → `1×cols`, 1 → `rows×1`).
    pub fn reduce_axis(&mut self, a: Var, how: Reduction, axis: usize) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let (rows, cols) = t.dims2()?;
        let (len, out_shape) = match axis {
            0 => (rows, vec![1, cols]),
            1 => (cols, vec![rows, 1]),
            _ => {
                return Err(NumericsError::Shape {
                    op: "reduce_axis",
                    detail: format!("axis {axis} out of range for {:?}", t.shape()),
                })
            }
        };
        if len == 0 {
            return Err(NumericsError::Domain("empty reduction axis".into()));
        }
        let mut out = vec![0.0; out_shape[0] * out_shape[1]];
        for r in 0..rows {
            for c in 0..cols {
                let slot = if axis == 0 { c } else { r };
                out[slot] += t.data()[r * cols + c];
            }
        }
        if how == Reduction::Mean {
            out.iter_mut().for_each(|v| *v /= len as f64);
        }
        self.push(Op::ReduceAxis { a, how, axis, rows, cols }, Tensor::new(out_shape, out)?)
    }

    /// Column-wise mean of a matrix, `1×cols`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.reduce_axis(a, Reduction::Mean, 0)
    }

    /// Minimum of each row (`rows×1`) and its column index; lowest index wins ties.
    pub fn min_over_rows(&mut self, a: Var) -> Result<(Var, Vec<usize>), NumericsError> {
        let t = self.value(a);
        let (rows, cols) = t.dims2()?;
        if cols == 0 {
            return Err(NumericsError::Domain("min over an empty row".into()));
        }
        let mut vals = Vec::with_capacity(rows);
        let mut argmin = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = t.row(r);
            let mut best = 0;
            for (c, &x) in row.iter().enumerate().skip(1) {
                if x < row[best] {
                    best = c;
                }
            }
            vals.push(row[best]);
            argmin.push(best);
        }
        let out = Tensor::new(vec![rows, 1], vals)?;
        let v = self.push(Op::MinOverRows { a, argmin: argmin.clone(), cols }, out)?;
        Ok((v, argmin))
    }

    /// Column-wise max over the rows where `mask` is true, `1×cols`.
    /// With no selected rows the result is zero and carries no gradient.
    pub fn max_over_rows_masked(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, NumericsError> {
        let t = self.value(a);
        let (rows, cols) = t.dims2()?;
        if let Some(m) = mask {
            if m.len() != rows {
                return Err(NumericsError::Shape {
                    op: "max_over_rows",
                    detail: format!("mask of {} rows for {:?}", m.len(), t.shape()),
                });
            }
        }
        let mut argmax: Vec<Option<usize>> = vec![None; cols];
        for r in 0..rows {
            if mask.is_some_and(|m| !m[r]) {
                continue;
            }
            let row = t.row(r);
            for c in 0..cols {
                match argmax[c] {
                    Some(b) if t.data()[b * cols + c] >= row[c] => {}
                    _ => argmax[c] = Some(r),
                }
            }
        }
        let data = argmax
            .iter()
            .enumerate()
            .map(|(c, r)| r.map_or(0.0, |r| t.data()[r * cols + c]))
            .collect();
        let out = Tensor::new(vec![1, cols], data)?;
        self.push(Op::MaxOverRows { a, argmax, cols }, out)
    }

    /// Direct-loop 2-D cross-correlation of a `C_in×H×W` input with a
    /// `C_out×C_in×k×k` kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var, NumericsError> {
        let (ti, tk) = (self.value(input), self.value(kernel));
        let geom = kernels::ConvGeometry::new(ti.shape(), tk.shape(), stride, pad)?;
        let mut out = vec![0.0; geom.output_len()];
        kernels::conv2d_forward(&geom, ti.data(), tk.data(), &mut out);
        let shape = vec![geom.c_out, geom.h_out, geom.w_out];
        self.push(Op::Conv2d { input, kernel, geom }, Tensor::new(shape, out)?)
    }

    /// Adds one bias value per channel of a `C×H×W` tensor.
    pub fn add_channel_bias(&mut self, a: Var, bias: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let c = ta.shape().first().copied().unwrap_or(0);
        if ta.rank() != 3 || tb.len() != c {
            return Err(shape_err("add_channel_bias", ta.shape(), tb.shape()));
        }
        let plane = ta.len() / c.max(1);
        let data = ta.data().iter().enumerate().map(|(i, x)| x + tb.data()[i / plane]).collect();
        let shape = ta.shape().to_vec();
        self.push(Op::AddChannelBias { a, bias, plane }, Tensor::new(shape, data)?)
    }

    /// `Σ_i ‖a_i − b_{a_to_b[i]}‖ + Σ_j ‖b_j − a_{b_to_a[j]}‖` for `n×3`/`m×3` point sets.
    ///
    /// The pairing is supplied by the caller (e.g. nearest neighbours) and is
    /// treated as constant; the gradient of a zero-length pair is zero.
    pub fn paired_distance_sum(
        &mut self,
        a: Var,
        b: Var,
        a_to_b: &[usize],
        b_to_a: &[usize],
    ) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (na, ca) = ta.dims2()?;
        let (nb, cb) = tb.dims2()?;
        if ca != 3 || cb != 3 || a_to_b.len() != na || b_to_a.len() != nb {
            return Err(shape_err("paired_distance_sum", ta.shape(), tb.shape()));
        }
        if a_to_b.iter().any(|&j| j >= nb) || b_to_a.iter().any(|&i| i >= na) {
            return Err(NumericsError::Contract("pairing index out of range".into()));
        }
        // Two separate partial sums keep the result exactly symmetric in (a, b).
        let forward: f64 = a_to_b.iter().enumerate().map(|(i, &j)| kernels::dist3(ta.row(i), tb.row(j))).sum();
        let reverse: f64 = b_to_a.iter().enumerate().map(|(j, &i)| kernels::dist3(tb.row(j), ta.row(i))).sum();
        let total = forward + reverse;
        let op = Op::PairedDistance { a, b, a_to_b: a_to_b.to_vec(), b_to_a: b_to_a.to_vec() };
        self.push(op, Tensor::scalar(total))
    }

    /// Reverse sweep from a scalar loss. Freezes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NumericsError> {
        if self.frozen {
            return Err(NumericsError::Contract("backward already ran on this tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(NumericsError::Contract(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.frozen = true;
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Leaf | Op::Param(_) => {
                    grads[id] = Some(g);
                }
                op => self.backprop(op, id, &g, &mut grads),
            }
        }

        let mut out = Gradients::default();
        if let Some(store) = self.params {
            out.params = vec![None; store.len()];
        }
        for (id, node) in self.nodes.iter().enumerate() {
            let Some(g) = grads[id].take() else { continue };
            match node.op {
                Op::Param(pid) => {
                    let shape = self.value(Var(id)).shape().to_vec();
                    out.params[pid.0] = Some(Tensor::new(shape, g)?);
                }
                Op::Leaf => {
                    let shape = self.value(Var(id)).shape().to_vec();
                    out.leaves.insert(id, Tensor::new(shape, g)?);
                }
                _ => {}
            }
        }
        Ok(out)
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        let len = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn backprop(&self, op: &Op, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.nodes[id].value.as_ref().expect("op nodes own their value");
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                // dA += dC·Bᵀ
                let da = self.slot(grads, *a);
                kernels::gemm(*m, *n, *k, g, false, bv, true, da, 1.0);
                // dB += Aᵀ·dC
                let db = self.slot(grads, *b);
                kernels::gemm(*k, *m, *n, av, true, g, false, db, 1.0);
            }
            Op::Binary { kind, a, b, broadcast } => {
                let cols = if *broadcast { self.value(*b).len() } else { g.len().max(1) };
                match kind {
                    BinaryKind::Add | BinaryKind::Sub => {
                        let da = self.slot(grads, *a);
                        da.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                        let sign = if *kind == BinaryKind::Add { 1.0 } else { -1.0 };
                        let db = self.slot(grads, *b);
                        for row in g.chunks(cols) {
                            db.iter_mut().zip(row).for_each(|(d, x)| *d += sign * x);
                        }
                    }
                    BinaryKind::Mul => {
                        let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                        let da = self.slot(grads, *a);
                        for row in da.chunks_mut(cols).zip(g.chunks(cols)) {
                            row.0.iter_mut().zip(row.1).zip(bv).for_each(|((d, x), y)| *d += x * y);
                        }
                        let db = self.slot(grads, *b);
                        for (grow, arow) in g.chunks(cols).zip(av.chunks(cols)) {
                            db.iter_mut().zip(grow.iter().zip(arow)).for_each(|(d, (x, y))| *d += x * y);
                        }
                    }
                }
            }
            Op::Scale { a, factor } => {
                let da = self.slot(grads, *a);
                da.iter_mut().zip(g).for_each(|(d, x)| *d += factor * x);
            }
            Op::Relu { a } => {
                let y = out.data();
                let da = self.slot(grads, *a);
                for i in 0..g.len() {
                    if y[i] > 0.0 {
                        da[i] += g[i];
                    }
                }
            }
            Op::Tanh { a } => {
                let y = out.data();
                let da = self.slot(grads, *a);
                for i in 0..g.len() {
                    da[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }
            Op::Concat { inputs, outer, inner, widths } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (v, w) in inputs.iter().zip(widths) {
                    let chunk = w * inner;
                    let dv = self.slot(grads, *v);
                    for o in 0..*outer {
                        let src = &g[o * total * inner + offset..o * total * inner + offset + chunk];
                        dv[o * chunk..(o + 1) * chunk].iter_mut().zip(src).for_each(|(d, x)| *d += x);
                    }
                    offset += chunk;
                }
            }
            Op::GatherRows { a, indices, cols } => {
                let da = self.slot(grads, *a);
                for (r, &i) in indices.iter().enumerate() {
                    for c in 0..*cols {
                        da[i * cols + c] += g[r * cols + c];
                    }
                }
            }
            Op::Reshape { a } => {
                let da = self.slot(grads, *a);
                da.iter_mut().zip(g).for_each(|(d, x)| *d += x);
            }
            Op::ReduceAll { a, how } => {
                let n = self.value(*a).len();
                let s = match how {
                    Reduction::Sum => g[0],
                    Reduction::Mean => g[0] / n as f64,
                };
                self.slot(grads, *a).iter_mut().for_each(|d| *d += s);
            }
            Op::ReduceAxis { a, how, axis, rows, cols } => {
                let len = if *axis == 0 { *rows } else { *cols };
                let scale = if *how == Reduction::Mean { 1.0 / len as f64 } else { 1.0 };
                let da = self.slot(grads, *a);
                for r in 0..*rows {
                    for c in 0..*cols {
                        let slot = if *axis == 0 { c } else { r };
                        da[r * cols + c] += g[slot] * scale;
                    }
                }
            }
            Op::MinOverRows { a, argmin, cols } => {
                let da = self.slot(grads, *a);
                for (r, &c) in argmin.iter().enumerate() {
                    da[r * cols + c] += g[r];
                }
            }
            Op::MaxOverRows { a, argmax, cols } => {
                let da = self.slot(grads, *a);
                for (c, r) in argmax.iter().enumerate() {
                    if let Some(r) = r {
                        da[r * cols + c] += g[c];
                    }
                }
            }
            Op::Conv2d { input, kernel, geom } => {
                let (iv, kv) = (self.value(*input).data(), self.value(*kernel).data());
                let di = self.slot(grads, *input);
                kernels::conv2d_backward_input(geom, kv, g, di);
                let dk = self.slot(grads, *kernel);
                kernels::conv2d_backward_kernel(geom, iv, g, dk);
            }
            Op::AddChannelBias { a, bias, plane } => {
                let da = self.slot(grads, *a);
                da.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                let db = self.slot(grads, *bias);
                for (i, x) in g.iter().enumerate() {
                    db[i / plane] += x;
                }
            }
            Op::PairedDistance { a, b, a_to_b, b_to_a } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut da = vec![0.0; ta.len()];
                let mut db = vec![0.0; tb.len()];
                let pair = |p: &[f64], q: &[f64], dp: &mut [f64], dq: &mut [f64]| {
                    let d = kernels::dist3(p, q);
                    if d > 0.0 {
                        for c in 0..3 {
                            let u = g[0] * (p[c] - q[c]) / d;
                            dp[c] += u;
                            dq[c] -= u;
                        }
                    }
                };
                for (i, &j) in a_to_b.iter().enumerate() {
                    let (dp, dq) = (&mut da[i * 3..i * 3 + 3], &mut db[j * 3..j * 3 + 3]);
                    pair(ta.row(i), tb.row(j), dp, dq);
                }
                for (j, &i) in b_to_a.iter().enumerate() {
                    let (dq, dp) = (&mut db[j * 3..j * 3 + 3], &mut da[i * 3..i * 3 + 3]);
                    pair(tb.row(j), ta.row(i), dq, dp);
                }
                self.slot(grads, *a).iter_mut().zip(&da).for_each(|(d, x)| *d += x);
                self.slot(grads, *b).iter_mut().zip(&db).for_each(|(d, x)| *d += x);
            }
        }
    }
}
