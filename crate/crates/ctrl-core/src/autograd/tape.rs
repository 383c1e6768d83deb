//! The op tape: forward recording and reverse-mode gradient replay.

use crate::autograd::store::ParameterStore;
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReduceKind {
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// out[m,n] = a[m,k] @ b[k,n]
    Matmul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    /// out[n,d] = a[n,d] + row[1,d], broadcast over rows
    AddRow { a: Var, row: Var },
    /// Concatenation along the last axis; `widths` are the parts' last dims.
    Concat { parts: Vec<Var>, widths: Vec<usize> },
    Softplus { x: Var },
    Sigmoid { x: Var },
    SmoothL1 { x: Var },
    Scale { x: Var, c: f64 },
    Reduce { x: Var, kind: ReduceKind, axis: Option<usize>, rows: usize, cols: usize },
    /// Row k of the output is row k / times of the input (blockwise repeat).
    RepeatRows { x: Var, times: usize },
    /// Row k of the output is row k % n of the input (cyclic tiling).
    TileRows { x: Var, times: usize },
    GatherRows { x: Var, indices: Vec<usize> },
    Reshape { x: Var },
    /// Mean negative log softmax likelihood of `targets` over the rows.
    CrossEntropy { logits: Var, targets: Vec<usize>, rows: usize, cols: usize },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
    param_name: Option<String>,
}

/// A single-use computation graph. Build it during one forward pass, call
/// [`Tape::backward`] once, harvest gradients, then drop it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().unwrap_or(&1)
}

/// Numerically stable log(1 + exp(x)).
pub(crate) fn softplus_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smooth L1: 0.5 x^2 inside |x| < 1, |x| - 0.5 outside.
pub(crate) fn smooth_l1_scalar(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, param_name: Option<String>) -> Var {
        self.nodes.push(Node { op, shape, data, param_name });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Register a constant leaf (no gradient is reported for it).
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), None)
    }

    /// Register a `[1, d]` constant leaf from a slice.
    pub fn input_row(&mut self, values: &[f64]) -> Var {
        self.push(Op::Leaf, vec![1, values.len()], values.to_vec(), None)
    }

    /// Snapshot a named parameter from the store onto the tape.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        let t = store.get(name).ok_or_else(|| Error::UnknownKey {
            key: name.to_string(),
            suggestion: None,
        })?;
        Ok(self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), Some(name.to_string())))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].data.len()
    }

    /// The value of a single-element node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        if self.numel(v) != 1 {
            return Err(Error::InvalidArgument(format!(
                "scalar() on node of shape {:?}",
                self.shape(v)
            )));
        }
        Ok(self.nodes[v.0].data[0])
    }

    fn rank2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Dimension {
                op,
                lhs: format!("{other:?}"),
                rhs: "[rows, cols]".to_string(),
            }),
        }
    }

    // ── ops ──────────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.rank2(a, "matmul")?;
        let (k2, n) = self.rank2(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        matmul_kernel(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n, &mut out);
        Ok(self.push(Op::Matmul { a, b, m, k, n }, vec![m, n], out, None))
    }

    fn elementwise(&mut self, op_name: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op_name, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Op::Add { a, b }, self.nodes[a.0].shape.clone(), data, None))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(Op::Sub { a, b }, self.nodes[a.0].shape.clone(), data, None))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Op::Mul { a, b }, self.nodes[a.0].shape.clone(), data, None))
    }

    /// Broadcast-add a `[1, d]` row to every row of an `[n, d]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, d) = self.rank2(a, "add_row")?;
        let (r1, d2) = self.rank2(row, "add_row")?;
        if r1 != 1 || d != d2 {
            return Err(Error::dim("add_row", self.shape(a), self.shape(row)));
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .chunks(d)
            .flat_map(|chunk| chunk.iter().zip(&self.nodes[row.0].data).map(|(x, y)| x + y))
            .collect();
        Ok(self.push(Op::AddRow { a, row }, self.nodes[a.0].shape.clone(), data, None))
    }

    /// Concatenate along the last axis. All leading dims must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat: empty part list".into()));
        }
        let lead = &self.shape(parts[0])[..self.shape(parts[0]).len() - 1];
        let lead: Vec<usize> = lead.to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::dim("concat", self.shape(parts[0]), self.shape(p)));
            }
            widths.push(last_dim(s));
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[p.0].data[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(Op::Concat { parts: parts.to_vec(), widths }, shape, data, None))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| softplus_scalar(v)).collect();
        self.push(Op::Softplus { x }, self.nodes[x.0].shape.clone(), data, None)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| sigmoid_scalar(v)).collect();
        self.push(Op::Sigmoid { x }, self.nodes[x.0].shape.clone(), data, None)
    }

    pub fn smooth_l1(&mut self, x: Var) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| smooth_l1_scalar(v)).collect();
        self.push(Op::SmoothL1 { x }, self.nodes[x.0].shape.clone(), data, None)
    }

    /// Multiply every element by the constant `c`.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| v * c).collect();
        self.push(Op::Scale { x, c }, self.nodes[x.0].shape.clone(), data, None)
    }

    fn reduce(&mut self, x: Var, kind: ReduceKind, axis: Option<usize>) -> Result<Var> {
        let (rows, cols, shape) = match (axis, self.shape(x)) {
            (None, _) => {
                let n = self.numel(x);
                (1, n, vec![1])
            }
            (Some(0), [r, c]) => (*r, *c, vec![1, *c]),
            (Some(1), [r, c]) => (*r, *c, vec![*r, 1]),
            (Some(ax), s) => {
                return Err(Error::InvalidArgument(format!(
                    "reduce: axis {ax} invalid for shape {s:?}"
                )))
            }
        };
        let src = &self.nodes[x.0].data;
        let data = match axis {
            None => {
                let mut s = 0.0;
                for &v in src {
                    s += v;
                }
                vec![if kind == ReduceKind::Mean { s / src.len() as f64 } else { s }]
            }
            Some(0) => {
                let mut out = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        out[c] += src[r * cols + c];
                    }
                }
                if kind == ReduceKind::Mean {
                    for v in &mut out {
                        *v /= rows as f64;
                    }
                }
                out
            }
            Some(_) => {
                let mut out = vec![0.0; rows];
                for r in 0..rows {
                    for c in 0..cols {
                        out[r] += src[r * cols + c];
                    }
                }
                if kind == ReduceKind::Mean {
                    for v in &mut out {
                        *v /= cols as f64;
                    }
                }
                out
            }
        };
        Ok(self.push(Op::Reduce { x, kind, axis, rows, cols }, shape, data, None))
    }

    /// Sum over all elements (`axis: None`) or one axis of a matrix.
    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, ReduceKind::Sum, axis)
    }

    /// Mean over all elements (`axis: None`) or one axis of a matrix.
    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(x, ReduceKind::Mean, axis)
    }

    /// `[n, d]` -> `[n*times, d]`, each input row repeated `times` times in a block.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let (n, d) = self.rank2(x, "repeat_rows")?;
        let src = &self.nodes[x.0].data;
        let mut data = Vec::with_capacity(n * times * d);
        for r in 0..n {
            for _ in 0..times {
                data.extend_from_slice(&src[r * d..(r + 1) * d]);
            }
        }
        Ok(self.push(Op::RepeatRows { x, times }, vec![n * times, d], data, None))
    }

    /// `[n, d]` -> `[n*times, d]`, the whole row block tiled `times` times.
    pub fn tile_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let (n, d) = self.rank2(x, "tile_rows")?;
        let src = &self.nodes[x.0].data;
        let mut data = Vec::with_capacity(n * times * d);
        for _ in 0..times {
            data.extend_from_slice(src);
        }
        Ok(self.push(Op::TileRows { x, times }, vec![n * times, d], data, None))
    }

    /// Select rows by index (duplicates allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (n, d) = self.rank2(x, "gather_rows")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "gather_rows: index {bad} out of range for {n} rows"
            )));
        }
        let src = &self.nodes[x.0].data;
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            Op::GatherRows { x, indices: indices.to_vec() },
            vec![indices.len(), d],
            data,
            None,
        ))
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.numel(x) {
            return Err(Error::dim("reshape", self.shape(x), &shape));
        }
        let data = self.nodes[x.0].data.clone();
        Ok(self.push(Op::Reshape { x }, shape, data, None))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, cols) = self.rank2(logits, "cross_entropy")?;
        if targets.len() != rows {
            return Err(Error::InvalidArgument(format!(
                "cross_entropy: {} targets for {rows} rows",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::InvalidArgument(format!(
                "cross_entropy: target {bad} out of range for {cols} classes"
            )));
        }
        let src = &self.nodes[logits.0].data;
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &src[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            total += lse - row[t];
        }
        let value = total / rows as f64;
        Ok(self.push(
            Op::CrossEntropy { logits, targets: targets.to_vec(), rows, cols },
            vec![1],
            vec![value],
            None,
        ))
    }

    // ── backward ─────────────────────────────────────────────────────

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        let slot = &mut self.grads[v.0];
        match slot {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Reverse sweep from a scalar root. May be called once per tape.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.numel(root) != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward: root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        self.grads[root.0] = Some(vec![1.0]);
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = self.grads[idx].clone() else { continue };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul { a, b, m, k, n } => {
                    // dA = g @ B^T, dB = A^T @ g
                    let bdat = self.nodes[b.0].data.clone();
                    let adat = self.nodes[a.0].data.clone();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bdat[p * n + j];
                            }
                            da[i * k + p] = s;
                        }
                    }
                    self.accumulate(a, &da);
                    let mut db = vec![0.0; k * n];
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += adat[i * k + p] * g[i * n + j];
                            }
                            db[p * n + j] = s;
                        }
                    }
                    self.accumulate(b, &db);
                }
                Op::Add { a, b } => {
                    self.accumulate(a, &g);
                    self.accumulate(b, &g);
                }
                Op::Sub { a, b } => {
                    self.accumulate(a, &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    self.accumulate(b, &neg);
                }
                Op::Mul { a, b } => {
                    let da: Vec<f64> =
                        g.iter().zip(&self.nodes[b.0].data).map(|(gi, bi)| gi * bi).collect();
                    let db: Vec<f64> =
                        g.iter().zip(&self.nodes[a.0].data).map(|(gi, ai)| gi * ai).collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::AddRow { a, row } => {
                    self.accumulate(a, &g);
                    let d = last_dim(&self.nodes[row.0].shape);
                    let mut drow = vec![0.0; d];
                    for chunk in g.chunks(d) {
                        for (o, v) in drow.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                    self.accumulate(row, &drow);
                }
                Op::Concat { parts, widths } => {
                    let total: usize = widths.iter().sum();
                    let rows = g.len() / total;
                    let mut offset = 0;
                    for (&p, &w) in parts.iter().zip(&widths) {
                        let mut dp = vec![0.0; rows * w];
                        for r in 0..rows {
                            dp[r * w..(r + 1) * w]
                                .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        self.accumulate(p, &dp);
                        offset += w;
                    }
                }
                Op::Softplus { x } => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[x.0].data)
                        .map(|(gi, &xi)| gi * sigmoid_scalar(xi))
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Sigmoid { x } => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[idx].data)
                        .map(|(gi, &yi)| gi * yi * (1.0 - yi))
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::SmoothL1 { x } => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[x.0].data)
                        .map(|(gi, &xi)| gi * xi.clamp(-1.0, 1.0))
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Scale { x, c } => {
                    let dx: Vec<f64> = g.iter().map(|gi| gi * c).collect();
                    self.accumulate(x, &dx);
                }
                Op::Reduce { x, kind, axis, rows, cols } => {
                    let n = self.nodes[x.0].data.len();
                    let dx = match axis {
                        None => {
                            let f = match kind {
                                ReduceKind::Sum => g[0],
                                ReduceKind::Mean => g[0] / n as f64,
                            };
                            vec![f; n]
                        }
                        Some(0) => {
                            let div = if kind == ReduceKind::Mean { rows as f64 } else { 1.0 };
                            let mut dx = vec![0.0; n];
                            for r in 0..rows {
                                for c in 0..cols {
                                    dx[r * cols + c] = g[c] / div;
                                }
                            }
                            dx
                        }
                        Some(_) => {
                            let div = if kind == ReduceKind::Mean { cols as f64 } else { 1.0 };
                            let mut dx = vec![0.0; n];
                            for r in 0..rows {
                                for c in 0..cols {
                                    dx[r * cols + c] = g[r] / div;
                                }
                            }
                            dx
                        }
                    };
                    self.accumulate(x, &dx);
                }
                Op::RepeatRows { x, times } => {
                    let d = last_dim(&self.nodes[x.0].shape);
                    let n = self.nodes[x.0].data.len() / d;
                    let mut dx = vec![0.0; n * d];
                    for r in 0..n {
                        for t in 0..times {
                            let grow = &g[(r * times + t) * d..(r * times + t + 1) * d];
                            for (o, v) in dx[r * d..(r + 1) * d].iter_mut().zip(grow) {
                                *o += v;
                            }
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::TileRows { x, times } => {
                    let d = last_dim(&self.nodes[x.0].shape);
                    let n = self.nodes[x.0].data.len() / d;
                    let mut dx = vec![0.0; n * d];
                    for t in 0..times {
                        for r in 0..n {
                            let grow = &g[(t * n + r) * d..(t * n + r + 1) * d];
                            for (o, v) in dx[r * d..(r + 1) * d].iter_mut().zip(grow) {
                                *o += v;
                            }
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::GatherRows { x, indices } => {
                    let d = last_dim(&self.nodes[x.0].shape);
                    let n = self.nodes[x.0].data.len() / d;
                    let mut dx = vec![0.0; n * d];
                    for (k, &i) in indices.iter().enumerate() {
                        let grow = &g[k * d..(k + 1) * d];
                        for (o, v) in dx[i * d..(i + 1) * d].iter_mut().zip(grow) {
                            *o += v;
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::Reshape { x } => {
                    self.accumulate(x, &g);
                }
                Op::CrossEntropy { logits, targets, rows, cols } => {
                    let src = self.nodes[logits.0].data.clone();
                    let mut dl = vec![0.0; rows * cols];
                    let scale = g[0] / rows as f64;
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &src[r * cols..(r + 1) * cols];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                        for c in 0..cols {
                            let p = (row[c] - max).exp() / denom;
                            dl[r * cols + c] = scale * (p - if c == t { 1.0 } else { 0.0 });
                        }
                    }
                    self.accumulate(logits, &dl);
                }
            }
        }
        Ok(())
    }

    /// Gradient of a node after `backward`, if any flowed to it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Accumulate gradients into the store for every parameter leaf on this
    /// tape. Parameters the loss never reached receive zeros, so a following
    /// optimizer step sees every registered parameter as populated.
    pub fn write_grads(&self, store: &mut ParameterStore) -> Result<()> {
        for (idx, node) in self.nodes.iter().enumerate() {
            let Some(name) = &node.param_name else { continue };
            let tensor = store.get_mut(name).ok_or_else(|| Error::UnknownKey {
                key: name.clone(),
                suggestion: None,
            })?;
            match &self.grads[idx] {
                Some(g) => tensor.accumulate_grad(g),
                None => tensor.accumulate_grad(&vec![0.0; node.data.len()]),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: Vec<usize>, data: Vec<f64>) -> Var {
        let t = Tensor::new(shape, data).unwrap();
        tape.input(&t)
    }

    #[test]
    fn matmul_identity_and_hand_cases() {
        let mut tape = Tape::new();
        let eye = leaf(&mut tape, vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let m = leaf(&mut tape, vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]);
        let out = tape.matmul(eye, m).unwrap();
        assert_eq!(tape.value(out), &[3.0, 4.0, 5.0, 6.0]);

        let a = leaf(&mut tape, vec![1, 2], vec![1.0, 2.0]);
        let b = leaf(&mut tape, vec![2, 1], vec![3.0, 4.0]);
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out), &[11.0]);

        let z = leaf(&mut tape, vec![1, 1], vec![0.0]);
        let w = leaf(&mut tape, vec![1, 1], vec![123.0]);
        let out = tape.matmul(z, w).unwrap();
        assert_eq!(tape.value(out), &[0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2, 3], vec![0.0; 6]);
        let b = leaf(&mut tape, vec![2, 2], vec![0.0; 4]);
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn elementwise_identities() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2], vec![1.0, 2.0]);
        let zero = leaf(&mut tape, vec![2], vec![0.0, 0.0]);
        let one = leaf(&mut tape, vec![2], vec![1.0, 1.0]);
        let s = tape.add(a, zero).unwrap();
        assert_eq!(tape.value(s), &[1.0, 2.0]);
        let x = leaf(&mut tape, vec![2], vec![2.0, 3.0]);
        let y = leaf(&mut tape, vec![2], vec![4.0, 5.0]);
        let p = tape.mul(x, y).unwrap();
        assert_eq!(tape.value(p), &[8.0, 15.0]);
        let q = tape.mul(a, one).unwrap();
        assert_eq!(tape.value(q), &[1.0, 2.0]);
        let bad = leaf(&mut tape, vec![3], vec![0.0; 3]);
        assert!(tape.add(a, bad).is_err());
    }

    #[test]
    fn concat_cases() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![1, 2], vec![1.0, 2.0]);
        let b = leaf(&mut tape, vec![1, 1], vec![3.0]);
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.shape(c), &[1, 3]);
        assert_eq!(tape.value(c), &[1.0, 2.0, 3.0]);

        let single = tape.concat(&[a]).unwrap();
        assert_eq!(tape.value(single), tape.value(a));

        let three = tape.concat(&[a, a, a]).unwrap();
        assert_eq!(tape.shape(three), &[1, 6]);

        assert!(tape.concat(&[]).is_err());
        let tall = leaf(&mut tape, vec![2, 2], vec![0.0; 4]);
        assert!(tape.concat(&[a, tall]).is_err());
    }

    #[test]
    fn softplus_is_stable_and_correct() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![3], vec![0.0, -1000.0, 1000.0]);
        let y = tape.softplus(x);
        let v = tape.value(y);
        assert!((v[0] - (2.0f64).ln()).abs() < 1e-12);
        assert!(v[1].is_finite() && v[1].abs() < 1e-12);
        assert!((v[2] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn smooth_l1_values() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![3], vec![0.0, 0.5, 2.0]);
        let y = tape.smooth_l1(x);
        assert_eq!(tape.value(y), &[0.0, 0.125, 1.5]);
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![4], vec![1e12, -1e12, 1e-12, -1e-12]);
        let sp = tape.softplus(x);
        let sl = tape.smooth_l1(x);
        assert!(tape.value(sp).iter().all(|v| v.is_finite()));
        assert!(tape.value(sl).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn reduce_cases() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2], vec![2.0, 4.0]);
        let m = tape.mean(x, None).unwrap();
        assert_eq!(tape.value(m), &[3.0]);

        let z = leaf(&mut tape, vec![3], vec![0.0; 3]);
        let s = tape.sum(z, None).unwrap();
        assert_eq!(tape.value(s), &[0.0]);

        let single = leaf(&mut tape, vec![1], vec![7.5]);
        let ms = tape.mean(single, None).unwrap();
        assert_eq!(tape.value(ms), &[7.5]);

        let mat = leaf(&mut tape, vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let col = tape.mean(mat, Some(0)).unwrap();
        assert_eq!(tape.value(col), &[2.0, 3.0]);
        let row = tape.sum(mat, Some(1)).unwrap();
        assert_eq!(tape.value(row), &[3.0, 7.0]);
        assert!(tape.sum(mat, Some(2)).is_err());
    }

    #[test]
    fn repeat_tile_gather() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2, 1], vec![1.0, 2.0]);
        let rep = tape.repeat_rows(x, 2).unwrap();
        assert_eq!(tape.value(rep), &[1.0, 1.0, 2.0, 2.0]);
        let tile = tape.tile_rows(x, 2).unwrap();
        assert_eq!(tape.value(tile), &[1.0, 2.0, 1.0, 2.0]);
        let g = tape.gather_rows(x, &[1, 1, 0]).unwrap();
        assert_eq!(tape.value(g), &[2.0, 2.0, 1.0]);
        assert!(tape.gather_rows(x, &[2]).is_err());
    }

    #[test]
    fn backward_accumulates_through_shared_nodes() {
        // loss = sum(x * x) -> d/dx = 2x
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2], vec![3.0, -2.0]);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq, None).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[6.0, -4.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2], vec![1.0, 2.0]);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn cross_entropy_saturated_is_near_zero() {
        let mut tape = Tape::new();
        let logits = leaf(&mut tape, vec![1, 3], vec![100.0, 0.0, 0.0]);
        let ce = tape.cross_entropy(logits, &[0]).unwrap();
        assert!(tape.scalar(ce).unwrap() < 1e-12);
    }
}
