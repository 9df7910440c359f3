//! Reverse-mode automatic differentiation over `f64` matrices.
//!
//! A [`Tape`] records a forward computation as a flat list of nodes; calling
//! [`Tape::backward`] on a scalar root accumulates gradients for every node.
//! All values are `Array2<f64>`: row vectors are 1×d, scalars 1×1. The op set
//! is exactly what the attention kernels, losses, and the small encoder need.

use ndarray::{Array2, Axis};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// n×d plus a broadcast 1×d row.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Matrix scaled by a 1×1 node.
    ScaleBy(NodeId, NodeId),
    RowSoftmax(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    SumAll(NodeId),
    GatherRows(NodeId, Vec<usize>),
    VStack(Vec<NodeId>),
    Row(NodeId, usize),
    L2NormalizeRows(NodeId),
    LayerNormRows(NodeId),
    /// Mean binary cross-entropy of logits against constant targets.
    BceWithLogits(NodeId, Array2<f64>),
}

const LN_EPS: f64 = 1e-5;
const L2_EPS: f64 = 1e-24;

pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
}

fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { values: Vec::new(), ops: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.values[id.0]
    }

    /// Scalar convenience accessor for 1×1 nodes.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.values[id.0];
        assert_eq!(v.dim(), (1, 1), "scalar() on non-1x1 node");
        v[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        NodeId(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.values[a.0].dot(&self.values[b.0]);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].t().to_owned();
        self.push(out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = &self.values[a.0] + &self.values[b.0];
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = &self.values[a.0] - &self.values[b.0];
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = &self.values[a.0] * &self.values[b.0];
        self.push(out, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let r = &self.values[row.0];
        assert_eq!(r.nrows(), 1, "add_row expects a 1×d row");
        let out = &self.values[a.0] + r;
        self.push(out, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = &self.values[a.0] * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let sv = self.values[s.0][[0, 0]];
        let out = &self.values[a.0] * sv;
        self.push(out, Op::ScaleBy(a, s))
    }

    /// Softmax along each row, numerically shifted by the row max.
    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a.0];
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push(out, Op::RowSoftmax(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].mapv(sigmoid_scalar);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].mapv(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let out = self.values[a.0].mapv(f64::ln);
        self.push(out, Op::Ln(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.values[a.0].sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = &self.values[table.0];
        let d = t.ncols();
        let mut out = Array2::zeros((ids.len(), d));
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).assign(&t.row(id));
        }
        self.push(out, Op::GatherRows(table, ids.to_vec()))
    }

    pub fn vstack(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "vstack of zero parts");
        let d = self.values[parts[0].0].ncols();
        let total: usize = parts.iter().map(|p| self.values[p.0].nrows()).sum();
        let mut out = Array2::zeros((total, d));
        let mut r = 0;
        for p in parts {
            let v = &self.values[p.0];
            out.slice_mut(ndarray::s![r..r + v.nrows(), ..]).assign(v);
            r += v.nrows();
        }
        self.push(out, Op::VStack(parts.to_vec()))
    }

    pub fn row(&mut self, a: NodeId, i: usize) -> NodeId {
        let out = self.values[a.0].row(i).to_owned().insert_axis(Axis(0));
        self.push(out, Op::Row(a, i))
    }

    pub fn l2_normalize_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a.0];
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let norm = (row.iter().map(|v| v * v).sum::<f64>() + L2_EPS).sqrt();
            row.mapv_inplace(|v| v / norm);
        }
        self.push(out, Op::L2NormalizeRows(a))
    }

    pub fn layer_norm_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.values[a.0];
        let d = x.ncols() as f64;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let sd = (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) / sd);
        }
        self.push(out, Op::LayerNormRows(a))
    }

    /// Mean over all entries of the stable binary cross-entropy
    /// `max(z,0) − z·t + ln(1 + exp(−|z|))`.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: Array2<f64>) -> NodeId {
        let z = &self.values[logits.0];
        assert_eq!(z.dim(), targets.dim(), "bce_with_logits shape mismatch");
        let n = z.len() as f64;
        let mut total = 0.0;
        for (&zi, &ti) in z.iter().zip(targets.iter()) {
            total += zi.max(0.0) - zi * ti + (-zi.abs()).exp().ln_1p();
        }
        self.push(Array2::from_elem((1, 1), total / n), Op::BceWithLogits(logits, targets))
    }

    /// Arithmetic mean of 1×1 nodes.
    pub fn mean_of(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty(), "mean_of zero nodes");
        let stacked = self.vstack(ids);
        let total = self.sum_all(stacked);
        self.scale(total, 1.0 / ids.len() as f64)
    }

    /// Accumulate gradients of a 1×1 root into every ancestor node.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(self.values[root.0].dim(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.values.len()];
        grads[root.0] = Some(Array2::from_elem((1, 1), 1.0));

        for i in (0..self.values.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[i] {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.values[b.0].t());
                    let gb = self.values[a.0].t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.t().to_owned()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * &self.values[b.0];
                    let gb = &g * &self.values[a.0];
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *row, grow);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, &g * *c),
                Op::ScaleBy(a, s) => {
                    let sv = self.values[s.0][[0, 0]];
                    let gs = (&g * &self.values[a.0]).sum();
                    accumulate(&mut grads, *a, &g * sv);
                    accumulate(&mut grads, *s, Array2::from_elem((1, 1), gs));
                }
                Op::RowSoftmax(a) => {
                    let y = &self.values[i];
                    let mut ga = Array2::zeros(y.raw_dim());
                    for (r, yrow) in y.rows().into_iter().enumerate() {
                        let grow = g.row(r);
                        let dot: f64 = yrow.iter().zip(grow.iter()).map(|(y, g)| y * g).sum();
                        for c in 0..y.ncols() {
                            ga[[r, c]] = yrow[c] * (grow[c] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let y = &self.values[i];
                    let ga = &g * &(y * &(1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let x = &self.values[a.0];
                    let mut ga = g;
                    ga.zip_mut_with(x, |gv, &xv| {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = &g * &self.values[i];
                    accumulate(&mut grads, *a, ga);
                }
                Op::Ln(a) => {
                    let ga = &g / &self.values[a.0];
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.values[a.0].raw_dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(table, ids) => {
                    let mut gt = Array2::zeros(self.values[table.0].raw_dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = gt.row_mut(id);
                        dst += &g.row(r);
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::VStack(parts) => {
                    let mut r = 0;
                    for p in parts {
                        let rows = self.values[p.0].nrows();
                        let gp = g.slice(ndarray::s![r..r + rows, ..]).to_owned();
                        accumulate(&mut grads, *p, gp);
                        r += rows;
                    }
                }
                Op::Row(a, idx) => {
                    let mut ga = Array2::zeros(self.values[a.0].raw_dim());
                    ga.row_mut(*idx).assign(&g.row(0));
                    accumulate(&mut grads, *a, ga);
                }
                Op::L2NormalizeRows(a) => {
                    let x = &self.values[a.0];
                    let mut ga = Array2::zeros(x.raw_dim());
                    for r in 0..x.nrows() {
                        let xrow = x.row(r);
                        let grow = g.row(r);
                        let norm = (xrow.iter().map(|v| v * v).sum::<f64>() + L2_EPS).sqrt();
                        let xg: f64 = xrow.iter().zip(grow.iter()).map(|(x, g)| x * g).sum();
                        for c in 0..x.ncols() {
                            ga[[r, c]] = grow[c] / norm - xrow[c] * xg / (norm * norm * norm);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LayerNormRows(a) => {
                    let x = &self.values[a.0];
                    let y = &self.values[i];
                    let d = x.ncols() as f64;
                    let mut ga = Array2::zeros(x.raw_dim());
                    for r in 0..x.nrows() {
                        let xrow = x.row(r);
                        let yrow = y.row(r);
                        let grow = g.row(r);
                        let mean = xrow.sum() / d;
                        let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                        let sd = (var + LN_EPS).sqrt();
                        let gmean = grow.sum() / d;
                        let gy: f64 = grow.iter().zip(yrow.iter()).map(|(g, y)| g * y).sum::<f64>() / d;
                        for c in 0..x.ncols() {
                            ga[[r, c]] = (grow[c] - gmean - yrow[c] * gy) / sd;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::BceWithLogits(logits, targets) => {
                    let z = &self.values[logits.0];
                    let n = z.len() as f64;
                    let scale = g[[0, 0]] / n;
                    let mut gz = Array2::zeros(z.raw_dim());
                    gz.zip_mut_with(z, |gv, &zv| *gv = sigmoid_scalar(zv));
                    gz -= targets;
                    gz *= scale;
                    accumulate(&mut grads, *logits, gz);
                }
            }
        }
        Gradients { inner: grads }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], id: NodeId, g: Array2<f64>) {
    match &mut grads[id.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Named parameter nodes bound onto a tape.
#[derive(Default)]
pub struct Bindings {
    map: std::collections::BTreeMap<String, NodeId>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, id: NodeId) {
        let prior = self.map.insert(name.to_string(), id);
        assert!(prior.is_none(), "parameter '{name}' bound twice");
    }

    /// Panics on unknown names: lookups are internal wiring, not user input.
    pub fn get(&self, name: &str) -> NodeId {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter '{name}' not bound"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`NodeId`].
pub struct Gradients {
    inner: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.inner[id.index()].as_ref()
    }

    /// Gradient of a node, zeros when the node does not influence the root.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Array2<f64> {
        match &self.inner[id.index()] {
            Some(g) => g.clone(),
            None => Array2::zeros(shape),
        }
    }
}
