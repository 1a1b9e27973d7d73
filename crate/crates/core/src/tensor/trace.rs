//! Reverse-mode gradient trace. One trace per forward computation; values are
//! evaluated eagerly as nodes are appended, so intermediate results (needed
//! e.g. for scheduled sampling or the attack verification loop) can be read
//! back before `backward` runs.

use super::{matmul_abt_acc, matmul_acc, matmul_atb_acc, Tensor};

/// Handle to a node inside one [`Trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Value<'a> {
    Owned(Vec<f64>),
    Shared(&'a [f64]),
}

impl Value<'_> {
    fn as_slice(&self) -> &[f64] {
        match self {
            Value::Owned(v) => v,
            Value::Shared(s) => s,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// (r x c) + (1 x c), bias broadcast over rows.
    AddBias(Var, Var),
    /// Elementwise (Hadamard) product.
    Mul(Var, Var),
    /// a*x + b with scalar constants; the additive term has no backward role.
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    /// Fused log-softmax + negative log likelihood, weighted mean over rows.
    CrossEntropyRows { logits: Var, targets: Vec<usize>, weights: Vec<f64>, weight_sum: f64 },
    /// -sum(target * ln(pred)) over a probability row; pred entries clamped at tiny.
    CrossEntropyProbs { probs: Var, target: Vec<f64> },
    /// Row gather (also serves as embedding lookup). Backward scatter-adds.
    GatherRows { src: Var, rows: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    SliceCols { src: Var, start: usize },
    Reshape(Var),
    SumAll(Var),
    MeanAll(Var),
    L2Norm(Var),
    MeanRows(Var),
    /// Column-wise max over rows; ties resolve to the lowest row index.
    MaxRows { src: Var, argmax: Vec<usize> },
    /// Elementwise sign; gradient is zero everywhere.
    Sign,
}

struct Node<'a> {
    rows: usize,
    cols: usize,
    val: Value<'a>,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    op: Op,
}

/// A fresh computation trace per forward call.
pub struct Trace<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Trace<'a> {
    pub fn new() -> Self {
        Trace { nodes: Vec::with_capacity(64) }
    }

    fn push(&mut self, rows: usize, cols: usize, val: Vec<f64>, needs_grad: bool, op: Op) -> Var {
        debug_assert_eq!(rows * cols, val.len());
        self.nodes.push(Node { rows, cols, val: Value::Owned(val), grad: None, needs_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.nodes[v.0].val.as_slice()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let n = &self.nodes[v.0];
        assert_eq!((n.rows, n.cols), (1, 1), "scalar: node has shape ({}x{})", n.rows, n.cols);
        n.val.as_slice()[0]
    }

    /// Accumulated gradient for `v`, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Parameter leaf borrowing the tensor's storage; tracked for gradients.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            rows: t.rows(),
            cols: t.cols(),
            val: Value::Shared(t.data()),
            grad: None,
            needs_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned leaf.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>, needs_grad: bool) -> Var {
        assert_eq!(rows * cols, data.len(), "input: shape ({rows}x{cols}) vs data {}", data.len());
        self.push(rows, cols, data, needs_grad, Op::Leaf)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        self.input(rows, cols, data, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, ka) = self.shape(a);
        let (kb, n) = self.shape(b);
        assert_eq!(ka, kb, "matmul: inner dims ({m}x{ka}) vs ({kb}x{n})");
        let mut out = vec![0.0; m * n];
        matmul_acc(&mut out, self.value(a), self.value(b), m, ka, n);
        let ng = self.needs(a) || self.needs(b);
        self.push(m, n, out, ng, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.needs(a);
        self.push(c, r, out, ng, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let sa = self.shape(a);
        let sb = self.shape(b);
        assert_eq!(sa, sb, "add: shape ({}x{}) vs ({}x{})", sa.0, sa.1, sb.0, sb.1);
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let ng = self.needs(a) || self.needs(b);
        self.push(sa.0, sa.1, out, ng, Op::Add(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (r, c) = self.shape(a);
        let (br, bc) = self.shape(bias);
        assert_eq!((br, bc), (1, c), "add_bias: ({r}x{c}) + ({br}x{bc})");
        let bv = self.value(bias).to_vec();
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(c) {
            for (o, b) in row.iter_mut().zip(&bv) {
                *o += b;
            }
        }
        let ng = self.needs(a) || self.needs(bias);
        self.push(r, c, out, ng, Op::AddBias(a, bias))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let sa = self.shape(a);
        let sb = self.shape(b);
        assert_eq!(sa, sb, "mul: shape ({}x{}) vs ({}x{})", sa.0, sa.1, sb.0, sb.1);
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let ng = self.needs(a) || self.needs(b);
        self.push(sa.0, sa.1, out, ng, Op::Mul(a, b))
    }

    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| mul * x + add).collect();
        let ng = self.needs(a);
        self.push(r, c, out, ng, Op::Affine(a, mul))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let ng = self.needs(a);
        self.push(r, c, out, ng, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let ng = self.needs(a);
        self.push(r, c, out, ng, Op::Sigmoid(a))
    }

    /// Row-wise softmax, numerically shifted by the row max.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        assert!(c > 0, "softmax_rows: empty rows");
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(c) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let ng = self.needs(a);
        self.push(r, c, out, ng, Op::SoftmaxRows(a))
    }

    /// Weighted mean of per-row cross-entropy on logits: rows with weight 0 are
    /// masked out. Returns a scalar; requires at least one positive weight.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Var {
        let (r, c) = self.shape(logits);
        assert_eq!(targets.len(), r, "cross_entropy_rows: {} targets for {r} rows", targets.len());
        assert_eq!(weights.len(), r, "cross_entropy_rows: {} weights for {r} rows", weights.len());
        let weight_sum: f64 = weights.iter().sum();
        assert!(weight_sum > 0.0, "cross_entropy_rows: all rows masked");
        let vals = self.value(logits);
        let mut loss = 0.0;
        for (i, row) in vals.chunks_exact(c).enumerate() {
            if weights[i] == 0.0 {
                continue;
            }
            let t = targets[i];
            assert!(t < c, "cross_entropy_rows: target {t} out of range {c}");
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += weights[i] * (lse - row[t]);
        }
        loss /= weight_sum;
        let ng = self.needs(logits);
        self.push(
            1,
            1,
            vec![loss],
            ng,
            Op::CrossEntropyRows {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                weight_sum,
            },
        )
    }

    /// Cross-entropy of a predicted probability row against a target
    /// distribution: -sum(t * ln p). Zero-target entries contribute nothing.
    pub fn cross_entropy_probs(&mut self, probs: Var, target: &[f64]) -> Var {
        let (r, c) = self.shape(probs);
        assert_eq!((r, c), (1, target.len()), "cross_entropy_probs: ({r}x{c}) vs target {}", target.len());
        let vals = self.value(probs);
        let mut loss = 0.0;
        for (&p, &t) in vals.iter().zip(target) {
            if t != 0.0 {
                loss -= t * p.max(f64::MIN_POSITIVE).ln();
            }
        }
        let ng = self.needs(probs);
        self.push(1, 1, vec![loss], ng, Op::CrossEntropyProbs { probs, target: target.to_vec() })
    }

    /// Gather rows of `src` by index; doubles as embedding lookup.
    pub fn gather_rows(&mut self, src: Var, rows: &[usize]) -> Var {
        let (r, c) = self.shape(src);
        let vals = self.value(src);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            assert!(i < r, "gather_rows: row {i} out of range {r}");
            out.extend_from_slice(&vals[i * c..(i + 1) * c]);
        }
        let ng = self.needs(src);
        self.push(rows.len(), c, out, ng, Op::GatherRows { src, rows: rows.to_vec() })
    }

    /// Concatenate along axis 0 (stacking rows) or axis 1 (joining columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat: no parts");
        assert!(axis < 2, "concat: axis {axis}");
        let (r0, c0) = self.shape(parts[0]);
        let mut ng = false;
        if axis == 0 {
            let mut out = Vec::new();
            let mut rows = 0;
            for &p in parts {
                let (r, c) = self.shape(p);
                assert_eq!(c, c0, "concat axis 0: cols {c} vs {c0}");
                out.extend_from_slice(self.value(p));
                rows += r;
                ng |= self.needs(p);
            }
            self.push(rows, c0, out, ng, Op::Concat { parts: parts.to_vec(), axis })
        } else {
            let mut cols = 0;
            for &p in parts {
                let (r, c) = self.shape(p);
                assert_eq!(r, r0, "concat axis 1: rows {r} vs {r0}");
                cols += c;
                ng |= self.needs(p);
            }
            let mut out = vec![0.0; r0 * cols];
            let mut off = 0;
            for &p in parts {
                let (_, c) = self.shape(p);
                let vals = self.value(p);
                for i in 0..r0 {
                    out[i * cols + off..i * cols + off + c].copy_from_slice(&vals[i * c..(i + 1) * c]);
                }
                off += c;
            }
            self.push(r0, cols, out, ng, Op::Concat { parts: parts.to_vec(), axis })
        }
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(src);
        assert!(start + len <= c, "slice_cols: [{start}..{}] of {c} cols", start + len);
        let vals = self.value(src);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&vals[i * c + start..i * c + start + len]);
        }
        let ng = self.needs(src);
        self.push(r, len, out, ng, Op::SliceCols { src, start })
    }

    pub fn reshape(&mut self, src: Var, rows: usize, cols: usize) -> Var {
        let (r, c) = self.shape(src);
        assert_eq!(r * c, rows * cols, "reshape: ({r}x{c}) -> ({rows}x{cols})");
        let out = self.value(src).to_vec();
        let ng = self.needs(src);
        self.push(rows, cols, out, ng, Op::Reshape(src))
    }

    pub fn sum_all(&mut self, src: Var) -> Var {
        let s: f64 = self.value(src).iter().sum();
        let ng = self.needs(src);
        self.push(1, 1, vec![s], ng, Op::SumAll(src))
    }

    pub fn mean_all(&mut self, src: Var) -> Var {
        let n = self.value(src).len();
        let s: f64 = self.value(src).iter().sum();
        let ng = self.needs(src);
        self.push(1, 1, vec![s / n as f64], ng, Op::MeanAll(src))
    }

    pub fn l2_norm(&mut self, src: Var) -> Var {
        let s: f64 = self.value(src).iter().map(|v| v * v).sum::<f64>().sqrt();
        let ng = self.needs(src);
        self.push(1, 1, vec![s], ng, Op::L2Norm(src))
    }

    /// Column means over rows: (k x m) -> (1 x m).
    pub fn mean_rows(&mut self, src: Var) -> Var {
        let (r, c) = self.shape(src);
        let vals = self.value(src);
        let mut out = vec![0.0; c];
        for row in vals.chunks_exact(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o /= r as f64;
        }
        let ng = self.needs(src);
        self.push(1, c, out, ng, Op::MeanRows(src))
    }

    /// Column maxima over rows: (k x m) -> (1 x m); ties go to the lowest row.
    pub fn max_rows(&mut self, src: Var) -> Var {
        let (r, c) = self.shape(src);
        assert!(r > 0, "max_rows: empty");
        let vals = self.value(src);
        let mut out = vals[..c].to_vec();
        let mut argmax = vec![0usize; c];
        for i in 1..r {
            for j in 0..c {
                let v = vals[i * c + j];
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = i;
                }
            }
        }
        let ng = self.needs(src);
        self.push(1, c, out, ng, Op::MaxRows { src, argmax })
    }

    pub fn sign(&mut self, src: Var) -> Var {
        let (r, c) = self.shape(src);
        let out = self
            .value(src)
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();
        let ng = self.needs(src);
        self.push(r, c, out, ng, Op::Sign)
    }

    /// Reverse pass from a scalar output. Each pass propagates a unit seed in
    /// pass-local buffers and then merges into the persistent accumulators, so
    /// calling backward twice without a fresh trace doubles every gradient.
    pub fn backward(&mut self, out: Var) {
        {
            let n = &self.nodes[out.0];
            assert_eq!((n.rows, n.cols), (1, 1), "backward: output has shape ({}x{})", n.rows, n.cols);
        }
        let mut pass: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        pass[out.0] = Some(vec![1.0]);
        for idx in (0..=out.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = pass[idx].take() else { continue };
            self.backward_node(idx, &g, &mut pass);
            pass[idx] = Some(g);
        }
        for (node, p) in self.nodes.iter_mut().zip(pass) {
            if let Some(pg) = p {
                match &mut node.grad {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&pg) {
                            *a += v;
                        }
                    }
                    None => node.grad = Some(pg),
                }
            }
        }
    }

    fn acc_into(&self, pass: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut pass[v.0] {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(&delta) {
                    *gi += di;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn backward_node(&self, idx: usize, g: &[f64], pass: &mut [Option<Vec<f64>>]) {
        let (rows, cols) = (self.nodes[idx].rows, self.nodes[idx].cols);
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = self.shape(a);
                let n = cols;
                if self.needs(a) {
                    let mut da = vec![0.0; m * k];
                    matmul_abt_acc(&mut da, g, self.value(b), m, n, k);
                    self.acc_into(pass, a, da);
                }
                if self.needs(b) {
                    let mut db = vec![0.0; k * n];
                    matmul_atb_acc(&mut db, self.value(a), g, m, k, n);
                    self.acc_into(pass, b, db);
                }
            }
            Op::Transpose(a) => {
                let a = *a;
                let (r, c) = self.shape(a);
                let mut da = vec![0.0; r * c];
                for i in 0..rows {
                    for j in 0..cols {
                        da[j * c + i] = g[i * cols + j];
                    }
                }
                self.acc_into(pass, a, da);
            }
            Op::Add(a, b) => {
                self.acc_into(pass, *a, g.to_vec());
                self.acc_into(pass, *b, g.to_vec());
            }
            Op::AddBias(a, bias) => {
                self.acc_into(pass, *a, g.to_vec());
                if self.needs(*bias) {
                    let mut db = vec![0.0; cols];
                    for row in g.chunks_exact(cols) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.acc_into(pass, *bias, db);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let da: Vec<f64> = g.iter().zip(self.value(*b)).map(|(gi, bv)| gi * bv).collect();
                    self.acc_into(pass, *a, da);
                }
                if self.needs(*b) {
                    let db: Vec<f64> = g.iter().zip(self.value(*a)).map(|(gi, av)| gi * av).collect();
                    self.acc_into(pass, *b, db);
                }
            }
            Op::Affine(a, mul) => {
                let da: Vec<f64> = g.iter().map(|gi| gi * mul).collect();
                self.acc_into(pass, *a, da);
            }
            Op::Tanh(a) => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.nodes[idx].val.as_slice())
                    .map(|(gi, y)| gi * (1.0 - y * y))
                    .collect();
                self.acc_into(pass, *a, da);
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.nodes[idx].val.as_slice())
                    .map(|(gi, y)| gi * y * (1.0 - y))
                    .collect();
                self.acc_into(pass, *a, da);
            }
            Op::SoftmaxRows(a) => {
                let y = self.nodes[idx].val.as_slice();
                let mut da = vec![0.0; rows * cols];
                for i in 0..rows {
                    let yr = &y[i * cols..(i + 1) * cols];
                    let gr = &g[i * cols..(i + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                    for j in 0..cols {
                        da[i * cols + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.acc_into(pass, *a, da);
            }
            Op::CrossEntropyRows { logits, targets, weights, weight_sum } => {
                let (r, c) = self.shape(*logits);
                let vals = self.value(*logits);
                let scale = g[0] / weight_sum;
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    if weights[i] == 0.0 {
                        continue;
                    }
                    let row = &vals[i * c..(i + 1) * c];
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for (j, &v) in row.iter().enumerate() {
                        let e = (v - m).exp();
                        da[i * c + j] = e;
                        sum += e;
                    }
                    let w = weights[i] * scale;
                    for j in 0..c {
                        da[i * c + j] = w * (da[i * c + j] / sum);
                    }
                    da[i * c + targets[i]] -= w;
                }
                self.acc_into(pass, *logits, da);
            }
            Op::CrossEntropyProbs { probs, target } => {
                let vals = self.value(*probs);
                let da: Vec<f64> = vals
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| if t == 0.0 { 0.0 } else { -g[0] * t / p.max(f64::MIN_POSITIVE) })
                    .collect();
                self.acc_into(pass, *probs, da);
            }
            Op::GatherRows { src, rows: picked } => {
                if self.needs(*src) {
                    let (r, c) = self.shape(*src);
                    let mut da = vec![0.0; r * c];
                    for (i, &row) in picked.iter().enumerate() {
                        let dst = &mut da[row * c..(row + 1) * c];
                        for (d, v) in dst.iter_mut().zip(&g[i * c..(i + 1) * c]) {
                            *d += v;
                        }
                    }
                    self.acc_into(pass, *src, da);
                }
            }
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let chunk = g[off..off + r * c].to_vec();
                        self.acc_into(pass, p, chunk);
                        off += r * c;
                    }
                } else {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let mut dp = vec![0.0; r * c];
                        for i in 0..r {
                            dp[i * c..(i + 1) * c]
                                .copy_from_slice(&g[i * cols + off..i * cols + off + c]);
                        }
                        self.acc_into(pass, p, dp);
                        off += c;
                    }
                }
            }
            Op::SliceCols { src, start } => {
                let (r, c) = self.shape(*src);
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    da[i * c + start..i * c + start + cols].copy_from_slice(&g[i * cols..(i + 1) * cols]);
                }
                self.acc_into(pass, *src, da);
            }
            Op::Reshape(a) => {
                self.acc_into(pass, *a, g.to_vec());
            }
            Op::SumAll(a) => {
                let n = self.value(*a).len();
                self.acc_into(pass, *a, vec![g[0]; n]);
            }
            Op::MeanAll(a) => {
                let n = self.value(*a).len();
                self.acc_into(pass, *a, vec![g[0] / n as f64; n]);
            }
            Op::L2Norm(a) => {
                let norm = self.nodes[idx].val.as_slice()[0];
                let vals = self.value(*a);
                let da: Vec<f64> =
                    if norm > 0.0 { vals.iter().map(|v| g[0] * v / norm).collect() } else { vec![0.0; vals.len()] };
                self.acc_into(pass, *a, da);
            }
            Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g[j] / r as f64;
                    }
                }
                self.acc_into(pass, *a, da);
            }
            Op::MaxRows { src, argmax } => {
                let (r, c) = self.shape(*src);
                let mut da = vec![0.0; r * c];
                for (j, &i) in argmax.iter().enumerate() {
                    da[i * c + j] = g[j];
                }
                self.acc_into(pass, *src, da);
            }
            Op::Sign => {}
        }
    }
}

impl Default for Trace<'_> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut t = Trace::new();
        let x = t.input(1, 2, vec![0.0, 0.0], false);
        let s = t.softmax_rows(x);
        assert_eq!(t.value(s), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Trace::new();
        let x = t.input(3, 4, vec![1.0, -2.0, 0.5, 3.0, 100.0, 100.0, 100.0, 100.0, -9.0, 0.0, 9.0, 4.5], false);
        let s = t.softmax_rows(x);
        for row in t.value(s).chunks_exact(4) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn cross_entropy_of_exact_one_hot_is_zero() {
        let mut t = Trace::new();
        let p = t.input(1, 4, vec![0.0, 1.0, 0.0, 0.0], false);
        let ce = t.cross_entropy_probs(p, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.scalar(ce), 0.0);
    }

    #[test]
    fn matmul_shape_and_value() {
        let mut t = Trace::new();
        let a = t.input(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], false);
        let b = t.input(3, 1, vec![1.0, 0.0, -1.0], false);
        let c = t.matmul(a, b);
        assert_eq!(t.shape(c), (2, 1));
        assert_eq!(t.value(c), &[-2.0, -2.0]);
    }

    #[test]
    #[should_panic(expected = "matmul: inner dims")]
    fn matmul_mismatch_panics() {
        let mut t = Trace::new();
        let a = t.input(2, 3, vec![0.0; 6], false);
        let b = t.input(2, 2, vec![0.0; 4], false);
        let _ = t.matmul(a, b);
    }

    #[test]
    fn square_gradient() {
        // f(x) = x^2 via mul, x = 3 -> grad 6
        let mut t = Trace::new();
        let x = t.input(1, 1, vec![3.0], true);
        let y = t.mul(x, x);
        t.backward(y);
        assert_eq!(t.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn sum_of_softmax_has_zero_gradient() {
        let mut t = Trace::new();
        let x = t.input(1, 5, vec![0.3, -1.0, 2.0, 0.0, 0.7], true);
        let s = t.softmax_rows(x);
        let y = t.sum_all(s);
        t.backward(y);
        for &g in t.grad(x).unwrap() {
            assert!(g.abs() < 1e-12, "expected zero grad, got {g}");
        }
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut t = Trace::new();
        let x = t.input(1, 1, vec![2.0], true);
        let y = t.mul(x, x);
        t.backward(y);
        let g1 = t.grad(x).unwrap()[0];
        t.backward(y);
        let g2 = t.grad(x).unwrap()[0];
        assert_eq!(g2, 2.0 * g1);
    }

    #[test]
    fn unused_parameter_gets_no_gradient() {
        let mut t = Trace::new();
        let x = t.input(1, 1, vec![2.0], true);
        let unused = t.input(1, 3, vec![1.0, 2.0, 3.0], true);
        let y = t.mul(x, x);
        t.backward(y);
        assert!(t.grad(unused).is_none());
        assert_eq!(t.shape(unused), (1, 3));
    }

    #[test]
    fn concat_axis1_roundtrip_gradient() {
        let mut t = Trace::new();
        let a = t.input(2, 2, vec![1.0, 2.0, 3.0, 4.0], true);
        let b = t.input(2, 1, vec![5.0, 6.0], true);
        let c = t.concat(&[a, b], 1);
        assert_eq!(t.value(c), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = t.sum_all(c);
        t.backward(s);
        assert_eq!(t.grad(a).unwrap(), &[1.0; 4]);
        assert_eq!(t.grad(b).unwrap(), &[1.0; 2]);
    }

    #[test]
    fn max_rows_ties_take_lowest_row() {
        let mut t = Trace::new();
        let a = t.input(3, 2, vec![1.0, 7.0, 5.0, 7.0, 5.0, 2.0], true);
        let m = t.max_rows(a);
        assert_eq!(t.value(m), &[5.0, 7.0]);
        let s = t.sum_all(m);
        t.backward(s);
        // col 0 max at row 1 (first of the 5.0 tie), col 1 max at row 0.
        assert_eq!(t.grad(a).unwrap(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gather_rows_scatter_adds() {
        let mut t = Trace::new();
        let table = t.input(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], true);
        let picked = t.gather_rows(table, &[1, 1, 0]);
        let s = t.sum_all(picked);
        t.backward(s);
        assert_eq!(t.grad(table).unwrap(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn sign_blocks_gradient() {
        let mut t = Trace::new();
        let x = t.input(1, 3, vec![-2.0, 0.0, 5.0], true);
        let s = t.sign(x);
        assert_eq!(t.value(s), &[-1.0, 0.0, 1.0]);
        let y = t.sum_all(s);
        t.backward(y);
        assert!(t.grad(x).is_none());
    }
}
