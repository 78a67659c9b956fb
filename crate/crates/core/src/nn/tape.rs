//! The recorded computation tape.
//!
//! A tape is rebuilt for every forward pass; nodes hold dense `f64`
//! matrices. Scalars are `1x1`, vectors are `n x 1` or `1 x d`. Gradients
//! flow only into nodes reachable from a `requires_grad` leaf.

use crate::graph::{NeighborMean, SparseMat};
use crate::stats::CenteredReference;
use ndarray::Array2;
use std::sync::Arc;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    /// `(n x d) + (1 x d)` row broadcast.
    AddRow(Var, Var),
    /// `(n x d) * (1 x d)` row broadcast.
    MulRow(Var, Var),
    MatMul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    /// Elementwise `x^p`; inputs must stay positive when `p` is fractional.
    PowConst(Var, f64),
    /// Frobenius norm, a `1x1` scalar.
    FrobNorm(Var),
    /// Mean binary cross-entropy over all entries, probabilities clamped
    /// to `[1e-7, 1 - 1e-7]`; clamped entries get zero gradient.
    Bce { probs: Var, targets: Arc<Array2<f64>> },
    /// `V²(x, Y)` against a fixed double-centered reference. For a
    /// univariate `x` against a grouped reference the cross sums run in
    /// O(n log n); otherwise the pairwise distance matrix of `x` is cached
    /// for the backward pass.
    Dcov {
        x: Var,
        reference: Arc<CenteredReference>,
        dist: Option<Array2<f64>>,
    },
    /// Constant sparse symmetric matrix times dense.
    Spmm { m: Arc<SparseMat>, x: Var },
    /// Constant neighbor-mean (row-stochastic) matrix times dense.
    SpmmMean { m: Arc<NeighborMean>, x: Var },
    /// Dynamic symmetric matrix from per-edge and per-node coefficients.
    SpmmDyn {
        edges: Arc<Vec<(u32, u32)>>,
        coeffs: Var,
        diag: Var,
        x: Var,
    },
    /// Per-node sums of incident edge values.
    EdgeScatter { edges: Arc<Vec<(u32, u32)>>, w: Var },
    /// Per-edge products `c_e = w_e * s_i * s_j`.
    EdgeNormalize {
        edges: Arc<Vec<(u32, u32)>>,
        w: Var,
        s: Var,
    },
    /// Row gather.
    RowSelect { x: Var, idx: Arc<Vec<usize>> },
    /// Elementwise product with a fixed 0 / (1/keep) mask.
    Dropout { x: Var, mask: Arc<Array2<f64>> },
}

struct Node {
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    requires_grad: bool,
    op: Op,
}

/// A single forward recording; dropped and rebuilt every step.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) const BCE_CLAMP: f64 = 1e-7;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` root with respect to `v`; zero if
    /// the node was not reached.
    pub fn grad(&self, v: Var) -> Array2<f64> {
        match &self.nodes[v.0].grad {
            Some(g) => g.clone(),
            None => Array2::zeros(self.nodes[v.0].value.dim()),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "expected scalar node");
        val[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let rg = self.requires(a) || self.requires(b);
        self.push(v, rg, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let rg = self.requires(a) || self.requires(b);
        self.push(v, rg, Op::Sub(a, b))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let rg = self.requires(a) || self.requires(b);
        self.push(v, rg, Op::MulElem(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (n, d) = self.nodes[a.0].value.dim();
        assert_eq!(self.nodes[row.0].value.dim(), (1, d), "row broadcast shape");
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..n {
            for j in 0..d {
                v[[i, j]] += self.nodes[row.0].value[[0, j]];
            }
        }
        let rg = self.requires(a) || self.requires(row);
        self.push(v, rg, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (n, d) = self.nodes[a.0].value.dim();
        assert_eq!(self.nodes[row.0].value.dim(), (1, d), "row broadcast shape");
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..n {
            for j in 0..d {
                v[[i, j]] *= self.nodes[row.0].value[[0, j]];
            }
        }
        let rg = self.requires(a) || self.requires(row);
        self.push(v, rg, Op::MulRow(a, row))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let rg = self.requires(a) || self.requires(b);
        self.push(v, rg, Op::MatMul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x * c);
        let rg = self.requires(a);
        self.push(v, rg, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x + c);
        let rg = self.requires(a);
        self.push(v, rg, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        let rg = self.requires(a);
        self.push(v, rg, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(stable_sigmoid);
        let rg = self.requires(a);
        self.push(v, rg, Op::Sigmoid(a))
    }

    pub fn pow_const(&mut self, a: Var, p: f64) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.powf(p));
        let rg = self.requires(a);
        self.push(v, rg, Op::PowConst(a, p))
    }

    pub fn frob_norm(&mut self, a: Var) -> Var {
        let norm = self.nodes[a.0].value.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rg = self.requires(a);
        self.push(
            Array2::from_elem((1, 1), norm),
            rg,
            Op::FrobNorm(a),
        )
    }

    pub fn bce_loss(&mut self, probs: Var, targets: Arc<Array2<f64>>) -> Var {
        let p = &self.nodes[probs.0].value;
        assert_eq!(p.dim(), targets.dim(), "bce shape");
        let count = (p.nrows() * p.ncols()) as f64;
        let mut acc = 0.0;
        for (pv, tv) in p.iter().zip(targets.iter()) {
            let ph = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            acc -= tv * ph.ln() + (1.0 - tv) * (1.0 - ph).ln();
        }
        let rg = self.requires(probs);
        self.push(
            Array2::from_elem((1, 1), acc / count),
            rg,
            Op::Bce { probs, targets },
        )
    }

    pub fn dcov_loss(&mut self, x: Var, reference: Arc<CenteredReference>) -> Var {
        let xv = &self.nodes[x.0].value;
        let n = xv.nrows();
        assert_eq!(reference.n(), n, "dcov sample count");
        let p = xv.ncols();
        let (value, dist) = if p == 1 && reference.grouped().is_some() {
            (dcov_univariate_grouped_forward(xv, &reference), None)
        } else {
            let mut dist = Array2::zeros((n, n));
            let mut acc = 0.0;
            for k in 0..n {
                for l in (k + 1)..n {
                    let mut sq = 0.0;
                    for c in 0..p {
                        let diff = xv[[k, c]] - xv[[l, c]];
                        sq += diff * diff;
                    }
                    let d = sq.sqrt();
                    dist[[k, l]] = d;
                    dist[[l, k]] = d;
                    acc += 2.0 * d * reference.b(k, l);
                }
            }
            ((acc / (n as f64 * n as f64)).max(0.0), Some(dist))
        };
        let rg = self.requires(x);
        self.push(
            Array2::from_elem((1, 1), value),
            rg,
            Op::Dcov { x, reference, dist },
        )
    }

    pub fn spmm(&mut self, m: Arc<SparseMat>, x: Var) -> Var {
        let v = m.matmul(&self.nodes[x.0].value);
        let rg = self.requires(x);
        self.push(v, rg, Op::Spmm { m, x })
    }

    pub fn spmm_mean(&mut self, m: Arc<NeighborMean>, x: Var) -> Var {
        let v = m.matmul(&self.nodes[x.0].value);
        let rg = self.requires(x);
        self.push(v, rg, Op::SpmmMean { m, x })
    }

    pub fn spmm_dyn(
        &mut self,
        edges: Arc<Vec<(u32, u32)>>,
        coeffs: Var,
        diag: Var,
        x: Var,
    ) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, d) = xv.dim();
        let cv = &self.nodes[coeffs.0].value;
        let dv = &self.nodes[diag.0].value;
        assert_eq!(cv.dim(), (edges.len(), 1), "edge coeff shape");
        assert_eq!(dv.dim(), (n, 1), "diag shape");
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let w = dv[[i, 0]];
            for c in 0..d {
                out[[i, c]] = w * xv[[i, c]];
            }
        }
        for (e, &(a, b)) in edges.iter().enumerate() {
            let w = cv[[e, 0]];
            let (a, b) = (a as usize, b as usize);
            for c in 0..d {
                out[[a, c]] += w * xv[[b, c]];
                out[[b, c]] += w * xv[[a, c]];
            }
        }
        let rg = self.requires(coeffs) || self.requires(diag) || self.requires(x);
        self.push(out, rg, Op::SpmmDyn { edges, coeffs, diag, x })
    }

    pub fn edge_scatter(&mut self, edges: Arc<Vec<(u32, u32)>>, n: usize, w: Var) -> Var {
        let wv = &self.nodes[w.0].value;
        assert_eq!(wv.dim(), (edges.len(), 1), "edge weight shape");
        let mut out = Array2::zeros((n, 1));
        for (e, &(a, b)) in edges.iter().enumerate() {
            out[[a as usize, 0]] += wv[[e, 0]];
            out[[b as usize, 0]] += wv[[e, 0]];
        }
        let rg = self.requires(w);
        self.push(out, rg, Op::EdgeScatter { edges, w })
    }

    pub fn edge_normalize(&mut self, edges: Arc<Vec<(u32, u32)>>, w: Var, s: Var) -> Var {
        let wv = &self.nodes[w.0].value;
        let sv = &self.nodes[s.0].value;
        assert_eq!(wv.dim(), (edges.len(), 1), "edge weight shape");
        let mut out = Array2::zeros((edges.len(), 1));
        for (e, &(a, b)) in edges.iter().enumerate() {
            out[[e, 0]] = wv[[e, 0]] * sv[[a as usize, 0]] * sv[[b as usize, 0]];
        }
        let rg = self.requires(w) || self.requires(s);
        self.push(out, rg, Op::EdgeNormalize { edges, w, s })
    }

    pub fn row_select(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Var {
        let xv = &self.nodes[x.0].value;
        let d = xv.ncols();
        let mut out = Array2::zeros((idx.len(), d));
        for (row, &i) in idx.iter().enumerate() {
            for c in 0..d {
                out[[row, c]] = xv[[i, c]];
            }
        }
        let rg = self.requires(x);
        self.push(out, rg, Op::RowSelect { x, idx })
    }

    pub fn dropout(&mut self, x: Var, mask: Arc<Array2<f64>>) -> Var {
        let v = &self.nodes[x.0].value * mask.as_ref();
        let rg = self.requires(x);
        self.push(v, rg, Op::Dropout { x, mask })
    }

    fn accumulate(&mut self, v: Var, delta: &Array2<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(g) => *g += delta,
            None => node.grad = Some(delta.clone()),
        }
    }

    /// Reverse pass from a scalar root. Gradients of earlier calls are
    /// cleared, so one tape supports one backward.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.nodes[root.0].value.dim(), (1, 1), "backward needs a scalar root");
        for node in self.nodes.iter_mut() {
            node.grad = None;
        }
        self.nodes[root.0].grad = Some(Array2::from_elem((1, 1), 1.0));
        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            // Ops only read upstream values, never downstream grads, so the
            // node is moved out and restored around the dispatch.
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.dispatch(&op, &g, i);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(g);
        }
    }

    fn dispatch(&mut self, op: &Op, g: &Array2<f64>, node_idx: usize) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, g);
                let neg = g.mapv(|x| -x);
                self.accumulate(*b, &neg);
            }
            Op::MulElem(a, b) => {
                let da = g * &self.nodes[b.0].value;
                let db = g * &self.nodes[a.0].value;
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::AddRow(a, row) => {
                self.accumulate(*a, g);
                if self.requires(*row) {
                    let mut dr = Array2::zeros((1, g.ncols()));
                    for i in 0..g.nrows() {
                        for j in 0..g.ncols() {
                            dr[[0, j]] += g[[i, j]];
                        }
                    }
                    self.accumulate(*row, &dr);
                }
            }
            Op::MulRow(a, row) => {
                if self.requires(*a) {
                    let rv = &self.nodes[row.0].value;
                    let mut da = g.clone();
                    for i in 0..da.nrows() {
                        for j in 0..da.ncols() {
                            da[[i, j]] *= rv[[0, j]];
                        }
                    }
                    self.accumulate(*a, &da);
                }
                if self.requires(*row) {
                    let av = &self.nodes[a.0].value;
                    let mut dr = Array2::zeros((1, g.ncols()));
                    for i in 0..g.nrows() {
                        for j in 0..g.ncols() {
                            dr[[0, j]] += g[[i, j]] * av[[i, j]];
                        }
                    }
                    self.accumulate(*row, &dr);
                }
            }
            Op::MatMul(a, b) => {
                if self.requires(*a) {
                    let da = g.dot(&self.nodes[b.0].value.t());
                    self.accumulate(*a, &da);
                }
                if self.requires(*b) {
                    let db = self.nodes[a.0].value.t().dot(g);
                    self.accumulate(*b, &db);
                }
            }
            Op::Scale(a, c) => {
                let da = g.mapv(|x| x * c);
                self.accumulate(*a, &da);
            }
            Op::AddScalar(a) => {
                self.accumulate(*a, g);
            }
            Op::Relu(a) => {
                let av = &self.nodes[a.0].value;
                let mut da = g.clone();
                for (d, x) in da.iter_mut().zip(av.iter()) {
                    if *x <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::Sigmoid(a) => {
                let yv = &self.nodes[node_idx].value;
                let da = g * &yv.mapv(|y| y * (1.0 - y));
                self.accumulate(*a, &da);
            }
            Op::PowConst(a, p) => {
                let av = &self.nodes[a.0].value;
                let da = g * &av.mapv(|x| p * x.powf(p - 1.0));
                self.accumulate(*a, &da);
            }
            Op::FrobNorm(a) => {
                let norm = self.nodes[node_idx].value[[0, 0]];
                if norm > 0.0 {
                    let da = self.nodes[a.0].value.mapv(|x| g[[0, 0]] * x / norm);
                    self.accumulate(*a, &da);
                }
            }
            Op::Bce { probs, targets } => {
                let pv = &self.nodes[probs.0].value;
                let count = (pv.nrows() * pv.ncols()) as f64;
                let gs = g[[0, 0]] / count;
                let mut dp = Array2::zeros(pv.dim());
                for ((d, p), t) in dp.iter_mut().zip(pv.iter()).zip(targets.iter()) {
                    if *p > BCE_CLAMP && *p < 1.0 - BCE_CLAMP {
                        *d = gs * (-t / p + (1.0 - t) / (1.0 - p));
                    }
                }
                self.accumulate(*probs, &dp);
            }
            Op::Dcov { x, reference, dist } => {
                // dV²/dX_m = (2/n²) Σ_l B_ml (X_m − X_l) / d_ml, with the
                // zero-distance subgradient convention.
                let xv = &self.nodes[x.0].value;
                let (n, p) = xv.dim();
                let gs = g[[0, 0]] * 2.0 / (n as f64 * n as f64);
                let dx = match dist {
                    None => dcov_univariate_grouped_backward(xv, reference, gs),
                    Some(dist) => {
                        let mut dx = Array2::zeros((n, p));
                        for m in 0..n {
                            for l in 0..n {
                                let d = dist[[m, l]];
                                if d == 0.0 {
                                    continue;
                                }
                                let w = gs * reference.b(m, l) / d;
                                for c in 0..p {
                                    dx[[m, c]] += w * (xv[[m, c]] - xv[[l, c]]);
                                }
                            }
                        }
                        dx
                    }
                };
                self.accumulate(*x, &dx);
            }
            Op::Spmm { m, x } => {
                // symmetric: Mᵀ g = M g
                let dx = m.matmul(g);
                self.accumulate(*x, &dx);
            }
            Op::SpmmMean { m, x } => {
                let dx = m.matmul_t(g);
                self.accumulate(*x, &dx);
            }
            Op::SpmmDyn { edges, coeffs, diag, x } => {
                let (dc, dd, dx) = {
                    let xv = &self.nodes[x.0].value;
                    let d = xv.ncols();
                    let dc = self.requires(*coeffs).then(|| {
                        let mut dc = Array2::zeros((edges.len(), 1));
                        for (e, &(a, b)) in edges.iter().enumerate() {
                            let (a, b) = (a as usize, b as usize);
                            let mut acc = 0.0;
                            for c in 0..d {
                                acc += g[[a, c]] * xv[[b, c]] + g[[b, c]] * xv[[a, c]];
                            }
                            dc[[e, 0]] = acc;
                        }
                        dc
                    });
                    let dd = self.requires(*diag).then(|| {
                        let mut dd = Array2::zeros((xv.nrows(), 1));
                        for i in 0..xv.nrows() {
                            let mut acc = 0.0;
                            for c in 0..d {
                                acc += g[[i, c]] * xv[[i, c]];
                            }
                            dd[[i, 0]] = acc;
                        }
                        dd
                    });
                    let dx = self.requires(*x).then(|| {
                        let cv = &self.nodes[coeffs.0].value;
                        let dv = &self.nodes[diag.0].value;
                        let mut dx = Array2::zeros(xv.dim());
                        for i in 0..xv.nrows() {
                            let w = dv[[i, 0]];
                            for c in 0..d {
                                dx[[i, c]] = w * g[[i, c]];
                            }
                        }
                        for (e, &(a, b)) in edges.iter().enumerate() {
                            let w = cv[[e, 0]];
                            let (a, b) = (a as usize, b as usize);
                            for c in 0..d {
                                dx[[a, c]] += w * g[[b, c]];
                                dx[[b, c]] += w * g[[a, c]];
                            }
                        }
                        dx
                    });
                    (dc, dd, dx)
                };
                if let Some(dc) = dc {
                    self.accumulate(*coeffs, &dc);
                }
                if let Some(dd) = dd {
                    self.accumulate(*diag, &dd);
                }
                if let Some(dx) = dx {
                    self.accumulate(*x, &dx);
                }
            }
            Op::EdgeScatter { edges, w } => {
                let mut dw = Array2::zeros((edges.len(), 1));
                for (e, &(a, b)) in edges.iter().enumerate() {
                    dw[[e, 0]] = g[[a as usize, 0]] + g[[b as usize, 0]];
                }
                self.accumulate(*w, &dw);
            }
            Op::EdgeNormalize { edges, w, s } => {
                let (dw, ds) = {
                    let wv = &self.nodes[w.0].value;
                    let sv = &self.nodes[s.0].value;
                    let dw = self.requires(*w).then(|| {
                        let mut dw = Array2::zeros((edges.len(), 1));
                        for (e, &(a, b)) in edges.iter().enumerate() {
                            dw[[e, 0]] =
                                g[[e, 0]] * sv[[a as usize, 0]] * sv[[b as usize, 0]];
                        }
                        dw
                    });
                    let ds = self.requires(*s).then(|| {
                        let mut ds = Array2::zeros(sv.dim());
                        for (e, &(a, b)) in edges.iter().enumerate() {
                            let (a, b) = (a as usize, b as usize);
                            ds[[a, 0]] += g[[e, 0]] * wv[[e, 0]] * sv[[b, 0]];
                            ds[[b, 0]] += g[[e, 0]] * wv[[e, 0]] * sv[[a, 0]];
                        }
                        ds
                    });
                    (dw, ds)
                };
                if let Some(dw) = dw {
                    self.accumulate(*w, &dw);
                }
                if let Some(ds) = ds {
                    self.accumulate(*s, &ds);
                }
            }
            Op::RowSelect { x, idx } => {
                let mut dx = Array2::zeros(self.nodes[x.0].value.dim());
                for (row, &i) in idx.iter().enumerate() {
                    for c in 0..g.ncols() {
                        dx[[i, c]] += g[[row, c]];
                    }
                }
                self.accumulate(*x, &dx);
            }
            Op::Dropout { x, mask } => {
                let dx = g * mask.as_ref();
                self.accumulate(*x, &dx);
            }
        }
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sorted per-group values of a univariate sample.
fn group_sorted(xv: &Array2<f64>, assignment: &[u32], groups: usize) -> Vec<Vec<f64>> {
    let mut sorted: Vec<Vec<f64>> = vec![Vec::new(); groups];
    for (i, &a) in assignment.iter().enumerate() {
        sorted[a as usize].push(xv[[i, 0]]);
    }
    for v in sorted.iter_mut() {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    sorted
}

/// Σ_{a in A, b in B} |a - b| for two ascending slices, by merge walk.
fn cross_abs_sum(a: &[f64], b: &[f64]) -> f64 {
    // walk a; for each value use prefix sums of b
    let prefix: Vec<f64> = b
        .iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let total: f64 = *prefix.last().unwrap_or(&0.0);
    let mut acc = 0.0;
    let mut lo = 0usize; // number of b entries <= current a value
    for &av in a {
        while lo < b.len() && b[lo] <= av {
            lo += 1;
        }
        let below = if lo == 0 { 0.0 } else { prefix[lo - 1] };
        acc += av * lo as f64 - below + (total - below) - av * (b.len() - lo) as f64;
    }
    acc
}

/// Within-group ordered-pair sum Σ_{k,l} |x_k - x_l| over one sorted slice.
fn within_abs_sum(v: &[f64]) -> f64 {
    let mut prefix = 0.0;
    let mut acc = 0.0;
    for (r, &x) in v.iter().enumerate() {
        acc += x * r as f64 - prefix;
        prefix += x;
    }
    2.0 * acc
}

/// `V²(x, Y)` for univariate x against a grouped reference in O(n log n):
/// Σ_kl a_kl B_kl splits into per-group-pair absolute-difference sums.
fn dcov_univariate_grouped_forward(xv: &Array2<f64>, rf: &CenteredReference) -> f64 {
    let (assignment, table, counts) = rf.grouped().expect("grouped reference");
    let g = counts.len();
    let sorted = group_sorted(xv, assignment, g);
    let n = xv.nrows() as f64;
    let mut acc = 0.0;
    for a in 0..g {
        acc += table[[a, a]] * within_abs_sum(&sorted[a]);
        for b in (a + 1)..g {
            acc += 2.0 * table[[a, b]] * cross_abs_sum(&sorted[a], &sorted[b]);
        }
    }
    (acc / (n * n)).max(0.0)
}

/// Gradient of the grouped univariate path:
/// d/dx_m = gs * Σ_G T[g_m][G] (#{x_l < x_m in G} - #{x_l > x_m in G}).
fn dcov_univariate_grouped_backward(
    xv: &Array2<f64>,
    rf: &CenteredReference,
    gs: f64,
) -> Array2<f64> {
    let (assignment, table, counts) = rf.grouped().expect("grouped reference");
    let g = counts.len();
    let sorted = group_sorted(xv, assignment, g);
    let n = xv.nrows();
    let mut dx = Array2::zeros((n, 1));
    for m in 0..n {
        let xm = xv[[m, 0]];
        let gm = assignment[m] as usize;
        let mut acc = 0.0;
        for (grp, sorted_grp) in sorted.iter().enumerate() {
            let below = sorted_grp.partition_point(|&v| v < xm);
            let above = sorted_grp.len() - sorted_grp.partition_point(|&v| v <= xm);
            acc += table[[gm, grp]] * (below as f64 - above as f64);
        }
        dx[[m, 0]] = gs * acc;
    }
    dx
}
