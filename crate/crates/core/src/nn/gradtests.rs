//! Finite-difference coverage for every tape op.

use super::gradcheck::grad_check;
use super::ParamSet;
use crate::graph::{adjacency_normalized, neighbor_mean_matrix, AttributedGraph};
use crate::rng;
use crate::stats;
use ndarray::Array2;
use rand::Rng;
use std::sync::Arc;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_matrix(rows: usize, cols: usize, seed: u64, label: &str) -> Array2<f64> {
    let mut rng = rng::stream(seed, label);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.5..1.5))
}

fn random_binary(rows: usize, cols: usize, seed: u64, label: &str) -> Array2<f64> {
    let mut rng = rng::stream(seed, label);
    Array2::from_shape_fn((rows, cols), |_| f64::from(rng.gen_bool(0.5)))
}

fn ring_graph(n: usize, seed: u64) -> AttributedGraph {
    let mut rng = rng::stream(seed, "ring-extra");
    let mut edges: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, (i + 1) % n as u32)).collect();
    edges.push((rng.gen_range(0..n as u32 / 2), rng.gen_range(n as u32 / 2..n as u32)));
    AttributedGraph::new(
        random_matrix(n, 2, seed, "feat"),
        vec!["a".into(), "b".into()],
        random_binary(n, 1, seed, "sens"),
        vec!["s".into()],
        (0..n).map(|i| (i % 2) as u8).collect(),
        edges,
    )
    .unwrap()
}

#[test]
fn dense_op_chain_gradients() {
    for seed in 0..20 {
        let n = 4 + (seed as usize % 5);
        let mut params = ParamSet::new();
        params.insert("x", random_matrix(n, 3, seed, "x"));
        params.insert("w", random_matrix(3, 2, seed, "w"));
        params.insert("b", random_matrix(1, 2, seed, "b"));
        params.insert("row", random_matrix(1, 2, seed, "row"));
        let report = grad_check(&params, EPS, |t, leaves| {
            let xw = t.matmul(leaves[0], leaves[1]);
            let z = t.add_row(xw, leaves[2]);
            let z = t.mul_row(z, leaves[3]);
            let r = t.relu(z);
            let s = t.sigmoid(r);
            let sc = t.scale(s, 1.7);
            let sh = t.add_scalar(sc, 0.3);
            t.frob_norm(sh)
        });
        assert!(report.passes(TOL), "seed {seed}: {:?}", report.per_param);
    }
}

#[test]
fn add_sub_mul_pow_gradients() {
    for seed in 0..20 {
        let mut params = ParamSet::new();
        params.insert("a", random_matrix(3, 3, seed, "a"));
        params.insert("b", random_matrix(3, 3, seed, "b"));
        let report = grad_check(&params, EPS, |t, leaves| {
            let sum = t.add(leaves[0], leaves[1]);
            let diff = t.sub(leaves[0], leaves[1]);
            let prod = t.mul_elem(sum, diff);
            let sq = t.mul_elem(prod, prod);
            let pos = t.add_scalar(sq, 1.0);
            let powed = t.pow_const(pos, -0.5);
            t.frob_norm(powed)
        });
        assert!(report.passes(TOL), "seed {seed}: {:?}", report.per_param);
    }
}

#[test]
fn bce_gradients_away_from_clamp() {
    for seed in 0..20 {
        let n = 6;
        let targets = Arc::new(random_binary(n, 2, seed, "t"));
        let mut params = ParamSet::new();
        // logits in a moderate band keep probabilities far from the clamp
        params.insert("logits", random_matrix(n, 2, seed, "logits"));
        let t2 = targets.clone();
        let report = grad_check(&params, EPS, move |t, leaves| {
            let p = t.sigmoid(leaves[0]);
            t.bce_loss(p, t2.clone())
        });
        assert!(report.passes(TOL), "seed {seed}: {:?}", report.per_param);
    }
}

#[test]
fn dcov_gradients_match_finite_differences() {
    for seed in 0..20 {
        let n = 6;
        let s = random_binary(n, 1, seed, "s");
        let rf = Arc::new(stats::centered_reference(s.view()).unwrap());
        let mut params = ParamSet::new();
        params.insert("x", random_matrix(n, 2, seed, "x"));
        let report = grad_check(&params, EPS, move |t, leaves| {
            t.dcov_loss(leaves[0], rf.clone())
        });
        assert!(report.passes(TOL), "seed {seed}: {:?}", report.per_param);
    }
}

#[test]
fn spmm_and_mean_gradients() {
    for seed in 0..20 {
        let g = ring_graph(6, seed);
        let adj = Arc::new(adjacency_normalized(&g, None, true).unwrap());
        let mean = Arc::new(neighbor_mean_matrix(&g));
        let mut params = ParamSet::new();
        params.insert("h", random_matrix(6, 2, seed, "h"));
        params.insert("w", random_matrix(2, 2, seed, "w"));
        let report = grad_check(&params, EPS, move |t, leaves| {
            let hw = t.matmul(leaves[0], leaves[1]);
            let a = t.spmm(adj.clone(), hw);
            let m = t.spmm_mean(mean.clone(), a);
            t.frob_norm(m)
        });
        assert!(report.passes(TOL), "seed {seed}: {:?}", report.per_param);
    }
}

#[test]
fn dynamic_adjacency_gradients_reach_edge_weights() {
    // Full normalized message passing with learnable raw edge weights.
    for seed in 0..20 {
        let g = ring_graph(6, seed);
        let edges = Arc::new(g.edges.clone());
        let x = random_matrix(6, 2, seed, "x");
        let mut params = ParamSet::new();
        params.insert("raw", random_matrix(edges.len(), 1, seed, "raw"));
        params.insert("w", random_matrix(2, 1, seed, "w"));
        let e2 = edges.clone();
        let report = grad_check(&params, EPS, move |t, leaves| {
            let w = t.sigmoid(leaves[0]);
            let deg = t.edge_scatter(e2.clone(), 6, w);
            let deg = t.add_scalar(deg, 1.0);
            let inv_sqrt = t.pow_const(deg, -0.5);
            let coeffs = t.edge_normalize(e2.clone(), w, inv_sqrt);
            let diag = t.mul_elem(inv_sqrt, inv_sqrt);
            let xv = t.constant(x.clone());
            let xw = t.matmul(xv, leaves[1]);
            let agg = t.spmm_dyn(e2.clone(), coeffs, diag, xw);
            t.frob_norm(agg)
        });
        assert!(report.passes(TOL), "seed {seed}: {:?}", report.per_param);
    }
}

#[test]
fn row_select_and_dropout_gradients() {
    for seed in 0..20 {
        let idx = Arc::new(vec![0usize, 2, 3]);
        let mask = {
            let mut rng = rng::stream(seed, "mask");
            Arc::new(Array2::from_shape_fn((5, 2), |_| {
                if rng.gen_bool(0.8) {
                    1.0 / 0.8
                } else {
                    0.0
                }
            }))
        };
        let mut params = ParamSet::new();
        params.insert("x", random_matrix(5, 2, seed, "x"));
        let report = grad_check(&params, EPS, move |t, leaves| {
            let d = t.dropout(leaves[0], mask.clone());
            let s = t.row_select(d, idx.clone());
            t.frob_norm(s)
        });
        assert!(report.passes(TOL), "seed {seed}: {:?}", report.per_param);
    }
}

#[test]
fn layer_builders_pass_grad_check() {
    use super::layers::{gcn_layer, gin_layer, linear_forward, sage_layer};
    for seed in 0..20 {
        let g = ring_graph(8, seed);
        let adj = Arc::new(adjacency_normalized(&g, None, true).unwrap());
        let raw_sum = Arc::new(crate::graph::SparseMat {
            n: g.n,
            edges: g.edges.clone(),
            coeffs: vec![1.0; g.edges.len()],
            diag: vec![0.0; g.n],
        });
        let mean = Arc::new(neighbor_mean_matrix(&g));
        let targets = Arc::new(random_binary(8, 1, seed, "y"));
        let x = g.features.clone();

        let mut params = ParamSet::new();
        params.insert("w_gcn", random_matrix(2, 3, seed, "w_gcn"));
        params.insert("w_self", random_matrix(3, 3, seed, "w_self"));
        params.insert("w_neigh", random_matrix(3, 3, seed, "w_neigh"));
        params.insert("w1", random_matrix(3, 4, seed, "w1"));
        params.insert("b1", random_matrix(1, 4, seed, "b1"));
        params.insert("w2", random_matrix(4, 4, seed, "w2"));
        params.insert("b2", random_matrix(1, 4, seed, "b2"));
        params.insert("w_head", random_matrix(4, 1, seed, "w_head"));
        params.insert("b_head", random_matrix(1, 1, seed, "b_head"));

        let report = grad_check(&params, EPS, move |t, l| {
            let xv = t.constant(x.clone());
            let h = gcn_layer(t, &adj, xv, l[0]);
            let h = sage_layer(t, &mean, h, l[1], l[2]);
            let h = t.relu(h);
            let h = gin_layer(t, &raw_sum, h, l[3], l[4], l[5], l[6], 0.0);
            let h = t.relu(h);
            let logits = linear_forward(t, h, l[7], l[8]);
            let p = t.sigmoid(logits);
            t.bce_loss(p, targets.clone())
        });
        assert!(report.passes(TOL), "seed {seed}: {:?}", report.per_param);
    }
}
