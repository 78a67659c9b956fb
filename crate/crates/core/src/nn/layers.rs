//! Layer forward builders and parameter initialization.

use super::tape::{Tape, Var};
use crate::graph::{NeighborMean, SparseMat};
use crate::rng;
use ndarray::Array2;
use rand::Rng;
use std::sync::Arc;

/// `x W + b` with a broadcast bias row.
pub fn linear_forward(t: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let xw = t.matmul(x, w);
    t.add_row(xw, b)
}

/// Graph convolution `Â (H W)` against a fixed normalized adjacency.
pub fn gcn_layer(t: &mut Tape, adj: &Arc<SparseMat>, h: Var, w: Var) -> Var {
    let hw = t.matmul(h, w);
    t.spmm(adj.clone(), hw)
}

/// GraphSAGE with full-neighborhood mean: `H W_self + mean_N(H) W_neigh`.
/// Isolated nodes see a zero neighbor mean.
pub fn sage_layer(
    t: &mut Tape,
    mean: &Arc<NeighborMean>,
    h: Var,
    w_self: Var,
    w_neigh: Var,
) -> Var {
    let own = t.matmul(h, w_self);
    let agg = t.spmm_mean(mean.clone(), h);
    let agg = t.matmul(agg, w_neigh);
    t.add(own, agg)
}

/// GIN layer `mlp((1 + eps) H + Σ_neighbors H)` with a one-hidden-layer MLP.
#[allow(clippy::too_many_arguments)]
pub fn gin_layer(
    t: &mut Tape,
    adj_sum: &Arc<SparseMat>,
    h: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    eps: f64,
) -> Var {
    let scaled = t.scale(h, 1.0 + eps);
    let agg = t.spmm(adj_sum.clone(), h);
    let z = t.add(scaled, agg);
    let hid = linear_forward(t, z, w1, b1);
    let hid = t.relu(hid);
    linear_forward(t, hid, w2, b2)
}

/// Uniform(±1/sqrt(fan_in)) weight init, seeded.
pub fn init_weight(fan_in: usize, fan_out: usize, seed: u64, label: &str) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut rng = rng::stream(seed, label);
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound))
}

/// Zero bias row.
pub fn init_bias(fan_out: usize) -> Array2<f64> {
    Array2::zeros((1, fan_out))
}
