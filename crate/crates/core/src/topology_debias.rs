//! Topology debiasing: message passing with one learnable weight per
//! undirected edge, then hard pruning.
//!
//! Edge weights start at raw value 1 and pass through a sigmoid into
//! `(0, 1)`, so both directions of an edge share a single parameter and the
//! pruned adjacency is symmetric by construction. Self-loops take part in
//! normalization with fixed weight 1 and are never prunable. The training
//! objective adds a distance-covariance penalty between the classifier's
//! probability outputs over all nodes and the sensitive matrix to the
//! train-node classification loss.

use crate::error::{Error, Result};
use crate::nn::{init_bias, init_weight, linear_forward, AdamState, ModelParams, ParamSet, Tape};
use crate::stats::CenteredReference;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::sync::Arc;

/// One learnable raw weight per undirected edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightSet {
    pub edges: Vec<(u32, u32)>,
    pub raw: Vec<f64>,
}

impl EdgeWeightSet {
    pub fn new_equal(edges: Vec<(u32, u32)>) -> Self {
        let raw = vec![1.0; edges.len()];
        EdgeWeightSet { edges, raw }
    }

    /// Sigmoid-squashed weights in `(0, 1)`, the space `r_p` compares against.
    pub fn squashed(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| sigmoid(r)).collect()
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

/// Result of thresholding learned edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedTopology {
    pub kept: Vec<(u32, u32)>,
    pub removed: Vec<(u32, u32)>,
    pub r_p: f64,
}

/// Keep an edge iff its squashed weight is at least `r_p` (inclusive);
/// kept edges enter the pruned adjacency with weight 1.
pub fn post_prune(weights: &EdgeWeightSet, r_p: f64) -> Result<PrunedTopology> {
    if !(0.0..=1.0).contains(&r_p) {
        return Err(Error::Config(format!("pruning threshold {r_p} outside [0, 1]")));
    }
    let squashed = weights.squashed();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (e, &pair) in weights.edges.iter().enumerate() {
        if squashed[e] >= r_p {
            kept.push(pair);
        } else {
            removed.push(pair);
        }
    }
    Ok(PrunedTopology { kept, removed, r_p })
}

/// Hyperparameters for fair message-passing training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairMpConfig {
    /// Weight of the prediction-vs-sensitive distance-covariance penalty.
    pub lambda4: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    /// Stop after this many epochs without loss improvement.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for FairMpConfig {
    fn default() -> Self {
        FairMpConfig {
            lambda4: 1.0,
            epochs: 1000,
            lr: 1e-3,
            weight_decay: 1e-5,
            hidden: 16,
            patience: None,
            seed: 0,
        }
    }
}

/// Per-epoch objective values.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FairMpEpoch {
    pub classification: f64,
    pub dcov: f64,
    pub total: f64,
}

/// Output of [`fair_mp_train`].
#[derive(Debug, Clone)]
pub struct FairMpResult {
    pub weights: EdgeWeightSet,
    /// The jointly trained 1-layer GCN classifier.
    pub model: ModelParams,
    pub trajectory: Vec<FairMpEpoch>,
    /// Probability outputs of the final model over all nodes.
    pub probs: Vec<f64>,
}

/// Jointly optimize raw edge weights and a 1-layer GCN under
/// `L_C(train) + lambda4 * V²(probs, S)`.
///
/// Message passing normalizes the squashed weights symmetrically with unit
/// self-loops each epoch, so gradients reach the raw weights through the
/// degree terms as well.
pub fn fair_mp_train(
    features: &Array2<f64>,
    edges: &[(u32, u32)],
    labels: &[u8],
    train_idx: &[usize],
    s_ref: Arc<CenteredReference>,
    cfg: &FairMpConfig,
) -> Result<FairMpResult> {
    let n = features.nrows();
    let d = features.ncols();
    if labels.len() != n {
        return Err(Error::Shape("label count != node count".into()));
    }
    let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    if !train_labels.contains(&0) || !train_labels.contains(&1) {
        return Err(Error::Validation(
            "training nodes contain a single label class".into(),
        ));
    }

    let edges_arc = Arc::new(edges.to_vec());
    let mut params = ParamSet::new();
    params.insert("raw_edge", Array2::from_elem((edges.len(), 1), 1.0));
    params.insert("w1", init_weight(d, cfg.hidden, cfg.seed, "fair-mp-w1"));
    params.insert("w2", init_weight(cfg.hidden, 1, cfg.seed, "fair-mp-w2"));
    params.insert("b2", init_bias(1));
    let mut opt = AdamState::new(&params, cfg.lr, cfg.weight_decay);

    let targets = Arc::new(Array2::from_shape_vec(
        (train_idx.len(), 1),
        train_labels.iter().map(|&l| f64::from(l)).collect(),
    )
    .expect("target shape"));
    let train_arc = Arc::new(train_idx.to_vec());

    let forward = |tape: &mut Tape, leaves: &[crate::nn::Var], features: &Array2<f64>| {
        let squashed = tape.sigmoid(leaves[0]);
        let deg = tape.edge_scatter(edges_arc.clone(), n, squashed);
        let deg = tape.add_scalar(deg, 1.0);
        let inv_sqrt = tape.pow_const(deg, -0.5);
        let coeffs = tape.edge_normalize(edges_arc.clone(), squashed, inv_sqrt);
        let diag = tape.mul_elem(inv_sqrt, inv_sqrt);
        let x = tape.constant(features.clone());
        let xw = tape.matmul(x, leaves[1]);
        let agg = tape.spmm_dyn(edges_arc.clone(), coeffs, diag, xw);
        let hidden = tape.relu(agg);
        let logits = linear_forward(tape, hidden, leaves[2], leaves[3]);
        tape.sigmoid(logits)
    };

    let mut trajectory = Vec::with_capacity(cfg.epochs);
    let mut best_total = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let leaves: Vec<_> = (0..params.len())
            .map(|i| tape.leaf(params.value(i), true))
            .collect();
        let probs = forward(&mut tape, &leaves, features);
        let train_probs = tape.row_select(probs, train_arc.clone());
        let l_c = tape.bce_loss(train_probs, targets.clone());
        let mut loss = l_c;
        let mut l_f_val = 0.0;
        if cfg.lambda4 != 0.0 {
            let l_f = tape.dcov_loss(probs, s_ref.clone());
            l_f_val = tape.scalar(l_f);
            let scaled = tape.scale(l_f, cfg.lambda4);
            loss = tape.add(loss, scaled);
        }
        let l_c_val = tape.scalar(l_c);
        let total = tape.scalar(loss);
        if !total.is_finite() {
            return Err(Error::Numeric {
                epoch,
                msg: format!("fair MP loss became {total}"),
            });
        }
        tape.backward(loss);
        let grads: Vec<Array2<f64>> = leaves.iter().map(|&v| tape.grad(v)).collect();
        opt.step(&mut params, &grads)?;
        trajectory.push(FairMpEpoch {
            classification: l_c_val,
            dcov: l_f_val,
            total,
        });
        if let Some(patience) = cfg.patience {
            if total < best_total - 1e-12 {
                best_total = total;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }

    // final forward with trained parameters
    let mut tape = Tape::new();
    let leaves: Vec<_> = (0..params.len())
        .map(|i| tape.leaf(params.value(i), false))
        .collect();
    let probs_var = forward(&mut tape, &leaves, features);
    let probs = tape.value(probs_var).column(0).to_vec();

    let raw = params.get("raw_edge").column(0).to_vec();
    let mut gcn = ParamSet::new();
    gcn.insert("w1", params.get("w1"));
    gcn.insert("w2", params.get("w2"));
    gcn.insert("b2", params.get("b2"));
    Ok(FairMpResult {
        weights: EdgeWeightSet {
            edges: edges.to_vec(),
            raw,
        },
        model: ModelParams::new("gcn1", gcn)?,
        trajectory,
        probs,
    })
}

/// Pipeline ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationTag {
    /// Skip pre-masking; reconstruct over the full feature matrix.
    WithoutMask,
    /// Skip reconstruction; use the pre-masked features as-is.
    WithoutReconstruct,
    /// Skip the whole feature-debias module.
    WithoutFeature,
    /// Skip fair MP and pruning; keep the original topology.
    WithoutTopology,
}

impl AblationTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationTag::WithoutMask => "w/o-msk",
            AblationTag::WithoutReconstruct => "w/o-re",
            AblationTag::WithoutFeature => "w/o-fe",
            AblationTag::WithoutTopology => "w/o-to",
        }
    }
}

impl FromStr for AblationTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w/o-msk" => Ok(AblationTag::WithoutMask),
            "w/o-re" => Ok(AblationTag::WithoutReconstruct),
            "w/o-fe" => Ok(AblationTag::WithoutFeature),
            "w/o-to" => Ok(AblationTag::WithoutTopology),
            other => Err(Error::Config(format!(
                "unknown ablation tag `{other}`; expected w/o-msk, w/o-re, w/o-fe or w/o-to"
            ))),
        }
    }
}

/// Which pipeline stages an ablation keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageFlags {
    pub premask: bool,
    pub reconstruct: bool,
    pub topology: bool,
}

/// Stage wiring for a run, `None` meaning the full pipeline.
pub fn ablation_variant(tag: Option<AblationTag>) -> StageFlags {
    match tag {
        None => StageFlags {
            premask: true,
            reconstruct: true,
            topology: true,
        },
        Some(AblationTag::WithoutMask) => StageFlags {
            premask: false,
            reconstruct: true,
            topology: true,
        },
        Some(AblationTag::WithoutReconstruct) => StageFlags {
            premask: true,
            reconstruct: false,
            topology: true,
        },
        Some(AblationTag::WithoutFeature) => StageFlags {
            premask: false,
            reconstruct: false,
            topology: true,
        },
        Some(AblationTag::WithoutTopology) => StageFlags {
            premask: true,
            reconstruct: true,
            topology: false,
        },
    }
}
