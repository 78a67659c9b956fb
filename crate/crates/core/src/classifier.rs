//! Downstream node classifiers: GCN, GraphSAGE and GIN.
//!
//! Every architecture is two layers — the graph-specific layer into a
//! hidden width, ReLU, inverted dropout in training mode, then an affine
//! head with a sigmoid. Training is full batch with Adam on the train-node
//! cross-entropy; the returned model is the checkpoint with the best
//! validation accuracy.

use crate::error::{Error, Result};
use crate::graph::{
    neighbor_mean_from_edges, normalized_adjacency_from_edges, DataSplit, NeighborMean, SparseMat,
};
use crate::metrics::{self, MetricsReport};
use crate::nn::{
    gcn_layer, gin_layer, init_bias, init_weight, linear_forward, sage_layer, AdamState,
    ModelParams, ParamSet, Tape, Var,
};
use crate::rng;
use crate::stats;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::sync::Arc;

/// Classifier architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sage,
    Gin,
}

impl Arch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
            Arch::Gin => "gin",
        }
    }

    fn model_tag(&self) -> &'static str {
        match self {
            Arch::Gcn => "gcn2",
            Arch::Sage => "sage",
            Arch::Gin => "gin",
        }
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "sage" => Ok(Arch::Sage),
            "gin" => Ok(Arch::Gin),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}`; expected gcn, sage or gin"
            ))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub arch: Arch,
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            arch: Arch::Gcn,
            hidden: 16,
            dropout: 0.2,
            epochs: 1000,
            lr: 0.01,
            weight_decay: 1e-5,
            patience: None,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Precomputed aggregation structures for one (n, edges) pair.
enum ArchOps {
    Gcn(Arc<SparseMat>),
    Sage(Arc<NeighborMean>),
    Gin(Arc<SparseMat>),
}

impl ArchOps {
    fn build(arch: Arch, n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        Ok(match arch {
            Arch::Gcn => ArchOps::Gcn(Arc::new(normalized_adjacency_from_edges(
                n, edges, None, true,
            )?)),
            Arch::Sage => ArchOps::Sage(Arc::new(neighbor_mean_from_edges(n, edges))),
            Arch::Gin => ArchOps::Gin(Arc::new(SparseMat {
                n,
                edges: edges.to_vec(),
                coeffs: vec![1.0; edges.len()],
                diag: vec![0.0; n],
            })),
        })
    }
}

fn init_params(arch: Arch, d: usize, hidden: usize, seed: u64) -> ParamSet {
    let mut p = ParamSet::new();
    match arch {
        Arch::Gcn => {
            p.insert("w1", init_weight(d, hidden, seed, "clf-w1"));
        }
        Arch::Sage => {
            p.insert("w_self", init_weight(d, hidden, seed, "clf-w-self"));
            p.insert("w_neigh", init_weight(d, hidden, seed, "clf-w-neigh"));
        }
        Arch::Gin => {
            p.insert("w1", init_weight(d, hidden, seed, "clf-w1"));
            p.insert("b1", init_bias(hidden));
            p.insert("w2", init_weight(hidden, hidden, seed, "clf-w2"));
            p.insert("b2", init_bias(hidden));
        }
    }
    p.insert("w_head", init_weight(hidden, 1, seed, "clf-head"));
    p.insert("b_head", init_bias(1));
    p
}

fn forward(
    tape: &mut Tape,
    arch: Arch,
    ops: &ArchOps,
    features: &Array2<f64>,
    leaves: &[Var],
    dropout_mask: Option<Arc<Array2<f64>>>,
) -> Var {
    let x = tape.constant(features.clone());
    let hidden = match (arch, ops) {
        (Arch::Gcn, ArchOps::Gcn(adj)) => gcn_layer(tape, adj, x, leaves[0]),
        (Arch::Sage, ArchOps::Sage(mean)) => sage_layer(tape, mean, x, leaves[0], leaves[1]),
        (Arch::Gin, ArchOps::Gin(adj)) => {
            gin_layer(tape, adj, x, leaves[0], leaves[1], leaves[2], leaves[3], 0.0)
        }
        _ => unreachable!("arch/ops mismatch"),
    };
    let mut h = tape.relu(hidden);
    if let Some(mask) = dropout_mask {
        h = tape.dropout(h, mask);
    }
    let head_w = leaves[leaves.len() - 2];
    let head_b = leaves[leaves.len() - 1];
    let logits = linear_forward(tape, h, head_w, head_b);
    tape.sigmoid(logits)
}

/// A trained classifier checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub version: u32,
    pub arch: Arch,
    pub hidden: usize,
    pub input_dim: usize,
    pub model: ModelParams,
    pub best_val_acc: f64,
}

impl TrainedClassifier {
    /// Probability outputs for every node of a graph.
    pub fn predict_probs(&self, features: &Array2<f64>, edges: &[(u32, u32)]) -> Result<Vec<f64>> {
        if features.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "classifier expects {} input columns, got {}",
                self.input_dim,
                features.ncols()
            )));
        }
        let ops = ArchOps::build(self.arch, features.nrows(), edges)?;
        let mut tape = Tape::new();
        let leaves: Vec<Var> = (0..self.model.params.len())
            .map(|i| tape.leaf(self.model.params.value(i), false))
            .collect();
        let probs = forward(&mut tape, self.arch, &ops, features, &leaves, None);
        Ok(tape.value(probs).column(0).to_vec())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse and shape-check a serialized classifier.
    pub fn from_json(json: &str) -> Result<Self> {
        let clf: TrainedClassifier = serde_json::from_str(json)?;
        if clf.version != 1 {
            return Err(Error::Config(format!(
                "unsupported classifier blob version {}",
                clf.version
            )));
        }
        let expected = expected_shapes(clf.arch, clf.input_dim, clf.hidden);
        let params = &clf.model.params;
        if params.len() != expected.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters for {}, found {}",
                expected.len(),
                clf.arch.as_str(),
                params.len()
            )));
        }
        for (i, (name, shape)) in expected.iter().enumerate() {
            if params.names()[i] != *name || params.shape(i) != *shape {
                return Err(Error::Shape(format!(
                    "parameter {i} should be `{name}` with shape {shape:?}, found `{}` {:?}",
                    params.names()[i],
                    params.shape(i)
                )));
            }
        }
        Ok(clf)
    }
}

/// Canonical parameter layout per architecture.
pub fn expected_shapes(arch: Arch, d: usize, hidden: usize) -> Vec<(&'static str, (usize, usize))> {
    let mut shapes: Vec<(&'static str, (usize, usize))> = match arch {
        Arch::Gcn => vec![("w1", (d, hidden))],
        Arch::Sage => vec![("w_self", (d, hidden)), ("w_neigh", (d, hidden))],
        Arch::Gin => vec![
            ("w1", (d, hidden)),
            ("b1", (1, hidden)),
            ("w2", (hidden, hidden)),
            ("b2", (1, hidden)),
        ],
    };
    shapes.push(("w_head", (hidden, 1)));
    shapes.push(("b_head", (1, 1)));
    shapes
}

/// Full-batch training with best-validation-accuracy checkpointing.
pub fn train_classifier(
    features: &Array2<f64>,
    edges: &[(u32, u32)],
    labels: &[u8],
    split: &DataSplit,
    cfg: &ClassifierConfig,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::Shape("label count != node count".into()));
    }
    split.validate(n)?;
    let train_labels: Vec<u8> = split.train.iter().map(|&i| labels[i]).collect();
    if !train_labels.contains(&0) || !train_labels.contains(&1) {
        return Err(Error::Validation(
            "training nodes contain a single label class".into(),
        ));
    }

    let d = features.ncols();
    let ops = ArchOps::build(cfg.arch, n, edges)?;
    let mut params = init_params(cfg.arch, d, cfg.hidden, cfg.seed);
    let mut opt = AdamState::new(&params, cfg.lr, cfg.weight_decay);
    let train_idx = Arc::new(split.train.clone());
    let targets = Arc::new(
        Array2::from_shape_vec(
            (split.train.len(), 1),
            train_labels.iter().map(|&l| f64::from(l)).collect(),
        )
        .expect("target shape"),
    );
    let val_labels: Vec<u8> = split.val.iter().map(|&i| labels[i]).collect();
    let mut dropout_rng = rng::stream(cfg.seed, "clf-dropout");
    let keep = 1.0 - cfg.dropout;

    let mut best = TrainedClassifier {
        version: 1,
        arch: cfg.arch,
        hidden: cfg.hidden,
        input_dim: d,
        model: ModelParams::new(cfg.arch.model_tag(), params.clone())?,
        best_val_acc: -1.0,
    };
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let mask = (cfg.dropout > 0.0).then(|| {
            Arc::new(Array2::from_shape_fn((n, cfg.hidden), |_| {
                if dropout_rng.gen_bool(keep) {
                    1.0 / keep
                } else {
                    0.0
                }
            }))
        });
        let mut tape = Tape::new();
        let leaves: Vec<Var> = (0..params.len())
            .map(|i| tape.leaf(params.value(i), true))
            .collect();
        let probs = forward(&mut tape, cfg.arch, &ops, features, &leaves, mask);
        let train_probs = tape.row_select(probs, train_idx.clone());
        let loss = tape.bce_loss(train_probs, targets.clone());
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric {
                epoch,
                msg: format!("classifier loss became {value}"),
            });
        }
        tape.backward(loss);
        let grads: Vec<Array2<f64>> = leaves.iter().map(|&v| tape.grad(v)).collect();
        opt.step(&mut params, &grads)?;

        // validation pass without dropout
        let mut tape = Tape::new();
        let leaves: Vec<Var> = (0..params.len())
            .map(|i| tape.leaf(params.value(i), false))
            .collect();
        let probs = forward(&mut tape, cfg.arch, &ops, features, &leaves, None);
        let all = tape.value(probs);
        let val_pred: Vec<u8> = split
            .val
            .iter()
            .map(|&i| u8::from(all[[i, 0]] >= 0.5))
            .collect();
        let val_acc = metrics::accuracy(&val_pred, &val_labels);
        if val_acc > best.best_val_acc {
            best.best_val_acc = val_acc;
            best.model = ModelParams::new(cfg.arch.model_tag(), params.clone())?;
            stale = 0;
        } else {
            stale += 1;
            if let Some(patience) = cfg.patience {
                if stale >= patience {
                    break;
                }
            }
        }
    }
    Ok(best)
}

/// Test-split metrics of a trained classifier, including the distance
/// correlation between its probability outputs and the sensitive matrix.
pub fn evaluate(
    clf: &TrainedClassifier,
    features: &Array2<f64>,
    edges: &[(u32, u32)],
    labels: &[u8],
    sensitive: &Array2<f64>,
    split: &DataSplit,
    seed: u64,
) -> Result<MetricsReport> {
    if split.test.is_empty() {
        return Err(Error::Validation("test split is empty".into()));
    }
    let probs = clf.predict_probs(features, edges)?;
    let test_probs: Vec<f64> = split.test.iter().map(|&i| probs[i]).collect();
    let test_labels: Vec<u8> = split.test.iter().map(|&i| labels[i]).collect();
    let yhat = metrics::threshold(&test_probs);

    let k = sensitive.ncols();
    let mut delta_sp = Vec::with_capacity(k);
    let mut delta_eo = Vec::with_capacity(k);
    for col in 0..k {
        let s_col: Vec<f64> = split.test.iter().map(|&i| sensitive[[i, col]]).collect();
        delta_sp.push(metrics::delta_sp(&yhat, &s_col).ok());
        delta_eo.push(metrics::delta_eo(&yhat, &test_labels, &s_col).ok());
    }
    let probs_mat = stats::as_col(&test_probs);
    let s_test = sensitive.select(ndarray::Axis(0), &split.test);
    let sensitive_dcor = stats::dcor2(probs_mat.view(), s_test.view())?;

    Ok(MetricsReport {
        seed,
        acc: metrics::accuracy(&yhat, &test_labels),
        f1: metrics::f1(&yhat, &test_labels),
        auroc: metrics::auroc(&test_probs, &test_labels).ok(),
        delta_sp,
        delta_eo,
        sensitive_dcor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::split_stratified;
    use crate::synth::{assemble_case, ScenarioCase, SynthSpec};

    fn separable_fixture(n: usize, seed: u64) -> (Array2<f64>, Vec<(u32, u32)>, Vec<u8>) {
        let mut rng = rng::stream(seed, "clf-fixture");
        let mut features = Array2::zeros((n, 3));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 2) as u8;
            features[[i, 0]] = f64::from(class) * 2.0 - 1.0 + 0.1 * rng.gen_range(-1.0..1.0);
            features[[i, 1]] = rng.gen_range(-1.0..1.0);
            features[[i, 2]] = rng.gen_range(-1.0..1.0);
            labels.push(class);
        }
        (features, Vec::new(), labels)
    }

    fn fixture_split(n: usize, labels: &[u8]) -> DataSplit {
        use crate::graph::AttributedGraph;
        let g = AttributedGraph::new(
            Array2::zeros((n, 1)),
            vec!["x".into()],
            Array2::zeros((n, 1)),
            vec!["s".into()],
            labels.to_vec(),
            vec![(0, 1)],
        )
        .unwrap();
        split_stratified(&g, (0.5, 0.25, 0.25), 0).unwrap()
    }

    #[test]
    fn separable_data_reaches_high_accuracy_on_identity_topology() {
        let (features, edges, labels) = separable_fixture(80, 0);
        let split = fixture_split(80, &labels);
        let cfg = ClassifierConfig {
            epochs: 200,
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&features, &edges, &labels, &split, &cfg).unwrap();
        let probs = clf.predict_probs(&features, &edges).unwrap();
        let test_pred: Vec<u8> = split.test.iter().map(|&i| u8::from(probs[i] >= 0.5)).collect();
        let test_labels: Vec<u8> = split.test.iter().map(|&i| labels[i]).collect();
        assert!(metrics::accuracy(&test_pred, &test_labels) >= 0.95);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        // pure-noise features: an untrained model must sit near chance
        let mut rng = rng::stream(9, "untrained");
        let n = 200;
        let features = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let split = fixture_split(n, &labels);
        let cfg = ClassifierConfig {
            epochs: 0,
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&features, &[], &labels, &split, &cfg).unwrap();
        assert_eq!(clf.best_val_acc, -1.0);
        let probs = clf.predict_probs(&features, &[]).unwrap();
        let pred: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
        let acc = metrics::accuracy(&pred, &labels);
        assert!((acc - 0.5).abs() <= 0.15, "untrained accuracy {acc}");
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let (features, edges, labels) = separable_fixture(40, 2);
        let split = fixture_split(40, &labels);
        let cfg = ClassifierConfig {
            epochs: 30,
            arch: Arch::Sage,
            ..ClassifierConfig::default()
        };
        let a = train_classifier(&features, &edges, &labels, &split, &cfg).unwrap();
        let b = train_classifier(&features, &edges, &labels, &split, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_train_set_is_error() {
        let (features, edges, _) = separable_fixture(20, 3);
        let labels = vec![1u8; 20];
        let split = DataSplit {
            train: (0..10).collect(),
            val: (10..15).collect(),
            test: (15..20).collect(),
        };
        assert!(train_classifier(
            &features,
            &edges,
            &labels,
            &split,
            &ClassifierConfig::default()
        )
        .is_err());
    }

    #[test]
    fn checkpoint_validation_acc_at_least_final() {
        let g = assemble_case(&SynthSpec::default(), ScenarioCase::Dfdt, 5).unwrap();
        // subsample aggressively to keep the test quick
        let idx: Vec<usize> = (0..g.n).step_by(10).collect();
        let features = g.features.select(ndarray::Axis(0), &idx);
        let labels: Vec<u8> = idx.iter().map(|&i| g.labels[i]).collect();
        let split = fixture_split(idx.len(), &labels);
        let cfg = ClassifierConfig {
            epochs: 60,
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&features, &[], &labels, &split, &cfg).unwrap();
        // retrain with zero checkpointing epochs is not comparable; instead
        // verify the recorded best beats a fresh evaluation of the final
        // model only if the final model was the best one.
        let probs = clf.predict_probs(&features, &[]).unwrap();
        let val_pred: Vec<u8> = split.val.iter().map(|&i| u8::from(probs[i] >= 0.5)).collect();
        let val_labels: Vec<u8> = split.val.iter().map(|&i| labels[i]).collect();
        let final_val = metrics::accuracy(&val_pred, &val_labels);
        assert!(clf.best_val_acc >= final_val - 1e-12);
    }

    #[test]
    fn parameter_shapes_per_architecture() {
        for (arch, expected_names) in [
            (Arch::Gcn, vec!["w1", "w_head", "b_head"]),
            (Arch::Sage, vec!["w_self", "w_neigh", "w_head", "b_head"]),
            (Arch::Gin, vec!["w1", "b1", "w2", "b2", "w_head", "b_head"]),
        ] {
            let p = init_params(arch, 7, 16, 0);
            assert_eq!(p.names(), expected_names.as_slice(), "{arch:?}");
            for (i, (name, shape)) in expected_shapes(arch, 7, 16).iter().enumerate() {
                assert_eq!(p.names()[i], *name);
                assert_eq!(p.shape(i), *shape, "{arch:?} {name}");
            }
        }
    }

    #[test]
    fn serialization_round_trip_and_shape_check() {
        let (features, edges, labels) = separable_fixture(24, 4);
        let split = fixture_split(24, &labels);
        let cfg = ClassifierConfig {
            epochs: 5,
            arch: Arch::Gin,
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&features, &edges, &labels, &split, &cfg).unwrap();
        let json = clf.to_json().unwrap();
        let back = TrainedClassifier::from_json(&json).unwrap();
        assert_eq!(clf, back);

        // corrupt a shape
        let mut tampered: serde_json::Value = serde_json::from_str(&json).unwrap();
        tampered["hidden"] = serde_json::json!(99);
        let bad = TrainedClassifier::from_json(&tampered.to_string());
        assert!(bad.is_err());
    }

    #[test]
    fn evaluation_is_pure() {
        let (features, edges, labels) = separable_fixture(40, 6);
        let split = fixture_split(40, &labels);
        let sensitive = Array2::from_shape_fn((40, 1), |(i, _)| f64::from(i % 3 == 0));
        let cfg = ClassifierConfig {
            epochs: 20,
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&features, &edges, &labels, &split, &cfg).unwrap();
        let a = evaluate(&clf, &features, &edges, &labels, &sensitive, &split, 0).unwrap();
        let b = evaluate(&clf, &features, &edges, &labels, &sensitive, &split, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_negative_predictor_has_zero_gap_and_f1() {
        let yhat = vec![0u8; 10];
        let y: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let s: Vec<f64> = (0..10).map(|i| f64::from(i < 5)).collect();
        assert_eq!(metrics::delta_sp(&yhat, &s).unwrap(), 0.0);
        assert_eq!(metrics::f1(&yhat, &y), 0.0);
    }
}
