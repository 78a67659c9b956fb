//! Feature debiasing: correlation-guided pre-masking, then adversarial
//! reconstruction of the surviving columns.
//!
//! Pre-masking removes features that are simultaneously among the most
//! sensitive-correlated and the least label-correlated (their intersection
//! trades fairness against accuracy), plus every feature whose sensitive
//! correlation reaches the hard threshold `r_s`. Reconstruction then learns
//! a diagonal reweighting of the masked matrix under four pulls: stay close
//! to the input, stay sparse, minimize distance covariance with S, and fool
//! a sensitive-attribute adversary trained in alternation.

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::nn::{init_bias, init_weight, linear_forward, AdamState, ModelParams, ParamSet, Tape};
use crate::nn::proximal_l1_step;
use crate::stats::{self, CenteredReference};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Outcome of the pre-masking selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    /// Indices of the x features most correlated with S.
    pub set_top: Vec<usize>,
    /// Indices of the x features least correlated with the labels.
    pub set_les: Vec<usize>,
    /// `set_top ∩ set_les`.
    pub set_int: Vec<usize>,
    /// Features at or above the hard sensitive threshold.
    pub set_sen: Vec<usize>,
    /// `set_int ∪ set_sen` — the columns that get masked.
    pub set_uni: Vec<usize>,
    /// Per-feature R²(X_i, S).
    pub scores_sensitive: Vec<f64>,
    /// Per-feature R²(X_i, Y).
    pub scores_label: Vec<f64>,
    pub r: f64,
    pub r_s: f64,
    /// `x = floor(r * d)`.
    pub x: usize,
}

/// Per-feature dependence scores against the full sensitive matrix and the
/// labels. Constant columns fall into the zero-variance branch and score 0.
pub fn premask_scores(g: &AttributedGraph) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = g.labels_f64();
    let s_ref = stats::centered_reference(g.sensitive.view())?;
    let y_ref = stats::centered_reference(y.view())?;
    let d = g.d();
    let mut s_scores = Vec::with_capacity(d);
    let mut y_scores = Vec::with_capacity(d);
    for i in 0..d {
        let col = g
            .features
            .column(i)
            .to_owned()
            .into_shape_with_order((g.n, 1))
            .expect("column shape");
        s_scores.push(stats::dcor2_vs_reference(col.view(), &s_ref)?);
        y_scores.push(stats::dcor2_vs_reference(col.view(), &y_ref)?);
    }
    Ok((s_scores, y_scores))
}

/// Select the masked column set from the two score vectors.
///
/// `set_top` holds the `x = floor(r d)` highest sensitive scores, `set_les`
/// the `x` lowest label scores (ties broken toward the lower index), and
/// `set_sen` every feature with sensitive score `>= r_s`.
pub fn premask_select(
    scores_sensitive: &[f64],
    scores_label: &[f64],
    r: f64,
    r_s: f64,
) -> Result<MaskReport> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Config(format!("distributed ratio r={r} outside (0, 1)")));
    }
    if !(r_s > 0.0 && r_s < 1.0) {
        return Err(Error::Config(format!("sensitive threshold r_s={r_s} outside (0, 1)")));
    }
    let d = scores_sensitive.len();
    if scores_label.len() != d {
        return Err(Error::Shape("score vectors differ in length".into()));
    }
    let x = (r * d as f64).floor() as usize;

    let mut by_sens: Vec<usize> = (0..d).collect();
    by_sens.sort_by(|&a, &b| {
        scores_sensitive[b]
            .partial_cmp(&scores_sensitive[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut set_top: Vec<usize> = by_sens[..x].to_vec();
    set_top.sort_unstable();

    let mut by_label: Vec<usize> = (0..d).collect();
    by_label.sort_by(|&a, &b| {
        scores_label[a]
            .partial_cmp(&scores_label[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut set_les: Vec<usize> = by_label[..x].to_vec();
    set_les.sort_unstable();

    let set_int: Vec<usize> = set_top
        .iter()
        .filter(|i| set_les.contains(i))
        .copied()
        .collect();
    let set_sen: Vec<usize> = (0..d).filter(|&i| scores_sensitive[i] >= r_s).collect();
    let mut set_uni: Vec<usize> = set_int.clone();
    for &i in &set_sen {
        if !set_uni.contains(&i) {
            set_uni.push(i);
        }
    }
    set_uni.sort_unstable();

    Ok(MaskReport {
        set_top,
        set_les,
        set_int,
        set_sen,
        set_uni,
        scores_sensitive: scores_sensitive.to_vec(),
        scores_label: scores_label.to_vec(),
        r,
        r_s,
        x,
    })
}

/// Drop the masked columns, preserving order. Errors when nothing survives.
pub fn apply_mask(
    features: &Array2<f64>,
    feature_names: &[String],
    report: &MaskReport,
) -> Result<(Array2<f64>, Vec<String>)> {
    let d = features.ncols();
    if let Some(&bad) = report.set_uni.iter().find(|&&i| i >= d) {
        return Err(Error::Config(format!("mask index {bad} out of range for d={d}")));
    }
    let keep: Vec<usize> = (0..d).filter(|i| !report.set_uni.contains(i)).collect();
    if keep.is_empty() {
        return Err(Error::Validation(
            "pre-masking removed every feature; nothing left to reconstruct".into(),
        ));
    }
    let kept = features.select(ndarray::Axis(1), &keep);
    let names = keep.iter().map(|&i| feature_names[i].clone()).collect();
    Ok((kept, names))
}

/// Reconstruction hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructConfig {
    /// L1 sparsity weight on the diagonal reweighting.
    pub lambda1: f64,
    /// Distance-covariance penalty weight.
    pub lambda2: f64,
    /// Adversarial term weight.
    pub lambda3: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            lambda1: 1e-3,
            lambda2: 1.0,
            lambda3: 0.02,
            epochs: 500,
            lr: 1e-3,
            weight_decay: 1e-5,
            seed: 0,
        }
    }
}

/// Losses recorded each epoch (values before that epoch's weight update).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochLosses {
    pub reconstruction: f64,
    pub l1: f64,
    pub dcov: f64,
    pub adversary: f64,
    pub total: f64,
}

/// Result of the reconstruction stage.
#[derive(Debug, Clone)]
pub struct FeatureDebiasResult {
    /// Learned diagonal weights, one per masked column.
    pub weights: Vec<f64>,
    /// Debiased feature matrix `X̃ diag(W)`.
    pub debiased: Array2<f64>,
    /// Trained adversary (a single affine map plus sigmoid).
    pub adversary: ModelParams,
    pub trajectory: Vec<EpochLosses>,
}

pub(crate) struct ReconstructState {
    pub x_tilde: Array2<f64>,
    pub sensitive: Arc<Array2<f64>>,
    pub s_ref: Arc<CenteredReference>,
    pub weights: ParamSet,
    pub adversary: ParamSet,
    adv_opt: AdamState,
    cfg: ReconstructConfig,
}

impl ReconstructState {
    fn new(
        x_tilde: &Array2<f64>,
        sensitive: &Array2<f64>,
        s_ref: Arc<CenteredReference>,
        cfg: &ReconstructConfig,
    ) -> Result<Self> {
        let d_m = x_tilde.ncols();
        if d_m == 0 {
            return Err(Error::Validation("reconstruction needs at least one column".into()));
        }
        let k = sensitive.ncols();
        let mut weights = ParamSet::new();
        weights.insert("w_f", Array2::from_elem((1, d_m), 1.0));
        let mut adversary = ParamSet::new();
        adversary.insert("w_a", init_weight(d_m, k, cfg.seed, "adversary-w"));
        adversary.insert("b_a", init_bias(k));
        let adv_opt = AdamState::new(&adversary, cfg.lr, cfg.weight_decay);
        Ok(ReconstructState {
            x_tilde: x_tilde.clone(),
            sensitive: Arc::new(sensitive.clone()),
            s_ref,
            weights,
            adversary,
            adv_opt,
            cfg: cfg.clone(),
        })
    }

    fn x_hat_value(&self) -> Array2<f64> {
        let w = self.weights.get("w_f");
        let mut out = self.x_tilde.clone();
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[[i, j]] *= w[[0, j]];
            }
        }
        out
    }

    /// One adversary update: minimize BCE(S, sigmoid(X̂ W_a + b_a)) with the
    /// reconstruction weights held fixed.
    pub(crate) fn adversary_step(&mut self) -> Result<f64> {
        let mut tape = Tape::new();
        let x_hat = tape.constant(self.x_hat_value());
        let w_a = tape.leaf(self.adversary.get("w_a"), true);
        let b_a = tape.leaf(self.adversary.get("b_a"), true);
        let logits = linear_forward(&mut tape, x_hat, w_a, b_a);
        let probs = tape.sigmoid(logits);
        let loss = tape.bce_loss(probs, self.sensitive.clone());
        let value = tape.scalar(loss);
        tape.backward(loss);
        let grads = vec![tape.grad(w_a), tape.grad(b_a)];
        self.adv_opt.step(&mut self.adversary, &grads)?;
        Ok(value)
    }

    /// One main update: a plain gradient step on
    /// `L_r + λ2 V²(X̂, S) − λ3 BCE(S, Ŝ)` over the diagonal weights,
    /// followed by soft thresholding with λ1.
    pub(crate) fn main_step(&mut self, epoch: usize) -> Result<EpochLosses> {
        let cfg = &self.cfg;
        let mut tape = Tape::new();
        let x_t = tape.constant(self.x_tilde.clone());
        let w = tape.leaf(self.weights.get("w_f"), true);
        let x_hat = tape.mul_row(x_t, w);
        let diff = tape.sub(x_t, x_hat);
        let l_r = tape.frob_norm(diff);
        let mut loss = l_r;
        let mut l_s_val = 0.0;
        if cfg.lambda2 != 0.0 {
            let l_s = tape.dcov_loss(x_hat, self.s_ref.clone());
            l_s_val = tape.scalar(l_s);
            let scaled = tape.scale(l_s, cfg.lambda2);
            loss = tape.add(loss, scaled);
        }
        let mut l_a_val = 0.0;
        if cfg.lambda3 != 0.0 {
            let w_a = tape.constant(self.adversary.get("w_a"));
            let b_a = tape.constant(self.adversary.get("b_a"));
            let logits = linear_forward(&mut tape, x_hat, w_a, b_a);
            let probs = tape.sigmoid(logits);
            let l_a = tape.bce_loss(probs, self.sensitive.clone());
            l_a_val = tape.scalar(l_a);
            let scaled = tape.scale(l_a, -cfg.lambda3);
            loss = tape.add(loss, scaled);
        }
        let l_r_val = tape.scalar(l_r);
        let total = tape.scalar(loss);
        if !total.is_finite() {
            return Err(Error::Numeric {
                epoch,
                msg: format!("feature-debias loss became {total}"),
            });
        }
        // snapshot of the state entering this epoch
        let l1 = self
            .weights
            .get("w_f")
            .iter()
            .map(|v| v.abs())
            .sum::<f64>();
        tape.backward(loss);
        let grad = tape.grad(w);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient("w_f".into()));
        }
        let mut w_val = self.weights.get("w_f");
        w_val = w_val - grad.mapv(|g| g * cfg.lr);
        proximal_l1_step(&mut w_val, cfg.lr, cfg.lambda1);
        let idx = self.weights.index_of("w_f");
        self.weights.set(idx, &w_val);

        Ok(EpochLosses {
            reconstruction: l_r_val,
            l1,
            dcov: l_s_val,
            adversary: l_a_val,
            total,
        })
    }
}

/// Run the alternating reconstruction loop.
pub fn reconstruct(
    x_tilde: &Array2<f64>,
    sensitive: &Array2<f64>,
    cfg: &ReconstructConfig,
) -> Result<FeatureDebiasResult> {
    let s_ref = Arc::new(stats::centered_reference(sensitive.view())?);
    reconstruct_with_reference(x_tilde, sensitive, s_ref, cfg)
}

/// Same as [`reconstruct`] with a shared precomputed reference for S, so a
/// multi-seed battery pays the O(n²) centering once.
pub fn reconstruct_with_reference(
    x_tilde: &Array2<f64>,
    sensitive: &Array2<f64>,
    s_ref: Arc<CenteredReference>,
    cfg: &ReconstructConfig,
) -> Result<FeatureDebiasResult> {
    if x_tilde.nrows() != sensitive.nrows() {
        return Err(Error::Shape(format!(
            "features have {} rows, sensitive has {}",
            x_tilde.nrows(),
            sensitive.nrows()
        )));
    }
    let mut state = ReconstructState::new(x_tilde, sensitive, s_ref, cfg)?;
    let mut trajectory = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.lambda3 != 0.0 {
            state.adversary_step()?;
        }
        trajectory.push(state.main_step(epoch)?);
    }
    let weights: Vec<f64> = state.weights.get("w_f").iter().copied().collect();
    let debiased = state.x_hat_value();
    Ok(FeatureDebiasResult {
        weights,
        debiased,
        adversary: ModelParams::new("mlp1", state.adversary.clone())?,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn premask_select_hand_example() {
        let s = [0.9, 0.2, 0.6, 0.1, 0.5];
        let y = [0.1, 0.8, 0.2, 0.9, 0.7];
        let rep = premask_select(&s, &y, 0.4, 0.8).unwrap();
        assert_eq!(rep.x, 2);
        assert_eq!(rep.set_top, vec![0, 2]);
        assert_eq!(rep.set_les, vec![0, 2]);
        assert_eq!(rep.set_int, vec![0, 2]);
        assert_eq!(rep.set_sen, vec![0]);
        assert_eq!(rep.set_uni, vec![0, 2]);
    }

    #[test]
    fn premask_select_no_scores_above_threshold() {
        let s = [0.5, 0.4, 0.3];
        let y = [0.5, 0.4, 0.3];
        let rep = premask_select(&s, &y, 0.5, 0.95).unwrap();
        assert!(rep.set_sen.is_empty());
        assert_eq!(rep.set_uni, rep.set_int);
    }

    #[test]
    fn premask_select_equal_scores_tie_break_to_low_index() {
        let s = [0.5; 5];
        let y = [0.1, 0.2, 0.3, 0.4, 0.5];
        let rep = premask_select(&s, &y, 0.5, 0.9).unwrap();
        assert_eq!(rep.set_top, vec![0, 1]);
    }

    #[test]
    fn premask_select_rejects_bad_thresholds() {
        assert!(premask_select(&[0.5], &[0.5], 0.0, 0.5).is_err());
        assert!(premask_select(&[0.5], &[0.5], 0.5, 1.0).is_err());
    }

    #[test]
    fn premask_monotone_in_r_and_rs() {
        let mut rng = rng::stream(0, "premask-mono");
        for _ in 0..200 {
            let d = rng.gen_range(3..=12);
            let s: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let r_lo = rng.gen_range(0.1..0.5);
            let r_hi = rng.gen_range(r_lo..0.95);
            let rs_lo = rng.gen_range(0.1..0.5);
            let rs_hi = rng.gen_range(rs_lo..0.95);
            let a = premask_select(&s, &y, r_lo, rs_lo).unwrap();
            let b = premask_select(&s, &y, r_hi, rs_lo).unwrap();
            // raising r never shrinks set_top / set_les
            assert!(a.set_top.iter().all(|i| b.set_top.contains(i)));
            assert!(a.set_les.iter().all(|i| b.set_les.contains(i)));
            // raising r_s never grows set_sen
            let c = premask_select(&s, &y, r_lo, rs_hi).unwrap();
            assert!(c.set_sen.iter().all(|i| a.set_sen.contains(i)));
        }
    }

    #[test]
    fn premask_scores_flag_sensitive_copy_and_constant() {
        use crate::graph::AttributedGraph;
        let n = 60;
        let mut rng = rng::stream(3, "premask-scores");
        let s_col: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let mut features = Array2::zeros((n, 3));
        for i in 0..n {
            features[[i, 0]] = s_col[i]; // exact copy of S
            features[[i, 1]] = rng.gen_range(-1.0..1.0); // independent
            features[[i, 2]] = 4.2; // constant
        }
        let g = AttributedGraph::new(
            features,
            vec!["copy".into(), "noise".into(), "const".into()],
            Array2::from_shape_vec((n, 1), s_col).unwrap(),
            vec!["s".into()],
            (0..n).map(|i| (i % 2) as u8).collect(),
            vec![(0, 1)],
        )
        .unwrap();
        let (s_scores, y_scores) = premask_scores(&g).unwrap();
        assert_abs_diff_eq!(s_scores[0], 1.0, epsilon = 1e-9);
        assert!(s_scores[1] < 0.25, "independent column scored {}", s_scores[1]);
        assert_eq!(s_scores[2], 0.0);
        assert_eq!(y_scores[2], 0.0);
    }

    #[test]
    fn apply_mask_keeps_order_and_errors_when_empty() {
        let feats = array![[1.0, 2.0, 3.0, 4.0, 5.0], [6.0, 7.0, 8.0, 9.0, 10.0]];
        let names: Vec<String> = ["f0", "f1", "f2", "f3", "f4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rep = premask_select(&[0.5; 5], &[0.5; 5], 0.2, 0.9).unwrap();
        rep.set_uni = vec![0, 2];
        let (kept, kept_names) = apply_mask(&feats, &names, &rep).unwrap();
        assert_eq!(kept_names, vec!["f1", "f3", "f4"]);
        assert_eq!(kept, array![[2.0, 4.0, 5.0], [7.0, 9.0, 10.0]]);

        rep.set_uni = vec![];
        let (unchanged, _) = apply_mask(&feats, &names, &rep).unwrap();
        assert_eq!(unchanged, feats);

        rep.set_uni = (0..5).collect();
        assert!(apply_mask(&feats, &names, &rep).is_err());
    }

    fn toy_inputs(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = rng::stream(seed, "toy-reconstruct");
        let s = Array2::from_shape_fn((n, 1), |_| f64::from(rng.gen_bool(0.5)));
        let mut x = Array2::zeros((n, 3));
        for i in 0..n {
            x[[i, 0]] = 2.0 * s[[i, 0]] - 1.0 + 0.3 * rng.gen_range(-1.0..1.0);
            x[[i, 1]] = rng.gen_range(-1.0..1.0);
            x[[i, 2]] = rng.gen_range(-1.0..1.0);
        }
        (x, s)
    }

    #[test]
    fn reconstruction_only_fixed_point_is_identity() {
        let (x, s) = toy_inputs(24, 0);
        let cfg = ReconstructConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            epochs: 50,
            ..ReconstructConfig::default()
        };
        let res = reconstruct(&x, &s, &cfg).unwrap();
        for w in &res.weights {
            assert_abs_diff_eq!(*w, 1.0, epsilon = 1e-12);
        }
        let first = res.trajectory.first().unwrap().reconstruction;
        let last = res.trajectory.last().unwrap().reconstruction;
        assert!(last <= first + 1e-12);
    }

    #[test]
    fn huge_lambda1_zeroes_weights_after_first_step() {
        let (x, s) = toy_inputs(24, 1);
        let cfg = ReconstructConfig {
            lambda1: 1e6,
            lambda2: 1.0,
            lambda3: 0.0,
            epochs: 1,
            ..ReconstructConfig::default()
        };
        let res = reconstruct(&x, &s, &cfg).unwrap();
        assert!(res.weights.iter().all(|&w| w == 0.0), "{:?}", res.weights);
    }

    #[test]
    fn dcov_penalty_reduces_sensitive_correlation() {
        let (x, s) = toy_inputs(60, 2);
        let cfg = ReconstructConfig {
            lambda1: 1e-3,
            lambda2: 20.0,
            lambda3: 0.0,
            epochs: 300,
            ..ReconstructConfig::default()
        };
        let res = reconstruct(&x, &s, &cfg).unwrap();
        let before = stats::dcor2(x.view(), s.view()).unwrap();
        let after = stats::dcor2(res.debiased.view(), s.view()).unwrap();
        assert!(
            after < before,
            "dcor2 did not drop: {before} -> {after}"
        );
    }

    #[test]
    fn steps_do_not_touch_each_others_parameters() {
        let (x, s) = toy_inputs(20, 3);
        let cfg = ReconstructConfig::default();
        let s_ref = Arc::new(stats::centered_reference(s.view()).unwrap());
        let mut state = ReconstructState::new(&x, &s, s_ref, &cfg).unwrap();
        let w_before = state.weights.clone();
        state.adversary_step().unwrap();
        assert_eq!(state.weights, w_before, "adversary step moved w_f");
        let adv_before = state.adversary.clone();
        state.main_step(0).unwrap();
        assert_eq!(state.adversary, adv_before, "main step moved adversary");
    }

    #[test]
    fn main_loss_non_increasing_without_adversary() {
        // lambda2 sized so that downweighting the sensitive column pays for
        // the reconstruction error it causes; descent must then stick.
        for seed in 0..10 {
            let (x, s) = toy_inputs(40, 100 + seed);
            let cfg = ReconstructConfig {
                lambda1: 1e-3,
                lambda2: 100.0,
                lambda3: 0.0,
                epochs: 300,
                seed,
                ..ReconstructConfig::default()
            };
            let res = reconstruct(&x, &s, &cfg).unwrap();
            let objective =
                |e: &EpochLosses| e.reconstruction + cfg.lambda1 * e.l1 + cfg.lambda2 * e.dcov;
            let first = objective(res.trajectory.first().unwrap());
            let last = objective(res.trajectory.last().unwrap());
            assert!(
                last <= first + 1e-9,
                "seed {seed}: objective grew {first} -> {last}"
            );
        }
    }
}
