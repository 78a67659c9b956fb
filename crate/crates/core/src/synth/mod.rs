//! Synthetic attributed graphs with controllable feature and topology bias.
//!
//! Two binary sensitive attributes are laid out by fixed interleaving
//! plans over 2500 nodes. Biased features sample each 3-column block from
//! group-specific Gaussians; debiased features are one iid Gaussian cloud.
//! Biased topology is a two-block stochastic block model over node-index
//! blocks, debiased topology a random geometric graph, and the four
//! feature/topology combinations form the scenario matrix used across the
//! evaluation and attack harnesses.

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rng;
use crate::stats;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Block plan: consecutive runs of (count, group) assignments.
pub type BlockPlan = Vec<(usize, u8)>;

/// Generation parameters. Defaults reproduce the reference construction:
/// 2500 nodes, minority/majority splits 500/2000 and 700/1800, strongly
/// separated Gaussian means, a (500, 2000) block SBM and a radius-0.033
/// geometric graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    /// Gaussian means for the minor-attribute feature block.
    pub mu_minor: ([f64; 3], [f64; 3]),
    /// Gaussian means for the major-attribute feature block.
    pub mu_major: ([f64; 3], [f64; 3]),
    /// Mean of the debiased feature cloud.
    pub mu_unbiased: [f64; 6],
    /// Interleaving of the minor attribute (groups sized 500/2000).
    pub minor_plan: BlockPlan,
    /// Interleaving of the major attribute (groups sized 700/1800).
    pub major_plan: BlockPlan,
    pub sbm_sizes: (usize, usize),
    pub sbm_p_in: f64,
    pub sbm_p_out: f64,
    pub rgg_radius: f64,
    /// Logit gain of the label model over standardized features. The
    /// default keeps labels noisy enough that fairness interventions have
    /// room to trade; large values make labels nearly deterministic.
    pub label_gain: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 2500,
            mu_minor: ([-10.0, -2.0, -5.0], [10.0, 2.0, 5.0]),
            mu_major: ([-12.0, -8.0, -4.0], [12.0, 8.0, 4.0]),
            mu_unbiased: [0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            minor_plan: vec![
                (100, 0),
                (200, 1),
                (200, 0),
                (600, 1),
                (100, 0),
                (700, 1),
                (100, 0),
                (500, 1),
            ],
            major_plan: vec![(300, 0), (1200, 1), (400, 0), (600, 1)],
            sbm_sizes: (500, 2000),
            sbm_p_in: 5e-3,
            sbm_p_out: 1e-7,
            rgg_radius: 0.033,
            label_gain: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (plan, what) in [(&self.minor_plan, "minor"), (&self.major_plan, "major")] {
            let total: usize = plan.iter().map(|(c, _)| c).sum();
            if total != self.n {
                return Err(Error::Config(format!(
                    "{what} plan covers {total} nodes, expected {}",
                    self.n
                )));
            }
        }
        if self.sbm_sizes.0 + self.sbm_sizes.1 != self.n {
            return Err(Error::Config("SBM block sizes must cover all nodes".into()));
        }
        for p in [self.sbm_p_in, self.sbm_p_out] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("SBM probability {p} outside [0, 1]")));
            }
        }
        if self.rgg_radius <= 0.0 {
            return Err(Error::Config("RGG radius must be positive".into()));
        }
        Ok(())
    }
}

/// The four feature/topology scenario cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioCase {
    /// Biased features, debiased topology.
    Bfdt,
    /// Debiased features, biased topology.
    Dfbt,
    /// Biased features, biased topology.
    Bfbt,
    /// Debiased features, debiased topology.
    Dfdt,
}

impl ScenarioCase {
    pub const ALL: [ScenarioCase; 4] = [
        ScenarioCase::Bfdt,
        ScenarioCase::Dfbt,
        ScenarioCase::Bfbt,
        ScenarioCase::Dfdt,
    ];

    pub fn biased_features(self) -> bool {
        matches!(self, ScenarioCase::Bfdt | ScenarioCase::Bfbt)
    }

    pub fn biased_topology(self) -> bool {
        matches!(self, ScenarioCase::Dfbt | ScenarioCase::Bfbt)
    }
}

impl fmt::Display for ScenarioCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            ScenarioCase::Bfdt => "BFDT",
            ScenarioCase::Dfbt => "DFBT",
            ScenarioCase::Bfbt => "BFBT",
            ScenarioCase::Dfdt => "DFDT",
        };
        f.write_str(tag)
    }
}

impl FromStr for ScenarioCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BFDT" => Ok(ScenarioCase::Bfdt),
            "DFBT" => Ok(ScenarioCase::Dfbt),
            "BFBT" => Ok(ScenarioCase::Bfbt),
            "DFDT" => Ok(ScenarioCase::Dfdt),
            other => Err(Error::Config(format!(
                "unknown scenario case `{other}`; expected BFDT/DFBT/BFBT/DFDT"
            ))),
        }
    }
}

fn expand_plan(plan: &BlockPlan) -> Vec<u8> {
    let mut out = Vec::new();
    for &(count, group) in plan {
        out.extend(std::iter::repeat(group).take(count));
    }
    out
}

/// Biased feature matrix (raw scale) plus the sensitive matrix.
///
/// Columns 0..3 follow the minor-attribute plan, columns 3..6 the major
/// plan. The returned sensitive matrix has the major attribute in column 0
/// and the minor in column 1, matching the graph convention.
pub fn gen_biased_features(spec: &SynthSpec, seed: u64) -> Result<(Array2<f64>, Array2<f64>)> {
    spec.validate()?;
    let minor = expand_plan(&spec.minor_plan);
    let major = expand_plan(&spec.major_plan);
    let mut rng = rng::stream(seed, "synth-biased-features");
    let mut features = Array2::zeros((spec.n, 6));
    for i in 0..spec.n {
        let mu_n = if minor[i] == 0 {
            spec.mu_minor.0
        } else {
            spec.mu_minor.1
        };
        let mu_m = if major[i] == 0 {
            spec.mu_major.0
        } else {
            spec.mu_major.1
        };
        for c in 0..3 {
            let z: f64 = rng.sample(StandardNormal);
            features[[i, c]] = mu_n[c] + z;
        }
        for c in 0..3 {
            let z: f64 = rng.sample(StandardNormal);
            features[[i, 3 + c]] = mu_m[c] + z;
        }
    }
    let mut sensitive = Array2::zeros((spec.n, 2));
    for i in 0..spec.n {
        sensitive[[i, 0]] = f64::from(major[i]);
        sensitive[[i, 1]] = f64::from(minor[i]);
    }
    Ok((features, sensitive))
}

/// Debiased feature matrix: iid rows around `mu_unbiased`, identity covariance.
pub fn gen_unbiased_features(spec: &SynthSpec, seed: u64) -> Result<Array2<f64>> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "synth-unbiased-features");
    let mut features = Array2::zeros((spec.n, 6));
    for i in 0..spec.n {
        for c in 0..6 {
            let z: f64 = rng.sample(StandardNormal);
            features[[i, c]] = spec.mu_unbiased[c] + z;
        }
    }
    Ok(features)
}

/// Two-block stochastic block model over node-index blocks
/// `[0, sizes.0)` and `[sizes.0, n)`: intra-block pairs link with `p_in`,
/// inter-block pairs with `p_out`. Undirected, no self-loops.
pub fn gen_sbm(spec: &SynthSpec, seed: u64) -> Result<Vec<(u32, u32)>> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "synth-sbm");
    let boundary = spec.sbm_sizes.0;
    let mut edges = Vec::new();
    for i in 0..spec.n {
        for j in (i + 1)..spec.n {
            let p = if (i < boundary) == (j < boundary) {
                spec.sbm_p_in
            } else {
                spec.sbm_p_out
            };
            if p > 0.0 && rng.gen::<f64>() < p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    Ok(edges)
}

/// Random geometric graph: nodes uniform in the unit square, an edge
/// whenever the Euclidean distance is at most the radius.
pub fn gen_rgg(spec: &SynthSpec, seed: u64) -> Result<Vec<(u32, u32)>> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "synth-rgg");
    let positions: Vec<(f64, f64)> = (0..spec.n)
        .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    let r2 = spec.rgg_radius * spec.rgg_radius;
    let mut edges = Vec::new();
    for i in 0..spec.n {
        for j in (i + 1)..spec.n {
            let dx = positions[i].0 - positions[j].0;
            let dy = positions[i].1 - positions[j].1;
            if dx * dx + dy * dy <= r2 {
                edges.push((i as u32, j as u32));
            }
        }
    }
    Ok(edges)
}

/// Draw labels from a logistic model over the standardized features: a
/// seeded unit weight vector scores each node and labels are Bernoulli in
/// the sigmoid of `gain * score`. Draws that leave a class below 10% are
/// rejected and redrawn with the next sub-seed so downstream stratified
/// splits stay feasible.
fn gen_labels(features: &Array2<f64>, gain: f64, seed: u64) -> Result<Vec<u8>> {
    let n = features.nrows();
    let d = features.ncols();
    for attempt in 0..20u64 {
        let mut rng = rng::stream(seed ^ (attempt << 32), "synth-labels");
        let mut w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in w.iter_mut() {
            *v /= norm;
        }
        let labels: Vec<u8> = (0..n)
            .map(|i| {
                let logit: f64 = (0..d).map(|c| w[c] * features[[i, c]]).sum();
                let p = 1.0 / (1.0 + (-gain * logit).exp());
                u8::from(rng.gen::<f64>() < p)
            })
            .collect();
        let pos = labels.iter().filter(|&&l| l == 1).count();
        let frac = pos as f64 / n as f64;
        if (0.1..=0.9).contains(&frac) {
            return Ok(labels);
        }
    }
    Err(Error::Numeric {
        epoch: 0,
        msg: "could not draw balanced synthetic labels".into(),
    })
}

/// Assemble a scenario case into a full graph.
///
/// Features are generated raw per the case and released column-standardized
/// — the convention under which the reference sensitive-correlation values
/// are reproduced. Labels are drawn from a logistic model over the released
/// (standardized) features. Sensitive columns are named `s_major` /
/// `s_minor`.
pub fn assemble_case(
    spec: &SynthSpec,
    case: ScenarioCase,
    seed: u64,
) -> Result<AttributedGraph> {
    spec.validate()?;
    let (biased, sensitive) = gen_biased_features(spec, seed)?;
    let features_raw = if case.biased_features() {
        biased
    } else {
        gen_unbiased_features(spec, seed)?
    };
    let edges = if case.biased_topology() {
        gen_sbm(spec, seed)?
    } else {
        gen_rgg(spec, seed)?
    };
    let features = stats::zscore_columns(&features_raw);
    let labels = gen_labels(&features, spec.label_gain, seed)?;
    let feature_names = (0..6).map(|c| format!("x{c}")).collect();
    AttributedGraph::new(
        features,
        feature_names,
        sensitive,
        vec!["s_major".into(), "s_minor".into()],
        labels,
        edges,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn group_sizes_are_exact() {
        let spec = SynthSpec::default();
        let (_, s) = gen_biased_features(&spec, 0).unwrap();
        let minor0 = s.column(1).iter().filter(|&&v| v == 0.0).count();
        let major0 = s.column(0).iter().filter(|&&v| v == 0.0).count();
        assert_eq!(minor0, 500);
        assert_eq!(major0, 700);
    }

    #[test]
    fn biased_majority_means_match_construction() {
        let spec = SynthSpec::default();
        let (x, s) = gen_biased_features(&spec, 0).unwrap();
        let rows: Vec<usize> = (0..spec.n).filter(|&i| s[[i, 1]] == 1.0).collect();
        assert_eq!(rows.len(), 2000);
        let tol = 3.0 / (2000f64).sqrt();
        for (c, mu) in [(0, 10.0), (1, 2.0), (2, 5.0)] {
            let mean: f64 = rows.iter().map(|&i| x[[i, c]]).sum::<f64>() / rows.len() as f64;
            assert!((mean - mu).abs() < tol, "col {c}: mean {mean} vs {mu}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = SynthSpec::default();
        assert_eq!(
            gen_biased_features(&spec, 7).unwrap(),
            gen_biased_features(&spec, 7).unwrap()
        );
        assert_eq!(gen_sbm(&spec, 7).unwrap(), gen_sbm(&spec, 7).unwrap());
        assert_eq!(gen_rgg(&spec, 7).unwrap(), gen_rgg(&spec, 7).unwrap());
        let a = assemble_case(&spec, ScenarioCase::Bfbt, 3).unwrap();
        let b = assemble_case(&spec, ScenarioCase::Bfbt, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unbiased_column_mean_is_near_one() {
        let spec = SynthSpec::default();
        let x = gen_unbiased_features(&spec, 0).unwrap();
        let mean: f64 = x.column(1).sum() / spec.n as f64;
        assert!((mean - 1.0).abs() < 0.06, "mean {mean}");
    }

    #[test]
    fn sbm_edge_counts_match_binomial_expectation() {
        let spec = SynthSpec::default();
        let edges = gen_sbm(&spec, 0).unwrap();
        let intra0 = edges.iter().filter(|&&(a, b)| a < 500 && b < 500).count() as f64;
        let inter = edges
            .iter()
            .filter(|&&(a, b)| (a < 500) != (b < 500))
            .count();
        let expect: f64 = 500.0 * 499.0 / 2.0 * 5e-3;
        let sigma = expect.sqrt();
        assert!(
            (intra0 - expect).abs() < 4.0 * sigma,
            "intra block 0: {intra0} vs {expect}"
        );
        assert!(inter <= 2, "inter-block edges should be near zero, got {inter}");
    }

    #[test]
    fn sbm_zero_probabilities_give_empty_graph() {
        let spec = SynthSpec {
            sbm_p_in: 0.0,
            sbm_p_out: 0.0,
            ..SynthSpec::default()
        };
        assert!(gen_sbm(&spec, 0).unwrap().is_empty());
    }

    #[test]
    fn rgg_degenerate_radii() {
        let spec = SynthSpec {
            n: 5,
            minor_plan: vec![(1, 0), (4, 1)],
            major_plan: vec![(2, 0), (3, 1)],
            sbm_sizes: (1, 4),
            rgg_radius: std::f64::consts::SQRT_2,
            ..SynthSpec::default()
        };
        let edges = gen_rgg(&spec, 0).unwrap();
        assert_eq!(edges.len(), 10, "radius sqrt(2) must give the complete graph");
        let tiny = SynthSpec {
            rgg_radius: 1e-9,
            ..spec
        };
        assert!(gen_rgg(&tiny, 0).unwrap().is_empty());
    }

    #[test]
    fn rgg_mean_degree_near_geometric_expectation() {
        let spec = SynthSpec::default();
        let edges = gen_rgg(&spec, 0).unwrap();
        let mean_degree = 2.0 * edges.len() as f64 / spec.n as f64;
        let expect = (spec.n as f64 - 1.0) * std::f64::consts::PI * spec.rgg_radius.powi(2);
        assert!(
            (mean_degree - expect).abs() / expect < 0.25,
            "mean degree {mean_degree} vs interior estimate {expect}"
        );
    }

    #[test]
    fn unbiased_features_independent_of_sensitive() {
        let spec = SynthSpec::default();
        let x = gen_unbiased_features(&spec, 0).unwrap();
        let (_, s) = gen_biased_features(&spec, 0).unwrap();
        // subsample for the permutation oracle to stay quick
        let idx: Vec<usize> = (0..spec.n).step_by(5).collect();
        let xs = x.select(ndarray::Axis(0), &idx);
        let ss = s.select(ndarray::Axis(0), &idx);
        let r2 = stats::dcor2(xs.view(), ss.view()).unwrap();
        assert!(r2 < 0.05, "dcor2 {r2}");
        let p =
            stats::permutation_independence_pvalue(xs.view(), ss.view(), 49, 0).unwrap();
        assert!(p > 0.05, "permutation p-value {p}");
    }

    #[test]
    fn case_tags_parse_and_wire() {
        assert_eq!("bfbt".parse::<ScenarioCase>().unwrap(), ScenarioCase::Bfbt);
        assert!("XXXX".parse::<ScenarioCase>().is_err());
        assert!(ScenarioCase::Bfbt.biased_features() && ScenarioCase::Bfbt.biased_topology());
        assert!(!ScenarioCase::Dfdt.biased_features() && !ScenarioCase::Dfdt.biased_topology());
    }
}
