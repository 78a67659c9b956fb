//! Batch orchestration: run the full debiasing pipeline (or any ablation of
//! it) across seeds, aggregate metrics and write reproducible artifacts.
//!
//! One stratified split is drawn per battery from the configured split
//! seed; the per-repetition seeds drive initialization, dropout and the
//! adversarial loops. Seeds run in a worker pool and results are collected
//! in seed order, so artifacts are byte-identical for identical configs.

mod config;

pub use config::{ClassifierSettings, DatasetSpec, Normalize, RunConfig, SplitSettings};

use crate::attack::{leakage_sweep, AttackInputs, CurvePoint};
use crate::classifier::{evaluate, train_classifier, ClassifierConfig};
use crate::error::{Error, Result};
use crate::feature_debias::{
    apply_mask, premask_scores, premask_select, reconstruct_with_reference, ReconstructConfig,
};
use crate::graph::{load_graph, split_stratified, AttributedGraph, DataSplit};
use crate::metrics::MetricsReport;
use crate::stats::{self, CenteredReference};
use crate::synth::{assemble_case, ScenarioCase, SynthSpec};
use crate::topology_debias::{
    ablation_variant, fair_mp_train, post_prune, EdgeWeightSet, FairMpConfig, PrunedTopology,
    StageFlags,
};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

/// What a battery runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// No debiasing beyond the sensitive-column removal done at load time.
    Vanilla,
    /// The full pipeline, respecting the config's ablation tag.
    Mapping,
}

/// Outcome of one battery.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub total_seeds: usize,
    pub succeeded: usize,
    pub reports: Vec<MetricsReport>,
}

impl RunSummary {
    pub fn all_succeeded(&self) -> bool {
        self.succeeded == self.total_seeds
    }
}

/// Load or synthesize the configured dataset and normalize features.
pub fn load_dataset(cfg: &RunConfig) -> Result<AttributedGraph> {
    let mut g = match &cfg.dataset {
        DatasetSpec::Csv {
            features,
            edges,
            labels,
            sensitive_columns,
        } => load_graph(
            Path::new(features),
            Path::new(edges),
            Path::new(labels),
            sensitive_columns,
        )?,
        DatasetSpec::Synth {
            case,
            data_seed,
            label_gain,
        } => {
            let case = ScenarioCase::from_str(case)?;
            let spec = SynthSpec {
                label_gain: *label_gain,
                ..SynthSpec::default()
            };
            assemble_case(&spec, case, *data_seed)?
        }
    };
    g.features = match cfg.normalize {
        Normalize::Zscore => stats::zscore_columns(&g.features),
        Normalize::Minmax => minmax_columns(&g.features),
        Normalize::None => g.features,
    };
    Ok(g)
}

fn minmax_columns(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut col in out.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            col.mapv_inplace(|v| 2.0 * (v - lo) / (hi - lo) - 1.0);
        } else {
            col.mapv_inplace(|_| 0.0);
        }
    }
    out
}

/// Per-seed artifacts.
struct SeedArtifacts {
    report: MetricsReport,
    pruned: Option<(EdgeWeightSet, PrunedTopology)>,
}

#[allow(clippy::too_many_arguments)]
fn run_seed(
    g: &AttributedGraph,
    split: &DataSplit,
    stages: StageFlags,
    masked: Option<&(Array2<f64>, Vec<String>)>,
    s_ref: &Arc<CenteredReference>,
    cfg: &RunConfig,
    variant: Variant,
    seed: u64,
) -> Result<SeedArtifacts> {
    let started = Instant::now();
    let x_tilde: &Array2<f64> = match (variant, stages.premask, masked) {
        (Variant::Vanilla, _, _) => &g.features,
        (Variant::Mapping, true, Some((m, _))) => m,
        (Variant::Mapping, _, _) => &g.features,
    };

    let x_hat: Array2<f64> = if variant == Variant::Mapping && stages.reconstruct {
        let rc = ReconstructConfig {
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
            lambda3: cfg.lambda3,
            epochs: cfg.feature_epochs,
            lr: cfg.debias_lr,
            weight_decay: cfg.debias_weight_decay,
            seed,
        };
        reconstruct_with_reference(x_tilde, &g.sensitive, s_ref.clone(), &rc)?.debiased
    } else {
        x_tilde.clone()
    };
    let t_feature = started.elapsed();

    let (edges_hat, pruned) = if variant == Variant::Mapping && stages.topology {
        let fc = FairMpConfig {
            lambda4: cfg.lambda4,
            epochs: cfg.topology_epochs,
            lr: cfg.debias_lr,
            weight_decay: cfg.debias_weight_decay,
            hidden: cfg.classifier.hidden,
            patience: cfg.classifier.patience,
            seed,
        };
        let fair = fair_mp_train(&x_hat, &g.edges, &g.labels, &split.train, s_ref.clone(), &fc)?;
        let pruned = post_prune(&fair.weights, cfg.r_p)?;
        (pruned.kept.clone(), Some((fair.weights, pruned)))
    } else {
        (g.edges.clone(), None)
    };
    let t_topology = started.elapsed() - t_feature;

    let cc = ClassifierConfig {
        arch: cfg.classifier.arch,
        hidden: cfg.classifier.hidden,
        dropout: cfg.classifier.dropout,
        epochs: cfg.classifier.epochs,
        lr: cfg.classifier.lr,
        weight_decay: cfg.classifier.weight_decay,
        patience: cfg.classifier.patience,
        seed,
    };
    let clf = train_classifier(&x_hat, &edges_hat, &g.labels, split, &cc)?;
    let report = evaluate(&clf, &x_hat, &edges_hat, &g.labels, &g.sensitive, split, seed)?;
    let t_classifier = started.elapsed() - t_feature - t_topology;
    eprintln!(
        "[fairpre] seed {seed}: feature {:.1}s, topology {:.1}s, classifier {:.1}s",
        t_feature.as_secs_f64(),
        t_topology.as_secs_f64(),
        t_classifier.as_secs_f64()
    );

    Ok(SeedArtifacts { report, pruned })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    variant: String,
    stages: StagesRecord,
    config: &'a RunConfig,
    n: usize,
    d_used: usize,
    sensitive_names: Vec<String>,
    per_seed_status: Vec<SeedStatus>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct StagesRecord {
    premask: bool,
    reconstruct: bool,
    topology: bool,
}

#[derive(Serialize)]
struct SeedStatus {
    seed: u64,
    status: String,
}

/// Run one battery of seeds and write all artifacts into `out_dir`.
pub fn run_battery(cfg: &RunConfig, variant: Variant, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let g = load_dataset(cfg)?;
    let split = split_stratified(&g, (cfg.split.train, cfg.split.val, cfg.split.test), cfg.split.seed)?;

    let stages = match variant {
        Variant::Vanilla => StageFlags {
            premask: false,
            reconstruct: false,
            topology: false,
        },
        Variant::Mapping => ablation_variant(cfg.ablation_tag()?),
    };

    // pre-masking is deterministic: do it once for every seed
    let masked = if variant == Variant::Mapping && stages.premask {
        let (s_scores, y_scores) = premask_scores(&g)?;
        let report = premask_select(&s_scores, &y_scores, cfg.r, cfg.r_s)?;
        let out = apply_mask(&g.features, &g.feature_names, &report)?;
        write_atomic(
            &out_dir.join("mask_report.json"),
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?;
        Some((out, report))
    } else {
        None
    };
    let masked_features = masked.as_ref().map(|(m, _)| m.clone());

    let s_ref = Arc::new(stats::centered_reference(g.sensitive.view())?);

    let outcomes: Vec<(u64, Result<SeedArtifacts>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            (
                seed,
                run_seed(
                    &g,
                    &split,
                    stages,
                    masked_features.as_ref(),
                    &s_ref,
                    cfg,
                    variant,
                    seed,
                ),
            )
        })
        .collect();

    let variant_name = match (variant, cfg.ablation_tag()?) {
        (Variant::Vanilla, _) => "vanilla".to_string(),
        (Variant::Mapping, None) => "mapping".to_string(),
        (Variant::Mapping, Some(tag)) => tag.as_str().to_string(),
    };

    let mut reports = Vec::new();
    let mut statuses = Vec::new();
    for (seed, outcome) in &outcomes {
        match outcome {
            Ok(artifacts) => {
                reports.push(artifacts.report.clone());
                statuses.push(SeedStatus {
                    seed: *seed,
                    status: "ok".into(),
                });
                if let Some((weights, pruned)) = &artifacts.pruned {
                    write_atomic(
                        &out_dir.join(format!("pruned_edges_seed{seed}.csv")),
                        pruned_edges_csv(&g, weights, pruned).as_bytes(),
                    )?;
                }
            }
            Err(e) => {
                eprintln!("[fairpre] seed {seed} failed: {e}");
                statuses.push(SeedStatus {
                    seed: *seed,
                    status: format!("failed: {e}"),
                });
            }
        }
    }

    let k = g.k();
    write_atomic(
        &out_dir.join("metrics.csv"),
        metrics_csv(&reports, cfg.classifier.arch.as_str(), &variant_name, k).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("aggregate.csv"),
        aggregate_csv(&reports, k).as_bytes(),
    )?;

    let manifest = Manifest {
        tool: "fairpre",
        version: env!("CARGO_PKG_VERSION"),
        variant: variant_name,
        stages: StagesRecord {
            premask: variant == Variant::Mapping && stages.premask,
            reconstruct: variant == Variant::Mapping && stages.reconstruct,
            topology: variant == Variant::Mapping && stages.topology,
        },
        config: cfg,
        n: g.n,
        d_used: masked
            .as_ref()
            .map(|((m, _), _)| m.ncols())
            .unwrap_or_else(|| g.d()),
        sensitive_names: g.sensitive_names.clone(),
        per_seed_status: statuses,
        notes: vec![
            "split ratios are a configurable stand-in; the reference split setting is unspecified"
                .to_string(),
            "metrics are computed on the test split only".to_string(),
        ],
    };
    write_atomic(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;

    let succeeded = reports.len();
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        total_seeds: cfg.seeds.len(),
        succeeded,
        reports,
    })
}

/// Full pipeline battery.
pub fn run_mapping(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    run_battery(cfg, Variant::Mapping, out_dir)
}

/// No-debiasing baseline battery.
pub fn run_vanilla(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    run_battery(cfg, Variant::Vanilla, out_dir)
}

/// Which coefficient a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda2,
    Lambda3,
    Lambda4,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Lambda2 => "lambda2",
            SweepParam::Lambda3 => "lambda3",
            SweepParam::Lambda4 => "lambda4",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda2" => Ok(SweepParam::Lambda2),
            "lambda3" => Ok(SweepParam::Lambda3),
            "lambda4" => Ok(SweepParam::Lambda4),
            other => Err(Error::Config(format!(
                "unknown sweep parameter `{other}`; expected lambda2, lambda3 or lambda4"
            ))),
        }
    }
}

/// One full battery per value; failures are recorded and the sweep continues.
pub fn run_param_sweep(
    cfg: &RunConfig,
    param: SweepParam,
    values: &[f64],
    out_dir: &Path,
) -> Result<RunSummary> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut rows = String::from("param,value,metric,mean,std\n");
    let mut total = 0;
    let mut succeeded = 0;
    let mut reports = Vec::new();
    for &value in values {
        let mut sub = cfg.clone();
        match param {
            SweepParam::Lambda2 => sub.lambda2 = value,
            SweepParam::Lambda3 => sub.lambda3 = value,
            SweepParam::Lambda4 => sub.lambda4 = value,
        }
        let sub_dir = out_dir.join(format!("{}_{}", param.as_str(), fmt_value(value)));
        total += 1;
        match run_battery(&sub, Variant::Mapping, &sub_dir) {
            Ok(summary) => {
                succeeded += 1;
                for (metric, values) in summary_metric_columns(&summary.reports, summary_k(&summary.reports)) {
                    let defined: Vec<f64> = values.into_iter().flatten().collect();
                    let (mean, std) = crate::attack::mean_std(&defined);
                    if defined.is_empty() {
                        writeln!(rows, "{},{},{metric},undefined,undefined", param.as_str(), fmt_value(value))
                            .unwrap();
                    } else {
                        writeln!(
                            rows,
                            "{},{},{metric},{mean:.6},{std:.6}",
                            param.as_str(),
                            fmt_value(value)
                        )
                        .unwrap();
                    }
                }
                reports.extend(summary.reports);
            }
            Err(e) => {
                eprintln!("[fairpre] sweep value {value} failed: {e}");
                writeln!(rows, "{},{},error,undefined,undefined", param.as_str(), fmt_value(value)).unwrap();
            }
        }
    }
    write_atomic(&out_dir.join("sweep.csv"), rows.as_bytes())?;
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        total_seeds: total,
        succeeded,
        reports,
    })
}

/// Attribute-inference leakage curves for the configured dataset. Synthetic
/// configs sweep all four scenario cases; CSV datasets attack the released
/// data as a single pair.
pub fn run_attack_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut inputs = Vec::new();
    match &cfg.dataset {
        DatasetSpec::Synth {
            data_seed,
            label_gain,
            ..
        } => {
            let spec = SynthSpec {
                label_gain: *label_gain,
                ..SynthSpec::default()
            };
            for case in ScenarioCase::ALL {
                let g = assemble_case(&spec, case, *data_seed)?;
                inputs.push(AttackInputs {
                    pair: case.to_string(),
                    target_columns: (0..g.k()).collect(),
                    features: g.features,
                    edges: g.edges,
                    labels: g.labels,
                    sensitive: g.sensitive,
                });
            }
        }
        DatasetSpec::Csv { .. } => {
            let g = load_dataset(cfg)?;
            inputs.push(AttackInputs {
                pair: "data".to_string(),
                target_columns: (0..g.k()).collect(),
                features: g.features,
                edges: g.edges,
                labels: g.labels,
                sensitive: g.sensitive,
            });
        }
    }
    let points = leakage_sweep(&inputs, &cfg.attack_p, &cfg.seeds, cfg.attack_epochs)?;
    let mut csv = String::from("pair,p,metric,mean,std,runs\n");
    for pt in &points {
        writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{}",
            pt.pair, pt.p, pt.metric, pt.mean, pt.std, pt.runs
        )
        .unwrap();
    }
    write_atomic(&out_dir.join("attack_curve.csv"), csv.as_bytes())?;
    Ok(points)
}

fn fmt_value(v: f64) -> String {
    format!("{v}").replace('.', "p").replace('-', "m")
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "undefined".to_string(),
    }
}

fn summary_k(reports: &[MetricsReport]) -> usize {
    reports.first().map(|r| r.delta_sp.len()).unwrap_or(0)
}

/// Metric name/value columns shared by the aggregate writers.
fn summary_metric_columns(
    reports: &[MetricsReport],
    k: usize,
) -> Vec<(String, Vec<Option<f64>>)> {
    let mut cols: Vec<(String, Vec<Option<f64>>)> = vec![
        (
            "acc".to_string(),
            reports.iter().map(|r| Some(r.acc)).collect(),
        ),
        (
            "f1".to_string(),
            reports.iter().map(|r| Some(r.f1)).collect(),
        ),
        (
            "auroc".to_string(),
            reports.iter().map(|r| r.auroc).collect(),
        ),
    ];
    for col in 0..k {
        cols.push((
            format!("dsp_{col}"),
            reports.iter().map(|r| r.delta_sp[col]).collect(),
        ));
        cols.push((
            format!("deo_{col}"),
            reports.iter().map(|r| r.delta_eo[col]).collect(),
        ));
    }
    cols.push((
        "sens_dcor".to_string(),
        reports.iter().map(|r| Some(r.sensitive_dcor)).collect(),
    ));
    cols
}

fn metrics_csv(reports: &[MetricsReport], arch: &str, variant: &str, k: usize) -> String {
    let mut header = String::from("seed,arch,variant,acc,f1,auroc");
    for col in 0..k {
        write!(header, ",dsp_{col},deo_{col}").unwrap();
    }
    header.push_str(",sens_dcor\n");
    let mut out = header;
    for r in reports {
        write!(
            out,
            "{},{arch},{variant},{:.6},{:.6},{}",
            r.seed,
            r.acc,
            r.f1,
            fmt_metric(r.auroc)
        )
        .unwrap();
        for col in 0..k {
            write!(out, ",{},{}", fmt_metric(r.delta_sp[col]), fmt_metric(r.delta_eo[col]))
                .unwrap();
        }
        writeln!(out, ",{:.6}", r.sensitive_dcor).unwrap();
    }
    // summary row: means over defined values
    if !reports.is_empty() {
        write!(out, "mean,{arch},{variant}").unwrap();
        for (_, values) in summary_metric_columns(reports, k) {
            let defined: Vec<f64> = values.into_iter().flatten().collect();
            if defined.is_empty() {
                out.push_str(",undefined");
            } else {
                let (mean, _) = crate::attack::mean_std(&defined);
                write!(out, ",{mean:.6}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

fn aggregate_csv(reports: &[MetricsReport], k: usize) -> String {
    let mut out = String::from("metric,mean,std,runs\n");
    for (metric, values) in summary_metric_columns(reports, k) {
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        if defined.is_empty() {
            writeln!(out, "{metric},undefined,undefined,0").unwrap();
        } else {
            let (mean, std) = crate::attack::mean_std(&defined);
            writeln!(out, "{metric},{mean:.6},{std:.6},{}", defined.len()).unwrap();
        }
    }
    out
}

fn pruned_edges_csv(
    g: &AttributedGraph,
    weights: &EdgeWeightSet,
    pruned: &PrunedTopology,
) -> String {
    let kept: std::collections::HashSet<(u32, u32)> = pruned.kept.iter().copied().collect();
    let squashed = weights.squashed();
    let mut out = String::from("src,dst,weight,kept\n");
    for (e, &(a, b)) in weights.edges.iter().enumerate() {
        writeln!(
            out,
            "{},{},{:.6},{}",
            g.node_ids[a as usize],
            g.node_ids[b as usize],
            squashed[e],
            u8::from(kept.contains(&(a, b)))
        )
        .unwrap();
    }
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
