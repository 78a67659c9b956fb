//! Command-line batch runner for graph pre-processing debiasing.
//!
//! Exit codes: 0 when every seed succeeded, 2 when some seeds failed,
//! 1 for configuration or I/O errors.

use anyhow::Context;
use clap::{Parser, Subcommand};
use fairpre_core::graph::save_graph;
use fairpre_core::pipeline::{
    run_attack_sweep, run_mapping, run_param_sweep, run_vanilla, RunConfig, RunSummary,
    SweepParam,
};
use fairpre_core::synth::{assemble_case, ScenarioCase, SynthSpec};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fairpre",
    version,
    about = "Pre-processing debiasing for fair node classification on attributed graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario case as CSV files.
    Synth {
        /// Scenario case: BFDT, DFBT, BFBT or DFDT.
        #[arg(long)]
        case: String,
        /// Output directory for features.csv / edges.csv / labels.csv.
        #[arg(long)]
        out: PathBuf,
        /// Generation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and evaluate the no-debiasing baseline.
    Vanilla(RunArgs),
    /// Run the full debiasing pipeline (pre-masking, reconstruction,
    /// fair message passing, post-pruning), then train and evaluate.
    Mapping(RunArgs),
    /// Run an ablation variant of the pipeline.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Ablation tag: w/o-msk, w/o-re, w/o-fe or w/o-to.
        #[arg(long)]
        ablation: String,
    },
    /// Sweep one loss coefficient over a list of values.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Which coefficient to vary: lambda2, lambda3 or lambda4.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Attribute-inference leakage curves over known-label fractions.
    Attack(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed list (comma-separated integers).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override the classifier architecture (gcn, sage or gin).
    #[arg(long)]
    arch: Option<String>,
}

fn load_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(arch) = &args.arch {
        cfg.classifier.arch = arch.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_for(summary: &RunSummary) -> ExitCode {
    if summary.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { case, out, seed } => {
            let case: ScenarioCase = case.parse()?;
            let g = assemble_case(&SynthSpec::default(), case, seed)?;
            save_graph(&g, &out)?;
            println!(
                "wrote {case} graph: {} nodes, {} edges, {} features, {} sensitive columns",
                g.n,
                g.edges.len(),
                g.d(),
                g.k()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Vanilla(args) => {
            let cfg = load_config(&args)?;
            let summary = run_vanilla(&cfg, &args.out)?;
            println!(
                "vanilla: {}/{} seeds succeeded -> {}",
                summary.succeeded,
                summary.total_seeds,
                summary.out_dir.display()
            );
            Ok(exit_for(&summary))
        }
        Command::Mapping(args) => {
            let mut cfg = load_config(&args)?;
            cfg.ablation = None;
            let summary = run_mapping(&cfg, &args.out)?;
            println!(
                "mapping: {}/{} seeds succeeded -> {}",
                summary.succeeded,
                summary.total_seeds,
                summary.out_dir.display()
            );
            Ok(exit_for(&summary))
        }
        Command::Ablate { run, ablation } => {
            let mut cfg = load_config(&run)?;
            cfg.ablation = Some(ablation);
            cfg.validate()?;
            let summary = run_mapping(&cfg, &run.out)?;
            println!(
                "ablation {}: {}/{} seeds succeeded -> {}",
                cfg.ablation.as_deref().unwrap_or("-"),
                summary.succeeded,
                summary.total_seeds,
                summary.out_dir.display()
            );
            Ok(exit_for(&summary))
        }
        Command::Sweep { run, param, values } => {
            let cfg = load_config(&run)?;
            let param: SweepParam = param.parse()?;
            let summary = run_param_sweep(&cfg, param, &values, &run.out)?;
            println!(
                "sweep {}: {}/{} values succeeded -> {}",
                param.as_str(),
                summary.succeeded,
                summary.total_seeds,
                summary.out_dir.display()
            );
            Ok(exit_for(&summary))
        }
        Command::Attack(args) => {
            let cfg = load_config(&args)?;
            let points = run_attack_sweep(&cfg, &args.out)?;
            println!(
                "attack: {} curve points -> {}",
                points.len(),
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
