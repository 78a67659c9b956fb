//! Desk-scale comparison of the vanilla baseline against the full pipeline
//! on a synthetic scenario. Prints per-seed and aggregate metrics.
//!
//! Usage: `cargo run --release --example desk_run -- [CASE] [SEEDS] [L2] [L3] [L4] [RP] [RS] [DATA_SEED] [L1]`

use fairpre_core::pipeline::{run_battery, DatasetSpec, RunConfig, Variant};
use std::str::FromStr;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let case = args.first().map(String::as_str).unwrap_or("BFBT");
    let n_seeds: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let mut cfg = RunConfig::synth_defaults(case);
    if let Some(v) = args.get(2) {
        cfg.lambda2 = f64::from_str(v)?;
    }
    if let Some(v) = args.get(3) {
        cfg.lambda3 = f64::from_str(v)?;
    }
    if let Some(v) = args.get(4) {
        cfg.lambda4 = f64::from_str(v)?;
    }
    if let Some(v) = args.get(5) {
        cfg.r_p = f64::from_str(v)?;
    }
    if let Some(v) = args.get(6) {
        cfg.r_s = f64::from_str(v)?;
    }
    if let Some(v) = args.get(7) {
        cfg.dataset = DatasetSpec::Synth {
            case: case.to_string(),
            data_seed: v.parse()?,
            label_gain: args.get(9).map(|s| s.parse()).transpose()?.unwrap_or(1.0),
        };
    }
    if let Some(v) = args.get(8) {
        cfg.lambda1 = f64::from_str(v)?;
    }
    cfg.seeds = (0..n_seeds).collect();

    let tmp = tempdir_path("fairpre-desk");
    for (variant, name) in [(Variant::Vanilla, "vanilla"), (Variant::Mapping, "mapping")] {
        let summary = run_battery(&cfg, variant, &tmp.join(name))?;
        println!("== {name}: {}/{} seeds", summary.succeeded, summary.total_seeds);
        let agg = std::fs::read_to_string(tmp.join(name).join("aggregate.csv"))?;
        println!("{agg}");
    }
    Ok(())
}

fn tempdir_path(prefix: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("{prefix}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("create temp dir");
    dir
}
