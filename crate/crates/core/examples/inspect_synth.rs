//! Inspect a synthetic scenario: per-column sensitive/label scores, label
//! base-rate gaps per attribute, and the reconstruction weights a given
//! coefficient setting produces.
//!
//! Usage: `cargo run --release --example inspect_synth -- [CASE] [DATA_SEED] [L1] [L2] [L3]`

use fairpre_core::feature_debias::{premask_scores, premask_select, reconstruct, ReconstructConfig};
use fairpre_core::stats;
use fairpre_core::synth::{assemble_case, ScenarioCase, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let case: ScenarioCase = args.first().map(String::as_str).unwrap_or("BFBT").parse()?;
    let data_seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let lambda1: f64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(1e-3);
    let lambda2: f64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(10.0);
    let lambda3: f64 = args.get(4).map(|s| s.parse()).transpose()?.unwrap_or(0.02);

    let g = assemble_case(&SynthSpec::default(), case, data_seed)?;
    let pos = g.labels.iter().filter(|&&l| l == 1).count() as f64 / g.n as f64;
    println!("case {case} data_seed {data_seed}: n={} |E|={} positive rate {pos:.3}", g.n, g.edges.len());

    for col in 0..g.k() {
        let (mut n0, mut n1, mut p0, mut p1) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..g.n {
            if g.sensitive[[i, col]] == 0.0 {
                n0 += 1.0;
                p0 += f64::from(g.labels[i]);
            } else {
                n1 += 1.0;
                p1 += f64::from(g.labels[i]);
            }
        }
        println!(
            "  {}: label base rates {:.3} vs {:.3} (gap {:.3})",
            g.sensitive_names[col],
            p0 / n0,
            p1 / n1,
            (p0 / n0 - p1 / n1).abs()
        );
    }

    let (s_scores, y_scores) = premask_scores(&g)?;
    println!("  per-column R2 vs S: {:?}", rounded(&s_scores));
    println!("  per-column R2 vs Y: {:?}", rounded(&y_scores));
    let report = premask_select(&s_scores, &y_scores, 0.2, 0.7)?;
    println!(
        "  premask r=0.2 r_s=0.7: top {:?} les {:?} int {:?} sen {:?} uni {:?}",
        report.set_top, report.set_les, report.set_int, report.set_sen, report.set_uni
    );

    let cfg = ReconstructConfig {
        lambda1,
        lambda2,
        lambda3,
        epochs: 500,
        ..ReconstructConfig::default()
    };
    let res = reconstruct(&g.features, &g.sensitive, &cfg)?;
    println!(
        "  reconstruct l1={lambda1} l2={lambda2} l3={lambda3}: weights {:?}",
        rounded(&res.weights)
    );
    let before = stats::dcor2(g.features.view(), g.sensitive.view())?;
    let after = stats::dcor2(res.debiased.view(), g.sensitive.view())?;
    println!("  dcor2(X,S) {before:.4} -> {after:.4}");
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
