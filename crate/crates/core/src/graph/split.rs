//! Deterministic stratified train/val/test splitting.

use super::{AttributedGraph, DataSplit};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;

/// Split node indices into train/val/test parts, stratified by label.
///
/// Per label class the part sizes follow the largest-remainder rule, so
/// every part stays within one node of the stratified ideal. When a class
/// would be absent from a part even though the class is large enough to
/// cover all parts, one node is moved from the most over-allocated part.
pub fn split_stratified(
    g: &AttributedGraph,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DataSplit> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| x <= 0.0) {
        return Err(Error::Config(format!(
            "all split ratios must be positive, got {r:?}"
        )));
    }
    if r.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(Error::Config(format!("split ratios {r:?} sum beyond 1")));
    }

    let mut rng = rng::stream(seed, "split");
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..g.n).filter(|&i| g.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let counts = allocate(members.len(), &r);
        let mut cursor = 0;
        for (p, &c) in counts.iter().enumerate() {
            parts[p].extend(&members[cursor..cursor + c]);
            cursor += c;
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let split = DataSplit {
        train: parts[0].clone(),
        val: parts[1].clone(),
        test: parts[2].clone(),
    };
    split.validate(g.n).map_err(|_| {
        Error::Config(format!(
            "ratios {r:?} leave an empty part for n={}; stratification impossible",
            g.n
        ))
    })?;
    Ok(split)
}

/// Largest-remainder allocation of `total` items to three parts, plus a
/// fix-up that guarantees no part is left empty when `total` permits.
fn allocate(total: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let ideal: Vec<f64> = ratios.iter().map(|&r| r * total as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|&x| x.floor() as usize).collect();
    let target: usize = (ideal.iter().sum::<f64>()).round() as usize;
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    let mut i = 0;
    while assigned < target {
        counts[order[i % 3]] += 1;
        assigned += 1;
        i += 1;
    }
    // Guarantee presence in every part when the class can cover all three.
    if total >= 3 {
        for p in 0..3 {
            if counts[p] == 0 {
                let donor = (0..3).filter(|&d| counts[d] > 1).max_by(|&a, &b| {
                    (counts[a] as f64 - ideal[a])
                        .partial_cmp(&(counts[b] as f64 - ideal[b]))
                        .unwrap()
                        .then(counts[a].cmp(&counts[b]))
                });
                if let Some(donor) = donor {
                    counts[donor] -= 1;
                    counts[p] += 1;
                }
            }
        }
    }
    [counts[0], counts[1], counts[2]]
}
