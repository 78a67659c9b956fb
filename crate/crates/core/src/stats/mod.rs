//! Empirical distance covariance and correlation.
//!
//! For samples X in R^p and Y in R^q the empirical distance covariance is
//!
//! ```text
//! V²(X, Y) = (1/n²) Σ_{k,l} A_kl B_kl
//! ```
//!
//! where `A` and `B` double-center the Euclidean distance matrices of X and
//! Y. The correlation `R²(X, Y) = V²(X,Y) / sqrt(V²(X) V²(Y))` is defined as
//! exactly 0 when the denominator product vanishes. Both quantities are
//! dimension-free: V² = R² = 0 iff the samples are empirically independent,
//! which is what makes them usable as trainable fairness penalties over
//! multi-column sensitive attributes.
//!
//! All statistics run in double precision; differences near zero drive the
//! fairness losses, so there is deliberately no single-precision mode.

mod fast;

pub use fast::dcov2_fast_univariate;

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rng;
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;

/// Product of distance variances at or below this is treated as the
/// zero-denominator branch of the correlation ratio.
pub const DVAR_PRODUCT_FLOOR: f64 = 1e-24;

/// Pairwise Euclidean distance matrix of the rows of `m`.
pub fn pairwise_distances(m: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite input to pairwise_distances".into()));
    }
    let n = m.nrows();
    let mut d = Array2::zeros((n, n));
    for k in 0..n {
        for l in (k + 1)..n {
            let mut acc = 0.0;
            for c in 0..m.ncols() {
                let diff = m[[k, c]] - m[[l, c]];
                acc += diff * diff;
            }
            let dist = acc.sqrt();
            d[[k, l]] = dist;
            d[[l, k]] = dist;
        }
    }
    Ok(d)
}

/// A double-centered distance matrix: every row and column sums to zero.
#[derive(Debug, Clone)]
pub struct CenteredDistanceMatrix {
    pub values: Array2<f64>,
    pub n: usize,
}

impl CenteredDistanceMatrix {
    /// Maximum absolute row/column sum, for invariant checks.
    pub fn max_marginal_sum(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.n {
            let rs: f64 = self.values.row(k).sum();
            let cs: f64 = self.values.column(k).sum();
            worst = worst.max(rs.abs()).max(cs.abs());
        }
        worst
    }
}

/// Double-center a symmetric zero-diagonal distance matrix:
/// `A_kl = a_kl - rowmean_k - colmean_l + grandmean`.
pub fn double_center(d: ArrayView2<'_, f64>) -> Result<CenteredDistanceMatrix> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(Error::Shape(format!("{}x{} matrix is not square", n, d.ncols())));
    }
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale.max(1.0);
    for k in 0..n {
        if d[[k, k]].abs() > tol {
            return Err(Error::Validation(format!("nonzero diagonal at {k}")));
        }
        for l in (k + 1)..n {
            if (d[[k, l]] - d[[l, k]]).abs() > tol {
                return Err(Error::Validation(format!("asymmetric entries at ({k}, {l})")));
            }
        }
    }
    Ok(CenteredDistanceMatrix {
        values: center_in_place(d.to_owned()),
        n,
    })
}

fn center_in_place(mut d: Array2<f64>) -> Array2<f64> {
    let n = d.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|k| d.row(k).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    for k in 0..n {
        for l in 0..n {
            // symmetric input: column mean l equals row mean l
            d[[k, l]] += grand - row_means[k] - row_means[l];
        }
    }
    d
}

fn check_rows(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<usize> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "sample counts differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Shape("empty sample".into()));
    }
    Ok(x.nrows())
}

/// Empirical squared distance covariance `V²(X, Y)`.
///
/// Rounding can push the Frobenius inner product of two centered distance
/// matrices a hair below zero; values within 1e-12 of zero are clamped so
/// downstream ratios stay in `[0, 1]`.
pub fn dcov2(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    let n = check_rows(x, y)?;
    if n == 1 {
        return Ok(0.0);
    }
    let a = center_in_place(pairwise_distances(x)?);
    let b = center_in_place(pairwise_distances(y)?);
    let mut acc = 0.0;
    for (av, bv) in a.iter().zip(b.iter()) {
        acc += av * bv;
    }
    Ok(clamp_nonneg(acc / (n as f64 * n as f64)))
}

fn clamp_nonneg(v: f64) -> f64 {
    if v < 0.0 && v > -1e-12 {
        0.0
    } else {
        v.max(0.0)
    }
}

/// Empirical squared distance correlation `R²(X, Y)` in `[0, 1]`.
pub fn dcor2(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    let v = dcov2(x, y)?;
    let vx = dcov2(x, x)?;
    let vy = dcov2(y, y)?;
    let denom = vx * vy;
    if denom <= DVAR_PRODUCT_FLOOR {
        return Ok(0.0);
    }
    Ok((v / denom.sqrt()).clamp(0.0, 1.0))
}

/// Precomputed double-centered distance structure of a fixed sample,
/// shared across the training loops that repeatedly evaluate `V²(·, Y)`.
///
/// Samples with few distinct rows (binary sensitive matrices have at most
/// 2^k) collapse to a group assignment plus a small centered table, which
/// both saves the n x n storage and unlocks an O(n log n) penalty path for
/// univariate inputs.
#[derive(Debug, Clone)]
pub struct CenteredReference {
    n: usize,
    /// `V²(Y, Y)` of the reference sample.
    dvar2: f64,
    kind: RefKind,
}

#[derive(Debug, Clone)]
enum RefKind {
    Dense(Array2<f64>),
    Grouped {
        /// Group id per sample row.
        assignment: Vec<u32>,
        /// Centered distance value per group pair.
        table: Array2<f64>,
        /// Samples per group.
        counts: Vec<usize>,
    },
}

const MAX_GROUPS: usize = 64;

impl CenteredReference {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dvar2(&self) -> f64 {
        self.dvar2
    }

    /// Centered entry `B_kl`.
    #[inline]
    pub fn b(&self, k: usize, l: usize) -> f64 {
        match &self.kind {
            RefKind::Dense(m) => m[[k, l]],
            RefKind::Grouped { assignment, table, .. } => {
                table[[assignment[k] as usize, assignment[l] as usize]]
            }
        }
    }

    /// Group structure, when the sample collapsed to one.
    pub fn grouped(&self) -> Option<(&[u32], &Array2<f64>, &[usize])> {
        match &self.kind {
            RefKind::Dense(_) => None,
            RefKind::Grouped {
                assignment,
                table,
                counts,
            } => Some((assignment, table, counts)),
        }
    }
}

/// Build a [`CenteredReference`] from the constant side of a dCov penalty.
pub fn centered_reference(y: ArrayView2<'_, f64>) -> Result<CenteredReference> {
    let n = y.nrows();
    if n == 0 {
        return Err(Error::Shape("empty sample".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite reference sample".into()));
    }
    // group identical rows; bail to the dense path beyond MAX_GROUPS
    let mut patterns: Vec<Vec<u64>> = Vec::new();
    let mut assignment = Vec::with_capacity(n);
    'rows: for k in 0..n {
        let key: Vec<u64> = y.row(k).iter().map(|v| v.to_bits()).collect();
        for (g, pat) in patterns.iter().enumerate() {
            if *pat == key {
                assignment.push(g as u32);
                continue 'rows;
            }
        }
        if patterns.len() >= MAX_GROUPS {
            return Ok(centered_reference_dense(y));
        }
        patterns.push(key);
        assignment.push((patterns.len() - 1) as u32);
    }

    let g = patterns.len();
    let mut counts = vec![0usize; g];
    for &a in &assignment {
        counts[a as usize] += 1;
    }
    // pattern-level distances
    let rows: Vec<Vec<f64>> = patterns
        .iter()
        .map(|pat| pat.iter().map(|&bits| f64::from_bits(bits)).collect())
        .collect();
    let mut dist = Array2::zeros((g, g));
    for a in 0..g {
        for b in (a + 1)..g {
            let d: f64 = rows[a]
                .iter()
                .zip(&rows[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            dist[[a, b]] = d;
            dist[[b, a]] = d;
        }
    }
    let nf = n as f64;
    let marginals: Vec<f64> = (0..g)
        .map(|a| (0..g).map(|b| counts[b] as f64 * dist[[a, b]]).sum::<f64>() / nf)
        .collect();
    let grand: f64 = (0..g)
        .map(|a| counts[a] as f64 * marginals[a])
        .sum::<f64>()
        / nf;
    let mut table = Array2::zeros((g, g));
    for a in 0..g {
        for b in 0..g {
            table[[a, b]] = dist[[a, b]] - marginals[a] - marginals[b] + grand;
        }
    }
    let mut dvar2 = 0.0;
    for a in 0..g {
        for b in 0..g {
            dvar2 += counts[a] as f64 * counts[b] as f64 * table[[a, b]] * table[[a, b]];
        }
    }
    Ok(CenteredReference {
        n,
        dvar2: clamp_nonneg(dvar2 / (nf * nf)),
        kind: RefKind::Grouped {
            assignment,
            table,
            counts,
        },
    })
}

/// Always-dense variant, used as the oracle for the grouped fast paths.
pub fn centered_reference_dense(y: ArrayView2<'_, f64>) -> CenteredReference {
    let n = y.nrows();
    let b = center_in_place(pairwise_distances(y).expect("finite reference"));
    let mut acc = 0.0;
    for v in b.iter() {
        acc += v * v;
    }
    CenteredReference {
        n,
        dvar2: clamp_nonneg(acc / (n as f64 * n as f64)),
        kind: RefKind::Dense(b),
    }
}

/// `V²(X, Y)` against a precomputed reference, streaming the X distance
/// matrix row by row. Because the reference is already centered and the
/// centering projection is self-adjoint, the raw distances of X suffice.
pub fn dcov2_vs_reference(x: ArrayView2<'_, f64>, rf: &CenteredReference) -> Result<f64> {
    let n = x.nrows();
    if rf.n() != n {
        return Err(Error::Shape(format!(
            "reference built for {} samples, got {}",
            rf.n(),
            n
        )));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let p = x.ncols();
    let mut acc = 0.0;
    for k in 0..n {
        for l in (k + 1)..n {
            let mut sq = 0.0;
            for c in 0..p {
                let diff = x[[k, c]] - x[[l, c]];
                sq += diff * diff;
            }
            acc += 2.0 * sq.sqrt() * rf.b(k, l);
        }
    }
    Ok(clamp_nonneg(acc / (n as f64 * n as f64)))
}

/// `R²(X, Y)` against a precomputed reference.
pub fn dcor2_vs_reference(x: ArrayView2<'_, f64>, rf: &CenteredReference) -> Result<f64> {
    let v = dcov2_vs_reference(x, rf)?;
    let vx = dcov2(x, x)?;
    let denom = vx * rf.dvar2();
    if denom <= DVAR_PRODUCT_FLOOR {
        return Ok(0.0);
    }
    Ok((v / denom.sqrt()).clamp(0.0, 1.0))
}

/// Fraction of undirected edges whose endpoints share the sensitive value
/// in column `col`.
pub fn sensitive_homophily(g: &AttributedGraph, col: usize) -> Result<f64> {
    if g.edges.is_empty() {
        return Err(Error::Validation("graph has no edges".into()));
    }
    if col >= g.k() {
        return Err(Error::Config(format!("sensitive column {col} out of range")));
    }
    let same = g
        .edges
        .iter()
        .filter(|&&(a, b)| g.sensitive[[a as usize, col]] == g.sensitive[[b as usize, col]])
        .count();
    Ok(same as f64 / g.edges.len() as f64)
}

/// Permutation test for empirical independence: the fraction of row
/// permutations of Y whose `R²` meets or exceeds the observed one, with
/// add-one smoothing.
pub fn permutation_independence_pvalue(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Config("permutation test needs at least one trial".into()));
    }
    let n = check_rows(x, y)?;
    let observed = dcor2(x, y)?;
    let mut rng = rng::stream(seed, "permutation-test");
    let mut indices: Vec<usize> = (0..n).collect();
    let mut permuted = y.to_owned();
    let mut hits = 0usize;
    for _ in 0..trials {
        indices.shuffle(&mut rng);
        for (row, &src) in indices.iter().enumerate() {
            for c in 0..y.ncols() {
                permuted[[row, c]] = y[[src, c]];
            }
        }
        if dcor2(x, permuted.view())? >= observed {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (trials + 1) as f64)
}

/// Standardize columns to zero mean and unit variance; constant columns are
/// left centered only.
pub fn zscore_columns(m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|v| (v - mean) / sd);
        } else {
            col.mapv_inplace(|v| v - mean);
        }
    }
    out
}

/// View a slice as an `n x 1` column matrix.
pub fn as_col(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).expect("column shape")
}
