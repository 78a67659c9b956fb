//! O(n log n) univariate distance covariance.
//!
//! Expanding the double-centered inner product gives
//!
//! ```text
//! V² = (1/n²) Σ_kl a_kl b_kl  −  (2/n³) Σ_k a_k· b_k·  +  (T_a T_b)/n⁴
//! ```
//!
//! with `a_k·` the distance-matrix row sums and `T` the grand totals. For
//! scalar samples the row sums come from sorted prefix sums, and the cross
//! term Σ |x_k−x_l||y_k−y_l| is accumulated in x-sorted order with a Fenwick
//! tree over y-ranks: for each point, earlier points split into those with
//! smaller/larger y, and the four running sums (count, Σx, Σy, Σxy) per side
//! close the product under the sign of Δy.

use super::clamp_nonneg;

/// Fenwick tree accumulating per-point count, x, y and x*y sums.
struct Fenwick {
    count: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
    sxy: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            count: vec![0.0; n + 1],
            sx: vec![0.0; n + 1],
            sy: vec![0.0; n + 1],
            sxy: vec![0.0; n + 1],
        }
    }

    fn add(&mut self, mut pos: usize, x: f64, y: f64) {
        pos += 1;
        while pos < self.count.len() {
            self.count[pos] += 1.0;
            self.sx[pos] += x;
            self.sy[pos] += y;
            self.sxy[pos] += x * y;
            pos += pos & pos.wrapping_neg();
        }
    }

    /// Sums over ranks `0..=pos`.
    fn prefix(&self, mut pos: usize) -> [f64; 4] {
        pos += 1;
        let mut out = [0.0; 4];
        while pos > 0 {
            out[0] += self.count[pos];
            out[1] += self.sx[pos];
            out[2] += self.sy[pos];
            out[3] += self.sxy[pos];
            pos -= pos & pos.wrapping_neg();
        }
        out
    }
}

/// Row sums of the distance matrix of a scalar sample, via sorting.
fn abs_row_sums(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap().then(a.cmp(&b)));
    let mut prefix = 0.0;
    let total: f64 = v.iter().sum();
    let mut sums = vec![0.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        let val = v[idx];
        sums[idx] = val * (2.0 * rank as f64 - n as f64) + total - 2.0 * prefix;
        prefix += val;
    }
    sums
}

/// Univariate `V²(x, y)` in O(n log n), equal to the O(n²) definition
/// within floating-point accumulation error.
pub fn dcov2_fast_univariate(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "sample counts differ");
    let n = x.len();
    assert!(n >= 1, "empty sample");
    if n == 1 {
        return 0.0;
    }
    let nf = n as f64;

    // Ordinal y-ranks; ties get distinct ranks, which is safe because tied
    // pairs contribute zero to the signed cross term either way.
    let mut y_order: Vec<usize> = (0..n).collect();
    y_order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap().then(a.cmp(&b)));
    let mut y_rank = vec![0usize; n];
    for (rank, &idx) in y_order.iter().enumerate() {
        y_rank[idx] = rank;
    }

    let mut x_order: Vec<usize> = (0..n).collect();
    x_order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap().then(a.cmp(&b)));

    // Σ_{k<l, x-sorted} (x_l − x_k)(y_l − y_k)·sign(y_l − y_k)
    let mut tree = Fenwick::new(n);
    let mut pair_sum = 0.0;
    let mut seen = [0.0f64; 4];
    for &idx in &x_order {
        let (xv, yv) = (x[idx], y[idx]);
        let below = tree.prefix(y_rank[idx]);
        let above = [
            seen[0] - below[0],
            seen[1] - below[1],
            seen[2] - below[2],
            seen[3] - below[3],
        ];
        pair_sum += xv * yv * (below[0] - above[0]) - xv * (below[2] - above[2])
            - yv * (below[1] - above[1])
            + (below[3] - above[3]);
        tree.add(y_rank[idx], xv, yv);
        seen[0] += 1.0;
        seen[1] += xv;
        seen[2] += yv;
        seen[3] += xv * yv;
    }

    let a_rows = abs_row_sums(x);
    let b_rows = abs_row_sums(y);
    let cross: f64 = a_rows.iter().zip(&b_rows).map(|(a, b)| a * b).sum();
    let ta: f64 = a_rows.iter().sum();
    let tb: f64 = b_rows.iter().sum();

    let term1 = 2.0 * pair_sum / (nf * nf);
    let term2 = 2.0 * cross / (nf * nf * nf);
    let term3 = ta * tb / (nf * nf * nf * nf);
    clamp_nonneg(term1 - term2 + term3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{as_col, dcov2};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn matches_hand_value() {
        assert_abs_diff_eq!(
            dcov2_fast_univariate(&[0.0, 1.0], &[0.0, 1.0]),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn constant_x_matches_degenerate_branch() {
        let x = [2.0, 2.0, 2.0, 2.0];
        let y = [0.0, 1.0, 5.0, -2.0];
        let slow = dcov2(as_col(&x).view(), as_col(&y).view()).unwrap();
        assert_abs_diff_eq!(dcov2_fast_univariate(&x, &y), slow, epsilon = 1e-14);
    }

    #[test]
    fn matches_quadratic_oracle_on_random_inputs() {
        let mut rng = crate::rng::stream(0, "fast-dcov-test");
        for trial in 0..30 {
            let n = 2 + (trial * 17) % 120;
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let fast = dcov2_fast_univariate(&x, &y);
            let slow = dcov2(as_col(&x).view(), as_col(&y).view()).unwrap();
            let denom = slow.abs().max(1e-12);
            assert!(
                ((fast - slow) / denom).abs() < 1e-10,
                "n={n}: fast {fast} vs slow {slow}"
            );
        }
    }

    #[test]
    fn handles_ties() {
        let x = [1.0, 1.0, 2.0, 2.0, 3.0];
        let y = [0.0, 1.0, 1.0, 0.0, 1.0];
        let fast = dcov2_fast_univariate(&x, &y);
        let slow = dcov2(as_col(&x).view(), as_col(&y).view()).unwrap();
        assert_abs_diff_eq!(fast, slow, epsilon = 1e-13);
    }
}
