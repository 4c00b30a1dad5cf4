//! Cutoff-capped optimal assignment between true and estimated components.

use crate::model::{wrap_half, Zeta};

/// Localization/cardinality split of the assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GospaResult {
    /// Mean Euclidean distance over assigned pairs (0 without pairs).
    pub mean_assigned_error: f64,
    /// Root of the mean squared distance over assigned pairs.
    pub rms_assigned_error: f64,
    pub n_assigned: usize,
    pub n_misdetections: usize,
    pub n_false_alarms: usize,
}

/// Distance in the normalized (beat, Doppler) plane, each axis taken modulo 1.
pub fn zeta_distance(a: Zeta, b: Zeta) -> f64 {
    let db = wrap_half(a.beat - b.beat);
    let dd = wrap_half(a.doppler - b.doppler);
    (db * db + dd * dd).sqrt()
}

/// Minimum-cost perfect assignment of a square cost matrix (Hungarian method
/// with potentials, O(n³)). Returns `col_of_row`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return vec![];
    }
    // 1-based arrays as in the classic formulation; index 0 is a sentinel column
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Optimal assignment under cost min(d, c)^p as (truth, estimate, distance)
/// triples; pairs at distance ≥ c count as unassigned.
pub fn gospa_assign(truth: &[Zeta], est: &[Zeta], cutoff: f64, order: f64) -> Vec<(usize, usize, f64)> {
    let n = truth.len().max(est.len());
    let capped = cutoff.powf(order);
    let mut cost = vec![vec![capped; n]; n];
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in est.iter().enumerate() {
            cost[i][j] = zeta_distance(*t, *e).min(cutoff).powf(order);
        }
    }
    let assign = hungarian(&cost);
    let mut pairs = Vec::new();
    for (i, &j) in assign.iter().enumerate() {
        if i < truth.len() && j < est.len() {
            let d = zeta_distance(truth[i], est[j]);
            if d < cutoff {
                pairs.push((i, j, d));
            }
        }
    }
    pairs
}

/// Mean assigned error, misdetections and false alarms for cutoff `c` and
/// order `p`.
pub fn gospa_eval(truth: &[Zeta], est: &[Zeta], cutoff: f64, order: f64) -> GospaResult {
    let pairs = gospa_assign(truth, est, cutoff, order);
    let k = pairs.len();
    let (sum, sum_sq) = pairs.iter().fold((0.0, 0.0), |(s, q), p| (s + p.2, q + p.2 * p.2));
    GospaResult {
        mean_assigned_error: if k > 0 { sum / k as f64 } else { 0.0 },
        rms_assigned_error: if k > 0 { (sum_sq / k as f64).sqrt() } else { 0.0 },
        n_assigned: k,
        n_misdetections: truth.len() - k,
        n_false_alarms: est.len() - k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(b: f64) -> Zeta {
        Zeta::new(b, 0.0)
    }

    #[test]
    fn hand_cases() {
        let r = gospa_eval(&[z(0.1)], &[z(0.1)], 0.05, 2.0);
        assert_eq!((r.mean_assigned_error, r.n_misdetections, r.n_false_alarms), (0.0, 0, 0));
        let r = gospa_eval(&[z(0.1), z(0.5)], &[z(0.1)], 0.05, 2.0);
        assert_eq!((r.mean_assigned_error, r.n_misdetections, r.n_false_alarms), (0.0, 1, 0));
        let r = gospa_eval(&[z(0.10)], &[z(0.11), z(0.40)], 0.05, 2.0);
        assert!((r.mean_assigned_error - 0.01).abs() < 1e-15);
        assert_eq!((r.n_misdetections, r.n_false_alarms), (0, 1));
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }
}
