//! Kendall's tau-b with an asymptotic two-sided p-value.
//!
//! Pair counts come from Knight's O(n log n) merge-sort method and are exact
//! integers. The p-value uses the normal approximation of the tau statistic
//! with the tie-corrected variance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Exact pair counts behind tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n: u64,
    /// Concordant minus discordant pairs.
    pub s: i64,
    /// Pairs not tied in `x`.
    pub untied_x: u64,
    /// Pairs not tied in `y`.
    pub untied_y: u64,
}

impl PairCounts {
    pub fn tau_b(&self) -> Option<f64> {
        if self.untied_x == 0 || self.untied_y == 0 {
            return None;
        }
        Some(self.s as f64 / ((self.untied_x as f64) * (self.untied_y as f64)).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallResult {
    pub tau: f64,
    pub p_value: f64,
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("inputs checked for NaN")
}

/// Sum of `t*(t-1)/2` over runs of equal values in an already sorted slice,
/// plus the run lengths.
fn tie_runs(sorted: &[f64]) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > 1 {
            runs.push((j - i) as u64);
        }
        i = j;
    }
    runs
}

fn pairs_in(runs: &[u64]) -> u64 {
    runs.iter().map(|t| t * (t - 1) / 2).sum()
}

/// Stable merge sort of `v`, returning the number of inversions (pairs moved
/// past a strictly smaller element).
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if cmp(v[j], v[i]) == Ordering::Less {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

fn validate(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Domain(
            "kendall's tau needs at least 2 observations".into(),
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in rank correlation input".into()));
    }
    Ok(())
}

pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    validate(x, y)?;
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]).then(cmp(y[a], y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let x_ties = pairs_in(&tie_runs(&xs));

    // pairs tied in both x and y
    let mut joint = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && xs[j] == xs[i] && ys[j] == ys[i] {
            j += 1;
        }
        let t = (j - i) as u64;
        joint += t * (t - 1) / 2;
        i = j;
    }

    let swaps = merge_count(&mut ys, &mut Vec::with_capacity(n));
    let y_ties = pairs_in(&tie_runs(&ys));

    let s = n0 as i64 - x_ties as i64 - y_ties as i64 + joint as i64 - 2 * swaps as i64;
    Ok(PairCounts {
        n: n as u64,
        s,
        untied_x: n0 - x_ties,
        untied_y: n0 - y_ties,
    })
}

/// Tie-corrected variance of `S` under independence.
fn variance_of_s(n: u64, x_runs: &[u64], y_runs: &[u64]) -> f64 {
    let nf = n as f64;
    let m = nf * (nf - 1.0);
    let v1 = |runs: &[u64]| -> f64 {
        runs.iter()
            .map(|&t| {
                let t = t as f64;
                t * (t - 1.0) * (2.0 * t + 5.0)
            })
            .sum()
    };
    let v2 = |runs: &[u64]| -> f64 {
        runs.iter()
            .map(|&t| {
                let t = t as f64;
                t * (t - 1.0) * (t - 2.0)
            })
            .sum()
    };
    let pairs = |runs: &[u64]| pairs_in(runs) as f64;
    let mut var = (m * (2.0 * nf + 5.0) - v1(x_runs) - v1(y_runs)) / 18.0
        + 2.0 * pairs(x_runs) * pairs(y_runs) / m;
    if n > 2 {
        var += v2(x_runs) * v2(y_runs) / (9.0 * m * (nf - 2.0));
    }
    var
}

pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<KendallResult> {
    let counts = pair_counts(x, y)?;
    let tau = counts
        .tau_b()
        .ok_or_else(|| Error::UndefinedTau("one of the sequences is entirely tied".into()))?;
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| cmp(*a, *b));
        s
    };
    let var = variance_of_s(counts.n, &tie_runs(&sorted(x)), &tie_runs(&sorted(y)));
    let z = counts.s as f64 / var.sqrt();
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(KendallResult { tau, p_value })
}
