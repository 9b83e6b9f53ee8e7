#![allow(dead_code)]

//! Independent reference computations for the trend statistics.

use statrs::distribution::{ContinuousCDF, Normal};

pub struct Reference {
    pub s: i64,
    pub var: f64,
    /// All pairwise slopes, ascending.
    pub slopes: Vec<f64>,
}

/// Enumerates every pair; quadratic on purpose.
pub fn reference(t: &[f64], v: &[f64]) -> Reference {
    let n = v.len();
    let mut s = 0i64;
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            s += (v[j] > v[i]) as i64 - (v[j] < v[i]) as i64;
            slopes.push((v[j] - v[i]) / (t[j] - t[i]));
        }
    }
    slopes.sort_by(f64::total_cmp);
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie = 0i128;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let c = (j - i) as i128;
        tie += c * (c - 1) * (2 * c + 5);
        i = j;
    }
    let nn = n as i128;
    Reference {
        s,
        var: (nn * (nn - 1) * (2 * nn + 5) - tie) as f64 / 18.0,
        slopes,
    }
}

pub fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
    }
}

/// Confidence bounds from the rank formula, 1-based ranks clamped to the
/// pair count.
pub fn ci(r: &Reference, alpha: f64) -> (f64, f64) {
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let c = z * r.var.sqrt();
    let m = r.slopes.len() as f64;
    let lo = ((m - c) / 2.0).ceil().clamp(1.0, m) as usize;
    let hi = (((m + c) / 2.0).ceil() + 1.0).clamp(1.0, m) as usize;
    (r.slopes[lo - 1], r.slopes[hi - 1])
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
