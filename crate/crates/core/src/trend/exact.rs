//! Exact null distribution of the Mann-Kendall statistic for small samples.
//!
//! Without ties, S = n(n−1)/2 − 2·I where I is the inversion count of the
//! permutation, so the null distribution of S is the Mahonian distribution
//! of inversions over all n! equally likely orderings.

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 10;

/// Number of permutations of `n` elements with exactly `k` inversions, for
/// k = 0..=n(n−1)/2.
pub fn inversion_counts(n: usize) -> Vec<u64> {
    let mut dist = vec![1u64];
    for m in 2..=n {
        let mut next = vec![0u64; dist.len() + m - 1];
        for (k, &c) in dist.iter().enumerate() {
            for extra in 0..m {
                next[k + extra] += c;
            }
        }
        dist = next;
    }
    dist
}

/// P(|S| ≥ |s_observed|) under the no-trend null for `n` tie-free samples.
pub fn exact_two_sided_p(n: usize, s_observed: i64) -> f64 {
    let dist = inversion_counts(n);
    let max_s = (n * (n - 1) / 2) as i64;
    let total: u64 = dist.iter().sum();
    let hits: u64 = dist
        .iter()
        .enumerate()
        .filter(|(inv, _)| (max_s - 2 * *inv as i64).abs() >= s_observed.abs())
        .map(|(_, c)| *c)
        .sum();
    hits as f64 / total as f64
}

pub(crate) fn check_exact_input(values: &[f64]) -> Result<()> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    if n > EXACT_MAX_N {
        return Err(Error::TooLargeForExact(n));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::TiesUnsupportedExact);
    }
    Ok(())
}
