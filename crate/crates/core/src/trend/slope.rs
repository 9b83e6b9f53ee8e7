//! Sen's slope and its rank-based confidence interval.
//!
//! Both are order statistics of the pairwise slopes (v_j − v_i)/(t_j − t_i).
//! Up to [`SlopeOptions::exact_limit`] samples they are computed exactly:
//! small inputs collect every slope, larger ones bracket the wanted ranks
//! from a sample and then sweep all pairs, keeping only slopes inside the
//! brackets. Above the limit a seeded uniform subsample of pairs is used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Pair count up to which every slope is materialised and sorted.
const COLLECT_LIMIT: u64 = 4_000_000;
/// Slopes sampled to place brackets around the wanted ranks.
const BRACKET_SAMPLE: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlopeOptions {
    /// Largest sample count handled exactly.
    pub exact_limit: usize,
    /// Pairs drawn when subsampling.
    pub subsample_pairs: usize,
    pub seed: u64,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        Self {
            exact_limit: 20_000,
            subsample_pairs: 2_000_000,
            seed: 0,
        }
    }
}

fn valid_pair_count(t: &[f64]) -> u64 {
    // Times are sorted, so equal times are adjacent runs.
    let n = t.len() as u64;
    let mut total = n * n.saturating_sub(1) / 2;
    let mut i = 0;
    while i < t.len() {
        let mut j = i + 1;
        while j < t.len() && t[j] == t[i] {
            j += 1;
        }
        let run = (j - i) as u64;
        total -= run * (run - 1) / 2;
        i = j;
    }
    total
}

#[inline]
fn slope(t: &[f64], v: &[f64], i: usize, j: usize) -> f64 {
    (v[j] - v[i]) / (t[j] - t[i])
}

fn sorted_all(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            if t[j] != t[i] {
                out.push(slope(t, v, i, j));
            }
        }
    }
    out.sort_unstable_by(f64::total_cmp);
    out
}

/// Exact pairwise-slope order statistics at the given 0-based ranks.
fn exact_order_stats(t: &[f64], v: &[f64], ranks: &[u64], total: u64) -> Vec<f64> {
    if total <= COLLECT_LIMIT {
        let all = sorted_all(t, v);
        return ranks.iter().map(|&k| all[k as usize]).collect();
    }

    let n = t.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e45_10be);
    let mut sample = Vec::with_capacity(BRACKET_SAMPLE);
    while sample.len() < BRACKET_SAMPLE {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if t[a] != t[b] {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            sample.push(slope(t, v, i, j));
        }
    }
    sample.sort_unstable_by(f64::total_cmp);

    let m = sample.len() as f64;
    let spread = 6.0 * m.sqrt();
    let mut brackets: Vec<(f64, f64)> = ranks
        .iter()
        .map(|&k| {
            let centre = (k as f64 + 0.5) / total as f64 * m;
            let lo = centre - spread;
            let hi = centre + spread;
            let lo = if lo < 0.0 { f64::NEG_INFINITY } else { sample[lo as usize] };
            let hi = if hi >= m - 1.0 { f64::INFINITY } else { sample[hi as usize] };
            (lo, hi)
        })
        .collect();

    let mut results: Vec<Option<f64>> = vec![None; ranks.len()];
    loop {
        let pending: Vec<usize> = (0..ranks.len()).filter(|&r| results[r].is_none()).collect();
        if pending.is_empty() {
            break;
        }
        let mut below = vec![0u64; ranks.len()];
        let mut inside: Vec<Vec<f64>> = vec![Vec::new(); ranks.len()];
        for i in 0..n {
            for j in i + 1..n {
                if t[j] == t[i] {
                    continue;
                }
                let s = slope(t, v, i, j);
                for &r in &pending {
                    let (lo, hi) = brackets[r];
                    if s < lo {
                        below[r] += 1;
                    } else if s <= hi {
                        inside[r].push(s);
                    }
                }
            }
        }
        for &r in &pending {
            let k = ranks[r];
            let (lo, hi) = brackets[r];
            let inner = inside[r].len() as u64;
            if k < below[r] {
                brackets[r] = (f64::NEG_INFINITY, lo);
            } else if k >= below[r] + inner {
                brackets[r] = (hi, f64::INFINITY);
            } else {
                let idx = (k - below[r]) as usize;
                let (_, nth, _) = inside[r].select_nth_unstable_by(idx, f64::total_cmp);
                results[r] = Some(*nth);
            }
        }
    }
    results.into_iter().map(|x| x.expect("resolved")).collect()
}

/// Order statistics at fractional positions of a seeded pair subsample.
fn subsampled_sorted(t: &[f64], v: &[f64], opts: &SlopeOptions) -> Vec<f64> {
    let n = t.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(opts.subsample_pairs);
    let mut attempts = 0usize;
    while out.len() < opts.subsample_pairs && attempts < opts.subsample_pairs * 16 {
        attempts += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b || t[a] == t[b] {
            continue;
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        out.push(slope(t, v, i, j));
    }
    out.sort_unstable_by(f64::total_cmp);
    out
}

fn median_of_sorted(s: &[f64]) -> f64 {
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        (s[m / 2 - 1] + s[m / 2]) / 2.0
    }
}

/// 1-based CI ranks into `total` sorted slopes for a half-width `c`.
pub(crate) fn ci_ranks(total: u64, c: f64) -> (u64, u64) {
    let nf = total as f64;
    let lower = ((nf - c) / 2.0).ceil();
    let upper = ((nf + c) / 2.0).ceil() + 1.0;
    let clamp = |r: f64| r.max(1.0).min(nf) as u64;
    (clamp(lower), clamp(upper))
}

/// Sen's slope and, when `ci_half_width` is given, the CI endpoints.
pub(crate) fn sen_estimates(
    t: &[f64],
    v: &[f64],
    ci_half_width: Option<f64>,
    opts: &SlopeOptions,
) -> Result<(f64, Option<(f64, f64)>)> {
    let total = valid_pair_count(t);
    if total == 0 {
        return Err(Error::DegenerateTimes);
    }
    if ci_half_width.is_some() && total < 2 {
        return Err(Error::DegenerateTimes);
    }

    if t.len() > opts.exact_limit {
        let sub = subsampled_sorted(t, v, opts);
        if sub.is_empty() {
            return Err(Error::DegenerateTimes);
        }
        let med = median_of_sorted(&sub);
        let ci = ci_half_width.map(|c| {
            let (lo, hi) = ci_ranks(total, c);
            let m = sub.len() as f64;
            let scale = |r: u64| ((r as f64 / total as f64 * m).ceil().max(1.0).min(m) as usize) - 1;
            (sub[scale(lo)].min(med), sub[scale(hi)].max(med))
        });
        return Ok((med, ci));
    }

    let mut ranks = vec![(total - 1) / 2, total / 2];
    let ci_r = ci_half_width.map(|c| ci_ranks(total, c));
    if let Some((lo, hi)) = ci_r {
        ranks.push(lo - 1);
        ranks.push(hi - 1);
    }
    let stats = exact_order_stats(t, v, &ranks, total);
    let med = if total % 2 == 1 {
        stats[0]
    } else {
        (stats[0] + stats[1]) / 2.0
    };
    Ok((med, ci_r.map(|_| (stats[2], stats[3]))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(t: &[f64], v: &[f64]) -> Vec<f64> {
        let mut s = Vec::new();
        for j in 0..t.len() {
            for i in 0..j {
                if t[i] != t[j] {
                    s.push((v[j] - v[i]) / (t[j] - t[i]));
                }
            }
        }
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s
    }

    #[test]
    fn bracketed_selection_equals_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 3200; // 5.1M pairs, above the collect limit
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = (0..n).map(|i| (i as f64) * 0.01 + rng.random_range(-3.0..3.0)).collect();
        let total = valid_pair_count(&t);
        assert!(total > COLLECT_LIMIT);
        let ranks = [0, 17, total / 3, (total - 1) / 2, total / 2, total - 5, total - 1];
        let got = exact_order_stats(&t, &v, &ranks, total);
        let all = brute(&t, &v);
        for (r, g) in ranks.iter().zip(got) {
            assert_eq!(all[*r as usize], g, "rank {r}");
        }
    }

    #[test]
    fn ci_rank_clamping() {
        assert_eq!(ci_ranks(6, 100.0), (1, 6));
        assert_eq!(ci_ranks(6, 0.0), (3, 4));
        assert_eq!(ci_ranks(10, 3.0), (4, 8));
    }

    #[test]
    fn subsample_path_tracks_exact_value() {
        let n = 3000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 2.0 * x + rng.random_range(-50.0..50.0)).collect();
        let exact = sen_estimates(&t, &v, None, &SlopeOptions::default()).unwrap().0;
        let opts = SlopeOptions {
            exact_limit: 100,
            subsample_pairs: 200_000,
            seed: 4,
        };
        let approx = sen_estimates(&t, &v, None, &opts).unwrap().0;
        assert!((approx - exact).abs() < 0.01, "{approx} vs {exact}");
        let again = sen_estimates(&t, &v, None, &opts).unwrap().0;
        assert_eq!(approx, again);
    }

    #[test]
    fn pair_count_skips_equal_times() {
        assert_eq!(valid_pair_count(&[0.0, 0.0, 1.0]), 2);
        assert_eq!(valid_pair_count(&[1.0]), 0);
    }
}
