//! Mann-Kendall trend test and Sen's slope.
//!
//! S = Σ_{i<j} sign(v_j − v_i) over samples in time order. Under the no-trend
//! null, Var(S) = [n(n−1)(2n+5) − Σ_g t_g(t_g−1)(2t_g+5)] / 18 where t_g are
//! the sizes of groups of exactly equal values. The test uses the
//! continuity-corrected z and a two-sided normal p-value.
//!
//! Slopes are in the series' canonical unit per second, computed from the
//! actual sample times.

mod exact;
mod normal;
mod slope;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::TimeSeries;

pub use exact::{exact_two_sided_p, inversion_counts, EXACT_MAX_N};
pub use normal::{normal_cdf, normal_quantile, two_sided_p};
pub use slope::SlopeOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Increasing,
    Decreasing,
    NoTrend,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Increasing => "increasing",
            Verdict::Decreasing => "decreasing",
            Verdict::NoTrend => "no-trend",
        }
    }

    /// The verdict implied by a test outcome.
    pub fn classify(s: i64, p_value: f64, alpha: f64) -> Self {
        if p_value >= alpha || s == 0 {
            Verdict::NoTrend
        } else if s > 0 {
            Verdict::Increasing
        } else {
            Verdict::Decreasing
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub n: usize,
    pub s: i64,
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
    /// Sen's slope, canonical unit per second.
    pub slope: f64,
    pub slope_ci_low: f64,
    pub slope_ci_high: f64,
    pub alpha: f64,
    pub verdict: Verdict,
}

fn require(series_len: usize, needed: usize) -> Result<()> {
    if series_len < needed {
        Err(Error::InsufficientSamples {
            needed,
            got: series_len,
        })
    } else {
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Dense ranks of exactly-equal values (−0.0 and 0.0 share a rank).
fn dense_ranks(values: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0usize; values.len()];
    let mut rank = 0;
    for (pos, &idx) in order.iter().enumerate() {
        if pos > 0 && values[order[pos - 1]] != values[idx] {
            rank += 1;
        }
        ranks[idx] = rank;
    }
    (ranks, if values.is_empty() { 0 } else { rank + 1 })
}

/// S from values in time order, O(n log n) with a Fenwick tree over ranks.
pub fn mk_statistic_values(values: &[f64]) -> i64 {
    let (ranks, distinct) = dense_ranks(values);
    let mut tree = vec![0i64; distinct + 1];
    let prefix = |tree: &[i64], mut i: usize| {
        let mut acc = 0;
        while i > 0 {
            acc += tree[i];
            i &= i - 1;
        }
        acc
    };
    let mut s = 0i64;
    for (seen, &r) in ranks.iter().enumerate() {
        let less = prefix(&tree, r);
        let less_or_equal = prefix(&tree, r + 1);
        let greater = seen as i64 - less_or_equal;
        s += less - greater;
        let mut i = r + 1;
        while i <= distinct {
            tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }
    s
}

/// Tie-corrected null variance of S.
pub fn mk_variance_values(values: &[f64]) -> f64 {
    let n = values.len() as i128;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut ties: i128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as i128;
        ties += t * (t - 1) * (2 * t + 5);
        i = j;
    }
    (n * (n - 1) * (2 * n + 5) - ties) as f64 / 18.0
}

pub fn mk_statistic(series: &TimeSeries) -> Result<i64> {
    require(series.len(), 2)?;
    Ok(mk_statistic_values(&series.values()))
}

pub fn mk_variance(series: &TimeSeries) -> Result<f64> {
    require(series.len(), 2)?;
    Ok(mk_variance_values(&series.values()))
}

/// Continuity-corrected z score.
pub fn mk_z(s: i64, variance: f64) -> f64 {
    if s == 0 || variance <= 0.0 {
        0.0
    } else if s > 0 {
        (s - 1) as f64 / variance.sqrt()
    } else {
        (s + 1) as f64 / variance.sqrt()
    }
}

pub fn sen_slope(series: &TimeSeries) -> Result<f64> {
    sen_slope_with(series, &SlopeOptions::default())
}

pub fn sen_slope_with(series: &TimeSeries, opts: &SlopeOptions) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::DegenerateTimes);
    }
    Ok(slope::sen_estimates(&series.times(), &series.values(), None, opts)?.0)
}

/// Half-width C = z_{1−α/2}·√Var(S) of the rank interval.
fn ci_half_width(variance: f64, alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0) * variance.sqrt()
}

pub fn sen_slope_ci(series: &TimeSeries, alpha: f64) -> Result<(f64, f64)> {
    sen_slope_ci_with(series, alpha, &SlopeOptions::default())
}

pub fn sen_slope_ci_with(series: &TimeSeries, alpha: f64, opts: &SlopeOptions) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if series.len() < 2 {
        return Err(Error::DegenerateTimes);
    }
    let values = series.values();
    let c = ci_half_width(mk_variance_values(&values), alpha);
    let (_, ci) = slope::sen_estimates(&series.times(), &values, Some(c), opts)?;
    Ok(ci.expect("interval requested"))
}

pub fn mk_test(series: &TimeSeries, alpha: f64) -> Result<TrendResult> {
    mk_test_with(series, alpha, &SlopeOptions::default())
}

pub fn mk_test_with(series: &TimeSeries, alpha: f64, opts: &SlopeOptions) -> Result<TrendResult> {
    require(series.len(), 3)?;
    check_alpha(alpha)?;
    let values = series.values();
    let s = mk_statistic_values(&values);
    let variance = mk_variance_values(&values);
    let z = mk_z(s, variance);
    let p_value = if variance > 0.0 { two_sided_p(z) } else { 1.0 };
    let c = ci_half_width(variance, alpha);
    let (slope, ci) = slope::sen_estimates(&series.times(), &values, Some(c), opts)?;
    let (lo, hi) = ci.expect("interval requested");
    Ok(TrendResult {
        n: series.len(),
        s,
        variance,
        z,
        p_value,
        slope,
        slope_ci_low: lo,
        slope_ci_high: hi,
        alpha,
        verdict: Verdict::classify(s, p_value, alpha),
    })
}

/// Exact two-sided p-value by the permutation distribution of S
/// (3 ≤ n ≤ 10, no ties).
pub fn exact_mk_p(series: &TimeSeries) -> Result<f64> {
    let values = series.values();
    exact::check_exact_input(&values)?;
    Ok(exact_two_sided_p(values.len(), mk_statistic_values(&values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricKind;

    fn series(values: &[f64]) -> TimeSeries {
        TimeSeries::from_values(MetricKind::ProcessRss, values).unwrap()
    }

    fn series_at(pairs: &[(f64, f64)]) -> TimeSeries {
        TimeSeries::from_pairs(MetricKind::ProcessRss, "", pairs).unwrap()
    }

    #[test]
    fn statistic_examples() {
        assert_eq!(mk_statistic(&series(&[1., 2., 3., 4., 5.])).unwrap(), 10);
        assert_eq!(mk_statistic(&series(&[3.; 5])).unwrap(), 0);
        assert_eq!(mk_statistic(&series(&[1., 1., 2.])).unwrap(), 2);
        assert_eq!(mk_statistic(&series(&[5., 4., 3., 2., 1.])).unwrap(), -10);
        assert!(matches!(
            mk_statistic(&series(&[1.])),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn variance_examples() {
        assert!((mk_variance(&series(&[1., 2., 3., 4., 5.])).unwrap() - 50.0 / 3.0).abs() < 1e-12);
        assert!((mk_variance(&series(&[1., 1., 2.])).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(mk_variance(&series(&[4.; 4])).unwrap(), 0.0);
        assert!(mk_variance(&series(&[])).is_err());
    }

    #[test]
    fn negative_zero_ties_with_zero() {
        assert_eq!(mk_statistic(&series(&[0.0, -0.0, 0.0])).unwrap(), 0);
        assert_eq!(mk_variance(&series(&[0.0, -0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn test_on_monotone_series() {
        let up = mk_test(&series(&[1., 2., 3., 4., 5.]), 0.05).unwrap();
        assert_eq!(up.s, 10);
        assert!((up.z - 9.0 / (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((up.z - 2.2045).abs() < 1e-4);
        assert!((up.p_value - 0.0275).abs() < 1e-3);
        assert_eq!(up.verdict, Verdict::Increasing);
        assert_eq!(up.slope, 1.0);

        let down = mk_test(&series(&[5., 4., 3., 2., 1.]), 0.05).unwrap();
        assert_eq!(down.s, -10);
        assert_eq!(down.z, -up.z);
        assert_eq!(down.p_value, up.p_value);
        assert_eq!(down.verdict, Verdict::Decreasing);
    }

    #[test]
    fn constant_series_is_no_trend() {
        for alpha in [0.001, 0.05, 0.5, 0.99] {
            let r = mk_test(&series(&[2.5; 7]), alpha).unwrap();
            assert_eq!(r.p_value, 1.0);
            assert_eq!(r.verdict, Verdict::NoTrend);
            assert_eq!(r.slope, 0.0);
            assert_eq!((r.slope_ci_low, r.slope_ci_high), (0.0, 0.0));
        }
    }

    #[test]
    fn test_argument_errors() {
        assert!(matches!(
            mk_test(&series(&[1., 2.]), 0.05),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(mk_test(&series(&[1., 2., 3.]), 0.0).is_err());
        assert!(mk_test(&series(&[1., 2., 3.]), 1.0).is_err());
    }

    #[test]
    fn sen_examples() {
        assert_eq!(sen_slope(&series(&[1., 2., 3., 4., 5.])).unwrap(), 1.0);
        assert_eq!(sen_slope(&series(&[0., 2., 3.])).unwrap(), 1.5);
        let base = series(&[3., 1., 4., 1., 5., 9., 2., 6.]);
        let shifted = base.map_values(|v| v + 100.0).unwrap();
        assert_eq!(sen_slope(&base).unwrap(), sen_slope(&shifted).unwrap());
        assert!(matches!(sen_slope(&series(&[1.])), Err(Error::DegenerateTimes)));
    }

    #[test]
    fn sen_uses_actual_times() {
        let s = series_at(&[(0.0, 0.0), (10.0, 5.0), (20.0, 10.0)]);
        assert_eq!(sen_slope(&s).unwrap(), 0.5);
    }

    #[test]
    fn ci_examples() {
        let linear = series(&[0., 1., 2., 3., 4.]);
        assert_eq!(sen_slope_ci(&linear, 0.05).unwrap(), (1.0, 1.0));

        // n = 4 with a wide interval clamps to the extreme slopes.
        let s = series(&[0.0, 3.0, 1.0, 7.0]);
        let slopes = [3.0, 0.5, 7.0 / 3.0, -2.0, 2.0, 6.0];
        let min = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(sen_slope_ci(&s, 0.01).unwrap(), (min, max));

        assert!(matches!(sen_slope_ci(&series(&[1., 2.]), 0.05), Err(Error::DegenerateTimes)));
    }

    #[test]
    fn exact_examples() {
        assert!((exact_mk_p(&series(&[1., 2., 3.])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(exact_mk_p(&series(&[1., 3., 2.])).unwrap(), 1.0);
        assert!((exact_mk_p(&series(&[1., 2., 3., 4.])).unwrap() - 2.0 / 24.0).abs() < 1e-15);
        let eleven: Vec<f64> = (0..11).map(f64::from).collect();
        assert!(matches!(exact_mk_p(&series(&eleven)), Err(Error::TooLargeForExact(11))));
        assert!(matches!(exact_mk_p(&series(&[1., 1., 2.])), Err(Error::TiesUnsupportedExact)));
        assert!(matches!(exact_mk_p(&series(&[1., 2.])), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn verdict_rule() {
        assert_eq!(Verdict::classify(5, 0.049, 0.05), Verdict::Increasing);
        assert_eq!(Verdict::classify(5, 0.05, 0.05), Verdict::NoTrend);
        assert_eq!(Verdict::classify(-5, 0.01, 0.05), Verdict::Decreasing);
    }
}
