use aging_lab_core::metrics::{MetricKind, TimeSeries};
use aging_lab_core::trend::{
    exact_mk_p, mk_statistic, mk_test, mk_variance, normal_quantile, sen_slope, sen_slope_ci, Verdict,
};
use proptest::prelude::*;

/// Brute-force pair enumeration, kept deliberately naive.
struct Oracle {
    s: i64,
    var: f64,
    slopes: Vec<f64>,
}

fn oracle(t: &[f64], v: &[f64]) -> Oracle {
    let n = v.len();
    let mut s = 0i64;
    let mut slopes = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if v[j] > v[i] {
                s += 1;
            } else if v[j] < v[i] {
                s -= 1;
            }
            slopes.push((v[j] - v[i]) / (t[j] - t[i]));
        }
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut groups: Vec<(f64, i64)> = Vec::new();
    for &x in v {
        match groups.iter_mut().find(|g| g.0 == x) {
            Some(g) => g.1 += 1,
            None => groups.push((x, 1)),
        }
    }
    let nn = n as i64;
    let tie: i64 = groups.iter().map(|&(_, c)| c * (c - 1) * (2 * c + 5)).sum();
    Oracle {
        s,
        var: (nn * (nn - 1) * (2 * nn + 5) - tie) as f64 / 18.0,
        slopes,
    }
}

fn median(s: &[f64]) -> f64 {
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        (s[m / 2 - 1] + s[m / 2]) / 2.0
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Series on a dyadic grid so that shifts and power-of-two scalings are exact.
fn dyadic_series() -> impl Strategy<Value = TimeSeries> {
    (4usize..60).prop_flat_map(|n| {
        (
            proptest::collection::vec(0i32..64, n),
            proptest::collection::vec(1u32..5, n),
        )
            .prop_map(|(vals, gaps)| {
                let mut t = 0.0;
                let pairs: Vec<(f64, f64)> = vals
                    .iter()
                    .zip(gaps)
                    .map(|(&v, g)| {
                        t += g as f64 * 0.25;
                        (t, v as f64 / 8.0)
                    })
                    .collect();
                TimeSeries::from_pairs(MetricKind::ProcessRss, "p", &pairs).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_pair_enumeration(series in dyadic_series()) {
        let o = oracle(&series.times(), &series.values());
        prop_assert_eq!(mk_statistic(&series).unwrap(), o.s);
        prop_assert_eq!(mk_variance(&series).unwrap(), o.var);
        prop_assert!(rel_close(sen_slope(&series).unwrap(), median(&o.slopes)));

        let c = normal_quantile(0.975) * o.var.sqrt();
        let m = o.slopes.len() as f64;
        let lo = (((m - c) / 2.0).ceil()).clamp(1.0, m) as usize;
        let hi = ((((m + c) / 2.0).ceil()) + 1.0).clamp(1.0, m) as usize;
        let (a, b) = sen_slope_ci(&series, 0.05).unwrap();
        prop_assert!(rel_close(a, o.slopes[lo - 1]));
        prop_assert!(rel_close(b, o.slopes[hi - 1]));
    }

    #[test]
    fn result_invariants(series in dyadic_series(), alpha in 0.001f64..0.5) {
        let r = mk_test(&series, alpha).unwrap();
        let n = r.n as i64;
        prop_assert!(r.s.abs() <= n * (n - 1) / 2);
        prop_assert!(r.variance >= 0.0);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!(r.slope_ci_low <= r.slope && r.slope <= r.slope_ci_high);
        prop_assert_eq!(r.verdict == Verdict::NoTrend, r.p_value >= alpha);
        if r.verdict == Verdict::Increasing { prop_assert!(r.slope >= 0.0); }
        if r.verdict == Verdict::Decreasing { prop_assert!(r.slope <= 0.0); }
    }

    #[test]
    fn antisymmetry(series in dyadic_series()) {
        let a = mk_test(&series, 0.05).unwrap();
        let b = mk_test(&series.map_values(|v| -v).unwrap(), 0.05).unwrap();
        prop_assert_eq!(b.s, -a.s);
        prop_assert_eq!(b.slope, -a.slope);
        prop_assert_eq!(b.p_value, a.p_value);
        // The rank interval is not centred, so it does not mirror exactly.
        prop_assert!(b.slope_ci_low <= b.slope && b.slope <= b.slope_ci_high);
    }

    #[test]
    fn shift_invariance(series in dyadic_series(), shift in -1000i32..1000) {
        let a = mk_test(&series, 0.05).unwrap();
        let b = mk_test(&series.map_values(|v| v + shift as f64).unwrap(), 0.05).unwrap();
        prop_assert_eq!(a.s, b.s);
        prop_assert_eq!(a.variance, b.variance);
        prop_assert_eq!(a.z, b.z);
        prop_assert_eq!(a.p_value, b.p_value);
        prop_assert_eq!(a.slope, b.slope);
        prop_assert_eq!((a.slope_ci_low, a.slope_ci_high), (b.slope_ci_low, b.slope_ci_high));
    }

    #[test]
    fn scale_equivariance(series in dyadic_series(), c in 0.01f64..100.0) {
        let a = mk_test(&series, 0.05).unwrap();
        let b = mk_test(&series.map_values(|v| v * c).unwrap(), 0.05).unwrap();
        prop_assert_eq!(a.s, b.s);
        prop_assert_eq!(a.p_value, b.p_value);
        prop_assert!(rel_close(b.slope, a.slope * c));
        prop_assert!(rel_close(b.slope_ci_low, a.slope_ci_low * c));
        prop_assert!(rel_close(b.slope_ci_high, a.slope_ci_high * c));
    }

    #[test]
    fn time_scale_equivariance(series in dyadic_series(), c in 0.01f64..100.0) {
        let a = mk_test(&series, 0.05).unwrap();
        let b = mk_test(&series.map_times(|t| t * c).unwrap(), 0.05).unwrap();
        prop_assert_eq!(a.s, b.s);
        prop_assert_eq!(a.p_value, b.p_value);
        prop_assert!(rel_close(b.slope, a.slope / c));
        prop_assert!(rel_close(b.slope_ci_low, a.slope_ci_low / c));
        prop_assert!(rel_close(b.slope_ci_high, a.slope_ci_high / c));
    }

    #[test]
    fn exact_and_normal_p_agree_for_small_n(vals in proptest::collection::hash_set(0i32..1000, 3..=10)) {
        let mut v: Vec<f64> = vals.into_iter().map(f64::from).collect();
        v.reverse();
        let s = TimeSeries::from_values(MetricKind::CpuPercent, &v).unwrap();
        let exact = exact_mk_p(&s).unwrap();
        let approx = mk_test(&s, 0.05).unwrap().p_value;
        prop_assert!((exact - approx).abs() <= 0.08, "exact {} approx {}", exact, approx);
    }
}

/// Enumerates all n! orderings and compares with the closed-form distribution.
#[test]
fn exact_p_matches_permutation_enumeration() {
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }
    fn s_of(p: &[usize]) -> i64 {
        let mut s = 0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                s += if p[j] > p[i] { 1 } else { -1 };
            }
        }
        s
    }
    for n in 3..=7 {
        let perms = permutations(n);
        let all_s: Vec<i64> = perms.iter().map(|p| s_of(p)).collect();
        for p in perms.iter().step_by(7) {
            let observed = s_of(p);
            let hits = all_s.iter().filter(|s| s.abs() >= observed.abs()).count();
            let brute = hits as f64 / perms.len() as f64;
            let vals: Vec<f64> = p.iter().map(|&x| x as f64).collect();
            let series = TimeSeries::from_values(MetricKind::CpuPercent, &vals).unwrap();
            assert!((exact_mk_p(&series).unwrap() - brute).abs() < 1e-15, "n={n} {p:?}");
        }
    }
}

#[test]
fn noisy_linear_ci_covers_generating_slope() {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let noise = rand_distr_normal();
    let mut covered = 0;
    for _ in 0..100 {
        let pairs: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                let t = i as f64;
                (t, 0.3 * t + noise.sample(&mut rng))
            })
            .collect();
        let s = TimeSeries::from_pairs(MetricKind::ResponseTime, "", &pairs).unwrap();
        let (lo, hi) = sen_slope_ci(&s, 0.05).unwrap();
        if lo <= 0.3 && 0.3 <= hi {
            covered += 1;
        }
    }
    assert!(covered >= 90, "covered {covered}/100");
}

fn rand_distr_normal() -> rand_distr::Normal<f64> {
    rand_distr::Normal::new(0.0, 2.0).unwrap()
}
