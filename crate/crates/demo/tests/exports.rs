use aging_lab_demo::{analyze_json, calibrate_json, simulate_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn analyze_known_series() {
    let v = parse(analyze_json(&[], &[1.0, 2.0, 3.0, 4.0, 5.0], 0.05));
    assert_eq!(v["trend"]["s"], 10);
    assert_eq!(v["trend"]["verdict"], "increasing");
    // 1/120 of orderings are as extreme in each direction.
    assert!((v["exact_p"].as_f64().unwrap() - 2.0 / 120.0).abs() < 1e-12);
    assert_eq!(v["trend"]["slope"], 1.0);
}

#[test]
fn analyze_rejects_bad_input() {
    assert!(analyze_json(&[0.0, 1.0], &[1.0, 2.0, 3.0], 0.05).is_err());
    assert!(analyze_json(&[], &[1.0, 2.0], 0.05).is_err());
    assert!(analyze_json(&[2.0, 1.0, 3.0], &[1.0, 2.0, 3.0], 0.05).is_err());
    let ties = parse(analyze_json(&[], &[1.0, 1.0, 2.0], 0.05));
    assert!(ties["exact_p"].is_null());
}

#[test]
fn simulated_leak_is_recovered() {
    let v = parse(simulate_json(r#"{"leak_per_request": 1024, "seed": 3}"#, 100.0, 600.0, 1.0, 200_000.0, 0.05));
    let expected = v["expected_memory_slope"].as_f64().unwrap();
    assert_eq!(expected, 102_400.0);
    let slope = v["rss_trend"]["slope"].as_f64().unwrap();
    assert!((slope - expected).abs() < 0.05 * expected, "{slope}");
    assert_eq!(v["rss_trend"]["verdict"], "increasing");
    assert_eq!(v["latency_trend"]["verdict"], "no-trend");
    assert_eq!(v["t"].as_array().unwrap().len(), 600);
}

#[test]
fn simulated_latency_growth_and_sawtooth() {
    let v = parse(simulate_json(
        r#"{"latency_growth_ms_per_hour": 3600, "latency_jitter_ms": 20, "leak_per_request": 100, "sawtooth_period_s": 60, "seed": 1}"#,
        50.0,
        600.0,
        1.0,
        0.0,
        0.05,
    ));
    assert!(v["expected_memory_slope"].is_null());
    let slope = v["latency_trend"]["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() < 0.1, "{slope}");
    let rss: Vec<f64> = v["rss"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let drops = rss.windows(2).filter(|w| w[1] < w[0]).count();
    assert_eq!(drops, 10);
    assert!(simulate_json("{}", 1.0, 1.0, 1.0, 0.0, 0.05).is_err());
    assert!(simulate_json(r#"{"bogus": 1}"#, 1.0, 100.0, 1.0, 0.0, 0.05).is_err());
}

#[test]
fn calibration_is_near_alpha() {
    let v = parse(calibrate_json(50, 2000, 0.05, 9));
    let r = v["rejection_rate"].as_f64().unwrap();
    assert!((0.03..=0.07).contains(&r), "{r}");
    let total: u64 = v["p_histogram"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).sum();
    assert_eq!(total, 2000);
    assert!(calibrate_json(2, 10, 0.05, 0).is_err());
}
