//! Acceptance criteria, one test per criterion. Each prints a `PASS`/`FAIL`
//! line with the measured values before asserting.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gapcraft::analysis::{
    check_req_a, check_req_b, check_req_c, erlang_b, estimator_bias, ProbeConfig,
};
use gapcraft::scenario::ScenarioFile;
use gapcraft::sim::{run_batch, run_batch_with, Scenario, StrategyKind, StrategySpec};
use gapcraft::throttle::bound_rates;
use gapcraft::traffic::{
    generate_stream, IntensityProfile, PiecewiseLinear, PriorityMix, Stop, StreamSpec,
};
use gapcraft::{
    BoundVariant, CapacityProfile, RateEstimator, RateModelBucket, Throttle, TokenBucket,
};

fn report(id: u32, title: &str, pass: bool, elapsed: Duration, detail: String) {
    println!(
        "criterion {id:>2} {title}: {} ({:.2}s) {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
}

fn canned(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name);
    ScenarioFile::load(&path).unwrap().to_scenario().unwrap()
}

fn poisson(rate: f64, priorities: usize, count: usize, seed: u64) -> StreamSpec {
    StreamSpec {
        profiles: IntensityProfile::new(vec![PiecewiseLinear::constant(rate).unwrap()]).unwrap(),
        mix: PriorityMix::uniform(priorities).unwrap(),
        stop: Stop::Count(count),
        seed,
    }
}

#[test]
fn criterion_01_bounding_identity_fuzz() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 100_000 {
        let classes = rng.random_range(1..=8);
        let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(1e-3..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let shares: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let capacity = 100.0 * (1.0 - rng.random::<f64>());
        let offered: Vec<f64> = (0..classes)
            .map(|_| rng.random_range(0.0..2.0 * capacity))
            .collect();
        if !offered
            .iter()
            .zip(&shares)
            .any(|(r, s)| r > &(s * capacity))
        {
            continue;
        }
        let g = bound_rates(&offered, &shares, capacity, BoundVariant::G, false);
        worst = worst.max((g.iter().sum::<f64>() - capacity).abs());
        checked += 1;
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(1);
    report(
        1,
        "bounding identity",
        pass,
        elapsed,
        format!("max |sum g - c| = {worst:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_bucket_and_rate_model_agree() {
    let start = Instant::now();
    let mut mismatched = 0;
    let mut worst = 0.0f64;
    let mut seed = 0;
    for r in [0.5, 1.0, 5.0] {
        for w in [5.0, 10.0, 20.0] {
            seed += 1;
            let offers = generate_stream(&poisson(1.5 * r, 1, 10_000, seed)).unwrap();
            let rate = Arc::new(CapacityProfile::constant(r).unwrap());
            let mut tb = TokenBucket::new(vec![w], rate.clone(), 0.0).unwrap();
            let mut rm = RateModelBucket::new(vec![w], rate, 0.0).unwrap();
            for o in &offers {
                let a = tb.decide(o).unwrap();
                let b = rm.decide(o).unwrap();
                if a.verdict != b.verdict {
                    mismatched += 1;
                }
                worst =
                    worst.max((a.diagnostics.fill.unwrap() - b.diagnostics.fill.unwrap()).abs());
            }
        }
    }
    let pass = mismatched == 0 && worst <= 1e-9;
    report(
        2,
        "token bucket = rate model",
        pass,
        start.elapsed(),
        format!("decision mismatches {mismatched}, max |b - a T| = {worst:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_minimum_share() {
    let start = Instant::now();
    let sc = canned("shares_20_80.json");
    let (_, per) = run_batch_with(&sc, |run| {
        let b = |name: &str| run.strategy(name).unwrap().rejected_by_class[1];
        let c_pass = ["rate_gapper", "mixed"].map(|n| {
            check_req_c(
                run.strategy(n).unwrap(),
                &[0.2, 0.8],
                &sc.capacity,
                &sc.stream.profiles,
                10.0,
            )
            .pass
        });
        (
            b("token_bucket"),
            b("rate_gapper"),
            b("mixed"),
            c_pass,
            run.offers,
        )
    })
    .unwrap();
    let elapsed = start.elapsed();
    let gapper_reps = per.iter().filter(|p| p.1 > 0).count();
    let mixed_reps = per.iter().filter(|p| p.2 > 0).count();
    let bucket_reps = per.iter().filter(|p| p.0 > 0).count();
    let checker_ok = per.iter().all(|p| p.3.iter().all(|&x| x));
    let enough_offers = per.iter().all(|p| p.4 >= 2000);
    let pass = per.len() == 100
        && enough_offers
        && gapper_reps == 0
        && mixed_reps == 0
        && checker_ok
        && bucket_reps >= 90
        && elapsed < Duration::from_secs(30);
    report(
        3,
        "class B never rejected by gapper/mixed",
        pass,
        elapsed,
        format!(
            "replications with class-B rejections: gapper {gapper_reps}, mixed {mixed_reps}, token bucket {bucket_reps}/100"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_rate_bound_under_overload() {
    let start = Instant::now();
    let sc = Scenario::new(
        poisson(2.0, 1, 4000, 4),
        CapacityProfile::constant(1.0).unwrap(),
        vec![
            StrategySpec::new("rate_gapper", StrategyKind::RateGapper).watermarks(vec![10.0]),
            StrategySpec::new("mixed", StrategyKind::Mixed).watermarks(vec![10.0]),
        ],
    )
    .with_replications(100);
    let (_, per) = run_batch_with(&sc, |run| {
        ["rate_gapper", "mixed"].map(|n| {
            check_req_a(
                run.strategy(n).unwrap(),
                run.end_time,
                &sc.capacity,
                0.0,
                true,
            )
            .evidence("mean_rate_ratio")
            .unwrap()
        })
    })
    .unwrap();
    let elapsed = start.elapsed();
    let mean = |i: usize| per.iter().map(|p| p[i]).sum::<f64>() / per.len() as f64;
    let (gapper, mixed) = (mean(0), mean(1));
    let pass = gapper <= 1.02 && mixed <= 1.05 && elapsed < Duration::from_secs(30);
    report(
        4,
        "steady-state admission rate",
        pass,
        elapsed,
        format!("mean rate / c: gapper {gapper:.4}, mixed {mixed:.4}"),
    );
    assert!(pass);
}

fn high_share(sc: &Scenario) -> [(f64, f64); 3] {
    let rep = run_batch(sc).unwrap();
    ["token_bucket", "rate_gapper", "mixed"].map(|n| {
        let s = rep.strategies[n].reject_share_by_priority[0];
        (s.mean, s.std)
    })
}

#[test]
fn criterion_05_symmetric_priorities() {
    let start = Instant::now();
    let shares = high_share(&canned("table1_row4.json"));
    let pass = shares.iter().all(|(m, _)| (m - 0.5).abs() <= 0.03);
    report(
        5,
        "equal watermarks share rejections evenly",
        pass,
        start.elapsed(),
        format!("high-priority rejection share (token bucket, gapper, mixed) = {shares:.3?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_ordered_priorities() {
    let start = Instant::now();
    let [tb, rg, mx] = high_share(&canned("table1_row3.json"));
    let pass = tb.0 <= 0.02 && mx.0 <= 0.02 && (0.21..=0.41).contains(&rg.0);
    report(
        6,
        "ordered watermarks favor high priority",
        pass,
        start.elapsed(),
        format!(
            "high-priority rejection share: token bucket {:.3}, gapper {:.3} [{:.3}], mixed {:.3}",
            tb.0, rg.0, rg.1, mx.0
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_throughput_ordering() {
    let start = Instant::now();
    let sc = canned("ramp_throughput.json");
    assert!(sc.replications >= 50);
    let rep = run_batch(&sc).unwrap();
    let frac = |n: &str| rep.strategies[n].admitted_fraction.mean;
    let (g, x, t) = (frac("rate_gapper"), frac("mixed"), frac("token_bucket"));
    let band = |f: f64| (0.56..=0.77).contains(&f);
    let pass = g <= x && x <= t && band(g) && band(x) && band(t);
    report(
        7,
        "admitted fraction ordering",
        pass,
        start.elapsed(),
        format!("gapper {g:.3} <= mixed {x:.3} <= token bucket {t:.3}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_recovery_ordering() {
    let start = Instant::now();
    let spec = poisson(15.0, 2, 10_000, 8);
    let offers = generate_stream(&spec).unwrap();
    let sc = Scenario::new(
        spec,
        CapacityProfile::constant(10.0).unwrap(),
        vec![
            StrategySpec::new("token_bucket", StrategyKind::TokenBucket)
                .watermarks(vec![20.0, 10.0]),
            StrategySpec::new("rate_gapper", StrategyKind::RateGapper).watermarks(vec![20.0, 10.0]),
            StrategySpec::new("mixed", StrategyKind::Mixed).watermarks(vec![20.0, 10.0]),
        ],
    );
    let probe = ProbeConfig {
        step: 0.01,
        horizon: 10.0,
        ..ProbeConfig::default()
    };
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, throttle) in sc.build_throttles().unwrap() {
        let v = check_req_b(throttle, &offers, &probe).unwrap();
        let fraction = v.evidence("ordered_fraction").unwrap();
        let violations = v.evidence("violations").unwrap();
        let probed = v.evidence("probed_states").unwrap();
        pass &= probed > 0.0
            && if name == "token_bucket" {
                violations == 0.0
            } else {
                fraction >= 0.95
            };
        lines.push(format!(
            "{name}: {violations} violations in {probed} states"
        ));
    }
    report(
        8,
        "recovery-time ordering",
        pass,
        start.elapsed(),
        lines.join(", "),
    );
    assert!(pass);
}

/// `E[min(dt, T)]` for exponential `dt` by composite Simpson quadrature of
/// `int_0^T t f(t) dt + T (1 - F(T))`.
fn truncated_mean_quadrature(timer: f64, alpha: f64) -> f64 {
    let n = 20_000;
    let h = timer / n as f64;
    let f = |t: f64| t * alpha * (-alpha * t).exp();
    let mut sum = f(0.0) + f(timer);
    for k in 1..n {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    sum * h / 3.0 + timer * (-alpha * timer).exp()
}

#[test]
fn criterion_09_closed_forms() {
    let start = Instant::now();
    let direct = |w: u32, a: f64| {
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..=w {
            term *= a / i as f64;
            sum += term;
        }
        term / sum
    };
    let mut erlang_worst = 0.0f64;
    for w in 0..=50 {
        for a in [0.0, 0.2, 1.0, 2.5, 5.0, 10.0, 20.0] {
            erlang_worst = erlang_worst.max((erlang_b(w, a).unwrap() - direct(w, a)).abs());
        }
    }
    let fixed = (erlang_b(1, 1.0).unwrap() - 0.5)
        .abs()
        .max((erlang_b(2, 1.0).unwrap() - 0.2).abs());
    let mut bias_worst = 0.0f64;
    for timer in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
        for alpha in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let oracle = 1.0 / truncated_mean_quadrature(timer, alpha) - alpha;
            bias_worst = bias_worst.max((estimator_bias(timer, alpha).unwrap() - oracle).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = fixed <= 1e-12
        && erlang_worst <= 1e-12
        && bias_worst <= 1e-6
        && elapsed < Duration::from_secs(1);
    report(
        9,
        "closed forms",
        pass,
        elapsed,
        format!("erlang fixed {fixed:.1e}, recurrence vs sum {erlang_worst:.1e}, bias vs quadrature {bias_worst:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_estimator_statistics() {
    let start = Instant::now();
    let offers = generate_stream(&poisson(1.0, 1, 100_000, 10)).unwrap();
    let mut est = RateEstimator::new(0.0);
    let mut sum = 0.0;
    for o in &offers {
        sum += est.update(o.arrival, true, 10.0).unwrap();
    }
    let mean = sum / offers.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut est = RateEstimator::new(0.0);
    let mut now = 0.0;
    let mut invariant_failures = 0;
    for _ in 0..1_000_000 {
        let timer = rng.random_range(0.01..20.0);
        let dt = rng.random_range(0.0..2.0 * timer);
        now += dt;
        let before = est.value();
        let impulse = rng.random_bool(0.5);
        let value = est.update(now, impulse, timer).unwrap();
        let kick = if impulse { 1.0 / timer } else { 0.0 };
        let decayed = value - kick;
        let clamp_ok = if dt >= timer {
            decayed.abs() <= 1e-12
        } else {
            decayed <= before + 1e-12
        };
        if value < 0.0 || decayed < -1e-12 || !clamp_ok {
            invariant_failures += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass =
        (0.9..=1.3).contains(&mean) && invariant_failures == 0 && elapsed < Duration::from_secs(5);
    report(
        10,
        "estimator statistics",
        pass,
        elapsed,
        format!("arrival-sampled mean {mean:.4}, invariant failures {invariant_failures}"),
    );
    assert!(pass);
}
