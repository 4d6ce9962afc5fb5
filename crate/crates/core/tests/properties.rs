use std::sync::Arc;

use proptest::prelude::*;

use gapcraft::sim::{
    export_report, read_report, run_batch, run_once, Scenario, StrategyKind, StrategySpec,
};
use gapcraft::traffic::{
    generate_stream, IntensityProfile, PiecewiseLinear, PriorityMix, Stop, StreamSpec,
};
use gapcraft::{
    CapacityProfile, GapperConfig, MixedConfig, MixedThrottle, Offer, RateGapper, ShareVector,
    Throttle,
};

fn two_class_stream(count: usize, seed: u64) -> StreamSpec {
    StreamSpec {
        profiles: IntensityProfile::new(vec![
            PiecewiseLinear::ramp(0.3, 1.6, 500.0).unwrap(),
            PiecewiseLinear::constant(0.4).unwrap(),
        ])
        .unwrap(),
        mix: PriorityMix::uniform(2).unwrap(),
        stop: Stop::Count(count),
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// At identical state, whatever the gapper admits the mixed strategy admits
    /// for the top-watermark priority.
    #[test]
    fn mixed_never_stricter_than_gapper(
        offered in proptest::collection::vec(0.0..3.0f64, 2),
        admitted_frac in proptest::collection::vec(0.0..1.0f64, 2),
        fill in 0.0..25.0f64,
        dt in 0.0..5.0f64,
        class in 0usize..2,
    ) {
        let capacity = Arc::new(CapacityProfile::constant(1.0).unwrap());
        let config = GapperConfig::new(ShareVector::new(vec![0.2, 0.8]).unwrap(), vec![20.0, 10.0], capacity.clone());
        let admitted: Vec<f64> = offered.iter().zip(&admitted_frac).map(|(o, f)| o * f).collect();
        let mut gapper = RateGapper::new(config.clone(), 0.0).unwrap();
        gapper.set_rates(&offered, &admitted, 0.0);
        let mut mixed = MixedThrottle::new(
            MixedConfig { gapper: config, watermarks: vec![20.0, 10.0], rate: capacity, derive_timers: false },
            0.0,
        ).unwrap();
        mixed.gapper_mut().set_rates(&offered, &admitted, 0.0);
        mixed.set_fill(fill, 0.0);
        let offer = Offer::new(dt, class, 0);
        if gapper.decide(&offer).unwrap().verdict.is_admit() {
            prop_assert!(mixed.decide(&offer).unwrap().verdict.is_admit());
        }
    }
}

/// Every admission satisfies the rate test of the offered class, and the
/// bounding rates never add up to more than the capacity.
#[test]
fn gapper_admissions_respect_bounds() {
    let offers = generate_stream(&two_class_stream(5000, 2)).unwrap();
    let capacity = Arc::new(CapacityProfile::constant(1.0).unwrap());
    let config = GapperConfig::new(
        ShareVector::new(vec![0.2, 0.8]).unwrap(),
        vec![5.0, 10.0],
        capacity,
    );
    let mut gapper = RateGapper::new(config, 0.0).unwrap();
    for o in &offers {
        let rec = gapper.decide(o).unwrap();
        let d = &rec.diagnostics;
        let g: f64 = d.bound_rate.iter().sum();
        assert!(g <= 1.0 + 1e-9, "sum g = {g} at {}", o.arrival);
        assert_eq!(
            rec.verdict.is_admit(),
            d.provisional_rate[o.class] <= d.bound_rate[o.class]
        );
    }
}

#[test]
fn runs_conserve_offers_by_class_and_priority() {
    let sc = Scenario::new(
        two_class_stream(3000, 3),
        CapacityProfile::constant(1.0).unwrap(),
        vec![
            StrategySpec::new("tb", StrategyKind::TokenBucket).watermarks(vec![15.0, 10.0]),
            StrategySpec::new("rm", StrategyKind::RateModel).watermarks(vec![15.0, 10.0]),
            StrategySpec::new("rg", StrategyKind::RateGapper)
                .watermarks(vec![15.0, 10.0])
                .shares(vec![0.2, 0.8]),
            StrategySpec::new("mx", StrategyKind::Mixed)
                .watermarks(vec![15.0, 10.0])
                .shares(vec![0.2, 0.8]),
        ],
    );
    let run = run_once(&sc, 1).unwrap();
    let offers = gapcraft::traffic::generate_replication(&sc.stream, 1).unwrap();
    for s in &run.strategies {
        for class in 0..2 {
            let n = offers.iter().filter(|o| o.class == class).count();
            assert_eq!(s.admitted_by_class[class] + s.rejected_by_class[class], n);
        }
        for p in 0..2 {
            let n = offers.iter().filter(|o| o.priority == p).count();
            assert_eq!(s.admitted_by_priority[p] + s.rejected_by_priority[p], n);
        }
        let windows: usize = s.rates.windows.iter().map(|w| w.offered_total()).sum();
        assert_eq!(windows, offers.len());
    }
    let tb = run.strategy("tb").unwrap();
    let rm = run.strategy("rm").unwrap();
    assert_eq!(tb.rejections, rm.rejections);
}

#[test]
fn batch_report_is_deterministic_and_round_trips() {
    let sc = Scenario::new(
        two_class_stream(1000, 4),
        CapacityProfile::constant(1.0).unwrap(),
        vec![StrategySpec::new("rg", StrategyKind::RateGapper).timers(vec![5.0, 10.0])],
    )
    .with_replications(6);
    let a = run_batch(&sc).unwrap();
    let b = run_batch(&sc).unwrap();
    assert_eq!(a, b);
    let shares: f64 = a.strategies["rg"]
        .reject_share_by_priority
        .iter()
        .map(|s| s.mean)
        .sum();
    assert!((shares - 1.0).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join("report.json");
    export_report(&a, &path).unwrap();
    assert_eq!(read_report(&path).unwrap(), a);
}
