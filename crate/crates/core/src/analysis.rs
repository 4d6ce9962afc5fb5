//! Requirement checkers and closed-form side computations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::StrategyRun;
use crate::throttle::{probe_recovery_times, Throttle};
use crate::traffic::IntensityProfile;
use crate::types::{CapacityProfile, Offer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Requirement {
    /// Admission rate bounded by capacity.
    A,
    /// Higher priorities recover no later than lower ones.
    B,
    /// Classes within their share are fully admitted.
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementVerdict {
    pub requirement: Requirement,
    /// Strategy the verdict applies to, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    pub pass: bool,
    /// True when the verdict rests on simulation rather than a proven property.
    #[serde(default)]
    pub empirical: bool,
    pub evidence: BTreeMap<String, f64>,
}

impl RequirementVerdict {
    fn new(requirement: Requirement, pass: bool) -> Self {
        Self {
            requirement,
            strategy: None,
            pass,
            empirical: false,
            evidence: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.evidence.insert(key.to_string(), value);
        self
    }

    pub fn for_strategy(mut self, name: impl Into<String>) -> Self {
        self.strategy = Some(name.into());
        self
    }

    pub fn mark_empirical(mut self) -> Self {
        self.empirical = true;
        self
    }

    pub fn evidence(&self, key: &str) -> Option<f64> {
        self.evidence.get(key).copied()
    }
}

/// `integral of c(t) dt` over `[from, to]`.
pub fn capacity_integral(capacity: &CapacityProfile, from: f64, to: f64) -> f64 {
    if to <= from {
        return 0.0;
    }
    let mut cuts = vec![from];
    cuts.extend(capacity.breakpoints_between(from, to));
    cuts.push(to);
    cuts.windows(2)
        .map(|w| capacity.rate_at(w[0]) * (w[1] - w[0]))
        .sum()
}

/// Throughput-bound check over the windowed admission series of one run.
///
/// Only windows that end before `end_time` count. With `steady_state` set,
/// windows starting before `end_time / 2` are skipped as transient. Each
/// window's admitted count is divided by the capacity integral over it; the
/// verdict passes iff the mean of those ratios is at most `1 + tolerance`.
pub fn check_req_a(
    run: &StrategyRun,
    end_time: f64,
    capacity: &CapacityProfile,
    tolerance: f64,
    steady_state: bool,
) -> RequirementVerdict {
    let w = run.rates.window;
    let first = if steady_state { end_time / 2.0 } else { 0.0 };
    let mut ratios = Vec::new();
    let mut max_rate = 0.0;
    let mut max_rate_time = 0.0;
    for (k, counts) in run.rates.windows.iter().enumerate() {
        let start = run.rates.start_of(k);
        if start < first || start + w > end_time {
            continue;
        }
        let admitted = counts.admitted_total() as f64;
        let rate = admitted / w;
        if rate > max_rate {
            max_rate = rate;
            max_rate_time = start;
        }
        ratios.push(admitted / capacity_integral(capacity, start, start + w));
    }
    let mean_ratio = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    RequirementVerdict::new(Requirement::A, mean_ratio <= 1.0 + tolerance)
        .for_strategy(&run.name)
        .with("mean_rate_ratio", mean_ratio)
        .with("max_rate_ratio", max_ratio)
        .with("max_windowed_rate", max_rate)
        .with("max_windowed_rate_time", max_rate_time)
        .with("windows", ratios.len() as f64)
        .with("tolerance", tolerance)
}

/// Recovery-time ordering for one state: `times[j]` must not exceed
/// `times[j + 1]`, with no recovery counted as infinitely late.
pub fn recovery_ordered(times: &[Option<f64>]) -> bool {
    let key = |t: &Option<f64>| t.unwrap_or(f64::INFINITY);
    times.windows(2).all(|w| key(&w[0]) <= key(&w[1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub step: f64,
    pub horizon: f64,
    /// Probe only every `sample_every`-th rejection state.
    pub sample_every: usize,
    /// Fraction of probed states that must be ordered for a pass.
    pub min_ordered_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            horizon: 30.0,
            sample_every: 1,
            min_ordered_fraction: 1.0,
        }
    }
}

/// Priority-recovery check.
///
/// Replays `offers` through `throttle`; right after each sampled rejection
/// the state is probed with [`probe_recovery_times`] using the rejected
/// offer's class. Mark the verdict empirical for strategies without a proof.
pub fn check_req_b<T: Throttle + Clone>(
    mut throttle: T,
    offers: &[Offer],
    probe: &ProbeConfig,
) -> Result<RequirementVerdict> {
    let every = probe.sample_every.max(1);
    let mut rejections = 0usize;
    let mut probed = 0usize;
    let mut ordered = 0usize;
    let mut worst_gap = 0.0f64;
    for offer in offers {
        if throttle.decide(offer)?.verdict.is_admit() {
            continue;
        }
        rejections += 1;
        if !(rejections - 1).is_multiple_of(every) {
            continue;
        }
        let times = probe_recovery_times(
            &throttle,
            offer.arrival,
            probe.step,
            probe.horizon,
            offer.class,
        )?;
        probed += 1;
        if recovery_ordered(&times) {
            ordered += 1;
        } else {
            for w in times.windows(2) {
                if let (Some(hi), Some(lo)) = (w[0], w[1]) {
                    worst_gap = worst_gap.max(hi - lo);
                }
            }
        }
    }
    let fraction = if probed == 0 {
        1.0
    } else {
        ordered as f64 / probed as f64
    };
    Ok(
        RequirementVerdict::new(Requirement::B, fraction >= probe.min_ordered_fraction)
            .with("rejections", rejections as f64)
            .with("probed_states", probed as f64)
            .with("ordered_states", ordered as f64)
            .with("violations", (probed - ordered) as f64)
            .with("ordered_fraction", fraction)
            .with("worst_inversion", worst_gap),
    )
}

/// True iff `lambda_i(t) <= s_i c(t)` throughout `[from, to]`.
///
/// Intensities are piecewise linear and the capacity piecewise constant, so
/// testing both ends of every piece between breakpoints is exact.
pub fn within_share(
    intensity: &IntensityProfile,
    capacity: &CapacityProfile,
    class: usize,
    share: f64,
    from: f64,
    to: f64,
) -> bool {
    let mut cuts = vec![from];
    cuts.extend(
        intensity
            .breakpoints()
            .into_iter()
            .filter(|&b| b > from && b < to),
    );
    cuts.extend(capacity.breakpoints_between(from, to));
    cuts.push(to);
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).all(|w| {
        let agreed = share * capacity.rate_at(w[0]);
        intensity.rate_at(class, w[0]) <= agreed && intensity.rate_at(class, w[1]) <= agreed
    })
}

/// Minimum-share check: a rejection of class `i` at `t` is a violation when
/// the true intensity of class `i` stayed within `s_i c` over `[t - window, t]`.
pub fn check_req_c(
    run: &StrategyRun,
    shares: &[f64],
    capacity: &CapacityProfile,
    intensity: &IntensityProfile,
    window: f64,
) -> RequirementVerdict {
    let mut violations = vec![0usize; shares.len()];
    for r in &run.rejections {
        let from = (r.arrival - window).max(0.0);
        if within_share(
            intensity,
            capacity,
            r.class,
            shares[r.class],
            from,
            r.arrival,
        ) {
            violations[r.class] += 1;
        }
    }
    let total: usize = violations.iter().sum();
    let mut verdict = RequirementVerdict::new(Requirement::C, total == 0)
        .for_strategy(&run.name)
        .with("violations", total as f64)
        .with("window", window);
    for (i, v) in violations.iter().enumerate() {
        verdict = verdict
            .with(&format!("violations_class_{i}"), *v as f64)
            .with(
                &format!("rejected_class_{i}"),
                run.rejected_by_class[i] as f64,
            )
            .with(
                &format!("admitted_class_{i}"),
                run.admitted_by_class[i] as f64,
            );
    }
    verdict
}

/// Erlang-B blocking probability of `servers` servers at offered load `load`.
pub fn erlang_b(servers: u32, load: f64) -> Result<f64> {
    if !(load >= 0.0 && load.is_finite()) {
        return Err(Error::Domain(format!(
            "offered load {load} must be finite and >= 0"
        )));
    }
    let mut b = 1.0;
    for k in 1..=servers {
        b = load * b / (k as f64 + load * b);
    }
    Ok(b)
}

/// Stationary over-estimate of the decaying estimator sampled at Poisson
/// arrivals of rate `alpha` with timer `t`.
///
/// Equals `1 / E[min(dt, T)] - alpha`, i.e.
/// `1 / (T (1 - F[T]) + E[dt | dt < T] F[T]) - alpha` for exponential `F`.
pub fn estimator_bias(timer: f64, alpha: f64) -> Result<f64> {
    if !(timer > 0.0 && timer.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!(
            "timer {timer} and rate {alpha} must be positive and finite"
        )));
    }
    // E[min(dt, T)] = (1 - e^{-alpha T}) / alpha
    let mean_truncated = -(-alpha * timer).exp_m1() / alpha;
    Ok(1.0 / mean_truncated - alpha)
}
