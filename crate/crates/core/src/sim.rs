//! Replays offer streams through one or more strategies and aggregates
//! replication batches.
//!
//! All strategies of a run see the identical offer stream; each owns its own
//! state. Replication `r` draws its stream from random substream `r`, and
//! batch statistics are merged in replication order, so a batch report does
//! not depend on thread scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::RequirementVerdict;
use crate::error::{Error, Result};
use crate::throttle::{
    AnyThrottle, BoundVariant, DecisionRecord, GapperConfig, MixedConfig, MixedThrottle,
    RateGapper, RateModelBucket, Throttle, TokenBucket,
};
use crate::traffic::{format_time, generate_replication, StreamSpec};
use crate::types::{CapacityProfile, Decision, Offer, ShareVector};

/// Environment variable capping batch parallelism.
pub const THREADS_ENV: &str = "GAPCRAFT_THREADS";

pub const DEFAULT_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    TokenBucket,
    RateModel,
    RateGapper,
    Mixed,
}

/// Named strategy and its parameters.
///
/// Timers default to `W_j / c(0)` for the rate gapper and to `W_j / r(t)`,
/// re-evaluated at every offer, for the mixed strategy. Shares default to
/// equal shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watermarks: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<f64>>,
    #[serde(default)]
    pub variant: BoundVariant,
    #[serde(default)]
    pub normalize_surplus: bool,
}

impl StrategySpec {
    pub fn new(name: impl Into<String>, kind: StrategyKind) -> Self {
        Self {
            name: name.into(),
            kind,
            watermarks: None,
            timers: None,
            shares: None,
            variant: BoundVariant::G,
            normalize_surplus: false,
        }
    }

    pub fn watermarks(mut self, w: Vec<f64>) -> Self {
        self.watermarks = Some(w);
        self
    }

    pub fn timers(mut self, t: Vec<f64>) -> Self {
        self.timers = Some(t);
        self
    }

    pub fn shares(mut self, s: Vec<f64>) -> Self {
        self.shares = Some(s);
        self
    }

    pub fn variant(mut self, v: BoundVariant) -> Self {
        self.variant = v;
        self
    }

    /// Instantiates a fresh throttle for `classes` x `priorities` offers.
    pub fn build(
        &self,
        classes: usize,
        priorities: usize,
        capacity: &Arc<CapacityProfile>,
        token_rate: &Arc<CapacityProfile>,
    ) -> Result<AnyThrottle> {
        let err = |msg: &str| Error::Scenario(format!("strategy {:?}: {msg}", self.name));
        let check_len = |what: &'static str, got: usize| {
            if got == priorities {
                Ok(())
            } else {
                Err(Error::LengthMismatch {
                    what,
                    expected: priorities,
                    got,
                })
            }
        };
        let watermarks = self.watermarks.clone();
        if let Some(w) = &watermarks {
            check_len("priority watermarks", w.len())?;
        }
        if let Some(t) = &self.timers {
            check_len("priority timers", t.len())?;
        }
        let shares = match &self.shares {
            Some(s) => ShareVector::new(s.clone())?,
            None => ShareVector::uniform(classes)?,
        };
        let needs_shares = matches!(self.kind, StrategyKind::RateGapper | StrategyKind::Mixed);
        if needs_shares && shares.len() != classes {
            return Err(Error::LengthMismatch {
                what: "class shares",
                expected: classes,
                got: shares.len(),
            });
        }

        Ok(match self.kind {
            StrategyKind::TokenBucket => AnyThrottle::TokenBucket(TokenBucket::new(
                watermarks.ok_or_else(|| err("token bucket needs watermarks"))?,
                token_rate.clone(),
                0.0,
            )?),
            StrategyKind::RateModel => AnyThrottle::RateModel(RateModelBucket::new(
                watermarks.ok_or_else(|| err("rate model needs watermarks"))?,
                token_rate.clone(),
                0.0,
            )?),
            StrategyKind::RateGapper => {
                let timers = match (&self.timers, &watermarks) {
                    (Some(t), _) => t.clone(),
                    (None, Some(w)) => {
                        let c0 = capacity.rate_at(0.0);
                        w.iter().map(|w| w / c0).collect()
                    }
                    (None, None) => return Err(err("rate gapper needs timers or watermarks")),
                };
                let config = GapperConfig::new(shares, timers, capacity.clone())
                    .with_variant(self.variant)
                    .with_normalized_surplus(self.normalize_surplus);
                AnyThrottle::Gapper(RateGapper::new(config, 0.0)?)
            }
            StrategyKind::Mixed => {
                let watermarks =
                    watermarks.ok_or_else(|| err("mixed strategy needs watermarks"))?;
                let gapper = GapperConfig::new(
                    shares,
                    self.timers.clone().unwrap_or_default(),
                    capacity.clone(),
                )
                .with_variant(self.variant)
                .with_normalized_surplus(self.normalize_surplus);
                AnyThrottle::Mixed(MixedThrottle::new(
                    MixedConfig {
                        gapper,
                        watermarks,
                        rate: token_rate.clone(),
                        derive_timers: self.timers.is_none(),
                    },
                    0.0,
                )?)
            }
        })
    }
}

/// Declarative simulation input.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub stream: StreamSpec,
    pub capacity: Arc<CapacityProfile>,
    /// Token rate `r(t)` for bucket strategies; defaults to the capacity.
    pub token_rate: Option<Arc<CapacityProfile>>,
    pub strategies: Vec<StrategySpec>,
    pub replications: usize,
    pub trace: bool,
    /// Width of the windows of the admission-rate series, seconds.
    pub window: f64,
}

impl Scenario {
    pub fn new(
        stream: StreamSpec,
        capacity: CapacityProfile,
        strategies: Vec<StrategySpec>,
    ) -> Self {
        Self {
            stream,
            capacity: Arc::new(capacity),
            token_rate: None,
            strategies,
            replications: 1,
            trace: false,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn with_replications(mut self, n: usize) -> Self {
        self.replications = n;
        self
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }

    pub fn classes(&self) -> usize {
        self.stream.profiles.class_count()
    }

    pub fn priorities(&self) -> usize {
        self.stream.mix.levels()
    }

    fn token_rate(&self) -> Arc<CapacityProfile> {
        self.token_rate
            .clone()
            .unwrap_or_else(|| self.capacity.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        if self.strategies.is_empty() {
            return Err(Error::Scenario("no strategies".into()));
        }
        if self.replications == 0 {
            return Err(Error::Scenario("replications must be >= 1".into()));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(Error::Scenario(format!(
                "window {} must be positive",
                self.window
            )));
        }
        let mut names: Vec<&str> = self.strategies.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Scenario(format!(
                "duplicate strategy name {:?}",
                w[0]
            )));
        }
        for s in &self.strategies {
            s.build(
                self.classes(),
                self.priorities(),
                &self.capacity,
                &self.token_rate(),
            )?;
        }
        Ok(())
    }

    /// Fresh throttles for every strategy, in scenario order.
    pub fn build_throttles(&self) -> Result<Vec<(String, AnyThrottle)>> {
        let rate = self.token_rate();
        self.strategies
            .iter()
            .map(|s| {
                Ok((
                    s.name.clone(),
                    s.build(self.classes(), self.priorities(), &self.capacity, &rate)?,
                ))
            })
            .collect()
    }
}

/// Offered and admitted counts per class inside one window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub offered: Vec<usize>,
    pub admitted: Vec<usize>,
}

impl WindowCounts {
    pub fn offered_total(&self) -> usize {
        self.offered.iter().sum()
    }

    pub fn admitted_total(&self) -> usize {
        self.admitted.iter().sum()
    }
}

/// Admission counts in consecutive windows `[k w, (k+1) w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub window: f64,
    pub windows: Vec<WindowCounts>,
}

impl RateSeries {
    fn new(window: f64) -> Self {
        Self {
            window,
            windows: Vec::new(),
        }
    }

    fn record(&mut self, classes: usize, offer: &Offer, admitted: bool) {
        let idx = (offer.arrival / self.window).floor() as usize;
        if self.windows.len() <= idx {
            self.windows.resize_with(idx + 1, || WindowCounts {
                offered: vec![0; classes],
                admitted: vec![0; classes],
            });
        }
        let w = &mut self.windows[idx];
        w.offered[offer.class] += 1;
        if admitted {
            w.admitted[offer.class] += 1;
        }
    }

    pub fn start_of(&self, idx: usize) -> f64 {
        idx as f64 * self.window
    }

    /// Aggregate admission rate per window.
    pub fn admission_rates(&self) -> Vec<f64> {
        self.windows
            .iter()
            .map(|w| w.admitted_total() as f64 / self.window)
            .collect()
    }
}

/// Outcome of one strategy over one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub name: String,
    pub trace: Option<Vec<DecisionRecord>>,
    pub admitted: usize,
    pub rejected: usize,
    pub admitted_by_class: Vec<usize>,
    pub rejected_by_class: Vec<usize>,
    pub admitted_by_priority: Vec<usize>,
    pub rejected_by_priority: Vec<usize>,
    /// Every rejected offer, in arrival order.
    pub rejections: Vec<Offer>,
    pub rates: RateSeries,
}

impl StrategyRun {
    pub fn offered(&self) -> usize {
        self.admitted + self.rejected
    }

    pub fn admitted_fraction(&self) -> f64 {
        if self.offered() == 0 {
            0.0
        } else {
            self.admitted as f64 / self.offered() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub replication: u64,
    pub classes: usize,
    pub priorities: usize,
    pub offers: usize,
    /// Arrival time of the last offer.
    pub end_time: f64,
    /// Per-strategy results, ordered by strategy name.
    pub strategies: Vec<StrategyRun>,
}

impl RunResult {
    pub fn strategy(&self, name: &str) -> Option<&StrategyRun> {
        self.strategies.iter().find(|s| s.name == name)
    }
}

/// Runs `offers` through each named throttle.
pub fn run_offers(
    throttles: Vec<(String, AnyThrottle)>,
    offers: &[Offer],
    classes: usize,
    priorities: usize,
    trace: bool,
    window: f64,
) -> Result<RunResult> {
    if let Some(i) = offers.windows(2).position(|w| w[1].arrival <= w[0].arrival) {
        return Err(Error::NonMonotoneTimestamps {
            index: i + 1,
            t: offers[i + 1].arrival,
            prev: offers[i].arrival,
        });
    }
    let mut strategies = throttles
        .into_iter()
        .map(|(name, mut throttle)| {
            let mut run = StrategyRun {
                name,
                trace: trace.then(|| Vec::with_capacity(offers.len())),
                admitted: 0,
                rejected: 0,
                admitted_by_class: vec![0; classes],
                rejected_by_class: vec![0; classes],
                admitted_by_priority: vec![0; priorities],
                rejected_by_priority: vec![0; priorities],
                rejections: Vec::new(),
                rates: RateSeries::new(window),
            };
            for offer in offers {
                if offer.class >= classes {
                    return Err(Error::UnknownClass {
                        class: offer.class,
                        classes,
                    });
                }
                if offer.priority >= priorities {
                    return Err(Error::UnknownPriority {
                        priority: offer.priority,
                        priorities,
                    });
                }
                let record = throttle.decide(offer)?;
                let admitted = record.verdict == Decision::Admit;
                if admitted {
                    run.admitted += 1;
                    run.admitted_by_class[offer.class] += 1;
                    run.admitted_by_priority[offer.priority] += 1;
                } else {
                    run.rejected += 1;
                    run.rejected_by_class[offer.class] += 1;
                    run.rejected_by_priority[offer.priority] += 1;
                    run.rejections.push(*offer);
                }
                run.rates.record(classes, offer, admitted);
                if let Some(t) = run.trace.as_mut() {
                    t.push(record);
                }
            }
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    strategies.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(RunResult {
        replication: 0,
        classes,
        priorities,
        offers: offers.len(),
        end_time: offers.last().map_or(0.0, |o| o.arrival),
        strategies,
    })
}

pub fn run_once(scenario: &Scenario, replication: u64) -> Result<RunResult> {
    let offers = generate_replication(&scenario.stream, replication)?;
    let mut result = run_offers(
        scenario.build_throttles()?,
        &offers,
        scenario.classes(),
        scenario.priorities(),
        scenario.trace,
        scenario.window,
    )?;
    result.replication = replication;
    Ok(result)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation; zero spread for fewer than two
    /// samples.
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = if samples.len() < 2 {
            0.0
        } else {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub admitted: Stat,
    pub rejected: Stat,
    pub admitted_fraction: Stat,
    /// Fraction of all rejections that belong to each priority, over the
    /// replications that rejected anything.
    pub reject_share_by_priority: Vec<Stat>,
    pub reject_by_priority: Vec<Stat>,
    pub reject_by_class: Vec<Stat>,
    pub admitted_by_class: Vec<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub replications: usize,
    pub offers: Stat,
    pub strategies: BTreeMap<String, StrategyStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requirements: Vec<RequirementVerdict>,
}

impl BatchReport {
    pub fn from_runs(runs: &[RunResult]) -> Self {
        let column =
            |f: &dyn Fn(&RunResult) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
        let mut strategies = BTreeMap::new();
        if let Some(first) = runs.first() {
            for (idx, s) in first.strategies.iter().enumerate() {
                let pick = |r: &RunResult| -> StrategyRun { r.strategies[idx].clone() };
                let runs_of: Vec<StrategyRun> = runs.iter().map(pick).collect();
                let per = |f: &dyn Fn(&StrategyRun) -> f64| {
                    Stat::of(&runs_of.iter().map(f).collect::<Vec<_>>())
                };
                let per_vec = |n: usize, f: &dyn Fn(&StrategyRun, usize) -> f64| {
                    (0..n).map(|j| per(&|r| f(r, j))).collect::<Vec<_>>()
                };
                let with_rejections: Vec<&StrategyRun> =
                    runs_of.iter().filter(|r| r.rejected > 0).collect();
                let shares = (0..first.priorities)
                    .map(|j| {
                        Stat::of(
                            &with_rejections
                                .iter()
                                .map(|r| r.rejected_by_priority[j] as f64 / r.rejected as f64)
                                .collect::<Vec<_>>(),
                        )
                    })
                    .collect();
                strategies.insert(
                    s.name.clone(),
                    StrategyStats {
                        admitted: per(&|r| r.admitted as f64),
                        rejected: per(&|r| r.rejected as f64),
                        admitted_fraction: per(&|r| r.admitted_fraction()),
                        reject_share_by_priority: shares,
                        reject_by_priority: per_vec(first.priorities, &|r, j| {
                            r.rejected_by_priority[j] as f64
                        }),
                        reject_by_class: per_vec(first.classes, &|r, i| {
                            r.rejected_by_class[i] as f64
                        }),
                        admitted_by_class: per_vec(first.classes, &|r, i| {
                            r.admitted_by_class[i] as f64
                        }),
                    },
                );
            }
        }
        Self {
            replications: runs.len(),
            offers: column(&|r| r.offers as f64),
            strategies,
            requirements: Vec::new(),
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Scenario(format!("thread pool: {e}")))
}

pub fn run_batch(scenario: &Scenario) -> Result<BatchReport> {
    Ok(run_batch_with(scenario, |_| ())?.0)
}

/// Runs every replication, passing each full result to `inspect` before it
/// is reduced to counts. Inspection results come back in replication order.
pub fn run_batch_with<T, F>(scenario: &Scenario, inspect: F) -> Result<(BatchReport, Vec<T>)>
where
    T: Send,
    F: Fn(&RunResult) -> T + Sync,
{
    scenario.validate()?;
    let pool = thread_pool()?;
    let outcomes: Vec<(RunResult, T)> = pool.install(|| {
        (0..scenario.replications as u64)
            .into_par_iter()
            .map(|r| {
                let mut run = run_once(scenario, r)?;
                let inspected = inspect(&run);
                for s in &mut run.strategies {
                    s.trace = None;
                    s.rejections = Vec::new();
                    s.rates.windows = Vec::new();
                }
                Ok((run, inspected))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let (runs, inspected): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok((BatchReport::from_runs(&runs), inspected))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn vec_cells(out: &mut String, values: &[f64], classes: usize) {
    for i in 0..classes {
        out.push(',');
        if let Some(v) = values.get(i) {
            let _ = write!(out, "{v}");
        }
    }
}

/// Trace CSV: one row per decision, strategies in name order. Columns a
/// strategy does not track are left empty.
pub fn trace_csv(result: &RunResult) -> String {
    let n = result.classes;
    let mut out = String::from("idx,t,class,priority,strategy,decision,b,u");
    for prefix in ["rho_hat", "a_hat", "g"] {
        for i in 0..n {
            let _ = write!(out, ",{prefix}_{i}");
        }
    }
    out.push('\n');
    for s in &result.strategies {
        for (idx, rec) in s.trace.iter().flatten().enumerate() {
            let d = &rec.diagnostics;
            let _ = write!(
                out,
                "{idx},{},{},{},{},{},{},{}",
                format_time(rec.offer.arrival),
                rec.offer.class,
                rec.offer.priority,
                s.name,
                rec.verdict.as_str(),
                opt(d.fill),
                opt(d.used_capacity)
            );
            vec_cells(&mut out, &d.offered_rate, n);
            vec_cells(&mut out, &d.admitted_rate, n);
            vec_cells(&mut out, &d.bound_rate, n);
            out.push('\n');
        }
    }
    out
}

pub fn export_trace_csv(result: &RunResult, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &trace_csv(result))
}

/// Windowed offered/admitted rates per strategy and class, for plotting.
pub fn rate_series_csv(result: &RunResult) -> String {
    let n = result.classes;
    let mut out = String::from("window_start,strategy,offered_rate,admitted_rate");
    for i in 0..n {
        let _ = write!(out, ",offered_rate_{i}");
    }
    for i in 0..n {
        let _ = write!(out, ",admitted_rate_{i}");
    }
    out.push('\n');
    for s in &result.strategies {
        let w = s.rates.window;
        for (k, counts) in s.rates.windows.iter().enumerate() {
            let _ = write!(
                out,
                "{},{},{},{}",
                s.rates.start_of(k),
                s.name,
                counts.offered_total() as f64 / w,
                counts.admitted_total() as f64 / w
            );
            for c in &counts.offered {
                let _ = write!(out, ",{}", *c as f64 / w);
            }
            for c in &counts.admitted {
                let _ = write!(out, ",{}", *c as f64 / w);
            }
            out.push('\n');
        }
    }
    out
}

pub fn export_rate_series_csv(result: &RunResult, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &rate_series_csv(result))
}

pub fn export_report(report: &BatchReport, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_file(path.as_ref(), &text)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<BatchReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
