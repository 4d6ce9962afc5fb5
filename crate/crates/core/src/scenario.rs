//! JSON scenario files and requirement evaluation over replications.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_req_a, check_req_b, check_req_c, ProbeConfig, Requirement, RequirementVerdict,
};
use crate::error::{Error, Result};
use crate::sim::{
    run_batch_with, BatchReport, RunResult, Scenario, StrategyKind, StrategySpec, DEFAULT_WINDOW,
};
use crate::traffic::{generate_replication, StreamSpec};
use crate::types::{CapacityProfile, ShareVector};

pub const DEFAULT_RAMP_STEP: f64 = 0.1;

/// Capacity or token rate as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CapacitySpec {
    Constant(f64),
    /// `[start, rate]` pairs.
    Segments(Vec<(f64, f64)>),
    /// Linear ramp approximated by constant steps of `step` seconds.
    Ramp {
        from: f64,
        to: f64,
        duration: f64,
        #[serde(default = "default_ramp_step")]
        step: f64,
    },
}

fn default_ramp_step() -> f64 {
    DEFAULT_RAMP_STEP
}

impl CapacitySpec {
    pub fn resolve(&self) -> Result<CapacityProfile> {
        match self {
            CapacitySpec::Constant(c) => CapacityProfile::constant(*c),
            CapacitySpec::Segments(s) => CapacityProfile::new(s.clone()),
            CapacitySpec::Ramp {
                from,
                to,
                duration,
                step,
            } => CapacityProfile::linear_ramp(*from, *to, *duration, *step),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<PathBuf>,
}

impl OutputPaths {
    fn is_empty(&self) -> bool {
        self.trace.is_none() && self.report.is_none() && self.rates.is_none()
    }
}

fn default_tolerance() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReqASpec {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "yes")]
    pub steady_state: bool,
    /// Strategies to check; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReqBSpec {
    #[serde(default = "default_probe_step")]
    pub step: f64,
    #[serde(default = "default_probe_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_ordered_fraction")]
    pub min_ordered_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<String>>,
}

fn default_probe_step() -> f64 {
    ProbeConfig::default().step
}

fn default_probe_horizon() -> f64 {
    ProbeConfig::default().horizon
}

fn default_sample_every() -> usize {
    1
}

fn default_ordered_fraction() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReqCSpec {
    #[serde(default = "default_window")]
    pub window: f64,
    /// Agreed shares; defaults to the checked strategy's shares.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementsSpec {
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<ReqASpec>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<ReqBSpec>,
    #[serde(default, rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<ReqCSpec>,
}

impl RequirementsSpec {
    pub fn is_empty(&self) -> bool {
        self.a.is_none() && self.b.is_none() && self.c.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Free-form provenance note; ignored by the simulator.
    #[serde(default, rename = "_source", skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub stream: StreamSpec,
    pub capacity: CapacitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_rate: Option<CapacitySpec>,
    pub strategies: Vec<StrategySpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub trace: bool,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default, skip_serializing_if = "OutputPaths::is_empty")]
    pub outputs: OutputPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirements: Option<RequirementsSpec>,
}

fn default_replications() -> usize {
    1
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file = Self::from_json(&text)?;
        // resolve relative output paths against the scenario's directory
        let base = path.parent().unwrap_or(Path::new(""));
        let mut file = file;
        for p in [
            &mut file.outputs.trace,
            &mut file.outputs.report,
            &mut file.outputs.rates,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        file.to_scenario()?.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let token_rate = self
            .token_rate
            .as_ref()
            .map(|r| r.resolve().map(Arc::new))
            .transpose()?;
        Ok(Scenario {
            stream: self.stream.clone(),
            capacity: Arc::new(self.capacity.resolve()?),
            token_rate,
            strategies: self.strategies.clone(),
            replications: self.replications,
            trace: self.trace,
            window: self.window,
        })
    }
}

fn selected<'a>(
    scenario: &'a Scenario,
    names: &Option<Vec<String>>,
) -> Result<Vec<&'a StrategySpec>> {
    match names {
        None => Ok(scenario.strategies.iter().collect()),
        Some(names) => names
            .iter()
            .map(|n| {
                scenario
                    .strategies
                    .iter()
                    .find(|s| &s.name == n)
                    .ok_or_else(|| {
                        Error::Scenario(format!("requirement names unknown strategy {n:?}"))
                    })
            })
            .collect(),
    }
}

fn agreed_shares(spec: &ReqCSpec, strategy: &StrategySpec, classes: usize) -> Result<Vec<f64>> {
    let shares = match spec.shares.as_ref().or(strategy.shares.as_ref()) {
        Some(s) => ShareVector::new(s.clone())?,
        None => ShareVector::uniform(classes)?,
    };
    if shares.len() != classes {
        return Err(Error::LengthMismatch {
            what: "agreed shares",
            expected: classes,
            got: shares.len(),
        });
    }
    Ok(shares.as_slice().to_vec())
}

fn replication_verdicts(
    scenario: &Scenario,
    reqs: &RequirementsSpec,
    run: &RunResult,
) -> Result<Vec<RequirementVerdict>> {
    let mut out = Vec::new();
    if let Some(a) = &reqs.a {
        for s in selected(scenario, &a.strategies)? {
            let result = run.strategy(&s.name).expect("strategy ran");
            out.push(check_req_a(
                result,
                run.end_time,
                &scenario.capacity,
                a.tolerance,
                a.steady_state,
            ));
        }
    }
    if let Some(b) = &reqs.b {
        let offers = generate_replication(&scenario.stream, run.replication)?;
        let probe = ProbeConfig {
            step: b.step,
            horizon: b.horizon,
            sample_every: b.sample_every,
            min_ordered_fraction: b.min_ordered_fraction,
        };
        let throttles = scenario.build_throttles()?;
        for s in selected(scenario, &b.strategies)? {
            let throttle = throttles
                .iter()
                .find(|(n, _)| n == &s.name)
                .map(|(_, t)| t.clone())
                .expect("strategy built");
            let mut v = check_req_b(throttle, &offers, &probe)?.for_strategy(&s.name);
            if !matches!(s.kind, StrategyKind::TokenBucket | StrategyKind::RateModel) {
                v = v.mark_empirical();
            }
            out.push(v);
        }
    }
    if let Some(c) = &reqs.c {
        for s in selected(scenario, &c.strategies)? {
            let shares = agreed_shares(c, s, run.classes)?;
            let result = run.strategy(&s.name).expect("strategy ran");
            out.push(check_req_c(
                result,
                &shares,
                &scenario.capacity,
                &scenario.stream.profiles,
                c.window,
            ));
        }
    }
    Ok(out)
}

/// Merges per-replication verdicts of one requirement and strategy.
///
/// A: passes iff the replication mean of `mean_rate_ratio` is within
/// tolerance. B: pooled ordered fraction against the threshold. C: passes
/// iff no replication has a violation. Evidence values are replication means,
/// plus `replications` and `failing_replications`.
fn merge(verdicts: &[&RequirementVerdict], reqs: &RequirementsSpec) -> RequirementVerdict {
    let first = verdicts[0];
    let n = verdicts.len() as f64;
    let mut merged = first.clone();
    for (key, value) in merged.evidence.iter_mut() {
        *value = verdicts.iter().map(|v| v.evidence[key]).sum::<f64>() / n;
    }
    let failing = verdicts.iter().filter(|v| !v.pass).count();
    merged.pass = match first.requirement {
        Requirement::A => {
            let tol = reqs.a.as_ref().map_or(default_tolerance(), |a| a.tolerance);
            merged.evidence["mean_rate_ratio"] <= 1.0 + tol
        }
        Requirement::B => {
            let probed: f64 = verdicts.iter().map(|v| v.evidence["probed_states"]).sum();
            let ordered: f64 = verdicts.iter().map(|v| v.evidence["ordered_states"]).sum();
            let fraction = if probed == 0.0 { 1.0 } else { ordered / probed };
            merged
                .evidence
                .insert("pooled_ordered_fraction".into(), fraction);
            let min = reqs.b.as_ref().map_or(1.0, |b| b.min_ordered_fraction);
            fraction >= min
        }
        Requirement::C => failing == 0,
    };
    merged.evidence.insert("replications".into(), n);
    merged
        .evidence
        .insert("failing_replications".into(), failing as f64);
    merged
}

/// Runs the batch and evaluates every requested requirement. The returned
/// report carries the merged verdicts.
pub fn evaluate(scenario: &Scenario, reqs: &RequirementsSpec) -> Result<BatchReport> {
    let (mut report, per_rep) =
        run_batch_with(scenario, |run| replication_verdicts(scenario, reqs, run))?;
    let per_rep: Vec<Vec<RequirementVerdict>> = per_rep.into_iter().collect::<Result<_>>()?;
    if let Some(first) = per_rep.first() {
        for idx in 0..first.len() {
            let column: Vec<&RequirementVerdict> = per_rep.iter().map(|v| &v[idx]).collect();
            report.requirements.push(merge(&column, reqs));
        }
    }
    Ok(report)
}
