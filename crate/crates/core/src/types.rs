//! Shared vocabulary: offers, verdicts, the capacity signal and per-class /
//! per-priority configuration.
//!
//! Time is a plain `f64` number of seconds measured from the start of a
//! scenario. Priority `0` is the highest priority level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a probability vector sums to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// One admission request: arrival time, traffic class and priority level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub arrival: f64,
    pub class: usize,
    pub priority: usize,
}

impl Offer {
    pub fn new(arrival: f64, class: usize, priority: usize) -> Self {
        Self {
            arrival,
            class,
            priority,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Admit,
    Reject,
}

impl Decision {
    pub fn is_admit(self) -> bool {
        matches!(self, Decision::Admit)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Admit => "admit",
            Decision::Reject => "reject",
        }
    }
}

/// Piecewise-constant rate signal, right-continuous at breakpoints.
///
/// Used both for the throttle capacity `c(t)` and for the token generation
/// rate `r(t)` of bucket strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct CapacityProfile {
    segments: Vec<(f64, f64)>,
}

impl CapacityProfile {
    /// Builds a profile from `(start, rate)` pairs. The first segment must
    /// start at zero, starts must strictly increase and rates must be
    /// positive and finite.
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self> {
        let Some(&(first, _)) = segments.first() else {
            return Err(Error::InvalidCapacity("no segments".into()));
        };
        if first != 0.0 {
            return Err(Error::InvalidCapacity(format!(
                "first segment starts at {first}, expected 0"
            )));
        }
        for (i, &(start, rate)) in segments.iter().enumerate() {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::InvalidCapacity(format!(
                    "segment {i} has rate {rate}, must be positive"
                )));
            }
            if !start.is_finite() {
                return Err(Error::InvalidCapacity(format!(
                    "segment {i} start is not finite"
                )));
            }
            if i > 0 && start <= segments[i - 1].0 {
                return Err(Error::InvalidCapacity(format!(
                    "segment {i} start {start} does not follow {}",
                    segments[i - 1].0
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![(0.0, rate)])
    }

    /// Approximates a linear ramp from `from` to `to` over `duration` seconds
    /// by constant segments of length `step`; the final rate holds afterwards.
    pub fn linear_ramp(from: f64, to: f64, duration: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && duration > 0.0) {
            return Err(Error::InvalidCapacity(
                "ramp duration and step must be positive".into(),
            ));
        }
        let n = (duration / step).ceil() as usize;
        let mut segments = Vec::with_capacity(n + 1);
        for k in 0..n {
            let start = k as f64 * step;
            let mid = ((k as f64 + 0.5) * step).min(duration);
            segments.push((start, from + (to - from) * mid / duration));
        }
        segments.push((n as f64 * step, to));
        Self::new(segments)
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    /// Rate in force at `t`. The last segment extends to infinity; times
    /// before zero read the first segment.
    pub fn rate_at(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|&(start, _)| start <= t);
        self.segments[idx.saturating_sub(1)].1
    }

    /// Segment starts strictly inside `(from, to)`.
    pub fn breakpoints_between(&self, from: f64, to: f64) -> impl Iterator<Item = f64> + '_ {
        self.segments
            .iter()
            .map(|&(start, _)| start)
            .filter(move |&s| s > from && s < to)
    }
}

impl TryFrom<Vec<(f64, f64)>> for CapacityProfile {
    type Error = Error;

    fn try_from(segments: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(segments)
    }
}

impl From<CapacityProfile> for Vec<(f64, f64)> {
    fn from(profile: CapacityProfile) -> Self {
        profile.segments
    }
}

/// Agreed capacity fraction per traffic class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ShareVector(Vec<f64>);

impl ShareVector {
    pub fn new(shares: Vec<f64>) -> Result<Self> {
        if shares.is_empty() {
            return Err(Error::EmptyClassSet);
        }
        for (class, &value) in shares.iter().enumerate() {
            // a lone class owns the whole capacity
            let upper_ok = value < 1.0 || (shares.len() == 1 && value <= 1.0);
            if !(value > 0.0 && upper_ok) {
                return Err(Error::ShareRange { class, value });
            }
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::ShareSum { sum });
        }
        Ok(Self(shares))
    }

    /// Equal shares for `classes` classes.
    pub fn uniform(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::EmptyClassSet);
        }
        Self::new(vec![1.0 / classes as f64; classes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ShareVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ShareVector> for Vec<f64> {
    fn from(s: ShareVector) -> Self {
        s.0
    }
}

/// Watermark `W_j` and estimator timer `T_j` for every priority level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityParams {
    pub watermarks: Vec<f64>,
    pub timers: Vec<f64>,
}

impl PriorityParams {
    pub fn new(watermarks: Vec<f64>, timers: Vec<f64>) -> Result<Self> {
        let params = Self { watermarks, timers };
        params.validate()?;
        Ok(params)
    }

    /// Timers derived from the watermarks as `T_j = W_j / c`.
    pub fn from_watermarks(watermarks: Vec<f64>, capacity: f64) -> Result<Self> {
        if capacity.is_nan() || capacity <= 0.0 {
            return Err(Error::InvalidCapacity(format!("capacity {capacity}")));
        }
        let timers = watermarks.iter().map(|w| w / capacity).collect();
        Self::new(watermarks, timers)
    }

    pub fn priorities(&self) -> usize {
        self.watermarks.len()
    }

    pub fn max_watermark(&self) -> f64 {
        self.watermarks
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.watermarks.is_empty() {
            return Err(Error::EmptyPrioritySet);
        }
        if self.timers.len() != self.watermarks.len() {
            return Err(Error::LengthMismatch {
                what: "priority timers",
                expected: self.watermarks.len(),
                got: self.timers.len(),
            });
        }
        for (priority, &value) in self.watermarks.iter().enumerate() {
            if !(value >= 1.0 && value.is_finite()) {
                return Err(Error::InvalidWatermark { priority, value });
            }
        }
        for (priority, &value) in self.timers.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveTimer { priority, value });
            }
        }
        Ok(())
    }
}

/// Checks a full throttle configuration for `classes` classes and
/// `priorities` priority levels.
pub fn validate_config(
    classes: usize,
    priorities: usize,
    shares: &ShareVector,
    params: &PriorityParams,
) -> Result<()> {
    if classes == 0 {
        return Err(Error::EmptyClassSet);
    }
    if priorities == 0 {
        return Err(Error::EmptyPrioritySet);
    }
    if shares.len() != classes {
        return Err(Error::LengthMismatch {
            what: "class shares",
            expected: classes,
            got: shares.len(),
        });
    }
    if params.priorities() != priorities {
        return Err(Error::LengthMismatch {
            what: "priority watermarks",
            expected: priorities,
            got: params.priorities(),
        });
    }
    params.validate()
}
