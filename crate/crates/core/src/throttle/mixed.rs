//! Rate-based gapping relaxed by a token bucket fill ratio.
//!
//! The estimators and bounding rates are those of [`RateGapper`]; alongside,
//! a token bucket fill `b` is tracked with the usual drain/impulse rule. An
//! offer of class `k` and priority `j` is admitted iff
//! `(b / W_j) * provisional_k <= bound_k`, where `b` is the would-be fill
//! clamped to `W_max`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{CapacityProfile, Decision, Offer};

use super::bucket::validate_watermarks;
use super::gapper::{GapperConfig, RateGapper};
use super::{DecisionRecord, Throttle};

#[derive(Debug, Clone)]
pub struct MixedConfig {
    /// Estimator and bound configuration. Its timers are ignored when
    /// `derive_timers` is set.
    pub gapper: GapperConfig,
    pub watermarks: Vec<f64>,
    /// Token rate `r(t)` draining the bucket.
    pub rate: Arc<CapacityProfile>,
    /// Use `T_j = W_j / r(t)` at each offer instead of fixed timers.
    pub derive_timers: bool,
}

#[derive(Debug, Clone)]
pub struct MixedThrottle {
    gapper: RateGapper,
    watermarks: Vec<f64>,
    max_watermark: f64,
    rate: Arc<CapacityProfile>,
    derive_timers: bool,
    fill: f64,
    last_time: f64,
}

impl MixedThrottle {
    pub fn new(mut config: MixedConfig, start: f64) -> Result<Self> {
        validate_watermarks(&config.watermarks)?;
        if config.derive_timers {
            let r0 = config.rate.rate_at(start);
            config.gapper.timers = config.watermarks.iter().map(|w| w / r0).collect();
        } else if config.gapper.timers.len() != config.watermarks.len() {
            return Err(Error::LengthMismatch {
                what: "priority timers",
                expected: config.watermarks.len(),
                got: config.gapper.timers.len(),
            });
        }
        let max_watermark = config
            .watermarks
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            gapper: RateGapper::new(config.gapper, start)?,
            watermarks: config.watermarks,
            max_watermark,
            rate: config.rate,
            derive_timers: config.derive_timers,
            fill: 0.0,
            last_time: start,
        })
    }

    pub fn gapper(&self) -> &RateGapper {
        &self.gapper
    }

    pub fn gapper_mut(&mut self) -> &mut RateGapper {
        &mut self.gapper
    }

    pub fn fill(&self) -> f64 {
        self.fill
    }

    pub fn set_fill(&mut self, fill: f64, at: f64) {
        self.fill = fill.clamp(0.0, self.max_watermark);
        self.last_time = at;
    }

    fn timer(&self, priority: usize, t: f64) -> f64 {
        if self.derive_timers {
            self.watermarks[priority] / self.rate.rate_at(t)
        } else {
            self.gapper.config().timers[priority]
        }
    }
}

impl Throttle for MixedThrottle {
    fn decide(&mut self, offer: &Offer) -> Result<DecisionRecord> {
        self.gapper.validate_offer(offer, self.watermarks.len())?;
        let elapsed = offer.arrival - self.last_time;
        if elapsed < 0.0 {
            return Err(Error::TimeRegression {
                now: offer.arrival,
                last: self.last_time,
            });
        }
        let timer = self.timer(offer.priority, offer.arrival);
        let assessment = self.gapper.assess(offer, timer)?;

        let drained = self.fill - self.rate.rate_at(self.last_time) * elapsed;
        let candidate = (drained + 1.0).max(1.0).min(self.max_watermark);
        let ratio = candidate / self.watermarks[offer.priority];

        let k = offer.class;
        let admit = ratio * assessment.provisional[k] <= assessment.bounds[k];
        self.fill = if admit { candidate } else { drained.max(0.0) };
        self.last_time = offer.arrival;

        let admitted = self.gapper.apply(offer, timer, &assessment, admit);
        let mut diagnostics = RateGapper::diagnostics(&assessment, admitted);
        diagnostics.fill = Some(self.fill);
        Ok(DecisionRecord {
            offer: *offer,
            verdict: if admit {
                Decision::Admit
            } else {
                Decision::Reject
            },
            diagnostics,
        })
    }

    fn priorities(&self) -> usize {
        self.watermarks.len()
    }

    fn classes(&self) -> Option<usize> {
        Some(self.gapper.class_count())
    }
}
