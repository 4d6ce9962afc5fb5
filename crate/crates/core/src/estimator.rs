//! Point-process intensity estimator with linear forgetting.
//!
//! Every update scales the previous estimate by `max(0, 1 - dt/T)` and adds an
//! impulse of `1/T` when the event being accounted for belongs to the
//! estimated stream. One instance backs each of the offered-rate, admitted-rate
//! and bucket-rate variables of the throttles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimator {
    value: f64,
    last_time: f64,
    /// Timer used by the most recent update.
    last_timer: Option<f64>,
}

impl RateEstimator {
    /// Empty estimator anchored at `start`.
    pub fn new(start: f64) -> Self {
        Self {
            value: 0.0,
            last_time: start,
            last_timer: None,
        }
    }

    /// Estimator with an explicit prior value, mostly useful in tests.
    pub fn with_value(value: f64, last_time: f64) -> Self {
        Self {
            value: value.max(0.0),
            last_time,
            last_timer: None,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    pub fn last_timer(&self) -> Option<f64> {
        self.last_timer
    }

    /// The value [`update`](Self::update) would produce, without committing it.
    pub fn peek(&self, now: f64, impulse: bool, timer: f64) -> Result<f64> {
        let elapsed = now - self.last_time;
        if elapsed < 0.0 {
            return Err(Error::TimeRegression {
                now,
                last: self.last_time,
            });
        }
        debug_assert!(timer > 0.0);
        let decay = (1.0 - elapsed / timer).max(0.0);
        let kick = if impulse { 1.0 / timer } else { 0.0 };
        Ok(kick + self.value * decay)
    }

    pub fn update(&mut self, now: f64, impulse: bool, timer: f64) -> Result<f64> {
        let value = self.peek(now, impulse, timer)?;
        self.commit(now, value, timer);
        Ok(value)
    }

    /// Stores a value previously obtained from [`peek`](Self::peek).
    pub(crate) fn commit(&mut self, now: f64, value: f64, timer: f64) {
        self.value = value;
        self.last_time = now;
        self.last_timer = Some(timer);
    }
}
