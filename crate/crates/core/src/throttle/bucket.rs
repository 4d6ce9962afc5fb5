//! Token bucket with per-priority watermarks, in the inverted-fill
//! convention, and its rate-model formulation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{CapacityProfile, Decision, Offer};

use super::{check_priority, DecisionRecord, Diagnostics, Throttle};

/// Deterministic token bucket.
///
/// Each admitted offer adds one unit of fill; the fill drains at the token
/// rate `r(t)`. An offer of priority `j` is admitted when the fill it would
/// cause stays at or below the watermark `W_j`.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    watermarks: Vec<f64>,
    rate: Arc<CapacityProfile>,
    fill: f64,
    last_time: f64,
}

impl TokenBucket {
    pub fn new(watermarks: Vec<f64>, rate: Arc<CapacityProfile>, start: f64) -> Result<Self> {
        validate_watermarks(&watermarks)?;
        Ok(Self {
            watermarks,
            rate,
            fill: 0.0,
            last_time: start,
        })
    }

    pub fn fill(&self) -> f64 {
        self.fill
    }

    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    pub fn watermarks(&self) -> &[f64] {
        &self.watermarks
    }

    /// Overrides the fill level, e.g. to seed a test state.
    pub fn set_fill(&mut self, fill: f64, at: f64) {
        self.fill = fill.max(0.0);
        self.last_time = at;
    }
}

impl Throttle for TokenBucket {
    fn decide(&mut self, offer: &Offer) -> Result<DecisionRecord> {
        let watermark = self.watermarks[check_priority(offer, self.watermarks.len())?];
        let elapsed = offer.arrival - self.last_time;
        if elapsed < 0.0 {
            return Err(Error::TimeRegression {
                now: offer.arrival,
                last: self.last_time,
            });
        }
        // drain at the rate in force since the previous event
        let drained = self.fill - self.rate.rate_at(self.last_time) * elapsed;
        let candidate = (drained + 1.0).max(1.0);
        let verdict = if candidate <= watermark {
            self.fill = candidate;
            Decision::Admit
        } else {
            self.fill = drained.max(0.0);
            Decision::Reject
        };
        self.last_time = offer.arrival;
        Ok(DecisionRecord {
            offer: *offer,
            verdict,
            diagnostics: Diagnostics {
                fill: Some(self.fill),
                ..Diagnostics::default()
            },
        })
    }

    fn priorities(&self) -> usize {
        self.watermarks.len()
    }
}

/// Token bucket expressed through a bucket-rate variable `a` with
/// `fill = a * T`, `T = W / r`.
///
/// With several priorities the reference watermark is the largest one and an
/// offer of priority `j` is admitted iff `a <= r * W_j / W_max`.
#[derive(Debug, Clone)]
pub struct RateModelBucket {
    watermarks: Vec<f64>,
    reference: f64,
    rate: Arc<CapacityProfile>,
    bucket_rate: f64,
    last_time: f64,
}

impl RateModelBucket {
    pub fn new(watermarks: Vec<f64>, rate: Arc<CapacityProfile>, start: f64) -> Result<Self> {
        validate_watermarks(&watermarks)?;
        let reference = watermarks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            watermarks,
            reference,
            rate,
            bucket_rate: 0.0,
            last_time: start,
        })
    }

    pub fn bucket_rate(&self) -> f64 {
        self.bucket_rate
    }

    /// Timer `W_max / r(t)`.
    pub fn timer_at(&self, t: f64) -> f64 {
        self.reference / self.rate.rate_at(t)
    }

    /// Fill level equivalent to the current bucket rate.
    pub fn equivalent_fill(&self) -> f64 {
        self.bucket_rate * self.timer_at(self.last_time)
    }
}

impl Throttle for RateModelBucket {
    fn decide(&mut self, offer: &Offer) -> Result<DecisionRecord> {
        let watermark = self.watermarks[check_priority(offer, self.watermarks.len())?];
        let elapsed = offer.arrival - self.last_time;
        if elapsed < 0.0 {
            return Err(Error::TimeRegression {
                now: offer.arrival,
                last: self.last_time,
            });
        }
        let rate = self.rate.rate_at(offer.arrival);
        let timer = self.reference / rate;
        let decayed = ((timer * self.bucket_rate - elapsed * rate) / timer).max(0.0);
        let candidate = 1.0 / timer + decayed;
        let verdict = if candidate <= rate * watermark / self.reference {
            self.bucket_rate = candidate;
            Decision::Admit
        } else {
            self.bucket_rate = decayed;
            Decision::Reject
        };
        self.last_time = offer.arrival;
        Ok(DecisionRecord {
            offer: *offer,
            verdict,
            diagnostics: Diagnostics {
                fill: Some(self.bucket_rate * timer),
                ..Diagnostics::default()
            },
        })
    }

    fn priorities(&self) -> usize {
        self.watermarks.len()
    }
}

pub(crate) fn validate_watermarks(watermarks: &[f64]) -> Result<()> {
    if watermarks.is_empty() {
        return Err(Error::EmptyPrioritySet);
    }
    for (priority, &value) in watermarks.iter().enumerate() {
        if !(value >= 1.0 && value.is_finite()) {
            return Err(Error::InvalidWatermark { priority, value });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_rate() -> Arc<CapacityProfile> {
        Arc::new(CapacityProfile::constant(1.0).unwrap())
    }

    #[test]
    fn admits_after_drain() {
        let mut tb = TokenBucket::new(vec![10.0], unit_rate(), 0.0).unwrap();
        tb.set_fill(5.0, 0.0);
        let rec = tb.decide(&Offer::new(2.0, 0, 0)).unwrap();
        assert_eq!(rec.verdict, Decision::Admit);
        assert_eq!(tb.fill(), 4.0);
    }

    #[test]
    fn empty_bucket_admits() {
        let mut tb = TokenBucket::new(vec![1.0], unit_rate(), 0.0).unwrap();
        assert!(tb
            .decide(&Offer::new(0.3, 0, 0))
            .unwrap()
            .verdict
            .is_admit());
        assert_eq!(tb.fill(), 1.0);
    }

    #[test]
    fn rejection_recomputes_without_impulse() {
        let mut tb = TokenBucket::new(vec![10.0], unit_rate(), 0.0).unwrap();
        tb.set_fill(10.0, 0.0);
        let rec = tb.decide(&Offer::new(0.5, 0, 0)).unwrap();
        assert_eq!(rec.verdict, Decision::Reject);
        assert_eq!(tb.fill(), 9.5);
    }

    #[test]
    fn drain_uses_previous_event_rate() {
        let rate = Arc::new(CapacityProfile::new(vec![(0.0, 1.0), (1.0, 5.0)]).unwrap());
        let mut tb = TokenBucket::new(vec![100.0], rate, 0.0).unwrap();
        tb.set_fill(10.0, 0.5);
        tb.decide(&Offer::new(2.5, 0, 0)).unwrap();
        // rate 1.0 sampled at 0.5 over 2 seconds
        assert_eq!(tb.fill(), 9.0);
    }

    #[test]
    fn priority_watermarks() {
        let mut tb = TokenBucket::new(vec![15.0, 10.0], unit_rate(), 0.0).unwrap();
        tb.set_fill(11.0, 0.0);
        assert!(!tb
            .decide(&Offer::new(0.5, 0, 1))
            .unwrap()
            .verdict
            .is_admit());
        assert!(tb
            .decide(&Offer::new(0.6, 0, 0))
            .unwrap()
            .verdict
            .is_admit());
        assert!(matches!(
            tb.decide(&Offer::new(0.7, 0, 2)),
            Err(Error::UnknownPriority { .. })
        ));
    }

    #[test]
    fn rate_model_update() {
        let mut m = RateModelBucket::new(vec![10.0], unit_rate(), 0.0).unwrap();
        m.bucket_rate = 0.5;
        let rec = m.decide(&Offer::new(2.0, 0, 0)).unwrap();
        assert!(rec.verdict.is_admit());
        assert!((m.bucket_rate() - 0.4).abs() < 1e-15);

        let mut fresh = RateModelBucket::new(vec![10.0], unit_rate(), 0.0).unwrap();
        fresh.decide(&Offer::new(1.0, 0, 0)).unwrap();
        assert!((fresh.bucket_rate() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn regression_rejected() {
        let mut tb = TokenBucket::new(vec![10.0], unit_rate(), 0.0).unwrap();
        tb.decide(&Offer::new(2.0, 0, 0)).unwrap();
        assert!(matches!(
            tb.decide(&Offer::new(1.0, 0, 0)),
            Err(Error::TimeRegression { .. })
        ));
    }
}
