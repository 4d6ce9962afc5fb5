//! Rate-based call gapping with per-class capacity shares.
//!
//! For each class the throttle tracks an offered-rate estimate and an
//! admitted-rate estimate. At every offer:
//!
//! 1. the timer of the offer's priority is selected;
//! 2. every offered-rate estimate is advanced, with an impulse only for the
//!    offer's class;
//! 3. the provisional admitted rates are computed the same way, uncommitted;
//! 4. the bounding rate of the offer's class is derived from the fresh
//!    offered rates, the shares and the capacity;
//! 5. the offer is admitted iff its class's provisional rate does not exceed
//!    the bound. Admission commits the provisional rates; rejection re-advances
//!    the admitted rates with no impulse at all.
//!
//! Offered-rate estimates keep the impulse of rejected offers: they are still
//! offered traffic.

use std::sync::Arc;

use crate::error::Result;
use crate::estimator::RateEstimator;
use crate::types::{CapacityProfile, Decision, Offer, ShareVector};

use super::bounds::{bound_rates, used_capacity, BoundVariant};
use super::{check_class, check_priority, DecisionRecord, Diagnostics, Throttle};

#[derive(Debug, Clone)]
pub struct GapperConfig {
    pub shares: ShareVector,
    /// Estimator timer per priority level.
    pub timers: Vec<f64>,
    pub capacity: Arc<CapacityProfile>,
    pub variant: BoundVariant,
    pub normalize_surplus: bool,
}

impl GapperConfig {
    pub fn new(shares: ShareVector, timers: Vec<f64>, capacity: Arc<CapacityProfile>) -> Self {
        Self {
            shares,
            timers,
            capacity,
            variant: BoundVariant::G,
            normalize_surplus: false,
        }
    }

    pub fn with_variant(mut self, variant: BoundVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_normalized_surplus(mut self, normalize: bool) -> Self {
        self.normalize_surplus = normalize;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.timers.is_empty() {
            return Err(crate::Error::EmptyPrioritySet);
        }
        for (priority, &value) in self.timers.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(crate::Error::NonPositiveTimer { priority, value });
            }
        }
        Ok(())
    }
}

/// Outcome of steps 1-4 for one offer, before anything but the offered
/// rates is known to be committed.
#[derive(Debug, Clone)]
pub(crate) struct Assessment {
    pub offered: Vec<f64>,
    pub provisional: Vec<f64>,
    pub used: f64,
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RateGapper {
    config: GapperConfig,
    offered: Vec<RateEstimator>,
    admitted: Vec<RateEstimator>,
}

impl RateGapper {
    pub fn new(config: GapperConfig, start: f64) -> Result<Self> {
        config.validate()?;
        let classes = config.shares.len();
        Ok(Self {
            config,
            offered: vec![RateEstimator::new(start); classes],
            admitted: vec![RateEstimator::new(start); classes],
        })
    }

    pub fn config(&self) -> &GapperConfig {
        &self.config
    }

    pub fn offered_rates(&self) -> Vec<f64> {
        self.offered.iter().map(RateEstimator::value).collect()
    }

    pub fn admitted_rates(&self) -> Vec<f64> {
        self.admitted.iter().map(RateEstimator::value).collect()
    }

    /// Replaces the estimator state, e.g. to seed a test.
    pub fn set_rates(&mut self, offered: &[f64], admitted: &[f64], at: f64) {
        for (e, &v) in self.offered.iter_mut().zip(offered) {
            *e = RateEstimator::with_value(v, at);
        }
        for (e, &v) in self.admitted.iter_mut().zip(admitted) {
            *e = RateEstimator::with_value(v, at);
        }
    }

    pub fn class_count(&self) -> usize {
        self.offered.len()
    }

    pub(crate) fn validate_offer(&self, offer: &Offer, priorities: usize) -> Result<()> {
        check_class(offer, self.class_count())?;
        check_priority(offer, priorities)?;
        Ok(())
    }

    pub(crate) fn assess(&self, offer: &Offer, timer: f64) -> Result<Assessment> {
        let t = offer.arrival;
        let offered = self
            .offered
            .iter()
            .enumerate()
            .map(|(i, e)| e.peek(t, i == offer.class, timer))
            .collect::<Result<Vec<_>>>()?;
        let provisional = self
            .admitted
            .iter()
            .enumerate()
            .map(|(i, e)| e.peek(t, i == offer.class, timer))
            .collect::<Result<Vec<_>>>()?;
        let capacity = self.config.capacity.rate_at(t);
        let shares = self.config.shares.as_slice();
        let used = used_capacity(&offered, shares, capacity);
        let bounds = bound_rates(
            &offered,
            shares,
            capacity,
            self.config.variant,
            self.config.normalize_surplus,
        );
        let used = match self.config.variant {
            BoundVariant::G => used.total,
            BoundVariant::GPrime => used.under_share,
        };
        Ok(Assessment {
            offered,
            provisional,
            used,
            bounds,
        })
    }

    /// Commits an assessment. Returns the committed admitted rates.
    pub(crate) fn apply(
        &mut self,
        offer: &Offer,
        timer: f64,
        assessment: &Assessment,
        admit: bool,
    ) -> Vec<f64> {
        let t = offer.arrival;
        for (e, &v) in self.offered.iter_mut().zip(&assessment.offered) {
            e.commit(t, v, timer);
        }
        if admit {
            for (e, &v) in self.admitted.iter_mut().zip(&assessment.provisional) {
                e.commit(t, v, timer);
            }
        } else {
            for e in &mut self.admitted {
                // elapsed time was validated by `assess`
                let _ = e.update(t, false, timer);
            }
        }
        self.admitted_rates()
    }

    pub(crate) fn diagnostics(assessment: &Assessment, admitted: Vec<f64>) -> Diagnostics {
        Diagnostics {
            fill: None,
            used_capacity: Some(assessment.used),
            offered_rate: assessment.offered.clone(),
            provisional_rate: assessment.provisional.clone(),
            admitted_rate: admitted,
            bound_rate: assessment.bounds.clone(),
        }
    }
}

impl Throttle for RateGapper {
    fn decide(&mut self, offer: &Offer) -> Result<DecisionRecord> {
        self.validate_offer(offer, self.config.timers.len())?;
        let timer = self.config.timers[offer.priority];
        let assessment = self.assess(offer, timer)?;
        let k = offer.class;
        let admit = assessment.provisional[k] <= assessment.bounds[k];
        let admitted = self.apply(offer, timer, &assessment, admit);
        Ok(DecisionRecord {
            offer: *offer,
            verdict: if admit {
                Decision::Admit
            } else {
                Decision::Reject
            },
            diagnostics: Self::diagnostics(&assessment, admitted),
        })
    }

    fn priorities(&self) -> usize {
        self.config.timers.len()
    }

    fn classes(&self) -> Option<usize> {
        Some(self.class_count())
    }
}
