//! Admission strategies. Every strategy is a single-writer state machine
//! that maps each offer, in arrival order, to admit or reject.

mod bounds;
mod bucket;
mod gapper;
mod mixed;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Decision, Offer};

pub use bounds::{bound_rates, used_capacity, BoundVariant, UsedCapacity, SURPLUS_GUARD};
pub use bucket::{RateModelBucket, TokenBucket};
pub use gapper::{GapperConfig, RateGapper};
pub use mixed::{MixedConfig, MixedThrottle};

/// State observed while deciding one offer. Fields a strategy does not
/// track are `None` or empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Bucket fill after the decision.
    pub fill: Option<f64>,
    /// Used capacity entering the bound computation.
    pub used_capacity: Option<f64>,
    /// Offered-rate estimate per class.
    pub offered_rate: Vec<f64>,
    /// Provisional admitted rate per class.
    pub provisional_rate: Vec<f64>,
    /// Committed admitted rate per class after the decision.
    pub admitted_rate: Vec<f64>,
    /// Bounding rate per class.
    pub bound_rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub offer: Offer,
    pub verdict: Decision,
    pub diagnostics: Diagnostics,
}

pub trait Throttle {
    /// Decides one offer and advances the internal state. Offers must be
    /// presented in non-decreasing arrival order.
    fn decide(&mut self, offer: &Offer) -> Result<DecisionRecord>;

    fn priorities(&self) -> usize;

    /// Number of traffic classes the strategy distinguishes, if any.
    fn classes(&self) -> Option<usize> {
        None
    }
}

pub(crate) fn check_priority(offer: &Offer, priorities: usize) -> Result<usize> {
    if offer.priority < priorities {
        Ok(offer.priority)
    } else {
        Err(Error::UnknownPriority {
            priority: offer.priority,
            priorities,
        })
    }
}

pub(crate) fn check_class(offer: &Offer, classes: usize) -> Result<usize> {
    if offer.class < classes {
        Ok(offer.class)
    } else {
        Err(Error::UnknownClass {
            class: offer.class,
            classes,
        })
    }
}

/// Any of the built-in strategies behind one type.
#[derive(Debug, Clone)]
pub enum AnyThrottle {
    TokenBucket(TokenBucket),
    RateModel(RateModelBucket),
    Gapper(RateGapper),
    Mixed(MixedThrottle),
}

impl Throttle for AnyThrottle {
    fn decide(&mut self, offer: &Offer) -> Result<DecisionRecord> {
        match self {
            AnyThrottle::TokenBucket(t) => t.decide(offer),
            AnyThrottle::RateModel(t) => t.decide(offer),
            AnyThrottle::Gapper(t) => t.decide(offer),
            AnyThrottle::Mixed(t) => t.decide(offer),
        }
    }

    fn priorities(&self) -> usize {
        match self {
            AnyThrottle::TokenBucket(t) => t.priorities(),
            AnyThrottle::RateModel(t) => t.priorities(),
            AnyThrottle::Gapper(t) => t.priorities(),
            AnyThrottle::Mixed(t) => t.priorities(),
        }
    }

    fn classes(&self) -> Option<usize> {
        match self {
            AnyThrottle::TokenBucket(t) => t.classes(),
            AnyThrottle::RateModel(t) => t.classes(),
            AnyThrottle::Gapper(t) => t.classes(),
            AnyThrottle::Mixed(t) => t.classes(),
        }
    }
}

/// Earliest probe time at which each priority level would be admitted.
///
/// For every priority `j` a copy of `throttle` is offered a single probe of
/// class `class` at `t0 + step`, `t0 + 2 step`, ... up to `t0 + horizon`;
/// every probe starts from the untouched state. `None` means no admission
/// within the horizon.
pub fn probe_recovery_times<T: Throttle + Clone>(
    throttle: &T,
    t0: f64,
    step: f64,
    horizon: f64,
    class: usize,
) -> Result<Vec<Option<f64>>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::NonPositiveStep(step));
    }
    let steps = (horizon / step).floor() as u64;
    (0..throttle.priorities())
        .map(|priority| {
            for k in 1..=steps {
                let t = t0 + k as f64 * step;
                let mut probe = throttle.clone();
                if probe
                    .decide(&Offer::new(t, class, priority))?
                    .verdict
                    .is_admit()
                {
                    return Ok(Some(t));
                }
            }
            Ok(None)
        })
        .collect()
}
