//! Queue-free admission control ("call gapping").
//!
//! The crate provides four throttle strategies behind one [`Throttle`]
//! interface, a seedable generator of marked Poisson offer streams, a
//! simulation harness that replays one stream through several strategies, and
//! checkers for the throughput-bound, priority and minimum-share requirements.

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod scenario;
pub mod sim;
pub mod throttle;
pub mod traffic;
pub mod types;

pub use error::{Error, Result};
pub use estimator::RateEstimator;
pub use throttle::{
    probe_recovery_times, AnyThrottle, BoundVariant, DecisionRecord, Diagnostics, GapperConfig,
    MixedConfig, MixedThrottle, RateGapper, RateModelBucket, Throttle, TokenBucket,
};
pub use types::{validate_config, CapacityProfile, Decision, Offer, PriorityParams, ShareVector};
