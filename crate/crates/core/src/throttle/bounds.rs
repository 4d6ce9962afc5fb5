//! Used capacity and per-class bounding rates.

use serde::{Deserialize, Serialize};

/// Below this the surplus split `(c - u) / (rho - u)` is taken as zero.
pub const SURPLUS_GUARD: f64 = 1e-12;

/// How the surplus capacity is split between classes above their share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BoundVariant {
    /// Surplus relative to the full used capacity `u`.
    #[default]
    G,
    /// Surplus relative to the under-share part `u1` only.
    GPrime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsedCapacity {
    /// `sum_i min(s_i c, rho_i)`
    pub total: f64,
    /// Contribution of classes at or below their share.
    pub under_share: f64,
    /// Contribution of classes above their share (their capped `s_i c`).
    pub over_share: f64,
}

pub fn used_capacity(offered: &[f64], shares: &[f64], capacity: f64) -> UsedCapacity {
    debug_assert_eq!(offered.len(), shares.len());
    let mut under_share = 0.0;
    let mut over_share = 0.0;
    for (&rate, &share) in offered.iter().zip(shares) {
        let agreed = share * capacity;
        if rate <= agreed {
            under_share += rate;
        } else {
            over_share += agreed;
        }
    }
    UsedCapacity {
        total: under_share + over_share,
        under_share,
        over_share,
    }
}

/// Per-class bounding rates `g_i`.
///
/// A class at or below its agreed rate `s_i c` is bounded by its own offered
/// rate. A class above it gets `s_i c` plus its excess `rho_i - s_i c` scaled
/// by `(c - u) / (rho - u)`, where `rho` is the total offered rate and `u` the
/// used capacity of the chosen variant. For [`BoundVariant::G`] the bounds
/// add up to `c` whenever some class is above its share.
///
/// With `normalize` set, the excess scaling is replaced by the one that makes
/// the bounds add up to `c` (only changes [`BoundVariant::GPrime`]).
pub fn bound_rates(
    offered: &[f64],
    shares: &[f64],
    capacity: f64,
    variant: BoundVariant,
    normalize: bool,
) -> Vec<f64> {
    let used = used_capacity(offered, shares, capacity);
    let reference = match variant {
        BoundVariant::G => used.total,
        BoundVariant::GPrime => used.under_share,
    };
    let offered_total: f64 = offered.iter().sum();
    let surplus_fraction = |reference: f64| {
        let denom = offered_total - reference;
        if denom <= SURPLUS_GUARD {
            0.0
        } else {
            (capacity - reference) / denom
        }
    };
    let fraction = if normalize {
        surplus_fraction(used.total)
    } else {
        surplus_fraction(reference)
    };

    offered
        .iter()
        .zip(shares)
        .map(|(&rate, &share)| {
            let agreed = share * capacity;
            if rate <= agreed {
                rate
            } else {
                agreed + (rate - agreed) * fraction
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn used_capacity_examples() {
        let u = used_capacity(&[0.8, 0.4], &[0.2, 0.8], 1.0);
        assert!(close(u.total, 0.6) && close(u.under_share, 0.4) && close(u.over_share, 0.2));

        let zero = used_capacity(&[0.0, 0.0], &[0.5, 0.5], 3.0);
        assert_eq!(zero.total, 0.0);

        let saturated = used_capacity(&[5.0, 5.0], &[0.5, 0.5], 2.0);
        assert!(close(saturated.total, 2.0));
    }

    #[test]
    fn bound_rates_g() {
        let g = bound_rates(&[0.8, 0.4], &[0.2, 0.8], 1.0, BoundVariant::G, false);
        assert!(close(g[0], 0.6) && close(g[1], 0.4));
        assert!(close(g.iter().sum(), 1.0));

        let under = bound_rates(&[0.1, 0.5], &[0.2, 0.8], 1.0, BoundVariant::G, false);
        assert_eq!(under, vec![0.1, 0.5]);

        let single = bound_rates(&[2.0], &[1.0], 1.0, BoundVariant::G, false);
        assert_eq!(single, vec![1.0]);
    }

    #[test]
    fn bound_rates_gprime_as_printed() {
        let g = bound_rates(&[0.8, 0.4], &[0.2, 0.8], 1.0, BoundVariant::GPrime, false);
        assert!(close(g[0], 0.65) && close(g[1], 0.4));
        assert!(close(g.iter().sum(), 1.05));
    }

    #[test]
    fn normalized_gprime_sums_to_capacity() {
        let g = bound_rates(&[0.8, 0.4], &[0.2, 0.8], 1.0, BoundVariant::GPrime, true);
        assert!(close(g.iter().sum(), 1.0));
    }

    #[test]
    fn under_share_classes_keep_their_rate_below_capacity() {
        // total offered 0.7 < c: the surplus fraction exceeds one
        let g = bound_rates(&[0.3, 0.4], &[0.2, 0.8], 1.0, BoundVariant::G, false);
        assert_eq!(g[1], 0.4);
        assert!((g[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn guard_when_nothing_exceeds() {
        // rho - u == 0: every class sits at or below its share
        let g = bound_rates(&[0.1, 0.0], &[0.2, 0.8], 1.0, BoundVariant::G, false);
        assert_eq!(g, vec![0.1, 0.0]);
    }

    proptest! {
        #[test]
        fn g_sums_to_capacity_under_overload(
            raw in proptest::collection::vec((0.01..1.0f64, 0.0..50.0f64), 1..8),
            capacity in 0.01..100.0f64,
        ) {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            let shares: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
            let mut offered: Vec<f64> = raw.iter().map(|r| r.1).collect();
            // force at least one class above its share
            offered[0] = offered[0].max(shares[0] * capacity * 1.5 + 0.1);
            let g = bound_rates(&offered, &shares, capacity, BoundVariant::G, false);
            let sum: f64 = g.iter().sum();
            prop_assert!((sum - capacity).abs() <= 1e-9 * capacity.max(1.0));
        }

        #[test]
        fn g_equals_offered_when_all_under_share(
            raw in proptest::collection::vec((0.01..1.0f64, 0.0..1.0f64), 1..8),
            capacity in 0.01..100.0f64,
        ) {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            let shares: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
            let offered: Vec<f64> = raw.iter().zip(&shares).map(|(r, s)| r.1 * s * capacity).collect();
            let g = bound_rates(&offered, &shares, capacity, BoundVariant::G, false);
            prop_assert_eq!(g, offered);
        }
    }
}
