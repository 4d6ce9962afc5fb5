//! Seedable marked Poisson offer streams.
//!
//! Arrivals are drawn by thinning: within each interval between intensity
//! knots the aggregate intensity is linear, so the larger endpoint value is an
//! exact majorant. Accepted points are assigned a class in proportion to the
//! per-class intensities at that instant and a priority drawn independently
//! from the priority mix.
//!
//! Randomness comes from ChaCha8 (`rand_chacha` 0.9) keyed by
//! `seed_from_u64(seed)`; replication `r` reads ChaCha stream number `r`, so
//! replications are independent of each other and of evaluation order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Offer, SUM_TOLERANCE};

/// Random source for replication `index` of a stream seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Piecewise-linear intensity given by `(time, rate)` knots. The first rate
/// holds before the first knot and the last rate after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidProfile("no knots".into()));
        }
        for (i, &(t, rate)) in knots.iter().enumerate() {
            if !t.is_finite() || !rate.is_finite() || rate < 0.0 {
                return Err(Error::InvalidProfile(format!(
                    "knot {i} ({t}, {rate}) must be finite with a non-negative rate"
                )));
            }
            if i > 0 && t <= knots[i - 1].0 {
                return Err(Error::InvalidProfile(format!(
                    "knot {i} is not after knot {}",
                    i - 1
                )));
            }
        }
        Ok(Self { knots })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![(0.0, rate)])
    }

    pub fn ramp(from: f64, to: f64, duration: f64) -> Result<Self> {
        Self::new(vec![(0.0, from), (duration, to)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|&(kt, _)| kt <= t);
        if idx == 0 {
            return self.knots[0].1;
        }
        if idx == self.knots.len() {
            return self.knots[idx - 1].1;
        }
        let (t0, r0) = self.knots[idx - 1];
        let (t1, r1) = self.knots[idx];
        r0 + (r1 - r0) * (t - t0) / (t1 - t0)
    }

    fn is_zero(&self) -> bool {
        self.knots.iter().all(|&(_, r)| r == 0.0)
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = Error;

    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(knots)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(p: PiecewiseLinear) -> Self {
        p.knots
    }
}

/// Per-class intensity profiles; class `i` is `classes[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntensityProfile {
    pub classes: Vec<PiecewiseLinear>,
}

impl IntensityProfile {
    pub fn new(classes: Vec<PiecewiseLinear>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::EmptyClassSet);
        }
        Ok(Self { classes })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn rate_at(&self, class: usize, t: f64) -> f64 {
        self.classes[class].rate_at(t)
    }

    pub fn total_at(&self, t: f64) -> f64 {
        self.classes.iter().map(|p| p.rate_at(t)).sum()
    }

    /// All knot times of all classes, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .classes
            .iter()
            .flat_map(|p| p.knots.iter().map(|k| k.0))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }
}

/// Probability of each priority level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriorityMix(Vec<f64>);

impl PriorityMix {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidMix("no priority levels".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidMix(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidMix(format!("probabilities sum to {sum}")));
        }
        Ok(Self(probabilities))
    }

    pub fn single() -> Self {
        Self(vec![1.0])
    }

    pub fn uniform(levels: usize) -> Result<Self> {
        Self::new(vec![1.0 / levels as f64; levels])
    }

    pub fn levels(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        if self.0.len() == 1 {
            return 0;
        }
        let x: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in self.0.iter().enumerate() {
            acc += p;
            if x < acc {
                return j;
            }
        }
        self.0.len() - 1
    }
}

impl TryFrom<Vec<f64>> for PriorityMix {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PriorityMix> for Vec<f64> {
    fn from(m: PriorityMix) -> Self {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Stop {
    /// Generate offers on `[0, duration)` seconds.
    Duration(f64),
    /// Generate exactly this many offers (fewer only if the intensity dies out).
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub profiles: IntensityProfile,
    pub mix: PriorityMix,
    pub stop: Stop,
    pub seed: u64,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.profiles.classes.is_empty() {
            return Err(Error::EmptyClassSet);
        }
        if self.profiles.classes.iter().all(PiecewiseLinear::is_zero) {
            return Err(Error::AllZeroIntensity);
        }
        match self.stop {
            Stop::Duration(d) if !(d > 0.0 && d.is_finite()) => Err(Error::Scenario(format!(
                "stream duration {d} must be positive"
            ))),
            Stop::Count(0) => Err(Error::Scenario("stream count must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Stream for replication 0 of `spec`.
pub fn generate_stream(spec: &StreamSpec) -> Result<Vec<Offer>> {
    generate_replication(spec, 0)
}

/// Stream for replication `index` of `spec`.
pub fn generate_replication(spec: &StreamSpec, index: u64) -> Result<Vec<Offer>> {
    spec.validate()?;
    let mut rng = substream(spec.seed, index);
    let breaks = spec.profiles.breakpoints();
    let total = |t: f64| spec.profiles.total_at(t);

    let (limit_time, limit_count) = match spec.stop {
        Stop::Duration(d) => (d, usize::MAX),
        Stop::Count(n) => (f64::INFINITY, n),
    };
    let mut offers = Vec::with_capacity(limit_count.min(1 << 20));
    let mut t = 0.0f64;
    let mut last = f64::NEG_INFINITY;

    while offers.len() < limit_count {
        // current linear piece of the aggregate intensity
        let idx = breaks.partition_point(|&b| b <= t);
        let (seg_end, majorant) = if idx == breaks.len() {
            (f64::INFINITY, total(t))
        } else if idx == 0 {
            (breaks[0], total(breaks[0]))
        } else {
            let end = breaks[idx];
            (end, total(breaks[idx - 1]).max(total(end)))
        };
        if majorant <= 0.0 {
            if seg_end.is_infinite() || seg_end >= limit_time {
                break;
            }
            t = seg_end;
            continue;
        }
        let gap: f64 = rng.sample::<f64, _>(Exp1) / majorant;
        let candidate = t + gap;
        if candidate >= seg_end {
            t = seg_end;
            continue;
        }
        t = candidate;
        if t >= limit_time {
            break;
        }
        let intensity = total(t);
        let u: f64 = rng.random();
        if u * majorant >= intensity {
            continue;
        }
        let class = pick_class(&spec.profiles, t, intensity, rng.random());
        let priority = spec.mix.sample(&mut rng);
        if t <= last {
            // zero-probability tie; draw again
            continue;
        }
        last = t;
        offers.push(Offer::new(t, class, priority));
    }
    Ok(offers)
}

fn pick_class(profiles: &IntensityProfile, t: f64, total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut chosen = 0;
    for (i, p) in profiles.classes.iter().enumerate() {
        let rate = p.rate_at(t);
        if rate <= 0.0 {
            continue;
        }
        chosen = i;
        acc += rate;
        if target < acc {
            break;
        }
    }
    chosen
}

/// Formats a time with at least nine significant digits and no loss.
pub(crate) fn format_time(t: f64) -> String {
    let short = format!("{t}");
    let digits = short
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if digits >= 9 || short.contains(['e', 'i', 'N']) {
        return short;
    }
    let int_digits = if t.abs() >= 1.0 {
        (t.abs().log10().floor() as i32 + 1).max(1)
    } else {
        // leading zeros after the point do not count
        -((-t.abs().log10()).floor() as i32)
    };
    let decimals = (9 - int_digits).max(0) as usize;
    let padded = format!("{t:.decimals$}");
    if padded.parse::<f64>() == Ok(t) {
        padded
    } else {
        short
    }
}

pub fn stream_to_file(offers: &[Offer], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(offers.len() * 24 + 16);
    out.push_str("t,class,priority\n");
    for o in offers {
        let _ = writeln!(out, "{},{},{}", format_time(o.arrival), o.class, o.priority);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn stream_from_file(path: impl AsRef<Path>) -> Result<Vec<Offer>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_stream(&text, path)
}

fn parse_stream(text: &str, path: &Path) -> Result<Vec<Offer>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    if header.trim() != "t,class,priority" {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let mut offers: Vec<Offer> = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(
                n + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|e| parse_err(n + 1, format!("time {:?}: {e}", fields[0])))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(parse_err(
                n + 1,
                format!("time {t} must be finite and >= 0"),
            ));
        }
        let class = fields[1]
            .parse()
            .map_err(|e| parse_err(n + 1, format!("class {:?}: {e}", fields[1])))?;
        let priority = fields[2]
            .parse()
            .map_err(|e| parse_err(n + 1, format!("priority {:?}: {e}", fields[2])))?;
        if let Some(prev) = offers.last() {
            if t <= prev.arrival {
                return Err(Error::NonMonotoneTimestamps {
                    index: offers.len(),
                    t,
                    prev: prev.arrival,
                });
            }
        }
        offers.push(Offer::new(t, class, priority));
    }
    Ok(offers)
}
