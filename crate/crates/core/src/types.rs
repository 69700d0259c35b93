//! Domain types shared by the filter updates, the simulator and the oracle.
//!
//! Everything here is an immutable value type once constructed. Regions are
//! membership predicates rather than geometric objects, so any measurable
//! shape can be expressed, and they compose by intersection.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, compensated_sum};

/// Dropped cardinality tail above which truncation is reported.
pub const TAIL_WARNING_THRESHOLD: f64 = 1e-6;

// ---------------------------------------------------------------------------
// State and measurement
// ---------------------------------------------------------------------------

/// Target state: planar position (m) and velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }

    /// Distance of the position from the origin.
    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance_to(&self, other: &State) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Range-bearing measurement from a sensor at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub range: f64,
    /// Radians in (-pi, pi].
    pub bearing: f64,
}

impl Measurement {
    /// Builds a measurement, wrapping the bearing into (-pi, pi].
    pub fn new(range: f64, bearing: f64) -> Result<Self> {
        if !range.is_finite() || range < 0.0 {
            return Err(Error::param(
                "range",
                format!("must be finite and >= 0, got {range}"),
            ));
        }
        if !bearing.is_finite() {
            return Err(Error::param("bearing", "must be finite"));
        }
        Ok(Self {
            range,
            bearing: math::wrap_angle(bearing),
        })
    }

    /// Noiseless measurement of a state: `(sqrt(x^2 + y^2), atan2(y, x))`.
    pub fn of_state(state: &State) -> Self {
        Self {
            range: state.range(),
            bearing: state.y.atan2(state.x),
        }
    }
}

// ---------------------------------------------------------------------------
// Weighted particles
// ---------------------------------------------------------------------------

/// SMC representation of an intensity measure: non-negative weights attached
/// to states. The total weight is the expected number of targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedParticleSet {
    weights: Vec<f64>,
    states: Vec<State>,
}

impl WeightedParticleSet {
    pub fn new(weights: Vec<f64>, states: Vec<State>) -> Result<Self> {
        if weights.len() != states.len() {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: states.len(),
            });
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidWeight { index, value });
        }
        Ok(Self { weights, states })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &State)> + '_ {
        self.weights.iter().copied().zip(self.states.iter())
    }

    /// Total mass, i.e. the expected target number in the whole state space.
    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// Mass of the particles falling in `region`.
    pub fn mass_in(&self, region: &Region) -> f64 {
        compensated_sum(
            self.iter()
                .filter(|(_, s)| region.contains(s))
                .map(|(w, _)| w),
        )
    }

    pub fn extend(&mut self, other: WeightedParticleSet) {
        self.weights.extend(other.weights);
        self.states.extend(other.states);
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<State>) {
        (self.weights, self.states)
    }
}

impl FromIterator<(f64, State)> for WeightedParticleSet {
    /// Collects particles; panics on a negative or non-finite weight.
    fn from_iter<I: IntoIterator<Item = (f64, State)>>(iter: I) -> Self {
        let (weights, states): (Vec<_>, Vec<_>) = iter.into_iter().unzip();
        Self::new(weights, states).expect("particle weights must be finite and non-negative")
    }
}

// ---------------------------------------------------------------------------
// Cardinality distribution
// ---------------------------------------------------------------------------

/// Distribution of the target number over `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityDistribution {
    probabilities: Vec<f64>,
}

impl CardinalityDistribution {
    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidCardinality("empty support".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidCardinality(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total = compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::InvalidCardinality("zero total weight".into()));
        }
        Ok(Self {
            probabilities: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Dirac mass at `k` on the support `0..=n_max`.
    pub fn point_mass(k: usize, n_max: usize) -> Result<Self> {
        if k > n_max {
            return Err(Error::InvalidCardinality(format!(
                "{k} beyond n_max = {n_max}"
            )));
        }
        let mut probabilities = vec![0.0; n_max + 1];
        probabilities[k] = 1.0;
        Ok(Self { probabilities })
    }

    /// Poisson law with the given rate, truncated to `0..=n_max` and renormalized.
    pub fn poisson(rate: f64, n_max: usize) -> Result<Self> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::param(
                "rate",
                format!("must be finite and >= 0, got {rate}"),
            ));
        }
        if rate == 0.0 {
            return Self::point_mass(0, n_max);
        }
        let ln_rate = rate.ln();
        let weights: Vec<f64> = (0..=n_max)
            .map(|n| (-rate + n as f64 * ln_rate - math::ln_factorial(n)).exp())
            .collect();
        let kept = compensated_sum(weights.iter().copied());
        warn_on_tail(1.0 - kept, n_max);
        Self::from_weights(weights)
    }

    /// Binomial law `B(n, p)` on `0..=n_max` (`n <= n_max`).
    pub fn binomial(n: usize, p: f64, n_max: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("p", format!("must lie in [0, 1], got {p}")));
        }
        if n > n_max {
            return Err(Error::InvalidCardinality(format!(
                "{n} beyond n_max = {n_max}"
            )));
        }
        let mut probabilities = vec![0.0; n_max + 1];
        for (k, slot) in probabilities.iter_mut().enumerate().take(n + 1) {
            *slot = binomial_pmf(n, k, p);
        }
        Self::from_weights(probabilities)
    }

    pub fn n_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Probability of `n`; zero outside the support.
    pub fn pmf(&self, n: usize) -> f64 {
        self.probabilities.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(
            self.probabilities
                .iter()
                .enumerate()
                .map(|(n, p)| n as f64 * p),
        )
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second = compensated_sum(
            self.probabilities
                .iter()
                .enumerate()
                .map(|(n, p)| (n * n) as f64 * p),
        );
        (second - mean * mean).max(0.0)
    }

    /// Resizes the support to `0..=n_max`: zero-padding when growing,
    /// truncation and renormalization when shrinking.
    pub fn with_n_max(&self, n_max: usize) -> Result<Self> {
        if n_max >= self.n_max() {
            let mut probabilities = self.probabilities.clone();
            probabilities.resize(n_max + 1, 0.0);
            return Ok(Self { probabilities });
        }
        let dropped = compensated_sum(self.probabilities[n_max + 1..].iter().copied());
        warn_on_tail(dropped, n_max);
        Self::from_weights(self.probabilities[..=n_max].to_vec())
    }
}

fn warn_on_tail(dropped: f64, n_max: usize) {
    if dropped > TAIL_WARNING_THRESHOLD {
        log::warn!("cardinality truncated at n_max = {n_max} drops tail mass {dropped:.3e}");
    }
}

pub(crate) fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln = math::ln_factorial(n) - math::ln_factorial(k) - math::ln_factorial(n - k)
        + k as f64 * p.ln()
        + (n - k) as f64 * (1.0 - p).ln();
    ln.exp()
}

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

type Membership = dyn Fn(&State) -> bool + Send + Sync;

/// A labelled membership predicate over the state space.
#[derive(Clone)]
pub struct Region {
    label: String,
    membership: Arc<Membership>,
}

impl Region {
    pub fn new(
        label: impl Into<String>,
        membership: impl Fn(&State) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            membership: Arc::new(membership),
        }
    }

    /// The whole state space.
    pub fn everywhere() -> Self {
        Self::new("all", |_| true)
    }

    /// The empty set.
    pub fn nowhere() -> Self {
        Self::new("empty", |_| false)
    }

    /// Closed disc in the position plane.
    pub fn disc(label: impl Into<String>, cx: f64, cy: f64, radius: f64) -> Self {
        let r2 = radius * radius;
        Self::new(label, move |s: &State| {
            let (dx, dy) = (s.x - cx, s.y - cy);
            dx * dx + dy * dy <= r2
        })
    }

    /// Positions with `inner < |p - c| <= outer`.
    pub fn annulus(label: impl Into<String>, cx: f64, cy: f64, inner: f64, outer: f64) -> Self {
        let (i2, o2) = (inner * inner, outer * outer);
        Self::new(label, move |s: &State| {
            let (dx, dy) = (s.x - cx, s.y - cy);
            let d2 = dx * dx + dy * dy;
            d2 > i2 && d2 <= o2
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn contains(&self, state: &State) -> bool {
        (self.membership)(state)
    }

    pub fn intersection(&self, other: &Region) -> Region {
        region_intersection(self, other)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("label", &self.label)
            .finish()
    }
}

/// Region whose membership is the conjunction of both memberships.
pub fn region_intersection(a: &Region, b: &Region) -> Region {
    let (ma, mb) = (Arc::clone(&a.membership), Arc::clone(&b.membership));
    Region {
        label: format!("({})&({})", a.label, b.label),
        membership: Arc::new(move |s: &State| ma(s) && mb(s)),
    }
}

// ---------------------------------------------------------------------------
// Multi-target configurations
// ---------------------------------------------------------------------------

/// A realisation of the multi-target state: a finite collection of states.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MultiTargetConfig {
    pub states: Vec<State>,
}

impl MultiTargetConfig {
    pub fn new(states: Vec<State>) -> Self {
        Self { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Number of states of `config` inside `region`.
pub fn count_in_region(config: &MultiTargetConfig, region: &Region) -> usize {
    config.states.iter().filter(|s| region.contains(s)).count()
}

// ---------------------------------------------------------------------------
// Observation model
// ---------------------------------------------------------------------------

/// Single-sensor observation model: detection probability, single-target
/// likelihood and an i.i.d. clutter process.
///
/// Densities are per unit of measurement space (per meter-radian for the
/// range-bearing sensor).
pub trait ObservationModel {
    /// `p_d(x)`, in `[0, 1]`.
    fn detection_probability(&self, state: &State) -> f64;

    /// `L(z|x)`, the density of `z` given that `x` is detected.
    fn likelihood(&self, measurement: &Measurement, state: &State) -> f64;

    /// Spatial clutter density `c(z)`.
    fn clutter_density(&self, measurement: &Measurement) -> f64;

    /// Clutter cardinality distribution.
    fn clutter_cardinality(&self) -> &CardinalityDistribution;

    /// Mean clutter count.
    fn clutter_rate(&self) -> f64;

    /// Fills `out[k] = p_d(x) L(z_k|x)` for every measurement.
    fn detection_row(&self, state: &State, measurements: &[Measurement], out: &mut [f64]) {
        let pd = self.detection_probability(state);
        for (slot, z) in out.iter_mut().zip(measurements) {
            *slot = if pd > 0.0 {
                pd * self.likelihood(z, state)
            } else {
                0.0
            };
        }
    }
}

/// Per-region mean and variance of the target number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalStats {
    pub label: String,
    pub mean: f64,
    pub variance: f64,
}
