//! Exact multi-target Bayes update on a finite state space.
//!
//! Targets can only sit on a handful of points, so the posterior over
//! configurations can be enumerated and its regional moments computed
//! exactly. Both filter updates are checked against it.

use std::collections::BTreeMap;

use rand::Rng;

use crate::cphd::CphdUpdate;
use crate::error::{Error, Result};
use crate::math::{ln_factorial, KahanSum};
use crate::phd::PhdUpdate;
use crate::types::{
    CardinalityDistribution, Measurement, MultiTargetConfig, ObservationModel, Region, State,
    WeightedParticleSet,
};

/// Largest number of partitions or configurations the oracle will visit.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

/// Above this many (ordered tuple, association) pairs the posterior is
/// enumerated over point multisets instead.
const ORDERED_WORK_LIMIT: u128 = 1_000_000;

// ---------------------------------------------------------------------------
// Discrete observation model
// ---------------------------------------------------------------------------

/// Observation model given by tables over a fixed list of points and a
/// fixed list of measurements. States or measurements outside the tables
/// have zero detection probability, likelihood and clutter density.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    points: Vec<State>,
    measurements: Vec<Measurement>,
    detection: Vec<f64>,
    /// `likelihood[point][measurement]`.
    likelihood: Vec<Vec<f64>>,
    clutter_density: Vec<f64>,
    clutter: CardinalityDistribution,
    clutter_rate: f64,
}

impl DiscreteModel {
    pub fn new(
        points: Vec<State>,
        measurements: Vec<Measurement>,
        detection: Vec<f64>,
        likelihood: Vec<Vec<f64>>,
        clutter_density: Vec<f64>,
        clutter: CardinalityDistribution,
    ) -> Result<Self> {
        let (s, m) = (points.len(), measurements.len());
        check_len(detection.len(), s)?;
        check_len(likelihood.len(), s)?;
        for row in &likelihood {
            check_len(row.len(), m)?;
        }
        check_len(clutter_density.len(), m)?;
        if detection.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param(
                "detection",
                "probabilities must lie in [0, 1]",
            ));
        }
        let finite_non_negative = |v: &f64| v.is_finite() && *v >= 0.0;
        if !likelihood.iter().flatten().all(finite_non_negative)
            || !clutter_density.iter().all(finite_non_negative)
        {
            return Err(Error::param(
                "likelihood",
                "densities must be finite and >= 0",
            ));
        }
        let clutter_rate = clutter.mean();
        Ok(Self {
            points,
            measurements,
            detection,
            likelihood,
            clutter_density,
            clutter,
            clutter_rate,
        })
    }

    pub fn points(&self) -> &[State] {
        &self.points
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn set_clutter_density(&mut self, k: usize, value: f64) {
        self.clutter_density[k] = value;
    }

    fn point_index(&self, state: &State) -> Option<usize> {
        self.points.iter().position(|p| p == state)
    }

    fn measurement_index(&self, z: &Measurement) -> Option<usize> {
        self.measurements.iter().position(|m| m == z)
    }
}

fn check_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}

impl ObservationModel for DiscreteModel {
    fn detection_probability(&self, state: &State) -> f64 {
        self.point_index(state).map_or(0.0, |i| self.detection[i])
    }

    fn likelihood(&self, measurement: &Measurement, state: &State) -> f64 {
        match (self.point_index(state), self.measurement_index(measurement)) {
            (Some(i), Some(k)) => self.likelihood[i][k],
            _ => 0.0,
        }
    }

    fn clutter_density(&self, measurement: &Measurement) -> f64 {
        self.measurement_index(measurement)
            .map_or(0.0, |k| self.clutter_density[k])
    }

    fn clutter_cardinality(&self) -> &CardinalityDistribution {
        &self.clutter
    }

    fn clutter_rate(&self) -> f64 {
        self.clutter_rate
    }
}

// ---------------------------------------------------------------------------
// Prior
// ---------------------------------------------------------------------------

/// I.i.d. prior: `n ~ rho`, then `n` points drawn independently from `spatial`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrior {
    points: Vec<State>,
    rho: CardinalityDistribution,
    spatial: Vec<f64>,
}

impl DiscretePrior {
    pub fn new(
        points: Vec<State>,
        rho: CardinalityDistribution,
        spatial: Vec<f64>,
    ) -> Result<Self> {
        check_len(spatial.len(), points.len())?;
        if points.is_empty() {
            return Err(Error::param("points", "at least one point is required"));
        }
        if spatial.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::param(
                "spatial",
                "probabilities must be finite and >= 0",
            ));
        }
        let total: f64 = spatial.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(
                "spatial",
                format!("must sum to one, got {total}"),
            ));
        }
        Ok(Self {
            points,
            rho,
            spatial,
        })
    }

    pub fn points(&self) -> &[State] {
        &self.points
    }

    pub fn rho(&self) -> &CardinalityDistribution {
        &self.rho
    }

    pub fn spatial(&self) -> &[f64] {
        &self.spatial
    }

    /// Intensity `mean(rho) spatial(s)` as one particle per point.
    pub fn intensity(&self) -> WeightedParticleSet {
        let mean = self.rho.mean();
        WeightedParticleSet::new(
            self.spatial.iter().map(|p| mean * p).collect(),
            self.points.clone(),
        )
        .expect("prior intensity weights are finite and non-negative")
    }
}

// ---------------------------------------------------------------------------
// Likelihood
// ---------------------------------------------------------------------------

/// One data association: every measurement goes to a distinct target or
/// to clutter; targets left over are missed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationPartition {
    /// `Some(j)` when measurement `k` comes from target `j`.
    pub assignments: Vec<Option<usize>>,
}

impl AssociationPartition {
    pub fn clutter_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_none()).count()
    }

    pub fn detected_count(&self) -> usize {
        self.assignments.len() - self.clutter_count()
    }
}

/// `sum_d C(m, d) C(n, d) d!`.
pub fn partition_count(m: usize, n: usize) -> u128 {
    let mut total = 0u128;
    let mut term = 1u128;
    for d in 0..=m.min(n) {
        if d > 0 {
            term = term * ((m - d + 1) * (n - d + 1)) as u128 / d as u128;
        }
        total = total.saturating_add(term);
    }
    total
}

fn check_budget(required: u128) -> Result<()> {
    if required > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded {
            required,
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(())
}

/// Visits every association of `m` measurements with `n` targets.
pub fn for_each_partition(
    m: usize,
    n: usize,
    mut visit: impl FnMut(&AssociationPartition),
) -> Result<()> {
    check_budget(partition_count(m, n))?;
    let mut partition = AssociationPartition {
        assignments: vec![None; m],
    };
    let mut used = vec![false; n];
    recurse(0, &mut partition, &mut used, &mut visit);
    Ok(())
}

fn recurse(
    k: usize,
    partition: &mut AssociationPartition,
    used: &mut [bool],
    visit: &mut impl FnMut(&AssociationPartition),
) {
    if k == partition.assignments.len() {
        visit(partition);
        return;
    }
    partition.assignments[k] = None;
    recurse(k + 1, partition, used, visit);
    for j in 0..used.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        partition.assignments[k] = Some(j);
        recurse(k + 1, partition, used, visit);
        used[j] = false;
    }
    partition.assignments[k] = None;
}

/// Symmetric clutter density of `k` clutter points, `k! rho_c(k)`, times
/// the spatial densities.
fn clutter_factor(k: usize, rho_c: &CardinalityDistribution) -> f64 {
    let p = rho_c.pmf(k);
    if p == 0.0 {
        0.0
    } else {
        (ln_factorial(k) + p.ln()).exp()
    }
}

/// Multi-measurement, multi-target likelihood `L(z_{1:m} | x_{1:n})`,
/// summed over every data association.
pub fn likelihood_exact<M: ObservationModel + ?Sized>(
    measurements: &[Measurement],
    states: &MultiTargetConfig,
    model: &M,
) -> Result<f64> {
    let (m, n) = (measurements.len(), states.len());
    let detect: Vec<Vec<f64>> = states
        .states
        .iter()
        .map(|x| {
            let pd = model.detection_probability(x);
            measurements
                .iter()
                .map(|z| pd * model.likelihood(z, x))
                .collect()
        })
        .collect();
    let missed: Vec<f64> = states
        .states
        .iter()
        .map(|x| 1.0 - model.detection_probability(x))
        .collect();
    let clutter: Vec<f64> = measurements
        .iter()
        .map(|z| model.clutter_density(z))
        .collect();
    let mut total = KahanSum::default();
    let mut used = vec![false; n];
    for_each_partition(m, n, |partition| {
        used.iter_mut().for_each(|u| *u = false);
        let mut product = clutter_factor(partition.clutter_count(), model.clutter_cardinality());
        for (k, a) in partition.assignments.iter().enumerate() {
            match a {
                Some(j) => {
                    used[*j] = true;
                    product *= detect[*j][k];
                }
                None => product *= clutter[k],
            }
        }
        for (j, u) in used.iter().enumerate() {
            if !u {
                product *= missed[j];
            }
        }
        total.add(product);
    })?;
    Ok(total.value())
}

/// Likelihood of a configuration given by how many targets sit on each
/// point, summing associations of measurements with points.
fn likelihood_of_counts<M: ObservationModel + ?Sized>(
    counts: &[usize],
    points: &[State],
    measurements: &[Measurement],
    model: &M,
) -> f64 {
    let s = points.len();
    let m = measurements.len();
    let detect: Vec<Vec<f64>> = points
        .iter()
        .map(|x| {
            let pd = model.detection_probability(x);
            measurements
                .iter()
                .map(|z| pd * model.likelihood(z, x))
                .collect()
        })
        .collect();
    let missed: Vec<f64> = points
        .iter()
        .map(|x| 1.0 - model.detection_probability(x))
        .collect();
    let clutter: Vec<f64> = measurements
        .iter()
        .map(|z| model.clutter_density(z))
        .collect();
    // Each measurement goes to clutter (index s) or to one of the points.
    let mut choice = vec![0usize; m];
    let mut total = KahanSum::default();
    loop {
        let mut used = vec![0usize; s];
        let mut clutter_count = 0;
        let mut product = 1.0;
        for (k, &c) in choice.iter().enumerate() {
            if c == s {
                clutter_count += 1;
                product *= clutter[k];
            } else {
                // (counts - used) targets left at this point to pick from.
                product *= (counts[c] as f64 - used[c] as f64).max(0.0) * detect[c][k];
                used[c] += 1;
            }
        }
        if product != 0.0 {
            product *= clutter_factor(clutter_count, model.clutter_cardinality());
            for j in 0..s {
                let left = counts[j] - used[j].min(counts[j]);
                if left > 0 {
                    product *= missed[j].powi(left as i32);
                }
            }
            total.add(product);
        }
        // Next choice vector in base s + 1.
        let mut k = 0;
        while k < m {
            choice[k] += 1;
            if choice[k] <= s {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == m {
            break;
        }
    }
    total.value()
}

// ---------------------------------------------------------------------------
// Posterior
// ---------------------------------------------------------------------------

/// Exact posterior, aggregated over configurations with the same number of
/// targets on every point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    points: Vec<State>,
    /// `(counts per point, posterior probability)`, sorted by counts.
    entries: Vec<(Vec<usize>, f64)>,
    evidence: f64,
}

impl ExactPosterior {
    pub fn points(&self) -> &[State] {
        &self.points
    }

    pub fn entries(&self) -> &[(Vec<usize>, f64)] {
        &self.entries
    }

    /// `sum_n rho(n) sum_{x_{1:n}} prod spatial(x_i) L(Z | x_{1:n})`.
    pub fn evidence(&self) -> f64 {
        self.evidence
    }

    /// Posterior distribution of the target number.
    pub fn cardinality(&self) -> Vec<f64> {
        let n_max = self
            .entries
            .iter()
            .map(|(c, _)| c.iter().sum::<usize>())
            .max()
            .unwrap_or(0);
        let mut out = vec![KahanSum::default(); n_max + 1];
        for (counts, p) in &self.entries {
            out[counts.iter().sum::<usize>()].add(*p);
        }
        out.iter().map(KahanSum::value).collect()
    }

    fn count_in(&self, counts: &[usize], region: &Region) -> usize {
        counts
            .iter()
            .zip(&self.points)
            .filter(|(_, x)| region.contains(x))
            .map(|(c, _)| c)
            .sum()
    }

    fn from_map(points: Vec<State>, map: BTreeMap<Vec<usize>, KahanSum>) -> Result<Self> {
        let evidence: f64 = map
            .values()
            .map(KahanSum::value)
            .collect::<KahanSum>()
            .value();
        if !(evidence > 0.0) {
            return Err(Error::ZeroEvidence);
        }
        let entries = map
            .into_iter()
            .map(|(counts, acc)| (counts, acc.value() / evidence))
            .filter(|(_, p)| *p > 0.0)
            .collect();
        Ok(Self {
            points,
            entries,
            evidence,
        })
    }
}

/// Number of ordered tuples `sum_n S^n` over the prior support.
fn ordered_tuple_count(s: usize, n_max: usize) -> u128 {
    let mut total = 0u128;
    let mut power = 1u128;
    for _ in 0..=n_max {
        total = total.saturating_add(power);
        power = power.saturating_mul(s as u128);
    }
    total
}

/// Exact posterior of the i.i.d. prior given `measurements`.
///
/// Small instances enumerate ordered tuples `x_{1:n}` with the
/// association-level likelihood; larger ones enumerate point multisets
/// weighted by their number of orderings.
pub fn posterior_exact<M: ObservationModel + ?Sized>(
    prior: &DiscretePrior,
    measurements: &[Measurement],
    model: &M,
) -> Result<ExactPosterior> {
    let ordered = ordered_tuple_count(prior.points.len(), prior.rho.n_max())
        .saturating_mul(partition_count(measurements.len(), prior.rho.n_max()));
    if ordered <= ORDERED_WORK_LIMIT {
        posterior_exact_ordered(prior, measurements, model)
    } else {
        posterior_exact_multiset(prior, measurements, model)
    }
}

/// Enumerates every ordered tuple of points.
pub fn posterior_exact_ordered<M: ObservationModel + ?Sized>(
    prior: &DiscretePrior,
    measurements: &[Measurement],
    model: &M,
) -> Result<ExactPosterior> {
    let s = prior.points.len();
    let n_max = prior.rho.n_max();
    let m = measurements.len();
    let tuples = ordered_tuple_count(s, n_max);
    let per_tuple = partition_count(m, n_max);
    check_budget(tuples.saturating_mul(per_tuple))?;
    let mut map: BTreeMap<Vec<usize>, KahanSum> = BTreeMap::new();
    for n in 0..=n_max {
        let rho_n = prior.rho.pmf(n);
        if rho_n == 0.0 {
            continue;
        }
        let mut tuple = vec![0usize; n];
        loop {
            let spatial: f64 = tuple.iter().map(|&i| prior.spatial[i]).product();
            if spatial > 0.0 {
                let config =
                    MultiTargetConfig::new(tuple.iter().map(|&i| prior.points[i]).collect());
                let l = likelihood_exact(measurements, &config, model)?;
                let mut counts = vec![0usize; s];
                tuple.iter().for_each(|&i| counts[i] += 1);
                map.entry(counts).or_default().add(rho_n * spatial * l);
            }
            if !advance(&mut tuple, s) {
                break;
            }
        }
    }
    ExactPosterior::from_map(prior.points.clone(), map)
}

/// Odometer increment in base `s`; false once every tuple was visited.
fn advance(tuple: &mut [usize], s: usize) -> bool {
    for digit in tuple.iter_mut() {
        *digit += 1;
        if *digit < s {
            return true;
        }
        *digit = 0;
    }
    false
}

/// Enumerates point multisets, each standing for its `n! / prod c_i!`
/// orderings.
pub fn posterior_exact_multiset<M: ObservationModel + ?Sized>(
    prior: &DiscretePrior,
    measurements: &[Measurement],
    model: &M,
) -> Result<ExactPosterior> {
    let s = prior.points.len();
    let n_max = prior.rho.n_max();
    let mut multisets = 0u128;
    for n in 0..=n_max {
        multisets = multisets.saturating_add(binomial_u128(n + s - 1, s - 1));
    }
    let per_multiset = ((s + 1) as u128).saturating_pow(measurements.len() as u32);
    check_budget(multisets.saturating_mul(per_multiset))?;
    let mut map: BTreeMap<Vec<usize>, KahanSum> = BTreeMap::new();
    for n in 0..=n_max {
        let rho_n = prior.rho.pmf(n);
        if rho_n == 0.0 {
            continue;
        }
        for_each_composition(n, s, &mut |counts| {
            let mut ln_weight = rho_n.ln() + ln_factorial(n);
            for (c, p) in counts.iter().zip(&prior.spatial) {
                if *c > 0 {
                    if *p == 0.0 {
                        return;
                    }
                    ln_weight += *c as f64 * p.ln() - ln_factorial(*c);
                }
            }
            let l = likelihood_of_counts(counts, &prior.points, measurements, model);
            map.entry(counts.to_vec())
                .or_default()
                .add(ln_weight.exp() * l);
        });
    }
    ExactPosterior::from_map(prior.points.clone(), map)
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    let mut out = 1u128;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out
}

/// Visits every `counts` with `s` entries summing to `n`.
fn for_each_composition(n: usize, s: usize, visit: &mut impl FnMut(&[usize])) {
    fn go(n: usize, i: usize, counts: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if i + 1 == counts.len() {
            counts[i] = n;
            visit(counts);
            return;
        }
        for c in 0..=n {
            counts[i] = c;
            go(n - c, i + 1, counts, visit);
        }
    }
    let mut counts = vec![0; s];
    go(n, 0, &mut counts, visit);
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

/// First and second moments of the posterior target numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMoments {
    /// `E[N(A)]`.
    pub mean: f64,
    /// `E[N(A) N(B)]`.
    pub second: f64,
    /// `E[N(A)^2] - E[N(A)]^2`.
    pub variance: f64,
}

pub fn moments_exact(
    posterior: &ExactPosterior,
    region_a: &Region,
    region_b: &Region,
) -> ExactMoments {
    let mut mean = KahanSum::default();
    let mut square = KahanSum::default();
    let mut second = KahanSum::default();
    for (counts, p) in &posterior.entries {
        let a = posterior.count_in(counts, region_a) as f64;
        let b = posterior.count_in(counts, region_b) as f64;
        mean.add(p * a);
        square.add(p * a * a);
        second.add(p * a * b);
    }
    let mean = mean.value();
    ExactMoments {
        mean,
        second: second.value(),
        variance: (square.value() - mean * mean).max(0.0),
    }
}

// ---------------------------------------------------------------------------
// Random instances and filter comparison
// ---------------------------------------------------------------------------

/// A discrete problem: prior, model, measurements, and regions to compare on.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub prior: DiscretePrior,
    pub model: DiscreteModel,
    pub measurements: Vec<Measurement>,
    pub regions: Vec<Region>,
}

/// Shape of the random instances. At least two points are drawn whenever
/// `max_points` allows, so that some region is neither the whole space nor
/// empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub max_points: usize,
    pub max_measurements: usize,
    /// Largest target number of an arbitrary prior.
    pub max_targets: usize,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_points: 4,
            max_measurements: 3,
            max_targets: 4,
        }
    }
}

fn random_points<R: Rng + ?Sized>(s: usize, rng: &mut R) -> Vec<State> {
    (0..s)
        .map(|i| {
            State::new(
                100.0 * i as f64 + rng.random_range(0.0..10.0),
                rng.random_range(-50.0..50.0),
                0.0,
                0.0,
            )
        })
        .collect()
}

fn random_measurements<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<Measurement> {
    (0..m)
        .map(|k| {
            Measurement::new(
                10.0 * (k + 1) as f64 + rng.random_range(0.0..1.0),
                rng.random_range(-3.0..3.0),
            )
            .unwrap()
        })
        .collect()
}

fn random_simplex<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // Exact unit sum so that the prior check passes.
    let rest: f64 = out[1..].iter().sum();
    out[0] = 1.0 - rest;
    out
}

fn random_model<R: Rng + ?Sized>(
    points: &[State],
    measurements: &[Measurement],
    clutter: CardinalityDistribution,
    rng: &mut R,
) -> DiscreteModel {
    let detection = points
        .iter()
        .map(|_| match rng.random_range(0..6) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        })
        .collect();
    let likelihood = points
        .iter()
        .map(|_| {
            measurements
                .iter()
                .map(|_| rng.random_range(0.0..3.0))
                .collect()
        })
        .collect();
    let clutter_density = measurements
        .iter()
        .map(|_| rng.random_range(0.1..2.0))
        .collect();
    DiscreteModel::new(
        points.to_vec(),
        measurements.to_vec(),
        detection,
        likelihood,
        clutter_density,
        clutter,
    )
    .expect("random model tables are consistent")
}

fn subset_region(label: String, points: Vec<State>) -> Region {
    Region::new(label, move |x: &State| points.contains(x))
}

/// Whole space, empty set, and every strict non-empty subset of points.
fn instance_regions(points: &[State]) -> Vec<Region> {
    let s = points.len();
    let mut regions = vec![Region::everywhere(), Region::nowhere()];
    for mask in 1u32..(1 << s) - 1 {
        let members: Vec<State> = (0..s)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| points[i])
            .collect();
        regions.push(subset_region(format!("points-{mask:b}"), members));
    }
    regions
}

impl OracleInstance {
    /// Arbitrary i.i.d. prior and arbitrary i.i.d. clutter.
    pub fn random_iid<R: Rng + ?Sized>(shape: InstanceShape, rng: &mut R) -> Self {
        let s = rng.random_range(2.min(shape.max_points)..=shape.max_points);
        let m = rng.random_range(0..=shape.max_measurements);
        let n_max = rng.random_range(1..=shape.max_targets);
        let points = random_points(s, rng);
        let measurements = random_measurements(m, rng);
        let rho_weights: Vec<f64> = (0..=n_max)
            .map(|_| {
                if rng.random_range(0..5) == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let rho = CardinalityDistribution::from_weights(rho_weights)
            .unwrap_or_else(|_| CardinalityDistribution::point_mass(n_max, n_max).unwrap());
        let clutter_n_max = rng.random_range(m.max(1)..=shape.max_measurements + 1);
        let clutter = CardinalityDistribution::from_weights(
            (0..=clutter_n_max)
                .map(|_| rng.random_range(0.05..1.0))
                .collect(),
        )
        .expect("positive clutter weights");
        let model = random_model(&points, &measurements, clutter, rng);
        let prior = DiscretePrior::new(points.clone(), rho, random_simplex(s, rng)).unwrap();
        Self {
            regions: instance_regions(&points),
            prior,
            model,
            measurements,
        }
    }

    /// Poisson prior and Poisson clutter, both truncated at `n_max`.
    pub fn random_poisson<R: Rng + ?Sized>(
        shape: InstanceShape,
        n_max: usize,
        rng: &mut R,
    ) -> Self {
        let s = rng.random_range(2.min(shape.max_points)..=shape.max_points);
        let m = rng.random_range(0..=shape.max_measurements);
        let points = random_points(s, rng);
        let measurements = random_measurements(m, rng);
        let rho = CardinalityDistribution::poisson(rng.random_range(0.2..3.0), n_max).unwrap();
        let clutter = CardinalityDistribution::poisson(rng.random_range(0.5..4.0), n_max).unwrap();
        let model = random_model(&points, &measurements, clutter, rng);
        let prior = DiscretePrior::new(points.clone(), rho, random_simplex(s, rng)).unwrap();
        Self {
            regions: instance_regions(&points),
            prior,
            model,
            measurements,
        }
    }

    /// Runs the oracle and both filters on every region.
    pub fn compare(&self) -> Result<InstanceComparison> {
        let posterior = posterior_exact(&self.prior, &self.measurements, &self.model)?;
        let intensity = self.prior.intensity();
        let n_max = self.prior.rho.n_max();
        let cphd = CphdUpdate::new(
            &intensity,
            &self.prior.rho,
            &self.measurements,
            &self.model,
            n_max,
        )?;
        let phd = if intensity.total_mass() > 0.0 {
            Some(PhdUpdate::new(&intensity, &self.measurements, &self.model)?)
        } else {
            None
        };
        let regions = self
            .regions
            .iter()
            .map(|region| {
                let exact = moments_exact(&posterior, region, region);
                let cphd_stats = cphd.regional_stats(region);
                let phd_stats = phd.as_ref().map(|u| u.regional_stats(region));
                RegionComparison {
                    label: region.label().to_string(),
                    oracle: (exact.mean, exact.variance),
                    cphd: (cphd_stats.mean, cphd_stats.variance),
                    phd: phd_stats.map_or((0.0, 0.0), |s| (s.mean, s.variance)),
                }
            })
            .collect();
        Ok(InstanceComparison {
            regions,
            oracle_cardinality: posterior.cardinality(),
            cphd_cardinality: cphd.cardinality().probabilities().to_vec(),
        })
    }
}

/// `(mean, variance)` per method for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionComparison {
    pub label: String,
    pub oracle: (f64, f64),
    pub cphd: (f64, f64),
    pub phd: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceComparison {
    pub regions: Vec<RegionComparison>,
    pub oracle_cardinality: Vec<f64>,
    pub cphd_cardinality: Vec<f64>,
}

/// `|value - reference| / max(|reference|, floor)`.
pub fn relative_error(value: f64, reference: f64, floor: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::{upsilon_inner, upsilon_vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point_model(clutter: CardinalityDistribution) -> DiscreteModel {
        let points = vec![
            State::new(0.0, 0.0, 0.0, 0.0),
            State::new(1.0, 0.0, 0.0, 0.0),
        ];
        let zs = vec![
            Measurement::new(1.0, 0.0).unwrap(),
            Measurement::new(2.0, 0.0).unwrap(),
        ];
        DiscreteModel::new(
            points,
            zs,
            vec![0.8, 0.6],
            vec![vec![2.0, 0.5], vec![0.25, 1.5]],
            vec![0.4, 0.7],
            clutter,
        )
        .unwrap()
    }

    #[test]
    fn partition_counts() {
        assert_eq!(partition_count(2, 2), 7);
        let mut visited = 0;
        for_each_partition(2, 2, |_| visited += 1).unwrap();
        assert_eq!(visited, 7);
        let mut by_detected = [0; 3];
        for_each_partition(2, 2, |p| by_detected[p.detected_count()] += 1).unwrap();
        assert_eq!(by_detected, [1, 4, 2]);
        assert_eq!(partition_count(0, 5), 1);
        assert!(matches!(
            for_each_partition(12, 12, |_| {}),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn trivial_likelihoods() {
        let rho_c = CardinalityDistribution::from_weights(vec![0.3, 0.5, 0.2]).unwrap();
        let model = two_point_model(rho_c.clone());
        let empty = MultiTargetConfig::default();
        assert!((likelihood_exact(&[], &empty, &model).unwrap() - 0.3).abs() < 1e-15);
        let one = MultiTargetConfig::new(vec![model.points()[0]]);
        assert!((likelihood_exact(&[], &one, &model).unwrap() - 0.3 * 0.2).abs() < 1e-15);
        // One target, one measurement: clutter or detection.
        let z = &model.measurements()[..1];
        let expected = 0.5 * 0.4 * 0.2 + 0.3 * 0.8 * 2.0;
        assert!((likelihood_exact(z, &one, &model).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn grouped_likelihood_matches_partitions() {
        let rho_c = CardinalityDistribution::poisson(1.3, 10).unwrap();
        let model = two_point_model(rho_c);
        let points = model.points().to_vec();
        let zs = model.measurements().to_vec();
        for counts in [[0, 0], [1, 0], [0, 2], [2, 1], [3, 3]] {
            let states = counts
                .iter()
                .enumerate()
                .flat_map(|(i, &c)| std::iter::repeat_n(points[i], c))
                .collect();
            let direct = likelihood_exact(&zs, &MultiTargetConfig::new(states), &model).unwrap();
            let grouped = likelihood_of_counts(&counts, &points, &zs, &model);
            assert!(
                (direct - grouped).abs() <= 1e-13 * direct.abs().max(1e-300),
                "{counts:?}"
            );
        }
    }

    #[test]
    fn ordered_and_multiset_posteriors_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let inst = OracleInstance::random_iid(InstanceShape::default(), &mut rng);
            let (Ok(a), Ok(b)) = (
                posterior_exact_ordered(&inst.prior, &inst.measurements, &inst.model),
                posterior_exact_multiset(&inst.prior, &inst.measurements, &inst.model),
            ) else {
                continue;
            };
            assert!((a.evidence() - b.evidence()).abs() <= 1e-12 * a.evidence());
            assert_eq!(a.entries().len(), b.entries().len());
            for ((ca, pa), (cb, pb)) in a.entries().iter().zip(b.entries()) {
                assert_eq!(ca, cb);
                assert!((pa - pb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uninformative_update_keeps_prior() {
        let rho = CardinalityDistribution::from_weights(vec![0.2, 0.5, 0.3]).unwrap();
        let points = vec![
            State::new(0.0, 0.0, 0.0, 0.0),
            State::new(1.0, 0.0, 0.0, 0.0),
        ];
        let model = DiscreteModel::new(
            points.clone(),
            vec![],
            vec![0.0, 0.0],
            vec![vec![], vec![]],
            vec![],
            CardinalityDistribution::poisson(1.0, 5).unwrap(),
        )
        .unwrap();
        let prior = DiscretePrior::new(points, rho.clone(), vec![0.25, 0.75]).unwrap();
        let post = posterior_exact(&prior, &[], &model).unwrap();
        let card = post.cardinality();
        for (a, b) in card.iter().zip(rho.probabilities()) {
            assert!((a - b).abs() < 1e-15);
        }
        let all = Region::everywhere();
        let exact = moments_exact(&post, &all, &all);
        assert!((exact.variance - rho.variance()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_posteriors() {
        let rho_c = CardinalityDistribution::from_weights(vec![0.3, 0.5, 0.2]).unwrap();
        let model = two_point_model(rho_c.clone());
        let points = model.points().to_vec();
        let empty_prior = DiscretePrior::new(
            points.clone(),
            CardinalityDistribution::point_mass(0, 2).unwrap(),
            vec![0.5, 0.5],
        )
        .unwrap();
        let post = posterior_exact(&empty_prior, model.measurements(), &model).unwrap();
        // Two clutter points: 2! rho_c(2) c(z1) c(z2).
        assert!((post.evidence() - 2.0 * 0.2 * 0.4 * 0.7).abs() < 1e-15);
        let all = Region::everywhere();
        let e = moments_exact(&post, &all, &all);
        assert_eq!((e.mean, e.second, e.variance), (0.0, 0.0, 0.0));

        let fixed = DiscretePrior::new(
            points.clone(),
            CardinalityDistribution::point_mass(1, 1).unwrap(),
            vec![1.0, 0.0],
        )
        .unwrap();
        let post = posterior_exact(&fixed, model.measurements(), &model).unwrap();
        let a = Region::new("first", move |x: &State| *x == points[0]);
        let e = moments_exact(&post, &a, &a);
        assert_eq!((e.mean, e.second, e.variance), (1.0, 1.0, 0.0));
    }

    #[test]
    fn evidence_matches_upsilon0() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        for _ in 0..40 {
            let inst = OracleInstance::random_iid(InstanceShape::default(), &mut rng);
            let Ok(post) = posterior_exact(&inst.prior, &inst.measurements, &inst.model) else {
                continue;
            };
            let intensity = inst.prior.intensity();
            if intensity.total_mass() == 0.0 {
                continue;
            }
            let terms =
                crate::terms::DetectionTerms::compute(&intensity, &inst.measurements, &inst.model)
                    .unwrap();
            let ratios: Vec<f64> = terms
                .detected_mass()
                .iter()
                .zip(terms.clutter_density())
                .map(|(a, c)| a / c)
                .collect();
            let n_max = inst.prior.rho().n_max();
            let uv = upsilon_vector(
                0,
                terms.missed_mass(),
                terms.total_mass(),
                &ratios,
                inst.model.clutter_cardinality(),
                n_max,
            )
            .unwrap();
            let inner = upsilon_inner(&uv, inst.prior.rho()).unwrap();
            let c_product: f64 = terms.clutter_density().iter().product();
            assert!(
                relative_error(c_product * inner, post.evidence(), 1e-300) < 1e-9,
                "{} vs {}",
                c_product * inner,
                post.evidence()
            );
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn second_moment_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = OracleInstance::random_iid(
            InstanceShape {
                max_points: 4,
                max_measurements: 3,
                max_targets: 4,
            },
            &mut rng,
        );
        if let Ok(post) = posterior_exact(&inst.prior, &inst.measurements, &inst.model) {
            for a in &inst.regions {
                for b in &inst.regions {
                    let ab = moments_exact(&post, a, b).second;
                    let ba = moments_exact(&post, b, a).second;
                    assert!((ab - ba).abs() < 1e-15);
                }
            }
        }
    }
}
