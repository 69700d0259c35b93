//! SMC prediction: survival, constant-velocity motion, uniform birth over
//! the field of view, the matching cardinality prediction, and multinomial
//! resampling.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::KahanSum;
use crate::types::{binomial_pmf, CardinalityDistribution, State, WeightedParticleSet};

/// Constant-velocity motion driven by white acceleration noise, with a
/// constant survival probability inside a disc of radius `domain_radius`
/// and none outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    /// Per-axis acceleration standard deviation, m/s^2.
    pub process_noise_std: f64,
    pub survival_probability: f64,
    pub domain_radius: f64,
    /// Seconds.
    pub dt: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self {
            process_noise_std: 1.0,
            survival_probability: 0.99,
            domain_radius: 3500.0,
            dt: 1.0,
        }
    }
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.process_noise_std >= 0.0 && self.process_noise_std.is_finite()) {
            return Err(Error::param("process_noise_std", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.survival_probability) {
            return Err(Error::param("survival_probability", "must lie in [0, 1]"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.domain_radius > 0.0) {
            return Err(Error::param("domain_radius", "must be positive"));
        }
        Ok(())
    }

    /// `p_s(x)`.
    pub fn survival(&self, state: &State) -> f64 {
        if state.range() <= self.domain_radius {
            self.survival_probability
        } else {
            0.0
        }
    }

    /// Moves `state` over one step with accelerations `(ax, ay)`.
    pub fn transition(&self, state: &State, ax: f64, ay: f64) -> State {
        let dt = self.dt;
        let half = 0.5 * dt * dt;
        State::new(
            state.x + state.vx * dt + half * ax,
            state.y + state.vy * dt + half * ay,
            state.vx + dt * ax,
            state.vy + dt * ay,
        )
    }

    fn sample_transition<R: Rng + ?Sized>(&self, state: &State, rng: &mut R) -> State {
        let ax: f64 = rng.sample::<f64, _>(StandardNormal) * self.process_noise_std;
        let ay: f64 = rng.sample::<f64, _>(StandardNormal) * self.process_noise_std;
        self.transition(state, ax, ay)
    }
}

/// Poisson births spread uniformly over a disc, with zero-mean Gaussian
/// velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthModel {
    /// Expected number of births per step.
    pub rate: f64,
    pub radius: f64,
    /// Per-axis velocity standard deviation, m/s.
    pub velocity_std: f64,
    /// Particles drawn per step for the birth intensity.
    pub particles: usize,
}

impl Default for BirthModel {
    fn default() -> Self {
        Self {
            rate: 0.2,
            radius: 3500.0,
            velocity_std: 15.0,
            particles: 10_000,
        }
    }
}

impl BirthModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::param("birth.rate", "must be finite and >= 0"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::param("birth.radius", "must be positive"));
        }
        if !(self.velocity_std >= 0.0) {
            return Err(Error::param("birth.velocity_std", "must be >= 0"));
        }
        Ok(())
    }

    pub fn cardinality(&self, n_max: usize) -> Result<CardinalityDistribution> {
        CardinalityDistribution::poisson(self.rate, n_max)
    }

    /// Birth particles carrying `mass` in total.
    pub fn sample<R: Rng + ?Sized>(&self, mass: f64, rng: &mut R) -> WeightedParticleSet {
        if self.particles == 0 || mass <= 0.0 {
            return WeightedParticleSet::empty();
        }
        let w = mass / self.particles as f64;
        (0..self.particles)
            .map(|_| {
                let r = self.radius * rng.random::<f64>().sqrt();
                let theta = rng.random_range(-PI..PI);
                let vx = rng.sample::<f64, _>(StandardNormal) * self.velocity_std;
                let vy = rng.sample::<f64, _>(StandardNormal) * self.velocity_std;
                (w, State::new(r * theta.cos(), r * theta.sin(), vx, vy))
            })
            .collect()
    }
}

/// Predicted particles and the effective survival probability
/// `sum w p_s / sum w` needed by the cardinality prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedParticles {
    pub particles: WeightedParticleSet,
    pub survival: f64,
}

/// Propagates every particle, scales its weight by `p_s` at the new state,
/// drops particles that cannot survive, and appends `birth_mass` of birth
/// particles.
pub fn predict_particles_with<R: Rng + ?Sized>(
    particles: &WeightedParticleSet,
    motion: &MotionModel,
    birth: &BirthModel,
    birth_mass: f64,
    rng: &mut R,
) -> PredictedParticles {
    let mut weights = Vec::with_capacity(particles.len() + birth.particles);
    let mut states = Vec::with_capacity(particles.len() + birth.particles);
    let mut survived = KahanSum::default();
    for (w, x) in particles.iter() {
        let moved = motion.sample_transition(x, rng);
        let ps = motion.survival(&moved);
        if ps > 0.0 && w > 0.0 {
            survived.add(w * ps);
            weights.push(w * ps);
            states.push(moved);
        }
    }
    let total = particles.total_mass();
    let survival = if total > 0.0 {
        survived.value() / total
    } else {
        motion.survival_probability
    };
    let mut out = WeightedParticleSet::new(weights, states).expect("survivor weights are valid");
    out.extend(birth.sample(birth_mass, rng));
    PredictedParticles {
        particles: out,
        survival,
    }
}

/// Seeded prediction with the Poisson birth mass `birth.rate`.
pub fn predict_particles(
    particles: &WeightedParticleSet,
    motion: &MotionModel,
    birth: &BirthModel,
    seed: u64,
) -> PredictedParticles {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    predict_particles_with(particles, motion, birth, birth.rate, &mut rng)
}

/// Binomial thinning of `rho` by `survival`, convolved with `birth`, on
/// `0..=n_max`.
pub fn predict_cardinality(
    rho: &CardinalityDistribution,
    survival: f64,
    birth: &CardinalityDistribution,
    n_max: usize,
) -> Result<CardinalityDistribution> {
    if !(0.0..=1.0).contains(&survival) {
        return Err(Error::param("survival", "must lie in [0, 1]"));
    }
    let mut survivors = vec![0.0; rho.n_max() + 1];
    for (n, p) in rho.probabilities().iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        for (k, slot) in survivors.iter_mut().enumerate().take(n + 1) {
            *slot += p * binomial_pmf(n, k, survival);
        }
    }
    let mut out = vec![0.0; n_max + 1];
    for (k, s) in survivors.iter().enumerate() {
        if *s == 0.0 {
            continue;
        }
        for (b, q) in birth.probabilities().iter().enumerate() {
            if k + b > n_max {
                break;
            }
            out[k + b] += s * q;
        }
    }
    CardinalityDistribution::from_weights(out)
}

/// Multinomial resampling to `count` equally weighted particles keeping the
/// total mass.
pub fn resample<R: Rng + ?Sized>(
    particles: &WeightedParticleSet,
    count: usize,
    rng: &mut R,
) -> WeightedParticleSet {
    let total = particles.total_mass();
    if count == 0 || total <= 0.0 {
        return WeightedParticleSet::empty();
    }
    let index = WeightedIndex::new(particles.weights()).expect("positive total weight");
    let w = total / count as f64;
    let states = particles.states();
    (0..count).map(|_| (w, states[index.sample(rng)])).collect()
}
