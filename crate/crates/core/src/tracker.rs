//! Predict / update loop running either filter and reporting regional
//! statistics after every update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cphd::CphdUpdate;
use crate::error::{Error, Result};
use crate::phd::PhdUpdate;
use crate::prediction::{
    predict_cardinality, predict_particles_with, resample, BirthModel, MotionModel,
};
use crate::types::{
    CardinalityDistribution, Measurement, ObservationModel, Region, RegionalStats,
    WeightedParticleSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Phd,
    Cphd,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Phd => "phd",
            FilterKind::Cphd => "cphd",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phd" => Ok(FilterKind::Phd),
            "cphd" => Ok(FilterKind::Cphd),
            other => Err(Error::param(
                "filter",
                format!("expected phd or cphd, got {other}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub n_max: usize,
    /// Particles kept per unit of intensity mass after resampling.
    pub particles_per_target: usize,
    pub min_particles: usize,
    pub max_particles: usize,
    pub motion: MotionModel,
    pub birth: BirthModel,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kind: FilterKind::Phd,
            n_max: 40,
            particles_per_target: 1000,
            min_particles: 100,
            max_particles: 50_000,
            motion: MotionModel::default(),
            birth: BirthModel::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.motion.validate()?;
        self.birth.validate()?;
        if self.n_max == 0 {
            return Err(Error::param("n_max", "must be positive"));
        }
        if self.min_particles > self.max_particles {
            return Err(Error::param(
                "min_particles",
                "must not exceed max_particles",
            ));
        }
        Ok(())
    }
}

/// What one filter step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub predicted_mass: f64,
    pub updated_mass: f64,
    /// One entry per requested region.
    pub stats: Vec<RegionalStats>,
    /// Mean and unclamped variance over the whole state space.
    pub global: (f64, f64),
    /// Updated cardinality distribution of the CPHD filter.
    pub cardinality: Option<CardinalityDistribution>,
}

/// SMC-PHD or SMC-CPHD filter.
#[derive(Debug, Clone)]
pub struct SmcFilter<M> {
    config: FilterConfig,
    model: M,
    particles: WeightedParticleSet,
    cardinality: CardinalityDistribution,
    birth_cardinality: CardinalityDistribution,
    rng: ChaCha8Rng,
}

impl<M: ObservationModel> SmcFilter<M> {
    /// Starts with no targets.
    pub fn new(config: FilterConfig, model: M, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Ok(Self {
            birth_cardinality: config.birth.cardinality(config.n_max)?,
            cardinality: CardinalityDistribution::point_mass(0, config.n_max)?,
            particles: WeightedParticleSet::empty(),
            rng,
            config,
            model,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn particles(&self) -> &WeightedParticleSet {
        &self.particles
    }

    /// Cardinality distribution carried by the CPHD filter.
    pub fn cardinality(&self) -> &CardinalityDistribution {
        &self.cardinality
    }

    /// Predicts, updates with `measurements`, evaluates `regions` on the
    /// update, then resamples.
    pub fn step(&mut self, measurements: &[Measurement], regions: &[Region]) -> Result<StepReport> {
        let birth_mass = self.birth_cardinality.mean();
        let predicted = predict_particles_with(
            &self.particles,
            &self.config.motion,
            &self.config.birth,
            birth_mass,
            &mut self.rng,
        );
        let predicted_mass = predicted.particles.total_mass();
        let (updated, stats, global, cardinality) = match self.config.kind {
            FilterKind::Phd => {
                if predicted_mass <= 0.0 {
                    (predicted.particles, zero_stats(regions), (0.0, 0.0), None)
                } else {
                    let update = PhdUpdate::new(&predicted.particles, measurements, &self.model)?;
                    let stats = regions.iter().map(|r| update.regional_stats(r)).collect();
                    let g = update.regional_stats(&Region::everywhere());
                    (update.into_updated(), stats, (g.mean, g.variance), None)
                }
            }
            FilterKind::Cphd => {
                let rho = predict_cardinality(
                    &self.cardinality,
                    predicted.survival,
                    &self.birth_cardinality,
                    self.config.n_max,
                )?;
                let update = CphdUpdate::new(
                    &predicted.particles,
                    &rho,
                    measurements,
                    &self.model,
                    self.config.n_max,
                )?;
                let stats = regions.iter().map(|r| update.regional_stats(r)).collect();
                let global = update.regional_moments(&Region::everywhere());
                let (updated, card) = update.into_parts();
                self.cardinality = card.clone();
                (updated, stats, global, Some(card))
            }
        };
        let updated_mass = updated.total_mass();
        let count = ((updated_mass * self.config.particles_per_target as f64).round() as usize)
            .clamp(self.config.min_particles, self.config.max_particles);
        self.particles = resample(&updated, count, &mut self.rng);
        Ok(StepReport {
            predicted_mass,
            updated_mass,
            stats,
            global,
            cardinality,
        })
    }
}

fn zero_stats(regions: &[Region]) -> Vec<RegionalStats> {
    regions
        .iter()
        .map(|r| RegionalStats {
            label: r.label().to_string(),
            mean: 0.0,
            variance: 0.0,
        })
        .collect()
}
