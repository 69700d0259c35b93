//! SMC-PHD data update with regional mean and variance.
//!
//! For a Poisson predicted process and Poisson clutter, with
//! `p_k(B) = mu^{z_k}(B) / (mu^{z_k}(X) + lambda_c c(z_k))`:
//!
//! ```text
//! mean(B) = mu^phi(B) + sum_k p_k(B)
//! var(B)  = mu^phi(B) + sum_k p_k(B) (1 - p_k(B))
//! ```

use crate::error::{Error, Result};
use crate::terms::DetectionTerms;
use crate::types::{Measurement, ObservationModel, Region, RegionalStats, WeightedParticleSet};

/// Missed-detection weights and normalized per-measurement weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PhdConditionalWeights {
    terms: DetectionTerms,
    /// Row-major `J x m`, each column normalized by its `normalizers` entry.
    per_measurement: Vec<f64>,
    normalizers: Vec<f64>,
}

impl PhdConditionalWeights {
    pub fn terms(&self) -> &DetectionTerms {
        &self.terms
    }

    /// `(1 - p_d(x_i)) w_i`.
    pub fn missed(&self) -> &[f64] {
        self.terms.missed()
    }

    /// Normalized weights of particle `i`, one per measurement.
    pub fn per_measurement_row(&self, i: usize) -> &[f64] {
        let m = self.terms.measurement_count();
        &self.per_measurement[i * m..(i + 1) * m]
    }

    /// `mu^{z_k}(X) + lambda_c c(z_k)` for every measurement.
    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }
}

pub fn phd_conditional_weights<M: ObservationModel + ?Sized>(
    particles: &WeightedParticleSet,
    measurements: &[Measurement],
    model: &M,
) -> Result<PhdConditionalWeights> {
    let terms = DetectionTerms::compute(particles, measurements, model)?;
    let normalizers: Vec<f64> = terms
        .detected_mass()
        .iter()
        .zip(terms.clutter_density())
        .map(|(mass, c)| mass + terms.clutter_rate * c)
        .collect();
    if normalizers.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::ZeroEvidence);
    }
    let m = measurements.len();
    let mut per_measurement = terms.detected.clone();
    if m > 0 {
        for row in per_measurement.chunks_exact_mut(m) {
            for (v, n) in row.iter_mut().zip(&normalizers) {
                *v /= n;
            }
        }
    }
    Ok(PhdConditionalWeights {
        terms,
        per_measurement,
        normalizers,
    })
}

/// Updated particle weights: `w+_i = w_phi_i + sum_k w_zk_i`, states unchanged.
pub fn phd_update_intensity(cw: &PhdConditionalWeights) -> WeightedParticleSet {
    let weights = (0..cw.terms.particle_count())
        .map(|i| cw.missed()[i] + cw.per_measurement_row(i).iter().sum::<f64>())
        .collect();
    WeightedParticleSet::new(weights, cw.terms.states().to_vec())
        .expect("updated PHD weights are finite and non-negative")
}

/// Mean and variance of the updated target number in `region`.
pub fn phd_regional_stats(cw: &PhdConditionalWeights, region: &Region) -> RegionalStats {
    let regional = cw
        .terms
        .regional_of(cw.missed(), &cw.per_measurement, region);
    let mean = regional.missed + regional.per_measurement.iter().sum::<f64>();
    let variance = regional.missed
        + regional
            .per_measurement
            .iter()
            .map(|p| p * (1.0 - p))
            .sum::<f64>();
    RegionalStats {
        label: region.label().to_string(),
        mean,
        variance: variance.max(0.0),
    }
}

/// Result of one PHD data update.
#[derive(Debug, Clone, PartialEq)]
pub struct PhdUpdate {
    weights: PhdConditionalWeights,
    updated: WeightedParticleSet,
}

impl PhdUpdate {
    pub fn new<M: ObservationModel + ?Sized>(
        particles: &WeightedParticleSet,
        measurements: &[Measurement],
        model: &M,
    ) -> Result<Self> {
        let weights = phd_conditional_weights(particles, measurements, model)?;
        let updated = phd_update_intensity(&weights);
        Ok(Self { weights, updated })
    }

    pub fn conditional_weights(&self) -> &PhdConditionalWeights {
        &self.weights
    }

    pub fn updated(&self) -> &WeightedParticleSet {
        &self.updated
    }

    pub fn into_updated(self) -> WeightedParticleSet {
        self.updated
    }

    pub fn regional_stats(&self, region: &Region) -> RegionalStats {
        phd_regional_stats(&self.weights, region)
    }

    /// Normalized regional measurement terms `p_k(B)`.
    pub fn regional_measurement_terms(&self, region: &Region) -> Vec<f64> {
        self.weights
            .terms
            .regional_of(self.weights.missed(), &self.weights.per_measurement, region)
            .per_measurement
    }
}
