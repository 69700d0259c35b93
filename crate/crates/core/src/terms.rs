//! Per-particle missed-detection and measurement terms shared by both
//! updates, and their sums over a region.

use crate::error::{Error, Result};
use crate::math::{compensated_sum, KahanSum};
use crate::types::{
    CardinalityDistribution, Measurement, ObservationModel, Region, State, WeightedParticleSet,
};

/// `w_phi_i = (1 - p_d(x_i)) w_i` and `w_zk_i = p_d(x_i) L(z_k|x_i) w_i`
/// for every particle `i` and measurement `k`, with the global sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTerms {
    pub(crate) states: Vec<State>,
    pub(crate) missed: Vec<f64>,
    /// Row-major `J x m`.
    pub(crate) detected: Vec<f64>,
    pub(crate) measurement_count: usize,
    pub(crate) clutter_density: Vec<f64>,
    pub(crate) clutter_rate: f64,
    pub(crate) clutter_cardinality: CardinalityDistribution,
    pub(crate) total_mass: f64,
    pub(crate) missed_mass: f64,
    pub(crate) detected_mass: Vec<f64>,
}

impl DetectionTerms {
    pub fn compute<M: ObservationModel + ?Sized>(
        particles: &WeightedParticleSet,
        measurements: &[Measurement],
        model: &M,
    ) -> Result<Self> {
        if particles.total_mass() <= 0.0 {
            return Err(Error::EmptyIntensity);
        }
        Ok(Self::compute_unchecked(particles, measurements, model))
    }

    /// Same as [`DetectionTerms::compute`], accepting a massless intensity.
    pub(crate) fn compute_unchecked<M: ObservationModel + ?Sized>(
        particles: &WeightedParticleSet,
        measurements: &[Measurement],
        model: &M,
    ) -> Self {
        let total_mass = particles.total_mass();
        let m = measurements.len();
        let j = particles.len();
        let mut missed = Vec::with_capacity(j);
        let mut detected = vec![0.0; j * m];
        for (i, (w, x)) in particles.iter().enumerate() {
            let pd = model.detection_probability(x);
            missed.push((1.0 - pd) * w);
            if m > 0 {
                let row = &mut detected[i * m..(i + 1) * m];
                model.detection_row(x, measurements, row);
                row.iter_mut().for_each(|v| *v *= w);
            }
        }
        let mut columns = vec![KahanSum::default(); m];
        if m > 0 {
            for row in detected.chunks_exact(m) {
                for (acc, v) in columns.iter_mut().zip(row) {
                    acc.add(*v);
                }
            }
        }
        Self {
            states: particles.states().to_vec(),
            missed_mass: compensated_sum(missed.iter().copied()),
            missed,
            detected,
            measurement_count: m,
            clutter_density: measurements
                .iter()
                .map(|z| model.clutter_density(z))
                .collect(),
            clutter_rate: model.clutter_rate(),
            clutter_cardinality: model.clutter_cardinality().clone(),
            total_mass,
            detected_mass: columns.iter().map(KahanSum::value).collect(),
        }
    }

    pub fn particle_count(&self) -> usize {
        self.states.len()
    }

    pub fn measurement_count(&self) -> usize {
        self.measurement_count
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn missed(&self) -> &[f64] {
        &self.missed
    }

    /// `p_d(x_i) L(z_k|x_i) w_i` for every measurement of particle `i`.
    pub fn detected_row(&self, i: usize) -> &[f64] {
        let m = self.measurement_count;
        &self.detected[i * m..(i + 1) * m]
    }

    pub fn clutter_density(&self) -> &[f64] {
        &self.clutter_density
    }

    pub fn clutter_cardinality(&self) -> &CardinalityDistribution {
        &self.clutter_cardinality
    }

    /// `mu(X)`, the predicted mass.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// `mu^phi(X)`.
    pub fn missed_mass(&self) -> f64 {
        self.missed_mass
    }

    /// `mu^{z_k}(X)` for every measurement.
    pub fn detected_mass(&self) -> &[f64] {
        &self.detected_mass
    }

    /// Missed and per-measurement sums over the particles inside `region`.
    pub fn regional(&self, region: &Region) -> RegionalTerms {
        self.regional_of(&self.missed, &self.detected, region)
    }

    pub(crate) fn regional_of(
        &self,
        missed: &[f64],
        per_measurement: &[f64],
        region: &Region,
    ) -> RegionalTerms {
        let m = self.measurement_count;
        let mut missed_acc = KahanSum::default();
        let mut columns = vec![KahanSum::default(); m];
        for (i, x) in self.states.iter().enumerate() {
            if !region.contains(x) {
                continue;
            }
            missed_acc.add(missed[i]);
            for (acc, v) in columns.iter_mut().zip(&per_measurement[i * m..(i + 1) * m]) {
                acc.add(*v);
            }
        }
        RegionalTerms {
            missed: missed_acc.value(),
            per_measurement: columns.iter().map(KahanSum::value).collect(),
        }
    }
}

/// `mu^phi(B)` and `mu^{z_k}(B)` for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalTerms {
    pub missed: f64,
    pub per_measurement: Vec<f64>,
}
