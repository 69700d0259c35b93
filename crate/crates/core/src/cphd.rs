//! SMC-CPHD data update with the updated cardinality distribution and the
//! regional mean and variance of the target number.
//!
//! With `a_k(B) = mu^{z_k}(B) / c(z_k)`:
//!
//! ```text
//! mean(B) = mu^phi(B) l1(phi) + sum_k a_k(B) l1(z_k)
//! var(B)  = mean(B)
//!         + mu^phi(B)^2 (l2(phi) - l1(phi)^2)
//!         + 2 mu^phi(B) sum_k a_k(B) (l2(z_k) - l1(z_k) l1(phi))
//!         + 2 sum_{k<l} a_k(B) a_l(B) (l2(z_k, z_l) - l1(z_k) l1(z_l))
//!         - sum_k (a_k(B) l1(z_k))^2
//! ```

use crate::combinatorics::{UpsilonKernel, UpsilonVector};
use crate::error::{Error, Result};
use crate::math::KahanSum;
use crate::terms::DetectionTerms;
use crate::types::{
    CardinalityDistribution, Measurement, ObservationModel, Region, RegionalStats,
    WeightedParticleSet,
};

/// The CPHD update works on the un-normalized detection terms.
pub type CphdConditionalWeights = DetectionTerms;

/// Ratios `<Upsilon^u[mu, Z'], rho> / <Upsilon^0[mu, Z], rho>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorTerms {
    pub l1_phi: f64,
    pub l1: Vec<f64>,
    pub l2_phi: f64,
    pub l2: Vec<f64>,
    /// Row-major `m x m`, symmetric, zero diagonal.
    l2_pair: Vec<f64>,
    upsilon0: UpsilonVector,
}

impl CorrectorTerms {
    pub fn measurement_count(&self) -> usize {
        self.l1.len()
    }

    /// `l2(z_k, z_l)` for `k != l`, zero on the diagonal.
    pub fn l2_pair(&self, k: usize, l: usize) -> f64 {
        self.l2_pair[k * self.l1.len() + l]
    }

    /// `Upsilon^0[mu, Z](n)` up to a common factor.
    pub fn upsilon0(&self) -> &UpsilonVector {
        &self.upsilon0
    }

    fn zeros(m: usize, upsilon0: UpsilonVector) -> Self {
        Self {
            l1_phi: 0.0,
            l1: vec![0.0; m],
            l2_phi: 0.0,
            l2: vec![0.0; m],
            l2_pair: vec![0.0; m * m],
            upsilon0,
        }
    }
}

/// Detection terms for the CPHD update; every measurement must lie in the
/// clutter support.
pub fn cphd_conditional_weights<M: ObservationModel + ?Sized>(
    particles: &WeightedParticleSet,
    measurements: &[Measurement],
    model: &M,
) -> Result<CphdConditionalWeights> {
    let terms = DetectionTerms::compute(particles, measurements, model)?;
    check_clutter_support(&terms)?;
    Ok(terms)
}

fn check_clutter_support(terms: &DetectionTerms) -> Result<()> {
    match terms.clutter_density().iter().position(|c| !(*c > 0.0)) {
        Some(index) => Err(Error::ZeroClutterDensity { index }),
        None => Ok(()),
    }
}

/// Corrector terms `l1` and `l2` for the predicted cardinality `rho`
/// resized to `0..=n_max`.
pub fn cphd_correctors(
    cw: &CphdConditionalWeights,
    rho: &CardinalityDistribution,
    n_max: usize,
) -> Result<CorrectorTerms> {
    check_clutter_support(cw)?;
    let rho = rho.with_n_max(n_max)?;
    let ratios: Vec<f64> = cw
        .detected_mass()
        .iter()
        .zip(cw.clutter_density())
        .map(|(mass, c)| mass / c)
        .collect();
    let kernel = UpsilonKernel::new(
        cw.missed_mass(),
        cw.total_mass(),
        &ratios,
        &rho,
        cw.clutter_cardinality(),
    )?;
    let m = ratios.len();
    let full = kernel.full_esf();
    let denominator = kernel.inner(0, full);
    if !(denominator.value > 0.0) {
        return Err(Error::ZeroEvidence);
    }
    let mut out = CorrectorTerms::zeros(m, kernel.upsilon_vector(0, full, n_max));
    out.l1_phi = kernel.inner(1, full).ratio(denominator);
    out.l2_phi = kernel.inner(2, full).ratio(denominator);
    for k in 0..m {
        let without_k = kernel.remove(full, k);
        out.l1[k] = kernel.inner(1, &without_k).ratio(denominator);
        out.l2[k] = kernel.inner(2, &without_k).ratio(denominator);
        for l in k + 1..m {
            let without_kl = kernel.remove(&without_k, l);
            let value = kernel.inner(2, &without_kl).ratio(denominator);
            out.l2_pair[k * m + l] = value;
            out.l2_pair[l * m + k] = value;
        }
    }
    Ok(out)
}

/// `rho+(n) = Upsilon^0(n) rho(n) / <Upsilon^0, rho>`.
pub fn cphd_update_cardinality(
    rho: &CardinalityDistribution,
    upsilon0: &UpsilonVector,
) -> Result<CardinalityDistribution> {
    let (u, p) = (upsilon0.values(), rho.probabilities());
    if u.len() != p.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: p.len(),
        });
    }
    let weights: Vec<f64> = u.iter().zip(p).map(|(a, b)| a * b).collect();
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(Error::ZeroEvidence);
    }
    CardinalityDistribution::from_weights(weights)
}

/// `w+_i = w_phi_i l1(phi) + sum_k w_zk_i / c(z_k) l1(z_k)`.
pub fn cphd_update_intensity(
    cw: &CphdConditionalWeights,
    correctors: &CorrectorTerms,
) -> Result<WeightedParticleSet> {
    check_clutter_support(cw)?;
    let scale: Vec<f64> = correctors
        .l1
        .iter()
        .zip(cw.clutter_density())
        .map(|(l1, c)| l1 / c)
        .collect();
    let weights = (0..cw.particle_count())
        .map(|i| {
            let detected: f64 = cw
                .detected_row(i)
                .iter()
                .zip(&scale)
                .map(|(w, s)| w * s)
                .sum();
            cw.missed()[i] * correctors.l1_phi + detected
        })
        .collect();
    WeightedParticleSet::new(weights, cw.states().to_vec())
}

/// Mean and variance of the updated target number in `region`, the
/// variance before clamping at zero.
pub fn cphd_regional_moments(
    cw: &CphdConditionalWeights,
    correctors: &CorrectorTerms,
    region: &Region,
) -> (f64, f64) {
    let regional = cw.regional(region);
    let missed = regional.missed;
    let a: Vec<f64> = regional
        .per_measurement
        .iter()
        .zip(cw.clutter_density())
        .map(|(mass, c)| mass / c)
        .collect();
    let b: Vec<f64> = a.iter().zip(&correctors.l1).map(|(a, l1)| a * l1).collect();

    let mut mean = KahanSum::default();
    mean.add(missed * correctors.l1_phi);
    b.iter().for_each(|v| mean.add(*v));
    let mean = mean.value();

    let l1_phi = correctors.l1_phi;
    let mut var = KahanSum::default();
    var.add(mean);
    var.add(missed * missed * (correctors.l2_phi - l1_phi * l1_phi));
    for k in 0..a.len() {
        var.add(2.0 * missed * a[k] * (correctors.l2[k] - correctors.l1[k] * l1_phi));
        for l in k + 1..a.len() {
            var.add(2.0 * (a[k] * a[l] * correctors.l2_pair(k, l) - b[k] * b[l]));
        }
        var.add(-b[k] * b[k]);
    }
    (mean, var.value())
}

/// Mean and variance of the updated target number in `region`.
pub fn cphd_regional_stats(
    cw: &CphdConditionalWeights,
    correctors: &CorrectorTerms,
    region: &Region,
) -> RegionalStats {
    let (mean, variance) = cphd_regional_moments(cw, correctors, region);
    RegionalStats {
        label: region.label().to_string(),
        mean,
        variance: variance.max(0.0),
    }
}

/// Result of one CPHD data update.
#[derive(Debug, Clone, PartialEq)]
pub struct CphdUpdate {
    terms: CphdConditionalWeights,
    correctors: CorrectorTerms,
    cardinality: CardinalityDistribution,
    updated: WeightedParticleSet,
}

impl CphdUpdate {
    /// Runs the update with the predicted cardinality resized to `0..=n_max`.
    ///
    /// A massless intensity is accepted when `rho` puts all its mass on
    /// zero targets: every measurement is then clutter and nothing moves.
    pub fn new<M: ObservationModel + ?Sized>(
        particles: &WeightedParticleSet,
        rho: &CardinalityDistribution,
        measurements: &[Measurement],
        model: &M,
        n_max: usize,
    ) -> Result<Self> {
        if particles.total_mass() <= 0.0 {
            return Self::without_targets(particles, rho, measurements, model, n_max);
        }
        let terms = cphd_conditional_weights(particles, measurements, model)?;
        let rho = rho.with_n_max(n_max)?;
        let correctors = cphd_correctors(&terms, &rho, n_max)?;
        let cardinality = cphd_update_cardinality(&rho, correctors.upsilon0())?;
        let updated = cphd_update_intensity(&terms, &correctors)?;
        Ok(Self {
            terms,
            correctors,
            cardinality,
            updated,
        })
    }

    fn without_targets<M: ObservationModel + ?Sized>(
        particles: &WeightedParticleSet,
        rho: &CardinalityDistribution,
        measurements: &[Measurement],
        model: &M,
        n_max: usize,
    ) -> Result<Self> {
        if rho.pmf(0) < 1.0 {
            return Err(Error::EmptyIntensity);
        }
        if !(model.clutter_cardinality().pmf(measurements.len()) > 0.0) {
            return Err(Error::ZeroEvidence);
        }
        let terms = DetectionTerms::compute_unchecked(particles, measurements, model);
        check_clutter_support(&terms)?;
        let cardinality = CardinalityDistribution::point_mass(0, n_max)?;
        let upsilon0 = UpsilonVector::new(0, cardinality.probabilities().to_vec());
        Ok(Self {
            correctors: CorrectorTerms::zeros(measurements.len(), upsilon0),
            updated: WeightedParticleSet::new(
                vec![0.0; particles.len()],
                particles.states().to_vec(),
            )?,
            terms,
            cardinality,
        })
    }

    pub fn conditional_weights(&self) -> &CphdConditionalWeights {
        &self.terms
    }

    pub fn correctors(&self) -> &CorrectorTerms {
        &self.correctors
    }

    pub fn cardinality(&self) -> &CardinalityDistribution {
        &self.cardinality
    }

    pub fn updated(&self) -> &WeightedParticleSet {
        &self.updated
    }

    pub fn into_parts(self) -> (WeightedParticleSet, CardinalityDistribution) {
        (self.updated, self.cardinality)
    }

    pub fn regional_stats(&self, region: &Region) -> RegionalStats {
        cphd_regional_stats(&self.terms, &self.correctors, region)
    }

    /// Mean and unclamped variance.
    pub fn regional_moments(&self, region: &Region) -> (f64, f64) {
        cphd_regional_moments(&self.terms, &self.correctors, region)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::DiscreteModel;
    use crate::phd::PhdUpdate;
    use crate::types::State;

    fn points() -> Vec<State> {
        (0..3)
            .map(|i| State::new(i as f64, 0.0, 0.0, 0.0))
            .collect()
    }

    fn measurements(m: usize) -> Vec<Measurement> {
        (0..m)
            .map(|k| Measurement::new(1.0 + k as f64, 0.1).unwrap())
            .collect()
    }

    fn model(m: usize, detection: f64, clutter: CardinalityDistribution) -> DiscreteModel {
        let likelihood = (0..3)
            .map(|i| {
                (0..m)
                    .map(|k| 0.3 + 0.7 * ((i + 2 * k) % 3) as f64)
                    .collect()
            })
            .collect();
        DiscreteModel::new(
            points(),
            measurements(m),
            vec![detection, detection * 0.5, detection * 0.8],
            likelihood,
            (0..m).map(|k| 0.2 + 0.1 * k as f64).collect(),
            clutter,
        )
        .unwrap()
    }

    fn particles(mass: f64) -> WeightedParticleSet {
        WeightedParticleSet::new(vec![0.2 * mass, 0.5 * mass, 0.3 * mass], points()).unwrap()
    }

    #[test]
    fn no_measurements_scales_missed_terms() {
        let rho = CardinalityDistribution::from_weights(vec![0.1, 0.3, 0.4, 0.2]).unwrap();
        let model = model(0, 0.7, CardinalityDistribution::poisson(1.0, 10).unwrap());
        let p = particles(rho.mean());
        let update = CphdUpdate::new(&p, &rho, &[], &model, 3).unwrap();
        let l1 = update.correctors().l1_phi;
        let cw = update.conditional_weights();
        for (w, missed) in update.updated().weights().iter().zip(cw.missed()) {
            assert!((w - missed * l1).abs() < 1e-15);
        }
    }

    #[test]
    fn undetectable_targets_keep_shape() {
        let rho = CardinalityDistribution::from_weights(vec![0.1, 0.3, 0.4, 0.2]).unwrap();
        let model = model(2, 0.0, CardinalityDistribution::poisson(2.0, 10).unwrap());
        let p = particles(rho.mean());
        let update = CphdUpdate::new(&p, &rho, &measurements(2), &model, 3).unwrap();
        let l1 = update.correctors().l1_phi;
        for (w, w0) in update.updated().weights().iter().zip(p.weights()) {
            assert!((w - w0 * l1).abs() < 1e-14);
        }
        // Missed detections everywhere: the cardinality is unchanged.
        for (a, b) in update
            .cardinality()
            .probabilities()
            .iter()
            .zip(rho.probabilities())
        {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn pair_terms_symmetric() {
        let rho = CardinalityDistribution::from_weights(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let model = model(4, 0.9, CardinalityDistribution::poisson(2.0, 10).unwrap());
        let update =
            CphdUpdate::new(&particles(rho.mean()), &rho, &measurements(4), &model, 3).unwrap();
        let c = update.correctors();
        for k in 0..4 {
            assert_eq!(c.l2_pair(k, k), 0.0);
            for l in 0..4 {
                assert_eq!(c.l2_pair(k, l).to_bits(), c.l2_pair(l, k).to_bits());
            }
        }
    }

    #[test]
    fn point_mass_cardinality_is_preserved() {
        let rho = CardinalityDistribution::point_mass(2, 5).unwrap();
        let model = model(3, 0.9, CardinalityDistribution::poisson(2.0, 10).unwrap());
        let update = CphdUpdate::new(&particles(2.0), &rho, &measurements(3), &model, 5).unwrap();
        assert!((update.cardinality().pmf(2) - 1.0).abs() < 1e-15);
        let stats = update.regional_stats(&Region::everywhere());
        assert!((stats.mean - 2.0).abs() < 1e-12);
        assert!(stats.variance.abs() < 1e-12);
    }

    #[test]
    fn whole_space_matches_cardinality_moments() {
        let rho = CardinalityDistribution::from_weights(vec![0.05, 0.2, 0.3, 0.25, 0.2]).unwrap();
        let model = model(
            3,
            0.85,
            CardinalityDistribution::from_weights(vec![0.3, 0.3, 0.2, 0.2]).unwrap(),
        );
        let update =
            CphdUpdate::new(&particles(rho.mean()), &rho, &measurements(3), &model, 4).unwrap();
        let card = update.cardinality();
        let (mean, var) = update.regional_moments(&Region::everywhere());
        assert!((mean - card.mean()).abs() < 1e-12);
        assert!((var - card.variance()).abs() < 1e-12);
        assert!((update.updated().total_mass() - mean).abs() < 1e-12);
        let empty = update.regional_stats(&Region::nowhere());
        assert_eq!((empty.mean, empty.variance), (0.0, 0.0));
    }

    #[test]
    fn poisson_inputs_reduce_to_phd() {
        let rate = 1.7;
        let rho = CardinalityDistribution::poisson(rate, 80).unwrap();
        let model = model(3, 0.9, CardinalityDistribution::poisson(2.5, 80).unwrap());
        let p = particles(rate);
        let cphd = CphdUpdate::new(&p, &rho, &measurements(3), &model, 80).unwrap();
        let phd = PhdUpdate::new(&p, &measurements(3), &model).unwrap();
        assert!((cphd.correctors().l1_phi - 1.0).abs() < 1e-9);
        assert!((cphd.correctors().l2_phi - 1.0).abs() < 1e-9);
        for (a, b) in cphd.updated().weights().iter().zip(phd.updated().weights()) {
            assert!((a - b).abs() < 1e-9);
        }
        let region = Region::new("first two", |x: &State| x.x < 1.5);
        for r in [Region::everywhere(), region] {
            let (c, p) = (cphd.regional_stats(&r), phd.regional_stats(&r));
            assert!((c.mean - p.mean).abs() < 1e-9, "{c:?} {p:?}");
            assert!((c.variance - p.variance).abs() < 1e-9, "{c:?} {p:?}");
        }
    }

    #[test]
    fn massless_intensity_with_empty_prior() {
        let rho = CardinalityDistribution::point_mass(0, 4).unwrap();
        let model = model(2, 0.9, CardinalityDistribution::poisson(2.0, 10).unwrap());
        let update = CphdUpdate::new(&particles(0.0), &rho, &measurements(2), &model, 4).unwrap();
        assert_eq!(update.cardinality().pmf(0), 1.0);
        let stats = update.regional_stats(&Region::everywhere());
        assert_eq!((stats.mean, stats.variance), (0.0, 0.0));
        let rho = CardinalityDistribution::point_mass(1, 4).unwrap();
        let err = CphdUpdate::new(&particles(0.0), &rho, &measurements(2), &model, 4).unwrap_err();
        assert_eq!(err, Error::EmptyIntensity);
    }

    #[test]
    fn measurement_outside_clutter_support_is_rejected() {
        let rho = CardinalityDistribution::poisson(1.0, 10).unwrap();
        let mut m = model(2, 0.9, CardinalityDistribution::poisson(2.0, 10).unwrap());
        m.set_clutter_density(1, 0.0);
        let err = CphdUpdate::new(&particles(1.0), &rho, &measurements(2), &m, 10).unwrap_err();
        assert_eq!(err, Error::ZeroClutterDensity { index: 1 });
    }
}
