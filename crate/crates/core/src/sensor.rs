//! Range-bearing sensor at the origin with a circular field of view and
//! i.i.d. clutter spread over that field of view.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::types::{CardinalityDistribution, Measurement, ObservationModel, State};

/// Measurement noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    /// Meters.
    pub sigma_range: f64,
    /// Radians.
    pub sigma_bearing: f64,
}

impl SensorNoise {
    /// 5 m and 1 degree.
    pub fn superior() -> Self {
        Self {
            sigma_range: 5.0,
            sigma_bearing: 1f64.to_radians(),
        }
    }

    /// 12.5 m and 2.5 degrees.
    pub fn inferior() -> Self {
        Self {
            sigma_range: 12.5,
            sigma_bearing: 2.5f64.to_radians(),
        }
    }
}

/// How clutter is spread over the circular field of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClutterGeometry {
    /// Uniform per unit area of the disc: `c(r, theta) = r / (pi R^2)`.
    #[default]
    AreaUniform,
    /// Uniform in range and bearing: `c(r, theta) = 1 / (2 pi R)`.
    RangeBearingUniform,
}

impl ClutterGeometry {
    /// Clutter density per meter-radian at range `range`.
    pub fn density(self, range: f64, fov_radius: f64) -> f64 {
        if !(0.0..=fov_radius).contains(&range) {
            return 0.0;
        }
        match self {
            ClutterGeometry::AreaUniform => range / (PI * fov_radius * fov_radius),
            ClutterGeometry::RangeBearingUniform => 1.0 / (2.0 * PI * fov_radius),
        }
    }

    /// Draws one clutter point.
    pub fn sample<R: Rng + ?Sized>(self, fov_radius: f64, rng: &mut R) -> Measurement {
        let u: f64 = rng.random();
        let range = match self {
            ClutterGeometry::AreaUniform => fov_radius * u.sqrt(),
            ClutterGeometry::RangeBearingUniform => fov_radius * u,
        };
        let bearing = wrap_angle(rng.random_range(-PI..PI));
        Measurement { range, bearing }
    }
}

/// Observation model of the range-bearing sensor used in the simulations.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeBearingModel {
    pub noise: SensorNoise,
    pub fov_radius: f64,
    pub detection_probability: f64,
    pub clutter_rate: f64,
    pub clutter_geometry: ClutterGeometry,
    clutter_cardinality: CardinalityDistribution,
}

impl RangeBearingModel {
    /// Builds the model with Poisson clutter truncated at `clutter_n_max`.
    pub fn new(
        noise: SensorNoise,
        fov_radius: f64,
        detection_probability: f64,
        clutter_rate: f64,
        clutter_geometry: ClutterGeometry,
        clutter_n_max: usize,
    ) -> Result<Self> {
        if !(noise.sigma_range > 0.0 && noise.sigma_bearing > 0.0) {
            return Err(Error::param(
                "noise",
                "standard deviations must be positive",
            ));
        }
        if !(fov_radius > 0.0) {
            return Err(Error::param("fov_radius", "must be positive"));
        }
        if !(0.0..=1.0).contains(&detection_probability) {
            return Err(Error::param("detection_probability", "must lie in [0, 1]"));
        }
        let clutter_cardinality = CardinalityDistribution::poisson(clutter_rate, clutter_n_max)?;
        Ok(Self {
            noise,
            fov_radius,
            detection_probability,
            clutter_rate: clutter_cardinality.mean(),
            clutter_geometry,
            clutter_cardinality,
        })
    }

    /// Clutter truncation wide enough for the rate: `rate + 12 sqrt(rate) + 20`.
    pub fn default_clutter_n_max(rate: f64) -> usize {
        (rate + 12.0 * rate.sqrt() + 20.0).ceil() as usize
    }

    pub fn in_fov(&self, state: &State) -> bool {
        state.range() <= self.fov_radius
    }

    fn ln_norm(&self) -> f64 {
        -(2.0 * PI * self.noise.sigma_range * self.noise.sigma_bearing).ln()
    }

    #[inline]
    fn density_from_polar(&self, range: f64, bearing: f64, z: &Measurement) -> f64 {
        let dr = (z.range - range) / self.noise.sigma_range;
        if 0.5 * dr * dr > 745.0 {
            return 0.0;
        }
        let db = wrap_angle(z.bearing - bearing) / self.noise.sigma_bearing;
        let q = 0.5 * (dr * dr + db * db);
        if q > 745.0 {
            0.0
        } else {
            (self.ln_norm() - q).exp()
        }
    }
}

impl ObservationModel for RangeBearingModel {
    fn detection_probability(&self, state: &State) -> f64 {
        if self.in_fov(state) {
            self.detection_probability
        } else {
            0.0
        }
    }

    fn likelihood(&self, measurement: &Measurement, state: &State) -> f64 {
        self.density_from_polar(state.range(), state.y.atan2(state.x), measurement)
    }

    fn clutter_density(&self, measurement: &Measurement) -> f64 {
        self.clutter_geometry
            .density(measurement.range, self.fov_radius)
    }

    fn clutter_cardinality(&self) -> &CardinalityDistribution {
        &self.clutter_cardinality
    }

    fn clutter_rate(&self) -> f64 {
        self.clutter_rate
    }

    fn detection_row(&self, state: &State, measurements: &[Measurement], out: &mut [f64]) {
        let pd = self.detection_probability(state);
        if pd == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let (range, bearing) = (state.range(), state.y.atan2(state.x));
        for (slot, z) in out.iter_mut().zip(measurements) {
            *slot = pd * self.density_from_polar(range, bearing, z);
        }
    }
}
