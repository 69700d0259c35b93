//! Ground truth and range-bearing measurements for the five-target scenario.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::wrap_angle;
use crate::sensor::{ClutterGeometry, RangeBearingModel, SensorNoise};
use crate::types::{Measurement, MultiTargetConfig, State};

/// A target alive on `[birth, death)`, in state `initial` at `birth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub initial: State,
    pub birth: f64,
    pub death: f64,
}

impl Track {
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.death
    }

    /// Noiseless position at time `t`.
    pub fn position_at(&self, t: f64) -> State {
        let s = t - self.birth;
        State::new(
            self.initial.x + self.initial.vx * s,
            self.initial.y + self.initial.vy * s,
            self.initial.vx,
            self.initial.vy,
        )
    }
}

/// Tracks, sensor and clutter of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub tracks: Vec<Track>,
    pub noise: SensorNoise,
    pub fov_radius: f64,
    pub clutter_rate: f64,
    #[serde(default)]
    pub clutter_geometry: ClutterGeometry,
    pub detection_probability: f64,
    /// Seconds.
    pub dt: f64,
    /// Seconds; steps are `t = 0, dt, ..` strictly below `horizon`.
    pub horizon: f64,
    /// Per-axis acceleration standard deviation of the true targets, m/s^2.
    #[serde(default)]
    pub process_noise_std: f64,
}

/// Initial states and lifetimes `(x, y, vx, vy, birth, death)`.
const NOMINAL_TRACKS: [[f64; 6]; 5] = [
    [2000.0, 2000.0, -9.1, -9.1, 0.0, 110.0],
    [1850.0, 4000.0, -10.0, -10.0, 20.0, 130.0],
    [1800.0, 1800.0, -10.0, 0.0, 40.0, 150.0],
    [1000.0, 1000.0, 10.0, 0.0, 70.0, 170.0],
    [1250.0, 2350.0, 12.0, -12.0, 90.0, 190.0],
];

impl Scenario {
    /// The five-target scenario with slight process noise (0.01 m/s^2).
    /// Track 2 is born at `(1850, 1154.9)` with
    /// velocity `(-10, 10)`, so that it passes 5.4 m from track 1 at
    /// `t = 55 s`; every other entry is nominal.
    pub fn five_targets() -> Self {
        let mut scenario = Self::five_targets_nominal();
        scenario.process_noise_std = 0.01;
        scenario.tracks[1].initial = State::new(1850.0, 1154.9, -10.0, 10.0);
        scenario
    }

    /// The five tracks with their nominal entries. Track 2 then starts outside the
    /// field of view and never comes close to track 1.
    pub fn five_targets_nominal() -> Self {
        Self {
            tracks: NOMINAL_TRACKS
                .iter()
                .map(|r| Track {
                    initial: State::new(r[0], r[1], r[2], r[3]),
                    birth: r[4],
                    death: r[5],
                })
                .collect(),
            noise: SensorNoise::superior(),
            fov_radius: 3500.0,
            clutter_rate: 20.0,
            clutter_geometry: ClutterGeometry::AreaUniform,
            detection_probability: 0.95,
            dt: 1.0,
            horizon: 190.0,
            process_noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.tracks.iter().enumerate() {
            if !(t.birth < t.death) {
                return Err(Error::param(
                    "tracks",
                    format!("track {i}: birth must precede death"),
                ));
            }
            if !t.initial.is_finite() {
                return Err(Error::param(
                    "tracks",
                    format!("track {i}: non-finite state"),
                ));
            }
        }
        if !(self.noise.sigma_range > 0.0 && self.noise.sigma_bearing > 0.0) {
            return Err(Error::param(
                "noise",
                "standard deviations must be positive",
            ));
        }
        if !(self.fov_radius > 0.0) {
            return Err(Error::param("fov_radius", "must be positive"));
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return Err(Error::param("clutter_rate", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.detection_probability) {
            return Err(Error::param("detection_probability", "must lie in [0, 1]"));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::param("dt", "time step and horizon must be positive"));
        }
        if !(self.process_noise_std >= 0.0) {
            return Err(Error::param("process_noise_std", "must be >= 0"));
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Observation model matching the simulated sensor.
    pub fn sensor_model(&self, clutter_n_max: usize) -> Result<RangeBearingModel> {
        RangeBearingModel::new(
            self.noise,
            self.fov_radius,
            self.detection_probability,
            self.clutter_rate,
            self.clutter_geometry,
            clutter_n_max,
        )
    }

    /// Number of tracks alive at every step.
    pub fn alive_counts(&self) -> Vec<usize> {
        (0..self.step_count())
            .map(|k| {
                self.tracks
                    .iter()
                    .filter(|t| t.alive_at(self.time(k)))
                    .count()
            })
            .collect()
    }
}

/// True targets at one step, with the index of the track of each state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStep {
    pub time: f64,
    pub config: MultiTargetConfig,
    pub track_ids: Vec<usize>,
}

impl TruthStep {
    pub fn state_of(&self, track: usize) -> Option<&State> {
        self.track_ids
            .iter()
            .position(|&id| id == track)
            .map(|i| &self.config.states[i])
    }
}

/// Seed of the stream used for truth and for measurements of run `seed`.
fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trajectories of every track, constant velocity plus seeded acceleration
/// noise, one entry per step.
pub fn generate_truth(scenario: &Scenario, seed: u64) -> Vec<TruthStep> {
    let mut rng = rng_for(seed, 0);
    let dt = scenario.dt;
    let sigma = scenario.process_noise_std;
    let mut current: Vec<Option<State>> = vec![None; scenario.tracks.len()];
    (0..scenario.step_count())
        .map(|k| {
            let t = scenario.time(k);
            let mut states = Vec::new();
            let mut ids = Vec::new();
            for (i, track) in scenario.tracks.iter().enumerate() {
                if !track.alive_at(t) {
                    current[i] = None;
                    continue;
                }
                let next = match current[i] {
                    None => track.position_at(t),
                    Some(s) => {
                        let (ax, ay) = if sigma > 0.0 {
                            (
                                rng.sample::<f64, _>(StandardNormal) * sigma,
                                rng.sample::<f64, _>(StandardNormal) * sigma,
                            )
                        } else {
                            (0.0, 0.0)
                        };
                        State::new(
                            s.x + s.vx * dt + 0.5 * dt * dt * ax,
                            s.y + s.vy * dt + 0.5 * dt * dt * ay,
                            s.vx + dt * ax,
                            s.vy + dt * ay,
                        )
                    }
                };
                current[i] = Some(next);
                states.push(next);
                ids.push(i);
            }
            TruthStep {
                time: t,
                config: MultiTargetConfig::new(states),
                track_ids: ids,
            }
        })
        .collect()
}

/// Detections of the targets of `truth` inside the field of view, each
/// kept with probability `p_d` and perturbed in range and bearing, plus
/// Poisson clutter, in random order. Noisy detections falling outside
/// `[0, R]` in range are discarded.
pub fn generate_measurements<R: Rng + ?Sized>(
    truth: &MultiTargetConfig,
    scenario: &Scenario,
    rng: &mut R,
) -> Vec<Measurement> {
    let mut out = Vec::new();
    for x in &truth.states {
        if x.range() > scenario.fov_radius || !rng.random_bool(scenario.detection_probability) {
            continue;
        }
        let clean = Measurement::of_state(x);
        let range = clean.range + scenario.noise.sigma_range * rng.sample::<f64, _>(StandardNormal);
        let bearing =
            clean.bearing + scenario.noise.sigma_bearing * rng.sample::<f64, _>(StandardNormal);
        if (0.0..=scenario.fov_radius).contains(&range) {
            out.push(Measurement {
                range,
                bearing: wrap_angle(bearing),
            });
        }
    }
    if scenario.clutter_rate > 0.0 {
        let count = Poisson::new(scenario.clutter_rate)
            .expect("positive clutter rate")
            .sample(rng) as usize;
        out.extend((0..count).map(|_| scenario.clutter_geometry.sample(scenario.fov_radius, rng)));
    }
    out.shuffle(rng);
    out
}

/// Measurements for every step of `truth`.
pub fn generate_measurement_sequence(
    truth: &[TruthStep],
    scenario: &Scenario,
    seed: u64,
) -> Vec<Vec<Measurement>> {
    let mut rng = rng_for(seed, 1);
    truth
        .iter()
        .map(|step| generate_measurements(&step.config, scenario, &mut rng))
        .collect()
}

/// Uniform point of the disc of radius `radius`, as a state at rest.
pub fn uniform_in_disc<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> State {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random_range(-PI..PI);
    State::new(r * theta.cos(), r * theta.sin(), 0.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_rows() {
        let s = Scenario::five_targets_nominal();
        assert_eq!(s.tracks[0].initial, State::new(2000.0, 2000.0, -9.1, -9.1));
        assert_eq!((s.tracks[0].birth, s.tracks[0].death), (0.0, 110.0));
        assert_eq!(s.tracks[4].initial, State::new(1250.0, 2350.0, 12.0, -12.0));
        assert_eq!((s.tracks[4].birth, s.tracks[4].death), (90.0, 190.0));
        assert_eq!(s.step_count(), 190);
    }

    #[test]
    fn nominal_tracks_never_come_close() {
        let s = Scenario::five_targets_nominal();
        let (a, b) = (s.tracks[0], s.tracks[1]);
        let closest = (20..110)
            .map(|t| {
                a.position_at(t as f64)
                    .distance_to(&b.position_at(t as f64))
            })
            .fold(f64::INFINITY, f64::min);
        assert!(closest > 1000.0, "{closest}");
    }

    #[test]
    fn crossing_tracks_near_55_s() {
        let mut s = Scenario::five_targets();
        s.process_noise_std = 0.0;
        let truth = generate_truth(&s, 0);
        let d = |t: usize| {
            truth[t]
                .state_of(0)
                .unwrap()
                .distance_to(truth[t].state_of(1).unwrap())
        };
        assert!((d(55) - 5.4).abs() < 1.0, "{}", d(55));
        assert!(d(51) > 60.0 && d(59) > 60.0);
        let closest = (20..110).min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap();
        assert_eq!(closest, 55);
    }

    #[test]
    fn noiseless_kinematics_and_alive_counts() {
        let mut s = Scenario::five_targets();
        s.process_noise_std = 0.0;
        let truth = generate_truth(&s, 3);
        for step in [0, 37, 109] {
            let x = truth[step].state_of(0).unwrap();
            let expected = s.tracks[0].position_at(step as f64);
            assert!((x.x - expected.x).abs() < 1e-9 && (x.y - expected.y).abs() < 1e-9);
        }
        let counts: Vec<usize> = truth.iter().map(|t| t.config.len()).collect();
        assert_eq!(counts, s.alive_counts());
        assert_eq!(
            (counts[0], counts[25], counts[45], counts[75], counts[95]),
            (1, 2, 3, 4, 5)
        );
        assert_eq!(
            (counts[115], counts[135], counts[155], counts[175]),
            (4, 3, 2, 1)
        );
    }

    #[test]
    fn noiseless_detection_is_exact() {
        let mut s = Scenario::five_targets();
        s.detection_probability = 1.0;
        s.clutter_rate = 0.0;
        s.noise = SensorNoise {
            sigma_range: 1e-300,
            sigma_bearing: 1e-300,
        };
        let truth = generate_truth(&s, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zs = generate_measurements(&truth[100].config, &s, &mut rng);
        assert_eq!(zs.len(), truth[100].config.len());
        for x in &truth[100].config.states {
            let h = Measurement::of_state(x);
            assert!(
                zs.iter()
                    .any(|z| (z.range - h.range).abs() < 1e-9
                        && (z.bearing - h.bearing).abs() < 1e-12)
            );
        }
    }

    #[test]
    fn clutter_count_and_spread() {
        let mut s = Scenario::five_targets();
        s.detection_probability = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let empty = MultiTargetConfig::default();
        let n = 10_000;
        let mut count = 0usize;
        let mut r2 = 0.0;
        for _ in 0..n {
            let zs = generate_measurements(&empty, &s, &mut rng);
            count += zs.len();
            r2 += zs.iter().map(|z| z.range * z.range).sum::<f64>();
        }
        let mean = count as f64 / n as f64;
        let sigma = (s.clutter_rate / n as f64).sqrt();
        assert!((mean - s.clutter_rate).abs() < 3.0 * sigma, "{mean}");
        // r^2 / R^2 is uniform on [0, 1]: mean 1/2, variance 1/12.
        let r2_mean = r2 / count as f64 / (s.fov_radius * s.fov_radius);
        assert!(
            (r2_mean - 0.5).abs() < 3.0 * (1.0 / 12.0 / count as f64).sqrt(),
            "{r2_mean}"
        );
    }

    #[test]
    fn measurement_sequences_are_reproducible() {
        let s = Scenario::five_targets();
        let truth = generate_truth(&s, 7);
        assert_eq!(
            generate_measurement_sequence(&truth, &s, 7),
            generate_measurement_sequence(&truth, &s, 7)
        );
        assert_ne!(
            generate_measurement_sequence(&truth, &s, 7),
            generate_measurement_sequence(&truth, &s, 8)
        );
    }

    #[test]
    fn detection_frequency_matches_pd() {
        let mut s = Scenario::five_targets();
        s.clutter_rate = 0.0;
        s.detection_probability = 0.85;
        let config = MultiTargetConfig::new(vec![State::new(1000.0, 0.0, 0.0, 0.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 20_000;
        let hits: usize = (0..n)
            .map(|_| generate_measurements(&config, &s, &mut rng).len())
            .sum();
        let freq = hits as f64 / n as f64;
        let sigma = (0.85 * 0.15 / n as f64).sqrt();
        assert!((freq - 0.85).abs() < 3.0 * sigma, "{freq}");
    }
}
