//! Update timings as a function of the number of measurements.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regvar::cphd::CphdUpdate;
use regvar::phd::PhdUpdate;
use regvar::sensor::{ClutterGeometry, RangeBearingModel, SensorNoise};
use regvar::{CardinalityDistribution, Measurement, Region, State, WeightedParticleSet};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub m_values: Vec<usize>,
    pub repeats: usize,
    pub phd_particles: usize,
    pub cphd_particles: usize,
    /// Cardinality truncation of the CPHD update.
    pub n_max: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m_values: vec![8, 16, 32, 64],
            repeats: 7,
            phd_particles: 20_000,
            cphd_particles: 200,
            n_max: 400,
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub m: usize,
    /// Median seconds per update, regional statistics of the FoV included.
    pub phd_seconds: f64,
    pub cphd_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slopes of log time against log m, over `m > 0`.
    pub phd_exponent: f64,
    pub cphd_exponent: f64,
    /// Median seconds of a pass computing only missed-detection weights.
    pub missed_only_seconds: f64,
}

const FOV_RADIUS: f64 = 3500.0;
const MIN_SAMPLE_SECONDS: f64 = 0.2;
const MAX_REPEATS: usize = 2000;

struct Scene {
    model: RangeBearingModel,
    measurements: Vec<Measurement>,
    phd_particles: WeightedParticleSet,
    cphd_particles: WeightedParticleSet,
    rho: CardinalityDistribution,
}

/// A dense scene: targets and clutter share one 200 m patch that the
/// particle cloud covers, so every particle-measurement pair costs a full
/// likelihood evaluation.
fn scene(m: usize, config: &BenchConfig, rng: &mut ChaCha8Rng) -> Scene {
    let center = State::new(1500.0, 1000.0, 0.0, 0.0);
    let mut jitter = |spread: f64| {
        State::new(
            center.x + rng.random_range(-spread..spread),
            center.y + rng.random_range(-spread..spread),
            0.0,
            0.0,
        )
    };
    let targets = (m / 2).max(1);
    let clutter_rate = (m - m / 2).max(1) as f64;
    let model = RangeBearingModel::new(
        SensorNoise::superior(),
        FOV_RADIUS,
        0.95,
        clutter_rate,
        ClutterGeometry::default(),
        RangeBearingModel::default_clutter_n_max(clutter_rate).max(m + 1),
    )
    .expect("valid model");
    let measurements: Vec<Measurement> = (0..m)
        .map(|_| Measurement::of_state(&jitter(100.0)))
        .collect();
    let mut cloud = |count: usize| -> WeightedParticleSet {
        (0..count)
            .map(|_| (targets as f64 / count as f64, jitter(100.0)))
            .collect()
    };
    let phd_particles = cloud(config.phd_particles);
    let cphd_particles = cloud(config.cphd_particles);
    let rho = CardinalityDistribution::poisson(targets as f64, config.n_max).expect("valid rate");
    Scene {
        model,
        measurements,
        phd_particles,
        cphd_particles,
        rho,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median over at least `repeats` calls, and enough calls to fill
/// `MIN_SAMPLE_SECONDS`.
fn time_median(repeats: usize, mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    f();
    let first = start.elapsed().as_secs_f64().max(1e-9);
    let count = repeats
        .max((MIN_SAMPLE_SECONDS / first).ceil() as usize)
        .min(MAX_REPEATS);
    median(
        (0..count.max(1))
            .map(|_| {
                let start = Instant::now();
                f();
                start.elapsed().as_secs_f64()
            })
            .collect(),
    )
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fitted_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn run_benchmark(config: &BenchConfig) -> regvar::Result<BenchReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fov = Region::disc("fov", 0.0, 0.0, FOV_RADIUS);
    let mut rows = Vec::new();
    let mut missed_only_seconds = 0.0;
    for &m in &config.m_values {
        let s = scene(m, config, &mut rng);
        let mut failure = None;
        let phd_seconds = time_median(config.repeats, || {
            match PhdUpdate::new(&s.phd_particles, &s.measurements, &s.model) {
                Ok(u) => {
                    std::hint::black_box(u.regional_stats(&fov));
                }
                Err(e) => failure = Some(e),
            }
        });
        let cphd_seconds = time_median(config.repeats, || {
            match CphdUpdate::new(
                &s.cphd_particles,
                &s.rho,
                &s.measurements,
                &s.model,
                config.n_max,
            ) {
                Ok(u) => {
                    std::hint::black_box(u.regional_stats(&fov));
                }
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if m == 0 {
            missed_only_seconds = time_median(config.repeats, || {
                let w: f64 = s
                    .phd_particles
                    .iter()
                    .map(|(w, _)| (1.0 - s.model.detection_probability) * w)
                    .sum();
                std::hint::black_box(w);
            });
        }
        rows.push(BenchRow {
            m,
            phd_seconds,
            cphd_seconds,
        });
    }
    let fit: Vec<&BenchRow> = rows.iter().filter(|r| r.m > 0).collect();
    let xs: Vec<f64> = fit.iter().map(|r| r.m as f64).collect();
    let exponent = |ys: Vec<f64>| {
        if xs.len() >= 2 {
            fitted_exponent(&xs, &ys)
        } else {
            f64::NAN
        }
    };
    Ok(BenchReport {
        phd_exponent: exponent(fit.iter().map(|r| r.phd_seconds).collect()),
        cphd_exponent: exponent(fit.iter().map(|r| r.cphd_seconds).collect()),
        rows,
        missed_only_seconds,
    })
}
