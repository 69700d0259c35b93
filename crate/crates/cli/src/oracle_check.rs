//! Randomized comparison of both filters against exact enumeration.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regvar::oracle::{
    relative_error, DiscreteModel, DiscretePrior, InstanceShape, OracleInstance, ENUMERATION_BUDGET,
};
use regvar::{CardinalityDistribution, Region, State};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleCheckConfig {
    pub seed: u64,
    /// Instances with an arbitrary i.i.d. prior and arbitrary clutter.
    pub iid_instances: usize,
    /// Instances with Poisson prior and Poisson clutter.
    pub poisson_instances: usize,
    pub max_points: usize,
    pub max_measurements: usize,
    pub max_targets: usize,
    /// Truncation of the Poisson instances.
    pub poisson_n_max: usize,
    pub poisson_max_points: usize,
    pub cphd_tolerance: f64,
    pub phd_tolerance: f64,
    /// Denominator floor of the relative errors.
    pub floor: f64,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            iid_instances: 60,
            poisson_instances: 25,
            max_points: 4,
            max_measurements: 3,
            max_targets: 4,
            poisson_n_max: 80,
            poisson_max_points: 3,
            cphd_tolerance: 1e-9,
            phd_tolerance: 1e-6,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleCheckError {
    /// The largest instance would exceed the enumeration budget.
    Budget {
        configurations: u128,
    },
    Filter(regvar::Error),
}

impl fmt::Display for OracleCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleCheckError::Budget { configurations } => write!(
                f,
                "instances of this size need up to {configurations} configurations, above the budget of {ENUMERATION_BUDGET}"
            ),
            OracleCheckError::Filter(e) => write!(f, "oracle comparison failed: {e}"),
        }
    }
}

impl std::error::Error for OracleCheckError {}

/// Largest deviations found, each relative to the reference value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OracleReport {
    pub iid_instances: usize,
    pub poisson_instances: usize,
    pub regions_compared: usize,
    /// CPHD against the oracle on the i.i.d. instances.
    pub cphd_mean: f64,
    pub cphd_var: f64,
    /// CPHD cardinality against the oracle cardinality, absolute.
    pub cphd_cardinality: f64,
    /// PHD against the oracle on the Poisson instances.
    pub phd_mean: f64,
    pub phd_var: f64,
    /// CPHD against PHD on the Poisson instances.
    pub reduction_mean: f64,
    pub reduction_var: f64,
    /// Deviation on the instance with no targets and no measurements.
    pub degenerate: f64,
    pub cphd_tolerance: f64,
    pub phd_tolerance: f64,
}

impl OracleReport {
    pub fn cphd_passes(&self) -> bool {
        self.cphd_mean < self.cphd_tolerance
            && self.cphd_var < self.cphd_tolerance
            && self.cphd_cardinality < self.cphd_tolerance
            && self.degenerate == 0.0
    }

    pub fn phd_passes(&self) -> bool {
        self.phd_mean < self.phd_tolerance && self.phd_var < self.phd_tolerance
    }

    pub fn reduction_passes(&self) -> bool {
        self.reduction_mean < self.phd_tolerance && self.reduction_var < self.phd_tolerance
    }

    pub fn passes(&self) -> bool {
        self.cphd_passes() && self.phd_passes() && self.reduction_passes()
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Configurations of the largest posterior: multisets of at most `n_max`
/// targets on `points` states.
pub fn configuration_count(points: usize, n_max: usize) -> u128 {
    binomial((points + n_max) as u128, n_max as u128)
}

/// Prior with no targets, one point, no measurements.
fn degenerate_instance() -> OracleInstance {
    let point = State::new(0.0, 0.0, 0.0, 0.0);
    let rho = CardinalityDistribution::point_mass(0, 2).expect("valid point mass");
    let clutter = CardinalityDistribution::poisson(1.0, 4).expect("valid rate");
    OracleInstance {
        prior: DiscretePrior::new(vec![point], rho, vec![1.0]).expect("unit spatial mass"),
        model: DiscreteModel::new(
            vec![point],
            Vec::new(),
            vec![0.9],
            vec![Vec::new()],
            Vec::new(),
            clutter,
        )
        .expect("consistent tables"),
        measurements: Vec::new(),
        regions: vec![Region::everywhere(), Region::nowhere()],
    }
}

pub fn run_oracle_check(config: &OracleCheckConfig) -> Result<OracleReport, OracleCheckError> {
    let largest = configuration_count(config.max_points, config.max_targets).max(
        configuration_count(config.poisson_max_points, config.poisson_n_max),
    );
    if largest > ENUMERATION_BUDGET {
        return Err(OracleCheckError::Budget {
            configurations: largest,
        });
    }
    let mut report = OracleReport {
        iid_instances: config.iid_instances,
        poisson_instances: config.poisson_instances,
        cphd_tolerance: config.cphd_tolerance,
        phd_tolerance: config.phd_tolerance,
        ..OracleReport::default()
    };
    let err = |a: f64, b: f64| relative_error(a, b, config.floor);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shape = InstanceShape {
        max_points: config.max_points,
        max_measurements: config.max_measurements,
        max_targets: config.max_targets,
    };
    for _ in 0..config.iid_instances {
        let cmp = OracleInstance::random_iid(shape, &mut rng)
            .compare()
            .map_err(OracleCheckError::Filter)?;
        for r in &cmp.regions {
            report.cphd_mean = report.cphd_mean.max(err(r.cphd.0, r.oracle.0));
            report.cphd_var = report.cphd_var.max(err(r.cphd.1, r.oracle.1));
            report.regions_compared += 1;
        }
        for (a, b) in cmp.cphd_cardinality.iter().zip(&cmp.oracle_cardinality) {
            report.cphd_cardinality = report.cphd_cardinality.max((a - b).abs());
        }
    }

    let shape = InstanceShape {
        max_points: config.poisson_max_points,
        max_measurements: config.max_measurements,
        max_targets: config.poisson_n_max,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    for _ in 0..config.poisson_instances {
        let cmp = OracleInstance::random_poisson(shape, config.poisson_n_max, &mut rng)
            .compare()
            .map_err(OracleCheckError::Filter)?;
        for r in &cmp.regions {
            report.phd_mean = report.phd_mean.max(err(r.phd.0, r.oracle.0));
            report.phd_var = report.phd_var.max(err(r.phd.1, r.oracle.1));
            report.reduction_mean = report.reduction_mean.max(err(r.cphd.0, r.phd.0));
            report.reduction_var = report.reduction_var.max(err(r.cphd.1, r.phd.1));
            report.regions_compared += 1;
        }
    }

    let cmp = degenerate_instance()
        .compare()
        .map_err(OracleCheckError::Filter)?;
    for r in &cmp.regions {
        let gaps = [
            r.cphd.0 - r.oracle.0,
            r.cphd.1 - r.oracle.1,
            r.oracle.0,
            r.oracle.1,
        ];
        report.degenerate = gaps
            .iter()
            .fold(report.degenerate, |acc, g| acc.max(g.abs()));
    }
    Ok(report)
}
