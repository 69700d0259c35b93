//! Experiment configuration: a JSON document whose fields all have
//! defaults, overridden by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use regvar::sensor::{RangeBearingModel, SensorNoise};
use regvar::simulation::{Scenario, TruthStep};
use regvar::tracker::{FilterConfig, FilterKind};
use regvar::Region;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

impl From<regvar::Error> for ConfigError {
    fn from(e: regvar::Error) -> Self {
        match e {
            regvar::Error::InvalidParameter { name, reason } => ConfigError::new(name, reason),
            other => ConfigError::new("config", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorGrade {
    Superior,
    Inferior,
}

impl SensorGrade {
    pub fn noise(self) -> SensorNoise {
        match self {
            SensorGrade::Superior => SensorNoise::superior(),
            SensorGrade::Inferior => SensorNoise::inferior(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorGrade::Superior => "superior",
            SensorGrade::Inferior => "inferior",
        }
    }
}

impl std::str::FromStr for SensorGrade {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "superior" => Ok(SensorGrade::Superior),
            "inferior" => Ok(SensorGrade::Inferior),
            other => Err(ConfigError::new(
                "sensor",
                format!("expected superior or inferior, got {other}"),
            )),
        }
    }
}

/// One filter or several.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterChoice {
    One(FilterKind),
    Many(Vec<FilterKind>),
}

impl FilterChoice {
    pub fn kinds(&self) -> Vec<FilterKind> {
        match self {
            FilterChoice::One(k) => vec![*k],
            FilterChoice::Many(v) => v.clone(),
        }
    }

    /// `phd`, `cphd` or `both`.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "both" => Ok(FilterChoice::Many(vec![FilterKind::Phd, FilterKind::Cphd])),
            other => other.parse().map(FilterChoice::One).map_err(|_| {
                ConfigError::new("filter", format!("expected phd, cphd or both, got {other}"))
            }),
        }
    }
}

/// Either a number of runs (seeds `0..n`) or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }

    /// `"25"` or `"1,5,9"`.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let err = || {
            ConfigError::new(
                "seeds",
                format!("expected a count or a comma-separated list, got {s}"),
            )
        };
        if s.contains(',') {
            let list = s
                .split(',')
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| err())?;
            Ok(Seeds::List(list))
        } else {
            s.trim().parse().map(Seeds::Count).map_err(|_| err())
        }
    }
}

/// A region, possibly moving with a track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RegionSpec {
    FullFov,
    Disc {
        center: [f64; 2],
        radius: f64,
        #[serde(default)]
        label: Option<String>,
    },
    /// Discs centered on the true position of `track` (zero-based).
    DiscAroundTrack {
        track: usize,
        radii: Vec<f64>,
    },
}

impl RegionSpec {
    /// Concrete regions at one step.
    pub fn resolve(&self, scenario: &Scenario, truth: &TruthStep) -> Vec<Region> {
        match self {
            RegionSpec::FullFov => vec![Region::disc("fov", 0.0, 0.0, scenario.fov_radius)],
            RegionSpec::Disc {
                center,
                radius,
                label,
            } => {
                let label = label
                    .clone()
                    .unwrap_or_else(|| format!("disc({},{},{})", center[0], center[1], radius));
                vec![Region::disc(label, center[0], center[1], *radius)]
            }
            RegionSpec::DiscAroundTrack { track, radii } => radii
                .iter()
                .map(|r| {
                    let label = format!("track{}-r{}", track + 1, r);
                    match truth.state_of(*track) {
                        Some(x) => Region::disc(label, x.x, x.y, *r),
                        None => Region::nowhere().with_label(label),
                    }
                })
                .collect(),
        }
    }
}

/// Concentric discs around a track at a few time instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolveConfig {
    pub times: Vec<f64>,
    pub track: usize,
    pub radius_start: f64,
    pub radius_stop: f64,
    pub radius_step: f64,
    pub sensors: Vec<SensorGrade>,
    /// Window of the mean where a resolving minimum may sit.
    pub mean_window: [f64; 2],
    /// How far both flanking maxima must rise above the minimum.
    pub min_prominence: f64,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        Self {
            times: vec![51.0, 55.0, 59.0],
            track: 0,
            radius_start: 1.0,
            radius_stop: 200.0,
            radius_step: 1.0,
            sensors: vec![SensorGrade::Superior, SensorGrade::Inferior],
            mean_window: [0.8, 1.2],
            min_prominence: 0.1,
        }
    }
}

impl ResolveConfig {
    pub fn radii(&self) -> Vec<f64> {
        let n = ((self.radius_stop - self.radius_start) / self.radius_step).floor() as usize;
        (0..=n)
            .map(|i| self.radius_start + i as f64 * self.radius_step)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inline scenario; the built-in five-target scenario when absent.
    pub scenario: Option<Scenario>,
    /// Scenario file, used when `scenario` is absent.
    pub scenario_path: Option<PathBuf>,
    /// Overrides the sensor noise of the scenario.
    pub sensor: Option<SensorGrade>,
    pub filter: FilterChoice,
    /// Cardinality truncation; overrides `tracker.n_max`.
    pub n_max: Option<usize>,
    /// Particle budget per target; overrides `tracker.particles_per_target`.
    pub particles_per_target: Option<usize>,
    /// Motion, birth and particle-count settings.
    pub tracker: FilterConfig,
    /// Clutter cardinality truncation; derived from the rate when absent.
    pub clutter_n_max: Option<usize>,
    pub seeds: Seeds,
    pub pd: Vec<f64>,
    pub regions: Vec<RegionSpec>,
    pub resolve: ResolveConfig,
    pub output: PathBuf,
    /// Also write the per-run rows as JSON.
    pub json: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            scenario_path: None,
            sensor: None,
            filter: FilterChoice::One(FilterKind::Phd),
            n_max: None,
            particles_per_target: None,
            tracker: FilterConfig::default(),
            clutter_n_max: None,
            seeds: Seeds::Count(1),
            pd: vec![0.95],
            regions: vec![RegionSpec::FullFov],
            resolve: ResolveConfig::default(),
            output: PathBuf::from("regvar_out.csv"),
            json: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::new(json_field(&e), e.to_string()))
    }

    /// The scenario with the sensor preset applied.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let mut scenario = match (&self.scenario, &self.scenario_path) {
            (Some(s), _) => s.clone(),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    ConfigError::new(
                        "scenario_path",
                        format!("cannot read {}: {e}", path.display()),
                    )
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| ConfigError::new("scenario_path", e.to_string()))?
            }
            (None, None) => Scenario::five_targets(),
        };
        if let Some(grade) = self.sensor {
            scenario.noise = grade.noise();
        }
        Ok(scenario)
    }

    /// Tracker settings for one filter kind, with the top-level overrides.
    pub fn filter_config(&self, kind: FilterKind) -> FilterConfig {
        FilterConfig {
            kind,
            n_max: self.n_max.unwrap_or(self.tracker.n_max),
            particles_per_target: self
                .particles_per_target
                .unwrap_or(self.tracker.particles_per_target),
            ..self.tracker
        }
    }

    pub fn clutter_n_max(&self, scenario: &Scenario) -> usize {
        self.clutter_n_max
            .unwrap_or_else(|| RangeBearingModel::default_clutter_n_max(scenario.clutter_rate))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let scenario = self.scenario()?;
        scenario.validate()?;
        self.filter_config(FilterKind::Phd).validate()?;
        if self.seeds.expand().is_empty() {
            return Err(ConfigError::new("seeds", "at least one seed is required"));
        }
        if self.regions.is_empty() {
            return Err(ConfigError::new(
                "regions",
                "at least one region is required",
            ));
        }
        if self.filter.kinds().is_empty() {
            return Err(ConfigError::new(
                "filter",
                "at least one filter is required",
            ));
        }
        if self.pd.is_empty() || self.pd.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(ConfigError::new(
                "pd",
                "values must lie in (0, 1] and the list must not be empty",
            ));
        }
        for spec in &self.regions {
            match spec {
                RegionSpec::FullFov => {}
                RegionSpec::Disc { radius, .. } if !(*radius > 0.0) => {
                    return Err(ConfigError::new("regions", "disc radius must be positive"));
                }
                RegionSpec::DiscAroundTrack { track, radii } => {
                    if *track >= scenario.tracks.len() {
                        return Err(ConfigError::new("regions", format!("no track {track}")));
                    }
                    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
                        return Err(ConfigError::new(
                            "regions",
                            "radii must be positive and non-empty",
                        ));
                    }
                }
                RegionSpec::Disc { .. } => {}
            }
        }
        let r = &self.resolve;
        if r.track >= scenario.tracks.len() {
            return Err(ConfigError::new(
                "resolve.track",
                format!("no track {}", r.track),
            ));
        }
        if !(r.radius_start > 0.0 && r.radius_step > 0.0 && r.radius_stop >= r.radius_start) {
            return Err(ConfigError::new(
                "resolve.radius_start",
                "radii must be positive and increasing",
            ));
        }
        Ok(())
    }
}

fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`')
        .nth(1)
        .map_or_else(|| "config".to_string(), str::to_string)
}

/// Path next to `path` with `suffix` appended to the file stem.
pub fn sibling(path: &Path, suffix: &str, extension: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("regvar_out");
    path.with_file_name(format!("{stem}{suffix}.{extension}"))
}
