//! Monte-Carlo filter runs, aggregation across seeds, the detection
//! probability sweep and the resolution experiment.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use regvar::simulation::{generate_measurement_sequence, generate_truth, Scenario, TruthStep};
use regvar::tracker::{FilterConfig, FilterKind, SmcFilter, StepReport};
use regvar::{count_in_region, Region};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig, RegionSpec, ResolveConfig, SensorGrade};

/// A filter failure inside one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub seed: u64,
    pub filter: FilterKind,
    pub step: usize,
    pub source: regvar::Error,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} run with seed {} failed at step {}: {}",
            self.filter.name(),
            self.seed,
            self.step,
            self.source
        )
    }
}

impl std::error::Error for RunError {}

#[derive(Debug)]
pub enum ExperimentError {
    Config(ConfigError),
    Run(RunError),
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentError::Config(e) => e.fmt(f),
            ExperimentError::Run(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for ExperimentError {}

impl From<ConfigError> for ExperimentError {
    fn from(e: ConfigError) -> Self {
        ExperimentError::Config(e)
    }
}

impl From<RunError> for ExperimentError {
    fn from(e: RunError) -> Self {
        ExperimentError::Run(e)
    }
}

/// One output row: a region at one step of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub run: usize,
    pub seed: u64,
    pub t: f64,
    pub filter: String,
    pub region: String,
    pub pd: f64,
    pub mean: f64,
    pub var: f64,
    pub true_count: usize,
}

/// Monte-Carlo average of one (filter, pd, step, region) series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRecord {
    pub t: f64,
    pub filter: String,
    pub region: String,
    pub pd: f64,
    pub mean: f64,
    pub var: f64,
    pub true_count: f64,
    pub n_runs: usize,
}

/// Structural checks collected while running.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RunChecks {
    /// Largest gap between the CPHD cardinality moments and the whole-space
    /// regional moments.
    pub max_cardinality_gap: f64,
    /// PHD rows with variance above mean.
    pub phd_bound_violations: usize,
    /// Rows with negative variance.
    pub negative_variances: usize,
    pub cphd_updates: usize,
}

impl RunChecks {
    fn observe(&mut self, kind: FilterKind, report: &StepReport) {
        for s in &report.stats {
            if s.variance < 0.0 {
                self.negative_variances += 1;
            }
            if kind == FilterKind::Phd && s.variance > s.mean {
                self.phd_bound_violations += 1;
            }
        }
        if let Some(card) = &report.cardinality {
            let gap = (card.mean() - report.global.0)
                .abs()
                .max((card.variance() - report.global.1).abs());
            self.max_cardinality_gap = self.max_cardinality_gap.max(gap);
            self.cphd_updates += 1;
        }
    }

    fn merge(&mut self, other: &RunChecks) {
        self.max_cardinality_gap = self.max_cardinality_gap.max(other.max_cardinality_gap);
        self.phd_bound_violations += other.phd_bound_violations;
        self.negative_variances += other.negative_variances;
        self.cphd_updates += other.cphd_updates;
    }
}

/// Simulates run `seed` and drives one filter through its first `steps`
/// steps, calling `observe` after every update with the regions evaluated.
pub fn run_single(
    scenario: &Scenario,
    filter: FilterConfig,
    clutter_n_max: usize,
    seed: u64,
    steps: usize,
    mut regions_at: impl FnMut(usize, &TruthStep) -> Vec<Region>,
    mut observe: impl FnMut(usize, &TruthStep, &[Region], &StepReport),
) -> Result<(), RunError> {
    let fail = |step, source| RunError {
        seed,
        filter: filter.kind,
        step,
        source,
    };
    let model = scenario
        .sensor_model(clutter_n_max)
        .map_err(|e| fail(0, e))?;
    let truth = generate_truth(scenario, seed);
    let measurements = generate_measurement_sequence(&truth, scenario, seed);
    let mut tracker = SmcFilter::new(filter, model, seed).map_err(|e| fail(0, e))?;
    for (step, (z, truth_step)) in measurements.iter().zip(&truth).take(steps).enumerate() {
        let regions = regions_at(step, truth_step);
        let report = tracker.step(z, &regions).map_err(|e| fail(step, e))?;
        observe(step, truth_step, &regions, &report);
    }
    Ok(())
}

/// Runs `jobs` on up to `threads` workers; results come back in job order.
pub fn run_parallel<J: Sync, T: Send, E: Send>(
    jobs: &[J],
    threads: usize,
    work: impl Fn(&J) -> Result<T, E> + Sync,
) -> Result<Vec<T>, E> {
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(work).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, E>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let result = work(&jobs[i]);
                slots.lock().expect("worker panicked")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, Copy)]
struct Job {
    kind: FilterKind,
    pd: f64,
    run: usize,
    seed: u64,
}

/// Per-run rows, their averages and the structural checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub records: Vec<Record>,
    pub aggregates: Vec<AggregateRecord>,
    pub checks: RunChecks,
}

/// Every (filter, pd, seed) combination of `config`, rows ordered by
/// filter, pd, run, step and region.
pub fn run_filter_experiment(
    config: &ExperimentConfig,
    threads: usize,
) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let base = config.scenario()?;
    let clutter_n_max = config.clutter_n_max(&base);
    let seeds = config.seeds.expand();
    let mut jobs = Vec::new();
    for kind in config.filter.kinds() {
        for &pd in &config.pd {
            for (run, &seed) in seeds.iter().enumerate() {
                jobs.push(Job {
                    kind,
                    pd,
                    run,
                    seed,
                });
            }
        }
    }
    let results = run_parallel(&jobs, threads, |job| {
        let scenario = Scenario {
            detection_probability: job.pd,
            ..base.clone()
        };
        let mut records = Vec::new();
        let mut checks = RunChecks::default();
        run_single(
            &scenario,
            config.filter_config(job.kind),
            clutter_n_max,
            job.seed,
            scenario.step_count(),
            |_, truth| {
                config
                    .regions
                    .iter()
                    .flat_map(|spec| spec.resolve(&scenario, truth))
                    .collect()
            },
            |_, truth, regions, report| {
                checks.observe(job.kind, report);
                for (region, stats) in regions.iter().zip(&report.stats) {
                    records.push(Record {
                        run: job.run,
                        seed: job.seed,
                        t: truth.time,
                        filter: job.kind.name().to_string(),
                        region: stats.label.clone(),
                        pd: job.pd,
                        mean: stats.mean,
                        var: stats.variance,
                        true_count: count_in_region(&truth.config, region),
                    });
                }
            },
        )?;
        Ok::<_, RunError>((records, checks))
    })?;
    let mut records = Vec::new();
    let mut checks = RunChecks::default();
    for (r, c) in results {
        records.extend(r);
        checks.merge(&c);
    }
    let aggregates = aggregate(&records);
    Ok(ExperimentOutput {
        records,
        aggregates,
        checks,
    })
}

/// Averages rows over runs, keeping the order in which series first appear.
pub fn aggregate(records: &[Record]) -> Vec<AggregateRecord> {
    let mut order: Vec<(String, u64, u64, String)> = Vec::new();
    let mut sums: BTreeMap<(String, u64, u64, String), AggregateRecord> = BTreeMap::new();
    for r in records {
        let key = (
            r.filter.clone(),
            r.pd.to_bits(),
            r.t.to_bits(),
            r.region.clone(),
        );
        let entry = sums.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            AggregateRecord {
                t: r.t,
                filter: r.filter.clone(),
                region: r.region.clone(),
                pd: r.pd,
                mean: 0.0,
                var: 0.0,
                true_count: 0.0,
                n_runs: 0,
            }
        });
        entry.mean += r.mean;
        entry.var += r.var;
        entry.true_count += r.true_count as f64;
        entry.n_runs += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let mut a = sums.remove(&key).expect("key recorded");
            let n = a.n_runs as f64;
            a.mean /= n;
            a.var /= n;
            a.true_count /= n;
            a
        })
        .collect()
}

/// Time-averaged behavior of one (filter, pd) series in one region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub filter: String,
    pub pd: f64,
    pub region: String,
    pub time_avg_var: f64,
    pub time_avg_mean: f64,
    /// Share of steady-state steps whose averaged mean is within one
    /// target of the true count.
    pub steady_within_one: f64,
    pub steady_steps: usize,
    pub n_runs: usize,
}

/// Steps whose true count has not changed over the preceding `window` steps.
pub fn steady_state_steps(true_counts: &[usize], window: usize) -> Vec<usize> {
    (window..true_counts.len())
        .filter(|&k| {
            true_counts[k - window..=k]
                .iter()
                .all(|&c| c == true_counts[k])
        })
        .collect()
}

pub const STEADY_STATE_WINDOW: usize = 10;

/// Summaries of the series of `region` in `aggregates`.
pub fn summarize(aggregates: &[AggregateRecord], region: &str) -> Vec<SweepSummary> {
    let mut series: Vec<((String, u64), Vec<&AggregateRecord>)> = Vec::new();
    for a in aggregates.iter().filter(|a| a.region == region) {
        let key = (a.filter.clone(), a.pd.to_bits());
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push(a),
            None => series.push((key, vec![a])),
        }
    }
    series
        .into_iter()
        .map(|((filter, pd), rows)| {
            let n = rows.len() as f64;
            let truth: Vec<usize> = rows.iter().map(|a| a.true_count.round() as usize).collect();
            let steady = steady_state_steps(&truth, STEADY_STATE_WINDOW);
            let within = steady
                .iter()
                .filter(|&&k| (rows[k].mean - rows[k].true_count).abs() <= 1.0)
                .count();
            SweepSummary {
                filter,
                pd: f64::from_bits(pd),
                region: region.to_string(),
                time_avg_var: rows.iter().map(|a| a.var).sum::<f64>() / n,
                time_avg_mean: rows.iter().map(|a| a.mean).sum::<f64>() / n,
                steady_within_one: if steady.is_empty() {
                    0.0
                } else {
                    within as f64 / steady.len() as f64
                },
                steady_steps: steady.len(),
                n_runs: rows[0].n_runs,
            }
        })
        .collect()
}

/// Whether, for every filter, time-averaged variance strictly increases as
/// the detection probability decreases.
pub fn variance_ordered_by_pd(summaries: &[SweepSummary]) -> bool {
    let mut filters: Vec<&str> = summaries.iter().map(|s| s.filter.as_str()).collect();
    filters.dedup();
    filters.iter().all(|f| {
        let mut rows: Vec<&SweepSummary> = summaries.iter().filter(|s| s.filter == *f).collect();
        rows.sort_by(|a, b| b.pd.total_cmp(&a.pd));
        rows.windows(2)
            .all(|w| w[1].time_avg_var > w[0].time_avg_var)
    })
}

// ---------------------------------------------------------------------------
// Resolution experiment
// ---------------------------------------------------------------------------

/// One point of a variance-versus-radius curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvePoint {
    pub seed: u64,
    pub filter: String,
    pub sensor: String,
    pub t: f64,
    pub radius: f64,
    pub mean: f64,
    pub var: f64,
    pub true_count: usize,
}

/// Verdict for one curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolveVerdict {
    pub seed: u64,
    pub filter: String,
    pub sensor: String,
    pub t: f64,
    pub resolved: bool,
    /// Radius of the deepest qualifying minimum.
    pub radius: Option<f64>,
}

/// Index of the deepest local minimum of `var` whose mean lies in `window`
/// and that both sides of the curve exceed by at least `prominence`.
pub fn resolving_minimum(
    means: &[f64],
    vars: &[f64],
    window: [f64; 2],
    prominence: f64,
) -> Option<usize> {
    let n = vars.len();
    let mut best: Option<(usize, f64)> = None;
    for i in 1..n.saturating_sub(1) {
        if !(means[i] >= window[0] && means[i] <= window[1]) {
            continue;
        }
        let left = vars[..i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let right = vars[i + 1..]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let depth = (left - vars[i]).min(right - vars[i]);
        if depth >= prominence && best.is_none_or(|(_, d)| depth > d) {
            best = Some((i, depth));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolveOutput {
    pub points: Vec<ResolvePoint>,
    pub verdicts: Vec<ResolveVerdict>,
}

/// Concentric discs around the configured track at the configured times,
/// for every sensor grade, filter and seed.
pub fn run_resolve_experiment(
    config: &ExperimentConfig,
    threads: usize,
) -> Result<ResolveOutput, ExperimentError> {
    config.validate()?;
    let base = config.scenario()?;
    let settings: &ResolveConfig = &config.resolve;
    let radii = settings.radii();
    let seeds = config.seeds.expand();
    let pd = config.pd[0];
    let mut jobs: Vec<(SensorGrade, FilterKind, u64)> = Vec::new();
    for &grade in &settings.sensors {
        for kind in config.filter.kinds() {
            for &seed in &seeds {
                jobs.push((grade, kind, seed));
            }
        }
    }
    let results = run_parallel(&jobs, threads, |&(grade, kind, seed)| {
        let scenario = Scenario {
            noise: grade.noise(),
            detection_probability: pd,
            ..base.clone()
        };
        let steps_at: Vec<usize> = settings
            .times
            .iter()
            .map(|t| (t / scenario.dt).round() as usize)
            .collect();
        let last = steps_at.iter().copied().max().unwrap_or(0);
        let mut points = Vec::new();
        run_single(
            &scenario,
            config.filter_config(kind),
            config.clutter_n_max(&scenario),
            seed,
            last + 1,
            |step, truth| {
                if !steps_at.contains(&step) {
                    return Vec::new();
                }
                RegionSpec::DiscAroundTrack {
                    track: settings.track,
                    radii: radii.clone(),
                }
                .resolve(&scenario, truth)
            },
            |_, truth, regions, report| {
                for ((region, stats), radius) in regions.iter().zip(&report.stats).zip(&radii) {
                    points.push(ResolvePoint {
                        seed,
                        filter: kind.name().to_string(),
                        sensor: grade.name().to_string(),
                        t: truth.time,
                        radius: *radius,
                        mean: stats.mean,
                        var: stats.variance,
                        true_count: count_in_region(&truth.config, region),
                    });
                }
            },
        )?;
        Ok::<_, RunError>(points)
    })?;
    let points: Vec<ResolvePoint> = results.into_iter().flatten().collect();
    let verdicts = points
        .chunks(radii.len())
        .map(|curve| {
            let means: Vec<f64> = curve.iter().map(|p| p.mean).collect();
            let vars: Vec<f64> = curve.iter().map(|p| p.var).collect();
            let found =
                resolving_minimum(&means, &vars, settings.mean_window, settings.min_prominence);
            ResolveVerdict {
                seed: curve[0].seed,
                filter: curve[0].filter.clone(),
                sensor: curve[0].sensor.clone(),
                t: curve[0].t,
                resolved: found.is_some(),
                radius: found.map(|i| curve[i].radius),
            }
        })
        .collect();
    Ok(ResolveOutput { points, verdicts })
}

/// Majority verdict per (filter, sensor, time), in first-appearance order.
pub fn majority(verdicts: &[ResolveVerdict]) -> Vec<(String, String, f64, usize, usize)> {
    let mut out: Vec<(String, String, f64, usize, usize)> = Vec::new();
    for v in verdicts {
        let hit = usize::from(v.resolved);
        match out
            .iter_mut()
            .find(|(f, s, t, _, _)| *f == v.filter && *s == v.sensor && *t == v.t)
        {
            Some(entry) => {
                entry.3 += hit;
                entry.4 += 1;
            }
            None => out.push((v.filter.clone(), v.sensor.clone(), v.t, hit, 1)),
        }
    }
    out
}
