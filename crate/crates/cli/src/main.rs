use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regvar::simulation::{generate_measurement_sequence, generate_truth};
use serde::Serialize;

use regvar_cli::bench::{run_benchmark, BenchConfig};
use regvar_cli::config::{
    sibling, ConfigError, ExperimentConfig, FilterChoice, Seeds, SensorGrade,
};
use regvar_cli::experiments::{
    default_threads, majority, run_filter_experiment, run_resolve_experiment, summarize,
    variance_ordered_by_pd, ExperimentError,
};
use regvar_cli::oracle_check::{run_oracle_check, OracleCheckConfig, OracleCheckError};
use regvar_cli::output::{write_csv, write_json};

#[derive(Parser)]
#[command(
    name = "regvar",
    version,
    about = "Regional mean and variance of the target number with PHD and CPHD filters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write ground truth and measurements of the scenario.
    Simulate(CommonArgs),
    /// Run a filter over every seed and write per-region statistics.
    Filter(CommonArgs),
    /// Run both filters at several detection probabilities.
    SweepPd(CommonArgs),
    /// Variance against the radius of discs around a track.
    Resolve(CommonArgs),
    /// Compare the filters with exact enumeration on small instances.
    OracleCheck(OracleArgs),
    /// Time both updates against the number of measurements.
    Bench(BenchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// phd, cphd or both.
    #[arg(long)]
    filter: Option<String>,
    /// Number of runs, or a comma-separated list of seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated detection probabilities.
    #[arg(long, value_delimiter = ',')]
    pd: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// superior or inferior.
    #[arg(long)]
    sensor: Option<String>,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    particles_per_target: Option<usize>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the per-run rows as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Instances with an arbitrary i.i.d. prior.
    #[arg(long, default_value_t = 60)]
    instances: usize,
    /// Instances with Poisson prior and clutter.
    #[arg(long, default_value_t = 25)]
    poisson_instances: usize,
    /// Truncation of the Poisson instances.
    #[arg(long, default_value_t = 80)]
    nmax: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated measurement counts.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    repeats: usize,
    /// Cardinality truncation; should exceed the largest m.
    #[arg(long, default_value_t = 400)]
    nmax: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Breach(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(e) => Failure::Config(e.to_string()),
            ExperimentError::Run(e) => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Filter(args) => filter(&args, false),
        Command::SweepPd(args) => filter(&args, true),
        Command::Resolve(args) => resolve(&args),
        Command::OracleCheck(args) => oracle_check(&args),
        Command::Bench(args) => bench(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Breach(msg)) => {
            eprintln!("tolerance breach: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Loads the configuration file, if any, and applies the flags.
fn load_config(args: &CommonArgs, sweep: bool) -> Result<ExperimentConfig, ConfigError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if sweep => ExperimentConfig {
            filter: FilterChoice::parse("both")?,
            pd: vec![0.95, 0.90, 0.85],
            seeds: Seeds::Count(25),
            ..ExperimentConfig::default()
        },
        None => ExperimentConfig::default(),
    };
    if let Some(f) = &args.filter {
        config.filter = FilterChoice::parse(f)?;
    }
    if let Some(s) = &args.seeds {
        config.seeds = Seeds::parse(s)?;
    }
    if let Some(pd) = &args.pd {
        config.pd = pd.clone();
    }
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    if let Some(s) = &args.sensor {
        config.sensor = Some(s.parse::<SensorGrade>()?);
    }
    if let Some(n) = args.nmax {
        config.n_max = Some(n);
    }
    if let Some(n) = args.particles_per_target {
        config.particles_per_target = Some(n);
    }
    config.json |= args.json;
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct TruthRow {
    seed: u64,
    t: f64,
    track: usize,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

#[derive(Serialize)]
struct MeasurementRow {
    seed: u64,
    t: f64,
    range: f64,
    bearing: f64,
}

fn simulate(args: &CommonArgs) -> Result<(), Failure> {
    let config = load_config(args, false)?;
    let base = config.scenario()?;
    let mut truth_rows = Vec::new();
    let mut meas_rows = Vec::new();
    for &pd in &config.pd {
        let scenario = regvar::simulation::Scenario {
            detection_probability: pd,
            ..base.clone()
        };
        for seed in config.seeds.expand() {
            let truth = generate_truth(&scenario, seed);
            let zs = generate_measurement_sequence(&truth, &scenario, seed);
            for (step, z) in truth.iter().zip(&zs) {
                for (x, &track) in step.config.states.iter().zip(&step.track_ids) {
                    truth_rows.push(TruthRow {
                        seed,
                        t: step.time,
                        track: track + 1,
                        x: x.x,
                        y: x.y,
                        vx: x.vx,
                        vy: x.vy,
                    });
                }
                meas_rows.extend(z.iter().map(|m| MeasurementRow {
                    seed,
                    t: step.time,
                    range: m.range,
                    bearing: m.bearing,
                }));
            }
        }
    }
    let meas_path = sibling(&config.output, "_measurements", "csv");
    write_csv(&config.output, &truth_rows)?;
    write_csv(&meas_path, &meas_rows)?;
    println!(
        "wrote {} truth rows to {} and {} measurements to {}",
        truth_rows.len(),
        config.output.display(),
        meas_rows.len(),
        meas_path.display()
    );
    Ok(())
}

fn filter(args: &CommonArgs, sweep: bool) -> Result<(), Failure> {
    let config = load_config(args, sweep)?;
    let threads = args.threads.unwrap_or_else(default_threads);
    let out = run_filter_experiment(&config, threads)?;
    write_csv(&config.output, &out.records)?;
    let agg_path = sibling(&config.output, "_aggregate", "csv");
    write_csv(&agg_path, &out.aggregates)?;
    if config.json {
        write_json(&sibling(&config.output, "", "json"), &out.records)?;
    }
    println!(
        "wrote {} rows to {} and {} averages to {}",
        out.records.len(),
        config.output.display(),
        out.aggregates.len(),
        agg_path.display()
    );
    let c = out.checks;
    println!(
        "checks: cardinality gap {:.3e} over {} CPHD updates, {} PHD rows with var > mean, {} negative variances",
        c.max_cardinality_gap, c.cphd_updates, c.phd_bound_violations, c.negative_variances
    );
    if sweep {
        let region = out
            .aggregates
            .first()
            .map(|a| a.region.clone())
            .unwrap_or_default();
        let summaries = summarize(&out.aggregates, &region);
        write_csv(&sibling(&config.output, "_summary", "csv"), &summaries)?;
        println!("filter  pd     time-avg var  time-avg mean  steady within 1");
        for s in &summaries {
            println!(
                "{:<7} {:<6} {:<13.4} {:<14.4} {:.1}% of {}",
                s.filter,
                s.pd,
                s.time_avg_var,
                s.time_avg_mean,
                100.0 * s.steady_within_one,
                s.steady_steps
            );
        }
        println!(
            "variance strictly increases as pd decreases: {}",
            variance_ordered_by_pd(&summaries)
        );
    }
    Ok(())
}

fn resolve(args: &CommonArgs) -> Result<(), Failure> {
    let mut config = load_config(args, false)?;
    if args.sensor.is_some() {
        config.resolve.sensors = config.sensor.into_iter().collect();
    }
    let threads = args.threads.unwrap_or_else(default_threads);
    let out = run_resolve_experiment(&config, threads)?;
    write_csv(&config.output, &out.points)?;
    let verdict_path = sibling(&config.output, "_verdicts", "csv");
    write_csv(&verdict_path, &out.verdicts)?;
    if config.json {
        write_json(&sibling(&config.output, "", "json"), &out.points)?;
    }
    println!("filter  sensor    t      resolved");
    for (filter, sensor, t, hits, total) in majority(&out.verdicts) {
        println!("{filter:<7} {sensor:<9} {t:<6} {hits}/{total}");
    }
    Ok(())
}

fn oracle_check(args: &OracleArgs) -> Result<(), Failure> {
    let config = OracleCheckConfig {
        seed: args.seed,
        iid_instances: args.instances,
        poisson_instances: args.poisson_instances,
        poisson_n_max: args.nmax,
        ..OracleCheckConfig::default()
    };
    let report = run_oracle_check(&config).map_err(|e| match e {
        OracleCheckError::Budget { .. } => Failure::Config(e.to_string()),
        OracleCheckError::Filter(_) => Failure::Runtime(e.to_string()),
    })?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    println!(
        "{} i.i.d. and {} Poisson instances, {} region comparisons",
        report.iid_instances, report.poisson_instances, report.regions_compared
    );
    println!(
        "CPHD vs oracle: mean {:.3e}, var {:.3e}, cardinality {:.3e} (tolerance {:.0e})",
        report.cphd_mean, report.cphd_var, report.cphd_cardinality, report.cphd_tolerance
    );
    println!(
        "PHD vs oracle:  mean {:.3e}, var {:.3e} (tolerance {:.0e})",
        report.phd_mean, report.phd_var, report.phd_tolerance
    );
    println!(
        "CPHD vs PHD:    mean {:.3e}, var {:.3e} (tolerance {:.0e})",
        report.reduction_mean, report.reduction_var, report.phd_tolerance
    );
    println!("empty instance deviation: {:.3e}", report.degenerate);
    if report.passes() {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Breach(
            "maximum deviation above tolerance".to_string(),
        ))
    }
}

fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let config = BenchConfig {
        m_values: args.m.clone(),
        repeats: args.repeats,
        n_max: args.nmax,
        ..BenchConfig::default()
    };
    let report = run_benchmark(&config).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("m      PHD (ms)   CPHD (ms)");
    for r in &report.rows {
        println!(
            "{:<6} {:<10.3} {:.3}",
            r.m,
            1e3 * r.phd_seconds,
            1e3 * r.cphd_seconds
        );
    }
    println!(
        "fitted exponents: PHD {:.2}, CPHD {:.2}",
        report.phd_exponent, report.cphd_exponent
    );
    if let Some(out) = &args.out {
        write_out(out, &report)?;
    }
    Ok(())
}

fn write_out(path: &Path, report: &regvar_cli::bench::BenchReport) -> Result<(), Failure> {
    if path.extension().is_some_and(|e| e == "json") {
        write_json(path, report)?;
    } else {
        write_csv(path, &report.rows)?;
    }
    Ok(())
}
