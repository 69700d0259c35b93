//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p regvar-cli --test acceptance`. The process exits
//! non-zero when an exactness or Monte-Carlo consistency criterion fails.
//! The resolution and timing-exponent criteria reproduce empirical behavior
//! and are reported without failing the process.

use std::time::Instant;

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regvar::combinatorics::{esf_all, upsilon, UpsilonKernel};
use regvar::oracle::{relative_error, InstanceShape, OracleInstance};
use regvar::tracker::FilterKind;
use regvar::CardinalityDistribution;
use regvar_cli::bench::{run_benchmark, BenchConfig};
use regvar_cli::config::{ExperimentConfig, FilterChoice, Seeds};
use regvar_cli::experiments::{
    majority, run_filter_experiment, run_resolve_experiment, summarize, variance_ordered_by_pd,
    ExperimentOutput, ResolveOutput,
};

// Criteria 1-3
const IID_INSTANCES: usize = 60;
const POISSON_INSTANCES: usize = 50;
const POISSON_N_MAX: usize = 80;
const CPHD_TOL: f64 = 1e-9;
const PHD_TOL: f64 = 1e-6;
/// Denominator floor of relative errors, for references at or near zero.
const REL_FLOOR: f64 = 1e-6;
const ORACLE_TIME_LIMIT: f64 = 60.0;
// Criterion 4
const CARDINALITY_TOL: f64 = 1e-9;
// Criterion 6
const SWEEP_RUNS: u64 = 25;
const SWEEP_PD: [f64; 3] = [0.95, 0.90, 0.85];
const STEADY_MEAN_TOL: f64 = 1.0;
const STEADY_SHARE: f64 = 0.8;
const SWEEP_TIME_LIMIT: f64 = 600.0;
// Criterion 7
const RESOLVE_SEEDS: u64 = 11;
const REPRESENTATIVE_SEED: u64 = 0;
// Criterion 8
const CPHD_EXPONENT: [f64; 2] = [2.5, 3.5];
const PHD_EXPONENT: [f64; 2] = [0.8, 1.3];
const BENCH_TIME_LIMIT: f64 = 300.0;
// Criterion 9
const ESF_DRAWS: usize = 100;
const ESF_MAX_SIZE: usize = 8;
const ESF_TOL: f64 = 1e-12;
const UPSILON_DRAWS: usize = 100;
const UPSILON_TOL: f64 = 1e-10;

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    enforced: bool,
    detail: String,
}

fn report(outcomes: &mut Vec<Outcome>, o: Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    let note = if o.enforced {
        ""
    } else {
        " (reported, not enforced)"
    };
    println!(
        "[{tag}] criterion {:<2} {}: {}{note}",
        o.id, o.title, o.detail
    );
    outcomes.push(o);
}

// ---------------------------------------------------------------------------
// Criteria 1-3: exact enumeration
// ---------------------------------------------------------------------------

fn oracle_criteria(outcomes: &mut Vec<Outcome>) {
    let start = Instant::now();
    let err = |a: f64, b: f64| relative_error(a, b, REL_FLOOR);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut cphd_mean, mut cphd_var, mut card) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_regions = usize::MAX;
    let mut special_regions = true;
    for _ in 0..IID_INSTANCES {
        let instance = OracleInstance::random_iid(InstanceShape::default(), &mut rng);
        let cmp = instance.compare().expect("oracle comparison");
        min_regions = min_regions.min(cmp.regions.len());
        special_regions &= cmp.regions.iter().any(|r| r.label == "all")
            && cmp.regions.iter().any(|r| r.label == "empty");
        for r in &cmp.regions {
            cphd_mean = cphd_mean.max(err(r.cphd.0, r.oracle.0));
            cphd_var = cphd_var.max(err(r.cphd.1, r.oracle.1));
        }
        for (a, b) in cmp.cphd_cardinality.iter().zip(&cmp.oracle_cardinality) {
            card = card.max((a - b).abs());
        }
    }
    let iid_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let shape = InstanceShape {
        max_points: 3,
        max_measurements: 3,
        max_targets: POISSON_N_MAX,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut phd_mean, mut phd_var, mut red_mean, mut red_var) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut poisson_regions = 0;
    for _ in 0..POISSON_INSTANCES {
        let cmp = OracleInstance::random_poisson(shape, POISSON_N_MAX, &mut rng)
            .compare()
            .expect("oracle comparison");
        for r in &cmp.regions {
            phd_mean = phd_mean.max(err(r.phd.0, r.oracle.0));
            phd_var = phd_var.max(err(r.phd.1, r.oracle.1));
            red_mean = red_mean.max(err(r.cphd.0, r.phd.0));
            red_var = red_var.max(err(r.cphd.1, r.phd.1));
            poisson_regions += 1;
        }
    }
    let poisson_seconds = start.elapsed().as_secs_f64();

    report(
        outcomes,
        Outcome {
            id: "1",
            title: "CPHD regional moments equal exact enumeration",
            pass: cphd_mean < CPHD_TOL
                && cphd_var < CPHD_TOL
                && card < CPHD_TOL
                && min_regions >= 3
                && special_regions
                && iid_seconds < ORACLE_TIME_LIMIT,
            enforced: true,
            detail: format!(
                "{IID_INSTANCES} i.i.d. instances, >= {min_regions} regions each incl. whole space and empty set; \
                 max rel err mean {cphd_mean:.2e}, var {cphd_var:.2e}, cardinality abs {card:.2e} \
                 (tol {CPHD_TOL:.0e}, floor {REL_FLOOR:.0e}); {iid_seconds:.1} s (limit {ORACLE_TIME_LIMIT} s)"
            ),
        },
    );
    report(
        outcomes,
        Outcome {
            id: "2",
            title: "PHD regional moments equal exact enumeration for Poisson priors",
            pass: phd_mean < PHD_TOL && phd_var < PHD_TOL,
            enforced: true,
            detail: format!(
                "{POISSON_INSTANCES} instances, {poisson_regions} regions, n_max {POISSON_N_MAX}; \
                 max rel err mean {phd_mean:.2e}, var {phd_var:.2e} (tol {PHD_TOL:.0e}); {poisson_seconds:.1} s"
            ),
        },
    );
    report(
        outcomes,
        Outcome {
            id: "3",
            title: "CPHD reduces to PHD for Poisson prior and clutter",
            pass: red_mean < PHD_TOL && red_var < PHD_TOL,
            enforced: true,
            detail: format!(
                "same instances; max rel err mean {red_mean:.2e}, var {red_var:.2e} (tol {PHD_TOL:.0e})"
            ),
        },
    );
}

// ---------------------------------------------------------------------------
// Criteria 4-6: Monte-Carlo sweep over the detection probability
// ---------------------------------------------------------------------------

fn sweep() -> (ExperimentOutput, f64) {
    let config = ExperimentConfig {
        filter: FilterChoice::Many(vec![FilterKind::Phd, FilterKind::Cphd]),
        seeds: Seeds::Count(SWEEP_RUNS),
        pd: SWEEP_PD.to_vec(),
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let out = run_filter_experiment(&config, 1).expect("sweep runs");
    (out, start.elapsed().as_secs_f64())
}

fn resolve() -> (ResolveOutput, f64) {
    let config = ExperimentConfig {
        filter: FilterChoice::Many(vec![FilterKind::Cphd, FilterKind::Phd]),
        seeds: Seeds::Count(RESOLVE_SEEDS),
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let out = run_resolve_experiment(&config, 1).expect("resolve runs");
    (out, start.elapsed().as_secs_f64())
}

fn monte_carlo_criteria(outcomes: &mut Vec<Outcome>) {
    let (out, seconds) = sweep();
    let (res, res_seconds) = resolve();
    let c = out.checks;

    report(
        outcomes,
        Outcome {
            id: "4",
            title: "CPHD cardinality moments equal whole-space regional moments",
            pass: c.cphd_updates > 0 && c.max_cardinality_gap < CARDINALITY_TOL,
            enforced: true,
            detail: format!(
                "{} CPHD updates over {} runs; max |gap| {:.2e} (tol {CARDINALITY_TOL:.0e})",
                c.cphd_updates,
                SWEEP_RUNS as usize * SWEEP_PD.len(),
                c.max_cardinality_gap
            ),
        },
    );

    let resolve_phd_violations = res
        .points
        .iter()
        .filter(|p| p.filter == "phd" && p.var > p.mean)
        .count();
    let resolve_negative = res.points.iter().filter(|p| p.var < 0.0).count();
    let phd_rows = out.records.iter().filter(|r| r.filter == "phd").count()
        + res.points.iter().filter(|p| p.filter == "phd").count();
    let violations = c.phd_bound_violations + resolve_phd_violations;
    report(
        outcomes,
        Outcome {
            id: "5",
            title: "PHD variance never exceeds the mean",
            pass: violations == 0 && c.negative_variances + resolve_negative == 0,
            enforced: true,
            detail: format!(
                "{phd_rows} PHD rows from the sweep and the resolution runs; {violations} with var > mean, \
                 {} negative variances overall",
                c.negative_variances + resolve_negative
            ),
        },
    );

    let summaries = summarize(&out.aggregates, "fov");
    let ordered = variance_ordered_by_pd(&summaries);
    let tracking: Vec<String> = summaries
        .iter()
        .filter(|s| s.pd == SWEEP_PD[0])
        .map(|s| {
            format!(
                "{} {:.1}% of {}",
                s.filter,
                100.0 * s.steady_within_one,
                s.steady_steps
            )
        })
        .collect();
    let tracks = summaries
        .iter()
        .filter(|s| s.pd == SWEEP_PD[0])
        .all(|s| s.steady_steps > 0 && s.steady_within_one >= STEADY_SHARE);
    let variances: Vec<String> = summaries
        .iter()
        .map(|s| format!("{}@{}={:.3}", s.filter, s.pd, s.time_avg_var))
        .collect();
    report(
        outcomes,
        Outcome {
            id: "6",
            title: "FoV variance grows as detection probability drops; mean tracks truth",
            pass: ordered && tracks && seconds < SWEEP_TIME_LIMIT,
            enforced: true,
            detail: format!(
                "{SWEEP_RUNS} runs per (filter, pd); time-averaged var {}; strictly ordered: {ordered}; \
                 steady-state steps with |mean - truth| <= {STEADY_MEAN_TOL} at pd {}: {} (need {:.0}%); \
                 {seconds:.0} s (limit {SWEEP_TIME_LIMIT} s)",
                variances.join(", "),
                SWEEP_PD[0],
                tracking.join(", "),
                100.0 * STEADY_SHARE
            ),
        },
    );

    // Expected verdict per (sensor, time): resolved only for the superior
    // sensor away from the crossing.
    let expected = |sensor: &str, t: f64| sensor == "superior" && (t == 51.0 || t == 59.0);
    let mut primary_ok = true;
    let mut lines = Vec::new();
    for filter in ["cphd", "phd"] {
        let mut representative_ok = true;
        let mut majority_ok = true;
        let mut cells = Vec::new();
        for (f, sensor, t, hits, total) in majority(&res.verdicts) {
            if f != filter {
                continue;
            }
            let rep = res
                .verdicts
                .iter()
                .find(|v| {
                    v.filter == filter
                        && v.sensor == sensor
                        && v.t == t
                        && v.seed == REPRESENTATIVE_SEED
                })
                .map(|v| v.resolved)
                .unwrap_or(false);
            let want = expected(&sensor, t);
            representative_ok &= rep == want;
            let majority_says = 2 * hits > total;
            majority_ok &= majority_says == want;
            cells.push(format!(
                "{sensor}@{t}: {hits}/{total}{}",
                if rep { "*" } else { "" }
            ));
        }
        if filter == "cphd" {
            primary_ok = representative_ok && majority_ok;
        }
        lines.push(format!(
            "{filter} [{}] representative {}, majority {}",
            cells.join(" "),
            if representative_ok { "ok" } else { "mismatch" },
            if majority_ok { "ok" } else { "mismatch" }
        ));
    }
    report(
        outcomes,
        Outcome {
            id: "7",
            title: "variance-vs-radius minimum resolves the targets only with the superior sensor",
            pass: primary_ok,
            enforced: false,
            detail: format!(
                "resolved seeds / {RESOLVE_SEEDS} (* = seed {REPRESENTATIVE_SEED} resolved); minimum needs mean in [0.8, 1.2] \
                 and both flanking maxima >= 0.1 above it; verdict from CPHD, PHD shown; {}; {res_seconds:.0} s",
                lines.join("; ")
            ),
        },
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: timing exponents
// ---------------------------------------------------------------------------

fn complexity_criterion(outcomes: &mut Vec<Outcome>) {
    let config = BenchConfig::default();
    let start = Instant::now();
    let report_ = run_benchmark(&config).expect("benchmark");
    let seconds = start.elapsed().as_secs_f64();
    let within = |x: f64, r: [f64; 2]| x >= r[0] && x <= r[1];
    let rows: Vec<String> = report_
        .rows
        .iter()
        .map(|r| {
            format!(
                "m={} {:.2}/{:.2} ms",
                r.m,
                1e3 * r.phd_seconds,
                1e3 * r.cphd_seconds
            )
        })
        .collect();
    report(
        outcomes,
        Outcome {
            id: "8",
            title: "update time grows cubically (CPHD) and linearly (PHD) in m",
            pass: within(report_.cphd_exponent, CPHD_EXPONENT)
                && within(report_.phd_exponent, PHD_EXPONENT)
                && seconds < BENCH_TIME_LIMIT,
            enforced: false,
            detail: format!(
                "PHD/CPHD medians {}; n_max {}, {} / {} particles; fitted exponent CPHD {:.3} (need {:?}), \
                 PHD {:.3} (need {:?}); {seconds:.0} s (limit {BENCH_TIME_LIMIT} s)",
                rows.join(", "),
                config.n_max,
                config.phd_particles,
                config.cphd_particles,
                report_.cphd_exponent,
                CPHD_EXPONENT,
                report_.phd_exponent,
                PHD_EXPONENT
            ),
        },
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: combinatorics against exact rational arithmetic
// ---------------------------------------------------------------------------

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

fn factorial(n: usize) -> BigRational {
    BigRational::from_integer((1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k)))
}

fn rel_to_exact(approx: f64, reference: &BigRational) -> f64 {
    if reference.is_zero() {
        return approx.abs();
    }
    ((exact(approx) - reference).abs() / reference.abs())
        .to_f64()
        .expect("representable")
}

/// `e_d` by summing the products of every subset of size `d`.
fn esf_by_subsets(xi: &[BigRational]) -> Vec<BigRational> {
    let m = xi.len();
    let mut out = vec![BigRational::zero(); m + 1];
    for mask in 0u32..(1 << m) {
        let product = (0..m)
            .filter(|i| mask & (1 << i) != 0)
            .fold(BigRational::one(), |acc, i| acc * &xi[i]);
        out[mask.count_ones() as usize] += product;
    }
    out
}

fn pow(x: &BigRational, k: usize) -> BigRational {
    (0..k).fold(BigRational::one(), |acc, _| acc * x)
}

/// `Upsilon^u(n)` term by term in exact arithmetic.
fn upsilon_exact(
    u: usize,
    missed: &BigRational,
    total: &BigRational,
    ratios: &[BigRational],
    rho_c: &[BigRational],
    n: usize,
) -> BigRational {
    let m = ratios.len();
    let e = esf_by_subsets(ratios);
    let mut acc = BigRational::zero();
    if n < u {
        return acc;
    }
    for (d, e_d) in e.iter().enumerate().take(m.min(n - u) + 1) {
        let Some(rc) = rho_c.get(m - d) else { continue };
        acc += factorial(n) / factorial(n - d - u)
            * factorial(m - d)
            * rc
            * pow(missed, n - d - u)
            * e_d;
    }
    acc / pow(total, n)
}

fn random_ratio(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.1) {
        0.0
    } else {
        10f64.powf(rng.random_range(-2.0..2.0))
    }
}

fn combinatorics_criterion(outcomes: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut esf_err = 0.0f64;
    let mut esf_sets = 0;
    for size in 0..=ESF_MAX_SIZE {
        for _ in 0..ESF_DRAWS {
            let xi: Vec<f64> = (0..size).map(|_| random_ratio(&mut rng)).collect();
            let fast = esf_all(&xi);
            let reference = esf_by_subsets(&xi.iter().map(|&x| exact(x)).collect::<Vec<_>>());
            for (a, b) in fast.values().iter().zip(&reference) {
                esf_err = esf_err.max(rel_to_exact(*a, b));
            }
            esf_sets += 1;
        }
    }

    let mut ups_err = 0.0f64;
    let mut ratio_err = 0.0f64;
    let mut values = 0;
    for _ in 0..UPSILON_DRAWS {
        let m = rng.random_range(0..=6);
        let n_max = rng.random_range(1..=12);
        let ratios: Vec<f64> = (0..m).map(|_| random_ratio(&mut rng)).collect();
        let total = rng.random_range(0.5..4.0);
        let missed = if rng.random_bool(0.1) {
            0.0
        } else {
            total * rng.random_range(0.05..1.0)
        };
        let rho_c = CardinalityDistribution::from_weights(
            (0..=m + rng.random_range(0..4))
                .map(|_| rng.random_range(0.05..1.0))
                .collect(),
        )
        .unwrap();
        let rho = CardinalityDistribution::from_weights(
            (0..=n_max).map(|_| rng.random_range(0.05..1.0)).collect(),
        )
        .unwrap();
        let ratios_q: Vec<BigRational> = ratios.iter().map(|&r| exact(r)).collect();
        let rho_c_q: Vec<BigRational> = rho_c.probabilities().iter().map(|&p| exact(p)).collect();
        let (missed_q, total_q) = (exact(missed), exact(total));
        let mut inner_exact = Vec::new();
        for u in 0..=2 {
            let mut inner = BigRational::zero();
            for n in 0..=n_max {
                let reference = upsilon_exact(u, &missed_q, &total_q, &ratios_q, &rho_c_q, n);
                let value = upsilon(u, missed, total, &ratios, &rho_c, n).unwrap();
                ups_err = ups_err.max(rel_to_exact(value, &reference));
                inner += reference * exact(rho.pmf(n));
                values += 1;
            }
            inner_exact.push(inner);
        }
        let kernel = UpsilonKernel::new(missed, total, &ratios, &rho, &rho_c).unwrap();
        let den = kernel.inner(0, kernel.full_esf());
        if !inner_exact[0].is_zero() {
            for u in 1..=2 {
                let reference = &inner_exact[u] / &inner_exact[0];
                ratio_err = ratio_err.max(rel_to_exact(
                    kernel.inner(u, kernel.full_esf()).ratio(den),
                    &reference,
                ));
            }
        }
    }
    report(
        outcomes,
        Outcome {
            id: "9",
            title: "ESF and Upsilon match exact rational arithmetic",
            pass: esf_err < ESF_TOL && ups_err < UPSILON_TOL && ratio_err < UPSILON_TOL,
            enforced: true,
            detail: format!(
                "{esf_sets} ESF sets of size 0..={ESF_MAX_SIZE}: max rel err {esf_err:.2e} (tol {ESF_TOL:.0e}); \
                 {values} Upsilon values: max rel err {ups_err:.2e}, scaled corrector ratios {ratio_err:.2e} \
                 (tol {UPSILON_TOL:.0e})"
            ),
        },
    );
}

fn main() {
    // `cargo test` passes harness flags; only a name filter is honoured.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f)) {
        return;
    }
    let start = Instant::now();
    let mut outcomes = Vec::new();
    combinatorics_criterion(&mut outcomes);
    oracle_criteria(&mut outcomes);
    complexity_criterion(&mut outcomes);
    monte_carlo_criteria(&mut outcomes);
    outcomes.sort_by_key(|o| o.id.parse::<u32>().unwrap_or(0));
    println!("\nsummary ({:.0} s):", start.elapsed().as_secs_f64());
    for o in &outcomes {
        println!(
            "  criterion {:<2} {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| o.enforced && !o.pass)
        .map(|o| o.title)
        .collect();
    if !failed.is_empty() {
        eprintln!("enforced criteria failed: {}", failed.join("; "));
        std::process::exit(1);
    }
}
