//! Elementary symmetric functions and the `Upsilon^u` sums of the CPHD
//! corrector terms.
//!
//! `Upsilon^u[mu, Z](n)` is
//!
//! ```text
//! sum_{d=0}^{min(|Z|, n)} n! (|Z|-d)! / (n-(d+u))! * rho_c(|Z|-d)
//!                         * mu_missed^(n-(d+u)) / mu_total^n * e_d(Z)
//! ```
//!
//! where `e_d(Z)` is the elementary symmetric function of order `d` of the
//! per-measurement ratios `mu^z(X) / c(z)`, and terms with `n < d + u`
//! vanish. These values overflow `f64` quickly, so the filter never handles
//! them directly: [`UpsilonKernel`] evaluates them from log-space coefficient
//! tables sharing one scale per table, and only ratios of inner products are
//! turned back into plain numbers.

use crate::error::{Error, Result};
use crate::math::{
    compensated_sum, ln_factorial, ln_falling_factorial, ln_pow, log_sum_exp, KahanSum,
};
use crate::types::CardinalityDistribution;

// ---------------------------------------------------------------------------
// Elementary symmetric functions
// ---------------------------------------------------------------------------

/// Table `e_0, ..., e_m` of the elementary symmetric functions of `m` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EsfTable {
    values: Vec<f64>,
}

impl EsfTable {
    /// Table of the empty set, `[1]`.
    pub fn empty() -> Self {
        Self { values: vec![1.0] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `e_d`, zero beyond the order of the table.
    pub fn get(&self, d: usize) -> f64 {
        self.values.get(d).copied().unwrap_or(0.0)
    }

    /// Number of values the table was built from.
    pub fn set_size(&self) -> usize {
        self.values.len() - 1
    }

    /// Adds one value: `e'_d = e_d + xi e_{d-1}`.
    pub fn push(&mut self, xi: f64) {
        self.values.push(0.0);
        for d in (1..self.values.len()).rev() {
            self.values[d] += xi * self.values[d - 1];
        }
    }

    /// Removes one value previously pushed.
    ///
    /// Composite deflation: the forward recursion `f_d = e_d - xi f_{d-1}`
    /// is used for the low orders, where `e_d` is not dominated by the `xi`
    /// term, and the backward recursion `f_{d-1} = (e_d - f_d) / xi` for the
    /// high orders where it is. Each branch then subtracts a smaller
    /// quantity from a larger one, so rounding errors do not compound.
    pub fn without(&self, xi: f64) -> EsfTable {
        let m = self.set_size();
        assert!(m > 0, "cannot remove a value from the empty set");
        let e = &self.values;
        let mut f = vec![0.0; m];
        // first order at which the removed value dominates
        let split = if xi > 0.0 {
            (1..=m).find(|&d| xi * e[d - 1] > e[d]).unwrap_or(m)
        } else {
            m
        };
        f[0] = 1.0;
        for d in 1..split.min(m) {
            f[d] = (e[d] - xi * f[d - 1]).max(0.0);
        }
        if split < m {
            f[m - 1] = e[m] / xi;
            for d in (split + 1..m).rev() {
                f[d - 1] = ((e[d] - f[d]) / xi).max(0.0);
            }
        }
        EsfTable { values: f }
    }
}

/// Elementary symmetric functions of all orders, by the Vieta recursion.
pub fn esf_all(xi: &[f64]) -> EsfTable {
    let mut table = EsfTable {
        values: Vec::with_capacity(xi.len() + 1),
    };
    table.values.push(1.0);
    for &v in xi {
        table.push(v);
    }
    table
}

// ---------------------------------------------------------------------------
// Upsilon functions
// ---------------------------------------------------------------------------

/// `Upsilon^u(0), ..., Upsilon^u(n_max)`, possibly up to a common positive
/// factor (see [`UpsilonVector::is_scaled`]).
#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonVector {
    order: usize,
    values: Vec<f64>,
    scaled: bool,
}

impl UpsilonVector {
    pub fn new(order: usize, values: Vec<f64>) -> Self {
        Self {
            order,
            values,
            scaled: false,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when the values carry an undisclosed common factor; only
    /// normalized uses (ratios, posterior cardinality) are meaningful then.
    pub fn is_scaled(&self) -> bool {
        self.scaled
    }
}

fn validate_masses(mass_missed: f64, mass_total: f64) -> Result<()> {
    if !mass_total.is_finite() || mass_total < 0.0 {
        return Err(Error::param("mass_total", "must be finite and >= 0"));
    }
    if mass_total == 0.0 {
        return Err(Error::EmptyIntensity);
    }
    if !mass_missed.is_finite() || mass_missed < 0.0 {
        return Err(Error::param("mass_missed", "must be finite and >= 0"));
    }
    Ok(())
}

fn validate_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::param("ratios", "must be finite and >= 0"));
    }
    Ok(())
}

fn ln_or_neg_inf(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Scaled ESF table: `e_d = exp(d * ln_scale) * values[d]`.
fn scaled_esf(ratios: &[f64]) -> (EsfTable, f64) {
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { max } else { 1.0 };
    let scaled: Vec<f64> = ratios.iter().map(|r| r / scale).collect();
    (esf_all(&scaled), scale.ln())
}

/// `ln(e_d rho_c(|Z| - d) (|Z| - d)!)` for every `d`, with the ESF scale.
fn ln_esf_terms(rho_c: &CardinalityDistribution, esf: &EsfTable, ln_scale: f64) -> Vec<f64> {
    let size = esf.set_size();
    (0..=size)
        .map(|d| {
            let ln_e = ln_or_neg_inf(esf.get(d));
            let ln_rho_c = ln_or_neg_inf(rho_c.pmf(size - d));
            if ln_e == f64::NEG_INFINITY || ln_rho_c == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                ln_e + ln_rho_c + ln_factorial(size - d) + d as f64 * ln_scale
            }
        })
        .collect()
}

/// `ln Upsilon^u(n)` from the terms of [`ln_esf_terms`].
fn ln_upsilon(
    u: usize,
    n: usize,
    ln_missed: f64,
    ln_total: f64,
    esf_terms: &[f64],
    buf: &mut Vec<f64>,
) -> f64 {
    if n < u {
        return f64::NEG_INFINITY;
    }
    let size = esf_terms.len() - 1;
    buf.clear();
    buf.extend((0..=size.min(n - u)).map(|d| {
        let t = esf_terms[d];
        if t == f64::NEG_INFINITY {
            return t;
        }
        t + ln_falling_factorial(n, d + u) + ln_pow(ln_missed, n - (d + u)) - n as f64 * ln_total
    }));
    log_sum_exp(buf)
}

fn check_order(u: usize) -> Result<()> {
    if u > 2 {
        return Err(Error::param(
            "u",
            format!("order must be 0, 1 or 2, got {u}"),
        ));
    }
    Ok(())
}

/// `Upsilon^u[mu, Z](n)` evaluated directly.
///
/// `per_meas_ratios` holds `mu^z(X) / c(z)` for every `z` in `Z`; `rho_c`
/// is evaluated as zero outside its support.
pub fn upsilon(
    u: usize,
    mass_missed: f64,
    mass_total: f64,
    per_meas_ratios: &[f64],
    rho_c: &CardinalityDistribution,
    n: usize,
) -> Result<f64> {
    check_order(u)?;
    validate_masses(mass_missed, mass_total)?;
    validate_ratios(per_meas_ratios)?;
    let (esf, ln_scale) = scaled_esf(per_meas_ratios);
    let terms = ln_esf_terms(rho_c, &esf, ln_scale);
    Ok(ln_upsilon(
        u,
        n,
        ln_or_neg_inf(mass_missed),
        mass_total.ln(),
        &terms,
        &mut Vec::new(),
    )
    .exp())
}

/// `Upsilon^u[mu, Z](n)` for `n = 0..=n_max`, unscaled.
pub fn upsilon_vector(
    u: usize,
    mass_missed: f64,
    mass_total: f64,
    per_meas_ratios: &[f64],
    rho_c: &CardinalityDistribution,
    n_max: usize,
) -> Result<UpsilonVector> {
    check_order(u)?;
    validate_masses(mass_missed, mass_total)?;
    validate_ratios(per_meas_ratios)?;
    let (esf, ln_scale) = scaled_esf(per_meas_ratios);
    let (ln_missed, ln_total) = (ln_or_neg_inf(mass_missed), mass_total.ln());
    let terms = ln_esf_terms(rho_c, &esf, ln_scale);
    let mut buf = Vec::new();
    let values = (0..=n_max)
        .map(|n| ln_upsilon(u, n, ln_missed, ln_total, &terms, &mut buf).exp())
        .collect();
    Ok(UpsilonVector::new(u, values))
}

/// `<Upsilon^u, rho> = sum_n Upsilon^u(n) rho(n)`.
pub fn upsilon_inner(uv: &UpsilonVector, rho: &CardinalityDistribution) -> Result<f64> {
    if uv.values.len() != rho.probabilities().len() {
        return Err(Error::LengthMismatch {
            left: uv.values.len(),
            right: rho.probabilities().len(),
        });
    }
    Ok(compensated_sum(
        uv.values
            .iter()
            .zip(rho.probabilities())
            .map(|(a, b)| a * b),
    ))
}

// ---------------------------------------------------------------------------
// Scaled evaluation for the CPHD correctors
// ---------------------------------------------------------------------------

/// A positive number represented as `value * exp(ln_shift)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledValue {
    pub value: f64,
    pub ln_shift: f64,
}

impl ScaledValue {
    /// `self / other` as a plain number.
    pub fn ratio(self, other: ScaledValue) -> f64 {
        if self.value == 0.0 {
            return 0.0;
        }
        self.value / other.value * (self.ln_shift - other.ln_shift).exp()
    }

    pub fn ln(self) -> f64 {
        self.value.ln() + self.ln_shift
    }
}

/// Coefficients `rho(n) Upsilon^u(n) / e_d` for one order `u` and one
/// subset size, tabulated over `(n, d)` and scaled by `exp(-ln_shift)`.
#[derive(Debug, Clone)]
struct CoefficientTable {
    u: usize,
    size: usize,
    coefficients: Vec<f64>,
    ln_shift: f64,
}

const MAX_LN_COEFFICIENT: f64 = 700.0;

impl CoefficientTable {
    #[allow(clippy::too_many_arguments)]
    fn build(
        u: usize,
        size: usize,
        rho: &CardinalityDistribution,
        ln_missed: f64,
        ln_total: f64,
        rho_c: &CardinalityDistribution,
        ln_scale: f64,
        ln_magnitude: &[f64],
    ) -> Self {
        let n_max = rho.n_max();
        let width = size + 1;
        // w(n, d) = by_n[n] + by_d[d] + by_rest[n - d - u]
        let by_n: Vec<f64> = (0..=n_max)
            .map(|n| ln_or_neg_inf(rho.pmf(n)) + ln_factorial(n) - n as f64 * ln_total)
            .collect();
        let by_d: Vec<f64> = (0..=size)
            .map(|d| {
                let ln_rho_c = ln_or_neg_inf(rho_c.pmf(size - d));
                let magnitude = ln_magnitude.get(d).copied().unwrap_or(f64::NEG_INFINITY);
                if ln_rho_c == f64::NEG_INFINITY || magnitude == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    ln_rho_c + ln_factorial(size - d) + d as f64 * ln_scale
                }
            })
            .collect();
        let by_rest: Vec<f64> = (0..=n_max)
            .map(|k| ln_pow(ln_missed, k) - ln_factorial(k))
            .collect();
        let live =
            |n: usize, d: usize| by_n[n] != f64::NEG_INFINITY && by_d[d] != f64::NEG_INFINITY;
        let mut ln_shift = f64::NEG_INFINITY;
        for n in u..=n_max {
            for d in 0..=size.min(n - u) {
                if live(n, d) {
                    ln_shift =
                        ln_shift.max(by_n[n] + by_d[d] + by_rest[n - d - u] + ln_magnitude[d]);
                }
            }
        }
        if ln_shift == f64::NEG_INFINITY {
            ln_shift = 0.0;
        }
        let mut coefficients = vec![0.0; (n_max + 1) * width];
        for n in u..=n_max {
            for d in 0..=size.min(n - u) {
                if live(n, d) {
                    let w = by_n[n] + by_d[d] + by_rest[n - d - u] - ln_shift;
                    coefficients[n * width + d] = w.min(MAX_LN_COEFFICIENT).exp();
                }
            }
        }
        Self {
            u,
            size,
            coefficients,
            ln_shift,
        }
    }

    /// Scaled `<Upsilon^u, rho>`: a compensated sum over `n` of the scaled
    /// `rho(n) Upsilon^u(n)`.
    fn inner(&self, esf: &EsfTable) -> ScaledValue {
        debug_assert_eq!(esf.set_size(), self.size);
        let width = self.size + 1;
        let e = esf.values();
        let mut acc = KahanSum::default();
        for (n, row) in self
            .coefficients
            .chunks_exact(width)
            .enumerate()
            .skip(self.u)
        {
            let upper = self.size.min(n - self.u);
            acc.add(row[..=upper].iter().zip(e).map(|(c, v)| c * v).sum());
        }
        ScaledValue {
            value: acc.value(),
            ln_shift: self.ln_shift,
        }
    }
}

/// Evaluates `<Upsilon^u[mu, Z'], rho>` for the full measurement set `Z`,
/// for `Z` minus one measurement, and for `Z` minus two measurements, as
/// the CPHD corrector terms require.
///
/// All ESF tables share one input scale (the largest ratio), and each
/// `(u, |Z'|)` combination has its own coefficient table, so the cost per
/// subset is one pass over `n` and `d`.
#[derive(Debug, Clone)]
pub struct UpsilonKernel {
    ln_scale: f64,
    scaled_ratios: Vec<f64>,
    full: EsfTable,
    ln_missed: f64,
    ln_total: f64,
    rho_c: CardinalityDistribution,
    tables: Vec<CoefficientTable>,
}

impl UpsilonKernel {
    pub fn new(
        mass_missed: f64,
        mass_total: f64,
        per_meas_ratios: &[f64],
        rho: &CardinalityDistribution,
        rho_c: &CardinalityDistribution,
    ) -> Result<Self> {
        validate_masses(mass_missed, mass_total)?;
        validate_ratios(per_meas_ratios)?;
        let max = per_meas_ratios.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { max } else { 1.0 };
        let scaled_ratios: Vec<f64> = per_meas_ratios.iter().map(|r| r / scale).collect();
        let full = esf_all(&scaled_ratios);
        let ln_magnitude: Vec<f64> = full.values().iter().map(|&v| ln_or_neg_inf(v)).collect();
        let (ln_missed, ln_total, ln_scale) =
            (ln_or_neg_inf(mass_missed), mass_total.ln(), scale.ln());
        let m = per_meas_ratios.len();
        let mut tables = Vec::new();
        for (u, removed) in [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1), (2, 2)] {
            if removed > m {
                continue;
            }
            tables.push(CoefficientTable::build(
                u,
                m - removed,
                rho,
                ln_missed,
                ln_total,
                rho_c,
                ln_scale,
                &ln_magnitude,
            ));
        }
        Ok(Self {
            ln_scale,
            scaled_ratios,
            full,
            ln_missed,
            ln_total,
            rho_c: rho_c.clone(),
            tables,
        })
    }

    pub fn measurement_count(&self) -> usize {
        self.scaled_ratios.len()
    }

    /// Scaled ESF table of the full measurement set.
    pub fn full_esf(&self) -> &EsfTable {
        &self.full
    }

    /// Scaled ESF table with measurement `k` removed from `esf`.
    pub fn remove(&self, esf: &EsfTable, k: usize) -> EsfTable {
        esf.without(self.scaled_ratios[k])
    }

    fn table(&self, u: usize, size: usize) -> &CoefficientTable {
        self.tables
            .iter()
            .find(|t| t.u == u && t.size == size)
            .unwrap_or_else(|| panic!("no coefficient table for u = {u}, size = {size}"))
    }

    /// Scaled `<Upsilon^u[mu, Z'], rho>` where `esf` is the table of `Z'`.
    pub fn inner(&self, u: usize, esf: &EsfTable) -> ScaledValue {
        self.table(u, esf.set_size()).inner(esf)
    }

    /// `Upsilon^u[mu, Z'](n)` for `n = 0..=n_max`, scaled so that its
    /// largest entry is one.
    pub fn upsilon_vector(&self, u: usize, esf: &EsfTable, n_max: usize) -> UpsilonVector {
        let terms = ln_esf_terms(&self.rho_c, esf, self.ln_scale);
        let mut buf = Vec::new();
        let ln_values: Vec<f64> = (0..=n_max)
            .map(|n| ln_upsilon(u, n, self.ln_missed, self.ln_total, &terms, &mut buf))
            .collect();
        let max = ln_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let values = ln_values
            .iter()
            .map(|&v| {
                if max == f64::NEG_INFINITY {
                    0.0
                } else {
                    (v - max).exp()
                }
            })
            .collect();
        UpsilonVector {
            order: u,
            values,
            scaled: true,
        }
    }
}
