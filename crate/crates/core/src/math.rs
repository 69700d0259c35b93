//! Small numerical helpers shared across modules.

use std::f64::consts::PI;
use std::sync::OnceLock;

const LN_FACTORIAL_TABLE: usize = 4097;

#[inline]
fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(LN_FACTORIAL_TABLE);
        let mut acc = KahanSum::default();
        table.push(0.0);
        for k in 1..LN_FACTORIAL_TABLE {
            acc.add((k as f64).ln());
            table.push(acc.value());
        }
        table
    })
}

/// `ln(n!)`, tabulated up to 4096 and summed directly beyond.
#[inline]
pub fn ln_factorial(n: usize) -> f64 {
    let table = ln_factorial_table();
    if n < table.len() {
        return table[n];
    }
    let mut acc = KahanSum::default();
    acc.add(table[table.len() - 1]);
    for k in table.len()..=n {
        acc.add((k as f64).ln());
    }
    acc.value()
}

/// `ln(n! / (n - k)!)`; `-inf` when `k > n`.
#[inline]
pub fn ln_falling_factorial(n: usize, k: usize) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        ln_factorial(n) - ln_factorial(n - k)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<KahanSum>().value()
}

/// `ln(sum(exp(x)))` over the finite entries; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let acc: KahanSum = values.iter().map(|v| (v - max).exp()).collect();
    max + acc.value().ln()
}

/// Wraps an angle into the principal interval (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// `x^k` with the convention `0^0 = 1`, in log space.
#[inline]
pub(crate) fn ln_pow(ln_base: f64, exponent: usize) -> f64 {
    if exponent == 0 {
        0.0
    } else {
        exponent as f64 * ln_base
    }
}
