//! Natural-log probabilities with `-inf` as exact zero.

pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(LOG_ZERO, f64::max);
    if m == LOG_ZERO {
        return LOG_ZERO;
    }
    m + values.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// `ln(p)` with `ln(0) = -inf`.
#[inline]
pub fn ln(p: f64) -> f64 {
    if p <= 0.0 {
        LOG_ZERO
    } else {
        p.ln()
    }
}

/// `k * ln(p)`, treating `0 * ln(0)` as 0.
#[inline]
pub fn ln_pow(p: f64, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln(p)
    }
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}
