//! Log-domain arithmetic helpers.

/// `ln(exp(a) + exp(b))` with `-inf` treated as log zero.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Max-shifted `ln(sum(exp(x)))`. Empty input yields `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log weights into probabilities using a max shift.
pub fn normalize_log_weights(values: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(values);
    if total == f64::NEG_INFINITY {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - total).exp()).collect()
}

/// Natural log that maps zero to `-inf` and is exact for ones.
pub fn ln_or_neg_inf(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}
