//! Small numeric helpers shared by the solvers.

/// Numerically stable log(Σ exp(x_i)) with max subtraction.
///
/// Entries equal to `-inf` contribute nothing; an empty or all `-inf`
/// input yields `-inf`.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// log_sum_exp over values produced lazily, avoiding an allocation per row.
pub(crate) fn log_sum_exp_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for k in 0..n {
        m = m.max(f(k));
    }
    if !m.is_finite() {
        return m;
    }
    let mut s = 0.0;
    for k in 0..n {
        s += (f(k) - m).exp();
    }
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum_in_safe_range() {
        let xs = [0.0f64, 1.0, -2.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn survives_large_magnitudes() {
        let xs = [-1600.0, -1601.0];
        let v = log_sum_exp(&xs);
        assert!((v - (-1600.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-12);
    }

    #[test]
    fn neg_infinity_entries_drop_out() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[0.0, f64::NEG_INFINITY]);
        assert!((v - 0.0).abs() < 1e-15);
    }

    #[test]
    fn lazy_variant_agrees() {
        let xs = [0.3, -0.7, 2.1, -900.0];
        let a = log_sum_exp(&xs);
        let b = log_sum_exp_by(xs.len(), |k| xs[k]);
        assert!((a - b).abs() < 1e-14);
    }
}
