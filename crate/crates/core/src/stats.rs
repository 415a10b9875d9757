//! Small sample statistics used by the estimators.

/// Mean and standard error (sample standard deviation over `sqrt(k)`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Standard error from running sums of `x` and `x^2` over `k` samples.
pub fn se_from_sums(sum: f64, sum_sq: f64, k: usize) -> f64 {
    if k < 2 {
        return 0.0;
    }
    let kf = k as f64;
    let mean = sum / kf;
    let var = ((sum_sq - kf * mean * mean) / (kf - 1.0)).max(0.0);
    (var / kf).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[7.0]), (7.0, 0.0));
        let s: f64 = [1.0, 2.0, 3.0, 4.0].iter().sum();
        let s2: f64 = [1.0f64, 2.0, 3.0, 4.0].iter().map(|x| x * x).sum();
        assert!((se_from_sums(s, s2, 4) - se).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 5.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert!((quantile(&v, 0.9) - 4.6).abs() < 1e-12);
    }
}
