//! Monte-Carlo summary statistics on `f64` samples.

use statrs::distribution::{ContinuousCDF, Normal};

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Unbiased variance with the large-sample standard error `sqrt((m4 - s^4) / n)`.
pub fn variance_with_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    (var, ((m4 - m2 * m2).max(0.0) / n).sqrt())
}

/// Mean with a batch-means standard error, for autocorrelated series.
pub fn batch_mean_se(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let b = n_batches.max(2).min(xs.len());
    let size = xs.len() / b;
    let means: Vec<f64> = (0..b).map(|k| xs[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let (m, se) = mean_se(&means);
    (m, se)
}

pub fn lag_correlation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = (0..n - lag).map(|i| (xs[i] - mean) * (xs[i + lag] - mean)).sum();
    cov / var
}

/// Sample skewness and excess kurtosis with their normal-theory standard errors.
pub fn skew_kurtosis(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    (skew, (6.0 / n).sqrt(), kurt, (24.0 / n).sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    y.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Wilson score interval for `hits` successes out of `n` at two-sided `confidence`.
pub fn wilson_interval(hits: u64, n: u64, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = normal_quantile(0.5 + confidence / 2.0);
    let nf = n as f64;
    let p = hits as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Ordinary least squares `y = intercept + slope x`; returns `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    weighted_linear_fit(x, y, &vec![1.0; x.len()])
}

/// Weighted least squares `y = intercept + slope x`; returns `(slope, intercept)`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, b), c)| c * (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().zip(w).map(|(a, c)| c * (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Exponent `p` of `mean ~ C eps^p` by weighted least squares in log-log space,
/// with weights `(mean / se)^2` from the delta method.
pub fn loglog_slope(eps: &[f64], mean: &[f64], se: &[f64]) -> f64 {
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = mean.iter().map(|m| m.ln()).collect();
    let w: Vec<f64> = mean
        .iter()
        .zip(se)
        .map(|(m, s)| if *s > 0.0 && s.is_finite() { (m / s).powi(2) } else { 1.0 })
        .collect();
    weighted_linear_fit(&x, &y, &w).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngStream;

    #[test]
    fn ks_of_identical_samples_is_zero() {
        let a = [0.1, 0.5, 0.2, 0.9];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert!((ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slope_recovers_power_law() {
        let eps = [0.1, 0.05, 0.02, 0.01];
        let mean: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.sqrt()).collect();
        let se = vec![0.01; 4];
        assert!((loglog_slope(&eps, &mean, &se) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_point_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 0.95);
        assert!(lo < 0.3 && hi > 0.3);
        let (lo0, hi0) = wilson_interval(0, 50, 0.95);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.1);
    }

    #[test]
    fn wilson_coverage_is_nominal_on_known_bernoulli() {
        let p = 0.3;
        let trials = 2000;
        let n = 200;
        let mut rng = RngStream::new(99, 0);
        let covered = (0..trials)
            .filter(|_| {
                let hits = (0..n).filter(|_| rng.uniform() < p).count() as u64;
                let (lo, hi) = wilson_interval(hits, n as u64, 0.95);
                lo <= p && p <= hi
            })
            .count() as f64
            / trials as f64;
        let se = (0.95_f64 * 0.05 / trials as f64).sqrt();
        assert!((covered - 0.95).abs() < 4.0 * se, "coverage {covered}");
    }
}
