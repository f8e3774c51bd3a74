//! Small descriptive statistics used by the simulation study and tests.

/// Sample Kendall's tau-a over all pairs. Quadratic in the sample size.
pub fn kendall_tau(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    if n < 2 {
        return 0.0;
    }
    let mut s: i64 = 0;
    for i in 0..n {
        let (xi, yi) = pairs[i];
        for &(xj, yj) in &pairs[i + 1..] {
            let p = (xi - xj) * (yi - yj);
            if p > 0.0 {
                s += 1;
            } else if p < 0.0 {
                s -= 1;
            }
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Root mean squared deviation of `xs` from `truth`.
pub fn rmse(xs: &[f64], truth: f64) -> f64 {
    (xs.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Sample variance with denominator `n - 1`.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    let num: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_extremes() {
        let up: Vec<_> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let down: Vec<_> = (0..10).map(|i| (i as f64, -(i as f64))).collect();
        assert_eq!(kendall_tau(&up), 1.0);
        assert_eq!(kendall_tau(&down), -1.0);
    }

    #[test]
    fn rmse_and_mean() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(rmse(&[1.0, 3.0], 2.0), 1.0);
        assert_eq!(variance(&[1.0, 3.0]), 2.0);
    }
}
