//! Small statistics helpers shared by the estimators.

use serde::{Deserialize, Serialize};
use crate::rng::{PhiloxStream, DOMAIN_BOOTSTRAP};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); zero for fewer than two points.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Median; the average of the two middle values for even length.
pub fn median_u32(values: &mut [u32]) -> f64 {
    assert!(!values.is_empty());
    let n = values.len();
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable(mid);
    if n % 2 == 1 {
        upper as f64
    } else {
        let lower = *values[..mid].iter().max().unwrap();
        (lower as f64 + upper as f64) / 2.0
    }
}

pub fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Percentile-method confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Bootstrap over replica indices `0..n`. `stat` receives the resampled
/// index list and returns the statistic; the 95% percentile interval is returned.
pub fn bootstrap<F>(n: usize, seed: u64, resamples: usize, mut stat: F) -> Interval
where
    F: FnMut(&[usize]) -> f64,
{
    let mut rng = PhiloxStream::for_domain(seed, DOMAIN_BOOTSTRAP, n as u64);
    let mut idx = vec![0usize; n];
    let mut values: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in idx.iter_mut() {
                *slot = rng.below(n as u64) as usize;
            }
            stat(&idx)
        })
        .filter(|v| v.is_finite())
        .collect();
    if values.is_empty() {
        return Interval { lo: f64::NAN, hi: f64::NAN };
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Interval {
        lo: percentile_sorted(&values, 0.025),
        hi: percentile_sorted(&values, 0.975),
    }
}

/// Bootstrap interval for the mean of `xs`.
pub fn bootstrap_mean(xs: &[f64], seed: u64) -> Interval {
    bootstrap(xs.len(), seed, BOOTSTRAP_RESAMPLES, |idx| {
        idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64
    })
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        f64::NAN
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median_u32(&mut [3, 1, 2]), 2.0);
        assert_eq!(median_u32(&mut [4, 1, 3, 2]), 2.5);
        assert_eq!(median_u32(&mut [7]), 7.0);
    }

    #[test]
    fn slope_of_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 - 1.0)).collect();
        assert!((ols_slope(&pts) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_monotone() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[10.0, 20.0, 25.0, 100.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_is_seeded_and_brackets_mean() {
        let xs: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let a = bootstrap_mean(&xs, 5);
        let b = bootstrap_mean(&xs, 5);
        assert_eq!(a, b);
        assert!(a.lo < mean(&xs) && mean(&xs) < a.hi);
    }
}
